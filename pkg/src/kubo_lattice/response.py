"""Current-current correlators, the Kubo small-frequency limit, Chern numbers.

Conductivities are stored in natural units (e = hbar = 1, so e^2/h = 1/(2 pi));
the units flag only changes presentation, which makes unit round-trips exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bloch import BlochHamiltonian, spectral_gap
from .lattice import BZMesh, bz_mesh, build_honeycomb

UNITS_NATURAL = "natural"
UNITS_E2_OVER_H = "e2h"
E2_OVER_H_NATURAL = 1.0 / (2.0 * math.pi)

DEFAULT_OMEGAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)

_DEGENERACY_TOL = 1e-12
_CHUNK = 200_000


@dataclass(frozen=True)
class CorrelatorSeries:
    """K_ij sampled on a frequency grid (omega=0 first), with evaluation metadata."""

    omegas: np.ndarray           # (n,) with omegas[0] == 0
    values: np.ndarray           # (n, 2, 2) complex
    beta: float                  # math.inf for the ground state
    mesh_n: int
    model_tag: str
    kind: str = "quadrature"     # mesh kind the series was summed over

    def value_at(self, omega: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        if abs(self.omegas[i] - omega) > 1e-12 * max(1.0, abs(omega)):
            raise ValueError(f"omega {omega} not in series")
        return self.values[i]


@dataclass(frozen=True)
class ConductivityTensor:
    """2x2 conductivity with units presentation flag and fit diagnostics.

    sigma_natural is canonical; `sigma` applies the units factor, so
    NATURAL -> E2_OVER_H -> NATURAL round-trips bit-exactly.
    """

    sigma_natural: np.ndarray      # (2, 2)
    uncertainty_natural: np.ndarray
    units: str = UNITS_NATURAL
    extrapolation: dict = field(default_factory=dict)
    flags: tuple = ()

    @property
    def _factor(self) -> float:
        return 2.0 * math.pi if self.units == UNITS_E2_OVER_H else 1.0

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_natural * self._factor

    @property
    def uncertainty(self) -> np.ndarray:
        return self.uncertainty_natural * self._factor

    def convert(self, units: str) -> "ConductivityTensor":
        if units not in (UNITS_NATURAL, UNITS_E2_OVER_H):
            raise ValueError(f"unknown units: {units!r}")
        return replace(self, units=units)


def _fermi(e: np.ndarray, mu: float, beta: float) -> np.ndarray:
    if math.isinf(beta):
        f = (e < mu).astype(float)
        f[e == mu] = 0.5
        return f
    # tanh form is overflow-safe on both tails
    return 0.5 * (1.0 - np.tanh(0.5 * beta * (e - mu)))


def kubo_correlator_free(h: BlochHamiltonian, mu: float, beta: float,
                         mesh: BZMesh, omegas) -> CorrelatorSeries:
    """Band-resolved bubble K_ij(omega) summed over the mesh with weights.

    omega = 0 is always included (first entry). beta may be math.inf, in which
    case occupation is the sharp step at mu. On a finite-torus momentum set at
    finite beta the omega=0 value picks up the beta-linear degenerate-pair
    terms; on quadrature meshes coincidences are measure-zero and skipped.
    """
    if len(mesh) == 0:
        raise ValueError("empty mesh")
    omegas = np.asarray([w for w in np.atleast_1d(omegas) if w != 0.0], dtype=float)
    if np.any(omegas < 0):
        raise ValueError("omegas must be positive")
    omegas = np.concatenate([[0.0], omegas])

    gs = h.spin_multiplicity
    pref = gs / (2.0 * math.pi) ** 2
    values = np.zeros((len(omegas), 2, 2), dtype=complex)
    degenerate_beta_terms = mesh.kind == "torus" and not math.isinf(beta)

    pts = mesh.points
    wts = mesh.weights
    for start in range(0, len(pts), _CHUNK):
        ks = pts[start:start + _CHUNK]
        w = wts[start:start + _CHUNK]
        hm = h.h_batch(ks)
        e, v = np.linalg.eigh(hm)
        js = [h.vertex_batch(ks, i + 1) for i in range(2)]
        m = [np.einsum("pab,pbc,pcd->pad", v.conj().transpose(0, 2, 1), j, v) for j in js]

        f = _fermi(e, mu, beta)
        d_f = f[:, None, :] - f[:, :, None]            # f_b - f_a
        d_e = e[:, :, None] - e[:, None, :]            # E_a - E_b
        degenerate = np.abs(d_e) <= _DEGENERACY_TOL

        for iw, omega in enumerate(omegas):
            if omega == 0.0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    ker = np.where(degenerate, 0.0, d_f / np.where(degenerate, 1.0, d_e))
                if degenerate_beta_terms:
                    # lim of the time integral on coincident levels: beta f (1 - f)
                    ker = ker + np.where(degenerate, beta * f[:, :, None] * (1.0 - f[:, :, None]), 0.0)
            else:
                ker = d_f / (1j * omega + d_e)
            for i in range(2):
                for j in range(2):
                    values[iw, i, j] += pref * np.einsum(
                        "p,pab,pab,pba->", w, ker, m[i], m[j], optimize=False)

    return CorrelatorSeries(
        omegas=omegas,
        values=values,
        beta=beta,
        mesh_n=mesh.mesh_n,
        model_tag=h.tag,
        kind=mesh.kind,
    )


def _fit_component(om: np.ndarray, q: np.ndarray, log_term: bool) -> dict:
    """OLS of q(omega) against {1, omega log omega, omega}, or {1, omega}.

    Returns the headline uncertainty (RMS residual) plus per-coefficient
    uncertainties that combine the covariance SE with a truncation systematic
    (the coefficient shift when the next-order omega^3 column is added).
    """
    cols = [np.ones_like(om)]
    if log_term:
        cols.append(om * np.log(om))
    cols.append(om)
    x = np.stack(cols, axis=1)
    beta_hat, *_ = np.linalg.lstsq(x, q, rcond=None)
    resid = q - x @ beta_hat
    dof = len(om) - x.shape[1]
    rms = math.sqrt(float(resid @ resid) / dof) if dof > 0 else 0.0

    try:
        cov = np.linalg.inv(x.T @ x) * rms**2
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(x.shape[1], np.nan)

    sys_shift = np.zeros(x.shape[1])
    if len(om) >= x.shape[1] + 2:
        x4 = np.concatenate([x, (om**3)[:, None]], axis=1)
        beta4, *_ = np.linalg.lstsq(x4, q, rcond=None)
        sys_shift = np.abs(beta4[: x.shape[1]] - beta_hat)

    unc = np.sqrt(se**2 + sys_shift**2)
    out = {
        "sigma": float(beta_hat[0]),
        "rms": rms,
        "coeffs": [float(b) for b in beta_hat],
        "coeff_uncertainty": [float(u) for u in unc],
        "log_term": log_term,
    }
    if log_term:
        out["c1"] = float(beta_hat[1])
        out["c1_uncertainty"] = float(unc[1])
    return out


def _fit_window(om_pos: np.ndarray) -> np.ndarray:
    """Boolean window: the smallest decade if it holds >= 5 points, else the
    smallest two decades, else everything."""
    lo = om_pos.min()
    for span in (10.0, 100.0):
        win = om_pos <= lo * span * (1.0 + 1e-9)
        if win.sum() >= 5:
            return win
    return np.ones_like(om_pos, dtype=bool)


def kubo_sigma(series: CorrelatorSeries, log_term: bool = True) -> ConductivityTensor:
    """sigma_ij = -lim_{omega->0+} [K(omega) - K(0)]/omega via a log-aware fit.

    Quotients q(omega) are fitted to sigma + c1 omega log omega + c2 omega over
    the small-frequency window (the log column is dropped for gapped series).
    The headline uncertainty per entry is the RMS fit residual. A quotient
    sequence that is non-monotone beyond 10x that uncertainty raises the
    NO_CONVERGENCE flag for its component.
    """
    om = np.asarray(series.omegas, dtype=float)
    if om[0] != 0.0:
        raise ValueError("series must include omega = 0")
    pos = om > 0
    om_pos = om[pos]
    if len(om_pos) < 3:
        raise ValueError("need at least 3 positive frequencies")
    if om_pos.max() / om_pos.min() < 100.0 * (1.0 - 1e-9):
        raise ValueError("positive frequencies must span at least two decades")

    k0 = series.values[0]
    quot = -(series.values[pos] - k0[None, :, :]) / om_pos[:, None, None]

    order = np.argsort(om_pos)
    om_sorted = om_pos[order]
    win = _fit_window(om_sorted)
    om_fit = om_sorted[win]

    sigma = np.zeros((2, 2))
    unc = np.zeros((2, 2))
    fits = {}
    flags = []
    for i in range(2):
        for j in range(2):
            q = np.real(quot[:, i, j])[order]
            qf = q[win]
            fit = _fit_component(om_fit, qf, log_term)
            sigma[i, j] = fit["sigma"]
            unc[i, j] = fit["rms"]
            fit["max_imag_quotient"] = float(np.abs(np.imag(quot[:, i, j])).max())
            fits[f"{i + 1}{j + 1}"] = fit

            # convergence screen: steps against the dominant trend beyond 10x rms
            diffs = np.diff(qf)
            trend = np.sign(qf[-1] - qf[0])
            if trend != 0 and len(diffs):
                against = diffs[np.sign(diffs) == -trend]
                if against.size and np.abs(against).max() > 10.0 * max(fit["rms"], 1e-300):
                    flags.append(f"NO_CONVERGENCE({i + 1},{j + 1})")

    extrap = {
        "omegas": [float(w) for w in om_sorted],
        "window_omegas": [float(w) for w in om_fit],
        "quotients_re": {f"{i+1}{j+1}": [float(np.real(q)) for q in quot[:, i, j][order]]
                         for i in range(2) for j in range(2)},
        "fit": fits,
        "model_tag": series.model_tag,
        "mesh_n": series.mesh_n,
    }
    return ConductivityTensor(
        sigma_natural=sigma,
        uncertainty_natural=unc,
        extrapolation=extrap,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class ChernReport:
    chern: int
    mesh_n: int
    max_abs_flux: float
    bands_below_mu: int
    per_band: tuple
    pre_round_sum: float


def _links(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-modulus overlap determinants along the two grid directions."""
    ahead1 = np.roll(frames, -1, axis=0)
    ahead2 = np.roll(frames, -1, axis=1)
    if frames.shape[-1] == 1:
        u1 = np.einsum("ijab,ijab->ij", frames.conj(), ahead1)
        u2 = np.einsum("ijab,ijab->ij", frames.conj(), ahead2)
    else:
        u1 = np.linalg.det(np.einsum("ijba,ijbc->ijac", frames.conj(), ahead1))
        u2 = np.linalg.det(np.einsum("ijba,ijbc->ijac", frames.conj(), ahead2))
    return u1, u2


def _plaquette_sum(u1: np.ndarray, u2: np.ndarray):
    mod1 = np.abs(u1)
    mod2 = np.abs(u2)
    if mod1.min() < 1e-12 or mod2.min() < 1e-12:
        raise ValueError("vanishing link overlap")
    u1 = u1 / mod1
    u2 = u2 / mod2
    fluxes = np.angle(u1 * np.roll(u2, -1, axis=0) * np.roll(u1, -1, axis=1).conj() * u2.conj())
    return fluxes


def fhs_chern(h: BlochHamiltonian, mu: float, n: int) -> ChernReport:
    """Plaquette-flux Chern number of the filled frame on an n x n grid.

    Exact integer output by construction. Errors on gapless input, and on
    inadmissible fluxes (|F| > pi - 0.01) after up to two automatic mesh
    doublings. Also reports the per-band integers.
    """
    if n < 6:
        raise ValueError("chern mesh must be at least 6 x 6")
    last_err = None
    for attempt in range(3):
        n_try = n * 2**attempt
        try:
            return _fhs_chern_once(h, mu, n_try)
        except _InadmissibleFlux as err:
            last_err = err
    raise ValueError(f"inadmissible plaquette flux persists after mesh doubling: {last_err}")


class _InadmissibleFlux(Exception):
    pass


def _fhs_chern_once(h: BlochHamiltonian, mu: float, n: int) -> ChernReport:
    recip = np.array([row for row in _recip_rows(h)])
    f1 = np.arange(n) / n
    frac = np.stack(np.meshgrid(f1, f1, indexing="ij"), axis=-1).reshape(-1, 2)
    ks = frac @ recip
    # periodic gauge: matrix elements repeat exactly under k -> k + G
    hm = h.h_batch(ks, gauge="periodic")
    e, v = np.linalg.eigh(hm)
    e = e.reshape(n, n, -1)
    v = v.reshape(n, n, h.dim, h.dim)

    occ_counts = (e < mu).sum(axis=2)
    nocc = int(occ_counts.flat[0])
    if not np.all(occ_counts == nocc) or nocc == 0 or nocc == h.dim:
        if nocc == 0 or nocc == h.dim:
            raise ValueError("chemical potential is outside the spectrum")
        raise ValueError("gapless input: filled-band count varies over the grid")
    gap = np.abs(e - mu).min()
    if gap < 1e-9:
        raise ValueError("gapless input: spectrum touches mu on the grid")

    frames = v[:, :, :, :nocc]
    u1, u2 = _links(frames)
    fluxes = _plaquette_sum(u1, u2)
    max_flux = float(np.abs(fluxes).max())
    if max_flux > math.pi - 0.01:
        raise _InadmissibleFlux(f"max |flux| = {max_flux:.3f} at n = {n}")
    total = float(fluxes.sum() / (2.0 * math.pi))
    if abs(total - round(total)) > 1e-6:
        raise ValueError(f"plaquette flux sum {total} is not an integer")

    per_band = []
    for b in range(h.dim):
        ub1, ub2 = _links(v[:, :, :, b:b + 1])
        fb = _plaquette_sum(ub1, ub2)
        tb = float(fb.sum() / (2.0 * math.pi))
        if abs(tb - round(tb)) > 1e-6:
            raise ValueError(f"band {b} flux sum {tb} is not an integer")
        per_band.append(int(round(tb)))

    return ChernReport(
        chern=int(round(total)),
        mesh_n=n,
        max_abs_flux=max_flux,
        bands_below_mu=nocc,
        per_band=tuple(per_band),
        pre_round_sum=total,
    )


def _recip_rows(h: BlochHamiltonian):
    l1, l2 = h.basis
    a = l1[0] * l2[1] - l1[1] * l2[0]
    yield 2.0 * math.pi * np.array([l2[1], -l2[0]]) / a
    yield 2.0 * math.pi * np.array([-l1[1], l1[0]]) / a


def tknn_sigma12(report: ChernReport) -> ConductivityTensor:
    """sigma_12 = C e^2/h exactly; diagonal zero; antisymmetric partner."""
    c = report.chern
    sigma = np.array([[0.0, c * E2_OVER_H_NATURAL], [-c * E2_OVER_H_NATURAL, 0.0]])
    return ConductivityTensor(
        sigma_natural=sigma,
        uncertainty_natural=np.zeros((2, 2)),
        extrapolation={"chern": c, "mesh_n": report.mesh_n, "quantized": True},
    )


def kubo_vs_tknn(h: BlochHamiltonian, mu: float, mesh: BZMesh, omegas, n: int) -> dict:
    """Two independent routes to sigma_12 for a gapped model, with discrepancies."""
    series = kubo_correlator_free(h, mu, math.inf, mesh, omegas)
    sigma_kubo = kubo_sigma(series, log_term=False)
    report = fhs_chern(h, mu, n)
    sigma_tknn = tknn_sigma12(report)
    diff = (sigma_kubo.sigma_natural - sigma_tknn.sigma_natural) / E2_OVER_H_NATURAL
    return {
        "sigma_kubo": sigma_kubo,
        "sigma_tknn": sigma_tknn,
        "chern_report": report,
        "discrepancy_e2h": diff,
        "max_discrepancy_e2h": float(np.abs(diff).max()),
    }
