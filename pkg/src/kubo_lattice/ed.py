"""Exact diagonalization on small tori.

Everything here runs off one representation: a list of directed hopping terms
(a, b, amp, D) meaning amp * c+_a c_b with geometric displacement D (the true
bond vector, never wrapped), plus diagonal density-density pairs
coeff * (n_i - 1/2)(n_j - 1/2). Fermionic signs follow the fixed mode order
mode = (cell_rank * n_orb + orb) * n_spin + spin, cell_rank = x1 * L2 + x2,
with creation/annihilation signs from the occupied-mode count below the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .bloch import BlochHamiltonian, graphene_bloch
from .lattice import LatticeSpec, cell_area
from .response import CorrelatorSeries, ConductivityTensor, kubo_sigma

_MODE_CAP = 28
_DENSE_CAP = 12          # full-space / per-site dense matrix work
_DEG_TOL = 1e-12
_GRID_TOL = 1e-9


class FockSpace:
    """Occupation-bitstring basis, grouped into particle-number sectors."""

    def __init__(self, n_modes: int):
        if n_modes < 1:
            raise ValueError("need at least one mode")
        if n_modes > _MODE_CAP:
            raise ValueError(f"mode-count overflow: {n_modes} > {_MODE_CAP}")
        self.n_modes = n_modes
        self.dim = 1 << n_modes
        self._sectors: dict[int, np.ndarray] = {}

    def sector_states(self, n: int) -> np.ndarray:
        """Basis bitstrings with n particles, ascending (deterministic order)."""
        if not 0 <= n <= self.n_modes:
            raise ValueError("particle number out of range")
        if n not in self._sectors:
            ints = [sum(1 << p for p in combo)
                    for combo in combinations(range(self.n_modes), n)]
            self._sectors[n] = np.sort(np.asarray(ints, dtype=np.int64))
        return self._sectors[n]

    def sectors(self):
        return range(self.n_modes + 1)


def _quad_sector(states: np.ndarray, qa, qb, qamp, n_modes: int) -> np.ndarray:
    """Dense sector matrix of sum amp c+_a c_b with fermionic signs."""
    dim = len(states)
    h = np.zeros((dim, dim), dtype=complex)
    idx = np.arange(dim)
    for a, b, amp in zip(qa, qb, qamp):
        if a == b:
            h[idx, idx] += amp * ((states >> a) & 1)
            continue
        keep = ((states >> b) & 1).astype(bool)
        src = states[keep]
        mid = src & ~np.int64(1 << b)
        keep2 = ((mid >> a) & 1) == 0
        src, mid = src[keep2], mid[keep2]
        dst = mid | np.int64(1 << a)
        par = (np.bitwise_count(src & np.int64((1 << b) - 1))
               ^ np.bitwise_count(mid & np.int64((1 << a) - 1))) & 1
        sign = 1.0 - 2.0 * par
        rows = np.searchsorted(states, dst)
        cols = np.searchsorted(states, src)
        np.add.at(h, (rows, cols), amp * sign)
    return h


def _pair_diag(states: np.ndarray, ia, ib, icoeff) -> np.ndarray:
    """Diagonal of sum coeff (n_i - 1/2)(n_j - 1/2) over the sector."""
    if len(ia) == 0:
        return np.zeros(len(states))
    na = ((states[:, None] >> ia[None, :]) & 1) - 0.5
    nb = ((states[:, None] >> ib[None, :]) & 1) - 0.5
    return (na * nb) @ icoeff


class FockOperator:
    """Particle-number-conserving operator given by hopping-style terms.

    matrix(None) materializes the full Fock-space matrix (small systems only);
    matrix(n) the n-particle sector block.
    """

    def __init__(self, space: FockSpace, qa, qb, qamp, hermitian: bool = True,
                 name: str = ""):
        self.space = space
        self.qa = np.asarray(qa, dtype=np.int64)
        self.qb = np.asarray(qb, dtype=np.int64)
        self.qamp = np.asarray(qamp, dtype=complex)
        self.name = name
        self.hermitian = hermitian
        if hermitian:
            self._verify_hermitian()

    def _verify_hermitian(self):
        acc: dict[tuple, complex] = {}
        for a, b, amp in zip(self.qa, self.qb, self.qamp):
            acc[(int(a), int(b))] = acc.get((int(a), int(b)), 0.0) + amp
        dev = 0.0
        for (a, b), amp in acc.items():
            dev = max(dev, abs(amp - np.conj(acc.get((b, a), 0.0))))
        if dev > 1e-12:
            raise ValueError(f"operator {self.name or '?'} is not hermitian (dev {dev:.2e})")

    def matrix(self, sector: int | None = None) -> np.ndarray:
        if sector is not None:
            states = self.space.sector_states(sector)
            return _quad_sector(states, self.qa, self.qb, self.qamp, self.space.n_modes)
        if self.space.n_modes > _DENSE_CAP:
            raise ValueError("full-space matrix needs <= "
                             f"{_DENSE_CAP} modes; use sector blocks")
        m = np.zeros((self.space.dim, self.space.dim), dtype=complex)
        for n in self.space.sectors():
            states = self.space.sector_states(n)
            m[np.ix_(states, states)] = self.matrix(n)
        return m


class EDModel:
    """Interacting lattice Hamiltonian on a finite torus, with bond metadata.

    Quadratic part: directed terms (qa, qb, qamp, qd) with qd the geometric
    bond vector; interaction: density pairs coeff (n_i - 1/2)(n_j - 1/2).
    Exposes sector matrices and cached eigendecompositions; hermitian by
    construction (verified).
    """

    hermitian = True

    def __init__(self, space: FockSpace, dims: tuple, basis: np.ndarray,
                 offsets: np.ndarray, n_orb: int, n_spin: int,
                 quad: list, pairs: list, area: float, tag: str):
        self.space = space
        self.dims = (int(dims[0]), int(dims[1]))
        self.basis = np.asarray(basis, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.n_orb = int(n_orb)
        self.n_spin = int(n_spin)
        self.n_cells = self.dims[0] * self.dims[1]
        self.cell_area = float(area)
        self.tag = tag
        self.qa = np.asarray([t[0] for t in quad], dtype=np.int64)
        self.qb = np.asarray([t[1] for t in quad], dtype=np.int64)
        self.qamp = np.asarray([t[2] for t in quad], dtype=complex)
        self.qd = (np.asarray([t[3] for t in quad], dtype=float)
                   if quad else np.zeros((0, 2)))
        self.ia = np.asarray([p[0] for p in pairs], dtype=np.int64)
        self.ib = np.asarray([p[1] for p in pairs], dtype=np.int64)
        self.icoeff = np.asarray([p[2] for p in pairs], dtype=float)
        self._eig: dict[int, tuple] = {}
        FockOperator(space, self.qa, self.qb, self.qamp, name=tag)  # hermiticity gate

    @property
    def n_modes(self) -> int:
        return self.space.n_modes

    @property
    def n_sites(self) -> int:
        return self.n_cells * self.n_orb

    def mode_position(self, mode: int) -> np.ndarray:
        cell, rest = divmod(mode, self.n_orb * self.n_spin)
        orb = rest // self.n_spin
        x1, x2 = divmod(cell, self.dims[1])
        return np.array([x1, x2], dtype=float) @ self.basis + self.offsets[orb]

    def matrix(self, sector: int | None = None) -> np.ndarray:
        if sector is None:
            if self.n_modes > _DENSE_CAP:
                raise ValueError("full-space matrix needs <= "
                                 f"{_DENSE_CAP} modes; use sector blocks")
            m = np.zeros((self.space.dim, self.space.dim), dtype=complex)
            for n in self.space.sectors():
                states = self.space.sector_states(n)
                m[np.ix_(states, states)] = self.matrix(n)
            return m
        states = self.space.sector_states(sector)
        h = _quad_sector(states, self.qa, self.qb, self.qamp, self.n_modes)
        diag = _pair_diag(states, self.ia, self.ib, self.icoeff)
        h[np.arange(len(states)), np.arange(len(states))] += diag
        return h

    def eig_sector(self, n: int):
        """(eigenvalues, eigenvectors, states) of the n-particle block, cached."""
        if n not in self._eig:
            states = self.space.sector_states(n)
            w, v = np.linalg.eigh(self.matrix(n))
            self._eig[n] = (w, v, states)
        return self._eig[n]

    def spectrum(self) -> np.ndarray:
        """All many-body eigenvalues (every sector), ascending."""
        return np.sort(np.concatenate([self.eig_sector(n)[0]
                                       for n in self.space.sectors()]))

    def sector_eigenvalues(self) -> dict:
        return {n: self.eig_sector(n)[0].copy() for n in self.space.sectors()}


def _mode_index(dims, n_orb, n_spin, x1, x2, orb, spin) -> int:
    rank = (x1 % dims[0]) * dims[1] + (x2 % dims[1])
    return (rank * n_orb + orb) * n_spin + spin


def _expand_quadratic(h: BlochHamiltonian, dims, n_spin: int) -> list:
    """Unroll Bloch hopping terms onto the torus; D stays the unwrapped bond."""
    if not h.terms:
        raise ValueError("function-only models have no bond data")
    out = []
    n_orb = h.dim
    for x1 in range(dims[0]):
        for x2 in range(dims[1]):
            for (z, m) in h.terms:
                for r in range(n_orb):
                    for c in range(n_orb):
                        amp = m[r][c] if isinstance(m, list) else m[r, c]
                        if amp == 0:
                            continue
                        d = (z[0] * h.basis[0] + z[1] * h.basis[1]
                             + h.offsets[r] - h.offsets[c])
                        for s in range(n_spin):
                            a = _mode_index(dims, n_orb, n_spin,
                                            x1 + z[0], x2 + z[1], r, s)
                            b = _mode_index(dims, n_orb, n_spin, x1, x2, c, s)
                            out.append((a, b, complex(amp), d))
    return out


def build_hubbard_ed(lat: LatticeSpec, t: float, u: float,
                     dims: tuple | None = None) -> EDModel:
    """Honeycomb Hubbard model on an L1 x L2 torus.

    Spinful lattice gives the on-site U (n_up - 1/2)(n_dn - 1/2) per site;
    a spinless lattice is allowed only at u = 0.
    """
    if lat.n_orb != 2:
        raise ValueError("expected a honeycomb lattice (two orbitals per cell)")
    if lat.n_spin == 1 and u != 0.0:
        raise ValueError("Hubbard interaction requires a spinful lattice")
    dims = (lat.size, lat.size) if dims is None else (int(dims[0]), int(dims[1]))
    h = graphene_bloch(t)
    n_orb, n_spin = 2, lat.n_spin
    n_modes = dims[0] * dims[1] * n_orb * n_spin
    space = FockSpace(n_modes)
    quad = _expand_quadratic(h, dims, n_spin)
    pairs = []
    if u != 0.0:
        for x1 in range(dims[0]):
            for x2 in range(dims[1]):
                for orb in range(n_orb):
                    up = _mode_index(dims, n_orb, n_spin, x1, x2, orb, 0)
                    dn = _mode_index(dims, n_orb, n_spin, x1, x2, orb, 1)
                    pairs.append((up, dn, u))
    return EDModel(space, dims, lat.basis, h.offsets, n_orb, n_spin, quad, pairs,
                   cell_area(lat), tag=f"hubbard(U={u:g})")


def honeycomb_nn_kernel() -> dict:
    """Density kernel selecting each nearest-neighbor A-B pair once per direction.

    With the U/2 prefactor of build_gapped_ed this yields
    U * sum_bonds (n_A - 1/2)(n_B - 1/2).
    """
    ab = [[0.0, 1.0], [0.0, 0.0]]
    ba = [[0.0, 0.0], [1.0, 0.0]]
    return {
        (0, 0): [[0.0, 1.0], [1.0, 0.0]],
        (1, 0): ab, (-1, 0): ba,
        (0, 1): ab, (0, -1): ba,
    }


def _check_kernel(v: dict):
    for dz, w in v.items():
        w = np.asarray(w, dtype=complex)
        if np.abs(w.imag).max() > 1e-12:
            raise ValueError("asymmetric v: kernel must be real")
        partner = v.get((-dz[0], -dz[1]))
        if partner is None or np.abs(np.asarray(partner, float) - w.real.T).max() > 1e-12:
            raise ValueError(f"asymmetric v: block at {dz} lacks a transposed "
                             "partner at the negated displacement")


def build_gapped_ed(h: BlochHamiltonian, v: dict | None, u: float,
                    size: int, dims: tuple | None = None) -> EDModel:
    """Spinless gapped model on a torus, with density-density interaction.

    V = (u/2) sum_{dz, x} v[dz][r, c] (n_{x+dz, r} - 1/2)(n_{x, c} - 1/2);
    v must be real with v[-dz] = v[dz]^T (each unordered pair counted twice).
    """
    if h.spin_multiplicity != 1:
        raise ValueError("gapped ED path is spinless; fold spin into the orbital index")
    dims = (size, size) if dims is None else (int(dims[0]), int(dims[1]))
    n_orb, n_spin = h.dim, 1
    space = FockSpace(dims[0] * dims[1] * n_orb)
    quad = _expand_quadratic(h, dims, n_spin)
    pairs = []
    if v and u != 0.0:
        _check_kernel(v)
        for dz, w in v.items():
            w = np.asarray(w, dtype=float)
            for x1 in range(dims[0]):
                for x2 in range(dims[1]):
                    for r in range(n_orb):
                        for c in range(n_orb):
                            if w[r, c] == 0.0:
                                continue
                            i = _mode_index(dims, n_orb, 1, x1 + dz[0], x2 + dz[1], r, 0)
                            j = _mode_index(dims, n_orb, 1, x1, x2, c, 0)
                            pairs.append((i, j, 0.5 * u * w[r, c]))
    a = abs(h.basis[0, 0] * h.basis[1, 1] - h.basis[0, 1] * h.basis[1, 0])
    return EDModel(space, dims, h.basis, h.offsets, n_orb, n_spin, quad, pairs,
                   a, tag=f"{h.tag}(U={u:g})")


def bond_current_operator(model: EDModel, direction: int) -> FockOperator:
    """J_i = sum over bonds of amp (-i D_i) c+_a c_b; equals i[H, X_i] openly."""
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    amps = model.qamp * (-1j * model.qd[:, direction - 1])
    return FockOperator(model.space, model.qa, model.qb, amps,
                        name=f"J_{direction}")


def build_open_cluster(h: BlochHamiltonian, dims: tuple) -> EDModel:
    """Same expansion as the torus but hops off the edge are dropped (open box)."""
    if h.spin_multiplicity != 1:
        raise ValueError("open-cluster helper is spinless")
    if not h.terms:
        raise ValueError("function-only models have no bond data")
    dims = (int(dims[0]), int(dims[1]))
    quad = []
    for x1 in range(dims[0]):
        for x2 in range(dims[1]):
            for (z, m) in h.terms:
                y1, y2 = x1 + z[0], x2 + z[1]
                if not (0 <= y1 < dims[0] and 0 <= y2 < dims[1]):
                    continue
                m = np.asarray(m)
                for r in range(h.dim):
                    for c in range(h.dim):
                        if m[r, c] == 0:
                            continue
                        d = (z[0] * h.basis[0] + z[1] * h.basis[1]
                             + h.offsets[r] - h.offsets[c])
                        a = _mode_index(dims, h.dim, 1, y1, y2, r, 0)
                        b = _mode_index(dims, h.dim, 1, x1, x2, c, 0)
                        quad.append((a, b, complex(m[r, c]), d))
    space = FockSpace(dims[0] * dims[1] * h.dim)
    a = abs(h.basis[0, 0] * h.basis[1, 1] - h.basis[0, 1] * h.basis[1, 0])
    return EDModel(space, dims, h.basis, h.offsets, h.dim, 1, quad, [],
                   a, tag=f"{h.tag}(open)")


def position_operator(model: EDModel, direction: int) -> FockOperator:
    """X_i = sum_m x_i(m) n_m. Meaningful on open clusters only."""
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    modes = np.arange(model.n_modes, dtype=np.int64)
    pos = np.array([model.mode_position(m)[direction - 1] for m in modes])
    return FockOperator(model.space, modes, modes, pos.astype(complex),
                        name=f"X_{direction}")


def continuity_check(model: EDModel, flip_bond: int | None = None) -> float:
    """Max over sites and sectors of |i[H, n_x] + div J_x| (matrix elements).

    The commutator side uses dense sector matrices of the assembled H (so the
    interaction participates); the divergence side is rebuilt from the bond
    list. flip_bond negates one bond's divergence contribution as a negative
    control.
    """
    if model.n_modes > _DENSE_CAP:
        raise ValueError(f"continuity_check needs <= {_DENSE_CAP} modes")
    site_of_mode = np.arange(model.n_modes) // model.n_spin
    site_a = site_of_mode[model.qa]
    site_b = site_of_mode[model.qb]
    flip = np.ones(len(model.qa))
    if flip_bond is not None:
        flip[flip_bond] = -1.0

    worst = 0.0
    for n in model.space.sectors():
        states = model.space.sector_states(n)
        h = model.matrix(n)
        occ = (states[:, None] >> np.arange(model.n_modes)[None, :]) & 1
        for x in range(model.n_sites):
            n_x = occ[:, model.n_spin * x: model.n_spin * (x + 1)].sum(axis=1)
            comm = 1j * (h * n_x[None, :] - n_x[:, None] * h)
            # div J_x = -i sum amp (delta_{x, site(b)} - delta_{x, site(a)}) c+_a c_b
            coef = (site_b == x).astype(float) - (site_a == x).astype(float)
            div = _quad_sector(states, model.qa, model.qb,
                               -1j * model.qamp * coef * flip, model.n_modes)
            worst = max(worst, float(np.abs(comm + div).max()))
    return worst


def _gibbs(model: EDModel, beta: float, mu: float):
    """Per-sector unnormalized weights exp(-beta (E - mu N - ref)) and Z."""
    if not (beta > 0) or math.isinf(beta):
        raise ValueError("beta must be positive and finite")
    ref = min(self_e.min() - mu * n
              for n in model.space.sectors()
              for self_e in [model.eig_sector(n)[0]])
    z = 0.0
    weights = {}
    for n in model.space.sectors():
        e = model.eig_sector(n)[0]
        w = np.exp(-beta * (e - mu * n - ref))
        weights[n] = w
        z += float(w.sum())
    return weights, z


def _current_eigenblocks(model: EDModel):
    """Cached per-sector current matrices rotated to the eigenbasis."""
    if not hasattr(model, "_jblocks"):
        j1 = bond_current_operator(model, 1)
        j2 = bond_current_operator(model, 2)
        blocks = {}
        for n in model.space.sectors():
            _, v, _ = model.eig_sector(n)
            blocks[n] = tuple(v.conj().T @ j.matrix(n) @ v for j in (j1, j2))
        model._jblocks = blocks
    return model._jblocks


def _lehmann_correlator(model: EDModel, beta: float, mu: float,
                        omegas: np.ndarray) -> np.ndarray:
    """K_ij(omega) = (1/(A Lc Z)) sum_{mn} J_i^mn J_j^nm kernel(m, n, omega).

    kernel = (w_n - w_m)/(i omega + E_m - E_n); coincident levels at omega = 0
    take the beta-linear limit beta * w_m. Valid at any real omega (the
    Matsubara-grid restriction is the caller's concern).
    """
    weights, z = _gibbs(model, beta, mu)
    jblocks = _current_eigenblocks(model)
    norm = 1.0 / (model.cell_area * model.n_cells * z)
    values = np.zeros((len(omegas), 2, 2), dtype=complex)
    for n in model.space.sectors():
        e = model.eig_sector(n)[0]
        if len(e) == 0:
            continue
        w = weights[n]
        j1, j2 = jblocks[n]
        d_w = w[None, :] - w[:, None]               # w_n - w_m
        d_e = e[:, None] - e[None, :]               # E_m - E_n
        deg = np.abs(d_e) <= _DEG_TOL
        for iw, om in enumerate(omegas):
            if om == 0.0:
                with np.errstate(invalid="ignore", divide="ignore"):
                    ker = np.where(deg, 0.0, d_w / np.where(deg, 1.0, d_e))
                ker = ker + np.where(deg, beta * w[:, None], 0.0)
            else:
                ker = d_w / (1j * om + d_e)
            for i, ji in ((0, j1), (1, j2)):
                for jj_i, jj in ((0, j1), (1, j2)):
                    values[iw, i, jj_i] += norm * np.einsum(
                        "mn,mn,nm->", ker, ji, jj, optimize=False)
    return values


def matsubara_correlator_ed(model: EDModel, beta: float, mu: float,
                            omegas) -> CorrelatorSeries:
    """Exact Lehmann K_ij on the bosonic Matsubara grid; omega = 0 prepended."""
    base = 2.0 * math.pi / beta
    omegas = np.asarray([w for w in np.atleast_1d(omegas) if w != 0.0], dtype=float)
    for w in omegas:
        if abs(w - base * round(w / base)) > _GRID_TOL:
            raise ValueError(f"omega {w} is off the Matsubara grid "
                             f"(2 pi / beta = {base:g})")
    omegas = np.concatenate([[0.0], omegas])
    values = _lehmann_correlator(model, beta, mu, omegas)
    return CorrelatorSeries(
        omegas=omegas,
        values=values,
        beta=beta,
        mesh_n=max(model.dims),
        model_tag=model.tag,
        kind="ed",
    )


def many_body_gap(model: EDModel, mu: float = 0.0) -> float:
    """E_1 - E_0 of H - mu N over the whole Fock space."""
    e = np.sort(np.concatenate([model.eig_sector(n)[0] - mu * n
                                for n in model.space.sectors()]))
    return float(e[1] - e[0])


def sigma_interacting(model: EDModel, beta: float, mu: float,
                      omegas) -> ConductivityTensor:
    """Small-frequency fit of the ED correlator (gapped: no log column)."""
    if many_body_gap(model, mu) <= 1e-8:
        raise ValueError("gapless ED spectrum: conductivity fit undefined")
    series = matsubara_correlator_ed(model, beta, mu, omegas)
    return kubo_sigma(series, log_term=False)


def half_filling_check(model: EDModel, beta: float, mu: float = 0.0) -> float:
    """Mean filling <N>/modes in the Gibbs state."""
    weights, z = _gibbs(model, beta, mu)
    n_avg = sum(n * float(weights[n].sum()) for n in model.space.sectors()) / z
    return n_avg / model.n_modes


@dataclass(frozen=True)
class WickReport:
    """Both routes to the Hall response, with the full tensors as diagnostics.

    The two scalar sides are the antisymmetrized (Hall) components; their
    difference is machine-small at any finite size. The symmetric entries of
    lhs - rhs carry the finite-torus charge-stiffness defect (the k-sum of
    band curvature does not vanish on a small torus), which is a property of
    the finite system, not of either route; it shrinks only with L.
    """

    lhs: np.ndarray          # (2,2) imaginary-time side
    rhs: np.ndarray          # (2,2) real-time side
    omega: float
    t_max: float
    beta: float
    model_tag: str

    @property
    def lhs_hall(self) -> float:
        return float(np.real(self.lhs[0, 1] - self.lhs[1, 0]) / 2.0)

    @property
    def rhs_hall(self) -> float:
        return float(np.real(self.rhs[0, 1] - self.rhs[1, 0]) / 2.0)

    @property
    def hall_diff(self) -> float:
        return self.lhs_hall - self.rhs_hall

    @property
    def diff(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def max_abs_diff(self) -> float:
        return float(np.abs(self.diff).max())


def wick_rotation_check(model: EDModel, beta: float, mu: float,
                        t_max: float, omega: float) -> WickReport:
    """Imaginary-time vs real-time route to the same conductivity quotient.

    LHS: -(K(omega) - K(0))/omega with K evaluated by the Lehmann form at the
    requested (generally off-grid) omega. RHS: the commutator integral
    i int_{-T}^0 dt e^{omega t} <[J_i(t), J_j]> in closed form per eigenpair,
    minus the bond-resolved double commutator <[[H, X_i], X_j]>, divided by
    omega and A Lc. Agreement is up to the e^{-omega T} integral truncation
    and finite-size effects.
    """
    if omega <= 0:
        raise ValueError("omega must be > 0")
    k_pair = _lehmann_correlator(model, beta, mu, np.array([0.0, omega]))
    lhs = -(k_pair[1] - k_pair[0]) / omega

    weights, z = _gibbs(model, beta, mu)
    jblocks = _current_eigenblocks(model)
    r1 = np.zeros((2, 2), dtype=complex)
    d_term = np.zeros((2, 2), dtype=complex)
    for n in model.space.sectors():
        e, v, states = model.eig_sector(n)
        if len(e) == 0:
            continue
        w = weights[n]
        j1, j2 = jblocks[n]
        delta = e[:, None] - e[None, :]             # E_m - E_n
        g = (1.0 - np.exp(-(omega + 1j * delta) * t_max)) / (omega + 1j * delta)
        d_w = w[:, None] - w[None, :]               # w_m - w_n
        for i, ji in ((0, j1), (1, j2)):
            for jj_i, jj in ((0, j1), (1, j2)):
                r1[i, jj_i] += 1j * np.einsum("mn,mn,nm->", d_w * g, ji, jj) / z
        # <[[H, X_i], X_j]> from the bond expansion: sum amp D_i D_j c+_a c_b
        for i in range(2):
            for jj_i in range(2):
                amps = model.qamp * model.qd[:, i] * model.qd[:, jj_i]
                bb = _quad_sector(states, model.qa, model.qb, amps, model.n_modes)
                diag = np.einsum("am,ab,bm->m", v.conj(), bb, v)
                d_term[i, jj_i] += float(np.real(diag @ w)) / z
    rhs = -(r1 - d_term) / (omega * model.cell_area * model.n_cells)
    return WickReport(lhs=lhs, rhs=rhs, omega=omega, t_max=t_max, beta=beta,
                      model_tag=model.tag)


def u_stability_scan(h: BlochHamiltonian, v: dict, beta: float, size_list,
                     u_values, omegas, mu: float = 0.0) -> list:
    """sigma_12(U) rows per torus size, with deviations from the U=0 value.

    Size 1 denotes the two-cell (2x1) torus: on the one-cell honeycomb torus
    the bond vectors of every hopping class sum to zero, so the current
    operators vanish identically and sigma_12 is 0 at every U. Sizes >= 2 are
    L x L tori.
    """
    rows = []
    for size in size_list:
        dims = (2, 1) if int(size) == 1 else None
        model0 = build_gapped_ed(h, v, 0.0, int(size), dims=dims)
        s0 = sigma_interacting(model0, beta, mu, omegas).sigma_natural[0, 1]
        rows.append({"L": int(size), "U": 0.0, "sigma12": float(s0),
                     "deviation": 0.0})
        for u in u_values:
            model = build_gapped_ed(h, v, float(u), int(size), dims=dims)
            s = sigma_interacting(model, beta, mu, omegas).sigma_natural[0, 1]
            rows.append({"L": int(size), "U": float(u), "sigma12": float(s),
                         "deviation": float(abs(s - s0))})
    return rows
