"""Bloch Hamiltonians, current vertices, spectral gaps, Fermi-point location.

A model is a finite hopping list {(cell displacement z, N x N amplitude block)}.
Two momentum gauges are used:

  geometric  H~(k) = sum_t M_t exp(-i k . D_t),  D_t = z.l + r_row - r_col
  periodic   H(k)  = sum_t M_t exp(-i k . (z.l))

The geometric gauge makes the analytic vertex J_i = d H~ / d k_i equal the
Fourier transform of the bond-current operator (bonds weighted by their true
geometric vectors); the periodic gauge gives strictly G-periodic matrix
elements, which the Chern-number links need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import SQRT3, BZMesh, LatticeSpec, build_honeycomb

# Cell displacements carrying the c_A^+ c_B hop: the bonded B site sits one
# nearest-neighbor vector below the A site, so the geometric phase vectors are
# -delta_1, -delta_2, -delta_3 (all unit length).
GRAPHENE_AB_CELLS = ((0, 0), (1, 0), (0, 1))
# Haldane same-sublattice hops (one orientation; conjugates added explicitly).
HALDANE_NNN_CELLS = ((1, 0), (-1, 1), (0, -1))


@dataclass(frozen=True)
class BlochHamiltonian:
    """k -> N x N Hermitian matrix, built from a finite hopping list."""

    dim: int
    basis: np.ndarray                  # (2,2) Bravais rows
    offsets: np.ndarray                # (N, 2) orbital positions in the cell
    terms: tuple                       # ((z1, z2), (N,N) complex ndarray) pairs
    spin_multiplicity: int = 1
    hopping_range: int = 1
    tag: str = "custom"
    hermitize_correction: float = 0.0
    eval_fn: object = None             # optional raw k -> matrix (no hopping list)

    def term_arrays(self, gauge: str = "geometric"):
        """(D, M): per-term phase displacement vectors and amplitude blocks."""
        if not self.terms:
            raise ValueError("model has no hopping list")
        zs = np.array([t[0] for t in self.terms], dtype=float)
        ms = np.array([t[1] for t in self.terms], dtype=complex)
        d_cell = zs @ self.basis
        if gauge == "periodic":
            return d_cell[:, None, None, :] * np.ones((1, self.dim, self.dim, 1)), ms
        if gauge != "geometric":
            raise ValueError("gauge must be 'geometric' or 'periodic'")
        # entrywise D[t, r, c] = z.l + offset_r - offset_c
        dr = self.offsets[None, :, None, :] - self.offsets[None, None, :, :]
        return d_cell[:, None, None, :] + dr, ms

    def h_matrix(self, k, gauge: str = "geometric") -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.eval_fn is not None and not self.terms:
            return np.asarray(self.eval_fn(k), dtype=complex)
        d, ms = self.term_arrays(gauge)
        phases = np.exp(-1j * (d @ k))
        return np.einsum("trc,trc->rc", phases, ms)

    def h_batch(self, ks, gauge: str = "geometric") -> np.ndarray:
        """Vectorized h_matrix over ks of shape (P, 2)."""
        d, ms = self.term_arrays(gauge)
        phases = np.exp(-1j * np.einsum("trcx,px->ptrc", d, ks))
        return np.einsum("ptrc,trc->prc", phases, ms)

    def vertex_batch(self, ks, direction: int, gauge: str = "geometric") -> np.ndarray:
        """Analytic dH/dk_i over ks of shape (P, 2)."""
        d, ms = self.term_arrays(gauge)
        phases = np.exp(-1j * np.einsum("trcx,px->ptrc", d, ks))
        dm = ms[None, :, :, :] * (-1j * d[None, :, :, :, direction - 1])
        return np.einsum("ptrc,ptrc->prc", phases, dm)


def _check_t(t: float):
    if t <= 0:
        raise ValueError("hopping amplitude must be > 0")


def graphene_bloch(t: float = 1.0) -> BlochHamiltonian:
    """Half-filled honeycomb nearest-neighbor model; two spin species as a factor."""
    _check_t(t)
    lat = build_honeycomb(1, spinless=True)
    hop = np.array([[0.0, -t], [0.0, 0.0]], dtype=complex)
    terms = []
    for z in GRAPHENE_AB_CELLS:
        terms.append((z, hop))
        terms.append(((-z[0], -z[1]), hop.conj().T))
    return BlochHamiltonian(
        dim=2,
        basis=lat.basis,
        offsets=lat.offsets,
        terms=_merge_terms(terms),
        spin_multiplicity=2,
        hopping_range=1,
        tag="graphene",
    )


def haldane_bloch(t1: float = 1.0, t2: float = 0.0, phi: float = 0.0,
                  m: float = 0.0) -> BlochHamiltonian:
    """Honeycomb with complex next-nearest hopping and staggered mass; spinless."""
    _check_t(t1)
    lat = build_honeycomb(1, spinless=True)
    terms = []
    hop = np.array([[0.0, -t1], [0.0, 0.0]], dtype=complex)
    for z in GRAPHENE_AB_CELLS:
        terms.append((z, hop))
        terms.append(((-z[0], -z[1]), hop.conj().T))
    if m != 0.0:
        terms.append(((0, 0), np.diag([m, -m]).astype(complex)))
    if t2 != 0.0:
        nnn = np.diag([-t2 * np.exp(1j * phi), -t2 * np.exp(-1j * phi)])
        for z in HALDANE_NNN_CELLS:
            terms.append((z, nnn))
            terms.append(((-z[0], -z[1]), nnn.conj().T))
    return BlochHamiltonian(
        dim=2,
        basis=lat.basis,
        offsets=np.array([[0.0, 0.0], [1.0, 0.0]]),
        terms=_merge_terms(terms),
        spin_multiplicity=1,
        hopping_range=1,
        tag="haldane",
    )


def flat_bands_bloch(levels=(-1.0, 1.0)) -> BlochHamiltonian:
    """k-independent diagonal model: trivial bands, zero current vertex."""
    diag = np.diag(np.asarray(levels, dtype=complex))
    lat = build_honeycomb(1, spinless=True)
    return BlochHamiltonian(
        dim=len(levels),
        basis=lat.basis,
        offsets=np.zeros((len(levels), 2)),
        terms=(((0, 0), diag),),
        spin_multiplicity=1,
        hopping_range=0,
        tag="flat_trivial",
    )


def _merge_terms(terms):
    """Combine amplitude blocks sharing a displacement; drop zero blocks."""
    acc: dict = {}
    dim = len(terms[0][1])
    for z, m in terms:
        z = (int(z[0]), int(z[1]))
        acc[z] = acc.get(z, np.zeros((dim, dim), dtype=complex)) + np.asarray(m, dtype=complex)
    out = []
    for z in sorted(acc):
        if np.abs(acc[z]).max() > 0.0:
            out.append((z, acc[z]))
    return tuple(out)


def custom_bloch(hoppings, lat: LatticeSpec | None = None,
                 spin_multiplicity: int = 1, tag: str = "custom") -> BlochHamiltonian:
    """Build a Bloch Hamiltonian from an explicit hopping list.

    Hermiticity requires the conjugate-pair condition M(-z) = M(z)^dagger; a
    violation above 1e-10 is an error, smaller deviations are symmetrized and
    the correction magnitude is recorded on the result.
    """
    if lat is None:
        lat = build_honeycomb(1, spinless=True)
    groups: dict = {}
    dim = None
    for z, m in hoppings:
        z = (int(z[0]), int(z[1]))
        m = np.asarray(m, dtype=complex)
        if dim is None:
            dim = len(m)
        groups[z] = groups.get(z, np.zeros((dim, dim), dtype=complex)) + m

    correction = 0.0
    fixed: dict = {}
    for z in sorted(groups):
        if z in fixed:
            continue
        neg = (-z[0], -z[1])
        m = groups[z]
        partner = groups.get(neg, np.zeros_like(m))
        dev = np.abs(partner - m.conj().T).max()
        correction = max(correction, dev)
        if dev > 1e-10:
            raise ValueError(
                f"hopping at {z} violates the conjugate-pair condition by {dev:.3e}"
            )
        sym = 0.5 * (m + partner.conj().T)
        fixed[z] = sym
        if neg != z:
            fixed[neg] = sym.conj().T
        else:
            fixed[z] = 0.5 * (sym + sym.conj().T)

    offsets = lat.offsets[:: lat.n_spin]
    if len(offsets) != dim:
        offsets = np.zeros((dim, 2))  # unknown orbital geometry: place all at the origin
    hop_range = max((max(abs(z[0]), abs(z[1])) for z in fixed), default=0)
    return BlochHamiltonian(
        dim=dim,
        basis=lat.basis,
        offsets=np.asarray(offsets, dtype=float),
        terms=tuple((z, fixed[z]) for z in sorted(fixed) if np.abs(fixed[z]).max() > 0.0),
        spin_multiplicity=spin_multiplicity,
        hopping_range=int(hop_range),
        tag=tag,
        hermitize_correction=float(correction),
    )


def current_vertex(h: BlochHamiltonian, direction: int):
    """Analytic vertex J_i(k) = dH~/dk_i as a function of Cartesian k.

    Requires the hopping list: each term is weighted by -i times its geometric
    bond-vector component, which is exact (no finite-difference tolerance).
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    if not h.terms:
        raise ValueError("current vertex needs a hopping list; "
                         "function-only models have no bond data")

    def vertex(k):
        k = np.asarray(k, dtype=float)
        return h.vertex_batch(k[None, :], direction)[0]

    return vertex


@dataclass(frozen=True)
class GapReport:
    delta_mu: float
    argmin_k: np.ndarray     # Cartesian momentum attaining the minimum
    mesh_n: int


def _dist_to_mu(h: BlochHamiltonian, ks: np.ndarray, mu: float) -> np.ndarray:
    ev = np.linalg.eigvalsh(h.h_batch(ks))
    return np.abs(ev - mu).min(axis=1)


def spectral_gap(h: BlochHamiltonian, mu: float, mesh: BZMesh) -> GapReport:
    """min over the mesh of dist(mu, spectrum), with one local dyadic refinement."""
    d = _dist_to_mu(h, mesh.points, mu)
    i0 = int(np.argmin(d))
    best = float(d[i0])
    f0 = mesh.frac[i0]

    # one dyadic level around the argmin: 3x3 at half the base spacing
    half = 0.5 / mesh.mesh_n
    steps = np.array([-1.0, 0.0, 1.0]) * half
    sub = np.array([f0 + (a, b) for a in steps for b in steps])
    dsub = _dist_to_mu(h, np.mod(sub, 1.0) @ mesh.recip, mu)
    j = int(np.argmin(dsub))
    if dsub[j] < best:
        best = float(dsub[j])
        f0 = np.mod(sub[j], 1.0)
    return GapReport(delta_mu=best, argmin_k=f0 @ mesh.recip, mesh_n=mesh.mesh_n)


def fermi_points(h: BlochHamiltonian, mu: float, mesh: BZMesh, tol: float) -> list:
    """Mesh local minima of dist(mu, spectrum) refined below tol, as Cartesian momenta."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n = mesh.mesh_n
    recip = mesh.recip
    m = (np.arange(n) + 0.5) / n
    frac = np.stack(np.meshgrid(m, m, indexing="ij"), axis=-1).reshape(-1, 2)
    d = _dist_to_mu(h, frac @ recip, mu).reshape(n, n)

    neighbors_min = np.full((n, n), np.inf)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbors_min = np.minimum(neighbors_min, np.roll(np.roll(d, di, 0), dj, 1))
    cand = np.argwhere(d <= neighbors_min)

    found = []
    for i, j in cand:
        f = frac.reshape(n, n, 2)[i, j].copy()
        val = d[i, j]
        # two dyadic passes localize the minimum to ~1/8 of a cell
        step = 0.5 / n
        for _ in range(2):
            offs = np.array([(a, b) for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)])
            sub = f + offs * step
            dsub = _dist_to_mu(h, np.mod(sub, 1.0) @ recip, mu)
            jbest = int(np.argmin(dsub))
            f = sub[jbest]
            val = float(dsub[jbest])
            step *= 0.5
        if val < tol:
            found.append((np.mod(f, 1.0), val))

    # merge refined candidates that landed on the same minimum (torus metric)
    merged: list = []
    for f, val in sorted(found, key=lambda fv: (fv[0][0], fv[0][1])):
        dup = False
        for idx, (g, gval) in enumerate(merged):
            delta = np.abs(f - g)
            delta = np.minimum(delta, 1.0 - delta)
            if np.max(delta) * n < 2.0:
                dup = True
                if val < gval:
                    merged[idx] = (f, val)
                break
        if not dup:
            merged.append((f, val))
    merged.sort(key=lambda fv: (round(fv[0][0], 9), round(fv[0][1], 9)))
    return [f @ recip for f, _ in merged]


def graphene_fermi_momenta() -> np.ndarray:
    """The two gapless momenta of the half-filled honeycomb model."""
    return np.array([
        [2.0 * math.pi / 3.0, 2.0 * math.pi / (3.0 * SQRT3)],
        [2.0 * math.pi / 3.0, -2.0 * math.pi / (3.0 * SQRT3)],
    ])


def builtin_model(name: str, **params) -> BlochHamiltonian:
    """Construct a named preset model."""
    try:
        ctor = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model preset: {name!r}") from None
    return ctor(**params)


# Preset zoo. haldane_trivial uses a mass well past the phase boundary
# (the gap at the two corner momenta is 2|3*sqrt(3)*t2*sin(phi) -+ m|,
# so the transition sits at m = 3*sqrt(3)*t2*|sin(phi)| ~ 0.52 for t2=0.1).
BUILTIN_MODELS = {
    "graphene": lambda t=1.0: graphene_bloch(t),
    "gapped_graphene": lambda t=1.0, m=0.5: _tagged(haldane_bloch(t, 0.0, 0.0, m), "gapped_graphene"),
    "haldane_topological": lambda t1=1.0, t2=0.1, phi=math.pi / 2, m=0.0:
        _tagged(haldane_bloch(t1, t2, phi, m), "haldane_topological"),
    "haldane_trivial": lambda t1=1.0, t2=0.1, phi=math.pi / 2, m=1.0:
        _tagged(haldane_bloch(t1, t2, phi, m), "haldane_trivial"),
    "flat_trivial": lambda: flat_bands_bloch(),
}

GAPPED_BUILTINS = ("gapped_graphene", "haldane_topological", "haldane_trivial", "flat_trivial")


def _tagged(h: BlochHamiltonian, tag: str) -> BlochHamiltonian:
    return BlochHamiltonian(
        dim=h.dim, basis=h.basis, offsets=h.offsets, terms=h.terms,
        spin_multiplicity=h.spin_multiplicity, hopping_range=h.hopping_range,
        tag=tag, hermitize_correction=h.hermitize_correction, eval_fn=h.eval_fn,
    )
