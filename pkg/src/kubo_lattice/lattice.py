"""Bravais lattices, the honeycomb preset, Brillouin-zone meshes, torus metric.

Momenta are stored internally as fractional coordinates in the reciprocal
basis (periodicity reduction is exact there); Cartesian vectors appear only
at API boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT3 = math.sqrt(3.0)

# Honeycomb primitives: two triangular sublattices, B shifted by (1, 0).
HONEYCOMB_BASIS = np.array([[1.5, -0.5 * SQRT3], [1.5, 0.5 * SQRT3]])
HONEYCOMB_B_OFFSET = np.array([1.0, 0.0])


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic 2d lattice: Bravais basis rows, linear size L, internal offsets."""

    basis: np.ndarray        # (2, 2), rows l1, l2
    size: int                # L cells per direction
    offsets: np.ndarray      # (n_internal, 2) position of each internal label in the cell
    n_internal: int
    n_orb: int = 1           # sublattice/orbital count (offsets repeat per spin)
    n_spin: int = 1
    name: str = "custom"

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offsets", offsets)
        if self.size < 1:
            raise ValueError("lattice size must be >= 1")
        if abs(_cross2(basis[0], basis[1])) < 1e-12:
            raise ValueError("degenerate basis: l1, l2 must be linearly independent")
        if len(offsets) != self.n_internal:
            raise ValueError("need one offset per internal label")
        if self.n_orb * self.n_spin != self.n_internal:
            raise ValueError("n_orb * n_spin must equal n_internal")


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def build_honeycomb(L: int, spinless: bool = False) -> LatticeSpec:
    """Honeycomb lattice on an L x L torus; internal labels {A,B}x{up,down}, or {A,B}."""
    if L < 1:
        raise ValueError("lattice size must be >= 1")
    n_spin = 1 if spinless else 2
    orb_offsets = np.array([[0.0, 0.0], HONEYCOMB_B_OFFSET])
    offsets = np.repeat(orb_offsets, n_spin, axis=0)
    return LatticeSpec(
        basis=HONEYCOMB_BASIS.copy(),
        size=L,
        offsets=offsets,
        n_internal=2 * n_spin,
        n_orb=2,
        n_spin=n_spin,
        name="honeycomb",
    )


def build_square(L: int) -> LatticeSpec:
    """Unit square lattice, one site per cell."""
    if L < 1:
        raise ValueError("lattice size must be >= 1")
    return LatticeSpec(
        basis=np.eye(2),
        size=L,
        offsets=np.zeros((1, 2)),
        n_internal=1,
        name="square",
    )


def nearest_neighbor_vectors() -> np.ndarray:
    """The three honeycomb bond vectors delta_1..3 (unit length, sum exactly zero)."""
    return np.array([
        [1.0, 0.0],
        [-0.5, 0.5 * SQRT3],
        [-0.5, -0.5 * SQRT3],
    ])


def cell_area(lat: LatticeSpec) -> float:
    """|l1 ^ l2|."""
    return abs(_cross2(lat.basis[0], lat.basis[1]))


def reciprocal_basis(lat: LatticeSpec) -> np.ndarray:
    """Rows G1, G2 with G_i . l_j = 2 pi delta_ij, closed form."""
    l1, l2 = lat.basis
    a = _cross2(l1, l2)
    if abs(a) < 1e-12:
        raise ValueError("degenerate basis")
    g1 = 2.0 * math.pi * np.array([l2[1], -l2[0]]) / a
    g2 = 2.0 * math.pi * np.array([-l1[1], l1[0]]) / a
    return np.array([g1, g2])


@dataclass(frozen=True)
class RefineSpec:
    """Local mesh refinement request: dyadic zoom blocks around given momenta.

    Each depth unit zooms the cell size down by `zoom` around every center
    (realized as log2(zoom) dyadic halvings), keeping a guard ring of `guard`
    cells at every halving so the telescoping weights stay exact.
    """

    centers: np.ndarray      # (m, 2) Cartesian momenta
    depth: int
    zoom: int = 64
    guard: int = 24

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=float)))
        if self.depth < 0:
            raise ValueError("refinement depth must be >= 0")
        if self.zoom < 2 or (self.zoom & (self.zoom - 1)) != 0:
            raise ValueError("zoom must be a power of two >= 2")
        if self.guard < 1:
            raise ValueError("guard ring must be >= 1 cell")

    @property
    def dyadic_levels(self) -> int:
        return self.depth * int(round(math.log2(self.zoom)))


@dataclass(frozen=True)
class BZMesh:
    """Quadrature (or finite-torus) point set over the Brillouin zone."""

    frac: np.ndarray         # (P, 2) fractional momenta in the reciprocal basis
    weights: np.ndarray      # (P,) nonnegative, summing to the BZ area
    recip: np.ndarray        # (2, 2) rows G1, G2
    mesh_n: int
    kind: str = "quadrature"  # "quadrature" | "torus"
    refinement_centers: np.ndarray | None = None
    refinement_depth: int = 0

    @property
    def points(self) -> np.ndarray:
        """Cartesian momenta."""
        return self.frac @ self.recip

    @property
    def area(self) -> float:
        return abs(_cross2(self.recip[0], self.recip[1]))

    def __len__(self) -> int:
        return len(self.frac)


def _zoom_block(center_frac: np.ndarray, n: int, levels: int, guard: int, w0: float):
    """Telescoping dyadic refinement of the (2*guard+1)^2 base cells around one center.

    Returns (frac points, weights, removed base-cell indices). Weight total equals
    the removed base weight exactly: every halving divides cell weight by 4.
    """
    r = guard
    ci = np.floor(center_frac * n).astype(int)
    origin = ci - r                            # block origin, base-cell units
    c_loc = center_frac * n - origin           # center inside the block, in [r, r+1)^2

    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    active = np.stack(np.meshgrid(np.arange(2 * r + 1), np.arange(2 * r + 1), indexing="ij"),
                      axis=-1).reshape(-1, 2)
    pts, wts = [], []
    for lev in range(1, levels + 1):
        s = 0.5 ** lev
        children = (active[:, None, :] * 2 + corners[None, :, :]).reshape(-1, 2)
        if lev == levels:
            emit = children
        else:
            cc = np.floor(c_loc / s).astype(int)
            inner = np.abs(children - cc).max(axis=1) <= r
            emit = children[~inner]
            active = children[inner]
        mids = (origin + (emit + 0.5) * s) / n
        pts.append(np.mod(mids, 1.0))
        wts.append(np.full(len(emit), w0 / 4.0 ** lev))

    removed = np.mod(origin + _block_indices(r), n)
    return np.concatenate(pts), np.concatenate(wts), removed


def _block_indices(r: int) -> np.ndarray:
    return np.stack(np.meshgrid(np.arange(2 * r + 1), np.arange(2 * r + 1), indexing="ij"),
                    axis=-1).reshape(-1, 2)


def bz_mesh(lat: LatticeSpec, n: int, refine: RefineSpec | None = None) -> BZMesh:
    """Uniform offset n x n mesh, optionally with dyadic zoom refinement.

    The base mesh sits at (m + 1/2)/n in each reciprocal direction, so lattice
    symmetry points (in particular the graphene Fermi points at thirds) are
    never sampled exactly. Refinement replaces the base cells around each
    center by telescoping dyadic sub-cells; the weight sum is preserved.
    """
    if n < 1:
        raise ValueError("mesh size must be >= 1")
    recip = reciprocal_basis(lat)
    bz_area = abs(_cross2(recip[0], recip[1]))
    w0 = bz_area / n**2

    m = (np.arange(n) + 0.5) / n
    frac = np.stack(np.meshgrid(m, m, indexing="ij"), axis=-1).reshape(-1, 2)
    weights = np.full(n * n, w0)

    if refine is None or refine.depth == 0:
        return BZMesh(frac=frac, weights=weights, recip=recip, mesh_n=n)

    levels = refine.dyadic_levels
    if math.log10(w0) - levels * math.log10(4.0) < -300.0:
        raise ValueError("refinement depth underflows quadrature weights below 1e-300")
    if 2 * refine.guard + 1 > n:
        raise ValueError("refinement guard block exceeds the base mesh")

    # centers in fractional coordinates: f_i = k . l_i / (2 pi)
    centers_frac = np.mod(refine.centers @ lat.basis.T / (2.0 * math.pi), 1.0)

    keep = np.ones(n * n, dtype=bool)
    claimed: set[tuple[int, int]] = set()
    extra_pts, extra_wts = [], []
    for cf in centers_frac:
        pts, wts, removed = _zoom_block(cf, n, levels, refine.guard, w0)
        cells = {(int(i), int(j)) for i, j in removed}
        if claimed & cells:
            raise ValueError("refinement blocks overlap; move centers apart or shrink guard")
        claimed |= cells
        keep[removed[:, 0] * n + removed[:, 1]] = False
        extra_pts.append(pts)
        extra_wts.append(wts)

    frac = np.concatenate([frac[keep]] + extra_pts)
    weights = np.concatenate([weights[keep]] + extra_wts)
    return BZMesh(
        frac=frac,
        weights=weights,
        recip=recip,
        mesh_n=n,
        refinement_centers=refine.centers,
        refinement_depth=refine.depth,
    )


def refined_point_count(n: int, refine: RefineSpec) -> int:
    """Exact size of a refined mesh: n^2 plus the per-center zoom extras."""
    g2 = (2 * refine.guard + 1) ** 2
    levels = refine.dyadic_levels
    if levels == 0:
        return n * n
    n_centers = len(refine.centers)
    per_center = (levels - 1) * 3 * g2 + 4 * g2
    return n * n - n_centers * g2 + n_centers * per_center


def torus_momenta(lat: LatticeSpec, dims: tuple[int, int] | None = None) -> BZMesh:
    """The exact finite-torus momentum set k = (m1/L1) G1 + (m2/L2) G2.

    Distinct from quadrature meshes: these are the only momenta compatible
    with periodic boundary conditions, used for ED cross-checks.
    """
    l1, l2 = (lat.size, lat.size) if dims is None else dims
    if l1 < 1 or l2 < 1:
        raise ValueError("torus dimensions must be >= 1")
    recip = reciprocal_basis(lat)
    bz_area = abs(_cross2(recip[0], recip[1]))
    f1 = np.arange(l1) / l1
    f2 = np.arange(l2) / l2
    frac = np.stack(np.meshgrid(f1, f2, indexing="ij"), axis=-1).reshape(-1, 2)
    weights = np.full(l1 * l2, bz_area / (l1 * l2))
    return BZMesh(frac=frac, weights=weights, recip=recip, mesh_n=max(l1, l2), kind="torus")


def torus_distance(lat: LatticeSpec, x, y) -> float:
    """Minimum Euclidean distance between two sites over the 9 periodic images.

    Site labels are (n1, n2) cell coordinates, optionally (n1, n2, internal).
    """
    px = _site_position(lat, x)
    py = _site_position(lat, y)
    d = px - py
    shifts = np.array([-1.0, 0.0, 1.0]) * lat.size
    best = math.inf
    for a in shifts:
        for b in shifts:
            v = d + a * lat.basis[0] + b * lat.basis[1]
            best = min(best, float(np.hypot(v[0], v[1])))
    return best


def _site_position(lat: LatticeSpec, site) -> np.ndarray:
    site = tuple(site)
    if len(site) == 2:
        n1, n2 = site
        off = np.zeros(2)
    elif len(site) == 3:
        n1, n2, internal = site
        off = lat.offsets[internal]
    else:
        raise ValueError("site label must be (n1, n2) or (n1, n2, internal)")
    return n1 * lat.basis[0] + n2 * lat.basis[1] + off
