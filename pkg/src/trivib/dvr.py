"""DVR bases, 1D contraction, V_cut grid sizing, and 3D grid pruning.

Radial coordinates use an equidistant sinc-DVR whose 1D Hamiltonians are
diagonalized and energy-truncated; the retained eigenvectors are turned into
a potential-optimized grid (points = eigenvalues of the position operator in
the truncated space) with a dressed kinetic matrix. The angular coordinate is
a Legendre-DVR at Gauss-Legendre nodes in cos(theta). The 3D direct product
is pruned by deleting every point with V > V_cut.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GridError(ValueError):
    """Raised for inconsistent grid requests (empty basis, empty grid, ...)."""


@dataclass(frozen=True)
class RadialGridSpec:
    r_min: float
    r_max: float
    n: int

    def __post_init__(self):
        if not self.r_min < self.r_max:
            raise ValueError("require r_min < r_max")
        if self.n < 2:
            raise ValueError("require n >= 2")

    @property
    def spacing(self):
        return (self.r_max - self.r_min) / (self.n - 1)

    @property
    def points(self):
        return np.linspace(self.r_min, self.r_max, self.n)


@dataclass(frozen=True)
class AngularGridSpec:
    """Legendre-DVR size; the angular extension is always 0..pi."""

    n3: int

    def __post_init__(self):
        if self.n3 < 1:
            raise ValueError("require n3 >= 1")

    @property
    def spacing(self):
        # effective equidistant spacing used by the kinetic-energy protocol
        return np.pi / self.n3


def build_sinc_dvr(spec: RadialGridSpec, mass: float):
    """Equidistant points and the sinc-DVR matrix of -(1/2m) d^2/dr^2."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    n, dr = spec.n, spec.spacing
    idx = np.arange(n)
    d = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore"):
        off = np.where(d == 0, 0.0, ((-1.0) ** d) / (mass * dr * dr * d * d))
    T = off + np.eye(n) * (np.pi ** 2 / (6.0 * mass * dr * dr))
    return spec.points, T


def build_legendre_dvr(spec: AngularGridSpec):
    """Gauss-Legendre nodes/weights in cos(theta) and the j^2 DVR matrix."""
    n3 = spec.n3
    nodes, weights = np.polynomial.legendre.leggauss(n3)
    # normalized Legendre functions at the nodes; U is orthogonal
    P = np.polynomial.legendre.legvander(nodes, n3 - 1)
    norm = np.sqrt((2.0 * np.arange(n3) + 1.0) / 2.0)
    U = (P * norm).T * np.sqrt(weights)
    jj = np.arange(n3) * (np.arange(n3) + 1.0)
    J2 = U.T @ (jj[:, None] * U)
    return nodes, weights, 0.5 * (J2 + J2.T)


@dataclass(frozen=True)
class ContractedRadialBasis:
    """Energy-truncated 1D eigenbasis plus its potential-optimized grid.

    transform maps DVR-point amplitudes to the n_b retained eigenfunctions;
    its columns are orthonormal. podvr_points/kinetic are the working n_b-point
    grid and dressed kinetic matrix used by the 3D Hamiltonian; with an
    infinite cutoff they coincide with the primitive sinc grid and matrix.
    """

    n_b: int
    eigenvalues: np.ndarray
    transform: np.ndarray
    spec: RadialGridSpec
    podvr_points: np.ndarray
    kinetic: np.ndarray
    mass: float

    def __post_init__(self):
        if self.n_b < 1:
            raise GridError("contracted basis is empty")


def contract_radial(spec: RadialGridSpec, kinetic: np.ndarray,
                    v_ref: Callable, cutoff: float, mass: float) -> ContractedRadialBasis:
    """Diagonalize the 1D reference Hamiltonian and keep levels <= cutoff.

    v_ref is the 1D potential cut along this coordinate (partner coordinates
    at the reference geometry); it is evaluated again at the
    potential-optimized points to dress the contracted kinetic matrix.
    """
    points = spec.points
    vals = np.asarray(v_ref(points), float)
    h1 = kinetic + np.diag(vals)
    evals, evecs = np.linalg.eigh(h1)
    keep = evals <= cutoff
    n_b = int(keep.sum())
    if n_b == 0:
        raise GridError(
            f"contraction cutoff {cutoff:g} lies below the 1D ground state {evals[0]:g}")
    W = evecs[:, :n_b]
    lam = evals[:n_b]
    # position operator in the truncated space -> new grid + transform
    X = W.T @ (points[:, None] * W)
    pod_pts, S = np.linalg.eigh(X)
    # canonical gauge: each optimized grid function peaks positive, so the
    # full-basis limit reduces exactly to the primitive sinc matrix
    U = W @ S
    signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(n_b)])
    signs[signs == 0] = 1.0
    S = S * signs
    h_pod = S.T @ (lam[:, None] * S)
    kin = h_pod - np.diag(np.asarray(v_ref(pod_pts), float))
    return ContractedRadialBasis(
        n_b=n_b, eigenvalues=lam, transform=W, spec=spec,
        podvr_points=pod_pts, kinetic=0.5 * (kin + kin.T), mass=mass)


def tmax_radial(mass: float, dr: float) -> float:
    """Largest kinetic energy representable on an equidistant radial grid."""
    if mass <= 0 or dr <= 0:
        raise ValueError("mass and spacing must be positive")
    return np.pi ** 2 / (2.0 * mass * dr * dr)


def tmax_angular(mass: float, R1: float, R2: float, dtheta: float) -> float:
    """Angular analogue; R2 = inf drops the second rotational term."""
    if mass <= 0 or R1 <= 0 or R2 <= 0 or dtheta <= 0:
        raise ValueError("arguments must be positive")
    inv2 = 0.0 if np.isinf(R2) else 1.0 / (R2 * R2)
    return np.pi ** 2 / (2.0 * mass) * (1.0 / (R1 * R1) + inv2) / (dtheta * dtheta)


@dataclass
class GridPlan:
    """Output of the V_cut sizing protocol, plus any warnings."""

    radial1: RadialGridSpec
    radial2: RadialGridSpec
    angular: AngularGridSpec
    v_cut: float
    warnings: list = field(default_factory=list)


def size_grids_for_vcut(v_cut: float, cuts: tuple, masses: tuple, r0: float,
                        pad_frac: float = 0.15, r_ceiling: float = 20.0,
                        scan_range: tuple = (0.6, 20.0), scan_n: int = 4000,
                        tmax_factor: float = 1.0) -> GridPlan:
    """Choose grid extents and sizes so the grids support energies up to V_cut.

    cuts = (v1, v2): 1D potential cuts along each radial coordinate with the
    partner coordinates at the reference geometry. Extents come from the
    classical turning points at V_cut padded by pad_frac; n3 is the smallest
    count with tmax_angular >= tmax_factor * V_cut (R1 = r0, R2 = inf
    convention; tmax_factor >= 1 buys accuracy at the top of the spectrum);
    radial sizes are then raised until tmax_radial matches tmax_angular
    within one grid step.
    """
    if tmax_factor < 1.0:
        raise ValueError("tmax_factor must be >= 1 so tmax_angular >= V_cut")
    warnings = []
    scan = np.linspace(scan_range[0], min(scan_range[1], r_ceiling), scan_n)
    specs = []
    for axis, (v_fn, mass) in enumerate(zip(cuts, masses), start=1):
        v = np.asarray(v_fn(scan), float)
        vmin = v.min()
        if v_cut <= vmin:
            raise GridError(f"V_cut {v_cut:g} is not above the 1D minimum {vmin:g}")
        below = np.nonzero(v <= v_cut)[0]
        lo, hi = scan[below[0]], scan[below[-1]]
        if below[-1] == scan_n - 1:
            warnings.append(
                f"radial axis {axis}: turning point beyond ceiling, capped at {hi:g}")
        pad = pad_frac * (hi - lo)
        lo = max(scan_range[0], lo - pad)
        hi = min(r_ceiling, hi + pad)
        specs.append((lo, hi, mass))

    target = tmax_factor * v_cut
    n3 = max(2, int(np.ceil(np.sqrt(2.0 * masses[0] * r0 * r0 * target))))
    t_ang = tmax_angular(masses[0], r0, np.inf, np.pi / n3)

    radial = []
    for lo, hi, mass in specs:
        dr_target = np.pi / np.sqrt(2.0 * mass * t_ang)
        n = max(4, int(np.ceil((hi - lo) / dr_target)) + 1)
        radial.append(RadialGridSpec(lo, hi, n))
    return GridPlan(radial[0], radial[1], AngularGridSpec(n3), v_cut, warnings)


@dataclass(frozen=True)
class TruncatedGrid:
    """Potential-adapted 3D grid: the direct product minus points above V_cut.

    Retained points are ordered lexicographically in (i1, i2, i3). full_index
    maps retained ordinal -> flat product index; retained_of_full is the
    inverse (-1 where deleted).
    """

    basis1: ContractedRadialBasis
    basis2: ContractedRadialBasis
    angular: AngularGridSpec
    nodes: np.ndarray
    weights: np.ndarray
    j2: np.ndarray
    v_cut: float
    full_index: np.ndarray
    retained_of_full: np.ndarray
    potential: np.ndarray

    @property
    def shape(self):
        return (self.basis1.n_b, self.basis2.n_b, self.angular.n3)

    @property
    def n_retained(self):
        return len(self.full_index)

    @property
    def n_full(self):
        return int(np.prod(self.shape))

    def multi_index(self):
        return np.unravel_index(self.full_index, self.shape)

    def scatter(self, v):
        full = np.zeros(self.n_full)
        full[self.full_index] = v
        return full.reshape(self.shape)

    def gather(self, full):
        return full.reshape(-1)[self.full_index]

    def exchange_permutation(self):
        """Retained-point permutation for i1 <-> i2; fails if the grid is asymmetric."""
        n1, n2, n3 = self.shape
        if n1 != n2 or not np.allclose(
                self.basis1.podvr_points, self.basis2.podvr_points, atol=1e-12):
            raise GridError("grid is not symmetric under radial exchange")
        i1, i2, i3 = self.multi_index()
        swapped = np.ravel_multi_index((i2, i1, i3), self.shape)
        perm = self.retained_of_full[swapped]
        if np.any(perm < 0):
            raise GridError("retained set is not closed under radial exchange")
        return perm

    def content_hash(self):
        h = hashlib.sha256()
        for b in (self.basis1, self.basis2):
            h.update(np.asarray([b.spec.r_min, b.spec.r_max, b.spec.n, b.mass], float).tobytes())
            h.update(b.podvr_points.tobytes())
            h.update(b.eigenvalues.tobytes())
        h.update(np.asarray([self.angular.n3, self.v_cut], float).tobytes())
        h.update(self.full_index.tobytes())
        h.update(self.potential.tobytes())
        return h.hexdigest()


def prune_grid(basis1: ContractedRadialBasis, basis2: ContractedRadialBasis,
               angular: AngularGridSpec, potential: Callable,
               v_cut: float) -> TruncatedGrid:
    """Delete every direct-product point with V > V_cut.

    potential(R1, R2, theta) must accept broadcastable arrays (Radau
    coordinates; theta = arccos of the Legendre node).
    """
    nodes, weights, j2 = build_legendre_dvr(angular)
    R1 = basis1.podvr_points
    R2 = basis2.podvr_points
    theta = np.arccos(np.clip(nodes, -1.0, 1.0))
    G1, G2, G3 = np.meshgrid(R1, R2, theta, indexing="ij")
    v = np.asarray(potential(G1.ravel(), G2.ravel(), G3.ravel()), float)
    mask = v <= v_cut
    if not mask.any():
        raise GridError(f"no grid point lies at or below V_cut = {v_cut:g}")
    full_index = np.nonzero(mask)[0]
    retained_of_full = np.full(v.size, -1, dtype=np.int64)
    retained_of_full[full_index] = np.arange(full_index.size)
    return TruncatedGrid(
        basis1=basis1, basis2=basis2, angular=angular,
        nodes=nodes, weights=weights, j2=j2, v_cut=v_cut,
        full_index=full_index, retained_of_full=retained_of_full,
        potential=v[full_index])


def write_grid_manifest(path, grid: TruncatedGrid, extra: dict | None = None):
    """Key-value text manifest used to validate checkpoint compatibility."""
    b1, b2 = grid.basis1, grid.basis2
    lines = {
        "n1": b1.spec.n, "n2": b2.spec.n, "n3": grid.angular.n3,
        "n1b": b1.n_b, "n2b": b2.n_b,
        "r1_min": b1.spec.r_min, "r1_max": b1.spec.r_max,
        "r2_min": b2.spec.r_min, "r2_max": b2.spec.r_max,
        "v_cut": grid.v_cut,
        "retained": grid.n_retained,
        "full_product": grid.n_full,
        "inner_product": "plain coefficient dot product (DVR weights absorbed)",
        "content_hash": grid.content_hash(),
    }
    if extra:
        lines.update(extra)
    with open(path, "w") as fh:
        for k, v in lines.items():
            fh.write(f"{k} = {v}\n")
