"""Diabatic model surfaces, switching-function corrections, adiabatic sheets.

Everything evaluates in atomic units (hartree, bohr, radians) and accepts
numpy arrays so grid construction can evaluate millions of geometries in one
call. A model is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaincc

from .constants import DEG

BOND = "bond"
RADAU = "radau"


class DomainError(ValueError):
    """Geometry outside a model's declared validity domain."""


@dataclass(frozen=True)
class Geometry:
    """A triatomic configuration.

    frame "bond": (r1, r2, bond angle beta); frame "radau": (R1, R2, Theta).
    """

    r1: float
    r2: float
    angle: float
    frame: str = BOND

    def __post_init__(self):
        if self.frame not in (BOND, RADAU):
            raise ValueError(f"unknown geometry frame {self.frame!r}")
        if not (self.r1 > 0 and self.r2 > 0):
            raise ValueError("bond/Radau lengths must be positive")
        if not (0.0 <= self.angle <= np.pi):
            raise ValueError("angle must lie in [0, pi]")


@dataclass(frozen=True)
class DiabaticTriple:
    v11: float
    v22: float
    v12: float


@dataclass(frozen=True)
class SwitchParams:
    """Canonical switch: blend weight w(x) = 1 - Q(a, |b| * s * (x - x0)).

    s = orientation: -1 activates the correction for x < x0, +1 for x > x0.
    w(x0) = 0, so the blended surface is continuous at the region boundary.
    """

    a: float
    b: float
    x0: float
    orientation: int

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("switch shape parameter a must be > 0")
        if self.b == 0:
            raise ValueError("switch rate b must be nonzero")
        if self.orientation not in (-1, 1):
            raise ValueError("orientation must be -1 or +1")

    def weight(self, x):
        arg = abs(self.b) * self.orientation * (np.asarray(x, float) - self.x0)
        return 1.0 - gamma_switch(arg, self.a)


@dataclass(frozen=True)
class Masses:
    """Nuclear masses in electron masses; atoms 1, 2 are the ends."""

    m1: float
    m2: float
    m_center: float

    def __post_init__(self):
        if min(self.m1, self.m2, self.m_center) <= 0:
            raise ValueError("masses must be positive")

    @property
    def total(self):
        return self.m1 + self.m2 + self.m_center


def gamma_switch(x, a):
    """Q(a, x) = 1 - P(a, x), clamped to 1 for x <= 0.

    Monotone nonincreasing in x, Q(a, 0) = 1, Q -> 0 as x -> inf.
    """
    if a <= 0:
        raise ValueError("gamma_switch requires a > 0")
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, gammaincc(a, np.where(x > 0, x, 0.0)), 1.0)
    return out if out.ndim else float(out)


def adiabatic_from_diabatic(t: DiabaticTriple):
    """Lower/upper adiabatic sheet energies (V_X, V_A) of a diabatic triple."""
    vx, va = adiabatic_arrays(t.v11, t.v22, t.v12)
    return float(vx), float(va)


def adiabatic_arrays(v11, v22, v12):
    mean = 0.5 * (np.asarray(v11, float) + v22)
    root = np.sqrt(0.25 * (np.asarray(v11, float) - v22) ** 2 + np.square(v12))
    return mean - root, mean + root


def _blend2(raw, w1, repl1, w2, repl2, repl12):
    """Bilinear two-switch blend, bitwise symmetric in the two sides."""
    cross = w1 * (1.0 - w2) * repl1 + (1.0 - w1) * w2 * repl2
    return (1.0 - w1) * (1.0 - w2) * raw + cross + w1 * w2 * repl12


@dataclass(frozen=True)
class SurfaceModel:
    """Raw diabatic evaluators plus the switching corrections of the build.

    Raw evaluators take broadcastable arrays (r1, r2, beta) in bond
    coordinates. Correction regions (all optional via config):

    * short-range wall on v11 for r_i < sr.x0, replacement
      wall_coeff*(r_i - sr.x0)^2 + v11_raw(sr.x0, r_other, beta);
    * hard value-freeze of v22 at r_i = v22_floor_radius for r_i below it
      (intentionally C0 only, outside any retained grid region);
    * angular taper of v12 to zero below ang_lo.x0 and above ang_hi.x0;
    * long-range blend of v11/v22 toward v_diss + v_no(r_other) beyond
      lr_v11.x0 / lr_v22.x0.
    """

    v11_raw: Callable
    v22_raw: Callable
    v12_raw: Callable
    v_no: Callable
    v_no_infinity: float
    v_diss: float
    masses: Masses
    sr_v11: SwitchParams
    wall_coeff: float
    v22_floor_radius: float
    ang_lo: SwitchParams
    ang_hi: SwitchParams
    lr_v11: SwitchParams
    lr_v22: SwitchParams
    r_valid: tuple = (0.3, 100.0)
    equilibrium: Geometry | None = None
    conical_intersection: Geometry | None = None
    params: dict = field(default_factory=dict)

    # -- validity -----------------------------------------------------------
    def check_domain(self, r1, r2):
        lo, hi = self.r_valid
        for name, r in (("r1", r1), ("r2", r2)):
            rmin = np.min(r)
            rmax = np.max(r)
            if rmin < lo:
                raise DomainError(f"{name}={rmin:g} below validity bound {lo:g} bohr")
            if rmax > hi:
                raise DomainError(f"{name}={rmax:g} above validity bound {hi:g} bohr")

    # -- corrected diabats --------------------------------------------------
    def diabatic_arrays(self, r1, r2, beta):
        """Corrected (v11, v22, v12) at bond-coordinate arrays."""
        r1 = np.asarray(r1, float)
        r2 = np.asarray(r2, float)
        beta = np.asarray(beta, float)
        self.check_domain(r1, r2)

        v11 = np.asarray(self.v11_raw(r1, r2, beta), float)
        v12 = np.asarray(self.v12_raw(r1, r2, beta), float)

        # v22 hard floor: freeze the value at the cut radius.
        rf = self.v22_floor_radius
        v22 = np.asarray(
            self.v22_raw(np.maximum(r1, rf), np.maximum(r2, rf), beta), float
        )

        # Radial corrections blend both bonds jointly (bilinear in the two
        # switch weights) so the result is exchange symmetric; each
        # single-sided limit reduces to the plain (1-w) raw + w replacement
        # form. The doubly-corrected corner uses its own replacement.

        # short-range quadratic wall on v11
        x0 = self.sr_v11.x0
        w1 = self.sr_v11.weight(r1)
        w2 = self.sr_v11.weight(r2)
        at1 = np.full_like(r1, x0)
        at2 = np.full_like(r2, x0)
        wall1 = self.wall_coeff * (r1 - x0) ** 2 + self.v11_raw(at1, r2, beta)
        wall2 = self.wall_coeff * (r2 - x0) ** 2 + self.v11_raw(r1, at2, beta)
        wall12 = (self.wall_coeff * ((r1 - x0) ** 2 + (r2 - x0) ** 2)
                  + self.v11_raw(at1, at2, beta))
        v11 = _blend2(v11, w1, wall1, w2, wall2, wall12)

        # long-range blend of the diagonal potentials toward the
        # single-channel dissociation limit (both bonds long: atomization)
        both = self.v_diss + self.v_no_infinity
        for sw, which in ((self.lr_v11, 0), (self.lr_v22, 1)):
            w1 = sw.weight(r1)
            w2 = sw.weight(r2)
            t1 = self.v_diss + self.v_no(r2)
            t2 = self.v_diss + self.v_no(r1)
            if which == 0:
                v11 = _blend2(v11, w1, t1, w2, t2, both)
            else:
                v22 = _blend2(v22, w1, t1, w2, t2, both)

        # angular taper of the coupling outside the band
        w_lo = self.ang_lo.weight(beta)
        w_hi = self.ang_hi.weight(beta)
        v12 = v12 * (1.0 - w_lo) * (1.0 - w_hi)

        return v11, v22, v12

    def ground_arrays(self, r1, r2, beta):
        vx, _ = adiabatic_arrays(*self.diabatic_arrays(r1, r2, beta))
        return vx


def apply_corrections(model: SurfaceModel, g: Geometry) -> DiabaticTriple:
    """Corrected diabatic triple at a bond-coordinate geometry."""
    if g.frame != BOND:
        raise ValueError("apply_corrections expects a bond-coordinate geometry")
    v11, v22, v12 = model.diabatic_arrays(g.r1, g.r2, g.angle)
    return DiabaticTriple(float(v11), float(v22), float(v12))


def ground_energy(model: SurfaceModel, g: Geometry) -> float:
    """Lower adiabatic sheet V_X; the potential used by all downstream modules."""
    vx, _ = adiabatic_from_diabatic(apply_corrections(model, g))
    return vx


# -- Radau <-> bond conversion ----------------------------------------------

def _radau_lambda(m: Masses):
    # canonical-point fraction: A = g + lam * (x_center - g)
    m3 = m.m_center
    return (np.sqrt(m3 * m.total) - m3) / (m.m1 + m.m2)


def radau_to_bond_arrays(R1, R2, theta, masses: Masses):
    """Bond coordinates (r1, r2, beta) from Radau arrays via the canonical point."""
    R1 = np.asarray(R1, float)
    R2 = np.asarray(R2, float)
    theta = np.asarray(theta, float)
    if np.any(R1 <= 0) or np.any(R2 <= 0):
        raise ValueError("Radau lengths must be positive")

    lam = _radau_lambda(masses)
    half = 0.5 * theta
    # canonical point at the origin; end atoms in the plane
    x1 = np.stack([R1 * np.cos(half), R1 * np.sin(half)])
    x2 = np.stack([R2 * np.cos(half), -R2 * np.sin(half)])
    # invert A = (1-lam) g + lam x_c  with A = 0
    denom = (1.0 - lam) * masses.m_center + lam * masses.total
    xc = -(1.0 - lam) * (masses.m1 * x1 + masses.m2 * x2) / denom

    d1 = x1 - xc
    d2 = x2 - xc
    r1 = np.sqrt((d1 ** 2).sum(axis=0))
    r2 = np.sqrt((d2 ** 2).sum(axis=0))
    if np.any(r1 <= 0) or np.any(r2 <= 0):
        raise ValueError("degenerate configuration: zero bond length")
    cosb = (d1 * d2).sum(axis=0) / (r1 * r2)
    beta = np.arccos(np.clip(cosb, -1.0, 1.0))
    return r1, r2, beta


def radau_to_bond(g: Geometry, masses: Masses) -> Geometry:
    if g.frame != RADAU:
        raise ValueError("radau_to_bond expects a Radau-frame geometry")
    r1, r2, beta = radau_to_bond_arrays(g.r1, g.r2, g.angle, masses)
    return Geometry(float(r1), float(r2), float(beta), frame=BOND)


def bond_to_radau_arrays(r1, r2, beta, masses: Masses):
    """Radau coordinates (R1, R2, Theta) from bond arrays."""
    r1 = np.asarray(r1, float)
    r2 = np.asarray(r2, float)
    beta = np.asarray(beta, float)
    lam = _radau_lambda(masses)
    # central atom at the origin
    x1 = np.stack([r1, np.zeros_like(r1)])
    x2 = np.stack([r2 * np.cos(beta), r2 * np.sin(beta)])
    g = (masses.m1 * x1 + masses.m2 * x2) / masses.total
    A = (1.0 - lam) * g
    d1 = x1 - A
    d2 = x2 - A
    R1 = np.sqrt((d1 ** 2).sum(axis=0))
    R2 = np.sqrt((d2 ** 2).sum(axis=0))
    cost = (d1 * d2).sum(axis=0) / (R1 * R2)
    theta = np.arccos(np.clip(cost, -1.0, 1.0))
    return R1, R2, theta


def bond_to_radau(g: Geometry, masses: Masses) -> Geometry:
    if g.frame != BOND:
        raise ValueError("bond_to_radau expects a bond-frame geometry")
    R1, R2, theta = bond_to_radau_arrays(g.r1, g.r2, g.angle, masses)
    return Geometry(float(R1), float(R2), float(theta), frame=RADAU)


def ground_energy_radau(model: SurfaceModel, R1, R2, theta):
    """V_X at Radau arrays; the composition used on DVR grids."""
    r1, r2, beta = radau_to_bond_arrays(R1, R2, theta, model.masses)
    return model.ground_arrays(r1, r2, beta)


# -- reference model ---------------------------------------------------------

REFERENCE_PARAMS = {
    # lower diabat: Morse stretches + bend parabola in cos(beta)
    "d1": 0.12, "a1": 1.1, "re1": 2.3, "f1": 0.08, "beta1_deg": 134.0,
    # upper diabat: offset + different Morse + bend about a different angle
    "e22": 0.02, "d2": 0.10, "a2": 1.3, "re2": 2.45, "f2": 0.08,
    "beta2_deg": 102.0,
    # antisymmetric-stretch coupling, vanishes at C2v geometries
    "c12": 0.02, "w12": 1.0,
    # diatomic fragment curve and dissociation energy (3.226 eV)
    "d_no": 0.08, "a_no": 1.2, "re_no": 2.3,
    "v_diss": 0.1185531,
    # switching corrections (shape/rate table)
    "sr_a": 1.1, "sr_b": 30.0, "sr_x0": 2.08, "wall_coeff": 6.00,
    "v22_floor_radius": 1.50,
    "ang_a": 2.0, "ang_b": 20.0, "ang_lo_deg": 71.0, "ang_hi_deg": 131.0,
    "lr_v11_a": 3.5, "lr_v11_b": 6.34902,
    "lr_v22_a": 2.0, "lr_v22_b": 2.09979,
    "lr_x0": 3.00,
    "r_valid_lo": 0.3, "r_valid_hi": 100.0,
    # masses (electron masses); desk-scale fictitious light atoms
    "mass_end": 400.0, "mass_center": 350.0,
}


def _morse(r, d, a, re):
    return d * np.square(1.0 - np.exp(-a * (np.asarray(r, float) - re)))


def build_reference_model(params: dict | None = None) -> SurfaceModel:
    """The shipped analytic two-sheet model.

    Two diabats crossing along the bend coordinate with an
    antisymmetric-stretch coupling; the conical-intersection bend angle is
    solved exactly from the crossing condition on the r1 = r2 = re1 line.
    """
    p = dict(REFERENCE_PARAMS)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ValueError(f"unknown surface parameters: {sorted(unknown)}")
        p.update(params)

    c1 = np.cos(p["beta1_deg"] * DEG)
    c2 = np.cos(p["beta2_deg"] * DEG)
    d1, a1, re1, f1 = p["d1"], p["a1"], p["re1"], p["f1"]
    e22, d2, a2, re2, f2 = p["e22"], p["d2"], p["a2"], p["re2"], p["f2"]
    c12, w12 = p["c12"], p["w12"]

    def v11_raw(r1, r2, beta):
        return (_morse(r1, d1, a1, re1) + _morse(r2, d1, a1, re1)
                + f1 * np.square(np.cos(beta) - c1))

    def v22_raw(r1, r2, beta):
        return (e22 + _morse(r1, d2, a2, re2) + _morse(r2, d2, a2, re2)
                + f2 * np.square(np.cos(beta) - c2))

    def v12_raw(r1, r2, beta):
        r1 = np.asarray(r1, float)
        gauss = np.exp(-w12 * ((r1 - re1) ** 2 + (np.asarray(r2, float) - re1) ** 2))
        return c12 * (r1 - np.asarray(r2, float)) * gauss * np.square(np.sin(beta))

    def v_no(r):
        return _morse(r, p["d_no"], p["a_no"], p["re_no"])

    # crossing of the two bend parabolas on the symmetric-stretch line:
    # f1 (c - c1)^2 = C2 + f2 (c - c2)^2 with C2 the stretch/offset gap at re1
    gap = e22 + 2.0 * _morse(re1, d2, a2, re2)
    qa = f1 - f2
    qb = -2.0 * (f1 * c1 - f2 * c2)
    qc = f1 * c1 ** 2 - f2 * c2 ** 2 - gap
    if abs(qa) < 1e-30:
        roots = [-qc / qb] if qb != 0 else []
    else:
        disc = qb ** 2 - 4 * qa * qc
        roots = [] if disc < 0 else [(-qb + s * np.sqrt(disc)) / (2 * qa) for s in (1, -1)]
    ci = None
    inside = [c for c in roots if -1.0 < c < 1.0]
    if inside:
        cx = min(inside, key=lambda c: abs(c - 0.5 * (c1 + c2)))
        ci = Geometry(re1, re1, float(np.arccos(cx)), frame=BOND)

    return SurfaceModel(
        v11_raw=v11_raw,
        v22_raw=v22_raw,
        v12_raw=v12_raw,
        v_no=v_no,
        v_no_infinity=p["d_no"],
        v_diss=p["v_diss"],
        masses=Masses(p["mass_end"], p["mass_end"], p["mass_center"]),
        sr_v11=SwitchParams(p["sr_a"], p["sr_b"], p["sr_x0"], -1),
        wall_coeff=p["wall_coeff"],
        v22_floor_radius=p["v22_floor_radius"],
        ang_lo=SwitchParams(p["ang_a"], p["ang_b"], p["ang_lo_deg"] * DEG, -1),
        ang_hi=SwitchParams(p["ang_a"], p["ang_b"], p["ang_hi_deg"] * DEG, +1),
        lr_v11=SwitchParams(p["lr_v11_a"], p["lr_v11_b"], p["lr_x0"], +1),
        lr_v22=SwitchParams(p["lr_v22_a"], p["lr_v22_b"], p["lr_x0"], +1),
        r_valid=(p["r_valid_lo"], p["r_valid_hi"]),
        equilibrium=Geometry(re1, re1, float(np.arccos(c1)), frame=BOND),
        conical_intersection=ci,
        params=p,
    )
