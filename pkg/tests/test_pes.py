import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from trivib.constants import DEG
from trivib import pes


def ref_model(**params):
    return pes.build_reference_model(params)


# -- adiabatic transform ------------------------------------------------------

@pytest.mark.parametrize("v11,v22,v12,vx,va", [
    (1.0, 2.0, 0.0, 1.0, 2.0),
    (0.0, 0.0, 0.5, -0.5, 0.5),
    (2.0, 4.0, np.sqrt(3.0), 1.0, 5.0),
])
def test_adiabatic_examples(v11, v22, v12, vx, va):
    got = pes.adiabatic_from_diabatic(pes.DiabaticTriple(v11, v22, v12))
    assert got == pytest.approx((vx, va), abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(hst.floats(-50, 50), hst.floats(-50, 50), hst.floats(-50, 50))
def test_adiabatic_order_and_trace(v11, v22, v12):
    vx, va = pes.adiabatic_from_diabatic(pes.DiabaticTriple(v11, v22, v12))
    assert vx <= va
    scale = max(abs(v11) + abs(v22), 1.0)
    assert abs((vx + va) - (v11 + v22)) <= 1e-14 * scale


def test_adiabatic_degenerate_iff():
    vx, va = pes.adiabatic_from_diabatic(pes.DiabaticTriple(1.3, 1.3, 0.0))
    assert vx == va
    vx, va = pes.adiabatic_from_diabatic(pes.DiabaticTriple(1.3, 1.3, 1e-8))
    assert vx < va


# -- gamma switch -------------------------------------------------------------

def quad_gamma_q(x, a):
    """Independent oracle: quadrature of the gamma integrand."""
    lower, _ = quad(lambda t: t ** (a - 1) * np.exp(-t), 0.0, x, limit=200)
    return 1.0 - lower / gamma_fn(a)


def test_gamma_switch_values():
    assert pes.gamma_switch(0.0, 1.1) == 1.0
    assert pes.gamma_switch(np.log(2.0), 1.0) == pytest.approx(0.5, abs=1e-12)
    # frozen from the quadrature oracle: Q(2, 3.5) = 4.5 e^{-3.5}
    assert pes.gamma_switch(3.5, 2.0) == pytest.approx(0.13588822540043325, abs=1e-12)
    assert pes.gamma_switch(3.5, 2.0) == pytest.approx(quad_gamma_q(3.5, 2.0), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(hst.floats(0.05, 8.0), hst.floats(-3.0, 30.0), hst.floats(0.0, 5.0))
def test_gamma_switch_monotone_bounded(a, x, dx):
    q1 = pes.gamma_switch(x, a)
    q2 = pes.gamma_switch(x + dx, a)
    assert 0.0 <= q2 <= q1 <= 1.0


def test_gamma_switch_rejects_bad_a():
    with pytest.raises(ValueError):
        pes.gamma_switch(1.0, 0.0)
    with pytest.raises(ValueError):
        pes.gamma_switch(1.0, -2.0)


# -- corrections --------------------------------------------------------------

def test_uncorrected_region_is_exact():
    m = ref_model()
    # inside region D, inside the angular band: every switch weight is 0
    r1, r2, beta = 2.2, 2.4, 100.0 * DEG
    t = pes.apply_corrections(m, pes.Geometry(r1, r2, beta))
    assert t.v11 == m.v11_raw(r1, r2, beta)
    assert t.v22 == m.v22_raw(r1, r2, beta)
    assert t.v12 == m.v12_raw(r1, r2, beta)


def test_long_range_limit():
    m = ref_model()
    t = pes.apply_corrections(m, pes.Geometry(30.0, 2.3, 2.0))
    assert t.v11 == pytest.approx(m.v_diss + float(m.v_no(2.3)), abs=1e-12)
    assert t.v22 == pytest.approx(m.v_diss + float(m.v_no(2.3)), abs=1e-12)


def test_v22_floor_freezes_value():
    m = ref_model()
    beta = 1.9
    frozen = pes.apply_corrections(m, pes.Geometry(1.2, 2.3, beta))
    at_cut = pes.apply_corrections(m, pes.Geometry(1.5, 2.3, beta))
    assert frozen.v22 == pytest.approx(at_cut.v22, rel=1e-12)


def test_angular_taper_c1_continuity():
    # central finite differences of v12 across the switch onset
    m = ref_model()
    for x0 in (m.ang_lo.x0, m.ang_hi.x0):
        for h in (1e-4, 1e-5):
            def v12(b):
                return pes.apply_corrections(m, pes.Geometry(2.3, 2.35, b)).v12
            inner = (v12(x0 + h) - v12(x0 - h)) / (2 * h)
            outer_side = (v12(x0 + 2 * h) - v12(x0 - 2 * h)) / (4 * h)
            assert abs(inner - outer_side) < 5e-3 * max(1.0, abs(inner))


@pytest.mark.parametrize("coord,x0", [
    ("r", 2.08),    # short-range wall onset
    ("r", 3.00),    # long-range switch onset
    ("beta", 71.0 * DEG),
    ("beta", 131.0 * DEG),
])
def test_switch_boundary_continuity_sweep(coord, x0):
    m = ref_model()
    span = 3.0 if coord == "r" else np.pi
    # |V(x0+eps) - V(x0-eps)| <= K eps across four decades of eps
    for eps_frac in (1e-3, 1e-4, 1e-5, 1e-6):
        eps = eps_frac * span
        if coord == "r":
            lo = pes.ground_energy(m, pes.Geometry(x0 - eps, 2.3, 2.0))
            hi = pes.ground_energy(m, pes.Geometry(x0 + eps, 2.3, 2.0))
        else:
            lo = pes.ground_energy(m, pes.Geometry(2.3, 2.35, x0 - eps))
            hi = pes.ground_energy(m, pes.Geometry(2.3, 2.35, x0 + eps))
        assert abs(hi - lo) <= 5.0 * eps


def test_domain_error_names_bound():
    m = ref_model()
    with pytest.raises(pes.DomainError, match="below validity bound"):
        pes.apply_corrections(m, pes.Geometry(0.05, 2.3, 2.0))
    with pytest.raises(pes.DomainError, match="r2"):
        m.diabatic_arrays(2.3, 150.0, 2.0)


# -- ground energy ------------------------------------------------------------

def test_zero_coupling_ground_is_min():
    m = ref_model(c12=0.0)
    rng = np.random.default_rng(3)
    for _ in range(25):
        g = pes.Geometry(rng.uniform(1.8, 2.9), rng.uniform(1.8, 2.9),
                         rng.uniform(0.9, 2.8))
        t = pes.apply_corrections(m, g)
        assert pes.ground_energy(m, g) == pytest.approx(min(t.v11, t.v22), abs=1e-14)


def test_conical_intersection_degeneracy():
    m = ref_model()
    ci = m.conical_intersection
    assert ci is not None
    t = pes.apply_corrections(m, ci)
    vx, va = pes.adiabatic_from_diabatic(t)
    assert va - vx == pytest.approx(0.0, abs=1e-13)
    assert 71.0 * DEG < ci.angle < 131.0 * DEG


def test_global_minimum_matches_declared_equilibrium():
    # dense-scan oracle over the well region
    m = ref_model()
    r = np.linspace(2.0, 2.7, 51)
    b = np.linspace(1.8, 2.9, 61)
    R1, R2, B = np.meshgrid(r, r, b, indexing="ij")
    v = m.ground_arrays(R1, R2, B)
    i, j, k = np.unravel_index(np.argmin(v), v.shape)
    eq = m.equilibrium
    assert abs(r[i] - eq.r1) <= r[1] - r[0]
    assert abs(r[j] - eq.r2) <= r[1] - r[0]
    assert abs(b[k] - eq.angle) <= b[1] - b[0]


def test_ground_energy_exchange_symmetric():
    m = ref_model()
    rng = np.random.default_rng(11)
    for _ in range(30):
        r1, r2 = rng.uniform(1.7, 3.4, 2)
        beta = rng.uniform(0.8, 2.9)
        a = pes.ground_energy(m, pes.Geometry(r1, r2, beta))
        b = pes.ground_energy(m, pes.Geometry(r2, r1, beta))
        assert a == pytest.approx(b, rel=1e-13, abs=1e-15)


# -- Radau <-> bond -----------------------------------------------------------

def test_radau_heavy_center_limit():
    masses = pes.Masses(400.0, 400.0, 1e9)
    g = pes.Geometry(2.1, 2.5, 1.9, frame=pes.RADAU)
    b = pes.radau_to_bond(g, masses)
    assert b.r1 == pytest.approx(2.1, rel=1e-6)
    assert b.r2 == pytest.approx(2.5, rel=1e-6)
    assert b.angle == pytest.approx(1.9, rel=1e-6)


def test_radau_exchange_symmetry():
    masses = pes.Masses(500.0, 500.0, 300.0)
    b = pes.radau_to_bond(pes.Geometry(2.3, 2.3, 2.1, frame=pes.RADAU), masses)
    assert b.r1 == pytest.approx(b.r2, rel=1e-14)


def test_radau_cartesian_roundtrip_oracle():
    """Rebuild Cartesian positions explicitly and round-trip to 1e-12."""
    masses = pes.Masses(420.0, 380.0, 333.0)
    g = pes.Geometry(2.31, 2.57, 1.77, frame=pes.BOND)

    # independent construction: central atom at origin, bond vectors in-plane
    x3 = np.zeros(2)
    x1 = np.array([g.r1, 0.0])
    x2 = g.r2 * np.array([np.cos(g.angle), np.sin(g.angle)])
    M = masses.m1 + masses.m2 + masses.m_center
    com = (masses.m1 * x1 + masses.m2 * x2 + masses.m_center * x3) / M
    lam = (np.sqrt(masses.m_center * M) - masses.m_center) / (masses.m1 + masses.m2)
    canonical = com + lam * (x3 - com)
    d1, d2 = x1 - canonical, x2 - canonical
    R1 = np.linalg.norm(d1)
    R2 = np.linalg.norm(d2)
    theta = np.arccos(d1 @ d2 / (R1 * R2))

    gr = pes.bond_to_radau(g, masses)
    assert gr.r1 == pytest.approx(R1, rel=1e-12)
    assert gr.r2 == pytest.approx(R2, rel=1e-12)
    assert gr.angle == pytest.approx(theta, rel=1e-12)

    back = pes.radau_to_bond(gr, masses)
    assert back.r1 == pytest.approx(g.r1, rel=1e-12)
    assert back.r2 == pytest.approx(g.r2, rel=1e-12)
    assert back.angle == pytest.approx(g.angle, rel=1e-12)


def test_radau_kinetic_diagonality():
    """Radau vectors diagonalize the kinetic energy with end-atom masses."""
    masses = pes.Masses(370.0, 510.0, 295.0)
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 2))
    v = rng.standard_normal((3, 2))
    mv = np.array([masses.m1, masses.m2, masses.m_center])
    # remove center-of-mass motion
    v -= (mv[:, None] * v).sum(axis=0) / mv.sum()
    ke = 0.5 * float((mv[:, None] * v * v).sum())

    M = mv.sum()
    com = (mv[:, None] * x).sum(axis=0) / M
    lam = (np.sqrt(masses.m_center * M) - masses.m_center) / (masses.m1 + masses.m2)
    dcom = (mv[:, None] * v).sum(axis=0) / M
    dcanon = dcom + lam * (v[2] - dcom)
    dR1 = v[0] - dcanon
    dR2 = v[1] - dcanon
    ke_radau = 0.5 * (masses.m1 * dR1 @ dR1 + masses.m2 * dR2 @ dR2)
    assert ke_radau == pytest.approx(ke, rel=1e-12)


def test_geometry_validation():
    with pytest.raises(ValueError):
        pes.Geometry(-1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        pes.Geometry(1.0, 2.0, 4.0)
    with pytest.raises(ValueError):
        pes.Geometry(1.0, 2.0, 1.0, frame="cartesian")
    with pytest.raises(ValueError):
        pes.radau_to_bond(pes.Geometry(2.0, 2.0, 2.0, frame=pes.BOND),
                          pes.Masses(1.0, 1.0, 1.0))


def test_switch_params_validation():
    with pytest.raises(ValueError):
        pes.SwitchParams(0.0, 1.0, 0.0, 1)
    with pytest.raises(ValueError):
        pes.SwitchParams(1.0, 0.0, 0.0, 1)
    with pytest.raises(ValueError):
        pes.SwitchParams(1.0, 1.0, 0.0, 2)
