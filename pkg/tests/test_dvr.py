import numpy as np
import pytest

from trivib import dvr
from trivib.constants import HARTREE_EV, MASS_O16


# -- sinc-DVR -----------------------------------------------------------------

def test_sinc_matrix_symmetry_and_diagonal():
    spec = dvr.RadialGridSpec(0.0, 9.0, 10)
    pts, T = dvr.build_sinc_dvr(spec, mass=1.0)
    assert np.allclose(T, T.T, atol=0)
    assert T[0, 0] == pytest.approx(np.pi ** 2 / 6.0, abs=1e-12)  # 1.64493...
    assert T[2, 5] == pytest.approx((-1.0) ** 3 / 9.0, abs=1e-14)
    assert np.allclose(pts, np.arange(10.0))


def test_sinc_positive_semidefinite():
    spec = dvr.RadialGridSpec(0.0, 10.0, 64)
    _, T = dvr.build_sinc_dvr(spec, mass=3.0)
    assert np.linalg.eigvalsh(T).min() >= -1e-10


def test_sinc_box_spectrum_accuracy():
    # The truncated infinite-line sinc operator has soft walls about one
    # spacing outside the end points: the box ground state converges only
    # algebraically (measured ~2% at n=201, the documented behavior).
    exact = np.pi ** 2 / 800.0
    errs = []
    for n in (201, 801):
        spec = dvr.RadialGridSpec(0.0, 20.0, n)
        _, T = dvr.build_sinc_dvr(spec, mass=1.0)
        e1 = np.linalg.eigvalsh(T)[0]
        errs.append(abs(e1 - exact) / exact)
    assert errs[0] < 0.025
    assert errs[1] < errs[0] / 2.0  # converges with n


def test_sinc_harmonic_oscillator():
    spec = dvr.RadialGridSpec(-10.0, 10.0, 129)
    pts, T = dvr.build_sinc_dvr(spec, mass=1.0)
    evals = np.linalg.eigvalsh(T + np.diag(0.5 * pts ** 2))
    assert np.abs(evals[:10] - (np.arange(10) + 0.5)).max() < 1e-10


def test_sinc_morse_closed_form():
    # D=10, a=1, re=2, m=40: lowest 15 of 28 bound levels
    D, a, re, m = 10.0, 1.0, 2.0, 40.0
    spec = dvr.RadialGridSpec(0.5, 9.0, 201)
    pts, T = dvr.build_sinc_dvr(spec, m)
    V = D * (1.0 - np.exp(-a * (pts - re))) ** 2
    evals = np.linalg.eigvalsh(T + np.diag(V))
    w = a * np.sqrt(2.0 * D / m)
    v = np.arange(15)
    exact = w * (v + 0.5) - w ** 2 / (4.0 * D) * (v + 0.5) ** 2
    assert (np.abs(evals[:15] - exact) / exact).max() < 1e-8


def test_radial_spec_validation():
    with pytest.raises(ValueError):
        dvr.RadialGridSpec(2.0, 1.0, 10)
    with pytest.raises(ValueError):
        dvr.RadialGridSpec(1.0, 2.0, 1)
    with pytest.raises(ValueError):
        dvr.build_sinc_dvr(dvr.RadialGridSpec(0, 1, 4), mass=-1.0)


# -- Legendre-DVR --------------------------------------------------------------

def test_legendre_single_function():
    nodes, weights, j2 = dvr.build_legendre_dvr(dvr.AngularGridSpec(1))
    assert nodes[0] == pytest.approx(0.0, abs=1e-15)
    assert j2.shape == (1, 1)
    assert j2[0, 0] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("n3", [4, 10, 40])
def test_legendre_j2_spectrum_exact(n3):
    _, _, j2 = dvr.build_legendre_dvr(dvr.AngularGridSpec(n3))
    j = np.arange(n3)
    assert np.abs(np.linalg.eigvalsh(j2) - j * (j + 1)).max() < 1e-10


def test_rigid_rotor_levels():
    _, _, j2 = dvr.build_legendre_dvr(dvr.AngularGridSpec(40))
    evals = np.linalg.eigvalsh(0.5 * j2)   # 1/(2I) j^2 with I = 1
    j = np.arange(40)
    assert np.abs(evals - 0.5 * j * (j + 1)).max() < 1e-9


# -- contraction ---------------------------------------------------------------

def harmonic_cut(omega=1.0, mass=1.0, center=5.0):
    return lambda r: 0.5 * mass * omega ** 2 * (np.asarray(r, float) - center) ** 2


def test_contract_infinite_cutoff_complete():
    spec = dvr.RadialGridSpec(0.0, 10.0, 41)
    pts, T = dvr.build_sinc_dvr(spec, 2.0)
    basis = dvr.contract_radial(spec, T, harmonic_cut(mass=2.0), np.inf, 2.0)
    assert basis.n_b == spec.n
    eye = basis.transform.T @ basis.transform
    assert np.abs(eye - np.eye(spec.n)).max() < 1e-12
    # potential-optimized grid reduces to the primitive grid
    assert np.abs(basis.podvr_points - pts).max() < 1e-8
    assert np.abs(basis.kinetic - T).max() < 1e-8


def test_contract_harmonic_count():
    # cutoff 5.2 hw above the minimum keeps exactly the 5 levels n+1/2 <= 5.2
    spec = dvr.RadialGridSpec(-8.0, 18.0, 261)
    _, T = dvr.build_sinc_dvr(spec, 1.0)
    basis = dvr.contract_radial(spec, T, harmonic_cut(), 5.2, 1.0)
    assert basis.n_b == 5
    assert np.abs(basis.eigenvalues - (np.arange(5) + 0.5)).max() < 1e-8


def test_contract_cutoff_below_ground_state():
    spec = dvr.RadialGridSpec(-8.0, 18.0, 101)
    _, T = dvr.build_sinc_dvr(spec, 1.0)
    with pytest.raises(dvr.GridError, match="below the 1D ground state"):
        dvr.contract_radial(spec, T, harmonic_cut(), 0.1, 1.0)


def test_contract_reproducible_bitwise():
    spec = dvr.RadialGridSpec(0.5, 6.5, 81)
    _, T = dvr.build_sinc_dvr(spec, 700.0)
    cut = harmonic_cut(omega=0.02, mass=700.0, center=3.0)
    a = dvr.contract_radial(spec, T, cut, 0.4, 700.0)
    b = dvr.contract_radial(spec, T, cut, 0.4, 700.0)
    assert a.n_b == b.n_b
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.podvr_points, b.podvr_points)
    assert np.array_equal(a.kinetic, b.kinetic)


# -- kinetic-energy sizing ------------------------------------------------------

def test_tmax_radial_values():
    assert dvr.tmax_radial(1.0, np.pi) == pytest.approx(0.5, abs=1e-14)
    # O-16 radial grid of the production-scale protocol: ~4.57 eV
    t = dvr.tmax_radial(MASS_O16, 4.0 / 126.0)
    assert t == pytest.approx(0.168, abs=2e-3)
    assert t * HARTREE_EV == pytest.approx(4.57, abs=0.02)


def test_tmax_angular_magnitude():
    # n3 = 275, R0 = 2.1 bohr (production-scale Radau radius), R2 = inf
    t = dvr.tmax_angular(MASS_O16, 2.1, np.inf, np.pi / 275)
    assert t * HARTREE_EV == pytest.approx(8.0, abs=0.2)
    # finite R2 adds the second rotational term
    t2 = dvr.tmax_angular(MASS_O16, 2.1, 2.1, np.pi / 275)
    assert t2 == pytest.approx(2.0 * t, rel=1e-12)


def test_tmax_scaling_with_n():
    # doubling n for fixed extents quarters dR^2 and quadruples tmax
    lo, hi = 1.0, 5.0
    t1 = dvr.tmax_radial(10.0, (hi - lo) / 100)
    t2 = dvr.tmax_radial(10.0, (hi - lo) / 200)
    assert t2 == pytest.approx(4.0 * t1, rel=1e-12)


def quartic_cut(r):
    r = np.asarray(r, float)
    return 0.05 * (r - 3.0) ** 4


def test_size_grids_monotone_in_vcut():
    cuts = (quartic_cut, quartic_cut)
    masses = (500.0, 500.0)
    plans = [dvr.size_grids_for_vcut(v, cuts, masses, r0=3.0)
             for v in (0.02, 0.05, 0.1)]
    n1 = [p.radial1.n for p in plans]
    n3 = [p.angular.n3 for p in plans]
    widths = [p.radial1.r_max - p.radial1.r_min for p in plans]
    assert n1 == sorted(n1)
    assert n3 == sorted(n3)
    assert widths == sorted(widths)


def test_size_grids_tmax_consistency():
    plan = dvr.size_grids_for_vcut(0.05, (quartic_cut, quartic_cut),
                                   (500.0, 500.0), r0=3.0)
    t_ang = dvr.tmax_angular(500.0, 3.0, np.inf, plan.angular.spacing)
    t_rad = dvr.tmax_radial(500.0, plan.radial1.spacing)
    assert t_ang >= 0.05
    assert t_rad >= t_ang * 0.99   # equal within one grid step


def test_size_grids_vcut_below_minimum():
    with pytest.raises(dvr.GridError, match="not above the 1D minimum"):
        dvr.size_grids_for_vcut(-1.0, (quartic_cut, quartic_cut),
                                (500.0, 500.0), r0=3.0)


def test_size_grids_ceiling_warning():
    def shallow(r):
        r = np.asarray(r, float)
        return 0.05 * (1.0 - np.exp(-(r - 3.0))) ** 2
    plan = dvr.size_grids_for_vcut(0.06, (shallow, shallow), (500.0, 500.0),
                                   r0=3.0, r_ceiling=8.0, scan_range=(0.6, 8.0))
    assert plan.warnings
    assert "capped" in plan.warnings[0]
    assert plan.radial1.r_max <= 8.0


# -- pruning -------------------------------------------------------------------

def small_3d_pieces(mass=600.0, n=41, cutoff=1.0):
    spec = dvr.RadialGridSpec(1.2, 4.8, n)
    _, T = dvr.build_sinc_dvr(spec, mass)
    cut = harmonic_cut(omega=0.02, mass=mass, center=3.0)
    basis = dvr.contract_radial(spec, T, cut, cutoff, mass)
    ang = dvr.AngularGridSpec(9)
    return basis, ang


def model_potential(R1, R2, theta):
    # symmetric well in the radial coordinates plus a bend term
    return (0.5 * 600.0 * 0.02 ** 2 * ((R1 - 3.0) ** 2 + (R2 - 3.0) ** 2)
            + 0.02 * (np.cos(theta) + 0.3) ** 2)


def test_prune_infinite_vcut_keeps_all():
    basis, ang = small_3d_pieces(cutoff=0.35)
    grid = dvr.prune_grid(basis, basis, ang, model_potential, np.inf)
    assert grid.n_retained == basis.n_b ** 2 * ang.n3
    assert np.array_equal(grid.retained_of_full[grid.full_index],
                          np.arange(grid.n_retained))


def test_prune_matches_brute_force_scan():
    basis, ang = small_3d_pieces(cutoff=0.35)
    v_cut = 0.06
    grid = dvr.prune_grid(basis, basis, ang, model_potential, v_cut)
    # independent full scan
    nodes, _, _ = dvr.build_legendre_dvr(ang)
    count = 0
    for i, r1 in enumerate(basis.podvr_points):
        for j, r2 in enumerate(basis.podvr_points):
            for k, x in enumerate(nodes):
                if model_potential(r1, r2, np.arccos(x)) <= v_cut:
                    count += 1
    assert grid.n_retained == count
    assert np.all(grid.potential <= v_cut)
    # deleted points all exceed V_cut
    full_mask = np.zeros(grid.n_full, bool)
    full_mask[grid.full_index] = True
    i1, i2, i3 = np.unravel_index(np.nonzero(~full_mask)[0], grid.shape)
    v_del = model_potential(basis.podvr_points[i1], basis.podvr_points[i2],
                            np.arccos(nodes[i3]))
    assert np.all(v_del > v_cut)


def test_prune_retained_fraction_monotone():
    basis, ang = small_3d_pieces(cutoff=0.35)
    counts = [dvr.prune_grid(basis, basis, ang, model_potential, v).n_retained
              for v in (0.02, 0.05, 0.1, np.inf)]
    assert counts == sorted(counts)


def test_prune_empty_grid_error():
    basis, ang = small_3d_pieces(cutoff=0.35)
    with pytest.raises(dvr.GridError, match="V_cut"):
        dvr.prune_grid(basis, basis, ang, model_potential, -1.0)


def test_exchange_permutation_involution():
    basis, ang = small_3d_pieces(cutoff=0.35)
    grid = dvr.prune_grid(basis, basis, ang, model_potential, 0.06)
    perm = grid.exchange_permutation()
    assert np.array_equal(perm[perm], np.arange(grid.n_retained))
    # the retained point set maps onto itself under i1 <-> i2
    i1, i2, i3 = grid.multi_index()
    assert np.array_equal(i1[perm], i2)
    assert np.array_equal(i3[perm], i3)


def test_grid_manifest_roundtrip(tmp_path):
    basis, ang = small_3d_pieces(cutoff=0.35)
    grid = dvr.prune_grid(basis, basis, ang, model_potential, 0.06)
    path = tmp_path / "grid.manifest"
    dvr.write_grid_manifest(path, grid, extra={"vcut_index": 0})
    text = path.read_text()
    assert f"retained = {grid.n_retained}" in text
    assert f"content_hash = {grid.content_hash()}" in text
    assert "n3 = 9" in text
