"""End-to-end orchestration: grid build, sequence, inversion, comparisons.

Each (V_cut, parity) pair produces one LevelList (CSV + JSON) plus a
key-value manifest with content hashes and operation counts. Level files are
bit-reproducible for fixed config, seeds, and thread count; wall-clock
timings go only into the manifest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import cheby, dvr, hinv
from .config import RunConfig
from .hamiltonian import (ScaledHamiltonian, exchange_apply, make_scaled,
                          random_parity_vector)
from .hinv import LevelList
from .pes import (SurfaceModel, bond_to_radau, build_reference_model,
                  ground_energy_radau)


@dataclass
class GridBundle:
    model: SurfaceModel
    grid: dvr.TruncatedGrid
    plan: dvr.GridPlan
    v_cut: float


def build_grid(config: RunConfig, vcut_index: int = 0) -> GridBundle:
    """Size, contract, and prune the grid for one V_cut of the config."""
    model = build_reference_model(config.pes_params)
    v_cut = config.vcut_list[vcut_index]
    masses = model.masses
    eq = bond_to_radau(model.equilibrium, masses)
    r0, r0b, th0 = eq.r1, eq.r2, eq.angle

    def cut1(R):
        return ground_energy_radau(model, R, np.full_like(np.asarray(R, float), r0b), th0)

    def cut2(R):
        return ground_energy_radau(model, np.full_like(np.asarray(R, float), r0), R, th0)

    g = config.grid
    plan = dvr.size_grids_for_vcut(
        v_cut, (cut1, cut2), (masses.m1, masses.m2), r0=r0,
        pad_frac=g["pad_frac"], r_ceiling=g["r_ceiling"],
        scan_range=(g["scan_lo"], g["scan_hi"]),
        tmax_factor=g["tmax_factor"])
    if g["n_radial_override"]:
        n = int(g["n_radial_override"])
        plan.radial1 = dvr.RadialGridSpec(plan.radial1.r_min, plan.radial1.r_max, n)
        plan.radial2 = dvr.RadialGridSpec(plan.radial2.r_min, plan.radial2.r_max, n)
    if g["n3_override"]:
        plan.angular = dvr.AngularGridSpec(int(g["n3_override"]))

    cutoff = g["contraction_cutoff_factor"] * v_cut
    bases = []
    for spec, cut, mass in ((plan.radial1, cut1, masses.m1),
                            (plan.radial2, cut2, masses.m2)):
        _, kin = dvr.build_sinc_dvr(spec, mass)
        bases.append(dvr.contract_radial(spec, kin, cut, cutoff, mass))

    def potential(R1, R2, theta):
        return ground_energy_radau(model, R1, R2, theta)

    grid = dvr.prune_grid(bases[0], bases[1], plan.angular, potential, v_cut)
    return GridBundle(model=model, grid=grid, plan=plan, v_cut=v_cut)


def make_hamiltonian(config: RunConfig, bundle: GridBundle) -> ScaledHamiltonian:
    return make_scaled(bundle.grid,
                       delta=config.cheby["delta"],
                       probe_iters=int(config.cheby["probe_iters"]),
                       seed=config.seed)


def sequence_path(config: RunConfig, vcut_index: int, parity: str):
    return config.out_dir / f"seq_vcut{vcut_index}_{parity}.ckpt"


def levels_path(config: RunConfig, vcut_index: int, parity: str, ext: str):
    return config.out_dir / f"levels_vcut{vcut_index}_{parity}.{ext}"


def run_sequence(config: RunConfig, h: ScaledHamiltonian, vcut_index: int,
                 parity: str, resume: bool = False, progress=None):
    path = sequence_path(config, vcut_index, parity)
    if resume and path.exists():
        return cheby.resume(path, h,
                            checkpoint_stride=int(config.cheby["checkpoint_stride"]),
                            progress=progress)
    xi0 = random_parity_vector(h.grid, parity, config.seed)
    return cheby.generate_sequence(
        h, xi0, config.n_coeffs, seed=config.seed, checkpoint_path=path,
        checkpoint_stride=int(config.cheby["checkpoint_stride"]),
        progress=progress)


def extract_levels(config: RunConfig, bundle: GridBundle,
                   seq: cheby.ChebyshevSequence,
                   provenance: dict | None = None) -> LevelList:
    """Windowed inversion with half-sequence validation, merge, and polish.

    By default the whole certified spectral range is inverted (the polish
    step fits the complete cosine model, so no line may be left out of the
    window plan); e_floor/e_top in the config restrict the range when only a
    band is wanted.
    """
    hv = config.hinv
    return hinv.extract_spectrum(
        seq,
        e_floor=-np.inf if hv["e_floor"] is None else hv["e_floor"],
        e_top=np.inf if hv["e_top"] is None else hv["e_top"],
        basis_size=int(hv["basis_size"]),
        overlap=hv["overlap"],
        basis_spacing=hv["basis_spacing"],
        svd_tol=hv["svd_tol"],
        interior=hv["interior"],
        amplitude_floor=hv["amplitude_floor"],
        polish=hv["polish"],
        provenance=provenance)


def run_pipeline(config: RunConfig, resume: bool = False, progress=None) -> dict:
    """Full multi-cutoff, multi-parity run; returns the manifest dict."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"n_coeffs": config.n_coeffs, "seed": config.seed}
    for i, v_cut in enumerate(config.vcut_list):
        t0 = time.time()
        bundle = build_grid(config, i)
        dvr.write_grid_manifest(config.out_dir / f"grid_vcut{i}.manifest",
                                bundle.grid, extra={"vcut_index": i})
        h = make_hamiltonian(config, bundle)
        manifest[f"vcut{i}.value"] = v_cut
        manifest[f"vcut{i}.retained"] = bundle.grid.n_retained
        manifest[f"vcut{i}.grid_hash"] = bundle.grid.content_hash()
        manifest[f"vcut{i}.grid_seconds"] = round(time.time() - t0, 3)
        for parity in config.parities():
            t1 = time.time()
            seq = run_sequence(config, h, i, parity, resume=resume,
                               progress=progress)
            prov = {
                "grid_hash": seq.grid_hash,
                "vcut_index": i,
                "v_cut": v_cut,
                "parity": parity,
                "seed": config.seed,
                "n_coeffs": seq.n_coeffs,
                "shift": seq.shift,
                "half_width": seq.half_width,
                "config": {k: repr(v) for k, v in sorted(config.raw.items())},
            }
            levels = extract_levels(config, bundle, seq, provenance=prov)
            levels.to_csv(levels_path(config, i, parity, "csv"))
            levels.to_json(levels_path(config, i, parity, "json"))
            manifest[f"vcut{i}.{parity}.levels"] = len(levels)
            manifest[f"vcut{i}.{parity}.applies"] = h.counters["applies"]
            manifest[f"vcut{i}.{parity}.seconds"] = round(time.time() - t1, 3)
    path = config.out_dir / "run.manifest"
    with open(path, "w") as fh:
        for k, v in manifest.items():
            fh.write(f"{k} = {v}\n")
    return manifest


def oracle_diagonalize(config: RunConfig, vcut_index: int = 0,
                       max_points: int = 3000,
                       bundle: GridBundle | None = None) -> LevelList:
    """Dense diagonalization of the same operator apply_h exposes.

    Assembles the matrix column by column from unit vectors, so any defect in
    the matrix-free path shows up as a discrepancy here, not a shared bug.
    """
    if bundle is None:
        bundle = build_grid(config, vcut_index)
    grid = bundle.grid
    n = grid.n_retained
    if n > max_points:
        raise ValueError(
            f"grid has {n} retained points, above the oracle limit "
            f"{max_points}; shrink V_cut or raise max_points")
    h = make_scaled(grid, delta=config.cheby["delta"],
                    probe_iters=int(config.cheby["probe_iters"]),
                    seed=config.seed)
    H = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        H[:, j] = h.apply_raw(e)
        e[j] = 0.0
    H = 0.5 * (H + H.T)
    evals, evecs = np.linalg.eigh(H)

    # parity labels from eigenvector symmetry, rotating degenerate clusters
    parities = np.empty(n, dtype=object)
    scale = max(abs(evals[0]), abs(evals[-1]), 1e-300)
    clusters = []
    start = 0
    for i in range(1, n + 1):
        if i == n or evals[i] - evals[i - 1] > 1e-11 * scale:
            clusters.append((start, i))
            start = i
    for (a, b) in clusters:
        block = evecs[:, a:b]
        pb = np.column_stack([exchange_apply(grid, block[:, k])
                              for k in range(b - a)])
        if b - a > 1:
            sym = block.T @ pb
            w, rot = np.linalg.eigh(0.5 * (sym + sym.T))
            block = block @ rot
            pb = pb @ rot
        for k in range(b - a):
            plus = np.linalg.norm(pb[:, k] - block[:, k])
            minus = np.linalg.norm(pb[:, k] + block[:, k])
            parities[a + k] = "even" if plus <= minus else "odd"
        evecs[:, a:b] = block

    keep = evals <= grid.v_cut
    return LevelList(
        energies=evals[keep],
        amplitudes=np.full(int(keep.sum()), np.nan),
        errors=np.zeros(int(keep.sum())),
        parities=parities[keep],
        window_ids=np.full(int(keep.sum()), -1),
        provenance={"oracle": "dense diagonalization",
                    "grid_hash": grid.content_hash(),
                    "v_cut": grid.v_cut})


def compare_runs(levels_a, levels_b, window: int = 100, tol: float | None = None):
    """Median error and density per window of matched levels.

    Greedy nearest matching within tol (default: half the local mean
    spacing); returns a dict of arrays plus warnings when matching is poor.
    """
    ea = np.asarray(levels_a.energies if hasattr(levels_a, "energies") else levels_a,
                    float)
    eb = np.asarray(levels_b.energies if hasattr(levels_b, "energies") else levels_b,
                    float)
    if ea.size < 2 or eb.size < 2:
        raise ValueError("need at least two levels on each side")
    used = np.zeros(eb.size, bool)
    pairs = []
    for i, e in enumerate(ea):
        j = int(np.searchsorted(eb, e))
        best, dist = -1, np.inf
        for cand in (j - 1, j, j + 1):
            if 0 <= cand < eb.size and not used[cand]:
                d = abs(eb[cand] - e)
                if d < dist:
                    best, dist = cand, d
        if best < 0:
            continue
        if tol is None:
            lo = max(0, i - 2)
            hi = min(ea.size - 1, i + 2)
            local = (ea[hi] - ea[lo]) / max(hi - lo, 1)
            limit = 0.5 * local
        else:
            limit = tol
        if dist <= limit:
            used[best] = True
            pairs.append((e, dist))

    warnings = []
    rate = len(pairs) / ea.size
    if rate < 0.9:
        unmatched = [f"{e:.8g}" for e in ea if not any(abs(p[0] - e) < 1e-300 for p in pairs)]
        warnings.append(
            f"match rate {rate:.1%} below 90%; unmatched: {', '.join(unmatched[:20])}")

    centers, med_err, med_density = [], [], []
    for start in range(0, len(pairs) - window + 1, window):
        chunk = pairs[start:start + window]
        es = np.array([p[0] for p in chunk])
        ds = np.array([p[1] for p in chunk])
        centers.append(float(np.median(es)))
        med_err.append(float(np.median(ds)))
        gaps = np.diff(es)
        med_density.append(float(np.median(1.0 / gaps[gaps > 0])))
    return {
        "window_center": np.asarray(centers),
        "median_abs_error": np.asarray(med_err),
        "median_density": np.asarray(med_density),
        "matched": len(pairs),
        "total_a": int(ea.size),
        "warnings": warnings,
    }


def write_compare_csv(path, result: dict):
    import csv as _csv
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["window_center", "median_abs_error", "median_density"])
        for row in zip(result["window_center"], result["median_abs_error"],
                       result["median_density"]):
            w.writerow([f"{x:.12e}" for x in row])
