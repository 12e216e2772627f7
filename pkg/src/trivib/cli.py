"""Command-line interface.

Subcommands: pes-eval, grid-build, spectrum, invert, stats, oracle, compare.
Heavy imports happen inside the handlers so that --threads can pin the BLAS
thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _set_threads(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(args):
    from .config import RunConfig
    if not args.config:
        raise SystemExit("this subcommand requires --config")
    cfg = RunConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        from pathlib import Path
        cfg.out_dir = Path(args.out)
    return cfg


def _parities(cfg, args):
    if args.parity:
        return ("even", "odd") if args.parity == "both" else (args.parity,)
    return cfg.parities()


def cmd_pes_eval(args):
    import numpy as np

    from .constants import DEG
    from .pes import (Geometry, adiabatic_from_diabatic, apply_corrections,
                      build_reference_model)
    cfg = _load_config(args)
    model = build_reference_model(cfg.pes_params)
    lines = (open(args.geoms).read() if args.geoms else sys.stdin.read()).splitlines()
    scale = DEG if args.degrees else 1.0
    print(f"{'r1':>10} {'r2':>10} {'angle':>10} {'V11':>14} {'V22':>14} "
          f"{'V12':>14} {'V_X':>14} {'V_A':>14}")
    for line in lines:
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        r1, r2, ang = (float(x) for x in parts[:3])
        g = Geometry(r1, r2, ang * scale)
        t = apply_corrections(model, g)
        vx, va = adiabatic_from_diabatic(t)
        print(f"{r1:10.5f} {r2:10.5f} {ang:10.5f} {t.v11:14.8f} {t.v22:14.8f} "
              f"{t.v12:14.8f} {vx:14.8f} {va:14.8f}")
    return 0


def cmd_grid_build(args):
    from .dvr import write_grid_manifest
    from .pipeline import build_grid
    cfg = _load_config(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_grid(cfg, args.vcut_index)
    path = cfg.out_dir / f"grid_vcut{args.vcut_index}.manifest"
    write_grid_manifest(path, bundle.grid, extra={"vcut_index": args.vcut_index})
    g = bundle.grid
    print(f"grid: {g.shape[0]} x {g.shape[1]} x {g.shape[2]} -> "
          f"{g.n_retained} retained of {g.n_full} "
          f"({100.0 * g.n_retained / g.n_full:.1f}%)")
    for w in bundle.plan.warnings:
        print(f"warning: {w}")
    print(f"manifest: {path}")
    return 0


def _progress_printer(label):
    state = {"t0": time.time(), "last": 0.0}

    def report(step, total):
        now = time.time()
        if now - state["last"] < 2.0 and step < total:
            return
        state["last"] = now
        rate = 2.0 * step / max(now - state["t0"], 1e-9)   # coefficients/sec
        eta = (total - step) / max(step / (now - state["t0"]), 1e-9)
        print(f"\r{label}: step {step}/{total} "
              f"({rate:.0f} coeff/s, ETA {eta:.0f}s)", end="", flush=True)
        if step >= total:
            print()
    return report


def cmd_spectrum(args):
    from .pipeline import build_grid, make_hamiltonian, run_sequence
    cfg = _load_config(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_grid(cfg, args.vcut_index)
    h = make_hamiltonian(cfg, bundle)
    for parity in _parities(cfg, args):
        label = f"vcut{args.vcut_index} {parity}"
        seq = run_sequence(cfg, h, args.vcut_index, parity,
                           resume=args.resume,
                           progress=_progress_printer(label))
        print(f"{label}: {seq.n_coeffs} coefficients "
              f"(shift={seq.shift:.6g}, half_width={seq.half_width:.6g})")
    return 0


def cmd_invert(args):
    from .cheby import CheckpointError, ChebyshevSequence, read_checkpoint
    from .pipeline import (build_grid, extract_levels, levels_path,
                           sequence_path)
    cfg = _load_config(args)
    bundle = build_grid(cfg, args.vcut_index)
    for parity in _parities(cfg, args):
        path = sequence_path(cfg, args.vcut_index, parity)
        header, c_done, _, _ = read_checkpoint(path)
        if header["n_done"] <= header["n_coeffs"] - 1:
            raise CheckpointError(
                f"{path}: sequence incomplete ({header['n_done']} of "
                f"{header['n_coeffs']} coefficients); run spectrum --resume")
        seq = ChebyshevSequence(
            coeffs=c_done[:header["n_coeffs"]], grid_hash=header["grid_hash"],
            shift=header["shift"], half_width=header["half_width"],
            parity=parity, seed=header["seed"], steps_done=header["steps"])
        if seq.grid_hash != bundle.grid.content_hash():
            raise CheckpointError(f"{path}: sequence belongs to a different grid")
        levels = extract_levels(cfg, bundle, seq,
                                provenance={"grid_hash": seq.grid_hash,
                                            "parity": parity,
                                            "v_cut": bundle.v_cut})
        levels.to_csv(levels_path(cfg, args.vcut_index, parity, "csv"))
        levels.to_json(levels_path(cfg, args.vcut_index, parity, "json"))
        print(f"{parity}: {len(levels)} levels -> "
              f"{levels_path(cfg, args.vcut_index, parity, 'csv')}")
    return 0


def cmd_oracle(args):
    from .pipeline import oracle_diagonalize
    cfg = _load_config(args)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    levels = oracle_diagonalize(cfg, args.vcut_index, max_points=args.max_points)
    base = cfg.out_dir / f"oracle_vcut{args.vcut_index}"
    levels.to_csv(f"{base}.csv")
    levels.to_json(f"{base}.json")
    even = int((levels.parities == "even").sum())
    odd = int((levels.parities == "odd").sum())
    print(f"oracle: {len(levels)} levels below V_cut ({even} even, {odd} odd)")
    print(f"-> {base}.csv")
    return 0


def _read_levels(path):
    from .hinv import LevelList
    return LevelList.from_json(path) if str(path).endswith(".json") \
        else LevelList.from_csv(path)


def cmd_stats(args):
    import numpy as np

    from . import stats as st
    from pathlib import Path
    levels = _read_levels(args.levels)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    summary = {"source": str(args.levels), "count": len(levels)}
    parities = [args.parity] if args.parity and args.parity != "both" \
        else sorted(set(levels.parities.tolist()))
    for parity in parities:
        e = levels.select_parity(parity)
        if e.size < 10:
            print(f"{parity}: only {e.size} levels, skipped")
            continue
        tag = f"_{parity}"
        u = st.unfold(e, method=args.unfold)
        if e.size >= 50:
            r = st.nnsd(u, bins=args.bins)
            st.write_nnsd_csv(out / f"nnsd{tag}.csv", r)
            summary[f"{parity}.nnsd"] = {
                "ks_poisson": r.ks_poisson, "ks_wigner": r.ks_wigner,
                "sse_poisson": r.sse_poisson, "sse_wigner": r.sse_wigner,
                "better": r.better,
            }
        if e.size >= args.window:
            centers, values = st.sliding_delta3(e, window=args.window,
                                                step=args.step)
            st.write_sliding_csv(out / f"delta3_sliding{tag}.csv", centers, values)
            summary[f"{parity}.delta3_sliding_mean"] = float(values.mean())
        lmax = min(args.lmax, max(2, e.size // 3))
        Ls = np.unique(np.linspace(2, lmax, 12).astype(int))
        avg = st.averaged_delta3(e, (e[0], e[-1]), Ls)
        st.write_averaged_csv(out / f"delta3_averaged{tag}.csv", avg)
        summary[f"{parity}.delta3_at_Lmax"] = float(avg["mean"][-1])
    st.write_summary_json(out / "stats_summary.json", summary)
    print(f"stats -> {out}")
    return 0


def cmd_compare(args):
    from .pipeline import compare_runs, write_compare_csv
    from pathlib import Path
    a = _read_levels(args.levels_a)
    b = _read_levels(args.levels_b)
    result = compare_runs(a, b, window=args.window)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_compare_csv(out / "compare.csv", result)
    print(f"matched {result['matched']}/{result['total_a']} levels")
    for w in result["warnings"]:
        print(f"warning: {w}")
    print(f"-> {out / 'compare.csv'}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="trivib",
        description="Vibrational bound states by Chebyshev correlation + "
                    "harmonic inversion, with level statistics.")
    p.add_argument("--threads", type=int, default=0,
                   help="pin BLAS/OpenMP thread count")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run configuration file")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="override run.seed")

    sp = sub.add_parser("pes-eval", help="print V11 V22 V12 V_X V_A for geometries")
    common(sp)
    sp.add_argument("--geoms", help="text file: r1 r2 angle per line (default stdin)")
    sp.add_argument("--degrees", action="store_true", help="angles are in degrees")
    sp.set_defaults(func=cmd_pes_eval)

    sp = sub.add_parser("grid-build", help="build the grid and write its manifest")
    common(sp)
    sp.add_argument("--vcut-index", type=int, default=0)
    sp.set_defaults(func=cmd_grid_build)

    sp = sub.add_parser("spectrum", help="generate the Chebyshev sequence")
    common(sp)
    sp.add_argument("--vcut-index", type=int, default=0)
    sp.add_argument("--parity", choices=["even", "odd", "both"])
    sp.add_argument("--resume", action="store_true",
                    help="continue from the sequence checkpoint")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("invert", help="harmonic inversion of a stored sequence")
    common(sp)
    sp.add_argument("--vcut-index", type=int, default=0)
    sp.add_argument("--parity", choices=["even", "odd", "both"])
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("oracle", help="dense-diagonalization cross-check")
    common(sp)
    sp.add_argument("--vcut-index", type=int, default=0)
    sp.add_argument("--max-points", type=int, default=3000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("stats", help="NNSD and Delta3 analysis of a level list")
    common(sp, config=False)
    sp.add_argument("--levels", required=True, help="LevelList CSV or JSON")
    sp.add_argument("--parity", choices=["even", "odd", "both"])
    sp.add_argument("--unfold", default="polynomial",
                    choices=["none", "polynomial", "local"])
    sp.add_argument("--bins", type=int, default=30)
    sp.add_argument("--window", type=int, default=100)
    sp.add_argument("--step", type=int, default=10)
    sp.add_argument("--lmax", type=int, default=100)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("compare", help="median error/density between two runs")
    common(sp, config=False)
    sp.add_argument("--levels-a", required=True)
    sp.add_argument("--levels-b", required=True)
    sp.add_argument("--window", type=int, default=100)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads:
        _set_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
