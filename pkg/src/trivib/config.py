"""Run configuration: a flat dotted-key = value text format.

Lines are `section.key = value`; `#` starts a comment. Values may be numbers,
booleans, strings, or comma-separated number lists. Unknown keys are
rejected so typos fail loudly. configs/desk.cfg in the repository documents
every key inline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .pes import REFERENCE_PARAMS


class ConfigError(ValueError):
    pass


_RUN_DEFAULTS = {
    "run.vcut_list": None,              # hartree; required, at least one
    "run.accuracy_goal": 1e-4,          # relative, measured from the minimum
    "run.parity": "both",               # even | odd | both
    "run.seed": 11,
    "run.n_coeffs": 16000,
    "run.out_dir": "runs/out",
    "grid.contraction_cutoff_factor": 2.0,
    "grid.pad_frac": 0.15,
    "grid.tmax_factor": 1.0,
    "grid.r_ceiling": 12.0,
    "grid.scan_lo": 0.8,
    "grid.scan_hi": 12.0,
    "grid.n_radial_override": 0,        # 0 = V_cut protocol
    "grid.n3_override": 0,
    "cheby.checkpoint_stride": 2000,
    "cheby.delta": 2e-3,
    "cheby.probe_iters": 60,
    "hinv.basis_size": 32,
    "hinv.overlap": 0.5,
    "hinv.basis_spacing": 1e-3,         # window basis pitch in omega (rad)
    "hinv.svd_tol": 1e-12,
    "hinv.amplitude_floor": 1e-8,
    "hinv.interior": 0.5,
    "hinv.polish": "full",              # full | amplitudes | none
    "hinv.e_floor": None,               # default: whole certified range
    "hinv.e_top": None,
}


def _coerce(text: str):
    t = text.strip()
    if "," in t:
        return [_coerce(x) for x in t.split(",") if x.strip()]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


@dataclass
class RunConfig:
    """Validated knobs for an end-to-end run."""

    pes_params: dict
    vcut_list: list
    accuracy_goal: float
    parity: str
    seed: int
    n_coeffs: int
    out_dir: Path
    grid: dict
    cheby: dict
    hinv: dict
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(parse_config_text(Path(path).read_text()), source=str(path))

    @classmethod
    def from_dict(cls, entries: dict, source: str = "<dict>") -> "RunConfig":
        pes_params = {}
        rest = {}
        for key, value in entries.items():
            if key.startswith("pes."):
                name = key[4:]
                if name not in REFERENCE_PARAMS:
                    raise ConfigError(f"{source}: unknown surface parameter {key!r}")
                pes_params[name] = value
            elif key in _RUN_DEFAULTS:
                rest[key] = value
            else:
                raise ConfigError(f"{source}: unknown key {key!r}")

        merged = dict(_RUN_DEFAULTS)
        merged.update(rest)

        vcuts = merged["run.vcut_list"]
        if vcuts is None:
            raise ConfigError(f"{source}: run.vcut_list is required")
        if not isinstance(vcuts, list):
            vcuts = [vcuts]
        if not vcuts:
            raise ConfigError(f"{source}: run.vcut_list must name at least one V_cut")
        vcuts = [float(v) for v in vcuts]

        goal = float(merged["run.accuracy_goal"])
        if not 0.0 < goal < 1.0:
            raise ConfigError(f"{source}: run.accuracy_goal must lie in (0, 1)")

        parity = str(merged["run.parity"])
        if parity not in ("even", "odd", "both"):
            raise ConfigError(f"{source}: run.parity must be even, odd, or both")

        n_coeffs = int(merged["run.n_coeffs"])
        if n_coeffs < 2 or n_coeffs % 2:
            raise ConfigError(f"{source}: run.n_coeffs must be even and >= 2")

        def section(prefix):
            return {k.split(".", 1)[1]: v for k, v in merged.items()
                    if k.startswith(prefix + ".")}

        return cls(
            pes_params=pes_params,
            vcut_list=vcuts,
            accuracy_goal=goal,
            parity=parity,
            seed=int(merged["run.seed"]),
            n_coeffs=n_coeffs,
            out_dir=Path(merged["run.out_dir"]),
            grid=section("grid"),
            cheby=section("cheby"),
            hinv=section("hinv"),
            raw=dict(entries),
        )

    def parities(self):
        return ("even", "odd") if self.parity == "both" else (self.parity,)
