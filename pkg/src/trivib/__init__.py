"""Vibrational bound states of triatomic models, plus level statistics.

Submodules: pes (surfaces), dvr (grids), hamiltonian (matrix-free operator),
cheby (correlation sequence), hinv (harmonic inversion), stats (NNSD/Delta3),
config, pipeline, cli. Imported lazily so the CLI can pin thread counts
before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = ("pes", "dvr", "hamiltonian", "cheby", "hinv", "stats",
               "config", "pipeline", "cli", "constants")


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
