"""Phase-space propagation toolkit: Gabor-frame parametrix for Schrodinger
equations with rough (Sjostrand-class) symbols, at desk scale (d = 1).

Submodules are imported lazily so the CLI entry point can pin thread
environment variables before numpy-heavy modules load.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "conventions",
    "core",
    "tfa",
    "weyl",
    "hamflow",
    "parametrix",
    "reference",
    "nonlinear",
    "svgplot",
    "acceptance",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        mod = importlib.import_module(f".{name}", __name__)
        globals()[name] = mod
        return mod
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
