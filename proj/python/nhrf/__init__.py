"""Python access to the nonholonomic Ricci-flow laboratory."""

import json as _json

from ._nhrf import (  # noqa: F401
    Error,
    NumericalError,
    ParseError,
    SymbolError,
    ValidationError,
    __version__,
    differentiate,
    evaluate,
    moments,
    plot_data,
    preset_text,
    presets,
    simplify,
    torus_trace,
    validate,
    validate_text,
)
from ._nhrf import run as _run


def run(scenario, stages=()):
    """Run a scenario file or preset; returns the parsed report plus raw output files."""
    out = _run(scenario, list(stages))
    out["report"] = _json.loads(out["report"])
    return out
