"""Phase-diversity aberration estimation (Python bindings of the C++ core)."""

from ._phasediv import (
    ConfigError,
    ExcessiveFailures,
    OpticalConfig,
    Stack,
    estimate,
    noll_to_nm,
    psf,
    read_stack,
    run_experiment,
    rwe,
    simulate,
    ssim,
    write_stack,
    wrms,
    zernike_value,
)

__all__ = [
    "ConfigError",
    "ExcessiveFailures",
    "OpticalConfig",
    "Stack",
    "estimate",
    "noll_to_nm",
    "psf",
    "read_stack",
    "run_experiment",
    "rwe",
    "simulate",
    "ssim",
    "write_stack",
    "wrms",
    "zernike_value",
]
