"""Spectral-convolution encoder for hyperspectral unmixing (Python bindings)."""

from ._core import (
    ConfigError,
    DscnError,
    FormatError,
    InputError,
    Model,
    NumericalError,
    fcls,
    gradcheck,
    load_model,
    read_abundance,
    read_cube,
    read_endmembers,
    rmse,
    simplex_project,
    synth_scene,
    train,
    write_abundance,
    write_cube,
    write_endmembers,
)

__all__ = [
    "ConfigError",
    "DscnError",
    "FormatError",
    "InputError",
    "Model",
    "NumericalError",
    "fcls",
    "gradcheck",
    "load_model",
    "read_abundance",
    "read_cube",
    "read_endmembers",
    "rmse",
    "simplex_project",
    "synth_scene",
    "train",
    "write_abundance",
    "write_cube",
    "write_endmembers",
]
