"""Synthesis and template classification of single-particle diffraction patterns."""

from ._fxisort import (
    Error,
    bench,
    c_error,
    classify,
    diffract,
    evaluate,
    generate,
    load_dataset,
    spearman,
    train_ei,
)

__all__ = [
    "Error",
    "bench",
    "c_error",
    "classify",
    "diffract",
    "evaluate",
    "generate",
    "load_dataset",
    "spearman",
    "train_ei",
]
