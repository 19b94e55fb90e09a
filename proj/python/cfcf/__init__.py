"""Correlation filter feature learning and tracking."""

from ._cfcf import (
    apply_filter,
    cf_loss,
    circ_correlate,
    dft2,
    evaluate,
    iou,
    make_desired_response,
    run_cli,
    solve_filter,
    track_sequence,
)

__all__ = [
    "apply_filter",
    "cf_loss",
    "circ_correlate",
    "dft2",
    "evaluate",
    "iou",
    "make_desired_response",
    "run_cli",
    "solve_filter",
    "track_sequence",
]
