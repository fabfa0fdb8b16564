"""Loss functions and the four evaluation regimes.

Evaluation either stays in bucket space (abstracted: predictions against
encoded targets over live buckets) or maps predictions back to hands
(unabstracted: decoded predictions against the solver's raw CVs over valid
hands).  Each regime runs on the train and test split, giving four reports
per encoding.  Losses are pooled means over every live entry.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .encoding import KIND_DIRECT, decode_cv

REGIMES = (
    "abstracted-train",
    "unabstracted-train",
    "abstracted-test",
    "unabstracted-test",
)


def huber(residual, delta: float = 1.0):
    """Elementwise Huber loss: quadratic inside delta, linear outside."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    r = np.abs(np.asarray(residual, dtype=np.float64))
    return np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))


def mse(residual):
    """Elementwise squared error."""
    r = np.asarray(residual, dtype=np.float64)
    return r * r


@dataclass
class LossReport:
    encoding: str
    regime: str
    huber: float
    mse: float
    n_examples: int
    n_hands: int


def _abstracted_residuals(predictions, encoded):
    for pred, enc in zip(predictions, encoded):
        pred = np.asarray(pred, dtype=np.float64)
        if pred.shape != enc.targets.shape:
            raise ValueError(f"prediction shape {pred.shape} != target shape {enc.targets.shape}")
        yield (pred - enc.targets)[enc.mask]


def _unabstracted_residuals(predictions, examples, mapping_for):
    for pred, ex in zip(predictions, examples):
        pred = np.asarray(pred, dtype=np.float64)
        mapping = mapping_for(ex.spec)
        K = mapping.num_buckets
        if pred.shape != (2 * K,):
            raise ValueError(f"prediction shape {pred.shape} != (2*{K},)")
        valid = mapping.valid_mask()
        for half, cv in ((pred[:K], ex.cvs.v1), (pred[K:], ex.cvs.v2)):
            yield (decode_cv(half, mapping) - np.asarray(cv))[valid]


def evaluate(predictions, examples, encoded, mapping_for, kind: str, regime: str) -> LossReport:
    """Score per-example predictions under one regime.

    predictions: sequence of target-shaped vectors, one per example.
    examples / encoded: the raw and encoded dataset slices, same order.
    mapping_for(spec): the example's bucket mapping (unused for direct).

    The direct encoding has no bucket space, so both regimes run the
    identical hand-space comparison.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if len(predictions) != len(encoded) or len(predictions) != len(examples):
        raise ValueError("predictions, examples and encoded lengths differ")
    if len(predictions) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if regime.startswith("abstracted") or kind == KIND_DIRECT:
        chunks = _abstracted_residuals(predictions, encoded)
    else:
        chunks = _unabstracted_residuals(predictions, examples, mapping_for)
    h_sum = 0.0
    s_sum = 0.0
    count = 0
    for residual in chunks:
        h_sum += float(np.sum(huber(residual)))
        s_sum += float(np.sum(mse(residual)))
        count += residual.size
    return LossReport(
        encoding=kind,
        regime=regime,
        huber=h_sum / count,
        mse=s_sum / count,
        n_examples=len(predictions),
        n_hands=count,
    )


_CSV_FIELDS = ("encoding", "regime", "huber", "mse", "n_examples")


def append_reports(path, reports) -> None:
    """Append LossReport rows to a results CSV, writing the header once."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(_CSV_FIELDS)
        for r in reports:
            writer.writerow([r.encoding, r.regime, repr(r.huber), repr(r.mse), r.n_examples])


def read_reports(path) -> list[LossReport]:
    out = []
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
        for row in csv.DictReader(lines):
            out.append(
                LossReport(
                    encoding=row["encoding"],
                    regime=row["regime"],
                    huber=float(row["huber"]),
                    mse=float(row["mse"]),
                    n_examples=int(row["n_examples"]),
                    n_hands=0,
                )
            )
    return out
