"""Reject-option wrapper: abstain when 1 - max softmax reaches the threshold."""

from __future__ import annotations

import numpy as np

from .data import Dataset, RegionSpec, region_mask
from .nets import ModelParams, predict_probs

ABSTAIN = None  # sentinel returned by gate() when the model declines to predict


def gate(probs: np.ndarray, tau: float):
    """Return the argmax label when uncertainty 1 - max(probs) < tau, else ABSTAIN.

    Ties at the threshold abstain; argmax ties break to the lowest index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    g = 1.0 - probs.max()
    if g < tau:
        return int(probs.argmax())
    return ABSTAIN


def abstention_rate(probs: np.ndarray, tau: float) -> float:
    """Fraction of rows abstained for a batch of probability vectors."""
    g = 1.0 - probs.max(axis=1)
    return float(np.mean(g >= tau))


def abstention_stats(model: ModelParams, data: Dataset, region: RegionSpec,
                     tau: float):
    """(rate_inside, rate_outside); a side with no rows reports None."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    probs = predict_probs(model, data.X)
    mask = region_mask(data, region)
    inside = abstention_rate(probs[mask], tau) if mask.any() else None
    outside = abstention_rate(probs[~mask], tau) if (~mask).any() else None
    return inside, outside
