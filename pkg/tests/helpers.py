"""Glue between the frame-level oracles and package types."""

import numpy as np

from diarkit.formats import Annotation, ScoringRegions, Turn

from .oracles import FRAME, frames_to_intervals


def to_annotation(rec, activity):
    turns = []
    for spk, mask in activity.items():
        for a, b in frames_to_intervals(mask):
            turns.append(Turn(rec, a * FRAME, (b - a) * FRAME, spk))
    return Annotation(rec, tuple(turns))


def to_regions(rec, mask):
    return ScoringRegions(rec, tuple((a * FRAME, b * FRAME) for a, b in frames_to_intervals(mask)))


def random_model(rng, d, scale=1.0):
    from diarkit.plda import PldaModel

    A = rng.standard_normal((d, d))
    B = rng.standard_normal((d, d))
    sb = scale * A @ A.T / d
    sw = B @ B.T / d + 0.1 * np.eye(d)
    return PldaModel(rng.standard_normal(d), sb, sw)
