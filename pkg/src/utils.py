"""Utility functions shared across modules."""
from __future__ import annotations
from typing import List
import numpy as np

# Substream ids for derive_rng. Fixed: changing them changes every result.
STREAM_DATA = 0
STREAM_SPLIT = 1
STREAM_ENSEMBLE = 2
STREAM_RESAMPLE = 3
STREAM_BOOTSTRAP = 4
STREAM_TEST_POINTS = 5
STREAM_FOLDS = 6


def derive_rng(master_seed: int, stream: int, rep_id: int = 0, run_id: int = 0) -> np.random.Generator:
    """Derive an independent random stream from the master seed.

    The stream is ``default_rng(SeedSequence(master_seed, spawn_key=(stream, rep_id, run_id)))``,
    so every (stream, repetition, run) triple gets its own generator no matter
    which worker executes it or in which order.

    Args:
        master_seed: Experiment master seed.
        stream: One of the STREAM_* constants.
        rep_id: Repetition (or fold) index.
        run_id: Training run index inside the repetition.

    Returns:
        A fresh numpy Generator.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(rep_id), int(run_id)))
    return np.random.default_rng(seq)


def format_method(method: str) -> str:
    """Format a band method tag for display.

    Example: 'prop_ks' -> 'Prop-KS', 'naive' -> 'Naive'
    """
    labels = {'naive': 'Naive', 'ks': 'KS', 'prop_ks': 'Prop-KS'}
    return labels.get(method, method.replace('_', ' ').title())


def parse_csv_list(text: str, cast=str) -> List:
    """Split a comma-separated CLI value into a typed list, ignoring blanks."""
    return [cast(item.strip()) for item in text.split(',') if item.strip()]


def format_level(level: float) -> str:
    """Render a nominal level as a percentage label, e.g. 0.9 -> '90%'."""
    return f"{level * 100:g}%"
