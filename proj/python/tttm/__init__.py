"""Tool-to-tool matching scores for equipment fleets."""

import json

from ._tttm import (
    dbscan,
    detrend,
    graph_edit_distance,
    knee_epsilon,
    load_tsum,
    mann_kendall,
    periodogram,
    score,
    spearman,
    wasserstein1,
)
from . import _tttm


def synth(spec):
    """Generate a fleet from a spec dict. Returns (tsum_csv_text, truth_dict)."""
    csv, truth = _tttm.synth_json(json.dumps(spec))
    return csv, json.loads(truth)


def run_pipeline(config):
    """Run the end-to-end pipeline from a config dict and return the run report."""
    return json.loads(_tttm.run_pipeline_json(json.dumps(config)))


__all__ = [
    "dbscan",
    "detrend",
    "graph_edit_distance",
    "knee_epsilon",
    "load_tsum",
    "mann_kendall",
    "periodogram",
    "run_pipeline",
    "score",
    "spearman",
    "synth",
    "wasserstein1",
]
