"""Aggregate metrics of a finished simulation run."""
from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np

from .engine import SimReport

__all__ = ["Metrics", "jain_index", "report_metrics"]


class Metrics(NamedTuple):
    total_bps: float
    node_bps: np.ndarray
    normalized_bps: np.ndarray  # per-node throughput divided by weight
    idle_slots: float  # NaN when undefined
    idle_defined: bool
    jain: float  # Jain index of the normalized throughputs, 1 = perfectly fair
    max_rel_spread: float  # max |x - mean| / mean of the normalized throughputs


def jain_index(x) -> float:
    """(sum x)^2 / (n sum x^2); 1 for equal shares, 1/n when one node takes everything."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one value")
    sq = float((x * x).sum())
    if sq == 0.0:
        return 1.0
    return float(x.sum()) ** 2 / (x.size * sq)


def report_metrics(report: SimReport, weights=None, nodes=None) -> Metrics:
    """Throughput and fairness aggregates; ``nodes`` restricts the fairness terms."""
    node = report.node_throughput_bps
    idx = np.arange(len(node)) if nodes is None else np.asarray(nodes, dtype=int)
    w = np.ones(len(node)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != node.shape or np.any(w <= 0):
        raise ValueError("weights must be positive, one per node")
    norm = node / w
    sel = norm[idx]
    mean = float(sel.mean()) if sel.size else 0.0
    spread = float(np.max(np.abs(sel - mean)) / mean) if mean > 0 else math.nan
    idle = report.mean_idle_slots
    return Metrics(
        total_bps=float(node.sum()),
        node_bps=node,
        normalized_bps=norm,
        idle_slots=idle,
        idle_defined=not math.isnan(idle),
        jain=jain_index(sel) if sel.size else math.nan,
        max_rel_spread=spread,
    )
