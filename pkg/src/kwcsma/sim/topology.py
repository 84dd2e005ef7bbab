"""Node placement and carrier-sensing sets.  The AP sits at the origin."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Topology", "place_ring", "place_disc", "build_topology"]


def place_ring(N: int, radius_m: float) -> np.ndarray:
    """N points equally spaced on a circle, the first one on the +x axis."""
    if N < 1 or not radius_m > 0:
        raise ValueError("need N >= 1 and a positive radius")
    angles = 2 * np.pi * np.arange(N) / N
    return radius_m * np.column_stack([np.cos(angles), np.sin(angles)])


def place_disc(N: int, radius_m: float, seed: int) -> np.ndarray:
    """N i.i.d. area-uniform points on a disc; deterministic per seed."""
    if N < 1 or not radius_m > 0:
        raise ValueError("need N >= 1 and a positive radius")
    rng = np.random.default_rng(seed)
    r = radius_m * np.sqrt(rng.uniform(size=N))
    theta = rng.uniform(0, 2 * np.pi, size=N)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


@dataclass(frozen=True)
class Topology:
    positions: np.ndarray
    sense_radius_m: float
    tx_radius_m: float
    sense_sets: tuple = field(repr=False)
    hidden_pairs: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def fully_connected(self) -> bool:
        return self.hidden_pairs == 0

    def to_dict(self) -> dict:
        return {
            "positions": np.asarray(self.positions).tolist(),
            "sense_radius_m": self.sense_radius_m,
            "tx_radius_m": self.tx_radius_m,
            "sense_sets": [sorted(s) for s in self.sense_sets],
            "hidden_pairs": self.hidden_pairs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return build_topology(np.asarray(d["positions"], dtype=float), d["sense_radius_m"], d["tx_radius_m"])


def build_topology(positions, sense_radius_m: float, tx_radius_m: float) -> Topology:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        raise ValueError("topology needs at least one node")
    dist_ap = np.hypot(pos[:, 0], pos[:, 1])
    far = np.flatnonzero(dist_ap > tx_radius_m + 1e-9)
    if far.size:
        i = int(far[0])
        raise ValueError(f"node {i} is {dist_ap[i]:.2f} m from the AP, beyond tx radius {tx_radius_m} m")
    d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    hears = d <= sense_radius_m
    np.fill_diagonal(hears, True)
    sense_sets = tuple(frozenset(np.flatnonzero(row).tolist()) for row in hears)
    hidden = int((~hears[np.triu_indices(len(pos), 1)]).sum())
    return Topology(pos, float(sense_radius_m), float(tx_radius_m), sense_sets, hidden)
