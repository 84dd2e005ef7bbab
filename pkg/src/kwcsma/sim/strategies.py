"""Per-node contention strategies.

The simulator asks a strategy for a backoff counter (number of idle slot
boundaries to let pass before transmitting) after every transmission outcome
and whenever its attempt probability changes.  For memoryless strategies the
counter is geometric, which is the same as an independent attempt decision at
every idle slot boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..controllers import (
    ToraNodeState,
    WtopNodeState,
    tora_node_on_ack,
    tora_node_on_failure,
    wtop_node_on_ack,
)
from ..model import PhyMacConfig

__all__ = [
    "StrategySpec",
    "make_strategy",
    "PPersistent",
    "StdDcf",
    "RandomReset",
    "IdleSense",
    "WtopNode",
    "ToraNode",
    "NEVER",
]

NEVER = math.inf
KINDS = ("ppersistent", "stddcf", "randomreset", "idlesense", "wtop", "tora")


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    p: float = 0.0
    j: int = 0
    p0: float = 1.0
    target: float = 3.1
    decrease: float = 0.9
    increase: float = 0.001
    window: int = 200
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must lie in [0, 1]")
        if self.j < 0:
            raise ValueError("j must be non-negative")
        if self.kind == "idlesense":
            if not (self.target > 0 and 0 < self.decrease < 1 and self.increase > 0 and self.window >= 1):
                raise ValueError("invalid IdleSense parameters")

    @classmethod
    def ppersistent(cls, p: float, weight: float = 1.0) -> "StrategySpec":
        return cls("ppersistent", p=p, weight=weight)

    @classmethod
    def std_dcf(cls) -> "StrategySpec":
        return cls("stddcf")

    @classmethod
    def random_reset(cls, j: int, p0: float) -> "StrategySpec":
        return cls("randomreset", j=j, p0=p0)

    @classmethod
    def idle_sense(cls, target: float = 3.1, **kw) -> "StrategySpec":
        return cls("idlesense", target=target, **kw)

    @classmethod
    def wtop(cls, weight: float = 1.0) -> "StrategySpec":
        return cls("wtop", weight=weight)

    @classmethod
    def tora(cls) -> "StrategySpec":
        return cls("tora")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def geometric_backoff(p: float, rng) -> float:
    """Idle boundaries skipped before the first success of Bernoulli(p) trials."""
    if p >= 1.0:
        return 0
    if p <= 0.0:
        return NEVER
    return int(math.log(1.0 - rng.random()) / math.log1p(-p))


class _Strategy:
    listens = False  # takes the broadcast control payload from every ACK
    tracks_idle = False  # wants idle-slot observations
    memoryless = True

    def __init__(self, cfg: PhyMacConfig):
        self.cfg = cfg
        self._pending = None  # counter used by the per-slot interface

    @property
    def attempt_prob(self) -> float:
        raise NotImplementedError

    def draw_backoff(self, rng):
        return geometric_backoff(self.attempt_prob, rng)

    def on_slot_boundary(self, rng) -> bool:
        """Per-slot interface: True means attempt in this slot."""
        if self.memoryless:
            return rng.random() < self.attempt_prob
        if self._pending is None:
            self._pending = self.draw_backoff(rng)
        if self._pending == 0:
            self._pending = None
            return True
        self._pending -= 1
        return False

    def on_success(self, payload, rng):
        pass

    def on_failure(self, rng):
        pass

    def on_broadcast(self, payload) -> bool:
        """Returns True when the attempt behaviour changed."""
        return False


class PPersistent(_Strategy):
    def __init__(self, cfg, p: float):
        super().__init__(cfg)
        self.p = p

    @property
    def attempt_prob(self):
        return self.p


class StdDcf(_Strategy):
    """Binary exponential backoff with a uniform counter in [0, CW_i - 1]."""

    memoryless = False

    def __init__(self, cfg):
        super().__init__(cfg)
        self.stage = 0

    @property
    def cw(self) -> int:
        return min(self.cfg.cw_min << self.stage, self.cfg.cw_max)

    @property
    def attempt_prob(self):
        return 2.0 / (self.cw + 1)

    def draw_backoff(self, rng):
        return int(rng.random() * self.cw)

    def on_success(self, payload, rng):
        self.stage = 0

    def on_failure(self, rng):
        self.stage = min(self.stage + 1, self.cfg.m_stages)


class ToraNode(_Strategy):
    """RandomReset backoff whose (p0, j) arrive in the node's own ACKs."""

    def __init__(self, cfg, state: Optional[ToraNodeState] = None):
        super().__init__(cfg)
        self.state = state or ToraNodeState(cw_min=cfg.cw_min, m_stages=cfg.m_stages)

    @property
    def stage(self) -> int:
        return self.state.i

    @property
    def attempt_prob(self):
        return self.state.attempt_prob

    def on_success(self, payload, rng):
        p0, j = payload if payload is not None else (self.state.p0, self.state.j)
        self.state = tora_node_on_ack(self.state, p0, j, rng)

    def on_failure(self, rng):
        self.state = tora_node_on_failure(self.state)


class RandomReset(ToraNode):
    """RandomReset(j; p0) with fixed parameters."""

    def __init__(self, cfg, j: int, p0: float):
        if not 0 <= j <= cfg.m_stages - 1:
            raise ValueError(f"RandomReset stage must lie in [0, {cfg.m_stages - 1}]")
        super().__init__(cfg, ToraNodeState(cw_min=cfg.cw_min, m_stages=cfg.m_stages, i=j, j=j, p0=p0))

    def on_success(self, payload, rng):
        self.state = tora_node_on_ack(self.state, self.state.p0, self.state.j, rng)


class IdleSense(PPersistent):
    """p-persistent access with AIMD steering of the sensed idle slots per transmission."""

    tracks_idle = True

    def __init__(self, cfg, target=3.1, decrease=0.9, increase=0.001, window=200):
        super().__init__(cfg, 2.0 / cfg.cw_min)
        self.target, self.decrease, self.increase, self.window = target, decrease, increase, window

    def on_idle_window(self, mean_idle: float) -> bool:
        old = self.p
        if mean_idle < self.target:
            self.p *= self.decrease
        elif mean_idle > self.target:
            self.p = min(1.0, self.p + self.increase)
        return self.p != old


class WtopNode(_Strategy):
    listens = True

    def __init__(self, cfg, weight: float = 1.0):
        super().__init__(cfg)
        self.state = WtopNodeState(weight=weight)

    @property
    def attempt_prob(self):
        return self.state.p_t

    def on_broadcast(self, payload) -> bool:
        old = self.state.p_t
        self.state = wtop_node_on_ack(self.state, payload)
        return self.state.p_t != old


def make_strategy(spec: StrategySpec, cfg: PhyMacConfig) -> _Strategy:
    k = spec.kind
    if k == "ppersistent":
        return PPersistent(cfg, spec.p)
    if k == "stddcf":
        return StdDcf(cfg)
    if k == "randomreset":
        return RandomReset(cfg, spec.j, spec.p0)
    if k == "idlesense":
        return IdleSense(cfg, spec.target, spec.decrease, spec.increase, spec.window)
    if k == "wtop":
        return WtopNode(cfg, spec.weight)
    return ToraNode(cfg)
