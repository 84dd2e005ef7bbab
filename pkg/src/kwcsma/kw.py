"""Kiefer-Wolfowitz stochastic maximiser with two-sided probes.

States are immutable; every operation returns a new state.  Gains are
a_k = 1/k and b_k = 1/k^(1/3), which satisfy sum a_k = inf,
sum a_k b_k < inf and sum (a_k/b_k)^2 < inf.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

__all__ = [
    "Phase",
    "KwState",
    "ToraState",
    "kw_new",
    "kw_probe",
    "kw_report",
    "tora_new",
    "tora_step",
    "ITERATE_MARGIN",
    "LOG_FLOOR",
    "log_domain",
    "kw_maximize",
]

#: p_val is kept this far inside [lo, hi] after every update.
ITERATE_MARGIN = 1e-3


class Phase(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class KwState:
    k: int
    p_val: float
    phase: Phase
    lo: float
    hi: float
    s_plus: Optional[float] = None

    @property
    def a_k(self) -> float:
        return 1.0 / self.k

    @property
    def b_k(self) -> float:
        return self.k ** (-1.0 / 3.0)


def kw_new(initial: float, lo: float, hi: float) -> KwState:
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo!r} hi={hi!r}")
    if not lo <= initial <= hi:
        raise ValueError(f"initial value {initial!r} outside [{lo!r}, {hi!r}]")
    return KwState(k=2, p_val=float(initial), phase=Phase.PLUS, lo=float(lo), hi=float(hi))


def kw_probe(state: KwState) -> float:
    """Point at which the next measurement should be taken."""
    if state.phase is Phase.PLUS:
        return min(state.p_val + state.b_k, state.hi)
    return max(state.p_val - state.b_k, state.lo)


def kw_report(state: KwState, measured: float, *, advance: bool = True) -> KwState:
    """Feed the measurement taken at the current probe.

    A plus-phase report only stores the value.  A minus-phase report applies
    p_val += a_k (s_plus - s_minus) / b_k, clamps the iterate and, unless
    ``advance`` is false, moves to k+1.
    """
    if not math.isfinite(measured):
        raise ValueError(f"measurement must be finite, got {measured!r}")
    if state.phase is Phase.PLUS:
        return replace(state, phase=Phase.MINUS, s_plus=float(measured))
    p_val = state.p_val + state.a_k * (state.s_plus - measured) / state.b_k
    margin = min(ITERATE_MARGIN, (state.hi - state.lo) / 4)
    p_val = min(max(p_val, state.lo + margin), state.hi - margin)
    return replace(
        state,
        p_val=p_val,
        k=state.k + 1 if advance else state.k,
        phase=Phase.PLUS,
        s_plus=None,
    )


@dataclass(frozen=True)
class ToraState:
    kw: KwState
    stage_j: int = 0
    delta_lo: float = 0.05
    delta_hi: float = 0.95

    def __post_init__(self):
        if not 0 < self.delta_lo < self.delta_hi < 1:
            raise ValueError("need 0 < delta_lo < delta_hi < 1")
        if self.stage_j < 0:
            raise ValueError("stage_j must be non-negative")


def tora_new(m: int, *, delta_lo: float = 0.05, delta_hi: float = 0.95) -> ToraState:
    if m < 1:
        raise ValueError("m must be >= 1")
    return ToraState(kw_new(0.5, 0.0, 1.0), 0, delta_lo, delta_hi)


def tora_step(state: ToraState, m: int) -> ToraState:
    """Stage jump after a minus-phase update made with ``advance=False``.

    A jump resets p_val to 0.5 and leaves k unchanged; otherwise k advances.
    The stage stays within [0, m-1].
    """
    kw = state.kw
    j = state.stage_j
    if kw.p_val <= state.delta_lo and j < m - 1:
        return replace(state, kw=replace(kw, p_val=0.5), stage_j=j + 1)
    if kw.p_val >= state.delta_hi and j > 0:
        return replace(state, kw=replace(kw, p_val=0.5), stage_j=j - 1)
    return replace(state, kw=replace(kw, k=kw.k + 1))


#: Measurements below this are floored before taking logarithms.
LOG_FLOOR = 1e-6


def log_domain(initial: float, lo: float, hi: float) -> KwState:
    """KW state over x = ln p, for positive parameters spanning decades.

    Feeding ln(measurement) to such a state makes the step
    a_k (ln S+ - ln S-)/b_k scale-free: it depends on relative rather than
    absolute throughput differences, so one gain sequence fits any N.
    """
    if not 0 < lo:
        raise ValueError("log-domain bounds must be positive")
    return kw_new(math.log(initial), math.log(lo), math.log(hi))


class KwRun(NamedTuple):
    p: float
    trace: np.ndarray  # p_val after each completed iteration
    probes: np.ndarray  # every probe point in measurement order


def kw_maximize(
    objective: Callable[[float], float],
    initial: float,
    lo: float,
    hi: float,
    iterations: int,
    *,
    log: bool = False,
) -> KwRun:
    """Run ``iterations`` plus/minus probe pairs against ``objective``.

    With ``log=True`` the iterate lives on ln p and the objective values are
    compared as ln(max(y, LOG_FLOOR)).
    """
    state = log_domain(initial, lo, hi) if log else kw_new(initial, lo, hi)
    trace = np.empty(iterations)
    probes = np.empty(2 * iterations)
    for it in range(2 * iterations):
        x = kw_probe(state)
        p = math.exp(x) if log else x
        probes[it] = p
        y = objective(p)
        if log:
            y = math.log(max(y, LOG_FLOOR))
        state = kw_report(state, y)
        if it % 2:
            trace[it // 2] = math.exp(state.p_val) if log else state.p_val
    return KwRun(float(trace[-1]) if iterations else initial, trace, probes)
