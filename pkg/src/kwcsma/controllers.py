"""AP- and node-side logic of the KW-driven access controllers.

The AP measures its goodput over segments of length ``update_period_ns``;
alternate segments run at the plus and minus probe, and each completed pair
drives one Kiefer-Wolfowitz update.  The current probe rides on every ACK.

wTOP tunes a p-persistent attempt probability that nodes map through
:func:`~kwcsma.model.weight_map`.  TORA tunes (p0, j) of a RandomReset
exponential backoff.

Two measurement scales are supported:

``"linear"``
    The iterate is p (or p0) itself and the measurement is S/R.
``"log"`` (default)
    The measurement is ln(S/R).  For wTOP the iterate is additionally ln p,
    starting at the node default 0.1 with probes clamped to [1e-4, 0.9].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

from .kw import (
    LOG_FLOOR,
    KwState,
    Phase,
    ToraState,
    kw_new,
    kw_probe,
    kw_report,
    log_domain,
    tora_new,
    tora_step,
)
from .model import PhyMacConfig, weight_map

__all__ = [
    "Mode",
    "ApControllerState",
    "WtopNodeState",
    "ToraNodeState",
    "TracePoint",
    "encode_p",
    "decode_p",
    "encode_tora",
    "decode_tora",
    "wtop_ap_new",
    "tora_ap_new",
    "wtop_ap_on_rx",
    "tora_ap_on_rx",
    "ap_on_rx",
    "ap_force_close",
    "ap_payload",
    "ap_p_val",
    "wtop_node_on_ack",
    "tora_node_on_ack",
    "tora_node_on_failure",
    "tora_node_event",
    "ApController",
    "DEFAULT_UPDATE_PERIOD_NS",
    "WTOP_P_MIN",
    "WTOP_P_MAX",
]

DEFAULT_UPDATE_PERIOD_NS = 250_000_000
WTOP_P_MIN = 1e-4
WTOP_P_MAX = 0.9
NODE_DEFAULT_P = 0.1
AUTO_TARGET_SUCCESSES = 500
AUTO_WARMUP_NS = 2_000_000_000


class Mode(enum.Enum):
    WTOP = "wtop"
    TORA = "tora"


# -- wire format ----------------------------------------------------------------

_P_SCALE = 0xFFFF


def encode_p(p: float) -> int:
    """p in [0, 1] as a 16-bit fixed-point fraction."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    return int(round(p * _P_SCALE))


def decode_p(code: int) -> float:
    if not 0 <= code <= _P_SCALE:
        raise ValueError("code out of 16-bit range")
    return code / _P_SCALE


def encode_tora(p0: float, j: int) -> int:
    """(p0, j) packed as 16-bit fraction << 4 | 4-bit stage."""
    if not 0 <= j < 16:
        raise ValueError("stage must fit in 4 bits")
    return encode_p(p0) << 4 | j


def decode_tora(code: int) -> tuple[float, int]:
    return decode_p(code >> 4), code & 0xF


# -- AP side ------------------------------------------------------------------------


@dataclass(frozen=True)
class ApControllerState:
    mode: Mode
    opt: Union[KwState, ToraState]
    update_period_ns: int  # 0 while an automatic period is still being sized
    last_time: int = 0
    bits_recd: int = 0
    scale: str = "log"
    rate_bps: float = 54e6
    m_stages: int = 7
    force_factor: float = 4.0
    warmup_successes: int = 0
    s_plus: Optional[float] = None
    s_minus: Optional[float] = None

    @property
    def kw(self) -> KwState:
        return self.opt.kw if self.mode is Mode.TORA else self.opt

    @property
    def stage_j(self) -> int:
        return self.opt.stage_j if self.mode is Mode.TORA else 0


def _check_common(scale, update_period_ns, force_factor):
    if scale not in ("log", "linear"):
        raise ValueError(f"scale must be 'log' or 'linear', got {scale!r}")
    if update_period_ns is not None and update_period_ns <= 0:
        raise ValueError("update period must be positive (or None for automatic sizing)")
    if not force_factor > 1:
        raise ValueError("force_factor must exceed 1")


def wtop_ap_new(
    cfg: PhyMacConfig,
    *,
    update_period_ns: Optional[int] = DEFAULT_UPDATE_PERIOD_NS,
    scale: str = "log",
    force_factor: float = 4.0,
) -> ApControllerState:
    """``update_period_ns=None`` sizes the period from a warm-up success rate."""
    _check_common(scale, update_period_ns, force_factor)
    if scale == "log":
        opt = log_domain(NODE_DEFAULT_P, WTOP_P_MIN, WTOP_P_MAX)
    else:
        opt = kw_new(0.5, 0.0, WTOP_P_MAX)
    return ApControllerState(
        Mode.WTOP, opt, int(update_period_ns or 0), scale=scale, rate_bps=cfg.rate_bps,
        m_stages=cfg.m_stages, force_factor=force_factor,
    )


def tora_ap_new(
    cfg: PhyMacConfig,
    *,
    update_period_ns: Optional[int] = DEFAULT_UPDATE_PERIOD_NS,
    scale: str = "log",
    force_factor: float = 4.0,
    delta_lo: float = 0.05,
    delta_hi: float = 0.95,
) -> ApControllerState:
    _check_common(scale, update_period_ns, force_factor)
    opt = tora_new(cfg.m_stages, delta_lo=delta_lo, delta_hi=delta_hi)
    return ApControllerState(
        Mode.TORA, opt, int(update_period_ns or 0), scale=scale, rate_bps=cfg.rate_bps,
        m_stages=cfg.m_stages, force_factor=force_factor,
    )


def _probe_p(state: ApControllerState) -> float:
    x = kw_probe(state.kw)
    if state.mode is Mode.WTOP and state.scale == "log":
        return math.exp(x)
    return x


def ap_p_val(state: ApControllerState) -> float:
    """Current centre estimate in probability units (p for wTOP, p0 for TORA)."""
    x = state.kw.p_val
    if state.mode is Mode.WTOP and state.scale == "log":
        return math.exp(x)
    return x


def ap_payload(state: ApControllerState):
    """What the next ACK carries: p for wTOP, (p0, j) for TORA, after encoding."""
    if state.mode is Mode.WTOP:
        return decode_p(encode_p(_probe_p(state)))
    return decode_tora(encode_tora(_probe_p(state), state.stage_j))


def _measure(state: ApControllerState, throughput_bps: float) -> float:
    s = throughput_bps / state.rate_bps
    return math.log(max(s, LOG_FLOOR)) if state.scale == "log" else s


def _close_segment(state: ApControllerState, now_ns: int) -> ApControllerState:
    elapsed = now_ns - state.last_time
    throughput = state.bits_recd * 1e9 / elapsed if elapsed > 0 else 0.0
    y = _measure(state, throughput)
    kw = state.kw
    s_plus, s_minus = state.s_plus, state.s_minus
    if kw.phase is Phase.PLUS:
        s_plus, s_minus = throughput, None
    else:
        s_minus = throughput
    if state.mode is Mode.WTOP:
        opt = kw_report(kw, y)
    else:
        minus = kw.phase is Phase.MINUS
        opt = replace(state.opt, kw=kw_report(kw, y, advance=False))
        if minus:
            opt = tora_step(opt, state.m_stages)
    return replace(state, opt=opt, bits_recd=0, last_time=now_ns, s_plus=s_plus, s_minus=s_minus)


def ap_on_rx(state: ApControllerState, packet_bits: int, now_ns: int):
    """Account one decoded frame; returns (state', payload for its ACK)."""
    if packet_bits < 0:
        raise ValueError("packet_bits must be non-negative")
    if state.update_period_ns == 0:
        # automatic period: count successes, then size the period
        count = state.warmup_successes + 1
        if now_ns - state.last_time >= AUTO_WARMUP_NS:
            period = max(1, round(AUTO_TARGET_SUCCESSES * (now_ns - state.last_time) / count))
            state = replace(state, update_period_ns=period, last_time=now_ns, bits_recd=0)
        else:
            state = replace(state, warmup_successes=count)
        return state, ap_payload(state)
    state = replace(state, bits_recd=state.bits_recd + packet_bits)
    if now_ns - state.last_time >= state.update_period_ns:
        state = _close_segment(state, now_ns)
    return state, ap_payload(state)


wtop_ap_on_rx = ap_on_rx
tora_ap_on_rx = ap_on_rx


def ap_force_close(state: ApControllerState, now_ns: int):
    """Close a segment that has run ``force_factor`` periods without closing.

    Returns (state', payload, closed).
    """
    if state.update_period_ns == 0:
        if now_ns - state.last_time >= state.force_factor * AUTO_WARMUP_NS:
            # nothing was received during warm-up; fall back to the default period
            state = replace(state, update_period_ns=DEFAULT_UPDATE_PERIOD_NS, last_time=now_ns, bits_recd=0)
            return state, ap_payload(state), True
        return state, ap_payload(state), False
    if now_ns - state.last_time >= state.force_factor * state.update_period_ns:
        state = _close_segment(state, now_ns)
        return state, ap_payload(state), True
    return state, ap_payload(state), False


def ap_deadline(state: ApControllerState) -> int:
    """Time at which :func:`ap_force_close` would act."""
    period = state.update_period_ns or AUTO_WARMUP_NS
    return state.last_time + int(math.ceil(state.force_factor * period))


# -- node side ------------------------------------------------------------------------


@dataclass(frozen=True)
class WtopNodeState:
    weight: float = 1.0
    p_t: float = NODE_DEFAULT_P

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if not 0 <= self.p_t <= 1:
            raise ValueError("p_t must lie in [0, 1]")


def wtop_node_on_ack(state: WtopNodeState, p_from_ack: float) -> WtopNodeState:
    return replace(state, p_t=float(weight_map(p_from_ack, state.weight)))


@dataclass(frozen=True)
class ToraNodeState:
    cw_min: int = 8
    m_stages: int = 7
    i: int = 0
    j: int = 0
    p0: float = 1.0

    def __post_init__(self):
        if not 0 <= self.i <= self.m_stages:
            raise ValueError("node stage out of range")
        if not 0 <= self.j <= self.m_stages - 1:
            raise ValueError("reset stage out of range")

    @property
    def cw(self) -> int:
        return self.cw_min << self.i

    @property
    def attempt_prob(self) -> float:
        return min(1.0, 2.0 / self.cw)


def tora_node_on_ack(state: ToraNodeState, p0: float, j: int, rng) -> ToraNodeState:
    """Success: reset to stage j with probability p0, else uniformly above it."""
    m = state.m_stages
    j = min(max(int(j), 0), m - 1)
    if rng.random() < p0:
        i = j
    else:
        i = j + 1 + int(rng.random() * (m - j))
    return replace(state, i=i, j=j, p0=p0)


def tora_node_on_failure(state: ToraNodeState) -> ToraNodeState:
    return replace(state, i=min(state.i + 1, state.m_stages))


def tora_node_event(state: ToraNodeState, event, rng) -> ToraNodeState:
    """``event`` is ``("ack", p0, j)`` or ``("failure",)``."""
    if event[0] == "ack":
        return tora_node_on_ack(state, event[1], event[2], rng)
    if event[0] == "failure":
        return tora_node_on_failure(state)
    raise ValueError(f"unknown event {event!r}")


# -- stateful wrapper used by the simulator ----------------------------------


@dataclass(frozen=True)
class TracePoint:
    time_ns: int
    p_val: float
    probe: float
    s_plus: Optional[float]
    s_minus: Optional[float]
    j: int
    forced: bool = False


class ApController:
    """Mutable holder for an :class:`ApControllerState` plus its update trace.

    Receptions that cannot close a segment are accumulated outside the frozen
    state and folded in before any segment logic runs.
    """

    def __init__(self, state: ApControllerState):
        self._state = state
        self._bits = 0
        self._payload = ap_payload(state)
        self.trace: list[TracePoint] = []
        self._record(0, False)

    @classmethod
    def wtop(cls, cfg: PhyMacConfig, **kw) -> "ApController":
        return cls(wtop_ap_new(cfg, **kw))

    @classmethod
    def tora(cls, cfg: PhyMacConfig, **kw) -> "ApController":
        return cls(tora_ap_new(cfg, **kw))

    @property
    def state(self) -> ApControllerState:
        if self._bits:
            self._state = replace(self._state, bits_recd=self._state.bits_recd + self._bits)
            self._bits = 0
        return self._state

    @property
    def mode(self) -> Mode:
        return self._state.mode

    @property
    def payload(self):
        return self._payload

    @property
    def deadline(self) -> int:
        return ap_deadline(self._state)

    def _record(self, now_ns: int, forced: bool):
        s = self._state
        self.trace.append(TracePoint(now_ns, ap_p_val(s), _probe_p(s), s.s_plus, s.s_minus, s.stage_j, forced))

    def on_rx(self, packet_bits: int, now_ns: int):
        s = self._state
        if s.update_period_ns and now_ns - s.last_time < s.update_period_ns and packet_bits >= 0:
            self._bits += packet_bits
            return self._payload
        before = s.last_time
        self._state, self._payload = ap_on_rx(self.state, packet_bits, now_ns)
        if self._state.last_time != before:
            self._record(now_ns, False)
        return self._payload

    def poll(self, now_ns: int):
        """Forced closure check; returns the new payload or None."""
        self._state, payload, closed = ap_force_close(self.state, now_ns)
        if closed:
            self._payload = payload
            self._record(now_ns, True)
            return payload
        return None
