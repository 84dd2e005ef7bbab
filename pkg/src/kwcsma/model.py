"""Analytic throughput model for saturated p-persistent and backoff CSMA.

Everything here is a pure function of its inputs.  Durations inside
:class:`PhyMacConfig` are integer nanoseconds; throughputs are returned in
bits per second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "PhyMacConfig",
    "Timing",
    "ResetDistribution",
    "FixedPointSolution",
    "Optimum",
    "UnimodalVerdict",
    "NonConvergence",
    "derive_timing",
    "weight_map",
    "station_throughputs",
    "system_throughput",
    "gradient_indicator",
    "optimal_p",
    "approx_optimal_p",
    "alpha",
    "alpha_recursive",
    "alpha_table",
    "tau_given_c",
    "collision_given_tau",
    "solve_attempt_fixed_point",
    "rr_reset_distribution",
    "rr_tau_given_c",
    "rr_tau",
    "rr_throughput",
    "check_unimodal",
]


@dataclass(frozen=True)
class PhyMacConfig:
    """PHY/MAC timing and backoff parameters (defaults: 802.11a OFDM, 54 Mb/s)."""

    sigma_ns: int = 9_000
    sifs_ns: int = 16_000
    difs_ns: int = 34_000
    rate_bps: float = 54e6
    payload_bits: int = 8_000
    header_bits: int = 272
    ack_bits: int = 112
    cw_min: int = 8
    m_stages: int = 7

    def __post_init__(self):
        for name in ("sigma_ns", "sifs_ns", "difs_ns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.rate_bps > 0:
            raise ValueError(f"rate_bps must be positive, got {self.rate_bps!r}")
        if self.payload_bits <= 0:
            raise ValueError(f"payload_bits must be positive, got {self.payload_bits!r}")
        if self.header_bits < 0 or self.ack_bits < 0:
            raise ValueError("header_bits and ack_bits must be non-negative")
        if self.cw_min < 2 or self.cw_min & (self.cw_min - 1):
            raise ValueError(f"cw_min must be a power of two >= 2, got {self.cw_min!r}")
        if self.m_stages < 1:
            raise ValueError(f"m_stages must be >= 1, got {self.m_stages!r}")

    @property
    def cw_max(self) -> int:
        return self.cw_min << self.m_stages

    @property
    def data_airtime_ns(self) -> int:
        return round((self.header_bits + self.payload_bits) / self.rate_bps * 1e9)

    @property
    def ack_airtime_ns(self) -> int:
        return round(self.ack_bits / self.rate_bps * 1e9)


class Timing(NamedTuple):
    t_s_ns: float
    t_c_ns: float
    t_s_star: float
    t_c_star: float


def derive_timing(cfg: PhyMacConfig) -> Timing:
    """Durations of a successful and of a collided busy slot."""
    if not cfg.rate_bps > 0:
        raise ValueError("rate_bps must be positive")
    airtime = (cfg.header_bits + cfg.payload_bits) / cfg.rate_bps * 1e9
    t_s = airtime + cfg.sifs_ns + cfg.ack_bits / cfg.rate_bps * 1e9 + cfg.difs_ns
    t_c = airtime + cfg.difs_ns
    if not t_s > t_c:
        raise ValueError("degenerate timing: a success must outlast a collision")
    return Timing(t_s, t_c, t_s / cfg.sigma_ns, t_c / cfg.sigma_ns)


def weight_map(p, w):
    """Attempt probability giving ``w`` times the throughput of a node at ``p``.

    Works elementwise on arrays.
    """
    p_arr = np.asarray(p, dtype=float)
    w_arr = np.asarray(w, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if np.any(~(w_arr > 0)):
        raise ValueError(f"weights must be positive, got {w!r}")
    out = w_arr * p_arr / (1.0 + (w_arr - 1.0) * p_arr)
    return float(out) if out.ndim == 0 else out


def _check_probs(p_vec) -> np.ndarray:
    p_vec = np.atleast_1d(np.asarray(p_vec, dtype=float))
    if p_vec.size == 0:
        raise ValueError("need at least one station")
    if np.any((p_vec < 0) | (p_vec >= 1)) or np.any(np.isnan(p_vec)):
        raise ValueError("attempt probabilities must lie in [0, 1)")
    return p_vec


def _weights(W) -> np.ndarray:
    W = np.atleast_1d(np.asarray(W, dtype=float))
    if W.size == 0 or np.any(~(W > 0)):
        raise ValueError("weights must be a non-empty vector of positive reals")
    return W


def station_throughputs(p_vec, cfg: PhyMacConfig) -> np.ndarray:
    """Per-station saturation throughput (bits/s) for heterogeneous attempt probabilities."""
    p_vec = _check_probs(p_vec)
    t = derive_timing(cfg)
    sigma, ts, tc = cfg.sigma_ns * 1e-9, t.t_s_ns * 1e-9, t.t_c_ns * 1e-9
    odds = p_vec / (1.0 - p_vec)
    p_idle = float(np.prod(1.0 - p_vec))
    p_t = float(odds.sum())
    denom = p_idle * sigma + p_t * p_idle * (ts - tc) + (1.0 - p_idle) * tc
    return odds * cfg.payload_bits * p_idle / denom


def system_throughput(p: float, W, cfg: PhyMacConfig) -> float:
    """System throughput (bits/s) when every node uses the weight-mapped probability."""
    if not 0 <= p < 1:
        raise ValueError(f"p must lie in [0, 1), got {p!r}")
    W = _weights(W)
    t = derive_timing(cfg)
    sigma, ts, tc = cfg.sigma_ns * 1e-9, t.t_s_ns * 1e-9, t.t_c_ns * 1e-9
    p_idle = float(np.prod((1.0 - p) / (1.0 + (W - 1.0) * p)))
    p_t = float(np.sum(W * p / (1.0 - p)))
    denom = p_idle * sigma + p_t * p_idle * (ts - tc) + (1.0 - p_idle) * tc
    return cfg.payload_bits * p_t * p_idle / denom


def gradient_indicator(p: float, W, cfg: PhyMacConfig) -> float:
    """A function with the same sign as dS/dp; strictly decreasing in p."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    W = _weights(W)
    p_i = W * p / (1.0 + (W - 1.0) * p)
    p_idle = float(np.prod(1.0 - p_i))
    tc_star = derive_timing(cfg).t_c_star
    return tc_star * (1.0 - float(p_i.sum()) - p_idle) + p_idle


class Optimum(NamedTuple):
    p: float
    at_boundary: bool


def optimal_p(W, cfg: PhyMacConfig, tol: float = 1e-10) -> Optimum:
    """Throughput-maximising control probability, by bisection on the sign of dS/dp.

    With a single node the throughput keeps increasing up to p -> 1; that case
    is returned as ``Optimum(1.0, at_boundary=True)``.
    """
    W = _weights(W)
    if W.size == 1:
        return Optimum(1.0, True)
    lo, hi = 1e-6, 1.0 - 1e-6
    f_lo = gradient_indicator(lo, W, cfg)
    f_hi = gradient_indicator(hi, W, cfg)
    if f_lo <= 0:
        return Optimum(lo, True)
    if f_hi >= 0:
        return Optimum(hi, True)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = gradient_indicator(mid, W, cfg)
        if abs(f_mid) <= tol * 1e-2 or hi - lo < 1e-16:
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return Optimum(mid, False)


def approx_optimal_p(N: int, cfg: PhyMacConfig) -> float:
    """Closed-form approximation 1/(N sqrt(T_c*/2)); accurate only for large T_c*."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return 1.0 / (N * math.sqrt(derive_timing(cfg).t_c_star / 2.0))


# -- backoff fixed-point model ------------------------------------------------


def alpha(j: int, c: float, cfg: PhyMacConfig) -> float:
    """Stage weight alpha_j(c) in closed form.

    The geometric sum runs over stages j..m-1; the stage-m self-loop
    contributes 2^m c^(m-j).
    """
    m = cfg.m_stages
    if not 0 <= j <= m:
        raise ValueError(f"stage j must lie in [0, {m}], got {j!r}")
    if not 0 <= c <= 1:
        raise ValueError(f"c must lie in [0, 1], got {c!r}")
    head = sum(2.0**i * c ** (i - j) for i in range(j, m))
    return (1.0 - c) * head + 2.0**m * c ** (m - j)


def alpha_recursive(j: int, c: float, cfg: PhyMacConfig) -> float:
    return float(alpha_table(c, cfg.m_stages)[j])


def alpha_table(c: float, m: int) -> np.ndarray:
    """alpha_0(c) .. alpha_m(c) via the backward recursion."""
    out = np.empty(m + 1)
    out[m] = 2.0**m
    for j in range(m - 1, -1, -1):
        out[j] = (1.0 - c) * 2.0**j + c * out[j + 1]
    return out


class ResetDistribution:
    """Probability vector over backoff stages 0..m used after a success."""

    __slots__ = ("q",)

    def __init__(self, q: Sequence[float]):
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or q.size < 2:
            raise ValueError("reset distribution needs at least two stages")
        if np.any((q < 0) | (q > 1)):
            raise ValueError("reset probabilities must lie in [0, 1]")
        if abs(q.sum() - 1.0) > 1e-12:
            raise ValueError(f"reset probabilities must sum to 1, got {q.sum()!r}")
        self.q = q

    @property
    def m(self) -> int:
        return self.q.size - 1

    @classmethod
    def point_mass(cls, stage: int, m: int) -> "ResetDistribution":
        q = np.zeros(m + 1)
        q[stage] = 1.0
        return cls(q)

    def __repr__(self):
        return f"ResetDistribution({self.q.tolist()!r})"


def _as_q(q, cfg: PhyMacConfig) -> np.ndarray:
    vec = q.q if isinstance(q, ResetDistribution) else ResetDistribution(q).q
    if vec.size != cfg.m_stages + 1:
        raise ValueError(f"reset distribution has {vec.size} stages, config has {cfg.m_stages + 1}")
    return vec


def tau_given_c(q, c: float, cfg: PhyMacConfig) -> float:
    """Attempt probability for reset distribution ``q`` at collision probability ``c``."""
    vec = _as_q(q, cfg)
    kappa0 = 2.0 / cfg.cw_min
    return kappa0 / float(vec @ alpha_table(c, cfg.m_stages))


def collision_given_tau(tau: float, N: int) -> float:
    if N < 1:
        raise ValueError("N must be >= 1")
    return 1.0 - (1.0 - tau) ** (N - 1)


class FixedPointSolution(NamedTuple):
    tau: float
    c: float
    residual: float
    iterations: int
    method: str


class NonConvergence(RuntimeError):
    pass


def solve_attempt_fixed_point(
    q,
    N: int,
    cfg: PhyMacConfig,
    *,
    start: float = 0.5,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> FixedPointSolution:
    """Joint fixed point of the attempt and collision equations.

    Damped Picard iteration first; falls back to bisection on
    g(tau) = tau - tau_hat(c(tau)), which is strictly increasing.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    vec = _as_q(q, cfg)
    kappa0 = 2.0 / cfg.cw_min
    m = cfg.m_stages

    def tau_hat(tau):
        c = 1.0 - (1.0 - tau) ** (N - 1)
        return kappa0 / float(vec @ alpha_table(c, m))

    if N == 1:
        tau = kappa0 / float(vec @ alpha_table(0.0, m))
        return FixedPointSolution(tau, 0.0, 0.0, 0, "exact")

    tau = min(max(start, 0.0), 1.0)
    for it in range(1, max_iter + 1):
        target = tau_hat(tau)
        residual = abs(target - tau)
        if residual <= tol:
            return FixedPointSolution(tau, collision_given_tau(tau, N), residual, it, "picard")
        tau = (1.0 - damping) * tau + damping * target

    lo, hi = 0.0, 1.0
    for it in range(1, 400):
        mid = 0.5 * (lo + hi)
        g = mid - tau_hat(mid)
        if abs(g) <= tol * 1e-2 or hi - lo < 1e-16:
            break
        if g > 0:
            hi = mid
        else:
            lo = mid
    residual = abs(mid - tau_hat(mid))
    if residual > tol:
        raise NonConvergence(f"fixed point did not converge (residual {residual:.3e})")
    return FixedPointSolution(mid, collision_given_tau(mid, N), residual, max_iter + it, "bisection")


def rr_reset_distribution(j: int, p0: float, cfg: PhyMacConfig) -> ResetDistribution:
    """Reset distribution of RandomReset(j; p0)."""
    m = cfg.m_stages
    if not 0 <= j <= m - 1:
        raise ValueError(f"RandomReset stage must lie in [0, {m - 1}], got {j!r}")
    if not 0 <= p0 <= 1:
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")
    q = np.zeros(m + 1)
    q[j] = p0
    q[j + 1 :] = (1.0 - p0) / (m - j)
    return ResetDistribution(q)


def rr_tau_given_c(j: int, p0: float, c: float, cfg: PhyMacConfig) -> float:
    """Conditional attempt probability of RandomReset(j; p0), written per stage."""
    m = cfg.m_stages
    a = alpha_table(c, m)
    kappa0 = 2.0 / cfg.cw_min
    return kappa0 / (p0 * a[j] + (1.0 - p0) / (m - j) * float(a[j + 1 :].sum()))


def rr_tau(j: int, p0: float, N: int, cfg: PhyMacConfig) -> float:
    return solve_attempt_fixed_point(rr_reset_distribution(j, p0, cfg), N, cfg).tau


def rr_throughput(j: int, p0: float, N: int, cfg: PhyMacConfig) -> float:
    """Fully connected throughput (bits/s) of N nodes running RandomReset(j; p0)."""
    return system_throughput(rr_tau(j, p0, N, cfg), np.ones(N), cfg)


class UnimodalVerdict(NamedTuple):
    unimodal: bool
    violations: list

    def __bool__(self):
        return self.unimodal


def check_unimodal(xs, ys, noise_tol: float = 0.0) -> UnimodalVerdict:
    """Single-peakedness test for a sampled curve.

    Index i is a violation when ys[i] sits below the highest value on *both*
    sides of it by more than ``noise_tol * max(ys)``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 3:
        raise ValueError("xs and ys must be 1-d of equal length >= 3")
    if np.any(np.diff(xs) < 0):
        raise ValueError("xs must be sorted")
    slack = noise_tol * float(ys.max())
    left = np.maximum.accumulate(ys)
    right = np.maximum.accumulate(ys[::-1])[::-1]
    violations = [
        i for i in range(1, ys.size - 1) if ys[i] < min(left[i - 1], right[i + 1]) - slack
    ]
    return UnimodalVerdict(not violations, violations)
