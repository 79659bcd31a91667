"""Per-client trust computation: temporal, contextual, federated, and fused.

Temporal trust penalizes degradation of the behavior signals exponentially;
contextual trust squashes a weighted sum of situational factors through a
logistic; federated trust robustly aggregates credibility-weighted peer
feedback and is capped by direct evidence so peers can never override it.
The fusion weights are re-balanced by a small feedback controller.

Note: the logistic keeps contextual trust within (0.5, sigma(1) ~ 0.731]
for in-range factors; this literal squashing is intentional and documented.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import TrustParams

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass
class OpProbe:
    """Counts elements of every array a trust update reads (cost probe)."""

    touches: int = 0

    def add(self, n: int) -> None:
        self.touches += int(n)


@dataclass
class ContextFactors:
    """Raw situational inputs for contextual trust."""

    err_rate: float
    report_delay: float   # seconds
    usage: float
    quota: float
    pdr: float
    jitter: float
    leakage: float
    alphas: Sequence[float] = (0.2, 0.2, 0.2, 0.2, 0.2)
    beta_time: float = 1.0

    def validate(self) -> None:
        if self.quota <= 0:
            raise ValueError("quota must be positive")
        if not 0.0 <= self.err_rate <= 1.0 or not 0.0 <= self.pdr <= 1.0:
            raise ValueError("err_rate and pdr must lie in [0,1]")
        if not 0.0 <= self.leakage <= 1.0:
            raise ValueError("leakage must lie in [0,1]")
        if self.report_delay < 0 or self.usage < 0 or self.jitter < 0:
            raise ValueError("delay, usage, jitter must be non-negative")
        if abs(sum(self.alphas) - 1.0) > 1e-9 or any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be non-negative and sum to 1")
        if self.beta_time <= 0:
            raise ValueError("beta_time must be positive")


@dataclass
class PeerFeedback:
    """One peer's opinion about a client."""

    source: int
    score: float                      # in [0,1]
    age: float = 0.0                  # seconds since the report
    reporter_trust_variance: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("feedback score outside [0,1]")
        if self.age < 0 or self.reporter_trust_variance < 0:
            raise ValueError("age and variance must be non-negative")


@dataclass
class TrustState:
    """Per-client trust components plus the adaptive fusion weights."""

    temporal: float = 1.0
    contextual: float = 0.5
    federated: float = 0.5
    fused: float = 0.5
    gammas: Tuple[float, float, float] = (0.4, 0.3, 0.3)
    history: Deque[float] = field(default_factory=lambda: deque(maxlen=20))

    def validate(self) -> None:
        if abs(sum(self.gammas) - 1.0) > 1e-9:
            raise ValueError("gammas must sum to 1")
        for name in ("temporal", "contextual", "federated", "fused"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0,1]")

    def push_history(self, value: float) -> None:
        self.history.append(float(value))

    def history_variance(self) -> float:
        if len(self.history) < 2:
            return 0.0
        arr = np.fromiter(self.history, dtype=np.float64)
        return float(arr.var())


def logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def temporal_trust(
    prev: ArrayLike,
    curr: ArrayLike,
    params: TrustParams,
    probe: Optional[OpProbe] = None,
) -> float:
    """Exponential penalty on weighted signal degradation, clipped to (0,1].

    The weighted drift is w . (prev - curr): positive when performance drops.
    Improvement is not rewarded beyond full trust (output clipped at 1).
    """
    prev_a = prev.as_array() if hasattr(prev, "as_array") else np.asarray(prev, dtype=np.float64)
    curr_a = curr.as_array() if hasattr(curr, "as_array") else np.asarray(curr, dtype=np.float64)
    w = np.asarray(params.signal_weights, dtype=np.float64)
    if w.shape != prev_a.shape or prev_a.shape != curr_a.shape:
        raise ValueError("signal vectors and weights must share one shape")
    if abs(float(w.sum()) - 1.0) > 1e-9 or np.any(w < 0):
        raise ValueError("signal_weights must be non-negative and sum to 1")
    if probe is not None:
        probe.add(prev_a.size + curr_a.size + w.size)
    drift = float(w @ (prev_a - curr_a))
    return min(1.0, math.exp(-params.lambda_decay * drift))


def context_factor_matrix(
    err_rate,
    delay,
    usage,
    quota,
    pdr,
    jitter,
    leakage,
    beta_time: float = 1.0,
) -> np.ndarray:
    """The five contextual factors, vectorized; broadcasts over array inputs.

    Order: output integrity, timeliness, resource usage, reliability,
    privacy compliance. Every factor lies in [0,1] for in-range inputs.
    """
    f_integrity = 1.0 - np.asarray(err_rate, dtype=np.float64)
    f_timeliness = np.exp(-beta_time * np.asarray(delay, dtype=np.float64))
    over = (np.asarray(usage, dtype=np.float64) - quota) / quota
    f_usage = 1.0 - np.clip(over, 0.0, 1.0)
    f_reliability = np.asarray(pdr, dtype=np.float64) / (1.0 + np.asarray(jitter, dtype=np.float64))
    f_privacy = 1.0 - np.asarray(leakage, dtype=np.float64)
    return np.stack(
        np.broadcast_arrays(f_integrity, f_timeliness, f_usage, f_reliability, f_privacy),
        axis=-1,
    )


def contextual_trust(f: ContextFactors, probe: Optional[OpProbe] = None) -> float:
    """Logistic of the alpha-weighted sum of the five contextual factors."""
    f.validate()
    factors = context_factor_matrix(
        f.err_rate, f.report_delay, f.usage, f.quota, f.pdr, f.jitter, f.leakage,
        beta_time=f.beta_time,
    )
    alphas = np.asarray(f.alphas, dtype=np.float64)
    if alphas.shape != factors.shape:
        raise ValueError("alphas must provide one weight per factor")
    if probe is not None:
        probe.add(factors.size + alphas.size)
    return logistic(float(alphas @ factors))


def credibility_weight(
    fb: PeerFeedback, params: TrustParams, probe: Optional[OpProbe] = None
) -> float:
    """Blend of recency decay and reporter stability, in (0,1]."""
    if probe is not None:
        probe.add(3)
    recency = math.exp(-params.rho * fb.age)
    stability = 1.0 / (1.0 + fb.reporter_trust_variance)
    return params.eta * recency + (1.0 - params.eta) * stability


def trimmed_mean(values: Sequence[float], delta: float) -> float:
    """Mean after dropping ceil(delta*n) values from each end of the sort.

    A single value passes through untouched; for n >= 2 the call raises if
    trimming would leave nothing to average.
    """
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n == 0:
        raise ValueError("cannot aggregate an empty list")
    if n == 1:
        return vals[0]
    k = math.ceil(delta * n)
    if n - 2 * k <= 0:
        raise ValueError(f"trimming {k} per end leaves no elements (n={n}, delta={delta})")
    kept = vals[k: n - k]
    return sum(kept) / len(kept)


def median(values: Sequence[float]) -> float:
    """Sort-based median; mean of the two middles for an even count."""
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n == 0:
        raise ValueError("cannot aggregate an empty list")
    mid = n // 2
    if n % 2 == 1:
        return vals[mid]
    return 0.5 * (vals[mid - 1] + vals[mid])


def robust_aggregate(
    values: Sequence[float],
    aggregator: str = "trimmed_mean",
    delta: float = 0.2,
    probe: Optional[OpProbe] = None,
) -> float:
    """Robust combination that bounds the influence of extreme inputs."""
    if probe is not None:
        probe.add(len(values))
    if aggregator == "trimmed_mean":
        return trimmed_mean(values, delta)
    if aggregator == "median":
        return median(values)
    raise ValueError(f"unknown aggregator {aggregator!r}")


def federated_trust(
    feedback: Sequence[PeerFeedback],
    temporal: float,
    contextual: float,
    params: TrustParams,
    probe: Optional[OpProbe] = None,
) -> float:
    """Robust aggregate of credibility-weighted feedback, capped by direct evidence.

    The cap kappa1*temporal + kappa2*contextual always dominates; with no
    peers the cap value itself is returned.
    """
    if abs(params.kappa1 + params.kappa2 - 1.0) > 1e-9:
        raise ValueError("kappa1 + kappa2 must equal 1")
    cap = params.kappa1 * temporal + params.kappa2 * contextual
    if not feedback:
        return cap
    weighted = [credibility_weight(fb, params, probe=probe) * fb.score for fb in feedback]
    agg = robust_aggregate(weighted, params.aggregator, params.trim_delta, probe=probe)
    return min(agg, cap)


def fuse_trust(state: TrustState, probe: Optional[OpProbe] = None) -> float:
    """Convex combination of the three trust components."""
    g1, g2, g3 = state.gammas
    if abs(g1 + g2 + g3 - 1.0) > 1e-9 or min(g1, g2, g3) < 0:
        raise ValueError("gammas must form a simplex point")
    if probe is not None:
        probe.add(3)
    return g1 * state.temporal + g2 * state.contextual + g3 * state.federated


def adapt_weights(
    violation_rate: float,
    link_instability: float,
    anomaly_frequency: float,
    defaults: Tuple[float, float, float] = (0.4, 0.3, 0.3),
    gain: float = 2.0,
) -> Tuple[float, float, float]:
    """Feedback-controlled re-weighting of the fusion coefficients.

    Low violation rates favor the temporal weight, link instability favors
    the contextual weight, and anomaly bursts favor the federated weight.
    With all signals at zero the defaults are returned exactly.
    """
    for name, v in (("violation_rate", violation_rate),
                    ("link_instability", link_instability),
                    ("anomaly_frequency", anomaly_frequency)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0,1]")
    bias = np.array([-violation_rate, link_instability, anomaly_frequency])
    raw = np.asarray(defaults, dtype=np.float64) * np.exp(gain * bias)
    out = raw / raw.sum()
    return (float(out[0]), float(out[1]), float(out[2]))


def update_client_trust(
    state: TrustState,
    prev_signals: ArrayLike,
    curr_signals: ArrayLike,
    context: ContextFactors,
    feedback: Sequence[PeerFeedback],
    params: TrustParams,
    controller_signals: Optional[Dict[str, float]] = None,
    probe: Optional[OpProbe] = None,
) -> TrustState:
    """One full trust update for a client; O(m + peers) work, bounded state."""
    state.temporal = temporal_trust(prev_signals, curr_signals, params, probe=probe)
    state.contextual = contextual_trust(context, probe=probe)
    state.federated = federated_trust(
        feedback, state.temporal, state.contextual, params, probe=probe
    )
    if controller_signals is not None:
        state.gammas = adapt_weights(
            controller_signals.get("violation_rate", 0.0),
            controller_signals.get("link_instability", 0.0),
            controller_signals.get("anomaly_frequency", 0.0),
            defaults=params.default_gammas,
            gain=params.controller_gain,
        )
    state.fused = fuse_trust(state, probe=probe)
    state.push_history(state.fused)
    if probe is not None:
        probe.add(1)  # history ring push
    return state


def export_trust_csv(rows: List[dict], path: str) -> None:
    """Write per-timestep trust snapshots as CSV.

    Columns: t,client_id,temporal,contextual,federated,fused,g1,g2,g3
    """
    header = "t,client_id,temporal,contextual,federated,fused,g1,g2,g3"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['t']},{r['client_id']},{r['temporal']!r},{r['contextual']!r},"
            f"{r['federated']!r},{r['fused']!r},{r['g1']!r},{r['g2']!r},{r['g3']!r}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
