"""Configuration dataclasses for the simulator and its subsystems.

Every knob that drives randomness, scale, or thresholds lives here so a run
is a pure function of its ``RunConfig``. Defaults mirror the reference
experiment scale (100 virtual nodes on 30 physical nodes, sequence length 10,
attack rate 0.05, seed 42).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Tuple


class ConfigError(ValueError):
    """Raised when a configuration value violates its invariants."""


# Per-timestep features fed to the classifier, in column order. The first
# six are telemetry-derived behavior signals (pac/mcr/arc/pvc_inv form the
# signal vector used for temporal trust; negative indicators are inverted so
# higher is always better). The last five are the contextual factors.
FEATURE_NAMES: Tuple[str, ...] = (
    "cpu",
    "mem",
    "pac",        # performance accuracy: window smoothness damped by model drift
    "mcr",        # mission completion rate: 1 - overload fraction
    "arc",        # average resource consumption, inverted: 1 - mean cpu
    "pvc_inv",    # violation count, inversely normalized
    "ctx_integrity",
    "ctx_timeliness",
    "ctx_usage",
    "ctx_reliability",
    "ctx_privacy",
)

SIGNAL_NAMES: Tuple[str, ...] = ("pac", "mcr", "arc", "pvc_inv")


@dataclass
class TraceSynthParams:
    """Clipped mean-reverting noise process used for benign telemetry."""

    cpu_mean_low: float = 0.25
    cpu_mean_high: float = 0.60
    mem_mean_low: float = 0.30
    mem_mean_high: float = 0.70
    reversion: float = 0.25
    noise_sigma: float = 0.04
    clip_low: float = 0.02
    clip_high: float = 0.98

    def validate(self) -> None:
        if not 0.0 <= self.clip_low < self.clip_high <= 1.0:
            raise ConfigError("trace clip bounds must satisfy 0 <= low < high <= 1")
        if self.noise_sigma < 0 or not 0 < self.reversion <= 1:
            raise ConfigError("invalid trace synthesis dynamics")


@dataclass
class MetadataParams:
    """Seeded node-metadata generator parameters."""

    drift_low: float = 0.0
    drift_high: float = 0.2
    pdr_mean: float = 0.90
    pdr_spread: float = 0.08
    quota_low: float = 1.0
    quota_high: float = 2.6
    pn_capacity: float = 10.0
    cap_factor_low: float = 1.2    # cpu_cap = quota * U(low, high)
    cap_factor_high: float = 1.6
    leakage_low: float = 0.02
    leakage_high: float = 0.10
    delay_base_low: float = 0.05   # seconds
    delay_base_high: float = 0.20
    delay_jitter_sigma: float = 0.02

    def validate(self) -> None:
        if self.quota_low <= 0 or self.quota_high < self.quota_low:
            raise ConfigError("quota bounds must be positive and ordered")
        if self.pn_capacity <= 0:
            raise ConfigError("pn_capacity must be positive")
        if not 0 <= self.pdr_mean - self.pdr_spread <= self.pdr_mean + self.pdr_spread <= 1:
            raise ConfigError("pdr mean/spread must keep samples in [0,1]")


@dataclass
class ThreatParams:
    """Attack-injection and threat-scoring parameters."""

    attack_rate: float = 0.05
    attack_duration: int = 5
    dt_max: float = 5.0            # clip for timing deviations (seconds)
    trim_delta: float = 0.2        # trimmed-mean fraction for collusion scenarios
    magnitude_low: float = 0.5
    magnitude_high: float = 1.0
    kinds: Tuple[str, ...] = ("MP", "SD", "RA", "ABP", "APT")
    cascade_scale: float = 0.6     # fraction of the source perturbation applied downstream
    violation_cpu: float = 0.95    # observable violation thresholds
    violation_delay: float = 1.0

    def validate(self) -> None:
        if not 0.0 <= self.attack_rate <= 1.0:
            raise ConfigError("attack_rate must lie in [0,1]")
        if self.attack_duration < 1:
            raise ConfigError("attack_duration must be >= 1")
        if self.dt_max <= 0:
            raise ConfigError("dt_max must be positive")
        if not 0 < self.trim_delta < 0.5:
            raise ConfigError("trim_delta must lie in (0, 0.5)")


@dataclass
class TrustParams:
    """Trust-evaluation parameters.

    ``lambda_decay`` scales the exponential drift penalty, ``signal_weights``
    weight the behavior signals, ``eta``/``rho`` blend recency against
    reporter stability in credibility weights, and ``kappa1``/``kappa2`` cap
    peer-derived trust by direct evidence.
    """

    lambda_decay: float = 2.0
    signal_weights: Tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    eta: float = 0.5
    rho: float = 1.0
    kappa1: float = 0.5
    kappa2: float = 0.5
    aggregator: str = "trimmed_mean"   # or "median"
    trim_delta: float = 0.2
    alphas: Tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    beta_time: float = 1.0
    history_window: int = 20
    controller_gain: float = 2.0
    default_gammas: Tuple[float, float, float] = (0.4, 0.3, 0.3)
    peer_count: int = 5

    def validate(self) -> None:
        if self.lambda_decay <= 0:
            raise ConfigError("lambda_decay must be positive")
        if abs(sum(self.signal_weights) - 1.0) > 1e-9 or any(w < 0 for w in self.signal_weights):
            raise ConfigError("signal_weights must be non-negative and sum to 1")
        if not 0.0 <= self.eta <= 1.0 or self.rho <= 0:
            raise ConfigError("eta in [0,1] and rho > 0 required")
        if abs(self.kappa1 + self.kappa2 - 1.0) > 1e-9 or self.kappa1 < 0 or self.kappa2 < 0:
            raise ConfigError("kappa1 + kappa2 must equal 1")
        if self.aggregator not in ("trimmed_mean", "median"):
            raise ConfigError("aggregator must be 'trimmed_mean' or 'median'")
        if not 0 < self.trim_delta < 0.5:
            raise ConfigError("trim_delta must lie in (0, 0.5)")
        if abs(sum(self.alphas) - 1.0) > 1e-9 or any(a < 0 for a in self.alphas):
            raise ConfigError("alphas must be non-negative and sum to 1")
        if self.beta_time <= 0 or self.history_window < 2 or self.peer_count < 3:
            raise ConfigError("beta_time > 0, history_window >= 2, peer_count >= 3 required")
        g = self.default_gammas
        if abs(sum(g) - 1.0) > 1e-9 or any(x < 0 for x in g):
            raise ConfigError("default_gammas must form a simplex point")


@dataclass
class ClassifierConfig:
    """Attention-encoder architecture and training hyperparameters."""

    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    batch_size: int = 128
    epochs: int = 5
    learning_rate: float = 1e-3
    patience: int = 5
    seq_len: int = 10
    n_features: int = len(FEATURE_NAMES)
    ffn_hidden: int = 128
    recon_weight: float = 1.0
    use_positional: bool = True
    split_fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        for name in ("d_model", "n_heads", "n_layers", "batch_size", "epochs",
                     "patience", "seq_len", "n_features", "ffn_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or any(f <= 0 for f in self.split_fractions):
            raise ConfigError("split_fractions must be positive and sum to 1")


@dataclass
class RcmParams:
    """Link-selection objective weights and feasibility thresholds."""

    beta_tradeoff: float = 0.001   # latency weight in the link objective
    l_max: float = 150.0           # mean-latency ceiling (ms)
    tau_res: float = 0.1           # resilience floor
    l_min: float = 0.3             # per-edge reliability floor
    alpha1: float = 1.0            # reward: resilience weight
    alpha2: float = 0.005          # reward: mean-latency weight
    alpha3: float = 0.5            # reward: low-trust edge penalty weight
    trust_floor: float = 0.5       # fused-trust threshold below which edges are penalized
    latency_low: float = 5.0       # candidate link latency draw (ms)
    latency_high: float = 120.0
    improve_iterations: int = 50
    improve_ma_window: int = 20
    improve_ma_tol: float = 1e-4

    def validate(self) -> None:
        if min(self.beta_tradeoff, self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ConfigError("objective and reward weights must be non-negative")
        if self.l_max <= 0 or not 0 <= self.tau_res <= 1 or not 0 <= self.l_min <= 1:
            raise ConfigError("invalid feasibility thresholds")
        if self.latency_low <= 0 or self.latency_high < self.latency_low:
            raise ConfigError("latency draw bounds must be positive and ordered")
        if self.improve_iterations < 0 or self.improve_ma_window < 1:
            raise ConfigError("invalid local-search settings")


@dataclass
class RunConfig:
    """Top-level simulation configuration; a report is a pure function of it."""

    vn_count: int = 100
    pm_count: int = 30
    seq_len: int = 10
    attack_rate: float = 0.05
    attack_duration: int = 5
    seed: int = 42
    timesteps: int = 200
    malicious_fraction: float = 0.3
    placement_headroom: float = 0.70
    rcm_refine_interval: int = 25
    log_retention: int = 256
    synth: TraceSynthParams = field(default_factory=TraceSynthParams)
    metadata: MetadataParams = field(default_factory=MetadataParams)
    threat: ThreatParams = field(default_factory=ThreatParams)
    trust: TrustParams = field(default_factory=TrustParams)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    rcm: RcmParams = field(default_factory=RcmParams)

    def __post_init__(self) -> None:
        # Keep the duplicated knobs coherent: the flat fields are the source
        # of truth for rate/duration/seq_len.
        self.threat.attack_rate = self.attack_rate
        self.threat.attack_duration = self.attack_duration
        self.classifier.seq_len = self.seq_len

    def validate(self) -> None:
        if self.vn_count < 1 or self.pm_count < 1 or self.vn_count < self.pm_count:
            raise ConfigError("need vn_count >= pm_count >= 1")
        if self.seq_len < 2:
            raise ConfigError("seq_len must be >= 2")
        if not 0.0 <= self.attack_rate <= 1.0:
            raise ConfigError("attack_rate must lie in [0,1]")
        if self.attack_duration < 1:
            raise ConfigError("attack_duration must be >= 1")
        if self.timesteps < 0:
            raise ConfigError("timesteps must be >= 0")
        if not 0.0 <= self.malicious_fraction <= 1.0:
            raise ConfigError("malicious_fraction must lie in [0,1]")
        if not 0.0 < self.placement_headroom <= 1.0:
            raise ConfigError("placement_headroom must lie in (0,1]")
        if self.rcm_refine_interval < 1 or self.log_retention < 1:
            raise ConfigError("rcm_refine_interval and log_retention must be >= 1")
        for sub in (self.synth, self.metadata, self.threat, self.trust,
                    self.classifier, self.rcm):
            sub.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        kwargs = dict(data)
        nested = {
            "synth": TraceSynthParams,
            "metadata": MetadataParams,
            "threat": ThreatParams,
            "trust": TrustParams,
            "classifier": ClassifierConfig,
            "rcm": RcmParams,
        }
        for key, sub_cls in nested.items():
            if key in kwargs and isinstance(kwargs[key], dict):
                kwargs[key] = _build_dataclass(sub_cls, kwargs[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(kwargs) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        # JSON arrays arrive as lists; restore tuples for tuple-typed fields.
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _build_dataclass(sub_cls, data: dict):
    known = {f.name for f in dataclasses.fields(sub_cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {sub_cls.__name__} keys: {sorted(unknown)}")
    coerced = {}
    for f in dataclasses.fields(sub_cls):
        if f.name in data:
            value = data[f.name]
            if isinstance(value, list):
                value = tuple(value)
            coerced[f.name] = value
    return sub_cls(**coerced)
