"""Telemetry ingestion, synthesis, windowing, and fleet construction.

Raw per-VM cpu/mem series are min-max normalized per series, windowed with
stride 1, and combined with node metadata into the per-timestep feature
streams consumed by the trust layer and the classifier. The fleet topology
(clients, sub-applications, virtual and physical nodes, candidate links) is
built deterministically from a seed.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import MetadataParams, RcmParams, TraceSynthParams
from .trust import context_factor_matrix

logger = logging.getLogger(__name__)

DEFAULT_TRACE_SCHEMA: Tuple[str, ...] = ("vn_id", "timestep", "cpu", "mem")


class TelemetryError(ValueError):
    """Raised for unreadable or malformed trace input."""


class PlacementError(ValueError):
    """Raised when a VN cannot be placed on any physical node."""


@dataclass
class TraceSeries:
    """One VM's ordered cpu/mem utilization series."""

    vn_id: int
    timesteps: np.ndarray
    cpu: np.ndarray
    mem: np.ndarray

    def __post_init__(self) -> None:
        self.timesteps = np.asarray(self.timesteps, dtype=np.int64)
        self.cpu = np.asarray(self.cpu, dtype=np.float64)
        self.mem = np.asarray(self.mem, dtype=np.float64)
        if not (len(self.timesteps) == len(self.cpu) == len(self.mem)):
            raise TelemetryError(f"vn {self.vn_id}: column lengths differ")
        if len(self.timesteps) > 1 and not np.all(np.diff(self.timesteps) > 0):
            raise TelemetryError(f"vn {self.vn_id}: timesteps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timesteps)

    def values(self) -> np.ndarray:
        """(T, 2) matrix of cpu, mem columns."""
        return np.stack([self.cpu, self.mem], axis=1)


@dataclass
class SignalVector:
    """Normalized behavior signals; every field in [0,1], higher is better.

    Negative indicators (consumption, violations) are inverted at
    construction so a drop in any field is a performance degradation.
    """

    pac: float
    mcr: float
    arc: float
    pvc_inv: float

    def __post_init__(self) -> None:
        for name in ("pac", "mcr", "arc", "pvc_inv"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"signal {name}={v} outside [0,1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.pac, self.mcr, self.arc, self.pvc_inv], dtype=np.float64)


@dataclass
class NodeMetadata:
    """Static per-VN metadata used by trust factors and placement."""

    model_drift: float
    pdr: float
    cpu_cap: float
    quota: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.model_drift <= 1.0:
            raise ValueError("model_drift outside [0,1]")
        if not 0.0 <= self.pdr <= 1.0:
            raise ValueError("pdr outside [0,1]")
        if self.cpu_cap <= 0 or self.quota <= 0:
            raise ValueError("cpu_cap and quota must be positive")


@dataclass
class ClientInfo:
    client_id: int
    role: str  # "benign" | "malicious"; hidden from the classifier


@dataclass
class SubApp:
    app_id: int
    owner: int   # owning client id
    vn_id: int   # virtual node executing this sub-app


@dataclass
class VnInfo:
    vn_id: int
    pn_id: int
    quota: float
    metadata: Optional[NodeMetadata] = None
    leakage_base: float = 0.05
    delay_base: float = 0.1


@dataclass
class PnInfo:
    pn_id: int
    capacity: float
    exposure: float = 0.5  # normalized host-risk coefficient


@dataclass(frozen=True)
class Link:
    """Undirected candidate link; stored with i < j."""

    i: int
    j: int
    reliability: float
    latency: float

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("self-links are not allowed")
        if self.i > self.j:
            object.__setattr__(self, "i", self.j)
            object.__setattr__(self, "j", self.i)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.i, self.j)


@dataclass
class FleetTopology:
    """Clients, sub-apps, virtual/physical nodes, placement, candidate links."""

    clients: List[ClientInfo]
    sub_apps: List[SubApp]
    vns: List[VnInfo]
    pns: List[PnInfo]
    links: List[Link]

    def validate(self) -> None:
        pn_ids = {p.pn_id for p in self.pns}
        loads: Dict[int, float] = {p.pn_id: 0.0 for p in self.pns}
        for vn in self.vns:
            if vn.pn_id not in pn_ids:
                raise ValueError(f"vn {vn.vn_id} mapped to unknown pn {vn.pn_id}")
            loads[vn.pn_id] += vn.quota
        for pn in self.pns:
            if loads[pn.pn_id] > pn.capacity + 1e-9:
                raise ValueError(f"pn {pn.pn_id} over capacity")
        seen = set()
        for link in self.links:
            if link.i == link.j:
                raise ValueError("self-link present")
            if link.key in seen:
                raise ValueError(f"duplicate link {link.key}")
            seen.add(link.key)

    def malicious_clients(self) -> List[int]:
        return [c.client_id for c in self.clients if c.role == "malicious"]

    def vns_on_pn(self, pn_id: int) -> List[int]:
        return [v.vn_id for v in self.vns if v.pn_id == pn_id]


def normalize_series(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0,1]; a constant series maps to 0.5 (midpoint)."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def load_traces(
    path: str,
    schema: Sequence[str] = DEFAULT_TRACE_SCHEMA,
    seq_len: int = 10,
) -> List[TraceSeries]:
    """Load per-VM CSV traces and min-max normalize each series per column.

    Series shorter than ``seq_len`` are skipped with a warning. Raises
    ``TelemetryError`` for a missing file, a malformed row (reported with its
    line number), or a file yielding no series at all.
    """
    schema = tuple(schema)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise TelemetryError(f"cannot read trace file {path}: {exc}") from exc
    rows: Dict[int, List[Tuple[int, float, float]]] = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TelemetryError(f"{path}: no series (empty file)")
        if [h.strip() for h in header] != list(schema):
            raise TelemetryError(f"{path}: header {header!r} does not match schema {schema!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vn_id = int(row[0])
                t = int(row[1])
                cpu = float(row[2])
                mem = float(row[3])
            except (ValueError, IndexError) as exc:
                raise TelemetryError(f"{path}:{lineno}: malformed row {row!r}") from exc
            rows.setdefault(vn_id, []).append((t, cpu, mem))
    if not rows:
        raise TelemetryError(f"{path}: no series")
    out: List[TraceSeries] = []
    for vn_id in sorted(rows):
        samples = sorted(rows[vn_id])
        if len(samples) < seq_len:
            logger.warning("vn %d: series of length %d < %d skipped", vn_id, len(samples), seq_len)
            continue
        ts = np.array([s[0] for s in samples], dtype=np.int64)
        cpu = normalize_series(np.array([s[1] for s in samples]))
        mem = normalize_series(np.array([s[2] for s in samples]))
        out.append(TraceSeries(vn_id=vn_id, timesteps=ts, cpu=cpu, mem=mem))
    if not out:
        raise TelemetryError(f"{path}: no series of length >= {seq_len}")
    return out


def synthesize_traces(
    vn_count: int,
    length: int,
    seed: int,
    params: Optional[TraceSynthParams] = None,
    seq_len: int = 10,
) -> List[TraceSeries]:
    """Generate benign per-VM series from a clipped mean-reverting noise walk.

    Deterministic for a given seed: two calls with equal arguments return
    byte-identical arrays.
    """
    if vn_count < 1:
        raise ValueError("vn_count must be >= 1")
    if length < seq_len:
        raise ValueError(f"length {length} < seq_len {seq_len}")
    p = params or TraceSynthParams()
    rng = np.random.default_rng(seed)
    out = []
    for vn_id in range(vn_count):
        cpu_mu = rng.uniform(p.cpu_mean_low, p.cpu_mean_high)
        mem_mu = rng.uniform(p.mem_mean_low, p.mem_mean_high)
        noise = rng.normal(0.0, p.noise_sigma, size=(length, 2))
        cpu = np.empty(length)
        mem = np.empty(length)
        cpu[0], mem[0] = cpu_mu, mem_mu
        for t in range(1, length):
            cpu[t] = cpu[t - 1] + p.reversion * (cpu_mu - cpu[t - 1]) + noise[t, 0]
            mem[t] = mem[t - 1] + p.reversion * (mem_mu - mem[t - 1]) + noise[t, 1]
        np.clip(cpu, p.clip_low, p.clip_high, out=cpu)
        np.clip(mem, p.clip_low, p.clip_high, out=mem)
        out.append(TraceSeries(vn_id=vn_id, timesteps=np.arange(length), cpu=cpu, mem=mem))
    return out


def window_sequences(
    series: Union[TraceSeries, np.ndarray], seq_len: int
) -> List[np.ndarray]:
    """Sliding windows with stride 1; count = length - seq_len + 1."""
    values = series.values() if isinstance(series, TraceSeries) else np.asarray(series)
    if values.ndim == 1:
        values = values[:, None]
    if len(values) < seq_len:
        raise ValueError(f"series of length {len(values)} shorter than seq_len {seq_len}")
    view = np.lib.stride_tricks.sliding_window_view(values, seq_len, axis=0)
    # view: (count, F, seq_len) -> (count, seq_len, F)
    return [w.T.copy() for w in view]


def window_matrix(values: np.ndarray, seq_len: int) -> np.ndarray:
    """(T, F) -> (T - seq_len + 1, seq_len, F) stride-1 window stack."""
    values = np.asarray(values)
    if len(values) < seq_len:
        raise ValueError(f"series of length {len(values)} shorter than seq_len {seq_len}")
    view = np.lib.stride_tricks.sliding_window_view(values, seq_len, axis=0)
    return np.ascontiguousarray(np.swapaxes(view, 1, 2))


def allocate_vns(
    vn_count: int,
    pn_count: int,
    seed: int,
    quotas: Optional[np.ndarray] = None,
    capacities: Optional[np.ndarray] = None,
    headroom: float = 1.0,
    params: Optional[MetadataParams] = None,
) -> Dict[int, int]:
    """First-fit-decreasing placement of VNs onto PNs by quota.

    Ties in quota are broken by a seeded shuffle. ``headroom`` caps the
    packable fraction of each PN's capacity (1.0 = pack to the brim). Raises
    ``PlacementError`` naming the first unplaceable VN.
    """
    if not vn_count >= pn_count >= 1:
        raise ValueError("need vn_count >= pn_count >= 1")
    p = params or MetadataParams()
    rng = np.random.default_rng(seed)
    if quotas is None:
        quotas = rng.uniform(p.quota_low, p.quota_high, size=vn_count)
    quotas = np.asarray(quotas, dtype=np.float64)
    if capacities is None:
        capacities = np.full(pn_count, p.pn_capacity, dtype=np.float64)
    capacities = np.asarray(capacities, dtype=np.float64)
    if len(quotas) != vn_count or len(capacities) != pn_count:
        raise ValueError("quotas/capacities length mismatch")

    order = rng.permutation(vn_count)
    order = order[np.argsort(-quotas[order], kind="stable")]
    loads = np.zeros(pn_count)
    limit = capacities * headroom
    placement: Dict[int, int] = {}
    for vn in order:
        q = quotas[vn]
        placed = False
        for pn in range(pn_count):
            if loads[pn] + q <= limit[pn] + 1e-12:
                loads[pn] += q
                placement[int(vn)] = pn
                placed = True
                break
        if not placed:
            raise PlacementError(f"vn {int(vn)} (quota {q:.3f}) does not fit on any pn")
    return placement


def generate_metadata(
    topology: FleetTopology,
    seed: int,
    params: Optional[MetadataParams] = None,
) -> Dict[int, NodeMetadata]:
    """Seeded per-VN metadata; quotas are taken from the placement."""
    p = params or MetadataParams()
    rng = np.random.default_rng(seed)
    out: Dict[int, NodeMetadata] = {}
    for vn in topology.vns:
        drift = rng.uniform(p.drift_low, p.drift_high)
        pdr = rng.uniform(p.pdr_mean - p.pdr_spread, p.pdr_mean + p.pdr_spread)
        cap = vn.quota * rng.uniform(p.cap_factor_low, p.cap_factor_high)
        out[vn.vn_id] = NodeMetadata(
            model_drift=float(drift), pdr=float(np.clip(pdr, 0.0, 1.0)),
            cpu_cap=float(cap), quota=float(vn.quota),
        )
    return out


def build_fleet(
    vn_count: int,
    pm_count: int,
    seed: int,
    malicious_fraction: float = 0.3,
    headroom: float = 1.0,
    metadata_params: Optional[MetadataParams] = None,
    rcm_params: Optional[RcmParams] = None,
) -> FleetTopology:
    """Construct the full fleet: one client per sub-app per VN.

    Client roles are drawn seeded and hidden from the classifier; candidate
    links span all client pairs with reliability min(pdr_i, pdr_j) and a
    seeded latency draw.
    """
    mp = metadata_params or MetadataParams()
    rp = rcm_params or RcmParams()
    seeds = np.random.SeedSequence(seed).spawn(5)

    alloc_rng = np.random.default_rng(seeds[0])
    quotas = alloc_rng.uniform(mp.quota_low, mp.quota_high, size=vn_count)
    placement = allocate_vns(
        vn_count, pm_count, seed=int(alloc_rng.integers(2**31)),
        quotas=quotas, headroom=headroom, params=mp,
    )

    role_rng = np.random.default_rng(seeds[1])
    n_mal = int(round(malicious_fraction * vn_count))
    mal_ids = set(role_rng.permutation(vn_count)[:n_mal].tolist())

    clients = [
        ClientInfo(client_id=i, role="malicious" if i in mal_ids else "benign")
        for i in range(vn_count)
    ]
    sub_apps = [SubApp(app_id=i, owner=i) for i in range(vn_count)]

    ctx_rng = np.random.default_rng(seeds[2])
    vns = []
    for i in range(vn_count):
        vns.append(VnInfo(
            vn_id=i, pn_id=placement[i], quota=float(quotas[i]),
            leakage_base=float(ctx_rng.uniform(mp.leakage_low, mp.leakage_high)),
            delay_base=float(ctx_rng.uniform(mp.delay_base_low, mp.delay_base_high)),
        ))
    pns = [
        PnInfo(pn_id=p, capacity=mp.pn_capacity, exposure=float(ctx_rng.uniform(0.3, 0.9)))
        for p in range(pm_count)
    ]

    topo = FleetTopology(clients=clients, sub_apps=sub_apps, vns=vns, pns=pns, links=[])
    meta_rng = np.random.default_rng(seeds[3])
    meta = generate_metadata(topo, seed=int(meta_rng.integers(2**31)), params=mp)
    for vn in topo.vns:
        vn.metadata = meta[vn.vn_id]

    link_rng = np.random.default_rng(seeds[4])
    links = []
    for i in range(vn_count):
        for j in range(i + 1, vn_count):
            rel = min(meta[i].pdr, meta[j].pdr)
            lat = float(link_rng.uniform(rp.latency_low, rp.latency_high))
            links.append(Link(i=i, j=j, reliability=float(rel), latency=lat))
    topo.links = links
    topo.validate()
    return topo


def _trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing-window mean along axis 1 with an expanding start."""
    x = np.asarray(x, dtype=np.float64)
    csum = np.cumsum(x, axis=1)
    T = x.shape[1]
    shifted = np.zeros_like(csum)
    if T > window:
        shifted[:, window:] = csum[:, :-window]
    counts = np.minimum(np.arange(T) + 1, window).astype(np.float64)
    return (csum - shifted) / counts


def _trailing_std(x: np.ndarray, window: int) -> np.ndarray:
    m = _trailing_mean(x, window)
    m2 = _trailing_mean(x * x, window)
    return np.sqrt(np.maximum(m2 - m * m, 0.0))


def derive_feature_streams(
    cpu: np.ndarray,
    mem: np.ndarray,
    delay: np.ndarray,
    drift: np.ndarray,
    leakage: np.ndarray,
    cpu_cap: np.ndarray,
    quota: np.ndarray,
    pdr: np.ndarray,
    window: int,
    beta_time: float = 1.0,
    overload_cpu: float = 0.9,
    violation_cpu: float = 0.95,
    violation_delay: float = 1.0,
) -> np.ndarray:
    """Derive the per-timestep feature matrix (n_vn, T, 11).

    All statistics use trailing windows only, so the feature row at time t is
    independent of telemetry after t. Column order follows
    ``config.FEATURE_NAMES``.
    """
    cpu = np.asarray(cpu, dtype=np.float64)
    mem = np.asarray(mem, dtype=np.float64)
    n, T = cpu.shape

    d_cpu = np.zeros_like(cpu)
    d_cpu[:, 1:] = np.abs(np.diff(cpu, axis=1))
    d_mem = np.zeros_like(mem)
    d_mem[:, 1:] = np.abs(np.diff(mem, axis=1))

    rough_cpu = _trailing_mean(d_cpu, window)
    rough_mem = _trailing_mean(d_mem, window)

    pac = np.clip((1.0 - 4.0 * rough_cpu) * (1.0 - np.clip(drift, 0.0, 1.0)), 0.0, 1.0)
    mcr = 1.0 - _trailing_mean((cpu > overload_cpu).astype(np.float64), window)
    arc = 1.0 - _trailing_mean(cpu, window)
    violations = ((cpu > violation_cpu) | (delay > violation_delay)).astype(np.float64)
    pvc_inv = 1.0 - np.clip(_trailing_mean(violations, window), 0.0, 1.0)

    err_rate = np.clip(6.0 * rough_mem, 0.0, 1.0)
    usage = cpu * cpu_cap[:, None]
    jitter = _trailing_std(delay, window)
    ctx = context_factor_matrix(
        err_rate=err_rate,
        delay=delay,
        usage=usage,
        quota=quota[:, None],
        pdr=np.broadcast_to(pdr[:, None], (n, T)),
        jitter=jitter,
        leakage=np.clip(leakage, 0.0, 1.0),
        beta_time=beta_time,
    )

    feats = np.empty((n, T, 11), dtype=np.float64)
    feats[:, :, 0] = cpu
    feats[:, :, 1] = mem
    feats[:, :, 2] = pac
    feats[:, :, 3] = mcr
    feats[:, :, 4] = arc
    feats[:, :, 5] = pvc_inv
    feats[:, :, 6:11] = ctx
    return feats
