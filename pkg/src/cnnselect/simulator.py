"""Deterministic seeded replay of inference request streams.

For each (SLA target, policy) cell the simulator samples upload times from a
network model, runs the policy against the current profile snapshot, samples
the chosen model's execution time from its measured distribution (cold-start
distribution when the model is not resident), and accounts the end-to-end
time. It reports SLA miss rate, effective accuracy, latency percentiles and
a model-usage histogram per cell.

Determinism: every cell owns an independent generator derived from
``(seed, policy index, round(sla * 1000))`` via numpy's SeedSequence, so a
(config, seed) pair fully determines every sampled value and cells can run
in any order. The adaptive policy keeps its own profile store, updated
online from realized hot-start execution times; all sampling draws from the
immutable seed statistics.

Policies: ``cnnselect`` (the three-stage probabilistic selector, with the
budget derived from the realized upload time), ``greedy`` (most accurate
model whose mean fits the raw SLA, network-blind), ``fastest`` (always the
lowest-mean model), ``oracle`` (per-request best feasible model under the
realized times, an upper bound on attainable accuracy, not a deployable
policy), and ``cnnselect_device`` (cnnselect plus an on-device escape hatch
for requests the cloud cannot fit).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .budget import (
    BudgetRange,
    RequestContext,
    compute_budget,
    load_network_profile,
    lognormal_params,
)
from .profiles import ModelProfile, ProfileStore, load_profiles
from .selector import (
    SelectorConfig,
    fastest_select,
    greedy_select,
    select,
)
from .version import __version__

POLICIES = ("cnnselect", "greedy", "fastest", "oracle", "cnnselect_device")
# The device variant shares cnnselect's stream index: it replays the same
# sampled requests and decisions, diverging only where the device path fires.
_POLICY_INDEX = {
    "cnnselect": 0,
    "greedy": 1,
    "fastest": 2,
    "oracle": 3,
    "cnnselect_device": 0,
}

DEVICE_MODEL_NAME = "on-device"

REPORT_COLUMNS = (
    "sla_ms",
    "policy",
    "miss_rate",
    "accuracy",
    "lat_mean",
    "lat_p25",
    "lat_p50",
    "lat_p75",
    "lat_p99",
)
USAGE_COLUMNS = ("sla_ms", "policy", "model", "fraction")

_SEED_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    """A simulation configuration is invalid or references missing inputs."""


class InsufficientPoliciesError(ValueError):
    """A comparison needs at least two policies in the report."""


# ---------------------------------------------------------------------------
# Network models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class NetworkSpec:
    """Parsed network model description.

    Kinds: ``fixed`` (constant mean_ms), ``normal`` (mean_ms, std_ms,
    truncated at 0), ``lognormal`` (mean_ms with coefficient of variation
    cv), ``trace`` (CSV rows ``t_input_ms[,t_output_ms]``, cycled when
    shorter than the request count), ``profile`` (a network profile file
    evaluated at payload_kb, jittered per its jitter_model).
    """

    kind: str
    mean_ms: float = 0.0
    std_ms: float = 0.0
    cv: float = 0.0
    path: Optional[str] = None
    payload_kb: float = 330.0

    def describe(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.mean_ms!r}"
        if self.kind == "normal":
            return f"normal:{self.mean_ms!r},{self.std_ms!r}"
        if self.kind == "lognormal":
            return f"lognormal:{self.mean_ms!r},{self.cv!r}"
        if self.kind == "trace":
            return f"trace:{self.path}"
        return f"profile:{self.path},{self.payload_kb!r}"


def parse_network_spec(text: Union[str, NetworkSpec]) -> NetworkSpec:
    """Parse CLI-style network descriptions, e.g. ``fixed:63``.

    Accepted forms: ``fixed:MEAN``, ``normal:MEAN,STD``,
    ``lognormal:MEAN,CV``, ``trace:PATH``, ``profile:PATH[,PAYLOAD_KB]``.
    """
    if isinstance(text, NetworkSpec):
        return text
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "fixed":
            mean = float(rest)
            if mean < 0:
                raise ValueError("fixed network time must be >= 0")
            return NetworkSpec(kind="fixed", mean_ms=mean)
        if kind == "normal":
            mean_s, std_s = rest.split(",")
            mean, std = float(mean_s), float(std_s)
            if mean < 0 or std < 0:
                raise ValueError("normal network parameters must be >= 0")
            return NetworkSpec(kind="normal", mean_ms=mean, std_ms=std)
        if kind == "lognormal":
            mean_s, cv_s = rest.split(",")
            lognormal_params(float(mean_s), float(cv_s))  # validates
            return NetworkSpec(kind="lognormal", mean_ms=float(mean_s), cv=float(cv_s))
        if kind == "trace":
            if not rest:
                raise ValueError("trace network needs a file path")
            return NetworkSpec(kind="trace", path=rest)
        if kind == "profile":
            parts = rest.split(",")
            if not parts or not parts[0]:
                raise ValueError("profile network needs a file path")
            payload_kb = float(parts[1]) if len(parts) > 1 else 330.0
            return NetworkSpec(kind="profile", path=parts[0], payload_kb=payload_kb)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid network spec {text!r}: {exc}") from None
    raise ConfigError(
        f"invalid network spec {text!r}: unknown kind {kind!r} "
        "(expected fixed | normal | lognormal | trace | profile)"
    )


def load_trace(path: Union[str, Path]) -> list[tuple[float, Optional[float]]]:
    """Load a request trace: one ``t_input_ms[,t_output_ms]`` row per line."""
    rows: list[tuple[float, Optional[float]]] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1:
            try:
                float(row[0])
            except ValueError:
                continue  # optional header
        try:
            t_input = float(row[0])
            t_output = float(row[1]) if len(row) > 1 and row[1].strip() else None
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: invalid trace row {row}") from None
        if t_input < 0 or (t_output is not None and t_output < 0):
            raise ConfigError(f"{path}: line {lineno}: negative transfer time")
        rows.append((t_input, t_output))
    if not rows:
        raise ConfigError(f"{path}: trace file has no rows")
    return rows


def _sample_truncated_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    """Normal(mean, std) draw truncated at 0 by resampling."""
    if std <= 0.0:
        return max(mean, 0.0)
    for _ in range(1000):
        x = rng.normal(mean, std)
        if x >= 0.0:
            return x
    return 0.0


class NetworkSampler:
    """Per-cell sampler of (t_input, optional t_output) pairs.

    Create one per simulation cell: trace cursors start at row 0 so every
    cell replays the same trace stream.
    """

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self._trace: Optional[list[tuple[float, Optional[float]]]] = None
        self._cursor = 0
        self._mean = spec.mean_ms
        self._jitter = (spec.kind, spec.std_ms, spec.cv)
        if spec.kind == "trace":
            self._trace = load_trace(spec.path)
        elif spec.kind == "profile":
            profile = load_network_profile(spec.path)
            self._mean = profile.transfer_ms(spec.payload_kb * 1000.0)
            jitter = profile.jitter_model or {"kind": "fixed"}
            kind = jitter.get("kind", "fixed")
            if kind == "fixed":
                self._jitter = ("fixed", 0.0, 0.0)
            elif kind == "normal":
                self._jitter = ("normal", float(jitter.get("std_ms", 0.0)), 0.0)
            elif kind == "lognormal":
                self._jitter = ("lognormal", 0.0, float(jitter.get("cv", 0.3)))
            else:
                raise ConfigError(f"unknown jitter model kind {kind!r}")
        if self._jitter[0] == "lognormal" and self._mean > 0:
            self._ln_params = lognormal_params(self._mean, self._jitter[2])

    def sample(self, rng: np.random.Generator) -> tuple[float, Optional[float]]:
        if self._trace is not None:
            row = self._trace[self._cursor % len(self._trace)]
            self._cursor += 1
            return row
        kind, std, _cv = self._jitter
        if kind == "fixed" or self._mean == 0.0:
            return self._mean, None
        if kind == "normal":
            return _sample_truncated_normal(rng, self._mean, std), None
        mu, sigma = self._ln_params
        return float(rng.lognormal(mu, sigma)), None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def resolve_threshold(threshold: Union[float, str], device_time_ms: float) -> float:
    """Resolve a threshold policy (fixed ms or ``fraction:F`` of T_D)."""
    if isinstance(threshold, str):
        kind, _, value = threshold.partition(":")
        if kind.strip() == "fraction":
            try:
                fraction = float(value)
            except ValueError:
                raise ConfigError(f"invalid threshold fraction {value!r}") from None
            if not 0.0 <= fraction <= 1.0:
                raise ConfigError("threshold fraction must be in [0, 1]")
            return fraction * device_time_ms
        try:
            threshold = float(threshold)
        except ValueError:
            raise ConfigError(
                f"invalid threshold {threshold!r} (number or fraction:F)"
            ) from None
    value = float(threshold)
    if not 0.0 <= value <= device_time_ms:
        raise ConfigError(
            f"threshold_ms must be in [0, device_time_ms={device_time_ms}], got {value}"
        )
    return value


def parse_cold_start_mode(mode: str) -> tuple[str, int]:
    """Parse ``always_hot`` or ``lru:CAPACITY``."""
    if mode == "always_hot":
        return ("always_hot", 0)
    kind, _, capacity = mode.partition(":")
    if kind == "lru":
        try:
            cap = int(capacity)
        except ValueError:
            raise ConfigError(f"invalid lru capacity {capacity!r}") from None
        if cap < 1:
            raise ConfigError("lru capacity must be >= 1")
        return ("lru", cap)
    raise ConfigError(
        f"unknown cold_start_mode {mode!r} (expected always_hot | lru:N)"
    )


@dataclass
class SimulationConfig:
    """Inputs of one simulation run; see module docstring for semantics.

    ``threshold_ms`` accepts a fixed millisecond value or ``fraction:F`` of
    ``device_time_ms``. ``device_accuracy`` defaults to the accuracy of the
    store's fastest model (the model a device would ship). ``pseudo_count``
    seeds the adaptive policy's store so its first online updates do not
    whipsaw the pre-measured statistics.
    """

    profiles_path: Union[str, Path]
    network: Union[str, NetworkSpec] = "lognormal:63,0.3"
    sla_sweep: Sequence[float] = (200.0,)
    requests_per_sla: int = 10000
    policies: Sequence[str] = ("cnnselect", "greedy", "fastest")
    cold_start_mode: str = "always_hot"
    device_time_ms: float = 150.0
    threshold_ms: Union[float, str] = 30.0
    device_accuracy: Optional[float] = None
    output_ratio: float = 0.1
    pseudo_count: int = 1000
    accuracy_metric: str = "top1"
    include_base_in_exploration: bool = True
    denominator_epsilon_ms: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.requests_per_sla <= 0:
            raise ConfigError(
                f"requests_per_sla must be > 0, got {self.requests_per_sla}"
            )
        if not self.sla_sweep:
            raise ConfigError("sla_sweep must be non-empty")
        for sla in self.sla_sweep:
            if not sla > 0:
                raise ConfigError(f"sla values must be > 0, got {sla}")
        if not self.policies:
            raise ConfigError("policies must be non-empty")
        for policy in self.policies:
            if policy not in POLICIES:
                raise ConfigError(
                    f"unknown policy {policy!r} (expected one of {POLICIES})"
                )
        if len(set(self.policies)) != len(list(self.policies)):
            raise ConfigError("policies must be unique")
        if not self.device_time_ms > 0:
            raise ConfigError("device_time_ms must be > 0")
        if not 0.0 <= self.output_ratio:
            raise ConfigError("output_ratio must be >= 0")
        parse_network_spec(self.network)
        parse_cold_start_mode(self.cold_start_mode)
        resolve_threshold(self.threshold_ms, self.device_time_ms)

    def echo(self) -> dict:
        """Config echo for report metadata (stable key order)."""
        return {
            "profiles_path": str(self.profiles_path),
            "network": parse_network_spec(self.network).describe(),
            "sla_sweep": [float(s) for s in self.sla_sweep],
            "requests_per_sla": self.requests_per_sla,
            "policies": list(self.policies),
            "cold_start_mode": self.cold_start_mode,
            "device_time_ms": self.device_time_ms,
            "threshold_ms": self.threshold_ms,
            "device_accuracy": self.device_accuracy,
            "output_ratio": self.output_ratio,
            "pseudo_count": self.pseudo_count,
            "accuracy_metric": self.accuracy_metric,
            "include_base_in_exploration": self.include_base_in_exploration,
            "denominator_epsilon_ms": self.denominator_epsilon_ms,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RequestRecord:
    """Per-request trace row kept when a run collects request logs."""

    index: int
    t_input_ms: float
    t_output_ms: float
    exec_ms: float
    e2e_ms: float
    miss: bool
    model: str
    path: str  # "cloud" or "device"
    fallback: bool
    budget_upper_ms: float
    projected_ms: float  # decision-time mean + std of the chosen model


@dataclass(frozen=True, slots=True)
class PolicyStats:
    """Aggregates for one (SLA target, policy) cell."""

    sla_ms: float
    policy: str
    miss_rate: float
    accuracy: float
    lat_mean: float
    lat_p25: float
    lat_p50: float
    lat_p75: float
    lat_p99: float
    usage: dict[str, float] = field(default_factory=dict)

    def row(self) -> list:
        return [
            self.sla_ms,
            self.policy,
            self.miss_rate,
            self.accuracy,
            self.lat_mean,
            self.lat_p25,
            self.lat_p50,
            self.lat_p75,
            self.lat_p99,
        ]


@dataclass
class SimulationReport:
    """Per-cell aggregates plus a config/seed/version metadata echo."""

    rows: list[PolicyStats]
    metadata: dict
    request_log: Optional[dict[tuple[float, str], list[RequestRecord]]] = None

    def policies(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.policy)
        return list(seen)

    def slas(self) -> list[float]:
        seen: dict[float, None] = {}
        for row in self.rows:
            seen.setdefault(row.sla_ms)
        return list(seen)

    def cell(self, sla_ms: float, policy: str) -> PolicyStats:
        for row in self.rows:
            if row.sla_ms == sla_ms and row.policy == policy:
                return row
        raise KeyError((sla_ms, policy))

    def csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow(_format_cell(v) for v in row.row())
        return out.getvalue()

    def usage_csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(USAGE_COLUMNS)
        for row in self.rows:
            for model in sorted(row.usage):
                writer.writerow(
                    _format_cell(v)
                    for v in (row.sla_ms, row.policy, model, row.usage[model])
                )
        return out.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "results": [
                {
                    "sla_ms": row.sla_ms,
                    "policy": row.policy,
                    "miss_rate": row.miss_rate,
                    "accuracy": row.accuracy,
                    "lat_mean": row.lat_mean,
                    "lat_p25": row.lat_p25,
                    "lat_p50": row.lat_p50,
                    "lat_p75": row.lat_p75,
                    "lat_p99": row.lat_p99,
                    "usage": {m: row.usage[m] for m in sorted(row.usage)},
                }
                for row in self.rows
            ],
        }

    def json_text(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, data: dict) -> "SimulationReport":
        rows = [
            PolicyStats(
                sla_ms=float(entry["sla_ms"]),
                policy=entry["policy"],
                miss_rate=float(entry["miss_rate"]),
                accuracy=float(entry["accuracy"]),
                lat_mean=float(entry["lat_mean"]),
                lat_p25=float(entry["lat_p25"]),
                lat_p50=float(entry["lat_p50"]),
                lat_p75=float(entry["lat_p75"]),
                lat_p99=float(entry["lat_p99"]),
                usage=dict(entry.get("usage", {})),
            )
            for entry in data["results"]
        ]
        return cls(rows=rows, metadata=data.get("metadata", {}))

    @classmethod
    def load_json(cls, path: Union[str, Path]) -> "SimulationReport":
        return cls.from_json_dict(
            json.loads(Path(path).read_text(encoding="utf-8"))
        )

    def write(self, path: Union[str, Path]) -> list[Path]:
        """Write the report; CSV output gets a companion ``*.usage.csv``.

        The format follows the extension: ``.json`` writes one file with
        results and usage combined, anything else writes the report CSV plus
        the usage CSV alongside it.
        """
        path = Path(path)
        if path.suffix.lower() == ".json":
            path.write_text(self.json_text(), encoding="utf-8")
            return [path]
        usage_path = path.with_suffix(".usage.csv")
        path.write_text(self.csv_text(), encoding="utf-8")
        usage_path.write_text(self.usage_csv_text(), encoding="utf-8")
        return [path, usage_path]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Core loop
# ---------------------------------------------------------------------------

class _ExecutionSampler:
    """Samples realized execution times from the seed statistics.

    Keeps the LRU residency cache when cold starts are enabled; models
    without cold-start statistics are pinned hot and never occupy cache
    capacity.
    """

    def __init__(
        self,
        truth: dict[str, ModelProfile],
        mode: str,
        capacity: int,
    ):
        self.truth = truth
        self.mode = mode
        self.capacity = capacity
        self._cache: OrderedDict[str, None] = OrderedDict()
        if mode == "lru":
            for name in sorted(truth):
                profile = truth[name]
                if profile.loaded and profile.cold_start_mean_ms is not None:
                    self._cache[name] = None
                    if len(self._cache) >= capacity:
                        break

    def sample(self, name: str, rng: np.random.Generator) -> tuple[float, bool]:
        """Realized execution time and whether it was a cold start."""
        profile = self.truth[name]
        cold = False
        if self.mode == "lru" and profile.cold_start_mean_ms is not None:
            if name in self._cache:
                self._cache.move_to_end(name)
            else:
                cold = True
                self._cache[name] = None
                if len(self._cache) > self.capacity:
                    self._cache.popitem(last=False)
        if cold:
            mean = profile.cold_start_mean_ms
            std = profile.cold_start_std_ms or 0.0
        else:
            mean, std = profile.mean_ms, profile.std_ms
        return _sample_truncated_normal(rng, mean, std), cold


def _cell_rng(seed: int, policy: str, sla_ms: float) -> np.random.Generator:
    """Generator for one cell: seeded by (seed, policy index, sla in us)."""
    return np.random.default_rng(
        [seed & _SEED_MASK, _POLICY_INDEX[policy], int(round(sla_ms * 1000.0))]
    )


def _run_cell(
    cfg: SimulationConfig,
    profiles: Sequence[ModelProfile],
    sla_ms: float,
    policy: str,
    collect: bool,
) -> tuple[PolicyStats, Optional[list[RequestRecord]]]:
    rng = _cell_rng(cfg.seed, policy, sla_ms)
    spec = parse_network_spec(cfg.network)
    sampler = NetworkSampler(spec)
    truth = {p.name: p for p in profiles}
    mode, capacity = parse_cold_start_mode(cfg.cold_start_mode)
    executor = _ExecutionSampler(truth, mode, capacity)
    threshold = resolve_threshold(cfg.threshold_ms, cfg.device_time_ms)
    metric = cfg.accuracy_metric
    n = cfg.requests_per_sla

    sel_cfg = SelectorConfig(
        accuracy_metric=metric,
        include_base_in_exploration=cfg.include_base_in_exploration,
        denominator_epsilon_ms=cfg.denominator_epsilon_ms,
        rng_seed=cfg.seed,
    )
    adaptive = policy in ("cnnselect", "cnnselect_device")
    store = ProfileStore(profiles, pseudo_count=cfg.pseudo_count) if adaptive else None
    static_profiles = tuple(sorted(profiles, key=lambda p: p.name))
    fastest = fastest_select(static_profiles)
    device_accuracy = (
        cfg.device_accuracy
        if cfg.device_accuracy is not None
        else fastest.accuracy(metric)
    )
    model_names = sorted(truth)

    latencies = np.empty(n)
    accuracy_sum = 0.0
    misses = 0
    usage: Counter[str] = Counter()
    log: Optional[list[RequestRecord]] = [] if collect else None

    for i in range(n):
        t_input, t_output = sampler.sample(rng)
        if t_output is None:
            t_output = cfg.output_ratio * t_input
        fallback = False
        device = False
        projected = 0.0
        budget_upper = sla_ms

        if adaptive:
            ctx = RequestContext(
                sla_ms=sla_ms,
                arrival_ms=float(i),
                input_transfer_ms=t_input,
                device_time_ms=cfg.device_time_ms,
                threshold_ms=threshold,
            )
            budget = compute_budget(ctx)
            budget_upper = budget.upper_ms
            snap = store.snapshot()
            decision = select(snap, budget, sel_cfg, rng)
            chosen = decision.chosen
            fallback = decision.fallback
            est = next(p for p in snap if p.name == chosen)
            projected = est.mean_ms + est.std_ms
            if policy == "cnnselect_device":
                # On-device escape: the cloud projection busts the soft
                # limit and the device is expected to beat the cloud path.
                if projected >= budget.upper_ms and cfg.device_time_ms < (
                    2.0 * t_input + projected
                ):
                    device = True
        elif policy == "greedy":
            chosen = greedy_select(
                static_profiles, BudgetRange.of(sla_ms, sla_ms), metric
            ).name
        elif policy == "fastest":
            chosen = fastest.name
        else:  # oracle
            z = rng.standard_normal()
            exec_by_model = {
                name: max(0.0, truth[name].mean_ms + truth[name].std_ms * z)
                for name in model_names
            }
            feasible = [
                name
                for name in model_names
                if t_input + exec_by_model[name] + t_output <= sla_ms
            ]
            if feasible:
                chosen = min(
                    feasible,
                    key=lambda m: (
                        -truth[m].accuracy(metric),
                        truth[m].mean_ms,
                        m,
                    ),
                )
            else:
                chosen = min(model_names, key=lambda m: (exec_by_model[m], m))
            exec_ms = exec_by_model[chosen]

        if device:
            exec_ms = cfg.device_time_ms
            e2e = cfg.device_time_ms
            accuracy = device_accuracy
            usage_key = DEVICE_MODEL_NAME
        else:
            if policy != "oracle":
                exec_ms, cold = executor.sample(chosen, rng)
                if adaptive and not cold:
                    store.observe(chosen, exec_ms)
            e2e = t_input + exec_ms + t_output
            accuracy = truth[chosen].accuracy(metric)
            usage_key = chosen

        miss = e2e > sla_ms
        latencies[i] = e2e
        accuracy_sum += accuracy
        misses += miss
        usage[usage_key] += 1
        if log is not None:
            log.append(
                RequestRecord(
                    index=i,
                    t_input_ms=t_input,
                    t_output_ms=t_output,
                    exec_ms=exec_ms,
                    e2e_ms=e2e,
                    miss=miss,
                    model=usage_key,
                    path="device" if device else "cloud",
                    fallback=fallback,
                    budget_upper_ms=budget_upper,
                    projected_ms=projected,
                )
            )

    p25, p50, p75, p99 = (
        float(v) for v in np.percentile(latencies, [25.0, 50.0, 75.0, 99.0])
    )
    stats = PolicyStats(
        sla_ms=float(sla_ms),
        policy=policy,
        miss_rate=misses / n,
        accuracy=accuracy_sum / n,
        lat_mean=float(latencies.mean()),
        lat_p25=p25,
        lat_p50=p50,
        lat_p75=p75,
        lat_p99=p99,
        usage={name: count / n for name, count in sorted(usage.items())},
    )
    return stats, log


def run_simulation(
    cfg: SimulationConfig, collect_requests: bool = False
) -> SimulationReport:
    """Run every (SLA, policy) cell; deterministic in (config, seed)."""
    cfg.validate()
    try:
        profiles = load_profiles(cfg.profiles_path)
    except FileNotFoundError:
        raise ConfigError(f"profiles file not found: {cfg.profiles_path}") from None
    if not profiles:
        raise ConfigError(f"profiles file is empty: {cfg.profiles_path}")
    rows = []
    request_log: dict[tuple[float, str], list[RequestRecord]] = {}
    for sla in cfg.sla_sweep:
        for policy in cfg.policies:
            stats, log = _run_cell(cfg, profiles, float(sla), policy, collect_requests)
            rows.append(stats)
            if log is not None:
                request_log[(float(sla), policy)] = log
    metadata = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "version": f"cnnselect-{__version__}",
    }
    return SimulationReport(
        rows=rows,
        metadata=metadata,
        request_log=request_log if collect_requests else None,
    )


def simulate_device_fallback(
    cfg: SimulationConfig, collect_requests: bool = False
) -> SimulationReport:
    """Run with the on-device escape hatch as an extra policy column."""
    policies = list(cfg.policies)
    if "cnnselect_device" not in policies:
        policies = policies + ["cnnselect_device"]
    cfg = dataclasses.replace(cfg, policies=tuple(policies))
    return run_simulation(cfg, collect_requests=collect_requests)


# ---------------------------------------------------------------------------
# Policy comparison
# ---------------------------------------------------------------------------

def compare_policies(
    report: SimulationReport,
    baseline: str = "greedy",
    candidate: str = "cnnselect",
) -> dict:
    """Per-SLA deltas of candidate vs baseline, with a max-over-SLA summary.

    Latency reduction is relative (% of baseline mean latency); accuracy and
    miss-rate deltas are absolute (candidate minus baseline).
    """
    policies = report.policies()
    if len(policies) < 2:
        raise InsufficientPoliciesError(
            f"comparison needs >= 2 policies, report has {policies}"
        )
    for name in (baseline, candidate):
        if name not in policies:
            raise ConfigError(f"policy {name!r} not present in report {policies}")
    rows = []
    for sla in report.slas():
        base = report.cell(sla, baseline)
        cand = report.cell(sla, candidate)
        reduction = (
            100.0 * (base.lat_mean - cand.lat_mean) / base.lat_mean
            if base.lat_mean > 0
            else 0.0
        )
        rows.append(
            {
                "sla_ms": sla,
                "latency_reduction_pct": reduction,
                "accuracy_delta": cand.accuracy - base.accuracy,
                "miss_rate_delta": cand.miss_rate - base.miss_rate,
            }
        )
    best = max(rows, key=lambda r: r["latency_reduction_pct"])
    summary = {
        "baseline": baseline,
        "candidate": candidate,
        "max_latency_reduction_pct": best["latency_reduction_pct"],
        "max_latency_reduction_at_sla_ms": best["sla_ms"],
        "max_accuracy_delta": max(r["accuracy_delta"] for r in rows),
        "min_miss_rate_delta": min(r["miss_rate_delta"] for r in rows),
    }
    return {"rows": rows, "summary": summary}


def comparison_csv_text(comparison: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ("sla_ms", "latency_reduction_pct", "accuracy_delta", "miss_rate_delta")
    )
    for row in comparison["rows"]:
        writer.writerow(
            _format_cell(row[k])
            for k in (
                "sla_ms",
                "latency_reduction_pct",
                "accuracy_delta",
                "miss_rate_delta",
            )
        )
    summary = comparison["summary"]
    writer.writerow(
        (
            "max",
            _format_cell(summary["max_latency_reduction_pct"]),
            _format_cell(summary["max_accuracy_delta"]),
            _format_cell(summary["min_miss_rate_delta"]),
        )
    )
    return out.getvalue()
