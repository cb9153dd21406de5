"""Mock inference gateway exposing the selector over HTTP/JSON.

Endpoints:
    POST /v1/infer          run a selection and a mock execution
    GET  /v1/models         profile snapshot (profile file schema)
    PUT  /v1/models/{name}  profile upsert
    GET  /v1/metrics        plaintext counters, one ``name value`` per line

Each request estimates (or accepts) the upload time, derives the execution
budget, selects a model against a live profile snapshot, "executes" it on an
in-process mock backend that sleeps a sampled execution time, records the
realized time back into the store, and returns the full decision trace.

In test mode the per-request generator is seeded from (server seed, request
counter), so restarting the server and replaying the same request stream
reproduces every decision. In normal mode generators are entropy-seeded.
The backend is deliberately a small contract (``sample_and_run``) so a real
executor could replace the mock without touching the request path.
"""
from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field, field_validator

from .budget import (
    EstimationUnavailableError,
    NetworkEstimator,
    NetworkProfile,
    RequestContext,
    compute_budget,
)
from .profiles import (
    ModelProfile,
    ProfileFormatError,
    ProfileStore,
    profile_to_record,
    record_to_profile,
)
from .selector import SelectorConfig, select

# Default path model: the 330 KB preprocessed-image payload uploading in
# 63 ms on the measured campus WiFi.
DEFAULT_NETWORK_PROFILE = NetworkProfile(
    name="default",
    fixed_overhead_ms=0.0,
    per_kb_ms=63.0 / 330.0,
    jitter_model=None,
)


@dataclass
class GatewayConfig:
    """Server-side knobs; see the CLI ``serve`` subcommand for the flags."""

    seed: int = 0
    test_mode: bool = False
    default_threshold_ms: float = 30.0
    device_time_ms: float = 150.0
    time_scale: float = 1.0  # scales the mock backend's sleep only
    allow_create: bool = True
    network_profile: NetworkProfile = field(
        default_factory=lambda: DEFAULT_NETWORK_PROFILE
    )
    selector: SelectorConfig = field(default_factory=SelectorConfig)


class InferenceRequest(BaseModel):
    sla_ms: float = Field(gt=0)
    payload_bytes: int = Field(default=0, ge=0)
    t_input_ms: Optional[float] = Field(default=None, ge=0)
    threshold_ms: Optional[float] = Field(default=None, ge=0)

    @field_validator("sla_ms", "t_input_ms", "threshold_ms")
    @classmethod
    def _finite(cls, value):
        if value is not None and not np.isfinite(value):
            raise ValueError("must be finite")
        return value


class TimingBreakdown(BaseModel):
    t_input_est_ms: float
    exec_ms: float
    server_ms: float


class InferenceResponse(BaseModel):
    model: str
    label: str
    decision: dict
    timings: TimingBreakdown
    sla_met_server_side: bool


class _Metrics:
    """Request counters and server-time samples, guarded by one lock."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.requests_total = 0
        self.sla_miss_total = 0
        self.per_model: dict[str, int] = {}
        self.server_times: dict[str, list[float]] = {}

    def record(self, model: str, server_ms: float, miss: bool) -> None:
        with self._lock:
            self.requests_total += 1
            self.sla_miss_total += miss
            self.per_model[model] = self.per_model.get(model, 0) + 1
            samples = self.server_times.setdefault(model, [])
            samples.append(server_ms)
            if len(samples) > 10000:
                del samples[: len(samples) - 10000]

    def exposition(self) -> str:
        with self._lock:
            lines = [
                f"requests_total {self.requests_total}",
                f"sla_miss_total {self.sla_miss_total}",
            ]
            for model in sorted(self.per_model):
                label = model.replace("\\", "\\\\").replace('"', '\\"')
                lines.append(
                    f'model_requests_total{{model="{label}"}} {self.per_model[model]}'
                )
            for model in sorted(self.server_times):
                label = model.replace("\\", "\\\\").replace('"', '\\"')
                samples = self.server_times[model]
                p50, p99 = (float(v) for v in np.percentile(samples, [50.0, 99.0]))
                lines.append(f'server_time_ms_p50{{model="{label}"}} {p50!r}')
                lines.append(f'server_time_ms_p99{{model="{label}"}} {p99!r}')
        return "\n".join(lines) + "\n"


class MockBackend:
    """In-process stand-in for a model executor.

    Samples the profile's hot-start distribution, sleeps that long (scaled),
    and returns a deterministic label. Implements the backend contract
    (``sample_and_run(profile, rng) -> (exec_ms, label)``) that a real
    executor would satisfy.
    """

    def __init__(self, time_scale: float = 1.0):
        self.time_scale = time_scale

    def sample_and_run(
        self, profile: ModelProfile, rng: np.random.Generator
    ) -> tuple[float, str]:
        exec_ms = profile.mean_ms
        if profile.std_ms > 0:
            for _ in range(1000):
                exec_ms = rng.normal(profile.mean_ms, profile.std_ms)
                if exec_ms >= 0.0:
                    break
            else:
                exec_ms = 0.0
        if self.time_scale > 0:
            time.sleep(exec_ms * self.time_scale / 1000.0)
        return exec_ms, f"mock:{profile.name}"


def create_app(
    store: ProfileStore,
    config: Optional[GatewayConfig] = None,
    backend: Optional[MockBackend] = None,
) -> FastAPI:
    """Build the gateway app around a profile store."""
    cfg = config or GatewayConfig()
    backend = backend or MockBackend(time_scale=cfg.time_scale)
    estimator = NetworkEstimator(default_profile=cfg.network_profile)
    metrics = _Metrics()
    counter = itertools.count()
    counter_lock = threading.Lock()

    app = FastAPI(title="cnnselect gateway", version="1")
    app.state.store = store
    app.state.metrics = metrics
    app.state.estimator = estimator
    app.state.config = cfg

    def _next_rng() -> np.random.Generator:
        with counter_lock:
            index = next(counter)
        if cfg.test_mode:
            return np.random.default_rng([cfg.seed & ((1 << 64) - 1), index])
        return np.random.default_rng()

    @app.post("/v1/infer", response_model=InferenceResponse)
    def infer(request: InferenceRequest) -> InferenceResponse:
        started = time.perf_counter()
        if len(store) == 0:
            raise HTTPException(status_code=503, detail="no models available")
        if request.t_input_ms is not None:
            t_input = request.t_input_ms
            if request.payload_bytes > 0:
                estimator.observe(request.payload_bytes, t_input)
        else:
            try:
                t_input = estimator.estimate_ms(request.payload_bytes)
            except EstimationUnavailableError as exc:
                raise HTTPException(status_code=503, detail=str(exc)) from None
        threshold = (
            request.threshold_ms
            if request.threshold_ms is not None
            else cfg.default_threshold_ms
        )
        threshold = min(max(threshold, 0.0), cfg.device_time_ms)
        ctx = RequestContext(
            sla_ms=request.sla_ms,
            arrival_ms=time.time() * 1000.0,
            input_transfer_ms=t_input,
            device_time_ms=cfg.device_time_ms,
            threshold_ms=threshold,
        )
        budget = compute_budget(ctx)
        rng = _next_rng()
        decision = select(store.snapshot(), budget, cfg.selector, rng)
        profile = store.get(decision.chosen)
        exec_ms, label = backend.sample_and_run(profile, rng)
        if exec_ms > 0:
            store.observe(decision.chosen, exec_ms)
        server_ms = (time.perf_counter() - started) * 1000.0
        # Server-side feasibility: the conservative round trip (twice the
        # upload estimate) plus the realized execution; the true download
        # time is unknowable here.
        sla_met = 2.0 * t_input + exec_ms <= request.sla_ms
        metrics.record(decision.chosen, server_ms, not sla_met)
        return InferenceResponse(
            model=decision.chosen,
            label=label,
            decision=decision.to_dict(),
            timings=TimingBreakdown(
                t_input_est_ms=t_input, exec_ms=exec_ms, server_ms=server_ms
            ),
            sla_met_server_side=sla_met,
        )

    @app.get("/v1/models")
    def list_models() -> list[dict]:
        return [profile_to_record(p) for p in store.snapshot()]

    @app.put("/v1/models/{name}")
    def put_model(name: str, record: dict) -> dict:
        record = dict(record)
        record.setdefault("name", name)
        if record["name"] != name:
            raise HTTPException(
                status_code=400,
                detail=f"body name {record['name']!r} does not match path {name!r}",
            )
        try:
            profile = record_to_profile(record, where=f"profile {name!r}")
        except ProfileFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        if name not in store and not cfg.allow_create:
            raise HTTPException(status_code=409, detail=f"unknown model {name!r}")
        stored = store.set_profile(profile, allow_create=True)
        return profile_to_record(stored)

    @app.get("/v1/metrics", response_class=PlainTextResponse)
    def get_metrics() -> str:
        return metrics.exposition()

    return app
