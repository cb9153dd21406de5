"""Execution-time budgets derived from a request's SLA and network estimate.

The end-to-end target is split as: network transfer (bounded conservatively
by twice the upload time, since responses are small text labels) plus model
execution. What remains for execution is the budget, widened into a range
[lower, upper] by the profile-uncertainty threshold so the selector can
explore near the limit. Also houses the downscale-vs-upload decision and an
online estimator of upload time from (payload size, transfer time) history.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

BYTES_PER_KB = 1000.0


class EstimationUnavailableError(RuntimeError):
    """No transfer history and no default network profile to estimate from."""


@dataclass(frozen=True, slots=True)
class RequestContext:
    """Timing inputs of one inference request.

    ``threshold_ms`` expresses uncertainty about the model performance
    profiles and must stay within [0, device_time_ms]: exploring beyond the
    expected on-device inference time would start on-device inference
    prematurely when the cloud could still meet the SLA.
    """

    sla_ms: float
    arrival_ms: float = 0.0
    input_transfer_ms: float = 0.0
    device_time_ms: float = 150.0
    threshold_ms: float = 30.0

    def __post_init__(self) -> None:
        if not self.sla_ms > 0:
            raise ValueError(f"sla_ms must be > 0, got {self.sla_ms}")
        if self.input_transfer_ms < 0:
            raise ValueError(
                f"input_transfer_ms must be >= 0, got {self.input_transfer_ms}"
            )
        if not self.device_time_ms > 0:
            raise ValueError(
                f"device_time_ms must be > 0, got {self.device_time_ms}"
            )
        if not 0.0 <= self.threshold_ms <= self.device_time_ms:
            raise ValueError(
                f"threshold_ms must be in [0, device_time_ms], got "
                f"{self.threshold_ms} with device_time_ms={self.device_time_ms}"
            )


@dataclass(frozen=True, slots=True)
class BudgetRange:
    """Soft/hard execution-time limits for one request.

    ``upper_ms`` equals the budget (the most execution time that fits the
    SLA after network transfer); ``lower_ms = upper_ms - threshold`` anchors
    exploration. A non-positive budget is legal and simply means no cloud
    model can fit; the selector falls back to the fastest model.
    """

    budget_ms: float
    upper_ms: float
    lower_ms: float

    def __post_init__(self) -> None:
        if self.lower_ms > self.upper_ms:
            raise ValueError(
                f"lower_ms ({self.lower_ms}) must be <= upper_ms ({self.upper_ms})"
            )

    @classmethod
    def of(cls, upper_ms: float, lower_ms: float) -> "BudgetRange":
        """Range with explicit limits (budget taken as the upper limit)."""
        return cls(budget_ms=upper_ms, upper_ms=upper_ms, lower_ms=lower_ms)


def compute_budget(ctx: RequestContext) -> BudgetRange:
    """Budget range for a request: sla - 2 * input transfer, minus threshold.

    The factor 2 bounds the full network round trip by twice the upload
    time (uploads dominate: requests carry images, responses carry labels).
    """
    budget = ctx.sla_ms - 2.0 * ctx.input_transfer_ms
    return BudgetRange(
        budget_ms=budget,
        upper_ms=budget,
        lower_ms=budget - ctx.threshold_ms,
    )


def should_downscale(
    t_downscale_ms: float,
    t_upload_small_ms: float,
    t_upload_orig_ms: float,
) -> bool:
    """Whether resizing before upload is no slower than uploading directly.

    True iff downscale time plus upload time of the smaller image does not
    exceed the upload time of the original.
    """
    for label, value in (
        ("t_downscale_ms", t_downscale_ms),
        ("t_upload_small_ms", t_upload_small_ms),
        ("t_upload_orig_ms", t_upload_orig_ms),
    ):
        if value < 0:
            raise ValueError(f"{label} must be >= 0, got {value}")
    return t_downscale_ms + t_upload_small_ms <= t_upload_orig_ms


# ---------------------------------------------------------------------------
# Network estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class NetworkProfile:
    """Static description of a network path: per-KB rate plus fixed overhead.

    ``jitter_model`` (consumed by the simulator) describes transfer-time
    variability, e.g. {"kind": "lognormal", "cv": 0.3}.
    """

    name: str
    fixed_overhead_ms: float
    per_kb_ms: float
    jitter_model: Optional[dict] = None

    def transfer_ms(self, payload_bytes: float) -> float:
        return self.fixed_overhead_ms + self.per_kb_ms * payload_bytes / BYTES_PER_KB


def load_network_profile(path: str | Path) -> NetworkProfile:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    required = {"name", "fixed_overhead_ms", "per_kb_ms", "jitter_model"}
    missing = required - data.keys()
    if missing:
        raise ValueError(f"network profile missing keys {sorted(missing)}")
    return NetworkProfile(
        name=data["name"],
        fixed_overhead_ms=float(data["fixed_overhead_ms"]),
        per_kb_ms=float(data["per_kb_ms"]),
        jitter_model=data["jitter_model"],
    )


class NetworkEstimator:
    """Online estimator of one-way upload time from (bytes, ms) history.

    Fits transfer time as ``overhead + rate * bytes`` by exponentially
    weighted least squares: each new observation gets weight ``alpha`` and
    all accumulated weight decays by ``1 - alpha``, so recent conditions
    dominate. With a single observation (or no payload-size spread) the fit
    degrades to a pure per-byte rate. With no history at all, estimates come
    from ``default_profile``; if that is also absent, estimation fails.

    The form is a pragmatic choice, deliberately simple and replaceable;
    the estimate is conservative only in how callers use it (round trip
    bounded by twice the upload time).
    """

    _VAR_FLOOR = 1e-12

    def __init__(
        self,
        alpha: float = 0.2,
        default_profile: Optional[NetworkProfile] = None,
    ):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.alpha = alpha
        self.default_profile = default_profile
        self._lock = threading.Lock()
        self._w = 0.0
        self._sx = 0.0
        self._sy = 0.0
        self._sxx = 0.0
        self._sxy = 0.0
        self._count = 0

    @property
    def observation_count(self) -> int:
        return self._count

    def observe(self, payload_bytes: float, elapsed_ms: float) -> None:
        if payload_bytes < 0:
            raise ValueError(f"payload_bytes must be >= 0, got {payload_bytes}")
        if not elapsed_ms >= 0:
            raise ValueError(f"elapsed_ms must be >= 0, got {elapsed_ms}")
        x = float(payload_bytes)
        y = float(elapsed_ms)
        with self._lock:
            decay = 1.0 - self.alpha
            self._w = self._w * decay + self.alpha
            self._sx = self._sx * decay + self.alpha * x
            self._sy = self._sy * decay + self.alpha * y
            self._sxx = self._sxx * decay + self.alpha * x * x
            self._sxy = self._sxy * decay + self.alpha * x * y
            self._count += 1

    def fit(self) -> tuple[float, float]:
        """Current (fixed_overhead_ms, rate_ms_per_byte) fit.

        Falls back to a through-origin rate when payload sizes show no
        spread, and to overhead-only when all observed payloads are zero.
        """
        with self._lock:
            if self._count == 0:
                raise EstimationUnavailableError("no transfer observations")
            mean_x = self._sx / self._w
            mean_y = self._sy / self._w
            var_x = self._sxx / self._w - mean_x * mean_x
            if var_x > self._VAR_FLOOR * max(1.0, mean_x * mean_x):
                cov = self._sxy / self._w - mean_x * mean_y
                rate = cov / var_x
                overhead = mean_y - rate * mean_x
                return overhead, rate
            if mean_x > 0:
                return 0.0, mean_y / mean_x
            return mean_y, 0.0

    def estimate_ms(self, payload_bytes: float) -> float:
        """Estimated one-way transfer time for a payload, never negative."""
        if payload_bytes < 0:
            raise ValueError(f"payload_bytes must be >= 0, got {payload_bytes}")
        if self._count == 0:
            if self.default_profile is None:
                raise EstimationUnavailableError(
                    "no transfer observations and no default network profile"
                )
            return max(0.0, self.default_profile.transfer_ms(payload_bytes))
        overhead, rate = self.fit()
        return max(0.0, overhead + rate * float(payload_bytes))


def lognormal_params(mean: float, cv: float) -> tuple[float, float]:
    """Underlying normal (mu, sigma) of a lognormal with given mean and CV."""
    if not mean > 0:
        raise ValueError(f"lognormal mean must be > 0, got {mean}")
    if cv < 0:
        raise ValueError(f"coefficient of variation must be >= 0, got {cv}")
    sigma2 = math.log(1.0 + cv * cv)
    mu = math.log(mean) - 0.5 * sigma2
    return mu, math.sqrt(sigma2)
