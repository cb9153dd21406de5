"""Model performance profiles and the thread-safe profile store.

A profile records a model's classification accuracy together with running
statistics (mean, sample standard deviation) of its hot-start execution time,
plus optional cold-start statistics. The store supports online updates from
observed execution times using Welford's one-pass algorithm, and loads/saves
profiles in a fixed JSON (and CSV) file format.

File format: UTF-8 JSON array of objects with keys exactly
``name, accuracy_top1, accuracy_top5, mean_ms, std_ms, cold_start_mean_ms,
cold_start_std_ms, observation_count``. Accuracies are percentages in the
file (e.g. 74.1) and fractions in memory (0.741). The two cold-start keys
are nullable; a model without cold-start statistics is treated as always
resident in memory.
"""
from __future__ import annotations

import csv
import io
import json
import math
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional


PROFILE_KEYS = (
    "name",
    "accuracy_top1",
    "accuracy_top5",
    "mean_ms",
    "std_ms",
    "cold_start_mean_ms",
    "cold_start_std_ms",
    "observation_count",
)


class ProfileError(ValueError):
    """Base class for profile validation and parse failures."""


class ProfileFormatError(ProfileError):
    """A profile record failed to parse or violated an invariant."""


class DuplicateModelError(ProfileError):
    """Two records in one source share a model name."""


class UnknownModelError(KeyError):
    """An operation referenced a model name absent from the store."""


@dataclass(frozen=True, slots=True)
class ModelProfile:
    """Immutable snapshot of one model's accuracy and latency statistics.

    ``mean_ms``/``std_ms`` are the running mean and sample (n-1) standard
    deviation of hot-start execution time in milliseconds. Cold-start fields
    cover load + execute time and are optional. ``loaded`` marks whether the
    model is resident in memory, which decides hot vs cold sampling in the
    simulator.
    """

    name: str
    accuracy_top1: float
    accuracy_top5: float
    mean_ms: float
    std_ms: float
    cold_start_mean_ms: Optional[float] = None
    cold_start_std_ms: Optional[float] = None
    observation_count: int = 0
    loaded: bool = True

    def __post_init__(self) -> None:
        if not self.name:
            raise ProfileFormatError("model name must be non-empty")
        if not (0.0 <= self.accuracy_top1 <= self.accuracy_top5 <= 1.0):
            raise ProfileFormatError(
                f"{self.name}: accuracies must satisfy "
                f"0 <= top1 <= top5 <= 1, got top1={self.accuracy_top1} "
                f"top5={self.accuracy_top5}"
            )
        if not self.mean_ms > 0:
            raise ProfileFormatError(f"{self.name}: mean_ms must be > 0")
        if self.std_ms < 0:
            raise ProfileFormatError(f"{self.name}: std_ms must be >= 0")
        if self.observation_count < 0:
            raise ProfileFormatError(
                f"{self.name}: observation_count must be >= 0"
            )
        if self.observation_count < 2 and self.std_ms != 0.0:
            raise ProfileFormatError(
                f"{self.name}: std_ms must be 0 when observation_count < 2"
            )
        if self.cold_start_std_ms is not None and self.cold_start_mean_ms is None:
            raise ProfileFormatError(
                f"{self.name}: cold_start_std_ms given without cold_start_mean_ms"
            )
        if self.cold_start_mean_ms is not None:
            if self.cold_start_mean_ms < self.mean_ms:
                raise ProfileFormatError(
                    f"{self.name}: cold_start_mean_ms must be >= mean_ms"
                )
            if self.cold_start_std_ms is not None and self.cold_start_std_ms < 0:
                raise ProfileFormatError(
                    f"{self.name}: cold_start_std_ms must be >= 0"
                )

    def accuracy(self, metric: str = "top1") -> float:
        """Accuracy fraction under the given metric ('top1' or 'top5')."""
        if metric == "top1":
            return self.accuracy_top1
        if metric == "top5":
            return self.accuracy_top5
        raise ValueError(f"unknown accuracy metric: {metric!r}")


class _Welford:
    """One-pass running mean / sample variance accumulator."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self, n: int = 0, mean: float = 0.0, std: float = 0.0):
        self.n = n
        self.mean = mean
        self.m2 = std * std * (n - 1) if n >= 2 else 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1))


class _Record:
    """Mutable store entry: static profile fields plus the latency accumulator."""

    __slots__ = ("base", "welford")

    def __init__(self, profile: ModelProfile):
        self.base = profile
        self.welford = _Welford(
            profile.observation_count, profile.mean_ms, profile.std_ms
        )

    def to_profile(self) -> ModelProfile:
        return replace(
            self.base,
            mean_ms=self.welford.mean,
            std_ms=self.welford.std,
            observation_count=self.welford.n,
        )


class ProfileStore:
    """Set of model profiles with serialized writes and consistent snapshots.

    ``observe`` calls are atomic and ``snapshot`` returns an immutable
    point-in-time copy, so the store can be shared across request-handling
    threads. If ``pseudo_count`` is given, every seeded profile starts with
    that observation count (keeping its mean/std), which damps the first
    online updates against pre-measured statistics.
    """

    def __init__(
        self,
        profiles: Iterable[ModelProfile] = (),
        pseudo_count: Optional[int] = None,
    ):
        if pseudo_count is not None and pseudo_count < 2:
            raise ValueError("pseudo_count must be >= 2")
        self._lock = threading.RLock()
        self._records: dict[str, _Record] = {}
        self._snapshot_cache: Optional[tuple[ModelProfile, ...]] = None
        self._snapshot_index: dict[str, int] = {}
        for profile in profiles:
            if profile.name in self._records:
                raise DuplicateModelError(
                    f"duplicate model name: {profile.name!r}"
                )
            if pseudo_count is not None:
                profile = replace(profile, observation_count=pseudo_count)
            self._records[profile.name] = _Record(profile)

    @classmethod
    def from_file(
        cls, path: str | Path, pseudo_count: Optional[int] = None
    ) -> "ProfileStore":
        return cls(load_profiles(path), pseudo_count=pseudo_count)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, name: str) -> bool:
        return name in self._records

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    def get(self, name: str) -> ModelProfile:
        with self._lock:
            try:
                record = self._records[name]
            except KeyError:
                raise UnknownModelError(name) from None
            return record.to_profile()

    def observe(self, name: str, elapsed_ms: float) -> ModelProfile:
        """Record one observed execution time; returns the updated profile."""
        if not elapsed_ms > 0:
            raise ValueError(f"elapsed_ms must be > 0, got {elapsed_ms}")
        with self._lock:
            try:
                record = self._records[name]
            except KeyError:
                raise UnknownModelError(name) from None
            record.welford.push(elapsed_ms)
            profile = record.to_profile()
            if self._snapshot_cache is not None:
                # only this model's entry changed
                rebuilt = list(self._snapshot_cache)
                rebuilt[self._snapshot_index[name]] = profile
                self._snapshot_cache = tuple(rebuilt)
            return profile

    def set_profile(
        self, profile: ModelProfile, allow_create: bool = True
    ) -> ModelProfile:
        """Insert or replace a full profile record (resets its accumulator)."""
        with self._lock:
            if profile.name not in self._records and not allow_create:
                raise UnknownModelError(profile.name)
            self._records[profile.name] = _Record(profile)
            self._snapshot_cache = None
            return self._records[profile.name].to_profile()

    def snapshot(self) -> tuple[ModelProfile, ...]:
        """Immutable point-in-time copy of all profiles, ordered by name."""
        with self._lock:
            if self._snapshot_cache is None:
                names = sorted(self._records)
                self._snapshot_index = {name: i for i, name in enumerate(names)}
                self._snapshot_cache = tuple(
                    self._records[name].to_profile() for name in names
                )
            return self._snapshot_cache


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def _require_number(record: dict, key: str, where: str, nullable: bool = False):
    value = record[key]
    if value is None:
        if nullable:
            return None
        raise ProfileFormatError(f"{where}: {key} must not be null")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProfileFormatError(f"{where}: {key} must be a number")
    return float(value)


def record_to_profile(record: dict, where: str = "record") -> ModelProfile:
    """Convert one file-format object (percent accuracies) to a profile."""
    if not isinstance(record, dict):
        raise ProfileFormatError(f"{where}: expected an object")
    missing = [k for k in PROFILE_KEYS if k not in record]
    if missing:
        raise ProfileFormatError(f"{where}: missing keys {missing}")
    extra = [k for k in record if k not in PROFILE_KEYS]
    if extra:
        raise ProfileFormatError(f"{where}: unexpected keys {extra}")
    name = record["name"]
    if not isinstance(name, str) or not name:
        raise ProfileFormatError(f"{where}: name must be a non-empty string")
    where = f"{where} ({name})"
    count = record["observation_count"]
    if isinstance(count, bool) or not isinstance(count, int):
        raise ProfileFormatError(f"{where}: observation_count must be an integer")
    try:
        return ModelProfile(
            name=name,
            accuracy_top1=_require_number(record, "accuracy_top1", where) / 100.0,
            accuracy_top5=_require_number(record, "accuracy_top5", where) / 100.0,
            mean_ms=_require_number(record, "mean_ms", where),
            std_ms=_require_number(record, "std_ms", where),
            cold_start_mean_ms=_require_number(
                record, "cold_start_mean_ms", where, nullable=True
            ),
            cold_start_std_ms=_require_number(
                record, "cold_start_std_ms", where, nullable=True
            ),
            observation_count=count,
        )
    except ProfileFormatError as exc:
        if str(exc).startswith(where):
            raise
        raise ProfileFormatError(f"{where}: {exc}") from None


def profile_to_record(profile: ModelProfile) -> dict:
    """Convert a profile to its file-format object (percent accuracies).

    Percentages are written with 10 decimal places, which round-trips any
    percentage value of that precision bit-exactly through the /100 scaling.
    """
    return {
        "name": profile.name,
        "accuracy_top1": round(profile.accuracy_top1 * 100.0, 10),
        "accuracy_top5": round(profile.accuracy_top5 * 100.0, 10),
        "mean_ms": profile.mean_ms,
        "std_ms": profile.std_ms,
        "cold_start_mean_ms": profile.cold_start_mean_ms,
        "cold_start_std_ms": profile.cold_start_std_ms,
        "observation_count": profile.observation_count,
    }


def parse_profiles(text: str) -> list[ModelProfile]:
    """Parse the JSON profile file format into validated profiles."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise ProfileFormatError("profile file must be a JSON array")
    profiles = []
    seen = set()
    for index, record in enumerate(data):
        profile = record_to_profile(record, where=f"record {index}")
        if profile.name in seen:
            raise DuplicateModelError(f"duplicate model name: {profile.name!r}")
        seen.add(profile.name)
        profiles.append(profile)
    return profiles


def dump_profiles(profiles: Iterable[ModelProfile]) -> str:
    """Serialize profiles to the canonical JSON file format."""
    records = [profile_to_record(p) for p in profiles]
    return json.dumps(records, indent=2) + "\n"


def load_profiles(path: str | Path) -> list[ModelProfile]:
    return parse_profiles(Path(path).read_text(encoding="utf-8"))


def save_profiles(path: str | Path, profiles: Iterable[ModelProfile]) -> None:
    Path(path).write_text(dump_profiles(profiles), encoding="utf-8")


# CSV variant used by the CLI's profile conversion; same columns as the JSON
# keys, empty cells for nulls.

def profiles_to_csv(profiles: Iterable[ModelProfile]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PROFILE_KEYS)
    for profile in profiles:
        record = profile_to_record(profile)
        writer.writerow(
            "" if record[k] is None else record[k] for k in PROFILE_KEYS
        )
    return out.getvalue()


def parse_profiles_csv(text: str) -> list[ModelProfile]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        return []
    if tuple(rows[0]) != PROFILE_KEYS:
        raise ProfileFormatError(
            f"CSV header must be {','.join(PROFILE_KEYS)}"
        )
    profiles = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(PROFILE_KEYS):
            raise ProfileFormatError(
                f"line {lineno}: expected {len(PROFILE_KEYS)} fields, got {len(row)}"
            )
        record: dict = {"name": row[0]}
        for key, cell in zip(PROFILE_KEYS[1:], row[1:]):
            cell = cell.strip()
            if cell == "":
                record[key] = None
            elif key == "observation_count":
                try:
                    record[key] = int(cell)
                except ValueError:
                    raise ProfileFormatError(
                        f"line {lineno}: {key} must be an integer"
                    ) from None
            else:
                try:
                    record[key] = float(cell)
                except ValueError:
                    raise ProfileFormatError(
                        f"line {lineno}: {key} must be a number"
                    ) from None
        profile = record_to_profile(record, where=f"line {lineno}")
        if profile.name in seen:
            raise DuplicateModelError(f"duplicate model name: {profile.name!r}")
        seen.add(profile.name)
        profiles.append(profile)
    return profiles
