"""Command-line entry point: simulations, sweeps, comparisons, serving.

Subcommands:
    simulate   run a simulation at explicit SLA targets
    sweep      run a simulation across a generated SLA range
    compare    compare two policies from a JSON report
    serve      run the inference gateway
    profiles   validate / convert / show profile files

Exit codes: 0 success, 1 runtime failure, 2 invalid flags.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .budget import load_network_profile
from .gateway import GatewayConfig, create_app
from .profiles import (
    DuplicateModelError,
    ProfileFormatError,
    ProfileStore,
    dump_profiles,
    load_profiles,
    parse_profiles,
    parse_profiles_csv,
    profiles_to_csv,
    record_to_profile,
)
from .selector import SelectorConfig
from .simulator import (
    POLICIES,
    ConfigError,
    InsufficientPoliciesError,
    SimulationConfig,
    SimulationReport,
    compare_policies,
    comparison_csv_text,
    run_simulation,
)


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--profiles", required=True, help="model profile JSON file"
    )
    parser.add_argument(
        "--network",
        default="lognormal:63,0.3",
        help="network model: fixed:MS | normal:MS,STD | lognormal:MS,CV | "
        "trace:PATH | profile:PATH[,KB]",
    )
    parser.add_argument(
        "--requests", type=int, default=10000, help="requests per SLA point"
    )
    parser.add_argument(
        "--policies",
        default="cnnselect,greedy,fastest",
        help=f"comma-separated subset of {','.join(POLICIES)}",
    )
    parser.add_argument(
        "--cold-start",
        default="always_hot",
        help="execution residency model: always_hot | lru:CAPACITY",
    )
    parser.add_argument(
        "--device-time", type=float, default=150.0,
        help="expected on-device inference time (ms)",
    )
    parser.add_argument(
        "--threshold",
        default="30",
        help="profile-uncertainty threshold: fixed ms or fraction:F of device time",
    )
    parser.add_argument(
        "--device-accuracy", type=float, default=None,
        help="accuracy fraction of the on-device model "
        "(default: the fastest model's accuracy)",
    )
    parser.add_argument(
        "--output-ratio", type=float, default=0.1,
        help="response download time as a fraction of upload time",
    )
    parser.add_argument(
        "--pseudo-count", type=int, default=1000,
        help="initial observation count seeding the adaptive policy's store",
    )
    parser.add_argument(
        "--accuracy-metric", choices=("top1", "top5"), default="top1",
        help="accuracy metric fed to the policies",
    )
    parser.add_argument(
        "--exclude-base", action="store_true",
        help="drop the base model from the exploration set unless its own "
        "mean falls in the exploration range",
    )
    parser.add_argument(
        "--epsilon", type=float, default=1e-3,
        help="utility denominator floor (ms)",
    )
    parser.add_argument("--seed", type=int, default=0, help="simulation seed")
    parser.add_argument(
        "--out", default=None,
        help="report path (.csv writes a companion .usage.csv; .json is "
        "self-contained)",
    )


def _threshold_value(text: str):
    if text.startswith("fraction:"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"invalid threshold {text!r} (number or fraction:F)"
        ) from None


def _build_config(args, sla_values) -> SimulationConfig:
    return SimulationConfig(
        profiles_path=args.profiles,
        network=args.network,
        sla_sweep=tuple(sla_values),
        requests_per_sla=args.requests,
        policies=tuple(p.strip() for p in args.policies.split(",") if p.strip()),
        cold_start_mode=args.cold_start,
        device_time_ms=args.device_time,
        threshold_ms=_threshold_value(args.threshold),
        device_accuracy=args.device_accuracy,
        output_ratio=args.output_ratio,
        pseudo_count=args.pseudo_count,
        accuracy_metric=args.accuracy_metric,
        include_base_in_exploration=not args.exclude_base,
        denominator_epsilon_ms=args.epsilon,
        seed=args.seed,
    )


def _print_summary(report: SimulationReport) -> None:
    header = (
        f"{'sla_ms':>8}  {'policy':<17} {'miss_rate':>9}  {'accuracy':>8}  "
        f"{'lat_mean':>9}  {'lat_p99':>9}"
    )
    print(header)
    print("-" * len(header))
    for row in report.rows:
        print(
            f"{row.sla_ms:>8.1f}  {row.policy:<17} {row.miss_rate:>9.4f}  "
            f"{row.accuracy:>8.4f}  {row.lat_mean:>9.2f}  {row.lat_p99:>9.2f}"
        )


def _run_and_report(parser, args, sla_values) -> int:
    try:
        cfg = _build_config(args, sla_values)
        cfg.validate()
    except ConfigError as exc:
        parser.error(str(exc))
    try:
        report = run_simulation(cfg)
    except (ConfigError, ProfileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        paths = report.write(args.out)
        print("wrote " + ", ".join(str(p) for p in paths))
    _print_summary(report)
    return 0


def cmd_simulate(parser, args) -> int:
    if args.requests <= 0:
        parser.error(f"--requests must be > 0, got {args.requests}")
    for sla in args.sla:
        if sla <= 0:
            parser.error(f"--sla values must be > 0, got {sla}")
    return _run_and_report(parser, args, args.sla)


def _sweep_points(parser, lo: float, hi: float, step: float) -> list[float]:
    if lo <= 0:
        parser.error(f"--sla-min must be > 0, got {lo}")
    if step <= 0:
        parser.error(f"--sla-step must be > 0, got {step}")
    if hi < lo:
        parser.error(f"--sla-max ({hi}) must be >= --sla-min ({lo})")
    points = []
    value = lo
    while value <= hi + 1e-9:
        points.append(round(value, 9))
        value += step
    return points


def cmd_sweep(parser, args) -> int:
    if args.requests <= 0:
        parser.error(f"--requests must be > 0, got {args.requests}")
    points = _sweep_points(parser, args.sla_min, args.sla_max, args.sla_step)
    return _run_and_report(parser, args, points)


def cmd_compare(parser, args) -> int:
    try:
        report = SimulationReport.load_json(args.report)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load report {args.report}: {exc}", file=sys.stderr)
        return 1
    try:
        comparison = compare_policies(
            report, baseline=args.baseline, candidate=args.candidate
        )
    except (InsufficientPoliciesError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = comparison_csv_text(comparison)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    print(
        f"{'sla_ms':>8}  {'latency_reduction_pct':>21}  "
        f"{'accuracy_delta':>14}  {'miss_rate_delta':>15}"
    )
    for row in comparison["rows"]:
        print(
            f"{row['sla_ms']:>8.1f}  {row['latency_reduction_pct']:>21.2f}  "
            f"{row['accuracy_delta']:>14.4f}  {row['miss_rate_delta']:>15.4f}"
        )
    summary = comparison["summary"]
    print(
        f"{'max':>8}  {summary['max_latency_reduction_pct']:>21.2f}  "
        f"{summary['max_accuracy_delta']:>14.4f}  "
        f"{summary['min_miss_rate_delta']:>15.4f}"
    )
    return 0


def cmd_serve(parser, args) -> int:
    import uvicorn

    profiles_path = args.profiles or os.environ.get("CNNSELECT_PROFILES")
    if not profiles_path:
        parser.error("--profiles or CNNSELECT_PROFILES is required")
    try:
        store = ProfileStore.from_file(profiles_path)
    except (OSError, ProfileFormatError, DuplicateModelError) as exc:
        print(f"error: cannot load profiles: {exc}", file=sys.stderr)
        return 1
    network_profile = None
    if args.network_profile:
        try:
            network_profile = load_network_profile(args.network_profile)
        except (OSError, ValueError) as exc:
            print(f"error: cannot load network profile: {exc}", file=sys.stderr)
            return 1
    cfg = GatewayConfig(
        seed=args.seed,
        test_mode=args.test_mode,
        default_threshold_ms=args.threshold,
        device_time_ms=args.device_time,
        time_scale=args.time_scale,
        allow_create=not args.strict_models,
        selector=SelectorConfig(rng_seed=args.seed),
    )
    if network_profile is not None:
        cfg.network_profile = network_profile
    app = create_app(store, cfg)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _load_profiles_any(path: Path):
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return parse_profiles_csv(text)
    return parse_profiles(text)


def cmd_profiles(parser, args) -> int:
    if args.action == "validate":
        path = Path(args.path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        violations = _collect_violations(path, text)
        if violations:
            for violation in violations:
                print(violation, file=sys.stderr)
            return 1
        print(f"{args.path}: OK")
        return 0
    if args.action == "convert":
        src, dst = Path(args.path), Path(args.dest)
        try:
            profiles = _load_profiles_any(src)
        except (OSError, ProfileFormatError, DuplicateModelError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if dst.suffix.lower() == ".csv":
            dst.write_text(profiles_to_csv(profiles), encoding="utf-8")
        else:
            dst.write_text(dump_profiles(profiles), encoding="utf-8")
        print(f"wrote {dst}")
        return 0
    # show
    try:
        profiles = _load_profiles_any(Path(args.path))
    except (OSError, ProfileFormatError, DuplicateModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    header = (
        f"{'name':<20} {'top1%':>6} {'top5%':>6} {'mean_ms':>9} {'std_ms':>7} "
        f"{'cold_ms':>9} {'count':>6}"
    )
    print(header)
    print("-" * len(header))
    for p in profiles:
        cold = f"{p.cold_start_mean_ms:.2f}" if p.cold_start_mean_ms else "-"
        print(
            f"{p.name:<20} {p.accuracy_top1 * 100:>6.1f} "
            f"{p.accuracy_top5 * 100:>6.1f} {p.mean_ms:>9.2f} {p.std_ms:>7.2f} "
            f"{cold:>9} {p.observation_count:>6}"
        )
    return 0


def _collect_violations(path: Path, text: str) -> list[str]:
    """All schema violations in a profile file, one message per record."""
    if path.suffix.lower() == ".csv":
        try:
            parse_profiles_csv(text)
        except (ProfileFormatError, DuplicateModelError) as exc:
            return [f"{path}: {exc}"]
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"{path}: invalid JSON: {exc}"]
    if not isinstance(data, list):
        return [f"{path}: profile file must be a JSON array"]
    violations = []
    seen = set()
    for index, record in enumerate(data):
        try:
            profile = record_to_profile(record, where=f"record {index}")
        except ProfileFormatError as exc:
            violations.append(f"{path}: {exc}")
            continue
        if profile.name in seen:
            violations.append(f"{path}: duplicate model name {profile.name!r}")
        seen.add(profile.name)
    return violations


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnnselect",
        description="SLA-aware CNN model selection: simulator and gateway",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser(
        "simulate",
        help="run a simulation at explicit SLA targets",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_simulation_flags(p_sim)
    p_sim.add_argument(
        "--sla", type=float, action="append", required=True,
        help="SLA target in ms (repeatable)",
    )

    p_sweep = sub.add_parser(
        "sweep",
        help="run a simulation across a generated SLA range",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_simulation_flags(p_sweep)
    p_sweep.add_argument("--sla-min", type=float, required=True, help="first SLA (ms)")
    p_sweep.add_argument("--sla-max", type=float, required=True, help="last SLA (ms)")
    p_sweep.add_argument("--sla-step", type=float, required=True, help="SLA step (ms)")

    p_cmp = sub.add_parser(
        "compare",
        help="compare two policies from a JSON report",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_cmp.add_argument("--report", required=True, help="JSON report path")
    p_cmp.add_argument("--baseline", default="greedy", help="baseline policy")
    p_cmp.add_argument("--candidate", default="cnnselect", help="candidate policy")
    p_cmp.add_argument("--out", default=None, help="write the comparison CSV here")

    p_serve = sub.add_parser(
        "serve",
        help="run the inference gateway",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p_serve.add_argument(
        "--host", default="127.0.0.1", help="bind address"
    )
    p_serve.add_argument(
        "--port", type=int,
        default=int(os.environ.get("CNNSELECT_PORT", "8080")),
        help="bind port (env CNNSELECT_PORT)",
    )
    p_serve.add_argument(
        "--profiles", default=None,
        help="model profile JSON file (env CNNSELECT_PROFILES)",
    )
    p_serve.add_argument(
        "--seed", type=int,
        default=int(os.environ.get("CNNSELECT_SEED", "0")),
        help="server seed (env CNNSELECT_SEED)",
    )
    p_serve.add_argument(
        "--test-mode", action="store_true",
        help="seed per-request generators from (seed, request counter)",
    )
    p_serve.add_argument(
        "--threshold", type=float, default=30.0,
        help="default profile-uncertainty threshold (ms)",
    )
    p_serve.add_argument(
        "--device-time", type=float, default=150.0,
        help="expected on-device inference time (ms)",
    )
    p_serve.add_argument(
        "--time-scale", type=float, default=1.0,
        help="scale factor on the mock backend's sleep",
    )
    p_serve.add_argument(
        "--network-profile", default=None,
        help="network profile JSON used to estimate upload times",
    )
    p_serve.add_argument(
        "--strict-models", action="store_true",
        help="PUT of an unknown model returns 409 instead of creating it",
    )

    p_prof = sub.add_parser(
        "profiles",
        help="validate / convert / show profile files",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    prof_sub = p_prof.add_subparsers(dest="action", required=True)
    p_val = prof_sub.add_parser("validate", help="validate a profile file")
    p_val.add_argument("path", help="profile file (.json or .csv)")
    p_conv = prof_sub.add_parser("convert", help="convert between JSON and CSV")
    p_conv.add_argument("path", help="source file (.json or .csv)")
    p_conv.add_argument("dest", help="destination file (.json or .csv)")
    p_show = prof_sub.add_parser("show", help="print a profile table")
    p_show.add_argument("path", help="profile file (.json or .csv)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    commands = {
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "compare": cmd_compare,
        "serve": cmd_serve,
        "profiles": cmd_profiles,
    }
    return commands[args.command](parser, args)


if __name__ == "__main__":
    sys.exit(main())
