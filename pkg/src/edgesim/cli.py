"""Command-line entry point: calibrate, compare policies, inspect one run."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .calibrate import CalibrationTargets, FittedParams, apply_params, calibrate, load_targets
from .errors import IoFailure, NoFeasible, Infeasible, NonConvergence, NoRoot, SimError, TargetsError
from .kpi import (
    LatencyReport,
    LoadReport,
    REQUIRED_POLICIES,
    ResponseReport,
    export_csv,
    render_report,
    robot_load,
    summarize,
)
from .placement import Placement, Policy, place
from .rng import U64
from .simcore import SimConfig, probe_samples, run_simulation, transaction_samples
from .topology import build_topology
from .workload import builtin_airport_scenario, load_scenario, validate_workload, workload_from_dict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGENCE = 2
EXIT_INFEASIBLE = 3

DEFAULT_POLICIES = "local,edge,cloud,hybrid"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    scenario_path: str | None
    policies: tuple
    seed: int = 42
    samples: int = 1000
    rate_hz: float = 1.0
    out_dir: str = "results"
    fitted_params_path: str | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise _UsageError("--samples must be >= 1")
        if not self.rate_hz > 0:
            raise _UsageError("--rate-hz must be > 0")
        if not 0 <= self.seed <= U64:
            raise _UsageError("--seed must be a 64-bit unsigned integer")
        if not self.policies:
            raise _UsageError("at least one policy is required")


def parse_policies(text: str) -> tuple:
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            pol = Policy.parse(part)
        except ValueError as exc:
            raise _UsageError(str(exc)) from None
        if pol not in out:
            out.append(pol)
    if not out:
        raise _UsageError("at least one policy is required")
    return tuple(out)


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value <= U64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


# ---------------------------------------------------------------------------
# scenario loading
# ---------------------------------------------------------------------------

def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read {what} {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise _UsageError(f"{what} {path} is not valid JSON: {exc}") from None


def load_document(scenario_path: str | None, params_path: str | None = None) -> dict:
    doc = builtin_airport_scenario() if scenario_path in (None, "builtin") else _read_json(scenario_path, "scenario")
    if not isinstance(doc, dict):
        raise _UsageError("scenario must be a JSON object")
    try:
        violations = validate_workload(workload_from_dict(doc.get("workload", doc)))
    except (SimError, KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"invalid scenario: {exc}") from None
    if violations:
        lines = "\n".join(f"  {v.kind}: {v.member}: {v.detail}" for v in violations)
        raise _UsageError(f"scenario has {len(violations)} workload violation(s):\n{lines}")
    if params_path:
        try:
            params = FittedParams.load(params_path)
        except OSError as exc:
            raise _UsageError(f"cannot read params {params_path}: {exc.strerror or exc}") from None
        except (json.JSONDecodeError, TypeError) as exc:
            raise _UsageError(f"malformed params {params_path}: {exc}") from None
        doc = apply_params(doc, params, doc.get("simulation", {}).get("face_pipeline"))
    return doc


def _prepare(doc: dict):
    try:
        t = build_topology(doc)
        w = load_scenario(doc)
    except (SimError, KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"invalid scenario: {exc}") from None
    return w, t


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def horizon_ms(doc: dict, w, samples: int, rate_hz: float) -> float:
    """Long enough for ``samples`` probes and ``samples`` face requests."""
    probe = (samples - 1) * 1000.0 / rate_hz + 10_000.0
    pid = doc.get("simulation", {}).get("face_pipeline", "face_recognition")
    face = 0.0
    if pid in {p.id for p in w.pipelines}:
        rate = w.topic(w.pipeline(pid).trigger_topic).publish_rate_hz
        face = (samples - 1) * 1000.0 / rate + 30_000.0
    return max(probe, face)


def _sim_config(doc: dict, rate_hz: float) -> SimConfig:
    base = SimConfig.from_scenario(doc)
    return SimConfig(**{**base.__dict__, "probe_rate_hz": rate_hz})


def _placement(doc: dict, w, t, policy: Policy) -> Placement:
    split = bool(doc.get("placement", {}).get("hybrid_split", True))
    return place(policy, w, t, hybrid_split=split)


def simulate_policy(doc: dict, policy: Policy, samples: int, rate_hz: float, seed: int, keep_trace: bool = False):
    """Place, simulate and reduce one policy to its KPIs."""
    w, t = _prepare(doc)
    p = _placement(doc, w, t, policy)
    cfg = _sim_config(doc, rate_hz)
    trace = run_simulation(w, t, p, None, horizon_ms(doc, w, samples, rate_hz), seed, cfg)
    pid = doc.get("simulation", {}).get("face_pipeline", "face_recognition")
    rtts = probe_samples(trace, samples)
    tx = transaction_samples(trace, pid, samples)
    result = {
        "policy": policy,
        "assignment": dict(sorted(p.assignment.items())),
        "latency": summarize(rtts) if rtts else None,
        "load": robot_load(trace),
        "recognition": summarize([a for a, _ in tx]) if tx else None,
        "response": summarize([b for _, b in tx]) if tx else None,
    }
    if keep_trace:
        result["trace"] = trace
    return result


def _job(args):
    return simulate_policy(*args)


def _run_all(doc: dict, cfg: RunConfig) -> list:
    jobs = [(doc, pol, cfg.samples, cfg.rate_hz, cfg.seed) for pol in cfg.policies]
    # placement errors surface before any worker starts
    w, t = _prepare(doc)
    for pol in cfg.policies:
        _placement(doc, w, t, pol)
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_job, jobs))
        except (OSError, PermissionError):
            pass
    return [_job(j) for j in jobs]


def _reports(results: list):
    latency = LatencyReport()
    load = LoadReport()
    resp = ResponseReport()
    for r in results:
        pol = r["policy"]
        if r["latency"] is not None:
            latency.rows[pol] = r["latency"]
        load.rows[pol] = r["load"]
        if r["recognition"] is not None:
            resp.rows[pol] = (r["recognition"].mean, r["response"].mean)
    return latency, load, resp


def _render(latency, load, resp) -> str:
    complete = all(p in rows for p in REQUIRED_POLICIES for rows in (latency.rows, load.rows, resp.rows))
    return render_report(latency, load, resp, require_all=complete)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_calibrate(targets_path: str | None, scenario_path: str | None, out_path: str) -> int:
    targets = load_targets(targets_path) if targets_path else CalibrationTargets()
    doc = load_document(scenario_path)
    params = calibrate(targets, doc)
    try:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        params.save(out_path)
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc.strerror or exc}") from exc
    print(f"residual: {params.residual:.6f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    doc = load_document(cfg.scenario_path, cfg.fitted_params_path)
    results = _run_all(doc, cfg)
    latency, load, resp = _reports(results)
    text = _render(latency, load, resp)
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc.strerror or exc}") from exc
    export_csv(latency, out / "latency.csv")
    export_csv(load, out / "load.csv")
    export_csv(resp, out / "response.csv")
    try:
        (out / "report.txt").write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report: {exc.strerror or exc}") from exc
    sys.stdout.write(text)
    return EXIT_OK


def _summary_text(r: dict) -> str:
    lines = [f"policy: {r['policy'].value}", "assignment:"]
    lines += [f"  {task}: {node}" for task, node in r["assignment"].items()]
    for key in ("latency", "recognition", "response"):
        s = r[key]
        if s is None:
            lines.append(f"{key}: no samples")
            continue
        lines.append(f"{key}_ms: n={s.n} mean={s.mean:.3f} p50={s.p50:.3f} p95={s.p95:.3f} "
                     f"p99={s.p99:.3f} min={s.min:.3f} max={s.max:.3f}")
    low, high, mem = r["load"]
    lines.append(f"robot_cpu_pct: {low:.1f}-{high:.1f}")
    lines.append(f"robot_memory_gb: {mem:.2f}")
    return "\n".join(lines) + "\n"


def cmd_run(cfg: RunConfig) -> int:
    if len(cfg.policies) != 1:
        raise _UsageError("run takes exactly one --policy")
    doc = load_document(cfg.scenario_path, cfg.fitted_params_path)
    r = simulate_policy(doc, cfg.policies[0], cfg.samples, cfg.rate_hz, cfg.seed, keep_trace=True)
    out = Path(cfg.out_dir)
    text = _summary_text(r)
    try:
        out.mkdir(parents=True, exist_ok=True)
        r["trace"].write_csv(out / "trace.csv")
        (out / "summary.txt").write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write to {out}: {exc.strerror or exc}") from exc
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgesim", description="Robot/edge/cloud placement simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    cal = sub.add_parser("calibrate", help="fit model parameters to measured targets")
    cal.add_argument("--targets", help="targets JSON (default: built-in targets)")
    cal.add_argument("--scenario", help="scenario JSON (default: built-in airport scenario)")
    cal.add_argument("--out", default="fitted_params.json", help="where to write fitted parameters")

    def common(p):
        p.add_argument("--scenario", help="scenario JSON (default: built-in airport scenario)")
        p.add_argument("--params", help="fitted parameters from `calibrate`")
        p.add_argument("--samples", type=int, default=1000, help="probe and request samples (default 1000)")
        p.add_argument("--rate-hz", type=float, default=1.0, help="probe rate (default 1.0)")
        p.add_argument("--seed", type=_seed, default=42, help="64-bit seed (default 42)")
        p.add_argument("--out", default="results", help="output directory (default results)")

    cmp_ = sub.add_parser("compare", help="simulate several policies and write reports")
    cmp_.add_argument("--policies", default=DEFAULT_POLICIES, help=f"comma list (default {DEFAULT_POLICIES})")
    common(cmp_)

    run = sub.add_parser("run", help="simulate one policy and dump its trace")
    run.add_argument("--policy", default="hybrid", help="policy name (default hybrid)")
    common(run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args.targets, args.scenario, args.out)
        policies = parse_policies(args.policies if args.command == "compare" else args.policy)
        cfg = RunConfig(
            scenario_path=args.scenario,
            policies=policies,
            seed=args.seed,
            samples=args.samples,
            rate_hz=args.rate_hz,
            out_dir=args.out,
            fitted_params_path=args.params,
        )
        return cmd_compare(cfg) if args.command == "compare" else cmd_run(cfg)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, NoRoot) as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (Infeasible, NoFeasible) as exc:
        print(f"infeasible placement: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TargetsError, IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
