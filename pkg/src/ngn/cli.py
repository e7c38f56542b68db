"""Command-line front end: run, sweep, verify, datagen.

Config files are flat ``key = value`` text. Example::

    problem = quadratic1d(lam=1.2, xstar=0.0, fstar=0.1)
    policy = ngn(sigma=1.0)
    steps = 100
    seeds = 0,1,2
    sampler = with_replacement_uniform
    batch_size = 1
    cadence = 10

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .objectives import (
    FiniteSumObjective,
    ParseError,
    load_libsvm,
    make_blobs_dataset,
    make_linear_regression,
    make_logistic,
    make_nonconvex_sum,
    make_quadratic1d,
    make_two_quadratics,
    write_libsvm,
)
from .runner import RunTrace, SamplerSpec, aggregate_metric, run_sgd, trace_to_csv
from .stepsizes import PolicyError, parse_call, parse_policy
from .verify import REPORT_HEADER, SUITES, run_suites


class ConfigError(Exception):
    """Malformed configuration; maps to exit code 2."""


_SAMPLER_MODES = ("with_replacement_uniform", "epoch_shuffle", "full_batch")


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment."""

    problem: str
    policy: str
    steps: int = 100
    seeds: tuple[int, ...] = (0,)
    sampler: str = "with_replacement_uniform"
    batch_size: int = 1
    cadence: Optional[int] = None
    x0: Optional[tuple[float, ...]] = None
    out: Optional[str] = None
    axis: Optional[str] = None
    values: tuple[float, ...] = ()

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.sampler not in _SAMPLER_MODES:
            raise ConfigError(
                f"unknown sampler {self.sampler!r}; choose from {_SAMPLER_MODES}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.cadence is not None and self.cadence < 1:
            raise ConfigError("cadence must be >= 1 when given")


def parse_config(path) -> ExperimentConfig:
    """Parse a flat key = value config file into an ExperimentConfig."""
    entries: dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        # policy/problem values contain '=' inside parentheses; keep them whole
        entries[key] = line.partition("=")[2].strip() if key in ("policy", "problem", "values") else value.strip()

    if "problem" not in entries:
        raise ConfigError(f"{path}: missing required key 'problem'")
    if "policy" not in entries:
        raise ConfigError(f"{path}: missing required key 'policy'")

    cfg = ExperimentConfig(problem=entries["problem"], policy=entries["policy"])
    try:
        if "steps" in entries:
            cfg.steps = int(entries["steps"])
        if "seeds" in entries:
            cfg.seeds = tuple(int(s) for s in entries["seeds"].split(",") if s.strip())
        if "batch_size" in entries:
            cfg.batch_size = int(entries["batch_size"])
        if "cadence" in entries:
            cfg.cadence = int(entries["cadence"])
        if "sampler" in entries:
            cfg.sampler = entries["sampler"]
        if "x0" in entries:
            cfg.x0 = tuple(float(s) for s in entries["x0"].split(","))
        if "out" in entries:
            cfg.out = entries["out"]
        if "axis" in entries:
            cfg.axis = entries["axis"]
        if "values" in entries:
            cfg.values = tuple(float(s) for s in entries["values"].split(","))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg.validate()
    return cfg


def build_problem(spec: str) -> FiniteSumObjective:
    """Instantiate an objective from its config-grammar spec string."""
    try:
        name, kwargs = parse_call(spec)
    except (PolicyError, ParseError) as exc:
        raise ConfigError(f"bad problem spec {spec!r}: {exc}") from exc
    try:
        if name == "quadratic1d":
            return make_quadratic1d(
                lam=float(kwargs.pop("lam")),
                x_star=float(kwargs.pop("xstar", 0.0)),
                f_star=float(kwargs.pop("fstar", 0.0)),
            )
        if name == "two_quadratics":
            return make_two_quadratics()
        if name == "linear_regression":
            return make_linear_regression(
                d=int(kwargs.pop("d", 10)),
                n=int(kwargs.pop("n", 40)),
                seed=int(kwargs.pop("seed", 0)),
                noise_std=float(kwargs.pop("noise_std", 0.0)),
            )
        if name == "logistic_blobs":
            data = make_blobs_dataset(
                n=int(kwargs.pop("n", 60)),
                d=int(kwargs.pop("d", 5)),
                classes=int(kwargs.pop("classes", 3)),
                seed=int(kwargs.pop("seed", 0)),
            )
            return make_logistic(data, l2=float(kwargs.pop("l2", 1e-4)))
        if name == "logistic_file":
            data = load_libsvm(str(kwargs.pop("path")))
            return make_logistic(data, l2=float(kwargs.pop("l2", 1e-4)))
        if name == "nonconvex_sum":
            return make_nonconvex_sum(
                n=int(kwargs.pop("n", 8)),
                seed=int(kwargs.pop("seed", 0)),
                eps=float(kwargs.pop("eps", 0.5)),
            )
    except (KeyError, ValueError, ParseError) as exc:
        raise ConfigError(f"bad problem spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown problem {name!r}")


def build_policy(spec: str):
    try:
        return parse_policy(spec)
    except PolicyError as exc:
        raise ConfigError(f"bad policy spec {spec!r}: {exc}") from exc


def resolve_out_dir(flag_value: Optional[str], cfg_out: Optional[str]) -> Path:
    """Precedence: --out flag, config 'out' key, NGN_OUT_DIR, cwd."""
    target = flag_value or cfg_out or os.environ.get("NGN_OUT_DIR") or "."
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _execute_seed(args: tuple) -> tuple[int, RunTrace]:
    """Worker entry point; rebuilds the objective/policy from spec strings."""
    problem, policy, steps, sampler, batch_size, cadence, x0, seed = args
    obj = build_problem(problem)
    pol = build_policy(policy)
    x0_vec = np.array(x0) if x0 is not None else None
    trace = run_sgd(
        obj, pol, steps, seed=seed,
        sampler=SamplerSpec(mode=sampler, batch_size=batch_size),
        x0=x0_vec, cadence=cadence if cadence is not None else steps,
    )
    return seed, trace


def _run_all_seeds(cfg: ExperimentConfig, jobs: int) -> list[tuple[int, RunTrace]]:
    tasks = [
        (cfg.problem, cfg.policy, cfg.steps, cfg.sampler, cfg.batch_size,
         cfg.cadence, cfg.x0, seed)
        for seed in cfg.seeds
    ]
    if jobs <= 1 or len(tasks) == 1:
        results = [_execute_seed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_seed, tasks))
    return sorted(results, key=lambda pair: pair[0])


def _write_aggregate(results: Sequence[tuple[int, RunTrace]], path: Path) -> None:
    metrics = {
        "loss_full_final": [t.loss_full[-1] for _, t in results],
        "dist_sq_final": [t.dist_sq[-1] for _, t in results],
        "grad_full_sq_final": [t.grad_full_sq[-1] for _, t in results],
        "gamma_final": [t.gamma[-1] for _, t in results],
    }
    lines = ["metric,mean,std,ci_half"]
    for name, values in metrics.items():
        arr = [v for v in values if v == v]  # drop NaN (e.g. unknown x*)
        if not arr:
            continue
        agg = aggregate_metric(arr)
        lines.append(f"{name},{agg.mean!r},{agg.std!r},{agg.ci_half!r}")
    path.write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed_offset:
        cfg = replace(cfg, seeds=tuple(s + args.seed_offset for s in cfg.seeds))
    out_dir = resolve_out_dir(args.out, cfg.out)
    build_problem(cfg.problem)  # fail fast before spawning workers
    build_policy(cfg.policy)
    results = _run_all_seeds(cfg, args.jobs)
    for seed, trace in results:
        trace_to_csv(trace, out_dir / f"trace_seed{seed}.csv")
        if trace.diverged:
            print(f"seed {seed}: diverged at step {trace.diverged_step}")
    _write_aggregate(results, out_dir / "aggregate.csv")
    print(f"wrote {len(results)} trace file(s) + aggregate.csv to {out_dir}")
    return 0


def _render_policy(name: str, kwargs: dict) -> str:
    inner = ", ".join(f"{k}={v!r}" if isinstance(k, float) else f"{k}={v}"
                      for k, v in kwargs.items())
    return f"{name}({inner})"


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    if cfg.axis is None or not cfg.values:
        raise ConfigError("sweep config needs 'axis' and a nonempty 'values' grid")
    if args.seed_offset:
        cfg = replace(cfg, seeds=tuple(s + args.seed_offset for s in cfg.seeds))
    out_dir = resolve_out_dir(args.out, cfg.out)
    base_name, base_kwargs = parse_call(cfg.policy)

    means = []
    rows = []
    for value in cfg.values:
        kwargs = dict(base_kwargs)
        kwargs[cfg.axis] = value
        point_cfg = replace(cfg, policy=_render_policy(base_name, kwargs))
        build_policy(point_cfg.policy)
        results = _run_all_seeds(point_cfg, args.jobs)
        finals = [np.inf if t.diverged else float(t.loss_full[-1]) for _, t in results]
        agg = aggregate_metric(finals)
        means.append(agg.mean)
        rows.append((value, agg))

    best_idx = int(np.argmin(means))
    best_value = cfg.values[best_idx]
    lines = ["value,mean,std,ci_half,mark"]
    for value, agg in rows:
        mark = ""
        if value == best_value:
            mark = "best"
        elif np.isclose(value, best_value / 3.0, rtol=1e-6):
            mark = "neighbor_lower"
        elif np.isclose(value, best_value * 3.0, rtol=1e-6):
            mark = "neighbor_upper"
        lines.append(f"{value!r},{agg.mean!r},{agg.std!r},{agg.ci_half!r},{mark}")
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    print(f"best {cfg.axis} = {best_value} (mean final loss {means[best_idx]:.6g})")
    print(f"wrote sweep.csv to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    if not args.suites:
        raise ConfigError("no suites selected; choose from "
                          f"{sorted(SUITES)} or 'all'")
    try:
        reports = run_suites(args.suites)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = resolve_out_dir(args.out, None)
    lines = [REPORT_HEADER] + [r.csv_row() for r in reports]
    (out_dir / "verify_report.csv").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    failed = [r for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)}/{len(reports)} checks FAILED", file=sys.stderr)
        return 1
    print(f"all {len(reports)} checks passed")
    return 0


def _params_from_pairs(pairs: Sequence[str]) -> dict[str, str]:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        params[key.strip()] = value.strip()
    return params


def cmd_datagen(args) -> int:
    params = _params_from_pairs(args.params)
    out = Path(args.out) if args.out else None
    if out is None:
        raise ConfigError("datagen requires --out FILE")
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        if args.kind == "blobs":
            data = make_blobs_dataset(
                n=int(params.get("n", 200)),
                d=int(params.get("d", 5)),
                classes=int(params.get("classes", 3)),
                seed=int(params.get("seed", 0)),
            )
            write_libsvm(data, out)
        elif args.kind == "linreg":
            rng = np.random.default_rng(int(params.get("seed", 0)))
            n = int(params.get("n", 100))
            d = int(params.get("d", 10))
            noise = float(params.get("noise_std", 0.1))
            features = rng.standard_normal((n, d))
            truth = rng.standard_normal(d)
            targets = features @ truth + noise * rng.standard_normal(n)
            with open(out, "w") as fh:
                for row, target in zip(features, targets):
                    cells = " ".join(f"{j + 1}:{v!r}" for j, v in enumerate(row))
                    fh.write(f"{target!r} {cells}\n")
        else:
            raise ConfigError(f"unknown dataset kind {args.kind!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngn", description="Stochastic optimization runs and bound checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--seed-offset", type=int, default=0)
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="sweep a policy parameter over a grid")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.add_argument("--seed-offset", type=int, default=0)
    sweep_p.set_defaults(func=cmd_sweep)

    verify_p = sub.add_parser("verify", help="run verification suites")
    verify_p.add_argument("suites", nargs="*",
                          help=f"suite names ({', '.join(sorted(SUITES))}) or 'all'")
    verify_p.add_argument("--out", default=None)
    verify_p.set_defaults(func=cmd_verify)

    datagen_p = sub.add_parser("datagen", help="write a synthetic dataset")
    datagen_p.add_argument("kind", choices=["blobs", "linreg"])
    datagen_p.add_argument("params", nargs="*", help="key=value pairs")
    datagen_p.add_argument("--out", required=True)
    datagen_p.set_defaults(func=cmd_datagen)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, PolicyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
