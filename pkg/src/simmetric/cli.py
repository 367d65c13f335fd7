"""Command-line front end.

    simmetric estimate  --preset running-example --metric spec --seed 7
    simmetric validate  --preset running-example --d-hat 0
    simmetric kernel    --preset quadrotor-optimistic --margins 0 0.09
    simmetric envset    --preset running-example --margins 0 0.43

Exit codes: 0 success, 1 runtime failure (or failed validation), 2 usage or
configuration error.  The default output directory is ``$SIMMETRIC_OUT`` or
``./simmetric-out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .metrics import MetricKind
from .problem import PRESETS, ConfigError, Problem, build_preset, build_problem
from .reach import export_kernel, kernel_containment
from .scenario import ScenarioConfig, estimate, estimate_safe_env_fraction, validate_guarantee

log = logging.getLogger("simmetric")

OUT_ENV = "SIMMETRIC_OUT"
CONFIG_KEYS = {"preset", "problem", "scenario", "output", "validate"}
SCENARIO_KEYS = {"epsilon", "beta", "n", "seed", "adaptive", "metric", "cap"}
OUTPUT_KEYS = {"dir", "persist_trajectories"}
VALIDATE_KEYS = {"M", "seed"}


class UsageError(Exception):
    pass


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    for key, allowed in (("scenario", SCENARIO_KEYS), ("output", OUTPUT_KEYS),
                         ("validate", VALIDATE_KEYS)):
        block = data.get(key, {})
        if not isinstance(block, dict):
            raise ConfigError(f"'{key}' must be a mapping")
        bad = set(block) - allowed
        if bad:
            raise ConfigError(f"unknown keys in '{key}': {sorted(bad)}")
    return data


def resolve_problem(args, cfg: dict) -> Problem:
    preset = args.preset or cfg.get("preset")
    explicit = cfg.get("problem")
    if preset and explicit:
        raise ConfigError("give either a preset or an explicit problem block, not both")
    if not preset and not explicit:
        raise UsageError("no problem given: use --preset NAME or a config with a problem block")
    if preset:
        return build_preset(preset)
    return build_problem(explicit)


def scenario_config(args, cfg: dict, problem: Problem) -> ScenarioConfig:
    sc = dict(cfg.get("scenario", {}))
    for flag, key in (("epsilon", "epsilon"), ("beta", "beta"), ("n", "n"), ("seed", "seed"),
                      ("metric", "metric"), ("cap", "cap")):
        value = getattr(args, flag, None)
        if value is not None:
            sc[key] = value
    if getattr(args, "adaptive", False):
        sc["adaptive"] = True
    try:
        return ScenarioConfig(epsilon=float(sc.get("epsilon", 0.01)), beta=float(sc.get("beta", 1e-6)),
                              n_override=None if sc.get("n") is None else int(sc["n"]),
                              seed=int(sc.get("seed", 0)), adaptive=bool(sc.get("adaptive", False)),
                              metric=MetricKind.parse(sc.get("metric", "spec")), norm=problem.norm,
                              cap=int(sc.get("cap", 100)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario settings: {exc}") from None


def output_dir(args, cfg: dict) -> Path:
    out = args.out or cfg.get("output", {}).get("dir") or os.environ.get(OUT_ENV) or "simmetric-out"
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def _meta(args, started: float) -> dict:
    return {"version": __version__, "command": args.command, "argv": sys.argv[1:],
            "threads": getattr(args, "threads", 1), "started_unix": started,
            "elapsed_s": time.time() - started, "python": platform.python_version(),
            "numpy": np.__version__}


# ----------------------------------------------------------------------------
# commands


def cmd_estimate(args, cfg) -> int:
    started = time.time()
    problem = resolve_problem(args, cfg)
    config = scenario_config(args, cfg, problem)
    out = output_dir(args, cfg)
    persist = args.persist_trajectories or bool(cfg.get("output", {}).get("persist_trajectories"))
    est = estimate(config, problem.space, problem.scheme_for(config.metric), problem.system,
                   problem.abstraction, threads=args.threads, keep_trajectories=persist,
                   record_env=True, context={"problem": problem.describe()})
    summary = est.summary()
    _dump(out / "summary.json", summary)
    with open(out / "samples.jsonl", "w") as fh:
        for ev in est.evaluations:
            fh.write(json.dumps(ev.to_record(), sort_keys=True, default=_json_default) + "\n")
    traj_dir = out / "trajectories"
    for ev in est.evaluations:
        if ev.traj_S is not None and (persist or ev.violating):
            traj_dir.mkdir(exist_ok=True)
            ev.traj_S.to_csv(traj_dir / f"sample_{ev.index:06d}_system.csv")
            ev.traj_M.to_csv(traj_dir / f"sample_{ev.index:06d}_abstraction.csv")
    _dump(out / "run_meta.json", _meta(args, started))
    print(f"metric={config.metric.value} d_hat={est.d_hat:.6g} N={est.N} "
          f"epsilon={config.epsilon:g} beta={config.beta:g} violations={est.violations} "
          f"nulls={est.nulls} mode={est.mode}")
    print(f"wrote {out / 'summary.json'}")
    return 0


def cmd_validate(args, cfg) -> int:
    started = time.time()
    vcfg = cfg.get("validate", {})
    M = args.M if args.M is not None else int(vcfg.get("M", 1000))
    if M < 1:
        raise UsageError(f"validation batch size must be >= 1, got {M}")
    problem = resolve_problem(args, cfg)
    config = scenario_config(args, cfg, problem)
    if args.from_summary:
        try:
            prior = json.loads(Path(args.from_summary).read_text())
            d_hat = float(prior["d_hat"])
            config = ScenarioConfig(config.epsilon, config.beta, config.n_override,
                                    int(prior.get("seed", config.seed)), config.adaptive,
                                    MetricKind.parse(prior.get("metric", config.metric)),
                                    config.norm, config.cap)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read estimate summary {args.from_summary}: {exc}") from None
    elif args.d_hat is not None:
        d_hat = args.d_hat
    else:
        raise UsageError("validate needs --d-hat or --from-summary")
    fresh = args.fresh_seed if args.fresh_seed is not None else int(vcfg.get("seed", config.seed + 1))
    if fresh == config.seed:
        raise UsageError("the fresh seed must differ from the estimation seed")
    out = output_dir(args, cfg)
    res = validate_guarantee(d_hat, M, config, problem.space, problem.scheme_for(config.metric),
                             problem.system, problem.abstraction, fresh, threads=args.threads)
    _dump(out / "validation.json", {**res.to_dict(), "metric": config.metric.value,
                                     "problem": problem.name})
    _dump(out / "run_meta.json", _meta(args, started))
    verdict = "PASS" if res.passed else "FAIL"
    print(f"{verdict} violation_fraction={res.fraction:.6g} ({res.violations}/{res.M}) "
          f"threshold={res.threshold:g} epsilon={res.epsilon:g} d_hat={d_hat:.6g}")
    return 0 if res.passed else 1


def _margin_list(args) -> list[float]:
    margins = list(args.margins or [])
    for path in args.from_summary or []:
        try:
            margins.append(float(json.loads(Path(path).read_text())["d_hat"]))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read estimate summary {path}: {exc}") from None
    return margins


def cmd_kernel(args, cfg) -> int:
    started = time.time()
    problem = resolve_problem(args, cfg)
    if problem.system.n != 2 or problem.corridor is None:
        raise UsageError(f"kernel needs a 2-D problem with a corridor; {problem.name!r} has none")
    margins = _margin_list(args) or [0.0]
    if any(d < 0 for d in margins):
        raise UsageError("margins must be >= 0")
    out = output_dir(args, cfg)
    k_sys = problem.kernel_for(problem.system, 0.0)
    export_kernel(k_sys, out / "kernel_system_0.csv")
    reports = []
    for d in margins:
        k_abs = problem.kernel_for(problem.abstraction, d)
        export_kernel(k_abs, out / f"kernel_abstraction_{d:.6g}.csv")
        rep = kernel_containment(k_abs.mask(), k_sys.mask(), problem.grid, problem.domain)
        reports.append({"margin": d, **rep.to_dict()})
        dom = (f"; on start domain: {str(rep.contained_on_domain).lower()} "
               f"({rep.violating_domain_cells} violating of {rep.domain_cells})"
               if problem.domain is not None else "")
        print(f"kernel(M,{d:.6g}) ⊆ kernel(S,0): {str(rep.contained).lower()} "
              f"({rep.violating_cells} violating cells of {rep.inner_cells}){dom}")
    _dump(out / "containment.json", {"problem": problem.name, "reports": reports,
                                      "grid": problem.grid.to_dict()})
    _dump(out / "run_meta.json", _meta(args, started))
    return 0


def cmd_envset(args, cfg) -> int:
    started = time.time()
    margins = _margin_list(args)
    if not margins:
        raise UsageError("envset needs at least one margin")
    if any(d < 0 for d in margins):
        raise UsageError("margins must be >= 0")
    problem = resolve_problem(args, cfg)
    config = scenario_config(args, cfg, problem)
    out = output_dir(args, cfg)
    rows = []
    for d in margins:
        frac = estimate_safe_env_fraction(d, problem.space, problem.scheme, problem.abstraction,
                                          args.samples, config.seed, config.cap, problem.norm)
        rows.append((d, frac))
        print(f"margin={d:.6g} fraction={frac:.6g}")
    with open(out / "envset.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "fraction"])
        w.writerows([(repr(d), repr(f)) for d, f in rows])
    _dump(out / "envset.json", {"problem": problem.name, "samples": args.samples,
                                 "seed": config.seed,
                                 "rows": [{"d": d, "fraction": f} for d, f in rows]})
    _dump(out / "run_meta.json", _meta(args, started))
    return 0


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simmetric", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./simmetric-out)")
        if scenario:
            sp.add_argument("--metric", choices=[k.value for k in MetricKind])
            sp.add_argument("--seed", type=int)
            sp.add_argument("--epsilon", type=float)
            sp.add_argument("--beta", type=float)
            sp.add_argument("-n", "--n", type=int, help="override the sample count")
            sp.add_argument("--cap", type=int, help="rejection-sampling attempt cap")
            sp.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("estimate", help="estimate a metric by scenario sampling")
    common(e)
    e.add_argument("--adaptive", action="store_true", help="sample at the running maximum")
    e.add_argument("--persist-trajectories", action="store_true")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("validate", help="check an estimate on a fresh batch")
    common(v)
    v.add_argument("--d-hat", type=float)
    v.add_argument("--from-summary", help="summary.json from a previous estimate")
    v.add_argument("-M", "--M", type=int, help="fresh batch size (default 1000)")
    v.add_argument("--fresh-seed", type=int)
    v.set_defaults(func=cmd_validate)

    k = sub.add_parser("kernel", help="viability kernels and containment report")
    common(k, scenario=False)
    k.add_argument("--margins", type=float, nargs="*")
    k.add_argument("--from-summary", nargs="*", help="take margins from estimate summaries")
    k.set_defaults(func=cmd_kernel)

    s = sub.add_parser("envset", help="fraction of environments feasible at each margin")
    common(s)
    s.add_argument("--margins", type=float, nargs="*")
    s.add_argument("--from-summary", nargs="*")
    s.add_argument("--samples", type=int, default=500)
    s.set_defaults(func=cmd_envset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
