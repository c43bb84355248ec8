"""Command-line front end: runs, experiments, diagnostics, and oracles.

Exit codes: 0 on success, 2 on configuration or model errors, 3 when a
strict-policy run halts on mutation-set failure, 64 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from .analysis import (derangement_sign_det, exen_ratio, pdg_bruteforce,
                       pdg_closed, projection_from_moments)
from .basis import basis_quality, select_bstar
from .engine import EvolutionConfig, QuadraticPerfModel, quadratic_stats_for, \
    run_evolution
from .errors import ConfigError, ModelError
from .experiments import (SCENARIOS, MeanEstimationModel, ScenarioConfig,
                          _pair_renewal, run_frontier_scaling, run_scenario)
from .frontier import FrontierProblem, efficient_frontier, kkt_oracle
from .io import (ensure_dir, load_config, load_dataset_csv, write_json_report,
                 write_path_csv, write_trace_csv, write_trace_jsonl)
from .model import (BregmanGenerator, ConditionSampler, DataColumnPanel,
                    IdentityPanel, MutationSet, rng_for)
from .schedule import (DEFAULT_KNOBS, KnobTriple, compute_schedule,
                       estimate_model_constants, make_drift_plan)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED_RUN = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    # usage problems (unknown flags/subcommands, bad literals) exit 64
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _knobs_from(cfg: dict) -> KnobTriple:
    knobs = cfg.get("knobs")
    if knobs is None:
        return DEFAULT_KNOBS
    zt, za, zl = knobs
    return KnobTriple(z_tau=float(zt), z_alpha=float(za), z_tol=float(zl))


def _generator_from(spec) -> BregmanGenerator:
    if spec is None or spec == "squared_euclidean":
        return BregmanGenerator.squared_euclidean()
    if isinstance(spec, dict) and spec.get("kind") == "mahalanobis":
        return BregmanGenerator.mahalanobis(np.asarray(spec["matrix"], float))
    raise ConfigError(f"unsupported generator spec: {spec!r}")


class _RunSetup:
    """Everything `evolve` and the diagnostics need, built from one config."""

    def __init__(self, cfg: dict):
        model_cfg = cfg.get("model")
        if not isinstance(model_cfg, dict):
            raise ConfigError("config needs a 'model' section")
        dataset = model_cfg.get("dataset")
        if not dataset:
            raise ConfigError("model.dataset (a CSV path) is required")
        target = model_cfg.get("target", "mean")
        if target not in ("mean", "labels"):
            raise ConfigError("model.target must be 'mean' or 'labels'")
        self.gen = _generator_from(model_cfg.get("generator"))
        X, Y = load_dataset_csv(dataset, dim_x=model_cfg.get("dim"))
        self.target = target
        seed = int(cfg.get("run", {}).get("seed", 0))
        self.seed = seed

        if target == "mean":
            self.dim = X.shape[1]
            self.panel = IdentityPanel(self.dim)
            self.data = X
            self.mu = X.mean(axis=0)
            self.t_coords = self.mu
            self.w_star = None
        else:
            if Y is None:
                raise ConfigError("labels target needs a y column in the CSV")
            Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
            if Y.shape[1] != 1:
                raise ConfigError("labels target needs exactly one y column")
            Y = Y[:, 0]
            self.dim = X.shape[1]
            n = X.shape[0]
            self.A = X.T @ X / n
            self.c_vec = X.T @ Y / n
            self.w_star, self.baseline = projection_from_moments(
                self.A, self.c_vec, float(Y @ Y) / n)
            self.panel = DataColumnPanel(self.dim, columns=tuple(range(self.dim)))
            self.data = np.column_stack([X, Y])
            self.t_coords = self.w_star
        self.sampler = ConditionSampler.empirical(self.data, seed=seed)

        mut_cfg = cfg.get("mutations", {"source": "orthonormal"})
        source = mut_cfg.get("source", "orthonormal")
        self.renewal_fn = None
        if source == "orthonormal":
            self.mutations = MutationSet.orthonormal(self.dim)
        elif source == "explicit":
            vectors = np.asarray(mut_cfg["vectors"], float)
            self.mutations = MutationSet(np.column_stack(list(vectors)))
        elif source == "data_pairs":
            if self.data.shape[1] < 3 and target == "mean":
                raise ConfigError("data_pairs mutations need a labels target")
            self.renewal_fn = _pair_renewal(
                self.data, float(mut_cfg.get("det_min", 0.05)),
                float(mut_cfg.get("norm_min", 0.2)))
            self.mutations = self.renewal_fn(rng_for((seed, "renew")), 0)
        else:
            raise ConfigError(f"unknown mutation source: {source!r}")

        sched_cfg = cfg.get("schedule", {})
        self.epsilon = float(sched_cfg.get("epsilon", 0.1))
        self.knobs = _knobs_from(sched_cfg)
        run_cfg = cfg.get("run", {})
        f0 = run_cfg.get("f0")
        self.f0 = np.zeros(self.dim) if f0 is None else np.asarray(f0, float)
        self.constants = estimate_model_constants(
            self.panel, self.mutations, self.sampler, self.gen)
        self.schedule = compute_schedule(
            self.epsilon, self.knobs, self.constants,
            horizon=sched_cfg.get("d_hint"), f0=self.f0,
            t_coords=self.t_coords, c_t=float(sched_cfg.get("c_t", 1.0)),
            c_m=float(sched_cfg.get("c_m", 1.0)),
            m_cap=int(sched_cfg.get("m_cap", 50000)))
        self.run_cfg = run_cfg

    def build_model(self):
        if self.target == "mean":
            return MeanEstimationModel(self.sampler, self.mu)
        dim = self.dim
        return QuadraticPerfModel(
            self.sampler,
            quadratic_stats_for(self.panel, self.gen,
                                lambda P: P[:, dim:dim + 1]),
            true_stats=(self.A, self.c_vec, float(self.c_vec @ self.w_star)))

    def build_run_config(self) -> EvolutionConfig:
        rc = self.run_cfg
        renewal_period = rc.get("renewal_period")
        return EvolutionConfig(
            mutations=self.mutations, alpha=self.schedule.alpha,
            tol=self.schedule.tol,
            m=int(rc.get("m_override") or self.schedule.m),
            t_steps=int(rc.get("t_override") or self.schedule.t_steps),
            seed=self.seed,
            failure_policy=rc.get("failure_policy", "strict"),
            epsilon=self.epsilon,
            renewal_period=renewal_period,
            renewal_fn=self.renewal_fn if renewal_period else None,
            f0=self.f0, record_path=bool(rc.get("record_path", False)))


def _cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    setup = _RunSetup(cfg)
    if args.seed is not None:
        setup.seed = args.seed
        setup.sampler = ConditionSampler.empirical(setup.data, seed=args.seed)
        setup.run_cfg["seed"] = args.seed
    model = setup.build_model()
    config = setup.build_run_config()
    result = run_evolution(model, config)

    out = ensure_dir(args.out) if args.out else None
    if out:
        if args.format == "csv":
            write_trace_csv(os.path.join(out, "trace.csv"), result.trace)
        else:
            write_trace_jsonl(os.path.join(out, "trace.jsonl"), result.trace)
        if result.path is not None:
            write_path_csv(os.path.join(out, "path.csv"), result.path)
        write_json_report(os.path.join(out, "schedule.json"),
                          setup.schedule.to_dict())
        write_json_report(os.path.join(out, "organism.json"), {
            "coords": [float(v) for v in result.organism.coords],
            "counts": [int(v) for v in result.organism.counts],
            "base": [float(v) for v in result.organism.base],
            "alpha": result.organism.alpha,
        })
    _emit({
        "steps": len(result.trace), "failed": result.failed,
        "failure_step": result.failure_step,
        "forced_steps": result.forced_steps,
        "initial_true_perf": result.initial_true_perf,
        "final_true_perf": result.final_true_perf,
        "in_target_set": bool(result.final_true_perf >= -setup.epsilon),
    })
    if result.failed and config.failure_policy == "strict":
        return EXIT_FAILED_RUN
    return EXIT_OK


def _parse_seeds(text: str) -> list:
    if "," in text:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    count = int(text)
    if count <= 0:
        raise ConfigError("--seeds as a count must be positive")
    return list(range(count))


def _cmd_experiment(args) -> int:
    file_cfg = load_config(args.config) if args.config else {}
    scenario = args.scenario or file_cfg.get("scenario")
    if not scenario:
        raise ConfigError("a scenario is required (--scenario or config)")
    seeds = _parse_seeds(args.seeds) if args.seeds else file_cfg.get("seeds")
    if seeds is None:
        seeds = list(range(10))
    epsilon = args.epsilon if args.epsilon is not None \
        else file_cfg.get("epsilon", 0.1)
    cfg = ScenarioConfig(scenario=scenario, seeds=list(seeds),
                         epsilon=float(epsilon),
                         overrides=file_cfg.get("overrides", {}),
                         out_dir=args.out)
    report = run_scenario(cfg)
    summary = {"scenario": scenario, "seeds": len(cfg.seeds),
               "epsilon": cfg.epsilon}
    for key in ("success_fraction", "monotonic_fraction", "drift_bound"):
        if key in report:
            summary[key] = report[key]
    if "stable_arm" in report:
        summary["stable_dwell_fraction"] = report["stable_arm"]["dwell_fraction"]
        summary["default_dwell_fraction"] = \
            report["default_arm"]["dwell_fraction"]
    if "arms" in report:
        summary["success_by_multiplier"] = {
            str(arm["multiplier"]): arm["success_fraction"]
            for arm in report["arms"]}
    _emit(summary)
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    setup = _RunSetup(cfg)
    if args.what == "basis":
        quality = basis_quality(setup.mutations.vectors)
        selection = select_bstar(setup.mutations)
        _emit({"quality": quality.to_dict()
               if hasattr(quality, "to_dict") else vars(quality),
               "bstar_indices": [int(i) for i in selection.indices],
               "exhaustive": selection.exhaustive})
        return EXIT_OK
    if args.what == "exen":
        coords = np.asarray([float(v) for v in args.coords.split(",")]) \
            if args.coords else setup.f0
        rep = exen_ratio(coords, setup.panel, setup.sampler)
        _emit(rep.to_dict())
        return EXIT_OK
    payload = setup.schedule.to_dict()
    payload["drift_plan"] = make_drift_plan(setup.schedule).to_dict()
    _emit(payload)
    return EXIT_OK


def _cmd_frontier(args) -> int:
    if args.scan:
        report = run_frontier_scaling(seed=args.seed, dim=args.dim)
        if args.out:
            write_json_report(os.path.join(ensure_dir(args.out),
                                           "frontier_scan.json"), report)
        _emit({"slope_generic": report["generic"]["slope_max_abs"],
               "slope_zero_sum": report["zero_sum"]["slope_max_abs"],
               "eps_list": report["eps_list"]})
        return EXIT_OK
    if not args.config:
        raise ConfigError("frontier needs --config or --scan")
    cfg = load_config(args.config)
    for key in ("gamma", "delta", "n", "alpha", "premium"):
        if key not in cfg:
            raise ConfigError(f"frontier config needs '{key}'")
    problem = FrontierProblem(np.asarray(cfg["gamma"], float),
                              np.asarray(cfg["delta"], float),
                              n=float(cfg["n"]), alpha=float(cfg["alpha"]))
    hi, lo = efficient_frontier(problem, float(cfg["premium"]))
    out = {"r_high": hi.r, "r_low": lo.r, "premium": float(cfg["premium"]),
           "min_premium": problem.min_premium,
           "degenerate": problem.is_degenerate}
    for tag, point in (("high", hi), ("low", lo)):
        kkt = kkt_oracle(problem, point.r)
        out[tag] = {"r": point.r, "premium": kkt.premium,
                    "lambda_r": kkt.lambda_r, "lambda_n": kkt.lambda_n,
                    "budget": [float(v) for v in kkt.b]}
    _emit(out)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.kind == "pdg":
        if args.dg is None or args.z is None:
            raise ConfigError("oracle pdg needs --dg and --z")
        z = Fraction(str(args.z))
        closed = pdg_closed(args.dg, z)
        brute = pdg_bruteforce(args.dg, z)
        _emit({"dg": args.dg, "z": str(z), "closed": str(closed),
               "bruteforce": str(brute), "closed_float": float(closed),
               "equal": closed == brute})
        return EXIT_OK
    if args.j is None:
        raise ConfigError("oracle derangement needs --j")
    value = derangement_sign_det(args.j)
    expected = (-1) ** (args.j - 1) * (args.j - 1)
    _emit({"j": args.j, "det": value, "closed_form": expected,
           "equal": value == expected})
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="evospace",
                     description="evolution runs, diagnostics, and oracles")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_evolve = sub.add_parser("evolve", help="single run from a JSON config")
    p_evolve.add_argument("--config", required=True)
    p_evolve.add_argument("--seed", type=int, default=None)
    p_evolve.add_argument("--out", default=None)
    p_evolve.add_argument("--format", choices=("json", "csv"), default="json")
    p_evolve.set_defaults(fn=_cmd_evolve)

    p_exp = sub.add_parser("experiment", help="seeded scenario sweep")
    p_exp.add_argument("--scenario", choices=SCENARIOS, default=None)
    p_exp.add_argument("--config", default=None)
    p_exp.add_argument("--seeds", default=None,
                       help="count (e.g. 100) or comma list (e.g. 0,3,7)")
    p_exp.add_argument("--epsilon", type=float, default=None)
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(fn=_cmd_experiment)

    p_diag = sub.add_parser("diagnose", help="basis/exen/schedule diagnostics")
    p_diag.add_argument("what", choices=("basis", "exen", "schedule"))
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--coords", default=None)
    p_diag.set_defaults(fn=_cmd_diagnose)

    p_front = sub.add_parser("frontier", help="efficient-frontier analytics")
    p_front.add_argument("--config", default=None)
    p_front.add_argument("--scan", action="store_true",
                         help="accuracy-scaling sweep instead of one level")
    p_front.add_argument("--seed", type=int, default=0)
    p_front.add_argument("--dim", type=int, default=4)
    p_front.add_argument("--out", default=None)
    p_front.set_defaults(fn=_cmd_frontier)

    p_oracle = sub.add_parser("oracle", help="closed-form combinatorial checks")
    p_oracle.add_argument("kind", choices=("pdg", "derangement"))
    p_oracle.add_argument("--dg", type=int, default=None)
    p_oracle.add_argument("--z", default=None)
    p_oracle.add_argument("--j", type=int, default=None)
    p_oracle.set_defaults(fn=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
