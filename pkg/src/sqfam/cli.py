"""``sqfam`` command line.

Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
failure.  Messages go to standard error; data goes to files or standard
output.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .estimation import (
    FitConfig,
    experiment_approximation,
    experiment_asymptotic_normality,
    experiment_misspecified_rate,
    fit_mle,
)
from .experiments import SUITES, approx_target, misspec_design, normality_design, run_suite
from .features import feature_map_from_dict
from .geometry import (
    bregman_divergence,
    divergence_chain,
    divergence_grid,
    fisher_augmented,
    fisher_g_family,
    fisher_squared,
    reverse_pinsker_bound,
)
from .gfamily import gspec_from_dict
from .io import ConfigError, read_csv, read_json, validate, write_csv, write_json, write_rows_csv
from .kernel import compute_kernel, kernel_from_dict
from .measure import Quadrature, integration_nodes, measure_from_dict, parse_scheme
from .model import SquaredFamily, canonicalize, density, log_density_batch
from .sampling import inverse_cdf_sample_1d, rejection_sample
from .targets import target_from_dict

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_family(path, kernel_path=None, scheme_text=None):
    """Family and optional theta from a model file; the kernel is read or computed."""
    doc = read_json(path, "model")
    fmap = feature_map_from_dict(doc["features"])
    mu = measure_from_dict(doc["measure"])
    if kernel_path is not None:
        K = kernel_from_dict(read_json(kernel_path, "kernel"))
    elif isinstance(doc.get("kernel"), str):
        K = kernel_from_dict(read_json(Path(path).parent / doc["kernel"], "kernel"))
    elif isinstance(doc.get("kernel"), dict):
        K = kernel_from_dict(doc["kernel"])
    else:
        scheme = parse_scheme(scheme_text or doc.get("scheme", "quad:64"))
        K = compute_kernel(fmap, mu, scheme)
    if K.n != fmap.output_dim:
        raise ConfigError(f"{path}: kernel has size {K.n} but the feature map has {fmap.output_dim} features")
    theta = None if "theta" not in doc else np.array(doc["theta"], dtype=float)
    return SquaredFamily(fmap, mu, K), theta


def _load_model(args):
    fam, theta = _load_family(args.model, getattr(args, "kernel", None), getattr(args, "scheme", None))
    if theta is None:
        raise ConfigError(f"{args.model}: $.theta is required for this subcommand")
    return fam.with_theta(theta)


def _fit_config(doc: dict) -> FitConfig:
    return FitConfig.from_dict({k: v for k, v in doc.items() if k != "seed"})


def cmd_kernel(args):
    doc = read_json(args.model, "model")
    fmap = feature_map_from_dict(doc["features"])
    mu = measure_from_dict(doc["measure"])
    K = compute_kernel(fmap, mu, parse_scheme(args.scheme or doc.get("scheme", "quad:64")))
    write_json(K.to_dict(), args.out)


def cmd_fit(args):
    fam, _ = _load_family(args.model, args.kernel, args.scheme)
    cfg_doc = read_json(args.config, "fit") if args.config else {}
    X, _ = read_csv(args.data)
    if X.shape[1] != fam.features.input_dim:
        raise ConfigError(f"{args.data}: expected {fam.features.input_dim} columns, got {X.shape[1]}")
    cfg = _fit_config(cfg_doc)
    res = fit_mle(X, fam, cfg, seed=int(cfg_doc.get("seed", args.seed)))
    out = res.to_dict()
    out["normaliser"] = float(res.theta_hat @ fam.kernel.matrix @ res.theta_hat)
    out["config"] = cfg.to_dict()
    write_json(out, args.out)


def cmd_density(args):
    model = _load_model(args)
    X, _ = read_csv(args.points)
    if args.log:
        write_csv(log_density_batch(model, X), args.out, ["log_density"])
    else:
        write_csv(density(model, X), args.out, ["density"])


def cmd_divergence(args):
    fam_p, th_p = _load_family(args.p, None, args.scheme)
    fam_q, th_q = _load_family(args.q, None, args.scheme)
    if th_p is None or th_q is None:
        raise ConfigError("both models need $.theta")
    if fam_p.measure.to_dict() != fam_q.measure.to_dict():
        raise ConfigError(f"{args.q}: $.measure differs from {args.p}")
    nodes, w = integration_nodes(fam_p.measure, Quadrature(args.nodes))
    p = density(fam_p.with_theta(th_p), nodes)
    q = density(fam_q.with_theta(th_q), nodes)
    out = divergence_chain(p, q, w)
    out["KL_q_p"] = divergence_grid(q, p, w, "KL")
    out["reverse_pinsker"] = {v: reverse_pinsker_bound(p, q, w, v) for v in ("halved", "full")}
    if fam_p.features.to_dict() == fam_q.features.to_dict() and th_p.shape == th_q.shape:
        K = fam_p.kernel
        tp = canonicalize(th_p, K) if th_p.ndim == 1 else th_p
        tq = canonicalize(th_q, K) if th_q.ndim == 1 else th_q
        out["bregman"] = bregman_divergence(K, tp, tq)
    write_json(out, args.out)


def cmd_fisher(args):
    model = _load_model(args)
    if args.variant == "singular":
        F = fisher_squared(model)
    elif args.variant == "augmented":
        F = fisher_augmented(model, args.sigma)
    else:
        if args.g is None:
            raise ConfigError("--g is required for --variant g")
        spec = gspec_from_dict(read_json(args.g, "gspec"))
        scheme = parse_scheme(args.scheme) if args.scheme else model.kernel.scheme
        F = fisher_g_family(spec, model.features, model.measure, model.theta, scheme, args.sigma)
    write_json(F.to_dict(), args.out)


def cmd_sample(args):
    model = _load_model(args)
    if args.method == "inverse_cdf":
        X = inverse_cdf_sample_1d(model, args.count, args.seed)
        info = None
    else:
        res = rejection_sample(model, args.count, args.seed)
        X = res.samples
        info = res
    write_csv(X, args.out, [f"x{i + 1}" for i in range(X.shape[1])])
    if info is not None and info.envelope_violation:
        ratio, env = info.max_observed_ratio, info.envelope
        print(f"warning: density ratio {ratio:.4g} exceeded the envelope {env:.4g}", file=sys.stderr)


def _sim_family(doc, default):
    if "model" not in doc:
        return default
    validate(doc["model"], "model", "$.model")
    fmap = feature_map_from_dict(doc["model"]["features"])
    mu = measure_from_dict(doc["model"]["measure"])
    if isinstance(doc["model"].get("kernel"), dict):
        K = kernel_from_dict(doc["model"]["kernel"])
    else:
        K = compute_kernel(fmap, mu, parse_scheme(doc["model"].get("scheme", "quad:64")))
    return SquaredFamily(fmap, mu, K), doc["model"].get("theta")


def cmd_simulate(args):
    kind = args.experiment
    schema = {"normality": "sim_normality", "misspec": "sim_misspec", "approx": "sim_approx", "suite": "sim_suite"}
    doc = read_json(args.config, schema[kind])
    cfg = FitConfig.from_dict(doc["fit"]) if "fit" in doc else None
    if kind == "normality":
        fam, ts = normality_design()
        fam, theta = _sim_family(doc, (fam, ts))
        if theta is None:
            raise ConfigError(f"{args.config}: $.model.theta (the true parameter) is required")
        report, rows = experiment_asymptotic_normality(
            fam,
            canonicalize(theta, fam.kernel),
            tuple(doc.get("N_list", (500, 2000, 8000))),
            doc.get("reps", 200),
            doc["seed"],
            cfg,
        )
    elif kind == "misspec":
        q, fam = misspec_design()
        fam, _ = _sim_family(doc, (fam, None))
        if "target" in doc:
            q = target_from_dict(doc["target"])
        report, rows = experiment_misspecified_rate(
            q,
            fam,
            tuple(doc.get("N_list", (500, 2000, 8000))),
            doc.get("reps", 100),
            doc["seed"],
            cfg or FitConfig(init="multistart", starts=5),
            doc.get("grid_nodes", 256),
        )
    elif kind == "approx":
        q = target_from_dict(doc["target"]) if "target" in doc else approx_target()
        report, rows = experiment_approximation(
            q,
            tuple(doc.get("n_list", (8, 16, 32, 64, 128))),
            tuple(doc.get("feature_seeds", (0, 1, 2, 3, 4))),
            doc.get("bandwidth", 10.0),
            cfg,
            doc.get("grid_nodes", 512),
        )
    else:
        names = doc.get("suites", list(SUITES))
        unknown = [n for n in names if n not in SUITES]
        if unknown:
            raise ConfigError(f"{args.config}: $.suites: unknown suite {unknown[0]!r}")
        results = [run_suite(n, doc["seed"]) for n in names]
        for r in results:
            status = "PASS" if r["passed"] else "FAIL"
            print(f"[{status}] criterion {r['criterion']:>2} {r['suite']} ({r['runtime_s']:.1f}s)", file=sys.stderr)
        report = {"seed": doc["seed"], "suites": results, "all_passed": all(r["passed"] for r in results)}
        rows = [{"suite": r["suite"], "criterion": r["criterion"], "passed": r["passed"]} for r in results]
    write_json(report, args.out)
    if args.rows:
        write_rows_csv(rows, args.rows)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sqfam", description="Squared families: kernels, fits, geometry and sampling.")
    parser.add_argument("--threads", type=int, default=None, help="limit BLAS/OpenMP threads")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel", help="compute the kernel of a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", help="quad:N or mc:N[:seed]; defaults to the model's scheme or quad:64")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("fit", help="augmented maximum likelihood fit")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--kernel")
    p.add_argument("--scheme")
    p.add_argument("--seed", type=int, default=0, help="seed of the auxiliary Gaussian draws")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("density", help="evaluate a model density at points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--kernel")
    p.add_argument("--scheme")
    p.add_argument("--log", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("divergence", help="divergences between two models on a common measure")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--nodes", type=int, default=256, help="quadrature nodes per dimension")
    p.add_argument("--scheme")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("fisher", help="Fisher information matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--variant", choices=["singular", "augmented", "g"], default="singular")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--g", help="g specification JSON for --variant g")
    p.add_argument("--kernel")
    p.add_argument("--scheme")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser("sample", help="draw samples from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["rejection", "inverse_cdf"], default="rejection")
    p.add_argument("--kernel")
    p.add_argument("--scheme")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="run an experiment or acceptance suites")
    p.add_argument("experiment", choices=["normality", "misspec", "approx", "suite"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--rows", help="CSV of per-replication values")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command == "fisher" and args.variant == "augmented" and args.sigma is None:
        args.sigma = 1.0
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"sqfam {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"sqfam {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
