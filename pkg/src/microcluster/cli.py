"""Command-line interface: simulate, fit, predict, graph and diagnose.

Partitions are read and written as one token per line in observation order.
Every command that draws random numbers takes ``--seed``; for a fixed seed the
output files are byte-identical across runs.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import crm, diagnostics, graphs, inference, predict
from .exceptions import DomainError
from .generative import CrpParams, simulate_partition, simulate_two_param_crp
from .partition import Partition, canonicalize, stats

MODELS = ("nonexch", "crp", "crp2")


def read_partition(path):
    with open(path, encoding="utf-8") as fh:
        tokens = [line.strip() for line in fh]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise DomainError(f"{path} holds no tokens")
    return canonicalize(tokens)


def write_partition(p, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(str(v) for v in p.labels.tolist()))
        fh.write("\n")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _range(text):
    vals = _float_list(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError("expected LO,HI with LO < HI")
    return vals


def _model_params(args):
    return crm.ModelParams.from_values(args.xi, args.sigma, args.zeta, args.gamma)


def _crp_params(args):
    discount = 0.0 if args.model == "crp" else args.sigma2
    return CrpParams(discount, args.kappa2)


def _fit_config(args):
    return inference.FitConfig(
        n_particles=args.particles,
        sigma_grid=args.grid_sigma or inference.default_sigma_grid(),
        xi_grid=args.grid_xi,
        zeta_range=args.zeta_range,
        zeta_depth=args.zeta_depth,
        replicates=args.replicates,
        seed=args.seed,
        gamma_coef=args.gamma,
        crp_strength_range=args.kappa_range,
    )


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _train_split(p, frac):
    if not 0.0 < frac <= 1.0:
        raise DomainError("--train-frac must lie in (0, 1]")
    n_train = max(1, int(round(frac * p.n)))
    return Partition(p.labels[:n_train], validate=False), n_train


def cmd_simulate(args):
    rng = np.random.default_rng(args.seed)
    out = _out_dir(args)
    info = {"model": args.model, "n": args.n, "seed": args.seed}
    if args.model == "nonexch":
        params = _model_params(args)
        p, state = simulate_partition(args.n, params, rng)
        rows = zip(range(1, p.n + 1), state.arrivals, state.locations[p.labels - 1], p.labels)
        write_csv(os.path.join(out, "latent.csv"), ["i", "tau", "theta", "cluster"], rows)
        info["params"] = params.as_dict()
    else:
        crp = _crp_params(args)
        p = simulate_two_param_crp(args.n, crp, rng)
        info["params"] = {"sigma2": crp.discount, "kappa2": crp.strength}
    write_partition(p, os.path.join(out, "partition.txt"))
    st = stats(p)
    info.update(k=st.k, size_histogram={str(r): c for r, c in sorted(st.size_histogram.items())})
    write_json(info, os.path.join(out, "stats.json"))
    return 0


def cmd_fit(args):
    p = read_partition(args.input)
    train, n_train = _train_split(p, args.train_frac)
    config = _fit_config(args)
    out = _out_dir(args)
    summary = {"model": args.model, "n": p.n, "n_train": n_train, "seed": args.seed}
    if args.model == "nonexch":

        def progress(xi, sigma, zeta, mean, se):
            if args.verbose:
                print(f"xi={xi} sigma={sigma:.4f} zeta={zeta:.4f} log-evidence={mean:.3f}", file=sys.stderr)

        result = inference.fit_mle(train, config, progress=progress)
        rows = []
        for xi in config.xi_grid:
            for sigma in config.sigma_grid:
                zeta, mean, se = result.surface.get((float(xi), float(sigma)), (float("nan"),) * 3)
                rows.append([float(xi), float(sigma), zeta, mean, se])
        write_csv(os.path.join(out, "surface.csv"), ["xi", "sigma", "zeta", "log_evidence", "se"], rows)
        summary.update(
            params=result.best_params.as_dict(),
            log_evidence=result.best_log_evidence,
            failures={f"{k[0]},{k[1]}": v for k, v in result.failures.items()},
        )
    else:
        if args.model == "crp":
            config.sigma_grid = (0.0,)
        crp, value, surface = inference.fit_two_param_crp(train, config)
        rows = [[s, kappa, v] for s, (kappa, v) in sorted(surface.items())]
        write_csv(os.path.join(out, "surface.csv"), ["sigma2", "kappa2", "log_likelihood"], rows)
        summary.update(params={"sigma2": crp.discount, "kappa2": crp.strength}, log_likelihood=value)
    write_json(summary, os.path.join(out, "fit.json"))
    return 0


def _params_from_fit(args):
    with open(args.fit, encoding="utf-8") as fh:
        fitted = json.load(fh)
    if fitted.get("model") != args.model:
        raise DomainError(f"fit file is for model {fitted.get('model')!r}, not {args.model!r}")
    prm = fitted["params"]
    if args.model == "nonexch":
        return crm.ModelParams.from_values(prm["xi"], prm["sigma"], prm["zeta"], prm.get("gamma", 1.0))
    return CrpParams(prm["sigma2"], prm["kappa2"])


def cmd_predict(args):
    p = read_partition(args.input)
    train, n_train = _train_split(p, args.train_frac)
    m = p.n - n_train
    if m < 1:
        raise DomainError("nothing to predict: the training prefix covers the whole input")
    rng = np.random.default_rng(args.seed)
    if args.fit:
        params = _params_from_fit(args)
    else:
        params = _model_params(args) if args.model == "nonexch" else _crp_params(args)
    if args.model == "nonexch":
        config = _fit_config(args)
        system, _ = inference.run_smc(train, params, config, rng)
        samples = predict.predict_continuation(system, m, params, rng, args.samples)
    else:
        samples = predict.predict_two_param_crp(train, m, params, rng, args.samples)
    out = _out_dir(args)

    # trajectories of the largest training clusters, one column per sample
    sizes = train.sizes()
    top = np.argsort(-sizes, kind="stable")[: args.traj_clusters] + 1
    k = train.k
    truth = predict.training_trajectories(p, n_train, k)
    per_sample = np.stack([s.trajectories(k) for s in samples])
    rows = []
    for j in top:
        for step in range(m):
            col = per_sample[:, step, j - 1]
            rows.append([n_train + step + 1, int(j), truth[step, j - 1], col.mean(), *col.tolist()])
    header = ["n", "cluster", "observed", "mean"] + [f"sample_{i}" for i in range(len(samples))]
    write_csv(os.path.join(out, "trajectories.csv"), header, rows)

    errors = predict.l2_error(samples, p, n_train)
    write_csv(os.path.join(out, "errors.csv"), ["sample", "E"], enumerate(errors.tolist()))
    summary = predict.error_summary(errors)
    write_csv(os.path.join(out, "error_summary.csv"), ["statistic", "value"], summary.items())

    bands = predict.size_proportion_bands(samples, args.r_max)
    observed = predict.size_proportions(p, args.r_max)
    rows = [[int(r), lo, med, hi, mean, obs] for (r, lo, med, hi, mean), obs in zip(bands, observed)]
    write_csv(os.path.join(out, "bands.csv"), ["r", "lower", "median", "upper", "mean", "observed"], rows)
    return 0


def cmd_graph(args):
    p = read_partition(args.input)
    g = graphs.partition_to_multigraph(p)
    out = _out_dir(args)
    graphs.write_edge_list(g, os.path.join(out, "edges.txt"))
    summary = graphs.graph_summary(g)
    if g.dropped_item:
        summary["warning"] = "odd number of items; the last one was dropped"
    write_json(summary, os.path.join(out, "graph.json"))
    return 0


def cmd_diagnose(args):
    if args.n < 1000:
        raise DomainError("diagnose needs --n of at least 1000")
    params = _model_params(args)
    _, state = simulate_partition(args.n, params, np.random.default_rng(args.seed))
    report = diagnostics.asymptotic_report(state, params)
    report["seed"] = args.seed
    out = _out_dir(args)
    diagnostics.write_report(report, os.path.join(out, "report.json"))
    diagnostics.write_trajectory_csv(state, os.path.join(out, "trajectory.csv"))
    for check in report["checks"]:
        flag = "ok  " if check["passed"] else "FAIL"
        print(f"{flag} {check['name']}: {check['empirical']:.4f} vs {check['theoretical']:.4f}")
    return 0 if report["passed"] else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="microcluster", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, input_file=False):
        if input_file:
            p.add_argument("input", help="partition file, one token per line")
        p.add_argument("--model", choices=MODELS, default="nonexch")
        p.add_argument("--xi", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--sigma", type=float, default=0.5)
        p.add_argument("--zeta", type=float, default=1.0)
        p.add_argument("--sigma2", type=float, default=0.5)
        p.add_argument("--kappa2", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")

    def fitting(p):
        p.add_argument("--particles", type=int, default=10000)
        p.add_argument("--train-frac", type=float, default=1.0)
        p.add_argument("--grid-sigma", type=_float_list, default=None)
        p.add_argument("--grid-xi", type=_float_list, default=(1.0, 2.0, 3.0))
        p.add_argument("--zeta-range", type=_range, default=(0.0, 100.0))
        p.add_argument("--zeta-depth", type=int, default=20)
        p.add_argument("--replicates", type=int, default=3)
        p.add_argument("--kappa-range", type=_range, default=(0.0, 100.0))

    p = sub.add_parser("simulate", help="simulate a partition")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="grid maximum likelihood on a training prefix")
    common(p, input_file=True)
    fitting(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive continuations of a training prefix")
    common(p, input_file=True)
    fitting(p)
    p.set_defaults(train_frac=0.5)
    p.add_argument("--fit", help="fit.json from the fit command; overrides parameter flags")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--r-max", type=int, default=10)
    p.add_argument("--traj-clusters", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("graph", help="multigraph of consecutive pairs")
    p.add_argument("input")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("diagnose", help="simulate and check the asymptotic laws")
    common(p)
    p.add_argument("--n", type=int, default=100000)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
