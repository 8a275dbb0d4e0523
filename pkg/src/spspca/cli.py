"""Command-line driver: ``spspca {fit,simulate,sweep,scree}``.

Exit codes: 0 success, 1 input error, 2 numerical failure.  On failure a
JSON error record is printed to stderr and written to ``<out>/error.json``
when the output directory is usable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import io as sio
from .errors import InputError, InvalidConfig, NumericalError

log = logging.getLogger("spspca")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; here usage errors are input errors
    def error(self, message):
        raise InvalidConfig(message)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _theta(text):
    return text if text == "auto" else float(text)


def _add_source(p):
    src = p.add_argument_group("data source")
    src.add_argument("--input", help="CSV file, one column per variable")
    src.add_argument("--generator", choices=sio.GENERATORS, help="built-in simulated data")
    src.add_argument("--n", type=int, default=100, dest="gen_n", help="rows for generated samples")
    src.add_argument("--sim-spec", type=_ints, help="p,d,s,m for --generator highdim")
    src.add_argument("--no-header", action="store_false", dest="header")
    src.add_argument("--delimiter", default=",")
    src.add_argument("--na-policy", choices=sio.NA_POLICIES, default="strict")
    pre = p.add_argument_group("preprocessing")
    pre.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    pre.add_argument("--correlation", action="store_true", help="divide centered columns by their SD")
    pre.add_argument("--log-returns", action="store_true", help="treat input as prices")


def _add_model(p, sparsity=True):
    m = p.add_argument_group("model")
    m.add_argument("--k", type=int, default=2)
    m.add_argument("--theta", type=_theta, help="FLOAT or 'auto' (default: midpoint of the domain)")
    m.add_argument("--tail-convention", choices=("squared", "linear"), default="squared")
    m.add_argument("--rescale", action=argparse.BooleanOptionalAction, default=True,
                   help="divide the Gram by its mean eigenvalue before building the penalty")
    m.add_argument("--baseline-lambda2", type=float, help="ridge weight of the uniform baseline")
    if sparsity:
        g = m.add_mutually_exclusive_group()
        g.add_argument("--lambda", type=_floats, dest="lambdas", help="comma list of L1 weights")
        g.add_argument("--cardinality", type=_ints, help="comma list of nonzeros per component")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spspca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit sparse loadings and write variance tables")
    _add_source(fit)
    _add_model(fit)
    fit.add_argument("--with-baseline", action="store_true", help="also fit the uniform-ridge baseline")

    sim = sub.add_parser("simulate", help="run a simulation case")
    sim.add_argument("--case", type=int, choices=(1, 2, 3, 4), required=True)
    sim.add_argument("--reps", type=int, default=50)
    sim.add_argument("--values", type=_ints, help="restrict the case grid to these parameter values")
    sim.add_argument("--cardinality", type=int, help="override the per-component cardinality")

    sweep = sub.add_parser("sweep", help="nonzero loadings needed per variance target")
    _add_source(sweep)
    _add_model(sweep, sparsity=False)
    sweep.add_argument("--targets", type=_floats, required=True, help="comma list of percentages")

    scree = sub.add_parser("scree", help="eigenvalues and cumulative variance")
    _add_source(scree)

    for p in (fit, sim, sweep, scree):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--timings", action="store_true", help="also write timings.json (not reproducible)")
    return parser


def config_from_args(ns) -> sio.RunConfig:
    d = vars(ns).copy()
    for key in ("verbose", "timings"):
        d.pop(key, None)
    extra = {}
    if ns.command == "simulate":
        extra = {"values": d.pop("values"), "cardinality": d.pop("cardinality")}
    return sio.RunConfig(**d, extra=extra)


# ---------------------------------------------------------------------------
# data

def load_data(cfg: sio.RunConfig):
    from .linalg import CovarianceInput
    from .simulate import SimSpec, gen_highdim, gen_lowdim, lowdim_population_covariance

    if cfg.input is not None:
        values, names = sio.load_csv(cfg.input, cfg.header, cfg.delimiter, cfg.na_policy)
        return sio.preprocess(values, names, cfg.center, cfg.correlation, cfg.log_returns)
    if cfg.generator == "lowdim-population":
        if cfg.log_returns or cfg.correlation or not cfg.center:
            raise InvalidConfig("preprocessing flags do not apply to a population covariance")
        return lowdim_population_covariance()
    if cfg.log_returns:
        raise InvalidConfig("--log-returns needs price data from --input")
    if cfg.generator == "lowdim":
        X = gen_lowdim(cfg.gen_n, cfg.seed)
    else:
        p, d, s, m = cfg.sim_spec
        X = gen_highdim(SimSpec(n=cfg.gen_n, p=p, d=d, s=s, m=m, seed=cfg.seed)).X
    if cfg.correlation:
        X = sio.preprocess(X.values, X.names, True, True, False)
    if not isinstance(X, CovarianceInput) and not cfg.center:
        raise InvalidConfig("generated samples are always centered")
    return X


def _names(data):
    names = getattr(data, "names", None)
    return list(names) if names else [f"V{i}" for i in range(1, data.p + 1)]


def _spca_config(cfg, **sparsity):
    from .spca import SpcaConfig

    return SpcaConfig(
        k=cfg.k, theta=cfg.theta, tail_convention=cfg.tail_convention,
        rescale=cfg.rescale, baseline_lambda2=cfg.baseline_lambda2, **sparsity,
    )


# ---------------------------------------------------------------------------
# commands

def _meta(cfg):
    return {"seed": cfg.seed, "config": cfg.echo()}


def cmd_fit(cfg, out):
    from .spca import fit_sp_spca, fit_spca_baseline, select_theta

    data = load_data(cfg)
    names = _names(data)
    sparsity = {"lambdas": cfg.lambdas} if cfg.lambdas is not None else {"cardinality": cfg.cardinality}
    sc = _spca_config(cfg, **sparsity)
    fits = []
    if cfg.theta == "auto":
        best, scores = select_theta(data, sc)
        fits.append(("sp-spca", best))
        path = os.path.join(out, "sp-spca_theta_scores.csv")
        sio.write_table(path, ["theta", "cumulative_pct"], scores, meta=_meta(cfg))
        written = [os.path.basename(path)]
    else:
        fits.append(("sp-spca", fit_sp_spca(data, sc)))
        written = []
    if cfg.with_baseline:
        fits.append(("spca", fit_spca_baseline(data, sc)))

    cols = [f"PC{j}" for j in range(1, cfg.k + 1)]
    for method, f in fits:
        for label, M in (("loadings", f.V_tilde), ("A", f.A), ("B", f.B)):
            name = f"{method}_{label}.csv"
            sio.write_matrix(os.path.join(out, name), M, names, cols, meta=_meta(cfg))
            written.append(name)
        v = f.variance
        rows = [[c, int(n), pct, cum, lam] for c, n, pct, cum, lam in
                zip(cols, v.nnz_per_component, v.per_component_pct, v.cumulative_pct, f.lambdas)]
        header = ["component", "nnz", "adjusted_variance_pct", "cumulative_pct", "lambda"]
        name = f"{method}_variance.csv"
        sio.write_table(os.path.join(out, name), header, rows, meta=_meta(cfg))
        written.append(name)
        name = f"{method}_variance_table.csv"
        sio.write_table(os.path.join(out, name), header[:4], [r[:4] for r in rows], sio.HUMAN_DIGITS)
        written.append(name)
        name = f"{method}_loadings_table.csv"
        sio.write_matrix(os.path.join(out, name), f.V_tilde, names, cols, sio.HUMAN_DIGITS)
        written.append(name)
        log.info("%s: cumulative adjusted variance %.4g%% (outer iterations %d, converged %s)",
                 method, v.cumulative, f.outer_iterations, f.converged)
    summary = {m: {"theta": f.theta, "converged": f.converged, "outer_iterations": f.outer_iterations,
                   "scale": f.scale, "cumulative_pct": f.variance.cumulative} for m, f in fits}
    return written, {"fits": summary}


def cmd_simulate(cfg, out):
    from .simulate import CASE_PARAM, run_case

    results = run_case(cfg.case, reps=cfg.reps, seed=cfg.seed,
                       cardinality=cfg.extra.get("cardinality"), values=cfg.extra.get("values"))
    param = CASE_PARAM[cfg.case]
    header = [param, "method", "cardinality", "replications", "failures", "mean_cumulative_pct", "mean_support_recovery"]
    rows = [[r.point[param], r.method, r.point["cardinality"], r.replications, len(r.errors),
             r.mean_cumulative, r.mean_support] for r in results]
    base = f"case{cfg.case}"
    sio.write_table(os.path.join(out, f"{base}_results.csv"), header, rows, meta=_meta(cfg))

    # human table: one row per parameter value, one column per method
    methods = list(dict.fromkeys(r.method for r in results))
    by_value = {}
    for r in results:
        by_value.setdefault(r.point[param], {})[r.method] = r.mean_cumulative
    table = [[v, *[by_value[v].get(m) for m in methods]] for v in by_value]
    sio.write_table(os.path.join(out, f"{base}_table.csv"), [param, *methods], table, sio.HUMAN_DIGITS)

    doc = {"seed": cfg.seed, "config": cfg.echo(), "results": [r.to_dict() for r in results]}
    with open(os.path.join(out, f"{base}_results.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in results:
        log.info("%s=%s %s: %.4g%%", param, r.point[param], r.method, r.mean_cumulative)
    return [f"{base}_results.csv", f"{base}_table.csv", f"{base}_results.json"], {}


def cmd_sweep(cfg, out):
    from .spca import fit_sp_spca, fit_spca_baseline
    from .variance import sparsity_sweep

    data = load_data(cfg)
    template = _spca_config(cfg, cardinality=[1] * cfg.k)
    sweeps = {}
    for method, fitter in (("sp-spca", fit_sp_spca), ("spca", fit_spca_baseline)):
        sweeps[method] = sparsity_sweep(data, template, cfg.targets, fitter=fitter)
    header = ["target_pct"]
    for m in sweeps:
        header += [f"{m}_total_nnz", f"{m}_achieved_pct", f"{m}_level", f"{m}_reached"]
    rows = []
    for i, t in enumerate(cfg.targets):
        row = [t]
        for m, sw in sweeps.items():
            r = sw[i]
            row += [r.total_nnz, r.achieved_pct, r.level, str(r.reached).lower()]
        rows.append(row)
    sio.write_table(os.path.join(out, "sweep.csv"), header, rows, meta=_meta(cfg))
    human = [[t, *[sw[i].total_nnz for sw in sweeps.values()]] for i, t in enumerate(cfg.targets)]
    sio.write_table(os.path.join(out, "sweep_table.csv"), ["target_pct", *sweeps], human, sio.HUMAN_DIGITS)
    return ["sweep.csv", "sweep_table.csv"], {}


def cmd_scree(cfg, out):
    from .spca import _prepare
    from .variance import scree_data

    _, model, _ = _prepare(load_data(cfg))
    eig, cum = scree_data(model)
    rows = [[i + 1, e, c] for i, (e, c) in enumerate(zip(eig, cum))]
    sio.write_table(os.path.join(out, "scree.csv"), ["component", "eigenvalue", "cumulative_pct"],
                    rows, meta=_meta(cfg))
    return ["scree.csv"], {}


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "sweep": cmd_sweep, "scree": cmd_scree}


def _exit_code(exc) -> int:
    if isinstance(exc, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return 2
    return 1


def _error_record(exc, code, out):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out and os.path.isdir(out):
        try:
            with open(os.path.join(out, "error.json"), "w") as fh:
                json.dump(rec, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError:
            pass


def run(cfg: sio.RunConfig, timings=False):
    os.makedirs(cfg.out, exist_ok=True)
    stale = os.path.join(cfg.out, "error.json")
    if os.path.exists(stale):
        os.remove(stale)
    if not os.access(cfg.out, os.W_OK):
        raise InvalidConfig(f"output directory {cfg.out} is not writable")
    start = time.perf_counter()
    written, extra = COMMANDS[cfg.command](cfg, cfg.out)
    elapsed = time.perf_counter() - start
    sio.write_manifest(os.path.join(cfg.out, "manifest.json"), cfg, written, extra)
    if timings:
        with open(os.path.join(cfg.out, "timings.json"), "w") as fh:
            json.dump({"seconds": elapsed}, fh)
    log.info("%s finished in %.2fs; wrote %d files to %s", cfg.command, elapsed, len(written) + 1, cfg.out)


def main(argv=None) -> int:
    out = None
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = ns.out
        cfg = config_from_args(ns)
        run(cfg, timings=ns.timings)
    except (InputError, NumericalError, ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        code = _exit_code(exc)
        _error_record(exc, code, out)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
