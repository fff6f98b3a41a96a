"""Command-line entry point.

Subcommands: estimate, simulate, placebo, validate-config, list-dgps.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import re
import sys
from pathlib import Path

import numpy as np

from ..cate import (calibration, dr_signal, heterogeneity_blp_test,
                    meta_learn, three_way_split, toc_qini)
from ..dml import (did_canonical, dml_atet, dml_did_panel, dml_did_rcs,
                   dml_gate, dml_irm_ate, dml_late, dml_pliv, dml_plm,
                   rct_estimators, rdd_sharp)
from ..errors import (ConfigError, DmlkitError, NonBinaryTreatment,
                      ParseError, UnknownDgp)
from ..learners import (BoostLearner, ForestLearner, LassoPluginLearner,
                        LinearLearner, LogisticLearner, MeanLearner,
                        TreeLearner, ZeroLearner, cross_fit_predict,
                        make_folds)
from ..rng import derive_seed
from ..sensitivity import ovb_from_data
from ..weak_id import first_stage_diag, robust_region
from . import dgps
from .config import (RunConfig, load_config, validate_config)
from .ingest import ingest_csv
from .reports import provenance, write_report, write_table

DEFAULT_ALPHA = 0.05
DEFAULT_FOLDS = 5

DATA_ERRORS = (ParseError, NonBinaryTreatment, FileNotFoundError,
               IsADirectoryError)

_LEARNER_SPEC = re.compile(r"^([a-z_]+)(?:\((.*)\))?$")


def make_learner(spec: str, seed: int):
    """Build a learner from a config string like ``forest(trees=50)``."""
    match = _LEARNER_SPEC.match(spec.strip())
    if not match:
        raise ConfigError(f"cannot parse learner spec {spec!r}")
    name, argtext = match.group(1), match.group(2) or ""
    kwargs = {}
    for part in argtext.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"learner option {part!r} must be key=value")
        key, value = (s.strip() for s in part.split("=", 1))
        kwargs[key] = value

    def opt(key, default, cast):
        raw = kwargs.pop(key, None)
        return default if raw is None else cast(raw)

    try:
        if name == "mean":
            learner = MeanLearner()
        elif name == "zero":
            learner = ZeroLearner()
        elif name == "linear":
            learner = LinearLearner()
        elif name == "logistic":
            learner = LogisticLearner()
        elif name == "lasso":
            learner = LassoPluginLearner(c=opt("c", 1.1, float),
                                         a=opt("a", 0.05, float))
        elif name == "tree":
            learner = TreeLearner(max_depth=opt("depth", 3, int),
                                  min_leaf=opt("min_leaf", 5, int))
        elif name == "forest":
            learner = ForestLearner(B=opt("trees", 50, int),
                                    max_depth=opt("depth", 8, int),
                                    min_leaf=opt("min_leaf", 5, int),
                                    seed=seed)
        elif name == "boost":
            learner = BoostLearner(J=opt("rounds", 100, int),
                                   rate=opt("rate", 0.1, float))
        else:
            raise ConfigError(f"unknown learner {name!r}")
    except ValueError as exc:
        raise ConfigError(f"bad learner option in {spec!r}: {exc}") from exc
    if kwargs:
        raise ConfigError(
            f"unknown learner option(s) {', '.join(kwargs)} in {spec!r}")
    return learner


class _ConstructorLearner:
    """Rebuilds a learner from its spec for every fit, so shared specs
    never leak fitted state between nuisances."""

    def __init__(self, spec, seed):
        self.spec = spec
        self.seed = seed

    def fit(self, X, y, weights=None):
        return make_learner(self.spec, self.seed).fit(X, y, weights=weights)


def _learner(config: RunConfig, role: str, default: str):
    spec = config.get(f"learner_{role}", config.get("learner", default))
    seed = derive_seed(config.seed, f"learner-{role}", 0)
    return _ConstructorLearner(spec, seed)


# ---------------------------------------------------------------------------
# Estimation dispatch


def _load_columns(config: RunConfig, data_path, estimand: str) -> dict:
    roles = {}
    for role in ("outcome", "treatment", "instrument", "group", "time",
                 "running", "outcome_pre"):
        value = config.get(role)
        if value is not None:
            roles[role] = [value]
    for role in ("controls", "effect_covariates"):
        value = config.get(role)
        if value:
            roles[role] = list(value)
    wanted = [c for cols in roles.values() for c in cols]
    binary = []
    if estimand in ("ate", "atet", "gate", "late", "did_panel", "did_rcs",
                    "did_canonical", "rct", "cate-pipeline"):
        binary.append(config.get("treatment"))
    if estimand == "late":
        binary.append(config.get("instrument"))
    table = ingest_csv(data_path, wanted, binary=[b for b in binary if b])
    data = {}
    for role, cols in roles.items():
        if role in ("controls", "effect_covariates"):
            data[role] = np.column_stack([table[c] for c in cols])
        else:
            data[role] = table[cols[0]]
    return data


def _result_rows(result, labels=None) -> list[dict]:
    rows = []
    for i in range(result.estimates.size):
        rows.append({
            "label": str(labels[i]) if labels is not None else "theta",
            "estimate": float(result.estimates[i]),
            "std_error": float(result.std_errors[i]),
            "ci_lower": float(result.ci_lower[i]),
            "ci_upper": float(result.ci_upper[i]),
        })
    return rows


def _result_payload(result, labels=None) -> dict:
    diag = dict(result.diagnostics)
    rmse = {k: diag.pop(k) for k in list(diag) if k.startswith("rmse_")}
    return {
        "estimates": _result_rows(result, labels),
        "alpha": result.alpha,
        "n": result.n,
        "trim_count": result.trim_count,
        "nuisance_rmse": rmse,
        "diagnostics": diag,
    }


def _plan(config: RunConfig, n: int):
    K = config.get("folds", DEFAULT_FOLDS)
    return make_folds(n, K, derive_seed(config.seed, "folds", 0))


def _controls(data, n):
    X = data.get("controls")
    return X if X is not None else np.ones((n, 1))


def estimate_report(config: RunConfig, data_path) -> tuple[dict, dict]:
    """Run the configured estimand; returns (report, artifact tables)."""
    validate_config(config)
    estimand = config.estimand
    data = _load_columns(config, data_path, estimand)
    y = data.get("outcome")
    n = y.size if y is not None else data["treatment"].size
    alpha = config.get("alpha", DEFAULT_ALPHA)
    artifacts: dict[str, list[dict]] = {}
    labels = None
    extra: dict = {}

    if estimand == "plm":
        result = dml_plm(y, data["treatment"], data["controls"],
                         _learner(config, "outcome", "linear"),
                         _learner(config, "treatment", "linear"),
                         _plan(config, n), alpha=alpha)
    elif estimand == "ate":
        result = dml_irm_ate(y, data["treatment"], data["controls"],
                             _learner(config, "outcome", "linear"),
                             _learner(config, "propensity", "logistic"),
                             _plan(config, n), alpha=alpha)
    elif estimand == "atet":
        result = dml_atet(y, data["treatment"], data["controls"],
                          _learner(config, "outcome", "linear"),
                          _learner(config, "propensity", "logistic"),
                          _plan(config, n), alpha=alpha)
    elif estimand == "gate":
        groups = data["group"]
        labels = np.unique(groups)
        result = dml_gate(y, data["treatment"], data["controls"], groups,
                          _learner(config, "outcome", "linear"),
                          _learner(config, "propensity", "logistic"),
                          _plan(config, n), alpha=alpha)
    elif estimand == "pliv":
        result = dml_pliv(y, data["treatment"], data["instrument"],
                          data["controls"],
                          _learner(config, "outcome", "linear"),
                          _learner(config, "treatment", "linear"),
                          _learner(config, "instrument", "linear"),
                          _plan(config, n), alpha=alpha)
    elif estimand == "late":
        result = dml_late(y, data["treatment"], data["instrument"],
                          data["controls"],
                          _learner(config, "outcome", "linear"),
                          _learner(config, "takeup", "logistic"),
                          _learner(config, "propensity", "logistic"),
                          _plan(config, n), alpha=alpha)
    elif estimand == "did_panel":
        result = dml_did_panel(data["outcome_pre"], y, data["treatment"],
                               _controls(data, n),
                               _learner(config, "outcome", "linear"),
                               _learner(config, "propensity", "logistic"),
                               _plan(config, n), alpha=alpha)
    elif estimand == "did_rcs":
        result = dml_did_rcs(y, data["time"], data["treatment"],
                             _controls(data, n),
                             _learner(config, "outcome", "linear"),
                             _learner(config, "propensity", "logistic"),
                             _plan(config, n), alpha=alpha)
    elif estimand == "did_canonical":
        result = did_canonical(y, data["treatment"], data["time"],
                               alpha=alpha)
    elif estimand == "rct":
        W = data.get("controls")
        mode = config.get("mode", "CL" if W is None else "CRA")
        result = rct_estimators(y, data["treatment"], W, mode=mode,
                                alpha=alpha)
    elif estimand == "rdd":
        bandwidth = config.get("bandwidth")
        if bandwidth is None:
            raise ConfigError("rdd requires a 'bandwidth' key")
        Z = data.get("controls")
        result = rdd_sharp(y, data["running"],
                           cutoff=config.get("cutoff", 0.0),
                           bandwidth=bandwidth,
                           kernel=config.get("kernel", "triangular"),
                           Z=Z, alpha=alpha)
    elif estimand == "sensitivity":
        return _sensitivity_report(config, data, alpha)
    elif estimand == "weak_id":
        return _weak_id_report(config, data, alpha)
    elif estimand == "cate-pipeline":
        return _cate_pipeline_report(config, data, alpha)
    else:  # pragma: no cover - validate_config guards this
        raise ConfigError(f"unknown estimand {estimand!r}")

    report = {
        "estimand": estimand,
        "provenance": provenance(config),
        "warnings": sorted(k for k, v in result.diagnostics.items()
                           if v is True),
        **_result_payload(result, labels),
        **extra,
    }
    artifacts["estimates"] = _result_rows(result, labels)
    return report, artifacts


def _sensitivity_report(config, data, alpha):
    r2_y = config.get("r2_y")
    r2_d = config.get("r2_d")
    if r2_y is None or r2_d is None:
        raise ConfigError("sensitivity requires 'r2_y' and 'r2_d' keys")
    n = data["outcome"].size
    bound = ovb_from_data(data["outcome"], data["treatment"],
                          data["controls"],
                          _learner(config, "outcome", "linear"),
                          _learner(config, "treatment", "linear"),
                          _plan(config, n), r2_y=r2_y, r2_d=r2_d)
    report = {
        "estimand": "sensitivity",
        "provenance": provenance(config),
        "estimate": bound.estimate,
        "bias_bound": bound.bias_bound,
        "bound_interval": [bound.lower, bound.upper],
        "r2_y": bound.r2_y,
        "r2_d": bound.r2_d,
        "variance_ratio": bound.s,
        "n": n,
        "warnings": [],
    }
    artifacts = {"contour": [
        {"r2_y": a, "r2_d": b, "phi_bound": phi}
        for a, b, phi in bound.contour
    ]}
    return report, artifacts


def _weak_id_report(config, data, alpha):
    y, d, z = data["outcome"], data["treatment"], data["instrument"]
    X = data["controls"]
    n = y.size
    plan = _plan(config, n)
    resid = {}
    for name, target, role in (("y", y, "outcome"), ("d", d, "treatment"),
                               ("z", z, "instrument")):
        fit, _ = cross_fit_predict(_learner(config, role, "linear"),
                                   X, target, plan)
        resid[name] = target - fit
    grid = np.linspace(config.get("grid_lower", -2.0),
                       config.get("grid_upper", 2.0),
                       config.get("grid_points", 401))
    region = robust_region(resid["y"], resid["d"], resid["z"], grid,
                           alpha=alpha)
    stage = first_stage_diag(resid["d"], resid["z"])
    warnings = []
    if not stage["strong"]:
        warnings.append("weak_first_stage")
    if region.disconnected:
        warnings.append("disconnected_region")
    if region.intervals and (region.intervals[0].open_lower
                             or region.intervals[-1].open_upper):
        warnings.append("unbounded at grid edge")
    report = {
        "estimand": "weak_id",
        "provenance": provenance(config),
        "intervals": [
            {"lower": iv.lower, "upper": iv.upper,
             "open_lower": iv.open_lower, "open_upper": iv.open_upper}
            for iv in region.intervals
        ],
        "empty": region.empty,
        "critical_value": region.critical_value,
        "first_stage": stage,
        "n": n,
        "alpha": alpha,
        "warnings": warnings,
    }
    artifacts = {"region": [
        {"theta": float(t), "statistic": float(s), "accepted": bool(a)}
        for t, s, a in zip(region.grid, region.statistic, region.accepted)
    ]}
    return report, artifacts


def _cate_pipeline_report(config, data, alpha):
    y, d = data["outcome"], data["treatment"]
    Z = data["controls"]
    X_effect = data.get("effect_covariates", Z)
    n = y.size
    seed = config.seed
    plan = _plan(config, n)
    learner_y = _learner(config, "outcome", "linear")
    learner_prop = _learner(config, "propensity", "logistic")
    signals = dr_signal(y, d, Z, learner_y, learner_prop, plan,
                        trim=config.get("trim", 0.01))
    train, valid, test = three_way_split(n, derive_seed(seed, "split", 0))
    kind = config.get("meta_learner", "DR")
    plan_train = make_folds(train.size, config.get("folds", DEFAULT_FOLDS),
                            derive_seed(seed, "train-folds", 0))
    model = meta_learn(kind, y[train], d[train], Z[train], learner_y,
                       learner_prop, _learner(config, "effect", "tree"),
                       plan_train, X_effect=X_effect[train],
                       trim=config.get("trim", 0.01))
    tau_valid = model.predict(X_effect[valid])
    tau_test = model.predict(X_effect[test])
    s_test = signals.values[test]
    cal = calibration(tau_test, s_test, tau_valid,
                      K=config.get("bins", 5), alpha=alpha)
    curves = toc_qini(tau_test, s_test, tau_valid, alpha=alpha,
                      seed=derive_seed(seed, "uplift-band", 0))
    try:
        het = heterogeneity_blp_test(tau_test, s_test, alpha=alpha)
    except DmlkitError:
        het = {"slope": 0.0, "p_value": 1.0, "reject": False,
               "note": "constant predictions"}
    report = {
        "estimand": "cate-pipeline",
        "provenance": provenance(config),
        "meta_learner": kind,
        "ate": signals.ate,
        "trim_count": signals.trim_count,
        "calibration": {
            "cal1": cal.cal1,
            "cal2": cal.cal2,
            "counts": cal.counts,
            "dr_means": cal.dr_means,
            "model_means": cal.model_means,
        },
        "heterogeneity_test": {k: het[k] for k in ("slope", "p_value",
                                                   "reject") if k in het},
        "autoc": curves.autoc,
        "autoc_se": curves.autoc_se,
        "autoc_lower": curves.autoc_lower,
        "auqc": curves.auqc,
        "n": n,
        "split_sizes": [train.size, valid.size, test.size],
        "warnings": [],
    }
    artifacts = {"uplift": [
        {"q": float(curves.grid[i]),
         "toc": float(curves.toc[i]),
         "toc_lo": float(curves.toc_band[0][i]),
         "toc_hi": float(curves.toc_band[1][i]),
         "qini": float(curves.qini[i]),
         "qini_lo": float(curves.qini_band[0][i]),
         "qini_hi": float(curves.qini_band[1][i])}
        for i in range(curves.grid.size)
    ]}
    return report, artifacts


def run_estimate(config: RunConfig, data_path, out_dir) -> dict:
    report, artifacts = estimate_report(config, data_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    for name, rows in artifacts.items():
        write_table(rows, out / f"{name}.csv")
    return report


# ---------------------------------------------------------------------------
# Placebo refutation


def run_placebo(config: RunConfig, data_path, out_dir) -> dict:
    """Rerun the panel DiD with an earlier pre-period standing in for
    the post-period; a significant estimate flags a pre-trend."""
    if config.get("estimand") != "did_panel":
        raise ConfigError("placebo requires estimand = did_panel")
    validate_config(config)
    earlier = config.get("outcome_placebo_pre")
    if earlier is None:
        raise ConfigError(
            "placebo requires 'outcome_placebo_pre', an earlier pre-period "
            "outcome column")
    data = _load_columns(config, data_path, "did_panel")
    table = ingest_csv(data_path, [earlier])
    n = data["outcome"].size
    result = dml_did_panel(table[earlier], data["outcome_pre"],
                           data["treatment"], _controls(data, n),
                           _learner(config, "outcome", "linear"),
                           _learner(config, "propensity", "logistic"),
                           _plan(config, n),
                           alpha=config.get("alpha", DEFAULT_ALPHA))
    lo, hi = result.ci
    report = {
        "estimand": "did_panel",
        "flags": ["placebo"],
        "provenance": provenance(config),
        "pretrend_detected": not (lo <= 0.0 <= hi),
        "warnings": sorted(k for k, v in result.diagnostics.items()
                           if v is True),
        **_result_payload(result),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    write_table(_result_rows(result), out / "estimates.csv")
    return report


# ---------------------------------------------------------------------------
# Simulation


def _simulate_record(args):
    dgp_name, estimator, n, seed, rep = args
    return dgps.simulate_once(dgp_name, estimator, n, seed, rep)


def _summarize(records: list[dict]) -> dict:
    keys = [k for k in records[0] if k != "replication"]
    summary = {}
    for key in keys:
        values = np.array([r[key] for r in records], dtype=float)
        entry = {"mean": float(np.mean(values)),
                 "median": float(np.median(values))}
        if key == "error":
            entry["rmse"] = float(np.sqrt(np.mean(values**2)))
            entry["median_abs"] = float(np.median(np.abs(values)))
        summary[key] = entry
    return summary


def run_simulation(config: RunConfig, out_dir, workers: int | None = None) -> dict:
    name = config.raw.get("dgp")
    if name is None:
        raise ConfigError("simulate requires a 'dgp' key")
    dgp = dgps.get_dgp(name)
    seed = config.seed
    reps = config.get("replications", 100)
    if reps < 1:
        raise ConfigError("replications must be positive")
    n = config.get("n")
    estimator = config.raw.get("estimator")
    if workers is None:
        workers = config.get("workers", 1)
    tasks = [(name, estimator, n, seed, rep) for rep in range(reps)]
    if workers <= 1:
        records = [_simulate_record(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_simulate_record, tasks, chunksize=1))
    # Reduction is order-independent: sort by replication index.
    records.sort(key=lambda r: r["replication"])
    report = {
        "dgp": name,
        "estimator": estimator or dgp.default_estimator,
        "n": n or dgp.default_n,
        "replications": reps,
        "truth": dgp.truth,
        "summary": _summarize(records),
        "provenance": provenance(config),
        "warnings": [],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    write_table(records, out / "replications.csv")
    return report


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmlkit",
        description="Causal estimation, simulation, and refutation runs "
                    "driven by flat config files.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run a configured estimand on CSV data")
    est.add_argument("--config", required=True)
    est.add_argument("--data", required=True)
    est.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="run a registered simulation DGP")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--workers", type=int, default=None)

    pla = sub.add_parser("placebo", help="pre-trend placebo for panel DiD")
    pla.add_argument("--config", required=True)
    pla.add_argument("--data", required=True)
    pla.add_argument("--out", required=True)

    val = sub.add_parser("validate-config", help="check a config file")
    val.add_argument("--config", required=True)

    sub.add_parser("list-dgps", help="list registered simulation DGPs")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-dgps":
            for name in sorted(dgps.REGISTRY):
                print(f"{name}: {dgps.REGISTRY[name].description}")
            return 0
        config = load_config(args.config)
        if args.command == "validate-config":
            if "dgp" in config.raw:
                dgps.get_dgp(config.raw["dgp"])
                config.seed
            else:
                validate_config(config)
            print("config ok")
            return 0
        if args.command == "estimate":
            report = run_estimate(config, args.data, args.out)
        elif args.command == "simulate":
            report = run_simulation(config, args.out, workers=args.workers)
        else:
            report = run_placebo(config, args.data, args.out)
    except (ConfigError, UnknownDgp) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (DmlkitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 4
    for warning in report.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print(f"report written to {args.out}/report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
