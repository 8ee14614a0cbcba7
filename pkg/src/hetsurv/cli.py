"""Command-line front end: simulate, estimate, oracle, and replicate.

Reports are JSON, tables are CSV, and every file-producing run writes a
sibling ``<name>.manifest.json`` recording the command, the resolved
arguments, a digest of the computational configuration, and library
versions, so any output can be reproduced byte for byte.

Exit codes: 0 success, 1 error (bad input, IO, fit failure), 2 degenerate
target (the requested parameter is undefined on the data).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .data import DgpConfig, SurvivalDataset, example_config, load_csv, simulate
from .errors import DataError, DegenerateTargetError, FitError
from .estimators import EstimateReport, TargetSpec, estimate
from .nuisance.config import parse_learner_stack
from .oracle import (
    OracleResult,
    oracle_ate,
    oracle_chi,
    oracle_gamma,
    oracle_omega,
    oracle_psi,
    oracle_theta_d,
    oracle_theta_l,
)
from .replicate import preset_stack, run_replications, write_summary_csv
from .util import canonical_json, config_digest

__all__ = ["build_parser", "main"]

_TARGETS = ("theta", "psi", "zeta", "gamma", "chi", "omega")
_PROJECTION = ("gamma", "chi", "omega")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; 2 is reserved for
    degenerate targets here, so usage errors are remapped to 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_subset(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise DataError(f"cannot parse covariate subset {text!r}") from None


def _target_flags(parser, with_ate: bool = False) -> None:
    choices = _TARGETS + ("ate",) if with_ate else _TARGETS
    parser.add_argument("--target", choices=choices, default="psi")
    parser.add_argument(
        "--subset", default=None, help="1-based covariate indices, e.g. 1,2"
    )
    parser.add_argument(
        "--covariate", type=int, default=None, help="covariate index j for gamma/chi/omega"
    )
    parser.add_argument("--horizon", type=float, default=None)
    parser.add_argument("--estimand", choices=("survival", "rmst"), default="survival")


def _estimation_flags(parser) -> None:
    parser.add_argument("--folds", type=int, default=10)
    parser.add_argument("--inner-folds", type=int, default=5)
    parser.add_argument("--learners", default=None, help="learner stack JSON file")
    parser.add_argument("--epsilon", type=float, default=0.05)
    parser.add_argument("--fast-tau-d", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hetsurv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate")
    p_sim.add_argument("--dgp-config", default=None, help="DGP JSON (default: benchmark)")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate")
    p_est.add_argument("--data", default=None, help="dataset CSV path")
    p_est.add_argument("--dgp-config", default=None, help="simulate from this DGP JSON")
    p_est.add_argument("--n", type=int, default=1000, help="simulated sample size")
    p_est.add_argument("--seed", type=int, default=0)
    _target_flags(p_est)
    _estimation_flags(p_est)
    p_est.add_argument("--out", default=None, help="report JSON path")
    p_est.add_argument("--dump-eif", default=None, help="per-subject EIF CSV path")
    p_est.set_defaults(func=_cmd_estimate)

    p_orc = sub.add_parser("oracle")
    p_orc.add_argument("--dgp-config", default=None, help="DGP JSON (default: benchmark)")
    _target_flags(p_orc, with_ate=True)
    p_orc.add_argument("--draws", type=int, default=10**6)
    p_orc.add_argument("--inner-draws", type=int, default=2000)
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.add_argument("--out", default=None, help="result JSON path")
    p_orc.set_defaults(func=_cmd_oracle)

    p_rep = sub.add_parser("replicate")
    p_rep.add_argument("--dgp-config", default=None, help="DGP JSON (default: benchmark)")
    _target_flags(p_rep)
    _estimation_flags(p_rep)
    p_rep.add_argument("--n", type=int, default=1000)
    p_rep.add_argument("--reps", type=int, default=200)
    p_rep.add_argument("--preset", default="correct-kernel-CF")
    p_rep.add_argument("--seed", type=int, default=0)
    p_rep.add_argument("--workers", type=int, default=1)
    p_rep.add_argument(
        "--oracle-value", type=float, default=None, help="skip oracle computation"
    )
    p_rep.add_argument("--oracle-draws", type=int, default=10**5)
    p_rep.add_argument("--out", required=True, help="summary CSV path")
    p_rep.set_defaults(func=_cmd_replicate)
    return parser


def _load_config(args) -> DgpConfig:
    if getattr(args, "dgp_config", None) is not None:
        return DgpConfig.from_json(args.dgp_config)
    return example_config()


def _resolve_kind(args) -> tuple[str, tuple[int, ...]]:
    subset = _parse_subset(args.subset) if args.subset else ()
    if args.target in _PROJECTION:
        if args.covariate is not None:
            if subset and subset != (args.covariate,):
                raise DataError("--covariate and --subset disagree")
            subset = (args.covariate,)
        if len(subset) != 1:
            raise DataError(f"target {args.target} needs --covariate j")
        return f"{args.target}_j", subset
    if args.covariate is not None and not subset:
        subset = (args.covariate,)
    if args.target == "theta":
        return ("theta_l", subset) if subset else ("theta_d", ())
    if args.target in ("psi", "zeta"):
        if not subset:
            raise DataError(f"target {args.target} needs --subset")
        return f"{args.target}_l", subset
    return args.target, subset  # "ate" for the oracle command


def _label(kind: str, subset: tuple[int, ...]) -> str:
    if kind in ("ate", "theta_d"):
        return kind
    family = kind.split("_")[0]
    return f"{family}_{'-'.join(str(j) for j in subset)}"


def _versions() -> dict:
    return {
        "python": platform.python_version(),
        "hetsurv": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def _write_manifest(out_path: str, command: str, payload: dict, seed: int) -> None:
    manifest = {
        "command": command,
        "arguments": payload,
        "config_digest": config_digest(payload),
        "seed": seed,
        "versions": _versions(),
    }
    path = Path(out_path).with_suffix(".manifest.json")
    path.write_text(canonical_json(manifest) + "\n", encoding="utf-8")


def _build_spec(args, kind: str, subset: tuple[int, ...], horizon: float) -> TargetSpec:
    if args.learners is not None:
        try:
            payload = json.loads(Path(args.learners).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read learner configuration {args.learners}: {exc}") from exc
        learners = parse_learner_stack(payload)
    else:
        learners = None
    return TargetSpec(
        kind=kind,
        horizon=horizon,
        subset=subset,
        estimand=args.estimand,
        folds=args.folds,
        inner_folds=args.inner_folds,
        seed=args.seed,
        learners=learners,
        epsilon=args.epsilon,
        fast_tau_d=args.fast_tau_d,
    )


def _horizon_for(args, config: DgpConfig | None) -> float:
    if args.horizon is not None:
        return args.horizon
    if config is not None:
        return config.horizon
    raise DataError("--horizon is required with --data")


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    dataset = simulate(config, args.n, args.seed)
    _write_dataset_csv(args.out, dataset)
    _write_manifest(
        args.out,
        "simulate",
        {"dgp": config.to_dict(), "n": args.n, "seed": args.seed},
        args.seed,
    )
    print(f"wrote {dataset.n} records to {args.out}")
    return 0


def _write_dataset_csv(path: str, dataset: SurvivalDataset) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "event", "trt", *dataset.covariate_names])
        for i in range(dataset.n):
            writer.writerow(
                [
                    repr(float(dataset.time[i])),
                    int(dataset.event[i]),
                    int(dataset.treatment[i]),
                    *(repr(float(v)) for v in dataset.covariates[i]),
                ]
            )


def _summary_line(label: str, report: EstimateReport) -> str:
    parts = [f"target={label}", f"point={report.point:.3f}", f"se={report.se:.3f}"]
    if report.p_value is not None:
        parts.append(f"p={report.p_value:.1e}")
    return " ".join(parts)


def _cmd_estimate(args) -> int:
    if (args.data is None) == (args.dgp_config is None):
        raise DataError("exactly one of --data and --dgp-config is required")
    kind, subset = _resolve_kind(args)
    if args.data is not None:
        dataset = load_csv(args.data)
        config = None
    else:
        config = DgpConfig.from_json(args.dgp_config)
        dataset = simulate(config, args.n, args.seed)
    spec = _build_spec(args, kind, subset, _horizon_for(args, config))
    report = estimate(dataset, spec)
    print(_summary_line(_label(kind, subset), report))
    if args.out is not None:
        Path(args.out).write_bytes(report.to_json() + b"\n")
        _write_manifest(
            args.out,
            "estimate",
            {
                "data": args.data,
                "dgp": None if config is None else config.to_dict(),
                "n": None if config is None else args.n,
                "target": spec.kind,
                "subset": list(spec.subset),
                "horizon": spec.horizon,
                "estimand": spec.estimand,
                "folds": spec.folds,
                "inner_folds": spec.inner_folds,
                "epsilon": spec.epsilon,
                "fast_tau_d": spec.fast_tau_d,
                "learners": spec.learners.to_dict(),
                "seed": args.seed,
            },
            args.seed,
        )
    if args.dump_eif is not None:
        _write_eif_csv(args.dump_eif, report)
    return 0


def _write_eif_csv(path: str, report: EstimateReport) -> None:
    table = report.phi_table
    columns = list(table)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for i in range(len(table["index"])):
            row = []
            for name in columns:
                value = table[name][i]
                if name in ("index", "fold", "truncated"):
                    row.append(int(value))
                else:
                    row.append(repr(float(value)))
            writer.writerow(row)


def _cmd_oracle(args) -> int:
    config = _load_config(args)
    kind, subset = _resolve_kind(args)
    horizon = _horizon_for(args, config)
    common = dict(t=horizon, estimand=args.estimand, n_draws=args.draws, seed=args.seed)
    if kind == "ate":
        result = oracle_ate(config, **common)
    elif kind == "theta_d":
        result = oracle_theta_d(config, **common)
    elif kind == "theta_l":
        result = oracle_theta_l(config, subset, inner_draws=args.inner_draws, **common)
    elif kind == "psi_l":
        result = oracle_psi(config, subset, inner_draws=args.inner_draws, **common)
    elif kind == "zeta_l":
        result = _oracle_zeta(config, subset, args)
    elif kind == "gamma_j":
        result = oracle_gamma(config, subset[0], **common)
    elif kind == "chi_j":
        result = oracle_chi(config, subset[0], **common)
    else:
        result = oracle_omega(config, subset[0], **common)
    label = _label(kind, subset)
    print(f"target={label} value={result.value:.4f} mc_se={result.mc_se:.1e}")
    if args.out is not None:
        payload = {"target": label, **result.to_dict()}
        Path(args.out).write_text(canonical_json(payload) + "\n", encoding="utf-8")
        _write_manifest(
            args.out,
            "oracle",
            {
                "dgp": config.to_dict(),
                "target": label,
                "horizon": horizon,
                "estimand": args.estimand,
                "draws": args.draws,
                "seed": args.seed,
            },
            args.seed,
        )
    return 0


def _oracle_zeta(config: DgpConfig, subset: tuple[int, ...], args) -> OracleResult:
    """logit(Psi_l) with a delta-method mc_se."""
    base = oracle_psi(
        config,
        subset,
        t=args.horizon if args.horizon is not None else config.horizon,
        estimand=args.estimand,
        n_draws=args.draws,
        inner_draws=args.inner_draws,
        seed=args.seed,
    )
    if not 0.0 < base.value < 1.0:
        raise DegenerateTargetError(
            f"variance share {base.value:.6g} is outside (0, 1); its logit is undefined"
        )
    return OracleResult(
        value=math.log(base.value / (1.0 - base.value)),
        mc_se=base.mc_se / (base.value * (1.0 - base.value)),
        n_draws=base.n_draws,
        seed=base.seed,
    )


def _cmd_replicate(args) -> int:
    config = _load_config(args)
    kind, subset = _resolve_kind(args)
    horizon = _horizon_for(args, config)
    spec = _build_spec(args, kind, subset, horizon)
    if args.learners is None:
        stack, cross_fitted = preset_stack(args.preset)
        spec = replace(spec, learners=stack, folds=args.folds if cross_fitted else 1)
        method = args.preset
    else:
        method = "custom"
    oracle_value = args.oracle_value
    if oracle_value is None:
        oracle_value = _oracle_value_for(config, kind, subset, spec, args)
    summary = run_replications(
        config,
        spec,
        n=args.n,
        reps=args.reps,
        oracle_value=oracle_value,
        method=method,
        seed=args.seed,
        workers=args.workers,
    )
    write_summary_csv(args.out, [summary])
    _write_manifest(
        args.out,
        "replicate",
        {
            "dgp": config.to_dict(),
            "target": spec.kind,
            "subset": list(spec.subset),
            "horizon": spec.horizon,
            "estimand": spec.estimand,
            "method": summary.method,
            "folds": spec.folds,
            "inner_folds": spec.inner_folds,
            "n": args.n,
            "reps": args.reps,
            "oracle_value": oracle_value,
            "seed": args.seed,
        },
        args.seed,
    )
    row = summary.table_row()
    cells = [f"n={row['n']}", f"method={row['method']}"]
    for key in ("bias", "coverage", "sd", "mean_se", "mse"):
        cells.append(f"{key}={row[key]:.4f}" if row[key] is not None else f"{key}=NA")
    if summary.failures:
        cells.append(f"failures={len(summary.failures)}")
    print(" ".join(cells))
    return 0


def _oracle_value_for(
    config: DgpConfig, kind: str, subset: tuple[int, ...], spec: TargetSpec, args
) -> float:
    common = dict(
        t=spec.horizon, estimand=spec.estimand, n_draws=args.oracle_draws, seed=args.seed
    )
    if kind == "theta_d":
        return oracle_theta_d(config, **common).value
    if kind == "theta_l":
        return oracle_theta_l(config, subset, **common).value
    if kind in ("psi_l", "zeta_l"):
        psi = oracle_psi(config, subset, **common).value
        if kind == "psi_l":
            return psi
        return math.log(psi / (1.0 - psi))
    if kind == "gamma_j":
        return oracle_gamma(config, subset[0], **common).value
    if kind == "chi_j":
        return oracle_chi(config, subset[0], **common).value
    return oracle_omega(config, subset[0], **common).value


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateTargetError as exc:
        print(f"DegenerateTargetError: {exc}", file=sys.stderr)
        return 2
    except (DataError, FitError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
