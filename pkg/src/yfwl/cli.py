"""Command-line front end: ``yfwl fit | verify | bench``.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 a check failed.

CSV input needs a header row, comma separators, ``.`` decimals and no blank
cells. Row order is taken as time order for HAC.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .covariance import (
    ClusterMap,
    DofMode,
    Estimator,
    HacSpec,
    full_covariance,
    partial_cov,
)
from .errors import InputError, NumericalError, ParseError
from .linalg import partitioned_gram_inverse
from .regression import Intercept, PartitionedDesign, full_fit, fwl_fit
from .verify import (
    EquivalenceReport,
    check_lovell_identities,
    compare,
    instance_rng,
    random_instance,
    resolve_tolerance,
    run_suite,
)

log = logging.getLogger("yfwl")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
SIG_DIGITS = 12
BENCH_TARGET_RATIO = 0.8


@dataclass(frozen=True)
class RunConfig:
    mode: str
    input_path: Path | None = None
    outcome: str = "y"
    focus_columns: tuple[str, ...] = ()
    control_columns: tuple[str, ...] = ()
    intercept: Intercept = Intercept.IN_CONTROLS
    estimator: Estimator = Estimator.CLASSICAL
    hac_bandwidth: int | None = None
    cluster_column: str | None = None
    cluster_dof: DofMode = DofMode.CLUSTER_GN
    hc4_delta: str = "max"
    check: bool = False
    seed: int = 42
    output_format: str = "json"
    instances: int = 100
    n_obs: int = 200
    rho: float | None = None
    tolerance: float | None = None
    bench_n: int = 2000
    bench_k1: int = 500
    bench_k2: int = 500
    repeats: int = 3

    def __post_init__(self):
        overlap = set(self.focus_columns) & set(self.control_columns)
        if overlap:
            raise InputError(f"columns in both --focus and --controls: {sorted(overlap)}")
        if self.estimator is Estimator.CLUSTER and self.mode == "fit" and not self.cluster_column:
            raise InputError("--estimator cluster needs --cluster-col")
        if self.cluster_column and self.estimator is not Estimator.CLUSTER:
            raise InputError("--cluster-col only applies to --estimator cluster")
        if self.hac_bandwidth is not None and self.estimator is not Estimator.HAC:
            raise InputError("--hac-bandwidth only applies to --estimator hac")
        if self.cluster_column in self.focus_columns + self.control_columns:
            raise InputError("the cluster column cannot also be a regressor")


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------


def read_columns(path: Path, numeric: list[str], labels: list[str] = ()) -> tuple[dict, int]:
    """Read the named columns of a CSV file.

    Numeric columns become float arrays; ``labels`` columns stay strings.
    Returns ``(columns, n_rows)``.
    """
    if path.is_dir():
        raise InputError(f"{path} is a directory")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        index = {name: j for j, name in enumerate(header)}
        missing = [c for c in [*numeric, *labels] if c not in index]
        if missing:
            raise ParseError(f"{path}: column(s) not found: {', '.join(missing)}")
        values: dict[str, list] = {c: [] for c in [*numeric, *labels]}
        n_rows = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            for name in values:
                cell = row[index[name]].strip()
                if cell == "":
                    raise ParseError(f"{path}:{line_no}: blank value in column {name!r}")
                if name in labels:
                    values[name].append(cell)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}:{line_no}: column {name!r} value {cell!r} is not a number"
                    ) from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}:{line_no}: column {name!r} value {cell!r} is not finite")
                values[name].append(v)
            n_rows += 1
    out = {c: (np.array(v) if c in numeric else v) for c, v in values.items()}
    return out, n_rows


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _round(x) -> float:
    return float(f"{float(x):.{SIG_DIGITS}g}")


def _rounded(obj):
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _rounded(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return _round(obj)
    return obj


def _dump(payload: dict) -> str:
    return json.dumps(_rounded(payload), indent=2, ensure_ascii=False)


def _table(payload: dict) -> str:
    lines = [
        f"estimator: {payload['estimator']}   N={payload['n_obs']}  k1={payload['k1']}  k2={payload['k2']}",
        f"{'term':<16}{'coef':>18}{'std.err':>18}",
    ]
    for name, coef in payload["coefficients"].items():
        se = payload["standard_errors"][name]
        lines.append(f"{name:<16}{coef:>18.10g}{se:>18.10g}")
    check = payload.get("check")
    if check is not None:
        lines.append(f"check: {'PASS' if check['passed'] else 'FAIL'}")
        for r in check["reports"]:
            lines.append(
                f"  {r['identity_name']:<28} max_abs={r['max_abs_err']:.3g} tol={r['tolerance_used']:.3g}"
                f" {'ok' if r['passed'] else 'FAIL'}"
            )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _estimator_params(config: RunConfig, n_obs: int, clusters: ClusterMap | None) -> dict:
    params: dict = {"hc4_delta": config.hc4_delta}
    if config.estimator is Estimator.HAC:
        lag = config.hac_bandwidth
        params["hac"] = HacSpec.bartlett(HacSpec.default_bandwidth(n_obs) if lag is None else lag)
    if config.estimator is Estimator.CLUSTER:
        params["clusters"] = clusters
        params["dof_mode"] = config.cluster_dof
    return params


def _estimator_label(config: RunConfig, params: dict) -> str:
    if config.estimator is Estimator.HAC:
        return f"hac(L={params['hac'].bandwidth})"
    if config.estimator is Estimator.CLUSTER:
        return f"cluster(dof={config.cluster_dof.value})"
    if config.estimator is Estimator.HC4 and config.hc4_delta != "max":
        return f"hc4(delta={config.hc4_delta})"
    return config.estimator.value


def cmd_fit(config: RunConfig) -> tuple[int, dict]:
    """Four-step partial-regression fit of the focus columns.

    The reported covariance uses the full-regression degrees of freedom, so
    it is the covariance of the focus coefficients in the multiple
    regression. Returns ``(exit_status, payload)``.
    """
    if not config.focus_columns:
        raise InputError("--focus needs at least one column")
    outcome = config.outcome
    if outcome in config.focus_columns + config.control_columns:
        raise InputError(f"outcome column {outcome!r} is also listed as a regressor")
    labels = [config.cluster_column] if config.cluster_column else []
    needed = [outcome, *config.focus_columns, *config.control_columns]
    cols, n_rows = read_columns(config.input_path, needed, labels)
    if n_rows == 0:
        raise ParseError(f"{config.input_path}: no data rows")
    focus = np.column_stack([cols[c] for c in config.focus_columns])
    controls = (
        np.column_stack([cols[c] for c in config.control_columns])
        if config.control_columns
        else None
    )
    design = PartitionedDesign.build(
        cols[outcome],
        focus,
        controls,
        intercept=config.intercept,
        focus_names=config.focus_columns,
        control_names=config.control_columns,
    )
    clusters = ClusterMap(cols[config.cluster_column]) if config.cluster_column else None
    params = _estimator_params(config, design.n_obs, clusters)

    partial = fwl_fit(design)
    blocks = partitioned_gram_inverse(design) if config.estimator.needs_leverage else None
    cov = partial_cov(partial, design, config.estimator, blocks, match_full_dof=True, **params)
    names = design.focus_names or tuple(f"x{j}" for j in range(design.k1))
    payload = {
        "coefficients": dict(zip(names, partial.b1_tilde.tolist())),
        "standard_errors": dict(zip(names, cov.std_errors.tolist())),
        "covariance": cov.matrix.tolist(),
        "estimator": _estimator_label(config, params),
        "n_obs": design.n_obs,
        "k1": design.k1,
        "k2": design.k2,
        "check": None,
    }
    status = EXIT_OK
    if config.check:
        reports = _fit_checks(design, partial.b1_tilde, cov.matrix, config, params)
        passed = all(r.passed for r in reports)
        payload["check"] = {"passed": passed, "reports": [r.to_dict() for r in reports]}
        if not passed:
            status = EXIT_CHECK
    return status, payload


def _fit_checks(design, coef, cov, config: RunConfig, params: dict) -> list[EquivalenceReport]:
    tol, descriptor = resolve_tolerance(design, config.tolerance, f"input={config.input_path.name}")
    coef_report, resid_report = check_lovell_identities(design, tol, descriptor)
    full = full_fit(design)
    full_cov = full_covariance(full, config.estimator, **params).block(design.focus_slice)
    return [
        coef_report,
        resid_report,
        compare("reported_coefficients", coef, full.coefficients[design.focus_slice], tol, descriptor),
        compare(f"covariance[{_estimator_label(config, params)}]", cov, full_cov, tol, descriptor),
    ]


def cmd_verify(config: RunConfig, out=None) -> int:
    """Stream one JSON report per identity per instance; 0 iff every report passes."""
    out = out or sys.stdout
    total = failed = 0
    for report in run_suite(
        config.seed,
        config.instances,
        n_obs=config.n_obs,
        rho=config.rho,
        tolerance=config.tolerance,
    ):
        total += 1
        failed += not report.passed
        out.write(report.to_json() + "\n")
    log.info("verify: %d reports, %d failed", total, failed)
    return EXIT_OK if failed == 0 else EXIT_CHECK


def _time_min(fn, repeats: int):
    best, result = np.inf, None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def cmd_bench(config: RunConfig) -> tuple[int, dict]:
    """Time the direct ``k x k`` path against the partitioned path.

    Both paths fit the same synthetic design and compute the chosen
    estimator for the focus coefficients. The coefficient discrepancy is a
    hard check; the time ratio is informational.
    """
    rng = instance_rng(config.seed, 0)
    inst = random_instance(
        rng, config.bench_n, config.bench_k1, config.bench_k2, rho=0.5, errors="hetero"
    )
    design = inst.design
    params = _estimator_params(config, design.n_obs, inst.clusters)
    if config.estimator is Estimator.CLUSTER:
        params["clusters"] = inst.clusters

    def direct():
        fit = full_fit(design)
        cov = full_covariance(fit, config.estimator, **params)
        return fit.coefficients[design.focus_slice], cov.block(design.focus_slice)

    def partitioned():
        partial = fwl_fit(design)
        blocks = partitioned_gram_inverse(design) if config.estimator.needs_leverage else None
        cov = partial_cov(partial, design, config.estimator, blocks, match_full_dof=True, **params)
        return partial.b1_tilde, cov.matrix

    _kernels.warmup()
    t_full, (b_full, v_full) = _time_min(direct, config.repeats)
    t_part, (b_part, v_part) = _time_min(partitioned, config.repeats)
    coef_err = float(np.max(np.abs(b_full - b_part)))
    coef_tol = 1e-8 * (1.0 + float(np.max(np.abs(b_full))))
    cov_err = float(np.max(np.abs(v_full - v_part)) / np.max(np.abs(v_full)))
    ratio = t_part / t_full
    if ratio > BENCH_TARGET_RATIO:
        log.warning("partitioned/direct time ratio %.3f exceeds %.2f", ratio, BENCH_TARGET_RATIO)
    payload = {
        "n_obs": design.n_obs,
        "k1": design.k1,
        "k2": design.k2,
        "estimator": _estimator_label(config, params),
        "kernel_backend": _kernels.BACKEND,
        "repeats": config.repeats,
        "time_direct_s": t_full,
        "time_partitioned_s": t_part,
        "ratio": ratio,
        "max_coef_discrepancy": coef_err,
        "max_cov_rel_discrepancy": cov_err,
        "coef_check_passed": coef_err <= coef_tol,
    }
    return (EXIT_OK if coef_err <= coef_tol else EXIT_CHECK), payload


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _names(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--estimator", default="classical", choices=[e.value for e in Estimator])
    common.add_argument("--hac-bandwidth", type=int, default=None, metavar="L")
    common.add_argument("--cluster-col", default=None, metavar="NAME")
    common.add_argument("--cluster-dof", default="gn", choices=["none", "g", "gn"])
    common.add_argument("--hc4-delta", default="max", choices=["max", "min"])
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--format", default="json", choices=["json", "table"])
    common.add_argument("--tolerance", type=float, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="yfwl", description="Partial-regression fits with certified covariance estimates."
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    fit = sub.add_parser("fit", parents=[common], help="fit focus coefficients from a CSV file")
    fit.add_argument("--input", required=True, type=Path)
    fit.add_argument("--outcome", "-y", default="y", help="outcome column (default: y)")
    fit.add_argument("--focus", required=True, type=_names, help="comma-separated focus columns")
    fit.add_argument("--controls", default=(), type=_names, help="comma-separated control columns")
    fit.add_argument("--intercept", default="controls", choices=["controls", "focus", "none"])
    fit.add_argument("--check", action="store_true", help="verify against the full regression")

    ver = sub.add_parser("verify", parents=[common], help="run the identity suite on random designs")
    ver.add_argument("--instances", type=int, default=100)
    ver.add_argument("--n-obs", type=int, default=200)
    ver.add_argument("--rho", type=float, default=None, help="fixed inter-block correlation")

    bench = sub.add_parser("bench", parents=[common], help="time direct vs partitioned paths")
    bench.add_argument("--n", type=int, default=2000)
    bench.add_argument("--k1", type=int, default=500)
    bench.add_argument("--k2", type=int, default=500)
    bench.add_argument("--repeats", type=int, default=3)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    extra = {}
    if args.mode == "fit":
        extra = dict(
            input_path=args.input,
            outcome=args.outcome,
            focus_columns=args.focus,
            control_columns=args.controls,
            intercept=Intercept(args.intercept),
            check=args.check,
        )
    elif args.mode == "verify":
        extra = dict(instances=args.instances, n_obs=args.n_obs, rho=args.rho)
    else:
        extra = dict(bench_n=args.n, bench_k1=args.k1, bench_k2=args.k2, repeats=args.repeats)
    return RunConfig(
        mode=args.mode,
        estimator=Estimator(args.estimator),
        hac_bandwidth=args.hac_bandwidth,
        cluster_column=args.cluster_col,
        cluster_dof=DofMode(args.cluster_dof),
        hc4_delta=args.hc4_delta,
        seed=args.seed,
        output_format=args.format,
        tolerance=args.tolerance,
        **extra,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = config_from_args(args)
        if config.mode == "verify":
            return cmd_verify(config)
        if config.mode == "fit":
            status, payload = cmd_fit(config)
        else:
            status, payload = cmd_bench(config)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if config.output_format == "table" and config.mode == "fit":
        print(_table(_rounded(payload)))
    else:
        print(_dump(payload))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
