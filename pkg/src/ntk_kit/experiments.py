"""Config-driven experiment runners behind the CLI.

Every runner takes an :class:`~ntk_kit.config.ExperimentConfig`, writes
data-only CSV files plus a ``report.json`` into the output directory, and
returns the report object.  CSV bytes are a pure function of config and seed;
wall-clock and timestamps live only in the report header.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version as _pkg_version
from pathlib import Path
from typing import Optional

import numpy as np

from .backend import active_backend
from .classify import LabeledDataset, one_nn_predict, smoother_scores
from .config import (
    CompareParams,
    DynamicsParams,
    ExperimentConfig,
    Fig2Params,
    PolefitParams,
    TaxonomyParams,
)
from .depth import (
    estimate_pole_order,
    normalized_trace,
    piecewise_linear_iterate,
    piecewise_linear_limit,
    psi_infinity,
)
from .dual import KernelCase, classify_taxonomy
from .errors import ConfigError, InvalidRegime
from .sphere import bayes_oracle, point_to_angles, sample_mixture, stream

try:
    TOOL_VERSION = _pkg_version("ntk-kit")
except PackageNotFoundError:
    TOOL_VERSION = "0+unknown"


@dataclass
class ExperimentReport:
    header: dict
    config: dict
    metrics: dict
    files: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "config": self.config,
            "metrics": self.metrics,
            "files": list(self.files),
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(_pyify(self.to_dict()), indent=2, sort_keys=True) + "\n"
        )


def _pyify(obj):
    """JSON-safe copy: numpy scalars/arrays to plain Python, non-finite to str."""
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def _fmt(v: float) -> str:
    """Shortest round-trip decimal; fixed formatting keeps CSVs byte-stable."""
    return f"{float(v):.17g}"


def _out_path(config: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir if out_dir is not None else (config.out_dir or "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _new_header(config: ExperimentConfig) -> dict:
    return {
        "tool": "ntk-kit",
        "version": TOOL_VERSION,
        "command": config.command,
        "backend": active_backend(),
        "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# taxonomy
# ---------------------------------------------------------------------------


def run_taxonomy(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Case/phase/pole table over the configured activation presets."""
    params: TaxonomyParams = config.params
    t0 = time.perf_counter()
    header = _new_header(config)
    out = _out_path(config, out_dir)

    rows = []
    table = []
    for ref in params.activations:
        dual = ref.build()
        base = {
            "activation": ref.label(),
            "a0": dual.a0,
            "a1": dual.a1,
            "bprime": dual.bprime,
        }
        try:
            v = classify_taxonomy(dual, tol=params.tol)
            base.update(
                case=v.case.value,
                phase=v.phase.value if v.phase is not None else "",
                pole_order_z=v.pole_order_z,
                pole_order_dist=v.pole_order_dist,
                optimal_for_dim=v.optimal_for_dim,
            )
        except InvalidRegime as exc:
            # e.g. the identity dual: slope 1 at both ends, no pole to order
            base.update(
                case="undefined",
                phase="",
                pole_order_z=None,
                pole_order_dist=None,
                optimal_for_dim=None,
                note=str(exc),
            )
        table.append(base)
        rows.append(
            [
                base["activation"],
                _fmt(base["a0"]),
                _fmt(base["a1"]),
                _fmt(base["bprime"]),
                base["case"],
                base["phase"],
                "" if base["pole_order_z"] is None else _fmt(base["pole_order_z"]),
                "" if base["pole_order_dist"] is None else _fmt(base["pole_order_dist"]),
                "" if base["optimal_for_dim"] is None else str(base["optimal_for_dim"]),
            ]
        )

    csv_path = out / "taxonomy.csv"
    _write_csv(
        csv_path,
        [
            "activation",
            "a0",
            "a1",
            "bprime",
            "case",
            "phase",
            "pole_order_z",
            "pole_order_dist",
            "optimal_for_dim",
        ],
        rows,
    )
    header["wall_seconds"] = round(time.perf_counter() - t0, 6)
    report = ExperimentReport(
        header=header,
        config=config.echo(),
        metrics={"table": table},
        files=(str(csv_path), str(out / "report.json")),
    )
    report.save(out / "report.json")
    return report


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def _require_singular_normalization(ref, dual) -> None:
    if dual.a1 <= 1e-8:
        raise ConfigError(
            f"{ref.label()} has no linear coefficient; normalized depth traces "
            "are undefined"
        )
    if dual.a0 > 1e-8:
        raise ConfigError(
            f"{ref.label()} has a0 = {dual.a0:.3g} > 0; its normalized trace "
            "diverges with depth"
        )


def run_dynamics(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Depth traces of the iterate and both normalized kernels over a z grid."""
    params: DynamicsParams = config.params
    t0 = time.perf_counter()
    header = _new_header(config)
    out = _out_path(config, out_dir)

    dual = params.activation.build()
    _require_singular_normalization(params.activation, dual)

    max_depth = params.depths[-1]
    rows = []
    per_z = []
    for z in params.z_grid:
        tr = normalized_trace(dual, z, max_depth)
        for L in params.depths:
            rows.append(
                [
                    _fmt(z),
                    str(L),
                    _fmt(tr.iterates[L]),
                    _fmt(tr.normalized_nngp[L]),
                    _fmt(tr.normalized_ntk[L]),
                ]
            )
        gap = (
            abs(tr.normalized_ntk[params.depths[-1]] - tr.normalized_ntk[params.depths[-2]])
            if len(params.depths) >= 2
            else float("nan")
        )
        per_z.append(
            {
                "z": z,
                "final_iterate": float(tr.iterates[max_depth]),
                "final_N": float(tr.normalized_nngp[max_depth]),
                "final_P": float(tr.normalized_ntk[max_depth]),
                "cauchy_gap_last_two_depths": float(gap),
                "N_P_gap": float(
                    abs(tr.normalized_nngp[max_depth] - tr.normalized_ntk[max_depth])
                ),
            }
        )

    csv_path = out / "dynamics.csv"
    _write_csv(csv_path, ["z", "L", "v", "N", "P"], rows)
    header["wall_seconds"] = round(time.perf_counter() - t0, 6)
    report = ExperimentReport(
        header=header,
        config=config.echo(),
        metrics={"activation": params.activation.label(), "per_z": per_z},
        files=(str(csv_path), str(out / "report.json")),
    )
    report.save(out / "report.json")
    return report


# ---------------------------------------------------------------------------
# polefit
# ---------------------------------------------------------------------------


def run_polefit(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Pole order of the depth-infinity normalized kernel vs its prediction."""
    params: PolefitParams = config.params
    t0 = time.perf_counter()
    header = _new_header(config)
    out = _out_path(config, out_dir)

    dual = params.activation.build()
    try:
        verdict = classify_taxonomy(dual)
    except InvalidRegime as exc:
        raise ConfigError(f"[polefit] {params.activation.label()}: {exc}") from None
    if verdict.case is not KernelCase.SINGULAR_KERNEL:
        raise ConfigError(
            f"[polefit] {params.activation.label()} is {verdict.case.value}; "
            "pole fitting needs a singular-kernel dual"
        )
    predicted = verdict.pole_order_z

    fit = estimate_pole_order(
        lambda zz: psi_infinity(dual, zz, rtol=params.rtol, max_depth=params.max_depth),
        base=params.base,
        eps_grid=params.eps_grid,
    )

    csv_path = out / "polefit.csv"
    _write_csv(
        csv_path,
        ["eps", "ratio_order"],
        [[_fmt(e), _fmt(r)] for e, r in zip(fit.eps_grid, fit.raw_orders)],
    )
    header["wall_seconds"] = round(time.perf_counter() - t0, 6)
    report = ExperimentReport(
        header=header,
        config=config.echo(),
        metrics={
            "activation": params.activation.label(),
            "fitted_order": fit.order_hat,
            "predicted_order": predicted,
            "relative_gap": abs(fit.order_hat - predicted) / predicted,
            "fit_base": fit.base,
            "max_residual": max(fit.residuals),
        },
        files=(str(csv_path), str(out / "report.json")),
    )
    report.save(out / "report.json")
    return report


# ---------------------------------------------------------------------------
# fig2: piecewise-linear map
# ---------------------------------------------------------------------------


def run_fig2(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Normalized limit of the two-slope map against its power-law curve."""
    params: Fig2Params = config.params
    t0 = time.perf_counter()
    header = _new_header(config)
    out = _out_path(config, out_dir)

    a, b = params.a, params.b
    exact_order = -np.log(a) / np.log(b)
    zs = np.linspace(0.0, params.z_max, params.z_count)
    lim = piecewise_linear_limit(a, b, zs)
    # reference power law pinned to the limit at the last grid point
    scale = lim[-1] * (1.0 - zs[-1]) ** exact_order
    theory = scale * (1.0 - zs) ** (-exact_order)

    fit = estimate_pole_order(
        lambda zz: piecewise_linear_limit(a, b, zz),
        base=params.resolved_fit_base,
        eps_grid=params.eps_grid,
    )

    # finite-depth consistency: once the orbit has entered the contraction
    # region the normalized iterate agrees with the limit up to the roundoff
    # the expansive steps amplified, so compare relatively
    probe = 1.0 - np.asarray(params.eps_grid, dtype=np.float64)
    it = piecewise_linear_iterate(a, b, probe, params.check_depth) * a ** (
        -params.check_depth
    )
    ref = piecewise_linear_limit(a, b, probe)
    iterate_gap = float(np.max(np.abs(it - ref) / ref))

    csv_path = out / "fig2.csv"
    _write_csv(
        csv_path,
        ["z", "normalized_iterate", "theory_curve_scaled"],
        [[_fmt(z), _fmt(v), _fmt(tv)] for z, v, tv in zip(zs, lim, theory)],
    )
    header["wall_seconds"] = round(time.perf_counter() - t0, 6)
    report = ExperimentReport(
        header=header,
        config=config.echo(),
        metrics={
            "a": a,
            "b": b,
            "corner": (b - 1.0) / (b - a),
            "exact_order": float(exact_order),
            "fitted_order": fit.order_hat,
            "relative_gap": float(abs(fit.order_hat - exact_order) / exact_order),
            "fit_base": fit.base,
            "iterate_limit_relative_gap": iterate_gap,
            "check_depth": params.check_depth,
        },
        files=(str(csv_path), str(out / "report.json")),
    )
    report.save(out / "report.json")
    return report


# ---------------------------------------------------------------------------
# compare: classifiers vs the exact optimum
# ---------------------------------------------------------------------------


def _edge_mask(angles: np.ndarray, params: CompareParams) -> np.ndarray:
    """True where a query sits within the margin band of any box face."""
    margin = params.edge_margin
    if margin <= 0.0:
        return np.zeros(angles.shape[0], dtype=bool)
    near = np.zeros(angles.shape[0], dtype=bool)
    for box in (params.mixture.box_pos, params.mixture.box_neg):
        for k in range(angles.shape[1]):
            for bound in (box.lo[k], box.hi[k]):
                near |= np.abs(angles[:, k] - bound) < margin
    return near


def _sign(scores: np.ndarray) -> np.ndarray:
    return np.where(scores >= 0.0, 1.0, -1.0)


def run_compare(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Test error of each predictor against the exact optimal rule.

    Per trial, one training draw of ``max(n_schedule)`` points is shared by
    every ``n`` as its prefix, and one query draw is shared by every
    predictor, so the comparison across ``n`` is paired rather than
    resampled.
    """
    params: CompareParams = config.params
    t0 = time.perf_counter()
    header = _new_header(config)
    out = _out_path(config, out_dir)

    spec = params.mixture
    dual = params.activation.build() if "machine" in params.predictors else None
    power = params.hilbert_power if params.hilbert_power is not None else spec.dim
    oracle = bayes_oracle(spec)
    n_max = params.n_schedule[-1]
    m = params.n_queries

    # errors[predictor][i_n][trial]
    errors = {p: [[] for _ in params.n_schedule] for p in params.predictors}
    trial_rows = []
    trial_seeds = []
    excluded_total = 0

    for t in range(params.trials):
        rg = stream(config.seed, "compare_trial", t)
        s_train = int(rg.integers(2**63))
        s_query = int(rg.integers(2**63))
        trial_seeds.append(s_train)

        full = sample_mixture(spec, n_max, seed=s_train)
        queries = sample_mixture(spec, m, seed=s_query)
        y_true = queries.labels

        keep = ~_edge_mask(point_to_angles(queries.points), params)
        excluded_total += int(m - keep.sum())
        if not keep.any():
            raise ConfigError("[compare] edge margin excluded every query")

        Z = np.clip(queries.points @ full.points.T, 0.0, 1.0)
        W_machine = None
        if "machine" in params.predictors:
            W_machine = psi_infinity(
                dual, Z.ravel(), rtol=params.rtol, max_depth=params.max_depth
            ).reshape(Z.shape)
        W_hilbert = None
        if "hilbert" in params.predictors:
            with np.errstate(divide="ignore"):
                W_hilbert = np.where(
                    Z >= 1.0, np.inf, (2.0 * (1.0 - Z)) ** (-power / 2.0)
                )
        bayes_pred = oracle.decide(queries.points) if "bayes" in params.predictors else None

        for i_n, n in enumerate(params.n_schedule):
            y_n = full.labels[:n]
            for pred_name in params.predictors:
                if pred_name == "machine":
                    yhat = _sign(smoother_scores(W_machine[:, :n], y_n))
                elif pred_name == "hilbert":
                    yhat = _sign(smoother_scores(W_hilbert[:, :n], y_n))
                elif pred_name == "one_nn":
                    prefix = LabeledDataset(points=full.points[:n], labels=y_n)
                    yhat = one_nn_predict(prefix, queries.points)
                elif pred_name == "majority":
                    vote = 1.0 if float(y_n.sum()) >= 0.0 else -1.0
                    yhat = np.full(m, vote)
                else:
                    yhat = bayes_pred
                err = float(np.mean(yhat[keep] != y_true[keep]))
                errors[pred_name][i_n].append(err)
                trial_rows.append(
                    [
                        str(n),
                        str(t),
                        str(s_train),
                        pred_name,
                        _fmt(err),
                        str(int(keep.sum())),
                    ]
                )

    # deterministic row order: n-major, then trial, then predictor
    trial_rows.sort(key=lambda r: (int(r[0]), int(r[1]), params.predictors.index(r[3])))

    summary_rows = []
    means = {p: [] for p in params.predictors}
    stderrs = {p: [] for p in params.predictors}
    for pred_name in params.predictors:
        for i_n, n in enumerate(params.n_schedule):
            e = np.asarray(errors[pred_name][i_n])
            mu = float(np.mean(e))
            se = float(np.std(e, ddof=1) / np.sqrt(len(e)))
            means[pred_name].append(mu)
            stderrs[pred_name].append(se)
            summary_rows.append(
                [pred_name, str(n), _fmt(mu), _fmt(se), str(params.trials)]
            )

    checks = _compare_checks(params, errors, means)

    mc_est, mc_se = oracle.mc_risk(
        params.mc_risk_samples, seed=int(stream(config.seed, "compare_mc").integers(2**63))
    )

    trials_path = out / "compare_trials.csv"
    _write_csv(
        trials_path,
        ["n", "trial", "seed", "predictor", "error", "queries_counted"],
        trial_rows,
    )
    summary_path = out / "compare_summary.csv"
    _write_csv(
        summary_path,
        ["predictor", "n", "mean_error", "stderr", "trials"],
        summary_rows,
    )

    header["wall_seconds"] = round(time.perf_counter() - t0, 6)
    report = ExperimentReport(
        header=header,
        config=config.echo(),
        metrics={
            "bayes_exact_risk": oracle.exact_risk(),
            "bayes_mc_risk": {"estimate": mc_est, "stderr": mc_se},
            "edge_margin": params.edge_margin,
            "queries_excluded_total": excluded_total,
            "trial_seeds": trial_seeds,
            "mean_error": means,
            "stderr": stderrs,
            "checks": checks,
        },
        files=(str(trials_path), str(summary_path), str(out / "report.json")),
    )
    report.save(out / "report.json")
    return report


def _compare_checks(params: CompareParams, errors: dict, means: dict) -> dict:
    """Trend and ordering diagnostics quoted by the consistency tests."""
    checks: dict = {}
    if "machine" in means:
        mm = means["machine"]
        checks["machine_error_strictly_decreasing"] = bool(
            all(b < a for a, b in zip(mm, mm[1:]))
        )
    if "machine" in means and "majority" in means:
        checks["machine_below_majority_all_n"] = bool(
            all(a < b for a, b in zip(means["machine"], means["majority"]))
        )
    if "bayes" in means:
        worst = np.inf
        for pred_name in params.predictors:
            if pred_name == "bayes":
                continue
            for i_n in range(len(params.n_schedule)):
                diff = np.asarray(errors[pred_name][i_n]) - np.asarray(
                    errors["bayes"][i_n]
                )
                se = float(np.std(diff, ddof=1) / np.sqrt(len(diff)))
                slack = float(np.mean(diff)) + 2.0 * se
                worst = min(worst, slack)
        checks["bayes_lower_bounds_within_2se"] = bool(worst >= 0.0)
        checks["bayes_bound_worst_slack"] = float(worst)
    return checks


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_RUNNERS = {
    "taxonomy": run_taxonomy,
    "dynamics": run_dynamics,
    "polefit": run_polefit,
    "fig2": run_fig2,
    "compare": run_compare,
}


def run(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    try:
        runner = _RUNNERS[config.command]
    except KeyError:
        raise ConfigError(f"unknown command {config.command!r}") from None
    return runner(config, out_dir=out_dir)
