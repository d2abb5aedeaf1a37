"""Report assembly and rendering.

Every command first builds a plain-dict report (the JSON payload, full
precision) and the text renderer formats numbers from that same dict at six
significant digits, so the two outputs can never disagree.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np

from .design import StackedSystem
from .estimators import SynthesisResult
from .inference import cochran_c, confidence_interval, f_max, q_b, q_e, z_test
from .studies import Provenance, StudyRegression


def _fmt(x) -> str:
    if x is None:
        return "-"
    return "%.6g" % float(x)


def _test_dict(test) -> dict:
    return {"stat": float(test.statistic), "df": test.df, "p": test.p_value}


def _provenance_tag(prov: Provenance, rho: Optional[float]) -> str:
    if prov is Provenance.CORR_FILLED and rho is not None:
        return f"{prov.value}(rho={rho:g})"
    return prov.value


def synthesis_report(
    system: StackedSystem,
    result: SynthesisResult,
    studies: Sequence[StudyRegression],
    alpha: float = 0.05,
    seed: Optional[int] = None,
) -> dict:
    """The JSON payload for a synthesis run."""
    params = []
    for j, label in enumerate(result.param_labels):
        estimate = float(result.beta_hat[j])
        variance = float(result.cov_beta[j, j])
        test = z_test(estimate, variance)
        lo, hi = confidence_interval(estimate, variance, alpha)
        params.append(
            {
                "label": label,
                "estimate": estimate,
                "variance": variance,
                "z": float(test.statistic),
                "p": float(test.p_value),
                "ci": [float(lo), float(hi)],
            }
        )

    q_e_main = q_e(system, result)
    q_e_slopes = None
    if not system.slopes_only and system.has_intercept_rows:
        q_e_slopes = q_e(system, result, slopes_only=True)
    q_b_test = q_b(result)

    mses = [s.mse for s in studies if s.mse is not None]
    mse_dfes = [s.dfe for s in studies if s.mse is not None]
    c_test = cochran_c(mses) if len(mses) >= 2 else None
    f_test = f_max(mses) if len(mses) >= 2 else None

    rhos = system.block_rho or (None,) * system.k
    provenance = {
        sid: _provenance_tag(prov, rho)
        for sid, prov, rho in zip(system.study_ids, system.block_provenance, rhos)
    }

    report = {
        "method": system.mode.value,
        "alpha": alpha,
        "slopes_only": system.slopes_only,
        "params": params,
        "q_e": _test_dict(q_e_main),
        "q_e_slopes_only": _test_dict(q_e_slopes) if q_e_slopes is not None else None,
        "q_b": _test_dict(q_b_test),
        "diagnostics": {
            "condition_number": float(result.condition_number),
            "pooled_mse": result.pooled_mse,
            "cochran_c": float(c_test.statistic) if c_test else None,
            "f_max": float(f_test.statistic) if f_test else None,
            "mse_dfes": [int(d) for d in mse_dfes],
            "covariance_provenance": provenance,
            "warnings": list(result.warnings),
        },
    }
    if seed is not None:
        report["seed"] = int(seed)
    return report


def _table(headers: list[str], rows: list[list[str]], indent: str = "  ") -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [indent + "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append(indent + "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return lines


def _matrix_lines(labels: Sequence[str], matrix: np.ndarray, title: str) -> list[str]:
    headers = [""] + list(labels)
    rows = [[lab] + [_fmt(matrix[i, j]) for j in range(len(labels))]
            for i, lab in enumerate(labels)]
    return [title] + _table(headers, rows)


def _q_line(name: str, entry: Optional[dict]) -> str:
    if entry is None:
        return f"{name}: not applicable"
    return (f"{name}: {_fmt(entry['stat'])}  df = {entry['df']}  "
            f"p = {_fmt(entry['p'])}")


def render_synthesis_text(report: dict, result: SynthesisResult) -> str:
    ci_level = 100.0 * (1.0 - report["alpha"])
    lines = [
        "slope synthesis",
        f"method: {report['method']}"
        + ("  (slopes only)" if report.get("slopes_only") else ""),
        "",
    ]
    headers = ["parameter", "estimate", "variance", "z", "p", f"{_fmt(ci_level)}% CI"]
    rows = [
        [
            p["label"], _fmt(p["estimate"]), _fmt(p["variance"]),
            _fmt(p["z"]), _fmt(p["p"]),
            f"[{_fmt(p['ci'][0])}, {_fmt(p['ci'][1])}]",
        ]
        for p in report["params"]
    ]
    lines += _table(headers, rows) + [""]

    labels = [p["label"] for p in report["params"]]
    cov = result.cov_beta
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    lines += _matrix_lines(labels, cov, "covariance of estimates:") + [""]
    lines += _matrix_lines(labels, corr, "correlation of estimates:") + [""]

    lines.append(_q_line("homogeneity Q_E (all coefficients)"
                         if not report.get("slopes_only") else
                         "homogeneity Q_E (slopes only)", report["q_e"]))
    if report["q_e_slopes_only"] is not None:
        lines.append(_q_line("homogeneity Q_E (slopes only)", report["q_e_slopes_only"]))
    lines.append(_q_line("all parameters zero Q_B", report["q_b"]))
    lines.append("")

    diag = report["diagnostics"]
    lines.append(f"condition number of normal matrix: {_fmt(diag['condition_number'])}")
    if diag["pooled_mse"] is not None:
        lines.append(f"pooled error variance: {_fmt(diag['pooled_mse'])}")
    if diag["cochran_c"] is not None:
        lines.append(
            f"residual-variance checks over {len(diag['mse_dfes'])} reported MSEs: "
            f"Cochran's C = {_fmt(diag['cochran_c'])}, F_max = {_fmt(diag['f_max'])}"
        )
        lines.append(
            "  error dfs per study: " + ", ".join(str(d) for d in diag["mse_dfes"])
        )
    prov = diag["covariance_provenance"]
    if prov:
        lines.append("covariance provenance: "
                     + "; ".join(f"{sid}: {tag}" for sid, tag in prov.items()))
    if diag["warnings"]:
        lines.append("warnings:")
        lines += [f"  - {w}" for w in diag["warnings"]]
    if "seed" in report:
        lines.append(f"seed: {report['seed']}")
    return "\n".join(lines) + "\n"


def verify_report(
    equivalence,
    levene=None,
    seed: Optional[int] = None,
    source: str = "",
) -> dict:
    report = {
        "command": "verify",
        "source": source,
        "pass": bool(equivalence.passed),
        "max_rel_coef_discrepancy": float(equivalence.max_rel_coef_discrepancy),
        "max_rel_cov_discrepancy": float(equivalence.max_rel_cov_discrepancy),
        "cov_scale_ratio": float(equivalence.scale_ratio),
        "pooled_mse": float(equivalence.pooled_mse),
        "full_sample_mse": float(equivalence.full_sample_mse),
        "k": int(equivalence.k),
        "n_total": int(equivalence.n_total),
        "beta_synthesis": [float(v) for v in equivalence.beta_synthesis],
        "beta_full_sample": [float(v) for v in equivalence.beta_full_sample],
    }
    if levene is not None:
        report["levene"] = {
            "stat": float(levene.statistic),
            "df1": levene.df,
            "df2": levene.df2,
            "p": levene.p_value,
        }
    if seed is not None:
        report["seed"] = int(seed)
    return report


def render_verify_text(report: dict) -> str:
    lines = [
        "pooled-sample equivalence check" + (f" ({report['source']})" if report["source"] else ""),
        f"result: {'PASS' if report['pass'] else 'FAIL'}",
        f"max relative coefficient discrepancy: {_fmt(report['max_rel_coef_discrepancy'])}",
        f"max relative covariance discrepancy:  {_fmt(report['max_rel_cov_discrepancy'])}",
        f"studies: {report['k']}  cases: {report['n_total']}",
        f"pooled error variance: {_fmt(report['pooled_mse'])}  "
        f"full-sample: {_fmt(report['full_sample_mse'])}  "
        f"scale ratio: {_fmt(report['cov_scale_ratio'])}",
        "synthesis coefficients:   " + "  ".join(_fmt(v) for v in report["beta_synthesis"]),
        "full-sample coefficients: " + "  ".join(_fmt(v) for v in report["beta_full_sample"]),
    ]
    if "levene" in report:
        lev = report["levene"]
        lines.append(
            f"Levene (median-centered): F({lev['df1']}, {lev['df2']}) = "
            f"{_fmt(lev['stat'])}, p = {_fmt(lev['p'])}"
        )
    if "seed" in report:
        lines.append(f"seed: {report['seed']}")
    return "\n".join(lines) + "\n"


def simulate_report(study_report, seed: int) -> dict:
    report = {"command": "simulate", **study_report.to_dict()}
    report["seed"] = int(seed)
    return report


def render_simulate_text(report: dict) -> str:
    lines = [f"monte carlo study: {report['study']}",
             f"replications: {report['reps']}  seed: {report['seed']}"]
    if report["study"] == "calibration":
        lines.append(f"alpha: {_fmt(report['alpha'])}")
        rates, dfs = report["rejection_rates"], report["df"]
        rows = [
            ["Q_E (all coefficients)", str(dfs["q_e_full"]), _fmt(rates["q_e_full"])],
            ["Q_E (slopes only)", str(dfs["q_e_slopes_only"]), _fmt(rates["q_e_slopes_only"])],
            ["Q_B (null parameters)", str(dfs["q_b"]), _fmt(rates["q_b_null"])],
        ]
        lines += _table(["test", "df", "rejection rate"], rows)
        lines.append("interval coverage:")
        lines += _table(
            ["parameter", "coverage"],
            [[lab, _fmt(cov)] for lab, cov in report["ci_coverage"].items()],
        )
    else:
        lines.append("model-based vs empirical variance of the synthesized coefficients:")
        rows = [
            [
                p["label"], _fmt(p["model_variance_mean"]), _fmt(p["empirical_variance"]),
                _fmt(p["ratio"]), _fmt(p["mc_se"]),
            ]
            for p in report["params"]
        ]
        lines += _table(
            ["parameter", "mean model var", "empirical var", "ratio", "MC s.e."], rows
        )
    return "\n".join(lines) + "\n"


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2)
