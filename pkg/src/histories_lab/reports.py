"""Report payloads and the human-readable tables printed next to them.

Payload builders return plain ``dict``/``list`` trees that :func:`dumps`
serialises canonically; tables are ``polars`` frames for stdout only.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import polars as pl

from histories_lab.consistency import (
    ConsistencyReport,
    DecoherenceFunctional,
    ProbabilityAssignment,
)
from histories_lab.histories import HistoryIndex
from histories_lab.kernel import Tolerance
from histories_lab.perturbation import RobustnessReport
from histories_lab.scenario import encode_matrix


def index_label(index: HistoryIndex) -> str:
    return "(" + ",".join(index) + ")"


def functional_payload(functional: DecoherenceFunctional) -> dict[str, Any]:
    return {
        "indices": [list(index) for index in functional.indices],
        "matrix": encode_matrix(functional.matrix),
    }


def probabilities_payload(assignment: ProbabilityAssignment) -> dict[str, Any]:
    return {
        "rule": assignment.rule.value,
        "values": {index_label(i): v for i, v in zip(assignment.indices, assignment.values, strict=True)},
        "raw": {index_label(i): v for i, v in zip(assignment.indices, assignment.raw, strict=True)},
        "violations": [list(index) for index in assignment.violations],
    }


def classification_payload(report: ConsistencyReport) -> dict[str, Any]:
    criteria = {}
    for result in (report.strong, report.weak, report.linear_positive):
        criteria[result.name] = {
            "passed": result.passed,
            "value": result.value,
            "witness": None if result.witness is None else [list(index) for index in result.witness],
        }
    return {
        "verdicts": report.verdicts,
        "criteria": criteria,
        "max_abs_im_offdiag": report.max_imag_off_diagonal,
        "amplitudes": {
            index_label(index): [float(a.real), float(a.imag)]
            for index, a in zip(report.functional.indices, report.amplitudes, strict=True)
        },
    }


def robustness_payload(scan: RobustnessReport) -> dict[str, Any]:
    return {
        "event": scan.event,
        "grid_points": len(scan.points),
        "survives": {
            "strong": scan.strong_survives,
            "weak": scan.weak_survives,
            "linear_positive": scan.linear_survives,
        },
        "worst": {
            "strong": {"couplings": scan.worst_strong.kick.as_dict(), "value": scan.worst_strong.report.strong.value},
            "weak": {"couplings": scan.worst_weak.kick.as_dict(), "value": scan.worst_weak.report.weak.value},
            "linear_positive": {
                "couplings": scan.worst_linear.kick.as_dict(),
                "value": scan.worst_linear.report.linear_positive.value,
            },
        },
        "certificates": [c.to_dict() for c in scan.certificates],
    }


def envelope(command: list[str], tol: Tolerance, body: dict[str, Any], exit_status: int) -> dict[str, Any]:
    """Wrap a command's payload with the echo needed to replay it."""
    return {"command": command, "tolerance": tol.atol, "exit_status": exit_status, **body}


# -- tables -------------------------------------------------------------------


def functional_table(functional: DecoherenceFunctional) -> pl.DataFrame:
    """Long form: one row per ``(α′, α)`` entry."""
    labels = [index_label(index) for index in functional.indices]
    n = len(labels)
    rows, cols = np.divmod(np.arange(n * n), n)
    return pl.DataFrame(
        {
            "primed": [labels[r] for r in rows],
            "unprimed": [labels[c] for c in cols],
            "re": functional.matrix.real.ravel(),
            "im": functional.matrix.imag.ravel(),
        }
    )


def probability_table(standard: ProbabilityAssignment, linear: ProbabilityAssignment) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "history": [index_label(index) for index in standard.indices],
            "p_standard": list(standard.values),
            "p_linear": list(linear.values),
        }
    )


def verdict_table(report: ConsistencyReport) -> pl.DataFrame:
    results = (report.strong, report.weak, report.linear_positive)
    return pl.DataFrame(
        {
            "criterion": [r.name for r in results],
            "passed": [r.passed for r in results],
            "value": [r.value for r in results],
        }
    )


def survival_table(scan: RobustnessReport) -> pl.DataFrame:
    worst = (scan.worst_strong, scan.worst_weak, scan.worst_linear)
    return pl.DataFrame(
        {
            "criterion": ["strong", "weak", "linear_positive"],
            "survives": [scan.strong_survives, scan.weak_survives, scan.linear_survives],
            "worst_couplings": [str(list(p.kick.values)) for p in worst],
            "worst_value": [
                scan.worst_strong.report.strong.value,
                scan.worst_weak.report.weak.value,
                scan.worst_linear.report.linear_positive.value,
            ],
        }
    )
