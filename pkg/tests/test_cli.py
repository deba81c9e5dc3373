"""End-to-end tests of the ``histories-lab`` command line."""

import json
from pathlib import Path

import numpy as np
import pytest

from histories_lab.certificates import ScanStatus
from histories_lab.cli import EXIT_EXHAUSTED, EXIT_INPUT, EXIT_OK, run


def _report(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def test_template_writes_scenario(tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_output / "xz.json"
    assert run(["template", "x-then-z", "--output", str(path)]) == EXIT_OK
    assert path.exists()
    assert "x-then-z" in capsys.readouterr().out


def test_classify_witness(witness_file: Path, tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    report_path = tmp_output / "classify.json"
    assert run(["classify", str(witness_file), "--report", str(report_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Decoherence functional" in out
    assert "Verdicts" in out

    report = _report(report_path)
    assert report["command"] == ["classify", str(witness_file)]
    assert report["tolerance"] == 1e-9
    assert report["exit_status"] == EXIT_OK
    assert report["classification"]["verdicts"] == {"strong": False, "weak": True, "linear_positive": True}
    assert report["classification"]["max_abs_im_offdiag"] == pytest.approx(0.25)
    assert report["probabilities"]["standard"]["values"]["(+,+)"] == pytest.approx(0.25)
    assert report["classification"]["amplitudes"]["(+,+)"] == pytest.approx([0.25, -0.25])


def test_classify_prints_report_without_report_flag(witness_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(["classify", str(witness_file), "--tol", "1e-7"]) == EXIT_OK
    out = capsys.readouterr().out
    report = json.loads(out[out.index('{\n  "classification"') :])
    assert report["tolerance"] == 1e-7
    assert report["command"] == ["classify", str(witness_file), "--tol", "1e-07"]


def test_classify_rejects_incomplete_scenario(tmp_output: Path) -> None:
    path = tmp_output / "bad.json"
    assert run(["template", "witness", "--output", str(path)]) == EXIT_OK
    data = json.loads(path.read_text(encoding="utf-8"))
    data["events"][1]["labels"] = ["+"]
    data["events"][1]["projectors"] = data["events"][1]["projectors"][:1]
    path.write_text(json.dumps(data), encoding="utf-8")
    assert run(["classify", str(path)]) == EXIT_INPUT


def test_classify_rejects_non_utf8_file(tmp_output: Path) -> None:
    path = tmp_output / "binary.json"
    path.write_bytes(b"\xff\xfe")
    assert run(["classify", str(path)]) == EXIT_INPUT


def test_classify_rejects_nan_event_time(tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_output / "nan.json"
    assert run(["template", "witness", "--output", str(path)]) == EXIT_OK
    data = json.loads(path.read_text(encoding="utf-8"))
    data["hamiltonian"] = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
    data["events"][0]["time"] = "nan"
    path.write_text(json.dumps(data), encoding="utf-8")
    capsys.readouterr()
    assert run(["classify", str(path)]) == EXIT_INPUT
    assert "NaN" not in capsys.readouterr().out


def test_compose_witness_with_itself(witness_file: Path, tmp_output: Path) -> None:
    report_path = tmp_output / "compose.json"
    assert run(["compose", str(witness_file), str(witness_file), "--report", str(report_path)]) == EXIT_OK
    report = _report(report_path)
    assert report["dim"] == 4
    assert report["factorization_residual"] <= 1e-8
    assert report["scans"]["weak"]["status"] == "violated"
    assert abs(report["scans"]["weak"]["value"]) == pytest.approx(1 / 16)
    assert report["scans"]["linear_positive"]["status"] == "marginal"
    (certificate,) = report["certificates"]
    assert certificate["kind"] == "composition-weak"


def test_compose_skips_scans_whose_precondition_fails(tmp_output: Path) -> None:
    xz = tmp_output / "xz.json"
    run(["template", "x-then-z", "--output", str(xz)])
    report_path = tmp_output / "compose.json"
    assert run(["compose", str(xz), str(xz), "--report", str(report_path)]) == EXIT_OK
    report = _report(report_path)
    assert report["scans"]["weak"]["status"] == ScanStatus.SKIPPED.value
    assert report["scans"]["linear_positive"]["status"] != ScanStatus.SKIPPED.value
    assert report["classification"]["verdicts"]["weak"] is False


def test_perturb_with_explicit_couplings(witness_file: Path, tmp_output: Path) -> None:
    report_path = tmp_output / "perturb.json"
    lambdas = f"0,{np.pi / 2!r}"
    code = run(["perturb", str(witness_file), "--event", "1", "--lambdas", lambdas, "--report", str(report_path)])
    assert code == EXIT_OK
    report = _report(report_path)
    assert report["kick"] == {"event": 1, "couplings": {"+": 0.0, "-": pytest.approx(np.pi / 2)}}
    assert report["functional"]["residual"] <= 1e-10
    assert report["classification"]["verdicts"]["weak"] is False
    assert report["linear_positivity"]["status"] == "marginal"
    assert [c["kind"] for c in report["certificates"]] == ["perturbation-weak"]
    (certificate,) = report["certificates"]
    assert certificate["indices"] == [["+", "+"], ["-", "+"]]
    assert certificate["value"] == pytest.approx(0.25, abs=1e-12)


def test_perturb_scan(witness_file: Path, tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    report_path = tmp_output / "scan.json"
    assert run(["perturb", str(witness_file), "--event", "1", "--scan", "--report", str(report_path)]) == EXIT_OK
    assert "Survival over 32 coupling vectors" in capsys.readouterr().out
    robustness = _report(report_path)["robustness"]
    assert robustness["grid_points"] == 32
    assert robustness["survives"] == {"strong": False, "weak": False, "linear_positive": True}


def test_perturb_reports_strong_survival(tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_output / "zz.json"
    run(["template", "z-repeated", "--output", str(path)])
    assert run(["perturb", str(path), "--event", "1", "--scan", "--report", str(tmp_output / "r.json")]) == EXIT_OK
    assert "strong survives entire grid" in capsys.readouterr().out


@pytest.mark.parametrize(
    "flags",
    [
        ["--event", "1"],
        ["--event", "1", "--scan", "--lambdas", "0,1"],
        ["--event", "3", "--scan"],
        ["--event", "1", "--lambdas", "0,1,2"],
        ["--event", "1", "--lambdas", "zero,one"],
        ["--scan"],
        ["--event", "first", "--scan"],
    ],
)
def test_perturb_flag_errors(witness_file: Path, flags: list[str]) -> None:
    assert run(["perturb", str(witness_file), *flags]) == EXIT_INPUT


def test_search_round_trip(tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    scenario = tmp_output / "found.json"
    search_report = tmp_output / "search.json"
    code = run(
        [
            "search",
            "--target",
            "weak-not-strong",
            "--dim",
            "2",
            "--times",
            "2",
            "--delta",
            "0.2",
            "--seed",
            "42",
            "--output",
            str(scenario),
            "--report",
            str(search_report),
        ]
    )
    assert code == EXIT_OK
    assert "Found weak-not-strong witness" in capsys.readouterr().out
    margins = _report(search_report)["search"]["margins"]
    assert margins["max_abs_re_offdiag"] <= 1e-9
    assert margins["max_abs_im_offdiag"] >= 0.2

    classify_report = tmp_output / "classify.json"
    assert run(["classify", str(scenario), "--report", str(classify_report)]) == EXIT_OK
    classification = _report(classify_report)["classification"]
    assert classification["verdicts"]["weak"] is True
    assert classification["verdicts"]["strong"] is False
    assert classification["criteria"]["weak"]["value"] == pytest.approx(margins["max_abs_re_offdiag"], abs=1e-15)
    assert classification["max_abs_im_offdiag"] == pytest.approx(margins["max_abs_im_offdiag"], abs=1e-15)


@pytest.mark.parametrize(
    ("flags", "status"),
    [(["--delta", "0.6"], "pruned"), (["--max-iter", "0"], "exhausted")],
)
def test_search_without_witness_exits_three(flags: list[str], status: str, tmp_output: Path) -> None:
    report_path = tmp_output / "search.json"
    output = tmp_output / "never.json"
    assert run(["search", *flags, "--output", str(output), "--report", str(report_path)]) == EXIT_EXHAUSTED
    report = _report(report_path)
    assert report["exit_status"] == EXIT_EXHAUSTED
    assert report["search"]["status"] == status
    assert not output.exists()


def test_search_rejects_bad_target() -> None:
    assert run(["search", "--target", "strong"]) == EXIT_INPUT


def test_demo_composition_anomaly(tmp_output: Path, capsys: pytest.CaptureFixture[str]) -> None:
    report_path = tmp_output / "demo.json"
    assert run(["demo", "composition-anomaly", "--report", str(report_path)]) == EXIT_OK
    assert "Composite witness x witness: status violated" in capsys.readouterr().out
    report = _report(report_path)
    assert report["demo"] == "composition-anomaly"
    assert report["command"] == ["demo", "composition-anomaly", "--seed", "42"]
    assert [c["kind"] for c in report["certificates"]] == ["composition-weak"]


def test_demo_rejects_unknown_name() -> None:
    assert run(["demo", "teleportation"]) == EXIT_INPUT
