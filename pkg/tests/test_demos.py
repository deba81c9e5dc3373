"""Tests for the anomaly demonstrations and the Demo base class."""

import pytest

from histories_lab.certificates import AnomalyKind
from histories_lab.demos import (
    DEMOS,
    CompositionAnomalyDemo,
    Demo,
    DemoReport,
    LinearPositivityAnomalyDemo,
    PerturbationAnomalyDemo,
)
from histories_lab.kernel import Tolerance


class EchoDemo(Demo):
    name = "echo"

    def run(self) -> DemoReport:
        return DemoReport(self.name, (f"seed {self.seed}",), {"atol": self.tol.atol})


def test_demo_base_defaults() -> None:
    demo = EchoDemo()
    assert demo.tol.atol == 1e-9
    assert demo.seed == 42
    assert demo.max_workers == 4
    report = EchoDemo(Tolerance(1e-6), seed=7).run()
    assert report.to_dict() == {"demo": "echo", "narrative": ["seed 7"], "certificates": [], "atol": 1e-6}


def test_demo_base_is_abstract() -> None:
    with pytest.raises(TypeError):
        Demo()  # type: ignore[abstract]


def test_registry_names() -> None:
    assert set(DEMOS) == {"composition-anomaly", "perturbation-anomaly", "linear-positivity-anomaly"}
    assert DEMOS["composition-anomaly"] is CompositionAnomalyDemo


def test_composition_demo() -> None:
    report = CompositionAnomalyDemo().run()
    (certificate,) = report.certificates
    assert certificate.kind is AnomalyKind.COMPOSITION_WEAK
    assert certificate.value == pytest.approx(-1 / 16, abs=1e-9)
    assert report.payload["composition_weak"]["status"] == "violated"
    assert report.payload["composition_linear"]["status"] == "marginal"
    assert report.payload["witness"]["verdicts"]["weak"] is True
    assert report.to_dict() == CompositionAnomalyDemo().run().to_dict()


def test_perturbation_demo() -> None:
    report = PerturbationAnomalyDemo(max_workers=2).run()
    assert report.payload["phase_law_residual"] <= 1e-10
    assert report.payload["kicked"]["verdicts"] == {"strong": False, "weak": False, "linear_positive": True}
    assert report.payload["robustness"]["survives"]["weak"] is False
    assert [c.kind for c in report.certificates] == [AnomalyKind.PERTURBATION_WEAK]
    assert report.certificates[0].value == pytest.approx(0.25, abs=1e-12)
    assert "Re D'(('+', '+'), ('-', '+')) = 0.25" in report.narrative


def test_linear_positivity_demo() -> None:
    report = LinearPositivityAnomalyDemo(max_workers=2).run()
    assert report.payload["witness_kicks"]["status"] == "marginal"
    search = report.payload["search"]
    assert search["target"] == "linear-positive-phase"
    assert search["status"] in ("found", "exhausted")
    if search["status"] == "found":
        assert search["margins"]["min_re_amplitude"] >= -1e-9
        assert search["margins"]["max_amplitude_phase"] >= 0.9
        # Self-composition doubles a phase above π/4 past π/2.
        assert report.payload["composition_linear"]["status"] == "violated"
        assert AnomalyKind.COMPOSITION_LINEAR in {c.kind for c in report.certificates}
    else:
        assert report.certificates == ()
        assert report.narrative[-1].startswith("Search exhausted")
