"""The three anomaly demonstrations, registered by name in :data:`DEMOS`."""

from __future__ import annotations

import numpy as np
from loguru import logger

from histories_lab.composition import composition_anomaly, linear_positivity_composition_anomaly
from histories_lab.consistency import classify
from histories_lab.demos.base import Demo, DemoReport
from histories_lab.perturbation import (
    PhaseKick,
    default_grid,
    linear_positivity_scan,
    perturbed_dfunc,
    robustness_scan,
)
from histories_lab.reports import classification_payload, robustness_payload
from histories_lab.search import SearchSpec, SearchTarget, canonical_witness, search_linear_positive_phase

LINEAR_PHASE_DELTA = 0.9
"""Just above π/4, the phase of the canonical witness amplitudes."""
LINEAR_SEARCH_BUDGET = 100


class CompositionAnomalyDemo(Demo):
    """Two weakly decoherent witnesses whose composite is not weakly decoherent."""

    name = "composition-anomaly"

    def run(self) -> DemoReport:
        family, rho = canonical_witness()
        report = classify(family, rho, self.tol)
        weak = composition_anomaly(family, rho, family, rho, self.tol)
        linear = linear_positivity_composition_anomaly(family, rho, family, rho, self.tol)

        narrative = [
            f"Witness: weak={report.weak.passed} strong={report.strong.passed} "
            f"max|Im D|={report.max_imag_off_diagonal:.6g}",
            f"Composite witness x witness: status {weak.status.value}, Re D{weak.indices} = {weak.value:.12g}",
            f"Linear amplitudes of the composite: status {linear.status.value}, min Re = {linear.value:.12g}",
        ]
        certificates = (weak.certificate,) if weak.certificate else ()
        return DemoReport(
            self.name,
            tuple(narrative),
            {
                "witness": classification_payload(report),
                "composition_weak": weak.to_dict(),
                "composition_linear": linear.to_dict(),
            },
            certificates,
        )


class PerturbationAnomalyDemo(Demo):
    """A phase kick that turns the witness's imaginary interference real."""

    name = "perturbation-anomaly"

    def run(self) -> DemoReport:
        family, rho = canonical_witness()
        kick = PhaseKick.from_values(1, ("+", "-"), (0.0, np.pi / 2))
        perturbed = perturbed_dfunc(family, rho, kick, self.tol)
        kicked = classify(perturbed.perturbed.family, rho, self.tol)
        scan = robustness_scan(
            family, rho, 1, default_grid(("+", "-")), self.tol, max_workers=self.max_workers
        )

        narrative = [
            f"Kick {kick.as_dict()} at event 1: weak={kicked.weak.passed} strong={kicked.strong.passed}",
            f"Re D'{kicked.weak.witness} = {kicked.functional.entry(*kicked.weak.witness).real:.12g}"
            if kicked.weak.witness
            else "Kicked family stays weakly decoherent",
            f"Phase-law residual {perturbed.residual:.3e}",
            f"Default grid ({len(scan.points)} points): strong survives={scan.strong_survives}, "
            f"weak survives={scan.weak_survives}, linear survives={scan.linear_survives}",
        ]
        return DemoReport(
            self.name,
            tuple(narrative),
            {
                "kick": {"event": kick.event, "couplings": kick.as_dict()},
                "phase_law_residual": perturbed.residual,
                "kicked": classification_payload(kicked),
                "robustness": robustness_payload(scan),
            },
            scan.certificates,
        )


class LinearPositivityAnomalyDemo(Demo):
    """Search a linearly positive family with a large amplitude phase, then compose and kick it."""

    name = "linear-positivity-anomaly"

    def run(self) -> DemoReport:
        witness, witness_rho = canonical_witness()
        witness_kicks = linear_positivity_scan(witness, witness_rho, 1, default_grid(("+", "-")), self.tol)
        narrative = [
            f"Witness under kicks at event 1: status {witness_kicks.status.value}, "
            f"min kicked linear value {witness_kicks.value:.12g}",
        ]
        payload: dict = {"witness_kicks": witness_kicks.to_dict()}
        certificates = []

        spec = SearchSpec(
            dim=2,
            events=2,
            outcomes=2,
            seed=self.seed,
            max_iterations=LINEAR_SEARCH_BUDGET,
            target=SearchTarget.LINEAR_POSITIVE_PHASE,
            delta=LINEAR_PHASE_DELTA,
        )
        found = search_linear_positive_phase(spec, self.tol, max_workers=self.max_workers)
        payload["search"] = found.to_dict()
        if not found.found:
            logger.warning("Linear-positive-phase search exhausted for seed {}", self.seed)
            narrative.append(f"Search exhausted: no linearly positive family with phase >= {spec.delta} ({found.note})")
            return DemoReport(self.name, tuple(narrative), payload, ())

        family, rho = found.family, found.state
        narrative.append(
            f"Found family: min Re<C> = {found.margins['min_re_amplitude']:.6g}, "
            f"max phase = {found.margins['max_amplitude_phase']:.6g} (restart {found.restart})"
        )
        composed = linear_positivity_composition_anomaly(family, rho, family, rho, self.tol)
        narrative.append(
            f"Self-composition: status {composed.status.value}, min Re<C> = {composed.value:.12g}"
        )
        payload["composition_linear"] = composed.to_dict()
        if composed.certificate:
            certificates.append(composed.certificate)

        kicks = linear_positivity_scan(family, rho, 1, default_grid(family.schedule.decompositions[0].labels), self.tol)
        narrative.append(f"Found family under kicks at event 1: status {kicks.status.value}, min {kicks.value:.12g}")
        payload["found_kicks"] = kicks.to_dict()
        if kicks.certificate:
            certificates.append(kicks.certificate)
        return DemoReport(self.name, tuple(narrative), payload, tuple(certificates))


DEMOS: dict[str, type[Demo]] = {
    demo.name: demo for demo in (CompositionAnomalyDemo, PerturbationAnomalyDemo, LinearPositivityAnomalyDemo)
}
