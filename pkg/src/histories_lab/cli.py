"""The ``histories-lab`` command line.

Usage::

    histories-lab classify witness.json
    histories-lab compose witness.json witness.json --report composite.json
    histories-lab perturb witness.json --event 1 --lambdas 0,1.5707963267948966
    histories-lab perturb witness.json --event 1 --scan
    histories-lab search --target weak-not-strong --dim 2 --times 2 --delta 0.2 --seed 42
    histories-lab demo composition-anomaly
    histories-lab template witness --output witness.json

Tables go to stdout. The machine report goes to ``--report`` when given and
to stdout after the tables otherwise. Logs only ever go to stderr.

Exit codes: 0 success, 1 internal numeric failure, 2 malformed input or bad
flags, 3 search exhausted or pruned.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Annotated, Any, Literal

import polars as pl
from cyclopts import App, Parameter
from cyclopts.exceptions import CycloptsError
from loguru import logger

from histories_lab import config
from histories_lab.certificates import ScanStatus
from histories_lab.composition import (
    composition_anomaly,
    compose,
    linear_positivity_composition_anomaly,
    verify_factorization,
)
from histories_lab.consistency import (
    classify_functional,
    decoherence_functional,
    probabilities_linear,
    probabilities_standard,
)
from histories_lab.demos import DEMOS
from histories_lab.errors import InvalidInputError, NumericFailure, PreconditionError
from histories_lab.kernel import Tolerance
from histories_lab.perturbation import (
    PhaseKick,
    default_grid,
    linear_positivity_perturbation,
    linear_positivity_scan,
    perturbed_dfunc,
    robustness_scan,
)
from histories_lab.reports import (
    classification_payload,
    envelope,
    functional_payload,
    functional_table,
    probabilities_payload,
    probability_table,
    robustness_payload,
    survival_table,
    verdict_table,
)
from histories_lab.scenario import dumps, read_scenario, scenario_from_schedule, template, write_scenario
from histories_lab.search import SearchSpec, SearchStatus, SearchTarget, search

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_INPUT = 2
EXIT_EXHAUSTED = 3

app = App(name="histories-lab", help="Consistency criteria for decoherent histories and their anomalies.")

Tol = Annotated[float | None, Parameter(help="Absolute tolerance (default: HISTORIES_LAB_TOL or 1e-9)")]
ReportPath = Annotated[Path | None, Parameter(help="Write the JSON report here instead of stdout")]
Verbose = Annotated[bool, Parameter(name=["--verbose", "-v"], help="Log progress to stderr")]
Debug = Annotated[bool, Parameter(help="Log per-item detail to stderr")]
DemoName = Literal["composition-anomaly", "perturbation-anomaly", "linear-positivity-anomaly"]
TemplateName = Literal["witness", "x-then-z", "z-repeated", "trivial"]


def _configure_logging(verbose: bool, debug: bool) -> None:
    logger.remove()
    level = "DEBUG" if debug else "INFO" if verbose else "WARNING"
    logger.add(sys.stderr, level=level)


def _tolerance(tol: float | None) -> Tolerance:
    return Tolerance(config.default_atol() if tol is None else tol)


def _echo(name: str, *args: Any, **flags: Any) -> list[str]:
    """The command as it would be typed, flags in a fixed order."""
    command = [name, *(str(a) for a in args)]
    for flag, value in flags.items():
        if value is None or value is False:
            continue
        command.append(f"--{flag.replace('_', '-')}")
        if value is not True:
            command.append(str(value))
    return command


def _print_table(title: str, table: pl.DataFrame) -> None:
    print(title)
    with pl.Config(tbl_rows=-1, tbl_cols=-1):
        print(table)


def _emit(command: list[str], tol: Tolerance, body: dict[str, Any], exit_status: int, report: Path | None) -> int:
    text = dumps(envelope(command, tol, body, exit_status))
    if report is None:
        print(text, end="")
    else:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(text, encoding="utf-8")
        logger.info("Report written to {}", report)
    return exit_status


@app.command(name="classify")
def classify_cmd(
    scenario: Annotated[Path, Parameter(help="Scenario JSON file")],
    /,
    *,
    tol: Tol = None,
    report: ReportPath = None,
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Decoherence functional, both probability rules and all three verdicts."""
    _configure_logging(verbose, debug)
    tolerance = _tolerance(tol)
    loaded = read_scenario(scenario, tolerance)
    family = loaded.family(tolerance)
    functional = decoherence_functional(family, loaded.rho, tolerance)
    verdicts = classify_functional(functional, tolerance)
    standard = probabilities_standard(functional, tolerance)
    linear = probabilities_linear(family, loaded.rho, tolerance)

    _print_table("Decoherence functional", functional_table(functional))
    _print_table("Probabilities", probability_table(standard, linear))
    _print_table("Verdicts", verdict_table(verdicts))
    body = {
        "functional": functional_payload(functional),
        "probabilities": {"standard": probabilities_payload(standard), "linear": probabilities_payload(linear)},
        "classification": classification_payload(verdicts),
    }
    return _emit(_echo("classify", scenario, tol=tol), tolerance, body, EXIT_OK, report)


@app.command(name="compose")
def compose_cmd(
    scenario_a: Annotated[Path, Parameter(help="Scenario of factor A")],
    scenario_b: Annotated[Path, Parameter(help="Scenario of factor B")],
    /,
    *,
    tol: Tol = None,
    report: ReportPath = None,
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Compose two independent systems and scan the composite for anomalies."""
    _configure_logging(verbose, debug)
    tolerance = _tolerance(tol)
    a, b = read_scenario(scenario_a, tolerance), read_scenario(scenario_b, tolerance)
    family_a, family_b = a.family(tolerance), b.family(tolerance)
    composite = compose(family_a, a.rho, family_b, b.rho, tolerance)
    check = verify_factorization(composite, tolerance)
    verdicts = classify_functional(check.functional, tolerance)

    scans: dict[str, Any] = {}
    certificates = []
    for name, scan in (("weak", composition_anomaly), ("linear_positive", linear_positivity_composition_anomaly)):
        try:
            result = scan(family_a, a.rho, family_b, b.rho, tolerance)
        except PreconditionError as e:
            logger.info("Skipping the {} composition scan: {}", name, e)
            scans[name] = {"status": ScanStatus.SKIPPED.value, "reason": str(e)}
            continue
        scans[name] = result.to_dict()
        if result.certificate:
            certificates.append(result.certificate.to_dict())

    _print_table("Composite verdicts", verdict_table(verdicts))
    print(f"Factorization residual {check.max_residual:.3e}; Re-decomposition residual {check.re_decomposition_residual:.3e}")
    for name, outcome in scans.items():
        print(f"{name} composition scan: {outcome['status']}" + (f" ({outcome['value']:.12g})" if "value" in outcome else ""))
    body = {
        "dim": composite.dim,
        "factorization_residual": check.max_residual,
        "re_decomposition_residual": check.re_decomposition_residual,
        "functional": functional_payload(check.functional),
        "classification": classification_payload(verdicts),
        "scans": scans,
        "certificates": certificates,
    }
    return _emit(_echo("compose", scenario_a, scenario_b, tol=tol), tolerance, body, EXIT_OK, report)


def _parse_lambdas(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise InvalidInputError("coupling count", f"--lambdas must be comma-separated numbers, got {raw!r}") from None


@app.command(name="perturb")
def perturb_cmd(
    scenario: Annotated[Path, Parameter(help="Scenario JSON file")],
    /,
    *,
    event: Annotated[int, Parameter(help="1-based event index of the kick")],
    lambdas: Annotated[str | None, Parameter(help="Comma-separated couplings, one per outcome")] = None,
    scan: Annotated[bool, Parameter(help="Scan the default coupling grid instead")] = False,
    tol: Tol = None,
    report: ReportPath = None,
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Apply a phase kick at one event and report what each criterion does."""
    _configure_logging(verbose, debug)
    tolerance = _tolerance(tol)
    if (lambdas is None) == (not scan):
        raise InvalidInputError("flags", "give exactly one of --lambdas or --scan")
    loaded = read_scenario(scenario, tolerance)
    family = loaded.family(tolerance)
    if not 1 <= event <= len(loaded.events):
        raise InvalidInputError("event index", f"--event {event} outside 1..{len(loaded.events)}")
    labels = loaded.events[event - 1].decomposition.labels

    if lambdas is not None:
        values = _parse_lambdas(lambdas)
        kick = PhaseKick.from_values(event, labels, values)
        perturbed = perturbed_dfunc(family, loaded.rho, kick, tolerance)
        verdicts = classify_functional(perturbed.direct, tolerance)
        robustness = robustness_scan(family, loaded.rho, event, [values], tolerance, max_workers=1)
        linear = linear_positivity_perturbation(family, loaded.rho, kick, tolerance)
        _print_table("Kicked decoherence functional", functional_table(perturbed.direct))
        _print_table("Kicked verdicts", verdict_table(verdicts))
        print(f"Phase-law residual {perturbed.residual:.3e}; kicked linear values: {linear.status.value}")
        certificates = [c.to_dict() for c in robustness.certificates]
        if linear.certificate:
            certificates.append(linear.certificate.to_dict())
        body = {
            "kick": {"event": event, "couplings": kick.as_dict()},
            "functional": {
                "direct": functional_payload(perturbed.direct),
                "phase_law": functional_payload(perturbed.by_phase_law),
                "residual": perturbed.residual,
            },
            "classification": classification_payload(verdicts),
            "linear_positivity": linear.to_dict(),
            "certificates": certificates,
        }
        command = _echo("perturb", scenario, event=event, lambdas=lambdas, tol=tol)
    else:
        grid = default_grid(labels)
        robustness = robustness_scan(family, loaded.rho, event, grid, tolerance, max_workers=config.max_workers())
        linear = linear_positivity_scan(family, loaded.rho, event, grid, tolerance)
        _print_table(f"Survival over {len(grid)} coupling vectors at event {event}", survival_table(robustness))
        if robustness.strong_survives:
            print("strong survives entire grid")
        certificates = [c.to_dict() for c in robustness.certificates]
        if linear.certificate:
            certificates.append(linear.certificate.to_dict())
        body = {
            "robustness": robustness_payload(robustness),
            "linear_positivity": linear.to_dict(),
            "certificates": certificates,
        }
        command = _echo("perturb", scenario, event=event, scan=True, tol=tol)
    return _emit(command, tolerance, body, EXIT_OK, report)


@app.command(name="search")
def search_cmd(
    *,
    target: Annotated[SearchTarget, Parameter(help="weak-not-strong or linear-positive-phase")] = SearchTarget.WEAK_NOT_STRONG,
    dim: Annotated[int, Parameter(help="Hilbert-space dimension")] = 2,
    times: Annotated[int, Parameter(help="Number of events")] = 2,
    outcomes: Annotated[int | None, Parameter(help="Outcomes per event (default: dim)")] = None,
    delta: Annotated[float, Parameter(help="Phase threshold")] = 0.2,
    max_iter: Annotated[int, Parameter(help="Coordinate-descent sweeps over all restarts")] = 200,
    mixed: Annotated[bool, Parameter(help="Search over mixed states")] = False,
    seed: Annotated[int | None, Parameter(help="Master seed (default: HISTORIES_LAB_SEED or 42)")] = None,
    output: Annotated[Path, Parameter(help="Where to write the witness scenario")] = Path("witness.json"),
    tol: Tol = None,
    report: ReportPath = None,
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Search for a witness family and write it as a scenario file."""
    _configure_logging(verbose, debug)
    tolerance = _tolerance(tol)
    seed = config.default_seed() if seed is None else seed
    spec = SearchSpec(
        dim=dim,
        events=times,
        outcomes=dim if outcomes is None else outcomes,
        seed=seed,
        max_iterations=max_iter,
        target=target,
        delta=delta,
        mixed=mixed,
    )
    result = search(spec, tolerance, max_workers=config.max_workers())
    body: dict[str, Any] = {"search": result.to_dict()}
    if result.report is not None:
        body["classification"] = classification_payload(result.report)
    if result.status is SearchStatus.FOUND:
        write_scenario(scenario_from_schedule(result.schedule, result.state), output)
        body["scenario"] = str(output)
        print(f"Found {spec.target.value} witness (restart {result.restart}); written to {output}")
        _print_table("Verdicts", verdict_table(result.report))
        exit_status = EXIT_OK
    else:
        print(f"Search {result.status.value}: {result.note}")
        exit_status = EXIT_EXHAUSTED
    command = _echo(
        "search",
        target=spec.target.value,
        dim=dim,
        times=times,
        outcomes=spec.outcomes,
        delta=delta,
        max_iter=max_iter,
        mixed=mixed,
        seed=seed,
        output=output,
        tol=tol,
    )
    return _emit(command, tolerance, body, exit_status, report)


@app.command
def demo(
    name: Annotated[DemoName, Parameter(help="Which anomaly to demonstrate")],
    /,
    *,
    seed: Annotated[int | None, Parameter(help="Master seed for searches")] = None,
    tol: Tol = None,
    report: ReportPath = None,
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Run the canonical witness through one anomaly end to end."""
    _configure_logging(verbose, debug)
    tolerance = _tolerance(tol)
    seed = config.default_seed() if seed is None else seed
    result = DEMOS[name](tolerance, seed=seed, max_workers=config.max_workers()).run()
    for line in result.narrative:
        print(line)
    return _emit(_echo("demo", name, seed=seed, tol=tol), tolerance, result.to_dict(), EXIT_OK, report)


@app.command(name="template")
def template_cmd(
    name: Annotated[TemplateName, Parameter(help="Which standard scenario to write")],
    /,
    *,
    output: Annotated[Path, Parameter(help="Destination file")],
    verbose: Verbose = False,
    debug: Debug = False,
) -> int:
    """Write a standard scenario file."""
    _configure_logging(verbose, debug)
    path = write_scenario(template(name), output)
    logger.info("Wrote the {} template to {}", name, path)
    print(f"{name}: {path}")
    return EXIT_OK


def run(tokens: list[str] | None = None) -> int:
    """Dispatch ``tokens`` and map errors onto exit codes."""
    try:
        status = app(tokens, exit_on_error=False)
    except CycloptsError:
        return EXIT_INPUT
    except InvalidInputError as e:
        logger.error("{}", e)
        return EXIT_INPUT
    except NumericFailure as e:
        logger.error("Numeric failure: {}", e)
        return EXIT_NUMERIC
    return EXIT_OK if status is None else status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
