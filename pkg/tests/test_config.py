"""Tests for environment-backed defaults."""

import inspect

import pytest

from histories_lab import config
from histories_lab.consistency import brute_force_consistency
from histories_lab.demos.base import Demo
from histories_lab.perturbation import robustness_scan
from histories_lab.search import search, search_linear_positive_phase, search_weak_not_strong


def test_defaults_without_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("HISTORIES_LAB_TOL", "HISTORIES_LAB_MAX_WORKERS", "HISTORIES_LAB_SEED"):
        monkeypatch.delenv(name, raising=False)
    assert config.default_atol() == 1e-9
    assert config.max_workers() == 4
    assert config.default_seed() == 42


def test_environment_overrides(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("HISTORIES_LAB_TOL", "1e-7")
    monkeypatch.setenv("HISTORIES_LAB_MAX_WORKERS", "2")
    monkeypatch.setenv("HISTORIES_LAB_SEED", "")
    assert config.default_atol() == 1e-7
    assert config.max_workers() == 2
    assert config.default_seed() == 42


@pytest.mark.parametrize(
    ("name", "value"),
    [("HISTORIES_LAB_TOL", "tight"), ("HISTORIES_LAB_MAX_WORKERS", "0"), ("HISTORIES_LAB_SEED", "4.5")],
)
def test_invalid_environment_values(monkeypatch: pytest.MonkeyPatch, name: str, value: str) -> None:
    monkeypatch.setenv(name, value)
    with pytest.raises(RuntimeError, match="Invalid"):
        {
            "HISTORIES_LAB_TOL": config.default_atol,
            "HISTORIES_LAB_MAX_WORKERS": config.max_workers,
            "HISTORIES_LAB_SEED": config.default_seed,
        }[name]()


@pytest.mark.parametrize(
    "fn",
    [brute_force_consistency, robustness_scan, search, search_weak_not_strong, search_linear_positive_phase, Demo],
)
def test_library_defaults_come_from_config(fn) -> None:
    params = inspect.signature(fn).parameters
    assert params["max_workers"].default == config.DEFAULT_MAX_WORKERS
    if "seed" in params:
        assert params["seed"].default == config.DEFAULT_SEED
