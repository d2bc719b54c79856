"""Unit tests for the checks behind ``plap verify``."""

import pytest

from plap_kacanov.acceptance import (
    check_decision_replay,
    check_indicators_nonnegative,
    check_interval_evolution,
    check_iterations,
    check_monotone_dual,
    check_monotone_energy,
    check_weak_duality,
    verify_run,
)
from plap_kacanov.config import parse_config_text
from plap_kacanov.experiments import run_experiment
from plap_kacanov.records import (
    ACTION_DESCENT,
    ACTION_INIT,
    ACTION_KACANOV,
    ConvergenceRecord,
    HistoryBuilder,
)
from plap_kacanov.relaxation import RelaxInterval

EPS = RelaxInterval(0.5, 2.0)


def _history(rows):
    """Rows of (dual energy, gap); the first one is the init row."""
    builder = HistoryBuilder()
    for n, (dual, gap) in enumerate(rows):
        builder.append(
            iteration=n,
            ndof=10,
            action=ACTION_INIT if n == 0 else ACTION_KACANOV,
            eps=EPS,
            dual_energy_relaxed=dual,
            gap=gap,
            eta_eps_plus_sq=0.0,
            eta_eps_minus_sq=0.0,
            count_ndof=n > 0,
        )
    return builder.records


def _replace(record, **changes):
    values = {name: getattr(record, name) for name in record.__dataclass_fields__}
    values.update(changes)
    return ConvergenceRecord(**values)


class TestHistoryChecks:
    def test_clean_history(self):
        history = _history([(0.0, 1.0), (-1.0, 0.5), (-1.2, 0.1), (-1.25, 0.01)])
        assert check_iterations(history).passed
        assert check_weak_duality(history).passed
        assert check_monotone_dual(history, 1e-12).passed
        assert check_indicators_nonnegative(history).passed

    def test_wrong_ndof_total(self):
        history = _history([(0.0, 1.0), (-1.0, 0.5)])
        history[1] = _replace(history[1], ndof_accumulated=99)
        assert not check_iterations(history).passed

    def test_negative_gap(self):
        history = _history([(0.0, 1.0), (-1.0, -1e-3)])
        result = check_weak_duality(history)
        assert not result.passed
        assert "min gap" in result.detail

    def test_rising_dual_energy(self):
        history = _history([(0.0, 1.0), (-1.0, 0.5), (-0.9, 0.4)])
        assert not check_monotone_dual(history, 1e-12).passed

    def test_interval_change_resets_monotonicity(self):
        history = _history([(0.0, 1.0), (-1.0, 0.5), (-0.9, 0.4)])
        history[2] = _replace(history[2], eps_plus=4.0)
        assert check_monotone_dual(history, 1e-12).passed

    def test_negative_indicator(self):
        history = _history([(0.0, 1.0), (-1.0, 0.5)])
        history[1] = _replace(history[1], eta_h_sq=-1.0)
        assert not check_indicators_nonnegative(history).passed

    def test_monotone_energy(self):
        builder = HistoryBuilder()
        for n, energy in enumerate([0.0, -1.0, -1.5]):
            builder.append(
                iteration=n,
                ndof=1,
                action=ACTION_DESCENT,
                primal_energy_unrelaxed=energy,
            )
        assert check_monotone_energy(builder.records).passed
        rising = list(builder.records)
        rising[2] = _replace(rising[2], primal_energy_unrelaxed=1.0)
        assert not check_monotone_energy(rising).passed


@pytest.mark.parametrize(
    "text, names",
    [
        ("mode = schedule\np = 3\nmax_iterations = 3\n", {"schedule_law"}),
        (
            "mode = adaptive\np = 5\nmax_rounds = 6\n",
            {"decision_replay", "interval_evolution"},
        ),
        (
            "mode = fixed_interval\np = 5\neps_minus = 0.1\neps_plus = 10\n"
            "max_iterations = 5\n",
            set(),
        ),
    ],
)
def test_verify_small_runs(text, names):
    config = parse_config_text("mesh_resolution = 2\n" + text)
    checks = verify_run(run_experiment(config, write=False))
    assert {"iterations", "weak_duality", "feasibility"} <= {c.name for c in checks}
    assert names <= {c.name for c in checks}
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_tampered_adaptive_run_is_caught():
    config = parse_config_text("mesh_resolution = 2\nmode = adaptive\nmax_rounds = 4\n")
    result = run_experiment(config, write=False)
    result.history[1] = _replace(result.history[1], action="refine", eta_h_sq=0.0)
    assert not check_decision_replay(result).passed
    result.history[2] = _replace(result.history[2], eps_plus=1e-3)
    assert not check_interval_evolution(result).passed
