"""Tests for the experiment drivers behind ``plap run``."""

import math

import pytest

from plap_kacanov import kacanov as kacanov_module
from plap_kacanov.config import parse_config_text
from plap_kacanov.errors import LinearSolverError
from plap_kacanov.experiments import (
    HISTORY_FILE,
    MANIFEST_FILE,
    SOLUTION_FILE,
    STEEPEST_HISTORY_FILE,
    run_experiment,
)
from plap_kacanov.io import read_history_csv
from plap_kacanov.records import ACTION_DESCENT, ACTION_INIT, ACTION_NO_DESCENT


def _config(text):
    return parse_config_text("mesh_resolution = 2\n" + text)


def test_schedule():
    config = _config("mode = schedule\np = 3\nmax_iterations = 3\ngap_tol = 1e-14\n")
    result = run_experiment(config, write=False)
    assert len(result.history) == 4
    assert result.history[0].action == ACTION_INIT
    assert result.outputs == {}


def test_fixed_interval_from_poisson():
    config = _config(
        "mode = fixed_interval\np = 2\ninitial_guess = poisson\n"
        "eps_minus = 0.5\neps_plus = 2\n"
    )
    result = run_experiment(config, write=False)
    assert result.converged
    assert result.sigma is not None


def test_adaptive_moves_to_finer_mesh():
    config = _config("mode = adaptive\np = 2\nmax_rounds = 2\n")
    result = run_experiment(config, write=False)
    assert result.mesh.n_triangles > config.build_mesh().n_triangles
    assert result.f.mesh is result.mesh


def test_steepest_compare(tmp_path):
    config = _config(
        "mode = steepest_compare\np = 3\neps_minus = 0.1\neps_plus = 10\n"
        "compare_gap_tol = 1e-4\nreference_gap_tol = 1e-6\nmax_iterations = 200\n"
    )
    result = run_experiment(config, out_dir=tmp_path, threads=2)
    assert result.steepest_history is not None
    assert result.steepest_history[0].action == ACTION_INIT
    actions = {row.action for row in result.steepest_history[1:]}
    assert actions <= {ACTION_DESCENT, ACTION_NO_DESCENT}
    budget = result.history[-1].iteration
    assert result.steepest_history[-1].iteration <= budget
    assert math.isfinite(result.reference_energy)
    assert (tmp_path / STEEPEST_HISTORY_FILE).exists()
    assert "# reference energy:" in (tmp_path / MANIFEST_FILE).read_text()


def test_writes_files(tmp_path):
    config = _config("mode = schedule\np = 3\nmax_iterations = 2\n")
    result = run_experiment(config, out_dir=tmp_path / "run")
    assert set(result.outputs) == {"history", "solution", "manifest"}
    assert len(read_history_csv(tmp_path / "run" / HISTORY_FILE)) == 3
    vtk = (tmp_path / "run" / SOLUTION_FILE).read_text()
    for name in ("u", "sigma_abs", "eta_h", "level"):
        assert f"SCALARS {name} " in vtk


@pytest.mark.parametrize("initial_guess", ["zero", "poisson"])
def test_init_row_is_not_counted_in_ndof(tmp_path, initial_guess):
    config = _config(
        "mode = fixed_interval\np = 3\nmax_iterations = 3\ngap_tol = 1e-14\n"
        f"initial_guess = {initial_guess}\n"
    )
    run_experiment(config, out_dir=tmp_path)
    rows = read_history_csv(tmp_path / HISTORY_FILE)
    assert rows[0].action == ACTION_INIT
    assert rows[0].ndof > 0
    assert rows[0].ndof_accumulated == 0
    assert rows[-1].ndof_accumulated == sum(row.ndof for row in rows[1:])
    manifest = (tmp_path / MANIFEST_FILE).read_text()
    assert f"initial_guess = {initial_guess}" in manifest


def test_output_dir_from_config(tmp_path):
    target = tmp_path / "from_config"
    config = _config(
        f"mode = schedule\np = 3\nmax_iterations = 1\noutput_dir = {target}\n"
    )
    run_experiment(config)
    assert (target / HISTORY_FILE).exists()


def test_partial_history_on_failure(tmp_path, monkeypatch):
    real_solve = kacanov_module.solve_spd
    calls = []

    def failing_solve(system, settings=None):
        calls.append(1)
        if len(calls) > 2:
            raise LinearSolverError("forced failure", 1.0, 1.0)
        return real_solve(system, settings)

    monkeypatch.setattr(kacanov_module, "solve_spd", failing_solve)
    config = _config("mode = fixed_interval\np = 5\ngap_tol = 1e-30\n")
    with pytest.raises(LinearSolverError):
        run_experiment(config, out_dir=tmp_path)
    rows = read_history_csv(tmp_path / HISTORY_FILE)
    assert [row.iteration for row in rows] == [0, 1, 2]
    assert not (tmp_path / SOLUTION_FILE).exists()
