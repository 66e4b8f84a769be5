import csv
import io

import numpy as np
import pytest

from wrflow import ensemble
from wrflow.ensemble import draw_instance, ensemble_row, format_rows, run_ensemble, trial_rng
from wrflow.psd import commutator_norm


def test_trial_rng_depends_only_on_seed_and_trial():
    a = trial_rng(5, 3).standard_normal(4)
    trial_rng(5, 2).standard_normal(100)
    b = trial_rng(5, 3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, trial_rng(5, 4).standard_normal(4))
    assert not np.array_equal(a, trial_rng(6, 3).standard_normal(4))


def test_draw_instance_shapes_and_ranks():
    for trial in range(30):
        r0, pa, pb = draw_instance(1, trial, 4)
        assert r0.dim == pa.dim == pb.dim == 4
        assert 0 <= pa.rank <= 4 and 0 <= pb.rank <= 4
        assert np.array_equal(r0.matrix, draw_instance(1, trial, 4)[0].matrix)


def test_commuting_instances_commute():
    for trial in range(20):
        r0, pa, pb = draw_instance(2, trial, 5, commuting=True)
        scale = 1 + r0.fro
        assert commutator_norm(r0, pa) <= 1e-12 * scale
        assert commutator_norm(r0, pb) <= 1e-12 * scale
        assert commutator_norm(pa, pb) <= 1e-12


def test_rows_independent_of_jobs():
    a = run_ensemble(9, 3, 6, jobs=1)
    b = run_ensemble(9, 3, 6, jobs=3)
    assert format_rows(a) == format_rows(b)


def test_failed_trial_is_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(ensemble, "compare", boom)
    row = ensemble_row(1, 2, 0)
    assert row.error == "RuntimeError: kaboom"
    assert not row.converged


def test_format_rows_is_lossless():
    rows = run_ensemble(4, 3, 3)
    parsed = list(csv.DictReader(io.StringIO(format_rows(rows))))
    assert len(parsed) == 3
    for row, rec in zip(rows, parsed):
        assert float(rec["gap_fro"]) == row.gap_fro
        assert float(rec["dissipated_trace"]) == row.dissipated_trace
        assert int(rec["iterations"]) == row.iterations


@pytest.mark.parametrize("dim", [1, 2])
def test_small_dimensions(dim):
    rows = run_ensemble(0, dim, 4)
    assert all(r.error == "" for r in rows)
