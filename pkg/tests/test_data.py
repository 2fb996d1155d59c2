import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bilinear_ddc.data import (
    DataRecord,
    assemble_v0,
    consistency_residual,
    diagnose,
    load,
    run_experiment,
    save,
    uniform_inputs,
)
from bilinear_ddc.errors import ExperimentDiverged, InvalidArgument, ValidationError
from bilinear_ddc.system import BilinearSystem


def zero_record(n=2, T=4):
    Z = np.zeros((n, T))
    return DataRecord(np.zeros((1, T)), Z, Z, Z)


class TestExperiment:
    def test_reference_setup(self, plant):
        rec = run_experiment(plant, x0=[0.5, -0.5], input_source=uniform_inputs(0), T=10)
        assert (rec.T, rec.n) == (10, 2)
        np.testing.assert_array_equal(rec.X0[:, 0], [0.5, -0.5])
        assert np.all(np.abs(rec.U0) <= 1)

    def test_zero_experiment(self, plant):
        rec = run_experiment(plant, x0=[0, 0], input_source=[0.0] * 5, T=5)
        assert not rec.X0.any() and not rec.X1.any() and not rec.V0.any()
        assert diagnose(rec).rank_X0 == 0

    def test_consistency(self, plant):
        for seed in range(20):
            rec = run_experiment(plant, T=10, seed=seed)
            assert consistency_residual(rec, plant) <= 1e-12 * (1 + np.linalg.norm(rec.X1))
            np.testing.assert_array_equal(rec.V0, rec.X0 * rec.U0)

    def test_shifted_states(self, plant):
        rec = run_experiment(plant, T=6, seed=2)
        np.testing.assert_array_equal(rec.X0[:, 1:], rec.X1[:, :-1])

    def test_deterministic(self, plant):
        a, b = run_experiment(plant, seed=4), run_experiment(plant, seed=4)
        np.testing.assert_array_equal(a.X1, b.X1)

    def test_bad_T(self, plant):
        with pytest.raises(InvalidArgument):
            run_experiment(plant, T=0)

    def test_divergence(self):
        sys = BilinearSystem(np.array([[1e200]]), np.array([[1.0]]), np.array([[0.0]]))
        with pytest.raises(ExperimentDiverged) as info:
            run_experiment(sys, x0=[1.0], input_source=[0.0] * 4, T=4)
        assert info.value.step == 1

    def test_rich_data(self, plant):
        full = sum(diagnose(run_experiment(plant, T=10, seed=s)).rank_X0 == 2 for s in range(100))
        assert full >= 99


class TestV0:
    def test_zero_input(self):
        assert not assemble_v0(np.zeros((1, 3)), np.ones((2, 3))).any()

    def test_unit_input(self):
        X0 = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(assemble_v0(np.ones((1, 3)), X0), X0)

    def test_hand_example(self):
        np.testing.assert_array_equal(assemble_v0([[2, -1]], [[1, 3], [0, 4]]), [[2, -3], [0, -4]])

    def test_width_mismatch(self):
        with pytest.raises(InvalidArgument):
            assemble_v0(np.ones((1, 2)), np.ones((2, 3)))

    @given(arrays(float, (1, 5), elements=st.floats(-1e3, 1e3)), arrays(float, (3, 5), elements=st.floats(-1e3, 1e3)))
    def test_columnwise(self, U0, X0):
        V0 = assemble_v0(U0, X0)
        for k in range(5):
            np.testing.assert_array_equal(V0[:, k], X0[:, k] * U0[0, k])


class TestDiagnostics:
    def test_zero(self):
        d = diagnose(zero_record())
        assert d.rank_X0 == 0 and d.sigma_min == 0 and not d.full_rank(2)

    def test_orthonormal(self):
        X0 = np.array([[1.0, 0, 0], [0, 1.0, 0]])
        U0 = np.ones((1, 3))
        d = diagnose(DataRecord(U0, X0, X0, X0 * U0))
        assert d.rank_X0 == 2 and d.sigma_min == pytest.approx(1.0)
        assert d.cond_X0 == pytest.approx(1.0)

    def test_reference_experiment(self, record):
        d = diagnose(record)
        assert d.rank_X0 == 2 and d.full_rank(2) and not d.ill_conditioned
        assert d.max_state_norm > 0

    def test_ill_conditioned_warning(self):
        X0 = np.array([[1.0, 1.0, 0.0], [1.0, 1.0 + 1e-10, 0.0]])
        U0 = np.ones((1, 3))
        d = diagnose(DataRecord(U0, X0, X0, X0 * U0))
        assert d.ill_conditioned and d.warnings

    def test_column_permutation(self, plant):
        rec = run_experiment(plant, T=10, seed=5)
        perm = np.random.default_rng(0).permutation(10)
        other = DataRecord(rec.U0[:, perm], rec.X0[:, perm], rec.X1[:, perm], rec.V0[:, perm])
        a, b = diagnose(rec), diagnose(other)
        assert a.rank_X0 == b.rank_X0
        assert a.sigma_min == pytest.approx(b.sigma_min, rel=1e-12)


class TestResidual:
    def test_perturbed(self, plant, record):
        bumped = DataRecord(record.U0, record.X0, record.X1 + 1e-3, record.V0)
        assert consistency_residual(bumped, plant) == pytest.approx(1e-3 * np.sqrt(20), rel=1e-6)

    def test_zero(self):
        Z = np.zeros((2, 2))
        assert consistency_residual(zero_record(), BilinearSystem(Z, np.zeros((2, 1)), Z)) == 0


class TestPersistence:
    def test_round_trip(self, tmp_path, record):
        save(record, tmp_path / "d.json")
        back = load(tmp_path / "d.json")
        for name in ("U0", "X0", "X1", "V0"):
            np.testing.assert_array_equal(getattr(back, name), getattr(record, name))

    def test_schema(self, tmp_path, record):
        save(record, tmp_path / "d.json")
        d = json.loads((tmp_path / "d.json").read_text())
        assert d["T"] == 10 and d["n"] == 2 and len(d["X0"]) == 2 and len(d["X0"][0]) == 10

    def test_bad_v0(self, tmp_path, record):
        d = record.to_dict()
        d["V0"][0][3] += 1.0
        (tmp_path / "bad.json").write_text(json.dumps(d))
        with pytest.raises(ValidationError) as info:
            load(tmp_path / "bad.json")
        assert info.value.field == "V0"

    def test_malformed(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(ValidationError):
            load(tmp_path / "m.json")

    def test_short_record_warns(self, tmp_path, plant):
        rec = run_experiment(plant, T=1, seed=0)
        save(rec, tmp_path / "s.json")
        with pytest.warns(RuntimeWarning, match="rank"):
            back = load(tmp_path / "s.json")
        assert diagnose(back).rank_X0 < 2

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 8), st.integers(0, 10**6))
    def test_round_trip_property(self, n, T, seed):
        rng = np.random.default_rng(seed)
        X0, U0 = rng.normal(size=(n, T)) * 1e3, rng.normal(size=(1, T))
        rec = DataRecord(U0, X0, rng.normal(size=(n, T)), X0 * U0)
        back = DataRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        np.testing.assert_array_equal(back.X0, rec.X0)
        np.testing.assert_array_equal(back.V0, rec.V0)
