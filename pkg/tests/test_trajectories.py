"""Streamline integration and classification."""

import numpy as np
import pytest

import kppdrift as kd
from kppdrift.trajectories import (
    TAG_CLOSED,
    TAG_STAGNATION,
    TAG_UNBOUNDED_NONPERIODIC,
    TAG_UNBOUNDED_PERIODIC,
    TAG_UNDETERMINED,
    build_interpolant,
)


@pytest.fixture(scope="module")
def torus256():
    return kd.PeriodicCell("torus", 1.0, 1.0, 256, 256)


@pytest.fixture(scope="module")
def cellular256(torus256):
    return kd.sample_flow(kd.FlowSpec("cellular"), torus256)


@pytest.fixture(scope="module")
def cellular_interp(cellular256):
    return build_interpolant(cellular256, "spline")


class TestIntegrator:
    def test_zero_field_stops_immediately(self, torus32):
        q = kd.sample_flow(kd.FlowSpec("zero"), torus32)
        s = kd.integrate_streamline(q, (0.3, 0.3), step=1e-2, t_max=1.0)
        assert len(s.samples) == 1
        assert s.stopped_on_stagnation

    def test_seed_outside_cell_rejected(self, torus32):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus32)
        with pytest.raises(kd.InputError):
            kd.integrate_streamline(q, (1.5, 0.2), step=1e-2, t_max=1.0)

    def test_bad_step_rejected(self, torus32):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus32)
        with pytest.raises(kd.InputError):
            kd.integrate_streamline(q, (0.0, 0.25), step=-1e-2, t_max=1.0)

    def test_shear_line_is_straight_with_unit_speed(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus256)
        s = kd.integrate_streamline(q, (0.0, 0.25), step=1e-3, t_max=2.0)
        # at y = 1/4 the speed is sin(pi/2) = 1, so x(t) = t and arc = time
        assert np.allclose(s.samples[:, 1], 0.25, atol=1e-12)
        assert np.allclose(s.samples[:, 0], s.times, atol=1e-10)

    def test_interpolant_matches_nodes(self, cellular256, cellular_interp, torus256):
        pts = np.stack([torus256.x[:10], torus256.y[:10]], axis=1)
        vals = cellular_interp(pts)
        expect = np.array(
            [(cellular256.vx[i, i], cellular256.vy[i, i]) for i in range(10)]
        )
        assert np.allclose(vals, expect, atol=1e-12)

    def test_bilinear_option_available(self, cellular256):
        itp = build_interpolant(cellular256, "bilinear")
        v = itp(np.array([[0.3, 0.4]]))
        assert np.all(np.isfinite(v))
        with pytest.raises(kd.InputError):
            build_interpolant(cellular256, "fancy")


class TestClassification:
    def test_shear_unbounded_periodic(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus256)
        orbit = kd.integrate_orbit(q, (0.0, 0.25), step=1e-3, t_max=2.0)
        c = kd.classify_streamline(orbit, torus256)
        assert c.tag == TAG_UNBOUNDED_PERIODIC
        assert np.allclose(c.period_vector, [1.0, 0.0])
        assert abs(c.return_time - 1.0) < 1e-6

    def test_shear_stagnation_rows(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus256)
        for y in (0.0, 0.5):
            orbit = kd.integrate_orbit(q, (0.3, y), step=1e-3, t_max=2.0)
            assert kd.classify_streamline(orbit, torus256).tag == TAG_STAGNATION

    def test_cellular_interior_seeds_closed(self, torus256, cellular256, cellular_interp):
        for seed in ((0.1, 0.2), (0.25, 0.1), (0.35, 0.4)):
            orbit = kd.integrate_orbit(
                cellular256, seed, step=1e-3, t_max=6.0, interp=cellular_interp
            )
            c = kd.classify_streamline(orbit, torus256)
            assert c.tag == TAG_CLOSED, (seed, c.tag)
            assert c.closest_return < 1e-6

    def test_remark_seed_unbounded_nonperiodic(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("remark"), torus256)
        orbit = kd.integrate_orbit(q, (1.0, np.exp(-1.0)), step=1e-3, t_max=10.0)
        c = kd.classify_streamline(orbit, torus256)
        assert c.tag == TAG_UNBOUNDED_NONPERIODIC
        assert c.span_periods >= 2.5

    def test_diagonal_period_vector(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("diagonal"), torus256)
        orbit = kd.integrate_orbit(q, (0.6, 0.1), step=1e-3, t_max=6.0)
        c = kd.classify_streamline(orbit, torus256)
        assert c.tag == TAG_UNBOUNDED_PERIODIC
        assert abs(abs(c.period_vector[0]) - 1.0) < 1e-12
        assert np.isclose(c.period_vector[0], c.period_vector[1])

    def test_classification_invariant_under_lattice_translation(self, torus256):
        # seeds (0, y) and (L1, y) are the same point modulo the lattice
        q = kd.sample_flow(kd.FlowSpec("shear"), torus256)
        base = kd.classify_streamline(
            kd.integrate_orbit(q, (0.0, 0.25), step=1e-3, t_max=2.0), torus256
        )
        shifted = kd.classify_streamline(
            kd.integrate_orbit(q, (1.0, 0.25), step=1e-3, t_max=2.0), torus256
        )
        assert base.tag == shifted.tag == TAG_UNBOUNDED_PERIODIC
        assert np.allclose(base.period_vector, shifted.period_vector)
        assert abs(base.return_time - shifted.return_time) < 1e-9

    def test_time_reversal_negates_period_vector(self, torus256):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus256)
        qr = q.scaled(-1.0)
        fwd = kd.classify_streamline(
            kd.integrate_orbit(q, (0.0, 0.25), step=1e-3, t_max=2.0), torus256
        )
        rev = kd.classify_streamline(
            kd.integrate_orbit(qr, (0.0, 0.25), step=1e-3, t_max=2.0), torus256
        )
        assert fwd.tag == rev.tag == TAG_UNBOUNDED_PERIODIC
        assert np.allclose(fwd.period_vector, -rev.period_vector)

    def test_step_halving_improves_closest_return(self, torus256, cellular256, cellular_interp):
        errs = {}
        for step in (1e-2, 5e-3):
            orbit = kd.integrate_orbit(
                cellular256, (0.25, 0.1), step=step, t_max=1.6, interp=cellular_interp
            )
            c = kd.classify_streamline(orbit, torus256, tol=1e-3)
            assert c.tag == TAG_CLOSED
            errs[step] = c.closest_return
        assert errs[1e-2] / errs[5e-3] >= 8.0

    def test_stream_function_conserved_and_drift_order(self, torus256, cellular256, cellular_interp):
        phi = kd.flow_stream_function(kd.FlowSpec("cellular"), torus256)
        phi_itp = build_interpolant(
            kd.VectorField(torus256, phi.values, phi.values), "spline"
        )
        drifts = {}
        for step in (4e-2, 2e-2, 1e-2):
            orbit = kd.integrate_orbit(
                cellular256, (0.25, 0.1), step=step, t_max=1.6, interp=cellular_interp
            )
            vals = phi_itp(orbit.samples)[:, 0]
            drifts[step] = np.abs(vals - vals[orbit.seed_index]).max()
        assert drifts[4e-2] / drifts[2e-2] >= 8.0
        assert drifts[2e-2] / drifts[1e-2] >= 8.0


class TestSurvey:
    def test_shear_survey(self, torus64):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus64)
        survey = kd.survey_flow(q, n_seeds=16)
        assert survey.counts[TAG_STAGNATION] == 8
        assert survey.counts[TAG_UNBOUNDED_PERIODIC] == 8
        assert np.allclose(survey.global_period, [1.0, 0.0])
        assert survey.parallel_consistent

    def test_diagonal_survey_representative_sign(self, torus64):
        q = kd.sample_flow(kd.FlowSpec("diagonal"), torus64)
        survey = kd.survey_flow(q, n_seeds=16)
        assert survey.global_period[0] > 0
        assert np.isclose(survey.global_period[0], survey.global_period[1])

    def test_cellular_survey_no_unbounded(self, torus64):
        q = kd.sample_flow(kd.FlowSpec("cellular"), torus64)
        survey = kd.survey_flow(q, n_seeds=16)
        assert TAG_UNBOUNDED_PERIODIC not in survey.counts
        assert TAG_UNBOUNDED_NONPERIODIC not in survey.counts
        assert survey.global_period is None

    def test_survey_needs_four_seeds(self, torus64):
        q = kd.sample_flow(kd.FlowSpec("shear"), torus64)
        with pytest.raises(kd.InputError):
            kd.survey_flow(q, n_seeds=2)

    def test_zero_flow_survey_all_stagnation(self, torus32):
        q = kd.sample_flow(kd.FlowSpec("zero"), torus32)
        survey = kd.survey_flow(q, n_seeds=4)
        assert survey.counts == {TAG_STAGNATION: 4}

    def test_all_undetermined_raises_inconclusive(self, torus64):
        # a budget too short for any verdict on a stagnation-free seed set
        q = kd.sample_flow(kd.FlowSpec("diagonal"), torus64)
        seeds_offset_from_stagnation = 4
        with pytest.raises(kd.InconclusiveSurveyError) as err:
            kd.survey_flow(q, n_seeds=seeds_offset_from_stagnation, t_max=0.05)
        assert "Undetermined" in str(err.value)
        assert err.value.diagnostics["n_seeds"] == 4
