"""Principal eigenvalues, minimal speed search, convergence studies."""

import numpy as np
import pytest

import kppdrift as kd
from kppdrift.speed import SearchParams, _first_diff_matrices, assemble_operator


def homogeneous(cell, zeta_value=1.0):
    A = kd.TensorField.constant(cell, 1.0)
    q = kd.sample_flow(kd.FlowSpec("zero"), cell)
    zeta = kd.ScalarField.constant(cell, zeta_value)
    return A, q, zeta


class TestPrincipalEigenvalue:
    def test_homogeneous_curve_is_quadratic(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        for lam in (0.5, 1.0, 2.0):
            pt = kd.principal_eigenvalue(A, q, zeta, e1, lam=lam, drift=0.0)
            assert abs(pt.k - (lam**2 + 1.0)) < 1e-9
            assert pt.eigenvector_positivity > 0.999
        pt = kd.principal_eigenvalue(A, q, zeta, e1, lam=2.0, drift=0.0)
        assert abs(pt.ratio - 2.5) < 1e-9

    def test_bad_lambda_rejected(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        with pytest.raises(kd.InputError):
            kd.principal_eigenvalue(A, q, zeta, e1, lam=-1.0, drift=0.0)
        with pytest.raises(kd.InputError):
            kd.principal_eigenvalue(A, q, zeta, e1, lam=1.0, drift=-2.0)

    def test_shear_grid_convergence(self, e1):
        # Richardson check: k at n = 64 and 128 differ below 1%
        ks = {}
        for n in (64, 128):
            cell = kd.PeriodicCell("torus", 1.0, 1.0, n, n)
            A = kd.TensorField.constant(cell, 1.0)
            q = kd.sample_flow(kd.FlowSpec("shear"), cell)
            zeta = kd.ScalarField.constant(cell, 1.0)
            ks[n] = kd.principal_eigenvalue(A, q, zeta, e1, lam=1.0, drift=10.0).k
        assert abs(ks[64] - ks[128]) / abs(ks[128]) < 0.01

    def test_upwind_operator_is_metzler(self, torus32, e1):
        # upwinded drift keeps off-diagonal entries nonnegative at any Peclet
        A = kd.TensorField.constant(torus32, 1.0)
        q = kd.sample_flow(kd.FlowSpec("cellular"), torus32)
        zeta = kd.ScalarField.constant(torus32, 1.0)
        L = assemble_operator(A, q, zeta, e1, lam=0.5, drift=500.0, upwind=True)
        C = L.tocoo()
        off = C.data[C.row != C.col]
        assert off.min() >= -1e-12

    def test_upwind_consistency(self, e1):
        # upwind and centered drift agree to O(h) on smooth data
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 96, 96)
        A = kd.TensorField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), cell)
        zeta = kd.ScalarField.constant(cell, 1.0)
        X, Y = cell.mesh()
        psi = np.exp(np.sin(2 * np.pi * X)) * (1 + 0.3 * np.cos(2 * np.pi * Y))
        Lc = assemble_operator(A, q, zeta, e1, lam=1.0, drift=3.0, upwind=False)
        Lu = assemble_operator(A, q, zeta, e1, lam=1.0, drift=3.0, upwind=True)
        diff = np.abs((Lc - Lu) @ psi.ravel()).max()
        assert diff < 3.0 * 2 * np.pi * cell.h1 * 40  # O(h) * derivative scale

    def test_strip_geometry_supported(self, strip32):
        A, q, zeta = homogeneous(strip32)
        e = kd.Direction.of(1.0, 0.0, kind="strip")
        pt = kd.principal_eigenvalue(A, q, zeta, e, lam=1.0, drift=0.0)
        assert abs(pt.k - 2.0) < 1e-9

    def test_strip_shear_speed_with_drift(self, strip32):
        # wall-tangent channel profile: drift raises the speed above 2
        A = kd.TensorField.constant(strip32, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), strip32)
        zeta = kd.ScalarField.constant(strip32, 1.0)
        e = kd.Direction.of(1.0, 0.0, kind="strip")
        res = kd.minimal_speed(A, q, zeta, e, drift=4.0)
        assert res.c_star > 2.0
        assert all(p.eigenvector_positivity > -1e-12 for p in res.curve)


class TestMinimalSpeed:
    def test_homogeneous_speed(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        res = kd.minimal_speed(A, q, zeta, e1, drift=0.0)
        assert abs(res.c_star - 2.0) < 1e-6
        assert abs(res.lambda_star - 1.0) < 1e-3
        assert not res.upwind_used

    def test_zeta_monotonicity(self, torus32, e1):
        A, q, _ = homogeneous(torus32)
        c1 = kd.minimal_speed(A, q, kd.ScalarField.constant(torus32, 1.0), e1, 0.0).c_star
        c4 = kd.minimal_speed(A, q, kd.ScalarField.constant(torus32, 4.0), e1, 0.0).c_star
        assert abs(c1 - 2.0) < 1e-6
        assert abs(c4 - 4.0) < 1e-6
        assert c4 > c1

    def test_shear_drift_zero_reduces_to_homogeneous(self, torus32, e1):
        A = kd.TensorField.constant(torus32, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), torus32)
        zeta = kd.ScalarField.constant(torus32, 1.0)
        res = kd.minimal_speed(A, q, zeta, e1, drift=0.0)
        assert abs(res.c_star - 2.0) < 1e-6

    def test_anisotropic_constant_diffusion_exact(self, torus32):
        # constant A, q = 0: the constant eigenfunction gives
        # k = lam^2 (e.Ae) + zeta exactly, so c* = 2 sqrt(zeta e.Ae)
        A = kd.TensorField.constant(torus32, 2.0, 0.3, 1.0)
        q = kd.sample_flow(kd.FlowSpec("zero"), torus32)
        zeta = kd.ScalarField.constant(torus32, 1.0)
        for ex, ey in ((1.0, 0.0), (0.0, 1.0), (1 / np.sqrt(2), 1 / np.sqrt(2))):
            e = kd.Direction.of(ex, ey)
            eAe = 2.0 * ex**2 + 2 * 0.3 * ex * ey + 1.0 * ey**2
            res = kd.minimal_speed(A, q, zeta, e, drift=0.0)
            assert abs(res.c_star - 2.0 * np.sqrt(eAe)) < 1e-6, (ex, ey)

    def test_variable_coefficients_smoke(self, e1):
        # cosine-modulated diffusion and growth exercise the full assembly,
        # including the div(A e) zero-order term
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        X, Y = cell.mesh()
        mod = 1.0 + 0.3 * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)
        A = kd.TensorField.isotropic(cell, mod)
        zeta = kd.ScalarField(cell, 1.0 + 0.5 * np.cos(2 * np.pi * Y))
        q = kd.sample_flow(kd.FlowSpec("shear"), cell)
        res = kd.minimal_speed(A, q, zeta, e1, drift=2.0)
        # homogenization bounds: between the uniform-minimum and an
        # advection-boosted uniform-maximum speed
        assert 2.0 * np.sqrt(0.5 * 0.7) < res.c_star < 2.0 * np.sqrt(1.5 * 1.3) + 2.0
        assert all(p.eigenvector_positivity > -1e-12 for p in res.curve)

    def test_reversal_symmetry(self, e1):
        # q -> -q together with e -> -e leaves c* unchanged on the torus
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("cellular"), cell)
        c_fwd = kd.minimal_speed(A, q, zeta, e1, drift=3.0).c_star
        c_rev = kd.minimal_speed(
            A, q.scaled(-1.0), zeta, kd.Direction.of(-1.0, 0.0), drift=3.0
        ).c_star
        assert abs(c_fwd - c_rev) / c_fwd < 1e-6

    def test_envelope_bound(self, e1):
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), cell)
        for M in (1.0, 8.0):
            res = kd.minimal_speed(A, q, zeta, e1, drift=M)
            envelope = 1.0 + 2.0 / M  # |q.e| + 2 sqrt(alpha2 zeta)/M
            assert res.c_star / M <= envelope * 1.05

    def test_interior_minimum_certified(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        res = kd.minimal_speed(A, q, zeta, e1, drift=0.0)
        lams = [p.lam for p in res.curve]
        assert min(lams) < res.lambda_star < max(lams)

    def test_positivity_at_every_accepted_point(self, e1):
        # the positive eigenfunction is the certificate per curve sample
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("cellular"), cell)
        res = kd.minimal_speed(A, q, zeta, e1, drift=8.0)
        assert all(p.eigenvector_positivity > -1e-12 for p in res.curve)

    def test_unbracketed_minimum_raises(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        bad = SearchParams(lambda_lo=5.0, lambda_hi=20.0, max_expand=0)
        with pytest.raises(kd.UnbracketedMinimumError):
            kd.minimal_speed(A, q, zeta, e1, drift=0.0, search=bad)

    def test_search_params_validation(self):
        with pytest.raises(kd.InputError):
            SearchParams(lambda_lo=2.0, lambda_hi=1.0)
        with pytest.raises(kd.InputError):
            SearchParams(rel_tol=0.0)


class TestConvergenceStudy:
    def test_m_list_validation(self, torus32, e1):
        A, q, zeta = homogeneous(torus32)
        with pytest.raises(kd.InputError):
            kd.convergence_study(A, q, zeta, e1, [4.0, 1.0])
        with pytest.raises(kd.InputError):
            kd.convergence_study(A, q, zeta, e1, [1.0])

    def test_shear_small_study(self, e1):
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), cell)
        rep = kd.convergence_study(A, q, zeta, e1, [1.0, 8.0, 64.0])
        assert not any(r.failed for r in rep.rows)
        assert rep.limit_value > 0.1
        gaps = [r.gap for r in rep.rows]
        assert gaps[0] > gaps[1] > gaps[2]
        ratios = [r.ratio for r in rep.rows]
        assert all(r <= env * 1.05 for r, env in zip(ratios, [row.envelope for row in rep.rows]))
        assert "limit=" in rep.verdict

    def test_shear_e2_decays_to_zero(self, e2):
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 32, 32)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("shear"), cell)
        rep = kd.convergence_study(A, q, zeta, e2, [1.0, 8.0, 64.0])
        assert rep.limit_value == 0.0
        assert rep.final_gap_ok
        assert rep.rows[-1].ratio < 0.05 * rep.rows[0].ratio

    def test_cellular_ratio_decays_toward_zero_limit(self, e1):
        # closed-orbit flow: c*(M)/M falls toward the zero limit
        cell = kd.PeriodicCell("torus", 1.0, 1.0, 48, 48)
        A = kd.TensorField.constant(cell, 1.0)
        zeta = kd.ScalarField.constant(cell, 1.0)
        q = kd.sample_flow(kd.FlowSpec("cellular"), cell)
        rep = kd.convergence_study(A, q, zeta, e1, [1.0, 8.0, 64.0, 256.0])
        assert rep.limit_value <= 1e-6 * q.max_norm()
        ratios = [r.ratio for r in rep.rows if not r.failed]
        assert ratios == sorted(ratios, reverse=True)
        assert rep.final_gap_ok
        assert ratios[-1] < 0.05 * ratios[0]


class TestUpwindDifferences:
    def test_strip_wall_rows_use_inward_differences(self, strip32):
        Fx, Bx, Fy, By = _first_diff_matrices(strip32)
        f = np.tile(strip32.y**2, (strip32.n1, 1)).ravel()
        top = (Fy @ f).reshape(strip32.shape)[:, -1]
        bot = (By @ f).reshape(strip32.shape)[:, 0]
        # derivative of y^2: 2y; one-sided first-order values at the walls
        assert np.allclose(top, 2.0 - strip32.h2, atol=1e-12)
        assert np.allclose(bot, strip32.h2, atol=1e-12)
