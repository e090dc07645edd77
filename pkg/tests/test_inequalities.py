import numpy as np
import pytest

from sdcontrol.errors import RegimeError, SingularSystemError
from sdcontrol.forward_solver import Coefficients, OmegaRegion
from sdcontrol.inequalities import (SourcePair, SweepSettings, carleman_ratio_study,
                                    carleman_terms, h_sweep, mesh_size_from_h,
                                    observability_sample, solve_w_equation)
from sdcontrol.mesh import build_mesh
from sdcontrol.noise_tree import AdaptedField, build_tree
from sdcontrol.weights import WeightParams, build_weights, delta_schedule, schedule_h1


def mild_weights(**overrides):
    # small factors keep raw exp(2*s*phi) representable for the hand oracle
    kwargs = dict(T=1.0, lam=1.1, mu=1.01, delta=0.45, x0=0.5, K=0.5)
    kwargs.update(overrides)
    return build_weights(WeightParams(**kwargs))


def scheduled_weights(mesh, lam=2.0, mu=1.2, delta0=0.25, eps0=1.0, T=1.0):
    h1 = schedule_h1(lam, eps0, delta0, T)
    return build_weights(WeightParams(T=T, lam=lam, mu=mu,
                                      delta=delta_schedule(mesh.h, h1, delta0), x0=0.5))


class TestSourceSolve:
    def test_zero_sources_zero_solution(self):
        mesh = build_mesh(5)
        tree = build_tree(4, 1.0)
        sources = SourcePair(f=AdaptedField.zeros(tree, mesh, tree.depth),
                             g=AdaptedField.zeros(tree, mesh, tree.depth))
        w = solve_w_equation(sources, tree, mesh)
        for arr in w.levels:
            np.testing.assert_array_equal(arr, 0.0)

    def test_exactly_singular_step_raises(self):
        # N=2, T=1, depth 9: dt equals the reciprocal of the lowest
        # second-difference eigenvalue, so I + dt*D2 is singular
        mesh = build_mesh(2)
        tree = build_tree(9, 1.0)
        sources = SourcePair(f=AdaptedField.zeros(tree, mesh, tree.depth),
                             g=AdaptedField.zeros(tree, mesh, tree.depth))
        with pytest.raises(SingularSystemError):
            solve_w_equation(sources, tree, mesh, w0=np.ones(mesh.N))

    def test_one_step_oracle(self):
        mesh = build_mesh(3)
        tree = build_tree(1, 0.5)
        rng = np.random.default_rng(0)
        f0 = rng.standard_normal((1, mesh.N))
        g0 = rng.standard_normal((1, mesh.N))
        sources = SourcePair(f=AdaptedField(tree, mesh, [f0]),
                             g=AdaptedField(tree, mesh, [g0]))
        w = solve_w_equation(sources, tree, mesh)
        lap = (np.diag(np.full(mesh.N - 1, 1.0), -1) - 2 * np.eye(mesh.N)
               + np.diag(np.full(mesh.N - 1, 1.0), 1)) / mesh.h**2
        mat = np.eye(mesh.N) + tree.dt * lap
        root = np.sqrt(tree.dt)
        np.testing.assert_allclose(
            w.levels[1][0], np.linalg.solve(mat, (tree.dt * f0 - root * g0)[0]), rtol=1e-12)
        np.testing.assert_allclose(
            w.levels[1][1], np.linalg.solve(mat, (tree.dt * f0 + root * g0)[0]), rtol=1e-12)


class TestCarlemanTerms:
    def _zero_case(self):
        mesh = build_mesh(4)
        tree = build_tree(2, 1.0)
        region = OmegaRegion(mesh, (0.3, 0.7))
        sources = SourcePair(f=AdaptedField.zeros(tree, mesh, tree.depth),
                             g=AdaptedField.zeros(tree, mesh, tree.depth))
        w = solve_w_equation(sources, tree, mesh)
        return w, sources, mild_weights(), tree, mesh, region

    def test_zero_solution_zero_terms(self):
        terms = carleman_terms(*self._zero_case())
        assert terms.lhs_total == 0.0
        assert terms.rhs_total == 0.0
        assert terms.ratio == 0.0

    def test_regime_rejection_carries_ratio(self):
        mesh = build_mesh(2)
        tree = build_tree(2, 1.0)
        region = OmegaRegion(mesh, (0.2, 0.8))
        weights = build_weights(WeightParams(T=1.0, lam=4.0, mu=1.2, delta=0.25, x0=0.5))
        sources = SourcePair(f=AdaptedField.zeros(tree, mesh, tree.depth),
                             g=AdaptedField.zeros(tree, mesh, tree.depth))
        w = solve_w_equation(sources, tree, mesh)
        with pytest.raises(RegimeError) as err:
            carleman_terms(w, sources, weights, tree, mesh, region)
        assert err.value.ratio == pytest.approx(4.0 / 3 / 0.25, rel=1e-12)

    def test_quadratic_homogeneity(self):
        mesh = build_mesh(5)
        tree = build_tree(3, 1.0)
        region = OmegaRegion(mesh, (0.3, 0.7))
        weights = mild_weights()
        rng = np.random.default_rng(1)
        sources = SourcePair.random(tree, mesh, rng)
        w = solve_w_equation(sources, tree, mesh)
        terms = carleman_terms(w, sources, weights, tree, mesh, region)

        doubled_sources = SourcePair(
            f=AdaptedField(tree, mesh, [2 * a for a in sources.f.levels]),
            g=AdaptedField(tree, mesh, [2 * a for a in sources.g.levels]))
        w2 = AdaptedField(tree, mesh, [2 * a for a in w.levels])
        terms2 = carleman_terms(w2, doubled_sources, weights, tree, mesh, region)
        for name, value in terms.all_terms().items():
            assert terms2.all_terms()[name] == pytest.approx(4 * value, rel=1e-12)
        assert terms2.ratio == pytest.approx(terms.ratio, rel=1e-12)

    def test_nonnegativity_of_every_term(self):
        mesh = build_mesh(6)
        tree = build_tree(3, 1.0)
        region = OmegaRegion(mesh, (0.3, 0.7))
        weights = mild_weights()
        rng = np.random.default_rng(2)
        for _ in range(10):
            sources = SourcePair.random(tree, mesh, rng)
            w = solve_w_equation(sources, tree, mesh)
            terms = carleman_terms(w, sources, weights, tree, mesh, region)
            for name, value in terms.all_terms().items():
                assert value >= 0.0, name

    def test_stationary_hand_quadrature(self):
        # time-constant state on two points and one step: every integral is
        # a short explicit sum, evaluated here independently with raw weights
        mesh = build_mesh(2)
        tree = build_tree(1, 1.0)
        region = OmegaRegion(mesh, (0.25, 0.75))
        weights = mild_weights()

        w_vec = np.array([1.0, -0.5])
        lap = (np.array([[-2.0, 1.0], [1.0, -2.0]]) / mesh.h**2)
        f_vec = lap @ w_vec
        sources = SourcePair(f=AdaptedField(tree, mesh, [f_vec[np.newaxis, :]]),
                             g=AdaptedField(tree, mesh, [np.zeros((1, mesh.N))]))
        w = solve_w_equation(sources, tree, mesh, w0=w_vec)
        np.testing.assert_allclose(w.levels[1], np.vstack([w_vec, w_vec]), rtol=1e-12)

        terms = carleman_terms(w, sources, weights, tree, mesh, region)
        shift = np.exp(-2.0 * terms.log_shift)

        x_int = mesh.interior
        x_star = np.array([1 / 6, 1 / 2, 5 / 6])
        s0, sT = weights.s(0.0), weights.s(1.0)
        grad = np.diff(np.concatenate([[0.0], w_vec, [0.0]])) / mesh.h

        lhs_state = 1.0 * s0**3 * mesh.h * (np.exp(2 * s0 * weights.phi(x_int)) * w_vec**2).sum()
        lhs_grad = 1.0 * s0 * mesh.h * (np.exp(2 * s0 * weights.phi(x_star)) * grad**2).sum()
        rhs_window = 1.0 * s0**3 * mesh.h * (
            region.indicator * np.exp(2 * s0 * weights.phi(x_int)) * w_vec**2).sum()
        rhs_drift = 1.0 * mesh.h * (np.exp(2 * s0 * weights.phi(x_int)) * f_vec**2).sum()
        rhs_t0 = mesh.h * (np.exp(2 * s0 * weights.phi(x_int)) * w_vec**2).sum() / mesh.h**2
        rhs_tT = mesh.h * (np.exp(2 * sT * weights.phi(x_int)) * w_vec**2).sum() / mesh.h**2

        assert terms.lhs_state == pytest.approx(shift * lhs_state, rel=1e-12)
        assert terms.lhs_gradient == pytest.approx(shift * lhs_grad, rel=1e-12)
        assert terms.rhs_window == pytest.approx(shift * rhs_window, rel=1e-12)
        assert terms.rhs_drift == pytest.approx(shift * rhs_drift, rel=1e-12)
        assert terms.rhs_diffusion == 0.0
        assert terms.rhs_initial == pytest.approx(shift * rhs_t0, rel=1e-12)
        assert terms.rhs_terminal == pytest.approx(shift * rhs_tT, rel=1e-12)
        assert np.isfinite(terms.ratio)

    def test_ratio_study_finite_and_stable(self):
        rng = np.random.default_rng(3)
        maxima = []
        for N in (8, 17):
            mesh = build_mesh(N)
            tree = build_tree(6, 1.0)
            region = OmegaRegion(mesh, (0.3, 0.7))
            weights = scheduled_weights(mesh)
            ratios = carleman_ratio_study(weights, tree, mesh, region, rng, 20)
            assert np.isfinite(ratios).all()
            maxima.append(ratios.max())
        assert max(maxima) <= 5.0 * min(maxima)


class TestObservability:
    def _setup(self, N=8, depth=5, omega=(0.3, 0.7), a2=0.5, seed=0):
        mesh = build_mesh(N)
        tree = build_tree(depth, 1.0)
        region = OmegaRegion(mesh, omega)
        coeffs = Coefficients.constant(tree, mesh, 0.5, a2)
        weights = scheduled_weights(mesh)
        rng = np.random.default_rng(seed)
        return mesh, tree, region, coeffs, weights, rng

    def test_zero_sample_excluded(self):
        mesh, tree, region, coeffs, weights, rng = self._setup()
        leaves = tree.num_nodes(tree.depth)
        data = [np.zeros((leaves, mesh.N))] + [rng.standard_normal((leaves, mesh.N))
                                               for _ in range(3)]
        fit = observability_sample(coeffs, weights, tree, mesh, region, rng,
                                   2, 2, 1.0, terminal_data=data)
        assert fit.excluded == 1
        assert fit.samples == 4

    def test_ratio_invariant_under_scaling(self):
        mesh, tree, region, coeffs, weights, rng = self._setup()
        leaves = tree.num_nodes(tree.depth)
        zT = rng.standard_normal((leaves, mesh.N))
        fit = observability_sample(coeffs, weights, tree, mesh, region, rng,
                                   1, 1, 1.0, terminal_data=[zT, 7.0 * zT])
        ratio_a = fit.train_ratios[0]
        ratio_b = fit.holdout_ratios[0]
        assert abs(ratio_a - ratio_b) <= 1e-13 * max(ratio_a, 1e-30)

    def test_deterministic_suboracle_full_window(self):
        # deterministic terminal data with no diffusion coupling: the
        # martingale component vanishes and the bound reduces to a
        # deterministic observability check with a finite constant
        mesh, tree, region, coeffs, weights, rng = self._setup(
            omega=(0.0, 1.0), a2=0.0)
        leaves = tree.num_nodes(tree.depth)
        zT = np.tile(np.sin(np.pi * mesh.interior), (leaves, 1))
        fit = observability_sample(coeffs, weights, tree, mesh, region, rng,
                                   1, 1, 1.0, terminal_data=[zT, 2.0 * zT])
        assert fit.rhs_terms["diffusion"][0] <= 1e-20
        assert np.isfinite(fit.fitted_C) and fit.fitted_C > 0

    def test_holdout_no_violations_small_sample(self):
        mesh, tree, region, coeffs, weights, rng = self._setup(seed=4)
        fit = observability_sample(coeffs, weights, tree, mesh, region, rng, 50, 50, 1.0)
        assert fit.holdout_violations == 0
        assert fit.fitted_C > 0
        assert fit.bound_C == pytest.approx(2.0 * fit.fitted_C)

    def test_h_scaled_variant_scales_terminal_group(self):
        mesh, tree, region, coeffs, weights, rng = self._setup(seed=5)
        leaves = tree.num_nodes(tree.depth)
        data = [rng.standard_normal((leaves, mesh.N)) for _ in range(2)]
        plain = observability_sample(coeffs, weights, tree, mesh, region,
                                     np.random.default_rng(0), 1, 1, 1.0,
                                     terminal_data=data)
        scaled = observability_sample(coeffs, weights, tree, mesh, region,
                                      np.random.default_rng(0), 1, 1, 1.0,
                                      terminal_data=data, terminal_h_scaling=True)
        np.testing.assert_allclose(scaled.rhs_terms["terminal"],
                                   plain.rhs_terms["terminal"] / mesh.h**2, rtol=1e-12)

    def test_regime_must_hold(self):
        mesh = build_mesh(2)
        tree = build_tree(3, 1.0)
        region = OmegaRegion(mesh, (0.2, 0.8))
        coeffs = Coefficients.zero(tree, mesh)
        weights = build_weights(WeightParams(T=1.0, lam=4.0, mu=1.2, delta=0.25, x0=0.5))
        with pytest.raises(RegimeError):
            observability_sample(coeffs, weights, tree, mesh, region,
                                 np.random.default_rng(0), 2, 2, 1.0)


class TestSweep:
    def _settings(self, h_values):
        return SweepSettings(
            h_values=h_values, depth=4, T=1.0, lam=2.0, mu=1.2, delta0=0.25,
            eps0=1.0, x0=0.5, K=2.0, omega=(0.3, 0.7), omega0=(0.4, 0.6),
            c_eps=1.0,
            coeff_factory=lambda tree, mesh, rng: Coefficients.constant(tree, mesh, 0.5, 0.5),
            y0_factory=lambda mesh: np.sin(np.pi * mesh.interior),
            seed=7, cg_maxiter=4000, obs_train=8, obs_holdout=8,
        )

    def test_single_h_single_row(self):
        rows = h_sweep(self._settings([1 / 8]))
        assert len(rows) == 1
        assert not rows[0].skipped
        assert rows[0].N == 7
        assert rows[0].delta == pytest.approx(0.25)

    def test_three_point_sweep_monotone(self):
        rows = h_sweep(self._settings([1 / 8, 1 / 10, 1 / 12]))
        ratios = [r.term_ratio for r in rows]
        assert all(not r.skipped for r in rows)
        assert all(ratios[i + 1] <= ratios[i] for i in range(len(ratios) - 1))
        inv_h = np.array([1 / r.h for r in rows])
        slope = np.polyfit(inv_h, np.log(ratios), 1)[0]
        assert slope < 0

    def test_out_of_schedule_h_is_skipped_with_reason(self):
        rows = h_sweep(self._settings([0.25, 1 / 8]))
        assert rows[0].skipped and "h1" in rows[0].reason
        assert not rows[1].skipped

    def test_non_mesh_h_skipped(self):
        rows = h_sweep(self._settings([0.11]))
        assert rows[0].skipped

    def test_mesh_size_from_h(self):
        assert mesh_size_from_h(1 / 8) == 7
        assert mesh_size_from_h(1 / 20) == 19
        with pytest.raises(Exception):
            mesh_size_from_h(0.11)
