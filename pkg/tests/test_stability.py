"""Tests for the linearization, Krylov-Schur and mode classification."""

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from utils.diagnostics import fit_growth_rate, perturbation_norms
from utils.exceptions import AnalysisError, ConfigError, CountMismatch, NoConvergence, NotAnEquilibrium
from utils.fv_discretization import FluxStencil
from utils.model import load_scenario
from utils.stability import (
    INTERFRACTURE,
    INTRAFRACTURE,
    MATRIX,
    UNCLASSIFIED,
    EigenResult,
    _restart_basis,
    _restart_size,
    apply_S,
    assess_stability,
    classify_energies,
    critical_rayleigh,
    dense_S,
    grid_check,
    grid_error,
    krylov_schur,
    krylov_schur_operator,
    linearize_at,
    start_vector,
)
from utils.timestepping import equilibrium_state, newton_solve


def blocks_of(scenario):
    stencil = FluxStencil.build(scenario.build_mesh(), scenario.params, scenario.bc)
    x_eq = equilibrium_state(scenario, stencil)
    return linearize_at(x_eq, stencil, time_scale=scenario.diffusive_time), stencil, x_eq


def known_spectrum_operator(n=80, seed=0):
    """Non-normal operator with eigenvalues 5, 3 +- 2i, 1 and the rest in [-60, -2]."""
    rng = np.random.default_rng(seed)
    D = np.zeros((n, n))
    D[0, 0] = 5.0
    D[1:3, 1:3] = [[3.0, 2.0], [-2.0, 3.0]]
    D[3, 3] = 1.0
    D[np.arange(4, n), np.arange(4, n)] = -np.linspace(2.0, 60.0, n - 4)
    Q = np.eye(n) + 0.02 * rng.standard_normal((n, n))
    return Q @ D @ np.linalg.inv(Q)


def random_sparse_operator(seed, n=100):
    """
    (apply, mass, S) for S = M^-1 A with A = M B and B sparse: diagonal 10 - 5i
    plus three off-diagonal entries per row below 0.5 in magnitude, so the
    Gershgorin discs are disjoint and every eigenvalue is real and simple.
    """
    rng = np.random.default_rng(seed)
    rows = np.repeat(np.arange(n), 3)
    cols = np.concatenate([rng.choice(np.delete(np.arange(n), i), 3, replace=False) for i in range(n)])
    B = sp.coo_matrix((rng.uniform(-0.5, 0.5, rows.size), (rows, cols)), shape=(n, n))
    B = (B + sp.diags(10.0 - 5.0 * np.arange(n))).tocsr()
    mass = rng.uniform(0.5, 2.0, n)
    A = sp.diags(mass) @ B
    return (lambda v: (A @ v) / mass), mass, B.toarray()


def diffusion_oracle(cells):
    """Slowest decay rate of cell-centred 1D diffusion with half-cell Dirichlet ends, in 1/T_diff."""
    T = -2.0 * np.eye(cells) + np.eye(cells, k=1) + np.eye(cells, k=-1)
    T[0, 0] = T[-1, -1] = -3.0
    return float(np.max(np.linalg.eigvalsh(T))) * cells ** 2


class TestOperator:
    def test_apply_matches_dense_columns(self, single_fracture):
        blocks, _, _ = blocks_of(single_fracture)
        S = dense_S(blocks)
        v = np.random.default_rng(2).standard_normal(blocks.size)
        assert np.allclose(apply_S(blocks, v), S @ v, rtol=1e-9, atol=1e-9 * np.abs(S).max())

    def test_complex_vectors(self, homogeneous):
        blocks, _, _ = blocks_of(homogeneous)
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal(blocks.size), rng.standard_normal(blocks.size)
        out = apply_S(blocks, a + 1j * b)
        assert np.allclose(out.real, apply_S(blocks, a))
        assert np.allclose(out.imag, apply_S(blocks, b))

    def test_counts_products(self, homogeneous):
        blocks, _, _ = blocks_of(homogeneous)
        blocks.matvecs = 0
        apply_S(blocks, np.ones(blocks.size))
        apply_S(blocks, np.ones((blocks.size, 3)))
        assert blocks.matvecs == 4

    def test_rejects_non_steady_state(self, homogeneous):
        stencil = FluxStencil.build(homogeneous.build_mesh(), homogeneous.params, homogeneous.bc)
        x = equilibrium_state(homogeneous, stencil).copy()
        x[stencil.layout.W] += 1e-3
        with pytest.raises(NotAnEquilibrium):
            linearize_at(x, stencil)

    def test_start_vector(self, homogeneous):
        stencil = FluxStencil.build(homogeneous.build_mesh(), homogeneous.params, homogeneous.bc)
        v = start_vector(stencil, seed=5)
        assert np.all(v[stencil.dirichlet_transport_cells()] == 0.0)
        assert np.dot(v, stencil.mass * v) == pytest.approx(1.0)
        assert np.array_equal(v, start_vector(stencil, seed=5))


class TestKrylovSchur:
    def test_known_spectrum(self):
        A = known_spectrum_operator()
        mass = np.random.default_rng(1).uniform(1.0, 2.0, A.shape[0])
        result = krylov_schur_operator(lambda v: A @ v, mass, k=4, m=30, tol=1e-8)
        assert result.converged
        assert np.allclose(result.eigenvalues, [5.0, 3.0 + 2.0j, 3.0 - 2.0j, 1.0], atol=1e-6)
        assert np.all(result.errors <= 1e-8)
        for i in range(4):
            x = result.eigenvectors[:, i]
            assert np.real(np.vdot(x, mass * x)) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_eig_on_random_sparse_operators(self, seed):
        apply, mass, S = random_sparse_operator(seed)
        expected = la.eigvals(S)
        expected = expected[np.argsort(-expected.real)][:4]
        result = krylov_schur_operator(apply, mass, k=4, m=30, tol=1e-10, seed=seed)
        assert result.converged
        assert np.allclose(np.imag(result.eigenvalues), 0.0, atol=1e-8)
        assert np.allclose(np.real(result.eigenvalues), expected.real, rtol=1e-8, atol=1e-8)
        for i in range(4):
            x = result.eigenvectors[:, i]
            assert np.real(np.vdot(x, mass * x)) == pytest.approx(1.0)

    def test_matches_dense_eig_on_homogeneous_box(self, homogeneous):
        blocks, _, _ = blocks_of(homogeneous)
        expected = np.linalg.eigvals(dense_S(blocks))
        expected = expected[np.argsort(-expected.real)][:3]
        result = krylov_schur(blocks, k=3, m=24, tol=1e-8)
        assert np.allclose(np.real(result.eigenvalues), expected.real, rtol=1e-6)

    def test_homogeneous_leading_mode_is_vertical_diffusion(self, homogeneous):
        result = assess_stability(homogeneous, tol=1e-8).result
        oracle = diffusion_oracle(8)
        assert np.real(result.leading) == pytest.approx(oracle, rel=1e-6)
        assert np.real(result.leading) == pytest.approx(-np.pi ** 2, rel=0.05)
        assert not result.is_unstable

    def test_early_exit(self):
        A = known_spectrum_operator()
        result = krylov_schur_operator(lambda v: A @ v, np.ones(A.shape[0]), k=4, m=30,
                                       tol=1e-12, early_exit=True)
        assert result.early_exit
        assert np.real(result.leading) == pytest.approx(5.0, rel=1e-3)

    def test_budget_exhausted_keeps_partial_result(self):
        A = known_spectrum_operator()
        with pytest.raises(NoConvergence) as info:
            krylov_schur_operator(lambda v: A @ v, np.ones(A.shape[0]), k=2, m=6,
                                  tol=1e-14, max_matvecs=6)
        partial = info.value.partial
        assert partial is not None
        assert len(partial.eigenvalues) == 2
        assert not partial.converged

    @pytest.mark.parametrize("k,m", [(0, 10), (9, 10), (3, 200)])
    def test_invalid_sizes(self, k, m):
        n = 4 if m == 200 else 50
        with pytest.raises(ConfigError):
            krylov_schur_operator(lambda v: -v, np.ones(n), k=k, m=m)

    def test_zero_start_vector(self):
        with pytest.raises(ConfigError):
            krylov_schur_operator(lambda v: -v, np.ones(20), k=2, m=8, v0=np.zeros(20))


class TestRestart:
    def test_tied_cluster_is_kept_whole(self):
        values = np.array([5.0, 5.0, 5.0, 1.0, 0.0, -1.0], dtype=complex)
        keep = _restart_size(values, k=1, nconv=0, m=6)
        assert keep == 3
        schur, p = _restart_basis(np.diag(values.real), values, keep)
        assert p == 3
        assert np.allclose(np.diag(schur.T)[:3], 5.0)

    def test_leading_conjugate_pair_is_not_split(self):
        values = np.array([3 + 2j, 3 - 2j, 1.0, 0.0, -1.0, -2.0])
        H = np.diag([0.0, 0.0, 1.0, 0.0, -1.0, -2.0])
        H[:2, :2] = [[3.0, 2.0], [-2.0, 3.0]]
        keep = _restart_size(values, k=1, nconv=0, m=6)
        assert keep == 2
        schur, p = _restart_basis(H, values, keep)
        assert p == 2
        assert np.allclose(np.diag(schur.T)[:2], 3.0)
        assert schur.T[2, 1] == 0.0

    def test_fully_tied_spectrum_keeps_a_block(self):
        values = np.full(4, 2.0, dtype=complex)
        keep = _restart_size(values, k=1, nconv=0, m=4)
        assert keep == 3
        _, p = _restart_basis(2.0 * np.eye(4), values, keep)
        assert 0 < p < 4


class TestAssessment:
    def test_stable_box(self, homogeneous):
        analysis = assess_stability(homogeneous)
        assert analysis.verdict == "stable"
        assert analysis.result.labels == [MATRIX] * 3
        frame = analysis.result.to_frame()
        assert list(frame.columns) == ["index", "real", "imag", "error", "grid_error", "label"]
        assert frame["real"].is_monotonic_decreasing

    def test_unstable_box(self, unstable_box):
        assert assess_stability(unstable_box, classify=False).verdict == "unstable"

    def test_growth_rate_matches_leading_eigenvalue(self, unstable_box):
        analysis = assess_stability(unstable_box, k=1, tol=1e-8, classify=False)
        lam = float(np.real(analysis.result.leading))
        assert lam > 0
        stencil = analysis.stencil
        W = stencil.layout.W
        T_diff = unstable_box.diffusive_time
        omega_max = unstable_box.params.omega_max
        mode = np.real(analysis.result.eigenvectors[:, 0])
        W_eq = analysis.equilibrium[W]

        x = analysis.equilibrium.copy()
        x[W] += 1e-4 * omega_max * mode / np.max(np.abs(mode))
        dt = 0.01 * T_diff / lam
        times, norms = [0.0], [perturbation_norms(x[W], W_eq, stencil.mass)[0]]
        for step in range(1, 151):
            x, _ = newton_solve(x, x, dt, stencil)
            times.append(step * dt)
            norms.append(perturbation_norms(x[W], W_eq, stencil.mass)[0])
        assert norms[-1] > 4.0 * norms[0]
        rate = fit_growth_rate(times, norms, 0.01 * omega_max) * T_diff
        assert rate == pytest.approx(lam, rel=0.03)

    def test_closed_circuit_is_unstable(self, circuit):
        analysis = assess_stability(circuit, k=2)
        assert analysis.result.is_unstable
        assert np.real(analysis.result.leading) > 1.0

    def test_seed_reproducibility(self, homogeneous):
        a = assess_stability(homogeneous, classify=False, seed=7).result
        b = assess_stability(homogeneous, classify=False, seed=7).result
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert a.matvecs == b.matvecs

    def test_grid_check(self, homogeneous):
        analysis = assess_stability(homogeneous, classify=False)
        errors = grid_check(homogeneous, analysis)
        assert errors.shape == (3,)
        assert errors[0] < 0.1

    def test_critical_rayleigh(self, homogeneous):
        found = critical_rayleigh(homogeneous, bracket=(20.0, 80.0))
        assert found.rayleigh == pytest.approx(4 * np.pi ** 2, rel=0.15)
        assert len(found.history) == 8
        lo, hi = found.bracket
        assert lo <= found.rayleigh <= hi

    def test_critical_rayleigh_bad_bracket(self, homogeneous):
        with pytest.raises(AnalysisError):
            critical_rayleigh(homogeneous, bracket=(1.0, 5.0), max_solves=2)
        with pytest.raises(AnalysisError):
            critical_rayleigh(homogeneous, bracket=(5.0, 1.0))


class TestGridError:
    def result(self, values):
        values = np.asarray(values)
        return EigenResult(eigenvalues=values, eigenvectors=np.zeros((3, values.size)),
                           errors=np.zeros(values.size), matvecs=0, restarts=0)

    def test_relative_difference(self):
        errors = grid_error(self.result([-10.0, 2.0 + 1.0j]), self.result([-9.0, 2.0 - 1.0j]))
        assert errors == pytest.approx([0.1, 2.0 / np.sqrt(5.0)])

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            grid_error(self.result([1.0, 2.0]), self.result([1.0]))


class TestClassification:
    def test_matrix_dominated(self):
        assert classify_energies(10.0, [1.0, 2.0], 1.0, 0.1, 0.5) == MATRIX
        assert classify_energies(0.0, [], 0.0, 0.0, 0.0) == MATRIX

    def test_single_plane(self):
        assert classify_energies(0.1, [9.0, 1.0], circulation=2.0, exchange=0.5, coupling=0.2) == INTRAFRACTURE

    def test_coupled_planes(self):
        assert classify_energies(0.1, [5.0, 5.0], circulation=1.0, exchange=0.1, coupling=0.1) == INTERFRACTURE

    def test_weak_coupling(self):
        assert classify_energies(0.1, [5.0, 5.0], circulation=1.0, exchange=0.1, coupling=0.01) == UNCLASSIFIED

    def test_exchange_dominated_plane(self):
        # Dominant plane that mostly trades solute with the bulk
        assert classify_energies(0.1, [9.5, 0.5], circulation=0.1, exchange=1.0, coupling=0.0) == UNCLASSIFIED


@pytest.mark.slow
class TestCatalogModes:
    def test_horizontal_fractures_keep_diffusive_mode(self):
        result = assess_stability(load_scenario("hrl-A1"), k=2).result
        assert np.real(result.leading) == pytest.approx(-9.87, rel=0.02)

    def test_split_circuit_convects(self):
        analysis = assess_stability(load_scenario("hrl-D11"), k=2, early_exit=True)
        assert analysis.verdict == "unstable"
        assert analysis.result.labels[0] != MATRIX
