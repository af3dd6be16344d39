"""Tests for Newton, implicit Euler and the Elder runs."""

from dataclasses import replace

import numpy as np
import pytest

from tests.conftest import hrl_document
from utils.exceptions import ConfigError, MaxStepsExceeded, NewtonDiverged
from utils.fv_discretization import DofState, FluxStencil, residual, solute_content
from utils.model import SECONDS_PER_YEAR, load_scenario, scenario_from_dict
from utils.run_monitor import STEP_COLUMNS, PhaseTimer, StepLog
from utils.timestepping import (
    ELDER_SNAPSHOT_YEARS,
    advance_to_steady,
    equilibrium_state,
    initial_state,
    newton_solve,
    perturb,
    run_elder,
)


@pytest.fixture
def perturbed_box():
    return scenario_from_dict(hrl_document("hrl-perturbed", initial="diffusive-steady+perturbation"))


def decoupled_stencil(scenario):
    return FluxStencil.build(scenario.build_mesh(), scenario.params, scenario.bc, gravity=False)


class TestNewton:
    def test_linear_system_converges_in_one_iteration(self, homogeneous):
        s = decoupled_stencil(homogeneous)
        x, stats = newton_solve(np.zeros(s.layout.size), None, None, s)
        assert stats.iterations == 1
        assert np.max(np.abs(residual(x, None, None, s)[s.layout.W])) < 1e-18

    def test_implicit_step_keeps_equilibrium(self, homogeneous):
        s = FluxStencil.build(homogeneous.build_mesh(), homogeneous.params, homogeneous.bc)
        eq = equilibrium_state(homogeneous, s)
        x, _ = newton_solve(eq, eq, 1e9, s)
        assert np.allclose(x[s.layout.W], eq[s.layout.W], atol=1e-12)

    @pytest.mark.parametrize("dt", [0.0, -1.0])
    def test_rejects_non_positive_step(self, homogeneous, dt):
        s = decoupled_stencil(homogeneous)
        x = np.zeros(s.layout.size)
        with pytest.raises(ConfigError):
            newton_solve(x, x, dt, s)

    def test_iteration_cap(self, homogeneous):
        s = decoupled_stencil(homogeneous)
        with pytest.raises(NewtonDiverged):
            newton_solve(np.zeros(s.layout.size), None, None, s, max_iter=0)

    def test_timer_records_phases(self, homogeneous):
        s = decoupled_stencil(homogeneous)
        timer = PhaseTimer()
        newton_solve(np.zeros(s.layout.size), None, None, s, timer=timer)
        assert timer.counts["assembly"] == 2
        assert timer.counts["lu"] == 2


class TestInitialState:
    def test_perturbation_is_seeded_and_spares_dirichlet_cells(self, homogeneous):
        s = decoupled_stencil(homogeneous)
        x = np.zeros(s.layout.size)
        a = perturb(x, s, 1e-4, seed=3)
        b = perturb(x, s, 1e-4, seed=3)
        assert np.array_equal(a, b)
        assert np.all(a[s.layout.W][s.dirichlet_transport_cells()] == 0.0)
        assert 0 < np.max(np.abs(a[s.layout.W])) <= 1e-4
        assert np.array_equal(a[s.layout.P], x[s.layout.P])

    def test_zero_solute(self, homogeneous):
        scenario = replace(homogeneous, initial="zero-solute")
        s = decoupled_stencil(scenario)
        x, x_eq = initial_state(scenario, s)
        assert not np.any(x)
        assert not np.any(x_eq)

    def test_perturbed_start(self, perturbed_box):
        s = FluxStencil.build(perturbed_box.build_mesh(), perturbed_box.params, perturbed_box.bc)
        x, x_eq = initial_state(perturbed_box, s)
        diff = x[s.layout.W] - x_eq[s.layout.W]
        assert 0 < np.max(np.abs(diff)) <= 1e-3 * 0.1


class TestAdvance:
    def test_stable_box_returns_to_rest(self, perturbed_box):
        log = StepLog()
        state, diag = advance_to_steady(perturbed_box, until="steady", step_log=log)
        assert state.stop_reason == "steady"
        assert state.sherwood_history[-1] == pytest.approx(1.0, abs=1e-2)
        assert diag.perturbation_max[-1] < diag.perturbation_max[0]
        assert diag.rayleigh == pytest.approx(6.2427, rel=1e-4)
        frame = log.to_frame()
        assert list(frame.columns) == STEP_COLUMNS
        assert len(frame) == state.steps
        assert frame["dt"].is_monotonic_increasing

    def test_end_time(self, homogeneous):
        state, diag = advance_to_steady(homogeneous, until=1e9)
        assert state.stop_reason == "end_time"
        assert state.t == pytest.approx(1e9)
        assert diag.times[-1] == pytest.approx(1e9)

    def test_snapshots_clip_steps(self, homogeneous):
        scenario = replace(homogeneous, run=replace(homogeneous.run, snapshots=(3e8, 6e8)))
        seen = []
        state, _ = advance_to_steady(scenario, until=1e9, on_snapshot=lambda t, s: seen.append(t))
        assert seen == [3e8, 6e8]
        assert set(state.snapshots) == {3e8, 6e8}

    def test_projection_series(self, perturbed_box):
        mesh = perturbed_box.build_mesh()
        basis = np.ones((mesh.num_cells, 1))
        _, diag = advance_to_steady(perturbed_box, until=1e9, projection=basis)
        assert len(diag.projections) == len(diag.times)

    def test_implicit_euler_is_first_order(self):
        filling = scenario_from_dict(hrl_document("hrl-filling", initial="zero-solute"))
        T_diff = filling.diffusive_time
        t_end = 0.2 * T_diff

        def solve(n_steps):
            run = replace(filling.run, dt0=t_end / n_steps, fixed_dt=True, steady=False,
                          t_end=t_end, snapshots=())
            state, _ = advance_to_steady(replace(filling, run=run))
            assert state.t == pytest.approx(t_end)
            return state.state.W

        W8, W16, W32 = solve(8), solve(16), solve(32)
        coarse = np.max(np.abs(W8 - W16))
        fine = np.max(np.abs(W16 - W32))
        assert coarse / fine == pytest.approx(2.0, rel=0.25)

    def test_step_budget(self, perturbed_box):
        scenario = replace(perturbed_box, run=replace(perturbed_box.run, max_steps=2))
        with pytest.raises(MaxStepsExceeded):
            advance_to_steady(scenario, until="steady")

    def test_needs_a_target(self, homogeneous):
        scenario = replace(homogeneous, run=replace(homogeneous.run, steady=False, t_end=None))
        with pytest.raises(ConfigError):
            advance_to_steady(scenario)

    @pytest.mark.slow
    def test_circuit_convects(self, circuit):
        state, _ = advance_to_steady(replace(circuit, initial="diffusive-steady+perturbation"),
                                     until="convection")
        assert state.stop_reason == "convection"
        assert state.sherwood_history[-1] > 1.0


@pytest.fixture(scope="module")
def elder_fill():
    log = StepLog()
    state, diag = run_elder(2, gravity=False, step_log=log)
    return state, diag, log


class TestElder:
    def test_diffusive_fill(self, elder_fill):
        state, diag, _ = elder_fill
        assert state.stop_reason == "end_time"
        assert state.t == pytest.approx(20 * SECONDS_PER_YEAR)
        years = sorted(t / SECONDS_PER_YEAR for t in state.snapshots)
        assert years == pytest.approx(list(ELDER_SNAPSHOT_YEARS))
        contents = []
        for t in sorted(state.snapshots):
            W = state.snapshots[t].W
            assert W.min() >= -1e-12
            assert W.max() <= 1.0 + 1e-12
            contents.append(W.sum())
        assert np.all(np.diff(contents) > 0)
        assert diag.rayleigh == 0.0

    def test_diffusive_fill_is_mirror_symmetric(self, elder_fill):
        state, _, _ = elder_fill
        mesh = load_scenario("elder-nogravity").with_resolution((8, 4)).build_mesh()
        centers = np.round(mesh.cell_centers, 6)
        order = np.lexsort((centers[:, 0], centers[:, 1]))
        mirrored = np.lexsort((600.0 - centers[:, 0], centers[:, 1]))
        for snap in state.snapshots.values():
            assert snap.W.size == mesh.num_cells
            assert np.max(np.abs(snap.W[order] - snap.W[mirrored])) < 1e-10

    def test_solute_balance_holds_every_step(self, elder_fill):
        state, _, log = elder_fill
        frame = log.to_frame()
        assert len(frame) == state.steps
        assert frame["solute_balance"].max() < 1e-8

    def test_projects_with_the_level_grid_stencil(self):
        scenario = load_scenario("elder-nogravity").with_resolution((8, 4))
        stencil = FluxStencil.build(scenario.build_mesh(), scenario.params, scenario.bc)
        basis = np.eye(stencil.layout.num_cells)[:, :2]
        sizes = []
        state, diag = run_elder(2, dt=SECONDS_PER_YEAR, scenario=scenario, gravity=False,
                                stencil=stencil, projection=basis,
                                on_snapshot=lambda t, snap: sizes.append(snap.W.size))
        assert len(diag.projections) == state.steps
        assert all(alpha.shape == (2,) for alpha in diag.projections)
        assert sizes == [stencil.mesh.num_cells] * 4

    def test_rejects_a_stencil_from_another_grid(self):
        scenario = load_scenario("elder-nogravity")
        coarse = scenario.with_resolution((16, 8))
        stencil = FluxStencil.build(coarse.build_mesh(), coarse.params, coarse.bc)
        with pytest.raises(ConfigError, match="does not match"):
            run_elder(2, scenario=scenario, gravity=False, stencil=stencil)

    def test_level_too_coarse(self):
        with pytest.raises(ConfigError):
            run_elder(1)

    @pytest.mark.slow
    def test_convection_at_level_four(self):
        state, _ = run_elder(4)
        assert np.nanmax(state.sherwood_history) > 1.0
        assert len(state.snapshots) == 4
        # Mirror symmetry about x = 300 m
        mesh = load_scenario("elder").with_resolution((32, 16)).build_mesh()
        bulk = mesh.level_slice(0)
        centers = np.round(mesh.cell_centers[bulk], 6)
        order = np.lexsort((centers[:, 0], centers[:, 1]))
        mirrored = np.lexsort((600.0 - centers[:, 0], centers[:, 1]))
        W = state.snapshots[max(state.snapshots)].W[bulk]
        assert np.max(np.abs(W[order] - W[mirrored])) < 1e-6


def test_solute_content_at_equilibrium(homogeneous):
    s = FluxStencil.build(homogeneous.build_mesh(), homogeneous.params, homogeneous.bc)
    state = DofState.from_vector(equilibrium_state(homogeneous, s), s.layout)
    assert solute_content(state, s) == pytest.approx(10.0)
