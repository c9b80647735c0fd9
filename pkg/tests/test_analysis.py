import json
import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from sieveflow.analysis import (
    SweepReport, SweepRow, bogovskii_witness, cell_components, decay_dominance, divergence_lift, end_flux, energy,
    energy_identity_residual, estimate_constants, estimate_poincare_constant, estimate_trace_constant,
    fit_power_law, flux, flux_profile, largest_generalized_eigenvalue, poiseuille_section_integral,
    pressure_mean_identity, pressure_split, run_sweep, trace_norm_sigma, uniform_bound, velocity_norms,
)
from sieveflow.analysis.constants import FunctionalConstants
from sieveflow.analysis.sweep import _LimitReference
from sieveflow.core.errors import ConfigurationError, EigenSolverError, FeasibilityError, PartialSweepError
from sieveflow.discretization import BCProfile, ConstantForce, assemble, build_space
from sieveflow.discretization.assembly import mass, unit_load
from sieveflow.geometry import LayoutStrategy, PerforationParams, generate_layout
from sieveflow.meshing import MeshResolution, Region, mesh_open_pipe, mesh_sieve_pipe, refine_mesh
from sieveflow.solve import SolverConfig, SolverMode, solve_limit_problems, solve_stationary
from skfem import LinearForm, asm


@pytest.fixture(scope="module")
def eps_state(eps_mesh):
    return solve_stationary(assemble(build_space(eps_mesh), 1.0, 0.0), SolverConfig())


@pytest.fixture(scope="module")
def forced_state(eps_mesh):
    system = assemble(build_space(eps_mesh), 1.0, 0.0, ConstantForce([0.5, -0.25]))
    return solve_stationary(system, SolverConfig())


_FIXED = ("epsilon", "r_eps", "n_holes", "flux", "trace", "iterations", "cells",
          "trace_const", "poincare_const", "bogovskii_lower")


def _row(epsilon, r_eps, flux_value, trace_value):
    zeros = {name: 0.0 for name in SweepRow.columns() if name not in _FIXED}
    return SweepRow(epsilon=epsilon, r_eps=r_eps, n_holes=4, flux=flux_value, trace=trace_value,
                    iterations=3, cells=100, **zeros)


# Flux and norms

def test_flux_through_end_sections(eps_state):
    system = eps_state.operators
    assert flux(eps_state, -2.0) == pytest.approx(system.inlet_flux(eps_state.u), rel=1e-10)
    assert flux(eps_state, 2.0) == pytest.approx(system.outlet_flux(eps_state.u), rel=1e-10)


def test_flux_profile_is_nearly_constant(eps_state):
    profile = flux_profile(eps_state)
    assert profile.stations == (-2.0, -1.0, 0.0, 1.0, 2.0)
    assert profile.reference == pytest.approx(eps_state.operators.outlet_flux(eps_state.u), rel=1e-10)
    assert profile.reference == end_flux(eps_state)
    assert profile.relative_spread() <= 0.02
    assert profile.to_dict()["spread"] == profile.spread


@pytest.fixture(scope="module")
def two_holes(pipe2d):
    return generate_layout(pipe2d, PerforationParams(0.5), LayoutStrategy.EXPLICIT, centers=[(-0.4,), (0.4,)])


@pytest.mark.slow
def test_flux_constancy_with_two_holes(two_holes):
    mesh = mesh_sieve_pipe(two_holes, MeshResolution().adapted_to(two_holes))
    spreads = []
    for m in (mesh, refine_mesh(mesh)):
        state = solve_stationary(assemble(build_space(m), 1.0, 0.0), SolverConfig())
        profile = flux_profile(state, np.linspace(-2.0, 2.0, 9))
        assert profile.reference == pytest.approx(state.operators.inlet_flux(state.u), rel=1e-8)
        spreads.append(profile.relative_spread())
    assert spreads[0] <= 0.01
    assert spreads[1] <= 0.003


def test_sieve_plane_flux_improves_with_rim_grading(two_holes, coarse):
    res = coarse.adapted_to(two_holes)
    spreads = []
    for rim in (1.0, 8.0):
        mesh = mesh_sieve_pipe(two_holes, replace(res, rim_refinement=rim))
        state = solve_stationary(assemble(build_space(mesh), 1.0, 0.0), SolverConfig(mode=SolverMode.STOKES))
        spreads.append(abs(flux(state, 0.0) / end_flux(state) - 1.0))
    assert spreads[1] < 0.5 * spreads[0]


def test_flux_station_outside_mesh(eps_state):
    with pytest.raises(ConfigurationError):
        flux(eps_state, 2.5)


def test_trace_norm(eps_state, open_mesh):
    assert trace_norm_sigma(eps_state) > 0.0
    state = solve_stationary(assemble(build_space(open_mesh), 1.0, 0.0), SolverConfig(mode=SolverMode.STOKES))
    # Poiseuille on the open section: ∫(1/8)²(1 − x²)² dx
    assert trace_norm_sigma(state) == pytest.approx(math.sqrt(16.0 / 15.0 / 64.0), rel=1e-6)


@pytest.mark.parametrize("fixture", ["eps_state", "forced_state"])
def test_energy_identity(request, fixture):
    state = request.getfixturevalue(fixture)
    assert abs(energy_identity_residual(state)) <= 1e-7 * max(1.0, energy(state) ** 2)


def test_region_norms_add_up(eps_state):
    minus = velocity_norms(eps_state, Region.MINUS)
    plus = velocity_norms(eps_state, Region.PLUS)
    whole = velocity_norms(eps_state)
    assert minus["h1_semi"] ** 2 + plus["h1_semi"] ** 2 == pytest.approx(whole["h1_semi"] ** 2)
    assert whole["h1_semi"] == pytest.approx(energy(eps_state))
    assert whole["h1"] >= whole["h1_semi"]


# Pressure

def test_pressure_split(eps_state):
    split = pressure_split(eps_state)
    assert split.minus.volume == pytest.approx(4.0)
    assert split.plus.volume == pytest.approx(4.0)
    # the drop concentrates at the sieve
    assert split.minus.mean > split.plus.mean
    assert 0.0 < split.plus.mean < split.minus.mean < 1.0
    assert set(split.to_dict()) == {"minus", "plus"}


@pytest.mark.parametrize("fixture", ["eps_state", "forced_state"])
@pytest.mark.parametrize("region", list(Region))
def test_pressure_mean_identity(request, fixture, region):
    state = request.getfixturevalue(fixture)
    assert pressure_mean_identity(state, region) == pytest.approx(pressure_split(state).side(region).mean,
                                                                  abs=1e-6)


def test_pressure_split_on_half_mesh(half_meshes):
    mesh = half_meshes[Region.MINUS]
    state = solve_stationary(assemble(build_space(mesh, BCProfile.HALF_MINUS), 1.0, 0.0),
                             SolverConfig(mode=SolverMode.STOKES))
    split = pressure_split(state)
    assert split.plus is None
    assert split.minus.mean == pytest.approx(1.0)
    assert split.minus.norm == pytest.approx(0.0, abs=1e-8)
    assert pressure_mean_identity(state, Region.PLUS) is None


# Functional constants

def test_largest_generalized_eigenvalue_small():
    k = sp.diags([1.0, 2.0, 4.0]).tocsr()
    m = sp.identity(3, format="csr")
    assert largest_generalized_eigenvalue(k, m) == pytest.approx(1.0)
    assert largest_generalized_eigenvalue(k, sp.csr_matrix((3, 3))) == 0.0
    with pytest.raises(EigenSolverError):
        largest_generalized_eigenvalue(sp.diags([0.0, 1.0]).tocsr(), sp.identity(2, format="csr"))


def _laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsc()


@pytest.mark.parametrize("n", [400, 2000])
def test_largest_generalized_eigenvalue_sparse(n):
    k = _laplacian_1d(n)
    lowest = 2.0 - 2.0 * math.cos(math.pi / (n + 1))
    assert largest_generalized_eigenvalue(k, sp.identity(n, format="csc")) == pytest.approx(1.0 / lowest, rel=1e-8)
    # rank one mass on the last node: λ = (K⁻¹)_nn = n / (n + 1)
    m = sp.csc_matrix(([1.0], ([n - 1], [n - 1])), shape=(n, n))
    assert largest_generalized_eigenvalue(k, m) == pytest.approx(n / (n + 1), rel=1e-8)


def test_largest_generalized_eigenvalue_clustered_spectrum():
    # relative gap 1e-3 at the top of the spectrum
    n = 2000
    k = sp.diags(1.0 + 1e-3 * np.arange(n)).tocsc()
    assert largest_generalized_eigenvalue(k, sp.identity(n, format="csc")) == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("n", [400, 2000])
def test_singular_stiffness_is_reported(n):
    k = _laplacian_1d(n).tolil()
    k[0, :] = 0.0
    k[:, 0] = 0.0
    with pytest.raises(EigenSolverError):
        largest_generalized_eigenvalue(k.tocsc(), sp.identity(n, format="csc"))


def test_poincare_constant(eps_mesh):
    # first Dirichlet-Neumann mode of the width 2 channel is cos(πx/2)
    assert estimate_poincare_constant(eps_mesh) == pytest.approx(2.0 / math.pi, rel=1e-2)


def test_trace_constant(eps_mesh, closed_mesh):
    assert estimate_trace_constant(closed_mesh) == 0.0
    assert estimate_trace_constant(eps_mesh) > 0.0


def test_cell_components(eps_mesh, closed_mesh):
    assert cell_components(eps_mesh)[0] == 1
    n, labels = cell_components(closed_mesh)
    assert n == 2
    assert np.unique(labels[closed_mesh.cells_in(Region.MINUS)]).size == 1


def test_bogovskii_witness(eps_mesh, open_mesh, closed_mesh):
    perforated = bogovskii_witness(eps_mesh)
    assert math.isfinite(perforated)
    assert perforated > bogovskii_witness(open_mesh) > 0.0
    with pytest.raises(FeasibilityError):
        bogovskii_witness(closed_mesh)


def test_estimate_constants(closed_mesh):
    constants = estimate_constants(closed_mesh)
    assert constants.trace_const == 0.0
    assert not constants.bogovskii_feasible
    assert constants.epsilon == 0.5
    back = FunctionalConstants.from_dict(json.loads(json.dumps(constants.to_dict(), default=str)))
    assert back.poincare_const == constants.poincare_const
    assert math.isinf(back.bogovskii_lower)


def test_divergence_lift(open_mesh):
    lift = divergence_lift(open_mesh, lambda x: np.ones_like(x[0]))
    assert lift.total == pytest.approx(8.0)
    assert lift.u0_flux == pytest.approx(1.0, abs=1e-10)
    system = assemble(lift.space, 0.0, 0.0)
    np.testing.assert_allclose(system.B @ lift.Y, -asm(unit_load, lift.space.pbasis), atol=1e-8)
    assert system.outlet_flux(lift.Y) == pytest.approx(8.0, rel=1e-8)
    assert system.inlet_flux(lift.Y) == pytest.approx(0.0, abs=1e-8)
    assert lift.divergence_residual <= 1e-2
    assert set(lift.to_dict()) == {"grad_ratio", "divergence_residual", "u0_flux", "total", "iterations"}


@pytest.mark.parametrize("q", [
    lambda x: np.cos(0.5 * np.pi * x[0]) * (1.0 + 0.25 * x[-1]),
    lambda x: np.sin(0.5 * np.pi * x[-1]),
])
def test_divergence_lift_through_holes(eps_mesh, q):
    lift = divergence_lift(eps_mesh, q)
    assert lift.divergence_residual <= 1e-2
    assert lift.u0_flux == pytest.approx(1.0, abs=1e-10)
    system = assemble(lift.space, 0.0, 0.0)

    @LinearForm
    def source(p, w):
        return q(w.x) * p.value

    np.testing.assert_allclose(system.B @ lift.Y, -asm(source, lift.space.pbasis), atol=1e-8)
    assert system.outlet_flux(lift.Y) == pytest.approx(lift.total, abs=1e-8)
    assert math.isfinite(lift.grad_ratio) and lift.grad_ratio > 0.0


def test_plain_divergence_solve_misses_q_in_l2(eps_mesh):
    q = lambda x: np.cos(0.5 * np.pi * x[0]) * (1.0 + 0.25 * x[-1])
    weak_only = divergence_lift(eps_mesh, q, grad_div=0.0)
    assert weak_only.iterations == 1
    assert divergence_lift(eps_mesh, q).divergence_residual < 0.1 * weak_only.divergence_residual


@pytest.mark.slow
def test_poiseuille_section_integral(pipe2d, pipe3d):
    assert poiseuille_section_integral(mesh_open_pipe(pipe2d, MeshResolution())) == pytest.approx(4.0 / 3.0)
    mesh = mesh_open_pipe(pipe3d, MeshResolution(h_far=0.5, h_hole=0.5, quality_floor=0.02))
    space = build_space(mesh)
    x = space.vbasis.doflocs
    u = space.zero_velocity()
    space.components(u)[2] = 1.0 - x[0] ** 2 - x[1] ** 2
    section = poiseuille_section_integral(mesh)
    assert assemble(space, 0.0, 0.0).outlet_flux(space.enforce(u)) == pytest.approx(section, rel=1e-10)
    n = mesh.provenance["lateral_segments"]
    t = 2.0 * math.pi / n
    polygon = 0.5 * n * math.sin(t) - n / 12.0 * math.sin(t) * (2.0 + math.cos(t))
    assert section < polygon < math.pi / 2.0
    assert section == pytest.approx(math.pi / 2.0, rel=0.05)


def test_divergence_lift_through_closed_sieve(closed_mesh):
    with pytest.raises(FeasibilityError):
        divergence_lift(closed_mesh, lambda x: np.ones_like(x[0]))


# Sweep reports

def test_fit_power_law():
    r = np.array([0.02, 0.05, 0.1, 0.2])
    fit = fit_power_law(r, 3.0 * r ** 0.5, "flux")
    assert fit.slope == pytest.approx(0.5)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.r2 == pytest.approx(1.0)
    assert fit.points == 4
    assert fit_power_law(r, [0.0, 0.0, 0.0, 1.0], "flux") is None


def test_decay_dominance():
    r = np.array([0.01, 0.04, 0.16])
    dominance = decay_dominance(r, 2.0 * np.sqrt(r))
    assert dominance["constant"] == pytest.approx(2.0)
    assert dominance["ratio"] == pytest.approx(1.0)
    assert decay_dominance([], []) is None
    assert math.isinf(decay_dominance([0.01, 0.04], [0.0, 1.0])["ratio"])


def test_uniform_bound():
    bound = uniform_bound([2.0, 1.0, 1.5])
    assert bound["ratio"] == pytest.approx(2.0)
    assert bound["growth"] == pytest.approx(0.75)
    assert uniform_bound([1.0, -1.2])["growth"] == pytest.approx(1.2)
    assert math.isnan(uniform_bound([3.0])["growth"])
    assert uniform_bound([]) is None


def test_sweep_report_files(tmp_path):
    report = SweepReport((_row(0.6, 0.1889, 0.02, 0.1), _row(0.5, 0.1353, 0.01, 0.05)),
                         {"pipe": {"dim": 2}}).with_config_hash("abc")
    report.write(tmp_path)
    wide = (tmp_path / "sweep.csv").read_text().splitlines()
    assert wide[0].split(",") == list(SweepRow.columns())
    assert len(wide) == 3
    long = (tmp_path / "sweep_long.csv").read_text().splitlines()
    assert long[0] == "epsilon,quantity,value"
    assert len(long) == 1 + 2 * (len(SweepRow.columns()) - 1)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["format"] == "sieveflow-sweep/1"
    assert summary["config_hash"] == "abc"
    assert summary["epsilons"] == [0.6, 0.5]
    assert summary["uniform_bounds"]["energy"] == {"ratio": "inf", "growth": "nan"}
    back = SweepReport.read_csv(tmp_path / "sweep.csv")
    assert back.rows[1].flux == 0.01
    assert back.rows[0].iterations == 3
    assert math.isnan(back.rows[0].trace_const)


def test_sweep_rejects_unordered_epsilons(pipe2d):
    with pytest.raises(ConfigurationError):
        run_sweep(pipe2d, [0.5, 0.6])
    with pytest.raises(ConfigurationError):
        run_sweep(pipe2d, [])


def test_sweep_failure_is_partial(pipe2d, coarse):
    # the second level has no valid perforation scales
    with pytest.raises(PartialSweepError) as info:
        run_sweep(pipe2d, [0.6, 0.0], res=coarse, cfg=SolverConfig(mode=SolverMode.STOKES))
    assert len(info.value.report.rows) == 1
    assert info.value.report.rows[0].epsilon == 0.6
    assert info.value.exit_code == 2


@pytest.mark.slow
def test_small_sweep_is_deterministic(pipe2d):
    res = MeshResolution(h_far=0.5, h_hole=0.25, grading_rate=1.5)
    kwargs = dict(res=res, constants=True, deterministic=True)
    first = run_sweep(pipe2d, [0.6, 0.5], **kwargs)
    second = run_sweep(pipe2d, [0.6, 0.5], **kwargs)
    assert first.wide_csv() == second.wide_csv()
    assert "created" not in first.provenance
    r = first.column("r_eps")
    assert list(r) == sorted(r, reverse=True)
    assert np.all(first.column("flux") > 0.0)
    assert np.all(np.diff(first.column("flux")) < 0.0)
    assert np.all(np.isfinite(first.column("bogovskii_lower")))
    assert np.all(np.abs(first.column("energy_residual")) < 1e-7)
    assert first.fits["flux"] is not None


def test_limit_distance_reads_own_side(pipe2d, coarse, eps_state):
    minus, plus = solve_limit_problems(pipe2d, 1.0, 0.0, res=coarse, cfg=SolverConfig(mode=SolverMode.STOKES))
    for state, p in ((minus, 1.0), (plus, 0.0)):
        reference = _LimitReference.build(state)
        _, dist_phi = reference.distances(eps_state)
        d = eps_state.phi - p
        direct = math.sqrt(d @ (asm(mass, eps_state.space.region_basis(reference.region, pressure=True)) @ d))
        assert 0.5 * direct <= dist_phi <= 1.5 * direct


# Acceptance sweep at default resolution, Δp = 1 shifted so that φ± stay away from zero

ACCEPTANCE_EPSILONS = [0.6, 0.5, 0.4, 0.3]


@pytest.fixture(scope="module")
def acceptance_sweep(pipe2d):
    return run_sweep(pipe2d, ACCEPTANCE_EPSILONS, p_minus=1.5, p_plus=0.5, constants=True, deterministic=True)


def _levels(report, smallest):
    return SweepReport(tuple(row for row in report.rows if row.epsilon >= smallest), report.provenance)


@pytest.mark.slow
def test_decay_dominance_along_sweep(acceptance_sweep):
    for quantity, dominance in _levels(acceptance_sweep, 0.4).dominance.items():
        assert dominance["ratio"] <= 3.0, quantity
    assert acceptance_sweep.fits["flux"].slope >= 0.35
    assert acceptance_sweep.fits["trace"].slope > 0.0


@pytest.mark.slow
def test_uniform_bounds_along_sweep(acceptance_sweep):
    for quantity, bound in _levels(acceptance_sweep, 0.4).uniform_bounds.items():
        assert bound["ratio"] <= 3.0, quantity
        assert bound["growth"] <= 1.1, quantity


@pytest.mark.slow
@pytest.mark.parametrize("column", ["dist_minus", "dist_plus", "dist_phi_minus", "dist_phi_plus"])
def test_sweep_approaches_limit(acceptance_sweep, column):
    d = acceptance_sweep.column(column)
    assert np.all(np.diff(d) <= 0.0)
    assert d[-1] <= 0.5 * d[0]


@pytest.mark.slow
def test_sweep_constants_scale_with_hole_size(acceptance_sweep):
    rows = {row.epsilon: row for row in acceptance_sweep.rows}
    large, small = rows[0.6], rows[0.4]
    scale = math.sqrt(large.r_eps / small.r_eps)
    assert small.bogovskii_lower / large.bogovskii_lower >= 0.5 * scale
    assert 0.5 * scale <= large.trace_const / small.trace_const <= 2.0 * scale
    assert np.all(np.isfinite(acceptance_sweep.column("poincare_const")))
