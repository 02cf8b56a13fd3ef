import math

import numpy as np
import pytest

from neckflow import (INC1, OUTER, ConstantPotential, SolveConfig,
                      SolverError, TriMesh, assemble_energy, build_annulus,
                      build_symmetric_disc_example, generate, solve,
                      uniqueness_probe)
from neckflow.solver import Condenser, ElementOps, reduced_hessian


def radial_exact(r, p):
    if p == 2.0:
        return np.log(r) / math.log(2.0)
    a = (p - 2.0) / (p - 1.0)
    return (r**a - 1.0) / (2.0**a - 1.0)


@pytest.fixture(scope="module")
def small_annulus():
    return build_annulus(1.0, 2.0), generate(build_annulus(1.0, 2.0), 0.3)


class TestAssembly:
    def test_constant_field(self, small_annulus):
        g, m = small_annulus
        eta = 0.3
        p = 1.7
        v = np.full(m.n_vertices, 4.2)
        e, grad, _ = assemble_energy(m, v, p, eta)
        area = float(m.signed_areas().sum())
        assert e == pytest.approx(eta**p * area, rel=1e-12)
        # constrained gradient vanishes: interior entries are zero
        interior = m.vertex_tag == 0
        assert np.abs(grad[interior]).max() <= 1e-14

    def test_single_triangle_unit_gradient(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2]])
        bed = np.array([[0, 1], [1, 2], [2, 0]])
        m = TriMesh(verts, tris, bed, np.array([OUTER] * 3))
        v = verts[:, 0].copy()   # gradient (1, 0)
        e, _, _ = assemble_energy(m, v, 2.0, 0.0)
        assert e == pytest.approx(0.5, rel=1e-14)

    @pytest.mark.parametrize("p", [1.3, 2.0, 3.0])
    def test_gradient_matches_central_differences(self, p, rng):
        # random ~50-vertex mesh: jittered coarse annulus
        g = build_annulus(1.0, 2.0)
        m = generate(g, 0.45)
        interior = np.flatnonzero(m.vertex_tag == 0)
        verts = m.vertices.copy()
        verts[interior] += rng.uniform(-0.02, 0.02, (len(interior), 2))
        m = TriMesh(verts, m.triangles, m.boundary_edges, m.boundary_tags)
        v = rng.normal(size=m.n_vertices)
        ops = ElementOps(m)
        eta = 0.5
        _, grad, _ = assemble_energy(m, v, p, eta, ops)
        h = 5e-6
        worst = 0.0
        for i in rng.integers(0, m.n_vertices, 10):
            vp, vm = v.copy(), v.copy()
            vp[i] += h
            vm[i] -= h
            fd = (ops.energy_grad(vp, p, eta)[0]
                  - ops.energy_grad(vm, p, eta)[0]) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), 1e-12))
        assert worst <= 1e-6

    def test_hessian_matches_gradient_differences(self, small_annulus, rng):
        g, m = small_annulus
        v = rng.normal(size=m.n_vertices)
        ops = ElementOps(m)
        _, grad, H = assemble_energy(m, v, 2.6, 0.2, ops)
        h = 1e-6
        for i in rng.integers(0, m.n_vertices, 4):
            vp, vm = v.copy(), v.copy()
            vp[i] += h
            vm[i] -= h
            col = (ops.energy_grad(vp, 2.6, 0.2)[1]
                   - ops.energy_grad(vm, 2.6, 0.2)[1]) / (2 * h)
            dense = H[:, i].toarray().ravel()
            assert np.abs(col - dense).max() <= 1e-5 * max(1.0,
                                                           np.abs(dense).max())

    def test_nonfinite_rejected(self, small_annulus):
        _, m = small_annulus
        v = np.zeros(m.n_vertices)
        v[0] = np.nan
        with pytest.raises(SolverError):
            assemble_energy(m, v, 2.0, 0.1)


class TestSolveConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolveConfig(p=1.0)
        with pytest.raises(ValueError):
            SolveConfig(p=2.0, newton_tol=0.0)
        with pytest.raises(ValueError):
            SolveConfig(p=2.0, eta_schedule=(1e-3, 1e-2))
        with pytest.raises(ValueError):
            SolveConfig(p=2.0, eta_schedule=(1e-2, -1e-3))

    def test_default_schedules(self):
        assert SolveConfig(p=2.5).eta_schedule == (0.0,)
        sched = SolveConfig(p=1.5).eta_schedule
        assert sched[-1] > 0 and all(b < a for a, b in zip(sched, sched[1:]))


class TestConstantData:
    def test_constant_solution(self):
        g = build_symmetric_disc_example(eps=1e-2, phi=ConstantPotential(7.0))
        m = generate(g, 0.18, 6, seed=0)
        for p in (1.3, 2.0):
            sol = solve(m, g, SolveConfig(p=p))
            assert sol.U1 == pytest.approx(7.0, abs=1e-9)
            assert sol.U2 == pytest.approx(7.0, abs=1e-9)
            assert np.abs(sol.nodal_values - 7.0).max() <= 1e-8
            eta_f = sol.eta_final
            area = float(m.signed_areas().sum())
            assert sol.energy == pytest.approx(eta_f**p * area, abs=1e-10)


class TestDiscFixture:
    def test_odd_symmetry(self, disc_geom, disc_solutions_1e2):
        osc = disc_geom.phi_oscillation()
        for p, sol in disc_solutions_1e2.items():
            assert abs(sol.U1 + sol.U2) <= 1e-6 * osc

    def test_nodal_values_tied_on_inclusions(self, disc_solutions_1e2,
                                             disc_mesh_1e2):
        from neckflow import INC2
        for sol in disc_solutions_1e2.values():
            u = sol.nodal_values
            assert np.all(u[disc_mesh_1e2.vertex_tag == INC1] == sol.U1)
            assert np.all(u[disc_mesh_1e2.vertex_tag == INC2] == sol.U2)

    def test_kkt_flux_and_residual(self, disc_solutions_1e2):
        for sol in disc_solutions_1e2.values():
            assert sol.kkt_residual <= 1e-10
            assert abs(sol.flux1) <= 1e-8
            assert abs(sol.flux2) <= 1e-8

    def test_potential_bounds(self, disc_solutions_1e2):
        for sol in disc_solutions_1e2.values():
            assert -5.0 - 1e-8 <= sol.U1 <= 5.0 + 1e-8
            assert -5.0 - 1e-8 <= sol.U2 <= 5.0 + 1e-8

    def test_maximum_principle_surrogate(self, disc_solutions_1e2):
        for sol in disc_solutions_1e2.values():
            assert sol.nodal_values.min() >= -5.0 - 1e-8 * 10.0
            assert sol.nodal_values.max() <= 5.0 + 1e-8 * 10.0

    def test_energy_monotone_within_stages(self, disc_solutions_1e2):
        for sol in disc_solutions_1e2.values():
            stages = {}
            for eta, energy, _ in sol.energy_history:
                stages.setdefault(eta, []).append(energy)
            for seq in stages.values():
                diffs = np.diff(seq)
                assert np.all(diffs <= 1e-12 * max(1.0, abs(seq[0])))

    def test_eta_sensitivity_recorded(self, disc_solutions_1e2):
        sol = disc_solutions_1e2[1.3]
        assert sol.eta_sensitivity is not None
        assert sol.eta_sensitivity < 0.01


class TestLinearCase:
    def test_one_newton_step(self, disc_geom, disc_mesh_1e2):
        g = disc_geom.with_eps(1e-2)
        cfg = SolveConfig(p=2.0, polish_iters=0)
        sol = solve(disc_mesh_1e2, g, cfg)
        assert sol.newton_iters == 1
        assert sol.kkt_residual <= 1e-10


class TestManufactured:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_radial_solution(self, p):
        g = build_annulus(1.0, 2.0, phi=ConstantPotential(1.0))
        m = generate(g, 0.05)
        sol = solve(m, g, SolveConfig(p=p, inclusion_values={INC1: 0.0}))
        r = np.linalg.norm(m.vertices, axis=1)
        err = np.abs(sol.nodal_values - radial_exact(r, p)).max()
        assert err <= 1e-4
        assert sol.U1 == 0.0


class TestUniqueness:
    def test_convex_problem_unique(self, disc_geom):
        g = disc_geom.with_eps(1e-2)
        m = generate(g, 0.2, 6, seed=0)
        for p in (2.0, 3.0):
            d = uniqueness_probe(m, g, SolveConfig(p=p, newton_tol=1e-10),
                                 n_starts=3, seed=1)
            assert d <= 10 * 1e-10

    def test_degenerate_regime(self, disc_geom):
        g = disc_geom.with_eps(1e-2)
        m = generate(g, 0.2, 6, seed=0)
        d = uniqueness_probe(m, g, SolveConfig(p=1.3, newton_tol=1e-10),
                             n_starts=3, seed=2)
        assert d <= 100 * 1e-10

    def test_zero_data(self):
        g = build_symmetric_disc_example(eps=1e-2, phi=ConstantPotential(0.0))
        m = generate(g, 0.25, 6, seed=0)
        cfg = SolveConfig(p=2.0)
        sol = solve(m, g, cfg)
        assert np.abs(sol.nodal_values).max() <= 1e-10
        # every randomized start also lands on the zero state
        d = uniqueness_probe(m, g, cfg, n_starts=3, seed=3)
        assert d <= 10 * cfg.newton_tol

    def test_needs_two_starts(self, disc_geom, disc_mesh_1e2):
        with pytest.raises(ValueError):
            uniqueness_probe(disc_mesh_1e2, disc_geom.with_eps(1e-2),
                             SolveConfig(p=2.0), n_starts=1)


class TestHessianSpectrum:
    def test_psd_at_solution(self, disc_geom):
        g = disc_geom.with_eps(1e-2)
        m = generate(g, 0.35, 6, seed=0)
        for p in (1.3, 2.0, 3.0):
            cfg = SolveConfig(p=p)
            sol = solve(m, g, cfg)
            H = reduced_hessian(m, g, cfg, sol).toarray()
            lam = np.linalg.eigvalsh(H)
            assert lam[0] >= -1e-10 * abs(lam[-1])


def test_stagnation_diagnostic(disc_geom, disc_mesh_1e2):
    g = disc_geom.with_eps(1e-2)
    cfg = SolveConfig(p=3.0, warm_start_p2=False, max_newton_iters=1,
                      newton_tol=1e-14, polish_iters=0)
    with pytest.raises(SolverError) as exc:
        solve(disc_mesh_1e2, g, cfg)
    assert exc.value.residual is not None
    assert exc.value.eta == 0.0


def test_condenser_layout(disc_geom, disc_mesh_1e2):
    g = disc_geom.with_eps(1e-2)
    cond = Condenser(disc_mesh_1e2, g)
    n_int = int((disc_mesh_1e2.vertex_tag == 0).sum())
    assert cond.n_dofs == n_int + 2
    q = cond.initial_q()
    q[cond.iU[INC1]] = 3.25
    u = cond.nodal(q)
    inc1 = disc_mesh_1e2.vertex_tag == INC1
    assert np.all(u[inc1] == 3.25)
