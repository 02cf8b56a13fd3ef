import math

import numpy as np
import pytest

from neckflow import (FitError, GeometryError, INC1, INC2, ConstantPotential,
                      SolveConfig, annulus_circle_flux,
                      boundary_outward_fluxes, build_annulus,
                      build_parabola_example, build_symmetric_disc_example,
                      cross_section_flux, cutoff_volume_flux,
                      generate, gradient_probe, holder_quotient_scan,
                      holder_scan_from_solution, kkt_condensed_flux,
                      max_gradient, solve, solve_decay_fixture,
                      write_probe_csv)
from neckflow.analysis import fit_log_decay, PROBE_CSV_HEADER


@pytest.fixture(scope="module")
def annulus_p3():
    g = build_annulus(1.0, 2.0, phi=ConstantPotential(1.0))
    m = generate(g, 0.04)
    sol = solve(m, g, SolveConfig(p=3.0, inclusion_values={INC1: 0.0}))
    return g, m, sol


class TestFluxes:
    def test_annulus_circle_flux_value_and_constancy(self, annulus_p3):
        # radial exact solution carries current 2 pi C^2 through every circle
        _, m, sol = annulus_p3
        c = 1.0 / (2 * (math.sqrt(2.0) - 1.0))
        exact = 2 * math.pi * c * c
        vals = [annulus_circle_flux(sol, m, r).value for r in (1.2, 1.5, 1.8)]
        spread = (max(vals) - min(vals)) / abs(np.mean(vals))
        assert spread <= 1e-8
        assert np.mean(vals) == pytest.approx(exact, rel=1e-3)

    def test_kkt_vs_cutoff_agreement(self, annulus_p3):
        _, m, sol = annulus_p3
        k = kkt_condensed_flux(sol, m, INC1).value
        c = cutoff_volume_flux(sol, m, INC1).value
        tol = 10 * 1e-10 * max(1.0, abs(sol.energy))
        assert abs(k - c) <= tol

    def test_kkt_vs_cutoff_on_floating_inclusions(self, disc_solutions_1e2,
                                                  disc_mesh_1e2):
        for p, sol in disc_solutions_1e2.items():
            tol = 10 * 1e-10 * max(1.0, abs(sol.energy))
            for tag in (INC1, INC2):
                k = kkt_condensed_flux(sol, disc_mesh_1e2, tag).value
                c = cutoff_volume_flux(sol, disc_mesh_1e2, tag).value
                assert abs(k - c) <= tol, (p, tag)

    def test_conservation(self, annulus_p3, disc_solutions_1e2,
                          disc_mesh_1e2):
        _, m, sol = annulus_p3
        out = boundary_outward_fluxes(sol, m)
        assert abs(sum(out.values())) <= 1e-7
        for p, s in disc_solutions_1e2.items():
            tot = sum(boundary_outward_fluxes(s, disc_mesh_1e2).values())
            assert abs(tot) <= 1e-7, p

    def test_cross_section_positive_for_flux_branch(self, disc_solutions_1e2,
                                                    disc_mesh_1e2):
        for p in (2.0, 3.0):
            sol = disc_solutions_1e2[p]
            for r in (0.1, 0.2, 0.4):
                assert cross_section_flux(sol, disc_mesh_1e2, r).value > 0

    def test_window_plus_complement_is_zero(self, disc_solutions_1e2,
                                            disc_mesh_1e2):
        # windowed flux plus the flux through the rest of the same boundary
        # is the total inclusion flux, which the KKT condition pins at zero
        sol = disc_solutions_1e2[2.0]
        s_r = cross_section_flux(sol, disc_mesh_1e2, 0.2).value
        total = kkt_condensed_flux(sol, disc_mesh_1e2, INC2).value
        complement = total - s_r
        assert abs(s_r + complement) <= 10 * 1e-10 * max(1.0,
                                                         abs(sol.energy))

    def test_window_domain_error(self, disc_solutions_1e2, disc_mesh_1e2):
        sol = disc_solutions_1e2[2.0]
        with pytest.raises(GeometryError):
            cross_section_flux(sol, disc_mesh_1e2, 1.5)
        with pytest.raises(GeometryError):
            cross_section_flux(sol, disc_mesh_1e2, 0.0)


class TestMaxGradient:
    def test_constant_data_gives_zero(self):
        g = build_symmetric_disc_example(eps=1e-2, phi=ConstantPotential(3.0))
        m = generate(g, 0.2, 6, seed=0)
        sol = solve(m, g, SolveConfig(p=2.0))
        val, _ = max_gradient(sol, m, window=0.25)
        assert val <= 1e-9

    def test_blowup_ratio_linear_case(self, disc_geom):
        # between eps = 1e-2 and 1e-3 the max gradient grows like eps^(-1/2)
        vals = {}
        for eps in (1e-2, 1e-3):
            g = disc_geom.with_eps(eps)
            m = generate(g, 0.1, 6, seed=0)
            sol = solve(m, g, SolveConfig(p=2.0))
            vals[eps], _ = max_gradient(sol, m, window=0.25)
        ratio = vals[1e-3] / vals[1e-2]
        assert 10**0.4 <= ratio <= 10**0.6

    def test_blowup_ratio_sub_branch(self, disc_geom):
        vals = {}
        for eps in (1e-2, 1e-3):
            g = disc_geom.with_eps(eps)
            m = generate(g, 0.1, 6, seed=0)
            sol = solve(m, g, SolveConfig(p=1.3))
            vals[eps], _ = max_gradient(sol, m, window=0.25)
        ratio = vals[1e-3] / vals[1e-2]
        assert 10**0.9 <= ratio <= 10**1.1

    def test_probe_matches_element_gradient(self, disc_solutions_1e2,
                                            disc_mesh_1e2, disc_geom):
        sol = disc_solutions_1e2[2.0]
        pr = gradient_probe(sol, disc_mesh_1e2, 0.0)
        tri, _ = disc_mesh_1e2.locate(pr.point.as_array()[None, :])
        assert np.allclose(sol.element_gradients[tri[0]], pr.grad)
        assert pr.delta_at_point == pytest.approx(1e-2)


class TestDecayFit:
    def test_degenerate_samples_rejected(self):
        with pytest.raises(FitError):
            fit_log_decay([0.3, 0.3, 0.3], [1.0, 1.0, 1.0], 1e-3)

    def test_recovers_its_own_model(self):
        eps = 1e-3
        x = np.linspace(0.2, 0.9, 30)
        mag = 0.7 * np.exp(-2.0 / (math.sqrt(eps) + np.abs(x)))
        c2, r2 = fit_log_decay(x, mag, eps)
        assert c2 == pytest.approx(2.0, abs=1e-6)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_solved_auxiliary_fixture(self):
        c2, r2, _, _ = solve_decay_fixture(eps=1e-3, p=2.0)
        assert c2 > 0
        assert r2 >= 0.98


class TestHolderScan:
    def test_constant_gradient_field(self):
        g = build_parabola_example(a=0.5, eps=1e-2)

        def grad_eval(pts):
            return np.tile([0.3, -0.2], (len(pts), 1))

        mx, res = holder_quotient_scan(grad_eval, g, 0.5, [0.0, 0.05])
        assert mx == pytest.approx(0.0, abs=1e-12)

    def test_model_gap_field_stable(self):
        # field (0, 1/gap): the normalized quotient is scale free
        vals = []
        for eps in (1e-3, 1e-2, 1e-1):
            g = build_parabola_example(a=0.5, eps=eps)

            def grad_eval(pts, g=g):
                d = g.eps + np.asarray(g.gap.diff(pts[:, 0]))
                return np.column_stack([np.zeros(len(pts)), 1.0 / d])

            mx, _ = holder_quotient_scan(grad_eval, g, 0.5, [0.0])
            vals.append(mx)
        assert max(vals) <= 1.2 * min(vals)

    def test_out_of_chart_point_skipped(self):
        g = build_parabola_example(a=0.5, eps=1e-2)

        def grad_eval(pts):
            return np.zeros((len(pts), 2))

        mx, res = holder_quotient_scan(grad_eval, g, 0.5, [0.95])
        assert res[0][1] is None
        assert math.isnan(mx)

    def test_beta_validated(self):
        g = build_parabola_example(a=0.5, eps=1e-2)
        with pytest.raises(ValueError):
            holder_quotient_scan(lambda p: np.zeros((len(p), 2)), g, 1.5,
                                 [0.0])

    def test_solved_state_bounded(self, disc_geom, disc_solutions_1e2,
                                  disc_mesh_1e2):
        sol = disc_solutions_1e2[2.0]
        pts = [math.sqrt(d - 1e-2) for d in (2e-2, 5e-2, 1e-1)]
        mx, res = holder_scan_from_solution(sol, disc_mesh_1e2, 0.5, pts)
        vals = [v for _, v in res if v is not None]
        assert len(vals) == 3
        assert max(vals) / min(vals) <= 3.0


def test_probe_csv(tmp_path):
    rows = [{"eps": 1e-3, "p": 2.0, "xprime": 0.0, "xn": 0.0, "delta": 1e-3,
             "grad_x": 0.0, "grad_n": 12.5, "predicted_grad_n": 12.0}]
    path = tmp_path / "probes.csv"
    write_probe_csv(str(path), rows)
    lines = path.read_text().splitlines()
    assert lines[0] == PROBE_CSV_HEADER
    assert lines[1].startswith("0.001,2,0,0,0.001,0,12.5,12")
