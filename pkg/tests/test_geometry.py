import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neckflow import (GeometryError, build_annulus, build_parabola_example,
                      build_symmetric_disc_example, build_table_example,
                      gap_width, load_geometry_config, model_gap_width)
from neckflow.geometry import (ConstantPotential, GapProfile, LinearPotential,
                               NeckPoint, ParabolaProfile, PolyPotential,
                               TableProfile, in_gap)


def test_gap_width_touching_discs_is_zero():
    g = build_symmetric_disc_example(scale=1.0, eps=0.0)
    assert gap_width(g, 0.0) == 0.0


def test_gap_width_parabola_direct_substitution():
    # h1 - h2 = x'^2 and eps = 1e-3 at x' = 0.1
    g = build_parabola_example(a=0.5, eps=1e-3)
    assert gap_width(g, 0.1) == pytest.approx(0.011, abs=1e-15)


def test_gap_width_circle_profiles_high_precision():
    # oracle: eps + 2(2 - sqrt(4 - x'^2)) at 50 digits
    import mpmath
    mpmath.mp.dps = 50
    expected = float(mpmath.mpf("0.01")
                     + 2 * (2 - mpmath.sqrt(4 - mpmath.mpf("0.25"))))
    g = build_symmetric_disc_example(scale=1.0, eps=1e-2)
    assert gap_width(g, 0.5) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.137016653792583, rel=1e-12)


def test_gap_width_out_of_chart_raises():
    g = build_symmetric_disc_example(eps=1e-2)
    with pytest.raises(GeometryError):
        gap_width(g, 1.0)
    with pytest.raises(GeometryError):
        model_gap_width(g, -1.2)


def test_model_gap_width():
    g = build_symmetric_disc_example(eps=1e-3)
    assert model_gap_width(g, 0.2) == pytest.approx(1e-3 + 0.04)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-0.85, 0.85), eps=st.floats(0.0, 0.1))
def test_gap_width_sandwich(x, eps):
    g = build_symmetric_disc_example(scale=1.0, eps=eps)
    d = gap_width(g, x)
    dbar = model_gap_width(g, x)
    c1, c2 = g.gap.c1, g.gap.c2
    assert min(c1, 1.0) * dbar <= d + 1e-14
    assert d <= max(c2, 1.0) * dbar + 1e-14


class TestSymmetricDiscExample:
    def test_touching_at_origin(self):
        g = build_symmetric_disc_example(scale=1.0, eps=0.0)
        assert g.upper_wall(0.0) == 0.0
        assert g.lower_wall(0.0) == 0.0

    def test_translation_opens_the_gap(self):
        g = build_symmetric_disc_example(scale=1.0, eps=0.01)
        assert g.upper_wall(0.0) - g.lower_wall(0.0) == pytest.approx(0.01)

    def test_gap_curvature_at_origin(self):
        g = build_symmetric_disc_example(scale=1.0, eps=0.0)
        # finite-difference oracle for (h1 - h2)''(0); radius-2 discs each
        # contribute curvature 1/2
        d = 1e-4
        fd = (g.gap.diff(d) - 2 * g.gap.diff(0.0) + g.gap.diff(-d)) / d**2
        assert fd == pytest.approx(1.0, abs=1e-6)
        assert g.gap.gap_hessian0() == pytest.approx(1.0, rel=1e-12)

    def test_validate_and_symmetry(self):
        g = build_symmetric_disc_example(scale=1.0, eps=1e-3)
        assert g.validate()
        assert g.is_mirror_symmetric()
        assert g.phi_oscillation() == pytest.approx(10.0, rel=1e-3)

    def test_inclusion_touching_outer_rejected(self):
        g = build_symmetric_disc_example(scale=1.0, eps=2.2)
        with pytest.raises(GeometryError):
            g.validate()

    def test_negative_inputs_rejected(self):
        with pytest.raises(GeometryError):
            build_symmetric_disc_example(scale=-1.0)
        with pytest.raises(GeometryError):
            build_symmetric_disc_example(eps=-0.5)


class TestGapProfile:
    def test_disc_and_parabola_profiles_validate(self):
        build_symmetric_disc_example(eps=0.0).gap.validate()
        build_parabola_example(eps=0.0).gap.validate()

    def test_offset_table_rejected(self):
        x = np.linspace(-1.2, 1.2, 60)
        prof = TableProfile(x, 0.3 * x * x)
        shifted = GapProfile(h1=prof, h2=lambda t: -prof(t) - 0.5, c1=0.5,
                             c2=2.0)
        with pytest.raises(GeometryError):
            shifted.validate()

    def test_too_large_c1_rejected(self):
        g = build_symmetric_disc_example(eps=0.0)
        bad = GapProfile(h1=g.gap.h1, h2=g.gap.h2, c1=5.0, c2=g.gap.c2,
                         chart=g.gap.chart)
        with pytest.raises(GeometryError):
            bad.validate()

    def test_table_profile_roundtrip(self, tmp_path):
        x = np.linspace(-1.3, 1.3, 120)
        path = tmp_path / "prof.txt"
        np.savetxt(path, np.column_stack([x, 0.4 * x * x]))
        g = build_table_example(str(path), eps=1e-3)
        assert gap_width(g, 0.25) == pytest.approx(1e-3 + 0.8 * 0.0625,
                                                   rel=1e-6)
        assert g.gap.gap_hessian0() == pytest.approx(1.6, rel=1e-4)


def test_neck_point_membership():
    g = build_symmetric_disc_example(eps=1e-2)
    assert in_gap(g, NeckPoint(0.0, 0.0))
    assert in_gap(g, NeckPoint(0.0, 0.00499))
    assert not in_gap(g, NeckPoint(0.0, 0.2))


def test_potentials():
    pts = np.array([[0.3, -1.5], [0.0, 2.0]])
    assert np.allclose(LinearPotential()(pts), [-1.5, 2.0])
    assert np.allclose(ConstantPotential(7.0)(pts), [7.0, 7.0])
    poly = PolyPotential([(2.0, 0, 1), (1.0, 2, 0)])
    assert np.allclose(poly(pts), [2 * (-1.5) + 0.09, 4.0])


def test_annulus_geometry():
    g = build_annulus(1.0, 2.0)
    assert g.kind == "annulus"
    assert g.validate()
    with pytest.raises(GeometryError):
        build_annulus(2.0, 1.0)
    with pytest.raises(GeometryError):
        gap_width(g, 0.0)


class TestConfigLoading:
    def test_disc_config(self, tmp_path):
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape = disc\neps = 0.003\nscale = 1\n"
                       "phi = linear_xn\n# comment\n")
        g = load_geometry_config(str(cfg))
        assert g.eps == 0.003
        assert g.kind == "two_inclusion"

    def test_poly_phi_config(self, tmp_path):
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape = parabola\neps = 0.01\nphi = custom_poly\n"
                       "phi_poly = 1:0:1 0.5:2:0\n")
        g = load_geometry_config(str(cfg))
        val = g.phi(np.array([[1.0, 2.0]]))
        assert val[0] == pytest.approx(2.0 + 0.5)

    def test_table_config(self, tmp_path):
        x = np.linspace(-1.3, 1.3, 80)
        np.savetxt(tmp_path / "prof.dat", np.column_stack([x, 0.3 * x * x]))
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape = table\ntable = prof.dat\neps = 0.002\n")
        g = load_geometry_config(str(cfg))
        assert gap_width(g, 0.0) == pytest.approx(0.002)

    def test_annulus_config(self, tmp_path):
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape = annulus\nr_inner = 1\nr_outer = 2\n"
                       "phi = const\nphi_value = 1\n")
        assert load_geometry_config(str(cfg)).kind == "annulus"

    def test_bad_config_rejected(self, tmp_path):
        cfg = tmp_path / "geom.cfg"
        cfg.write_text("shape beyond repair\n")
        with pytest.raises(GeometryError):
            load_geometry_config(str(cfg))
        cfg.write_text("shape = dodecahedron\n")
        with pytest.raises(GeometryError):
            load_geometry_config(str(cfg))


def test_parabola_curvature():
    p = ParabolaProfile(0.25)
    assert p.curvature0() == pytest.approx(0.5)
    g = build_parabola_example(a=0.25, eps=0.0)
    assert g.gap.gap_hessian0() == pytest.approx(1.0)
