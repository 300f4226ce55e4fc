import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pdesrc.errors import OutsideROC, PoleEvaluation, SingularPoint, Unsupported
from pdesrc.greens import (
    FieldModel,
    TemporalFilter,
    bspline_laplace,
    eval_bspline,
    eval_green,
    eval_green_filtered,
    kernel_values,
    laplace,
)


class TestEvalGreen:
    def test_diffusion_at_origin_unit_time(self):
        m = FieldModel.diffusion(2, 1.0)
        assert eval_green(m, [0.0, 0.0], 1.0) == pytest.approx(1.0 / (4 * math.pi))

    def test_poisson2d_unit_radius_is_zero(self):
        assert eval_green(FieldModel.poisson2d(), [1.0, 0.0]) == 0.0

    def test_diffusion_offset_point(self):
        # (4 pi mu t)^{-1} exp(-|x|^2 / 4 mu t) at |x|^2 = 2, t = 0.5
        m = FieldModel.diffusion(2, 1.0)
        expect = math.exp(-1.0) / (2 * math.pi)
        assert eval_green(m, [1.0, 1.0], 0.5) == pytest.approx(expect, rel=1e-12)

    def test_diffusion_causal(self):
        m = FieldModel.diffusion(1, 0.3)
        assert eval_green(m, [0.2], 0.0) == 0.0
        assert eval_green(m, [0.2], -1.0) == 0.0

    def test_poisson_singularities(self):
        with pytest.raises(SingularPoint):
            eval_green(FieldModel.poisson2d(), [0.0, 0.0])
        with pytest.raises(SingularPoint):
            eval_green(FieldModel.poisson3d(), [0.0, 0.0, 0.0])

    def test_poisson3d_value(self):
        assert eval_green(FieldModel.poisson3d(), [0.0, 2.0, 0.0]) == pytest.approx(
            -1.0 / (8 * math.pi)
        )

    def test_wave2d_light_cone(self):
        m = FieldModel.wave(2, 2.0)
        assert eval_green(m, [1.0, 0.0], 0.25) == 0.0  # ct = 0.5 < 1
        with pytest.raises(SingularPoint):
            eval_green(m, [1.0, 0.0], 0.5)  # ct == |x|
        inside = eval_green(m, [1.0, 0.0], 1.0)  # ct = 2
        assert inside == pytest.approx(2.0 / (2 * math.pi * math.sqrt(3.0)))

    def test_wave3d_needs_filter(self):
        with pytest.raises(SingularPoint):
            eval_green(FieldModel.wave(3, 1.0), [1.0, 0.0, 0.0], 1.0)


class TestEvalGreenFiltered:
    def test_wave3d_spline_endpoint(self):
        m = FieldModel.wave(3, 1.0)
        f = TemporalFilter.bspline(3)
        x = [1.0, 0.0, 0.0]
        assert eval_green_filtered(m, f, x, 1.0) == 0.0  # spline vanishes at 0

    def test_wave3d_spline_centre(self):
        m = FieldModel.wave(3, 1.0)
        f = TemporalFilter.bspline(3)
        x = [0.0, 1.0, 0.0]
        expect = (2.0 / 3.0) / (4 * math.pi)
        assert eval_green_filtered(m, f, x, 3.0) == pytest.approx(expect, rel=1e-12)

    def test_diffusion_order0_matches_quadrature(self):
        m = FieldModel.diffusion(1, 1.0)
        f = TemporalFilter.bspline(0)
        got = eval_green_filtered(m, f, [0.0], 2.0)
        expect, err = quad(lambda s: (4 * math.pi * s) ** -0.5, 1.0, 2.0, epsabs=1e-12)
        assert err < 1e-10
        assert got == pytest.approx(expect, abs=1e-9)

    def test_none_filter_matches_plain(self):
        m = FieldModel.diffusion(2, 0.7)
        for t in (0.3, 1.5):
            assert eval_green_filtered(m, None, [0.3, -0.2], t) == eval_green(
                m, [0.3, -0.2], t
            )
            assert eval_green_filtered(m, TemporalFilter.none(), [0.3, -0.2], t) == (
                eval_green(m, [0.3, -0.2], t)
            )

    def test_wave3d_origin_singular(self):
        with pytest.raises(SingularPoint):
            eval_green_filtered(FieldModel.wave(3, 1.0), TemporalFilter.bspline(3),
                                [0.0, 0.0, 0.0], 1.0)


class TestLaplace:
    def test_diffusion_examples(self):
        m = FieldModel.diffusion(2, 1.0)
        got = laplace(m, [-1j, 0.0], -1j / 25)
        assert got == pytest.approx(1.0 / (1.0 - 1j / 25), rel=1e-14)
        assert laplace(m, [0.0, 0.0], 1.0) == pytest.approx(1.0)

    def test_wave_sign_matches_kernel_transform(self):
        # Transform of the impulsive-shell kernel delta(t - |x|/c)/(4 pi |x|):
        # quadrature of the defining integral fixes the sign as
        # 1/((s_t/c)^2 - sum s_x^2); at s_x = (-j,0,0), s_t = 0 that is +1.
        m = FieldModel.wave(3, 1.0)
        assert laplace(m, [-1j, 0.0, 0.0], 0.0) == pytest.approx(1.0)

    def test_diffusion_outside_roc(self):
        m = FieldModel.diffusion(1, 1.0)
        with pytest.raises(OutsideROC):
            laplace(m, [0.0], -1.0)
        with pytest.raises(OutsideROC):
            laplace(m, [0.0], 0.0)  # boundary is excluded

    def test_wave_pole(self):
        m = FieldModel.wave(3, 2.0)
        with pytest.raises(PoleEvaluation):
            laplace(m, [1.0, 0.0, 0.0], 2.0)  # sum s^2 = 1 = (s_t/c)^2

    def test_poisson_unsupported(self):
        with pytest.raises(Unsupported):
            laplace(FieldModel.poisson2d(), [1.0, 0.0], 0.0)

    def test_diffusion_against_quadrature(self):
        # Nested adaptive quadrature of the defining integral (spatial
        # Gaussian factors per dimension inside the time integral).
        m = FieldModel.diffusion(1, 0.8)
        s_x = np.array([0.4 - 0.9j])
        s_t = 1.3 + 0.5j
        got = laplace(m, s_x, s_t)
        expect = _diffusion_transform_quadrature(0.8, s_x, s_t)
        assert got == pytest.approx(expect, rel=1e-7)


def _diffusion_transform_quadrature(mu, s_x, s_t):
    d = len(s_x)
    q = s_t - mu * np.sum(np.asarray(s_x) ** 2)
    t_max = 40.0 / q.real  # integrand decays like exp(-Re(q) t)

    def spatial(t):
        total = 1.0 + 0.0j
        for s in s_x:
            width = math.sqrt(4 * mu * t)
            lim = 8 * width + 8 * abs(s) * mu * t + 1.0

            def f(x, part):
                val = math.exp(-(x * x) / (4 * mu * t)) * np.exp(-x * s)
                return val.real if part == 0 else val.imag

            re = quad(f, -lim, lim, args=(0,), limit=200)[0]
            im = quad(f, -lim, lim, args=(1,), limit=200)[0]
            total *= (re + 1j * im) / (4 * math.pi * mu * t) ** 0.5
        return total

    def g(t, part):
        val = spatial(t) * np.exp(-t * s_t)
        return val.real if part == 0 else val.imag

    re = quad(g, 0.0, t_max, args=(0,), limit=300)[0]
    im = quad(g, 0.0, t_max, args=(1,), limit=300)[0]
    return re + 1j * im


class TestBsplines:
    def test_point_values(self):
        assert eval_bspline(0, 0.5) == 1.0
        assert eval_bspline(1, 1.0) == 1.0
        assert eval_bspline(3, 2.0) == pytest.approx(2.0 / 3.0, rel=1e-14)

    def test_against_scipy_basis_element(self):
        from scipy.interpolate import BSpline

        for order in (1, 2, 3, 5):
            ref = BSpline.basis_element(np.arange(order + 2), extrapolate=False)
            ts = np.linspace(0.01, order + 0.99, 37)
            got = eval_bspline(order, ts)
            assert np.allclose(got, np.nan_to_num(ref(ts)), atol=1e-12)

    def test_support(self):
        assert eval_bspline(3, -0.1) == 0.0
        assert eval_bspline(3, 4.0) == 0.0
        assert eval_bspline(2, 3.5) == 0.0

    @pytest.mark.parametrize("order", range(8))
    def test_unit_mass(self, order):
        val, err = quad(lambda t: float(eval_bspline(order, t)), 0, order + 1,
                        points=list(range(1, order + 1)), limit=200, epsabs=1e-12)
        assert err < 1e-10
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_laplace_examples(self):
        assert bspline_laplace(3, 0.0) == 1.0
        expect = ((1 - np.exp(1j)) / (-1j)) ** 4
        assert bspline_laplace(3, -1j) == pytest.approx(expect, rel=1e-13)
        assert bspline_laplace(0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-13)

    def test_laplace_matches_quadrature(self):
        s = 0.7 - 1.3j
        for order in (0, 2, 3):
            def f(t, part):
                val = float(eval_bspline(order, t)) * np.exp(-t * s)
                return val.real if part == 0 else val.imag

            re = quad(f, 0, order + 1, args=(0,), limit=200)[0]
            im = quad(f, 0, order + 1, args=(1,), limit=200)[0]
            assert bspline_laplace(order, s) == pytest.approx(re + 1j * im, rel=1e-9)

    @given(order=st.integers(0, 6), re=st.floats(-2, 2), im=st.floats(-8, 8))
    @settings(max_examples=40, deadline=None)
    def test_power_identity(self, order, re, im):
        s = complex(re, im)
        base = bspline_laplace(0, s)
        assert bspline_laplace(order, s) == pytest.approx(base ** (order + 1), rel=1e-10)


class TestKernelValues:
    def test_matches_scalar_eval(self, rng):
        m = FieldModel.diffusion(2, 0.4)
        offsets = rng.normal(size=(5, 3, 2))
        lags = rng.uniform(-0.5, 2.0, size=(5, 3))
        vals = kernel_values(m, None, offsets, lags)
        for i in range(5):
            for j in range(3):
                assert vals[i, j] == pytest.approx(
                    eval_green(m, offsets[i, j], lags[i, j]), abs=1e-14
                )

    def test_wave2d_matches_scalar(self, rng):
        m = FieldModel.wave(2, 1.3)
        offsets = rng.normal(size=(4, 2)) * 0.5
        lags = rng.uniform(-0.2, 1.5, size=4)
        vals = kernel_values(m, None, offsets, lags)
        for i in range(4):
            assert vals[i] == pytest.approx(eval_green(m, offsets[i], lags[i]), abs=1e-14)

    def test_wave3d_filtered_matches_scalar(self):
        m = FieldModel.wave(3, 0.8)
        f = TemporalFilter.bspline(3)
        offsets = np.array([[0.3, 0.1, -0.2], [0.05, 0.0, 0.0]])
        lags = np.array([1.7, 2.3])
        vals = kernel_values(m, f, offsets, lags)
        for i in range(2):
            assert vals[i] == pytest.approx(
                eval_green_filtered(m, f, offsets[i], lags[i]), rel=1e-12, abs=1e-15
            )

    def test_broadcast_shapes(self):
        m = FieldModel.diffusion(1, 1.0)
        vals = kernel_values(m, None, np.zeros((4, 1, 1)), np.linspace(0.1, 1, 7)[None, :])
        assert vals.shape == (4, 7)
