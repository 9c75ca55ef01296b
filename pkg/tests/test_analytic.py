import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsp import analytic, bloch
from rsp.bloch import NORTH, BlochPoint
from rsp.errors import PreconditionError

# 50-digit mpmath evaluations of the closed forms, frozen to 15 digits:
# lam -> (rate bits, entropy bits, minor eigenvalue p)
ORACLE = {
    0.1: (0.000600972692716683, 0.999799683187303, 0.49166805522495),
    0.5: (0.0149347650340001, 0.995026335817632, 0.458505917463202),
    1.0: (0.0586482256532711, 0.980521839118367, 0.418023293130674),
    2.0: (0.218706687670102, 0.928112163187841, 0.343482357250334),
    5.0: (0.937920480164005, 0.708151524404168, 0.193216345093696),
    10.0: (1.87995356601154, 0.468851656159052, 0.0999545980089903),
}
LAMBDA_AT_08113 = 3.59322657266722


@pytest.mark.parametrize("lam", sorted(ORACLE))
def test_closed_forms_match_oracle(lam):
    r, s, p = ORACLE[lam]
    assert analytic.rate_r1(lam) == pytest.approx(r, rel=1e-12)
    assert analytic.entropy_s(lam) == pytest.approx(s, rel=1e-13)
    assert analytic.posterior_minor_eigenvalue(lam) == pytest.approx(p, rel=1e-13)


def test_rate_limits():
    assert analytic.rate_r1(1e-12) == pytest.approx(0.0, abs=1e-24)
    lam = 1e-4
    assert analytic.rate_r1(lam) == pytest.approx(lam**2 / (24 * math.log(2)), rel=1e-6)
    # large lam: R1 ~ log2(lam) - log2(e)
    assert analytic.rate_r1(1e6) == pytest.approx(math.log2(1e6) - 1 / math.log(2), rel=1e-9)


def test_entropy_limits():
    assert analytic.entropy_s(1e-10) == pytest.approx(1.0, abs=1e-15)
    assert analytic.entropy_s(1e8) < 1e-6
    assert analytic.entropy_s(700.0) > 0.0


def test_vectorized_and_continuous_across_branches():
    lam = np.array([analytic.SERIES_CUTOFF * (1 - 1e-9), analytic.SERIES_CUTOFF * (1 + 1e-9),
                    1.0 - 1e-12, 1.0 + 1e-12])
    r = analytic.rate_r1(lam)
    s = analytic.entropy_s(lam)
    assert r.shape == (4,)
    assert r[1] == pytest.approx(r[0], rel=1e-7)
    assert r[3] == pytest.approx(r[2], rel=1e-10)
    assert s[1] == pytest.approx(s[0], abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("inf"), float("nan")])
def test_rejects_bad_lambda(bad):
    with pytest.raises(PreconditionError):
        analytic.rate_r1(bad)
    with pytest.raises(PreconditionError):
        analytic.entropy_s(bad)


class TestDensity:
    @pytest.mark.parametrize("lam", [1e-3, 0.5, 2.0, 10.0, 40.0])
    def test_normalized(self, lam):
        x = BlochPoint(0.8, 1.9)
        assert abs(analytic.q_lambda_normalization(x, lam) - 1.0) < 1e-9

    def test_normalization_closed_form(self):
        # with u uniform on [0,1]: int dOmega Q = int_0^1 lam e^(lam u)/(e^lam - 1) du = 1
        lam = 3.0
        vals = np.linspace(0, 1, 200001)
        dens = np.array([analytic.q_lambda_density(BlochPoint(math.acos(2 * u - 1)), NORTH, lam)
                         for u in vals[::1000]])
        expected = lam * np.exp(lam * vals[::1000]) / math.expm1(lam) / (4 * math.pi)
        assert np.allclose(dens, expected, rtol=1e-13)

    def test_flat_for_small_lambda(self):
        rng = np.random.default_rng(0)
        y = bloch.sample_uniform_sphere(rng, 100)
        d = analytic.q_lambda_density(y, NORTH.vector, 1e-9)
        assert np.allclose(d, 1 / (4 * math.pi), rtol=1e-8)

    def test_peak_at_input(self):
        x = BlochPoint(1.1, 0.4)
        v, _ = bloch.sphere_grid(40, 40)
        d = analytic.q_lambda_density(v, x.vector, 4.0)
        assert analytic.q_lambda_density(x, x, 4.0) >= d.max()
        assert np.dot(v[np.argmax(d)], x.vector) > 0.99

    def test_large_lambda_no_overflow(self):
        assert math.isfinite(analytic.q_lambda_density(NORTH, NORTH, 800.0))


class TestInversion:
    def test_roundtrip_two(self):
        assert analytic.lambda_for_entropy(analytic.entropy_s(2.0)) == pytest.approx(2.0, abs=1e-8)

    def test_near_one(self):
        assert analytic.lambda_for_entropy(1 - 1e-12) < 1e-4

    def test_quarter_entropy(self):
        lam = analytic.lambda_for_entropy(0.8113)
        assert lam == pytest.approx(LAMBDA_AT_08113, rel=1e-9)
        assert analytic.posterior_minor_eigenvalue(lam) == pytest.approx(0.25, abs=1e-4)

    @given(st.floats(-3.0, 2.0))
    def test_roundtrip_property(self, log_lam):
        lam = 10.0**log_lam
        assert analytic.lambda_for_entropy(analytic.entropy_s(lam)) == pytest.approx(lam, rel=1e-6)

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, s):
        with pytest.raises(PreconditionError):
            analytic.lambda_for_entropy(s)


class TestCurve:
    def test_teleportation_point(self):
        p = analytic.tradeoff_point(1e-4)
        assert abs(p.b_bits - 2.0) < 1e-3
        assert abs(p.e_ebits - 1.0) < 1e-3

    def test_lambda_one(self):
        p = analytic.tradeoff_point(1.0)
        r, s, _ = ORACLE[1.0]
        assert p.b_bits == pytest.approx(r + 2 * s, rel=1e-13)
        assert p.e_ebits == pytest.approx(s, rel=1e-13)

    def test_default_grid_shape(self):
        pts = analytic.emit_curve()
        assert len(pts) == 200
        s = np.array([p.entropy_bits for p in pts])
        r = np.array([p.rate_bits for p in pts])
        b = np.array([p.b_bits for p in pts])
        e = np.array([p.e_ebits for p in pts])
        assert np.all(np.diff(s) < 0)
        assert np.all(np.diff(r) > 0)
        assert np.all(analytic.chord_gaps(s, r) >= -1e-9)
        assert np.all(e <= 1.0)
        assert np.all(b >= 2 * e)

    def test_rejects_unsorted_grid(self):
        with pytest.raises(PreconditionError):
            analytic.emit_curve([1.0, 0.5])

    def test_chord_gaps_sign(self):
        s = np.linspace(0, 1, 11)
        assert np.all(analytic.chord_gaps(s, s**2) > 0)
        assert np.all(analytic.chord_gaps(s, -(s**2)) < 0)


class TestQuadrature:
    @pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    def test_mutual_information(self, lam):
        assert analytic.mutual_information_quadrature(lam) == pytest.approx(ORACLE[lam][0], abs=1e-10)

    def test_mutual_information_small(self):
        assert analytic.mutual_information_quadrature(1e-8) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("x", [NORTH, BlochPoint(2.0, 4.0), BlochPoint(math.pi / 2, 1.0)])
    def test_isotropy(self, x):
        assert analytic.mutual_information_quadrature(2.0, x) == pytest.approx(
            analytic.mutual_information_quadrature(2.0), abs=1e-9)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
    def test_posterior_state(self, lam):
        rho = analytic.posterior_state(lam)
        assert bloch.von_neumann_entropy(rho) == pytest.approx(analytic.entropy_s(lam), abs=1e-10)
        assert abs(rho.data[0, 1]) < 1e-10
        assert rho.data[1, 1].real == pytest.approx(ORACLE[lam][2], abs=1e-12)

    def test_posterior_small_lambda(self):
        assert np.allclose(analytic.posterior_state(1e-8).data, np.eye(2) / 2, atol=1e-8)
