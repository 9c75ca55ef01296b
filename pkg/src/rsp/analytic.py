"""Closed-form rate-entropy tradeoff and its quadrature cross-checks.

The extremal test channel is

    Q(y|x) = lam / (4 pi (e^lam - 1)) * exp(lam |<x|y>|^2)

which depends on the pair only through the overlap ``u = |<x|y>|^2``.
Because ``u`` is uniformly distributed on ``[0, 1]`` under the uniform
measure on the sphere (``dOmega = 4 pi du``), every sphere integral here
reduces to a one-dimensional integral in ``u``.

The multiplier ``lam`` traces the curve from the teleportation point
(``lam -> 0``: 2 bits, 1 ebit) towards zero entanglement (``lam -> inf``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from . import bloch
from .bloch import BlochPoint, DensityMatrix
from .errors import NumericalError, PreconditionError

LN2 = math.log(2.0)

# below this the Bernoulli series is used for 1/2 - p and for the rate
SERIES_CUTOFF = 1e-3

DEFAULT_GRID = (1e-4, 50.0, 200)

QUAD_TOL = 1e-10


def _check_lambda(lam):
    arr = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise PreconditionError("lambda must be finite and > 0")
    return arr


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _inv_expm1(lam):
    """``1 / (e^lam - 1)`` without overflow for large ``lam``."""
    with np.errstate(over="ignore"):
        small = 1.0 / np.expm1(np.minimum(lam, 1.0))
        e = np.exp(-np.maximum(lam, 1.0))
        large = e / -np.expm1(-np.maximum(lam, 1.0))
    return np.where(lam <= 1.0, small, large)


# 1/2 - p = sum_k B_2k lam^(2k-1) / (2k)!, convergent for lam < 2 pi; below
# HALF_GAP_CUTOFF twelve terms reach double precision and avoid the
# cancellation in 1/2 - 1/lam + 1/(e^lam - 1)
HALF_GAP_CUTOFF = 1.0


def _bernoulli_even(count):
    """Exact ``B_2, B_4, ..., B_2count`` from the standard recurrence."""
    b = [Fraction(1)]
    for m in range(1, 2 * count + 1):
        b.append(-sum(math.comb(m + 1, k) * b[k] for k in range(m)) / Fraction(m + 1))
    return [b[2 * k] for k in range(1, count + 1)]


_HALF_GAP_COEFFS = np.array(
    [float(bk / math.factorial(2 * k)) for k, bk in enumerate(_bernoulli_even(12), start=1)]
)


def _half_gap(lam):
    """``1/2 - p(lam)`` where ``p(lam) = 1/lam - 1/(e^lam - 1)``."""
    lam = np.asarray(lam, dtype=float)
    ls = np.minimum(lam, HALF_GAP_CUTOFF)
    ls2 = ls * ls
    series = np.zeros_like(ls)
    for c in _HALF_GAP_COEFFS[::-1]:
        series = series * ls2 + c
    series = series * ls
    lb = np.maximum(lam, HALF_GAP_CUTOFF)
    direct = 0.5 - 1.0 / lb + _inv_expm1(lb)
    return np.where(lam < HALF_GAP_CUTOFF, series, direct)


def posterior_minor_eigenvalue(lam):
    """``p(lam) = 1/lam - 1/(e^lam - 1)``, in ``(0, 1/2)``.

    This is the small eigenvalue of the rotated posterior state and the
    argument of the binary entropy in the entropy curve.
    """
    lam = _check_lambda(lam)
    return _scalar(0.5 - _half_gap(lam))


def _rate_nats(lam):
    lam = np.asarray(lam, dtype=float)
    ls = np.minimum(lam, SERIES_CUTOFF)
    series = ls**2 / 24.0 - ls**4 / 960.0 + ls**6 / 36288.0
    # moderate lam: g = lam/(e^lam-1) = 1 + lam*(d - 1/2)
    lm = np.clip(lam, SERIES_CUTOFF, 1.0)
    d = _half_gap(lm)
    moderate = lm * (0.5 + d) + np.log1p(lm * (d - 0.5))
    # large lam: log-domain form, no e^lam
    lb = np.maximum(lam, 1.0)
    g = lb * _inv_expm1(lb)
    large = g - 1.0 + np.log(lb) - np.log1p(-np.exp(-lb))
    out = np.where(lam < SERIES_CUTOFF, series, np.where(lam <= 1.0, moderate, large))
    return np.maximum(out, 0.0)


def rate_r1(lam):
    """Minimal classical rate in bits per letter at multiplier ``lam``.

    ``R1 = lam/(e^lam-1) - 1 + log(lam e^lam / (e^lam-1))`` nats, converted
    to bits. Nondecreasing in ``lam``, ``~ lam^2 / (24 ln 2)`` near zero.
    """
    lam = _check_lambda(lam)
    return _scalar(_rate_nats(lam) / LN2)


def entropy_s(lam):
    """Posterior von Neumann entropy per letter, ``h2(p(lam))``, in bits."""
    lam = _check_lambda(lam)
    return _scalar(bloch.binary_entropy_near_half(_half_gap(lam)))


def q_lambda_density(y, x, lam):
    """Density of the extremal channel per steradian.

    ``y`` and ``x`` may be :class:`BlochPoint` instances or arrays of unit
    vectors with broadcastable shapes.
    """
    lam = float(_check_lambda(lam))
    yv = y.vector if isinstance(y, BlochPoint) else np.asarray(y, dtype=float)
    xv = x.vector if isinstance(x, BlochPoint) else np.asarray(x, dtype=float)
    u = bloch.overlap_vectors(xv, yv)
    # lam/(e^lam-1) e^(lam u) = lam e^(lam(u-1)) / (1 - e^-lam)
    dens = lam * np.exp(lam * (np.asarray(u) - 1.0)) / -math.expm1(-lam)
    return _scalar(dens / (4.0 * math.pi))


def q_lambda_normalization(x: BlochPoint, lam, n_theta: int = 128, n_phi: int = 96) -> float:
    """Integral of ``q_lambda_density(. | x)`` over the sphere by product quadrature."""
    return bloch.integrate_over_sphere(
        lambda v: q_lambda_density(v, x.vector, lam), n_theta, n_phi
    )


def lambda_for_entropy(s_target: float) -> float:
    """Invert the entropy curve by bisection in ``log(lam)``.

    ``entropy_s`` is strictly decreasing, so the bracket
    ``[1e-9, 1e12]`` covers every target the float grid can resolve.
    """
    s_target = float(s_target)
    if not (0.0 < s_target < 1.0):
        raise PreconditionError("entropy target must lie in (0, 1)")
    lo, hi = math.log(1e-9), math.log(1e12)
    if entropy_s(math.exp(lo)) <= s_target:
        return math.exp(lo)
    if entropy_s(math.exp(hi)) >= s_target:
        raise PreconditionError(f"entropy target {s_target} below resolvable range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if entropy_s(math.exp(mid)) > s_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class CurvePoint:
    """One point of the tradeoff: rate and entropy per letter plus the
    resulting classical-bit and ebit cost per prepared state."""

    lam: float
    rate_bits: float
    entropy_bits: float
    b_bits: float
    e_ebits: float

    def as_dict(self):
        return asdict(self)


def tradeoff_point(lam: float) -> CurvePoint:
    lam = float(_check_lambda(lam))
    r = rate_r1(lam)
    s = entropy_s(lam)
    return CurvePoint(lam=lam, rate_bits=r, entropy_bits=s, b_bits=r + 2.0 * s, e_ebits=s)


def lambda_grid(lam_min: float = DEFAULT_GRID[0], lam_max: float = DEFAULT_GRID[1],
                points: int = DEFAULT_GRID[2]) -> np.ndarray:
    if not (0 < lam_min < lam_max) or points < 2:
        raise PreconditionError("need 0 < lam_min < lam_max and points >= 2")
    return np.geomspace(lam_min, lam_max, int(points))


def emit_curve(lambda_values=None) -> list[CurvePoint]:
    """Tradeoff points for a strictly increasing multiplier grid.

    Defaults to 200 log-spaced values in ``[1e-4, 50]``.
    """
    grid = lambda_grid() if lambda_values is None else np.asarray(lambda_values, dtype=float)
    _check_lambda(grid)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise PreconditionError("lambda grid must be a strictly increasing sequence")
    r = rate_r1(grid)
    s = entropy_s(grid)
    r = np.atleast_1d(r)
    s = np.atleast_1d(s)
    return [
        CurvePoint(lam=float(l), rate_bits=float(ri), entropy_bits=float(si),
                   b_bits=float(ri + 2.0 * si), e_ebits=float(si))
        for l, ri, si in zip(grid, r, s)
    ]


def chord_gaps(s, r) -> np.ndarray:
    """Signed convexity margins of ``r`` as a function of ``s``.

    For each interior point, the chord through its neighbours evaluated
    at the point minus the point's value. A convex curve has all gaps
    ``>= 0``. Points may come in either order of ``s``.
    """
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    order = np.argsort(s)
    s, r = s[order], r[order]
    s0, s1, s2 = s[:-2], s[1:-1], s[2:]
    r0, r1, r2 = r[:-2], r[1:-1], r[2:]
    t = (s1 - s0) / (s2 - s0)
    return (1.0 - t) * r0 + t * r2 - r1


# ---------------------------------------------------------------------------
# quadrature oracles
# ---------------------------------------------------------------------------


def _quad(f, a, b, what):
    val, err = integrate.quad(f, a, b, epsabs=QUAD_TOL * 1e-2, epsrel=1e-13, limit=200)
    if not err <= QUAD_TOL:
        raise NumericalError(f"{what}: quadrature error {err:.2e} above {QUAD_TOL:.0e}", err)
    return val


def _log_overlap_density(lam):
    """``log f(u)`` for the overlap density ``f(u) = lam e^(lam u)/(e^lam - 1)``."""
    log_norm = math.log(lam) - math.log(-math.expm1(-lam)) - lam
    return lambda u: log_norm + lam * u


def mutual_information_quadrature(lam, x: BlochPoint | None = None) -> float:
    """Mutual information of the extremal channel under a uniform source, in bits.

    With ``x=None`` the expectation of ``log(Q/q)`` is taken by adaptive
    quadrature in the overlap variable, using that the output marginal is
    uniform (``q = 1/(4 pi)``). Passing ``x`` instead integrates over the
    full sphere of outputs around that input with a product rule, which
    checks isotropy directly.
    """
    lam = float(_check_lambda(lam))
    if x is not None:
        def integrand(v):
            dens = q_lambda_density(v, x.vector, lam)
            return dens * np.log(4.0 * math.pi * dens)
        val = bloch.integrate_over_sphere(integrand, 160, 128)
        return max(0.0, val) / LN2
    log_f = _log_overlap_density(lam)
    val = _quad(lambda u: math.exp(log_f(u)) * log_f(u), 0.0, 1.0, "mutual information")
    return max(0.0, val) / LN2


def posterior_state(lam, n_phi: int = 16) -> DensityMatrix:
    """Rotated posterior ``int dx P(x|0) |x><x|`` as a 2x2 density matrix.

    Adaptive quadrature in the polar angle; the azimuth is handled by the
    trapezoid rule, which integrates the ``e^{-i phi}`` coherence exactly.
    """
    lam = float(_check_lambda(lam))
    scale = lam / -math.expm1(-lam) / (4.0 * math.pi)

    def weight(theta):
        u = 0.5 * (1.0 + math.cos(theta))
        return scale * math.exp(lam * (u - 1.0)) * math.sin(theta)

    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    phase_sum = np.sum(np.exp(-1j * phis)) * (2.0 * math.pi / n_phi)
    rho00 = 2.0 * math.pi * _quad(lambda t: weight(t) * 0.5 * (1.0 + math.cos(t)),
                                  0.0, math.pi, "posterior state")
    rho11 = 2.0 * math.pi * _quad(lambda t: weight(t) * 0.5 * (1.0 - math.cos(t)),
                                  0.0, math.pi, "posterior state")
    coh = _quad(lambda t: weight(t) * 0.5 * math.sin(t), 0.0, math.pi, "posterior state")
    rho01 = coh * phase_sum
    m = np.array([[rho00, rho01], [np.conj(rho01), rho11]], dtype=complex)
    m /= np.trace(m).real
    return DensityMatrix(m)
