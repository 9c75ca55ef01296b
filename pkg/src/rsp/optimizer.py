"""Discrete rate-entropy minimization over a cap partition.

The single-letter problem ``min I(Q) subject to S(Q) = S`` is solved in
Lagrangian form ``J = I + mu * S`` (both in bits) by alternating updates:

1. output marginal ``q(y) = sum_x p(x) Q(y|x)``;
2. posterior states ``rho_y = sum_x P(x|y) tau_x`` with ``tau_x`` the
   state attached to input letter ``x``;
3. rows ``Q(y|x) ~ q(y) exp(mu <tau_x, ln rho_y>)``.

Step 3 minimizes ``sum p Q log(Q/r) - mu sum_y tr(sigma_y ln tau_y)`` for
fixed ``(r, tau)``, which upper-bounds ``J`` (Gibbs and Klein
inequalities) with equality at ``r = q, tau = rho``. So ``J`` never
increases from one sweep to the next. For axially symmetric posteriors
with eigenvalues ``(1-p, p)`` the row update is ``exp(lam * u)`` with
``lam = mu * ln((1-p)/p)``, which is how the multiplier maps to the
closed-form channel.

Every letter state is a qubit, so posteriors are handled as Bloch
vectors: ``ln rho = a I + b (r_hat . sigma)`` with
``a, b = (ln l+ +- ln l-) / 2``.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytic, bloch
from .bloch import CapPartition, DensityMatrix
from .errors import PreconditionError

LN2 = math.log(2.0)
ROW_TOL = 1e-10
MONOTONE_TOL = 1e-9
REGULARIZATION = 1e-12

DEFAULT_CAPS = 500
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 5000
DEFAULT_RESTARTS = 3


def letter_vectors(partition: CapPartition, states: str = "centroid") -> np.ndarray:
    """Bloch vectors of the states attached to each cap.

    ``"centroid"`` uses the pure centroid state; ``"cap_mean"`` uses the
    uniform mixture over the cap, i.e. what is known about a continuous
    source point once only its cap is known.
    """
    if states == "centroid":
        return partition.centroid_vectors
    if states == "cap_mean":
        return partition.mean_vectors
    raise PreconditionError(f"unknown letter states {states!r}")


def _posterior(q_matrix, weights, vectors):
    joint = weights[:, None] * q_matrix
    marginal = joint.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (joint.T @ vectors) / marginal[:, None]
    r = np.where(marginal[:, None] > 0, r, 0.0)
    return marginal, r


@dataclass(frozen=True)
class DiscreteChannel:
    """Row-stochastic channel ``q_matrix[x, y] = Q(y|x)`` between caps."""

    partition: CapPartition = field(repr=False)
    q_matrix: np.ndarray = field(repr=False)
    states: str = "centroid"
    marginal: np.ndarray = field(init=False, repr=False)
    posterior_vectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        qm = np.asarray(self.q_matrix, dtype=float)
        n = self.partition.cap_count
        if qm.shape != (n, n):
            raise PreconditionError(f"channel shape {qm.shape} does not match {n} caps")
        if np.any(qm < 0) or not np.all(np.isfinite(qm)):
            raise PreconditionError("channel entries must be finite and nonnegative")
        if np.max(np.abs(qm.sum(axis=1) - 1.0)) > ROW_TOL:
            raise PreconditionError("channel rows must sum to 1")
        qm.setflags(write=False)
        object.__setattr__(self, "q_matrix", qm)
        marginal, r = _posterior(qm, self.partition.weights, self.letter_vectors)
        object.__setattr__(self, "marginal", marginal)
        object.__setattr__(self, "posterior_vectors", r)

    @property
    def letter_vectors(self) -> np.ndarray:
        return letter_vectors(self.partition, self.states)

    @property
    def joint(self) -> np.ndarray:
        """``P(x, y) = p(x) Q(y|x)``."""
        return self.partition.weights[:, None] * self.q_matrix

    @property
    def posterior_states(self) -> list[DensityMatrix]:
        return [bloch.density_from_bloch(r) for r in self.posterior_vectors]


def discrete_mutual_information(ch: DiscreteChannel) -> float:
    """``sum_x p(x) sum_y Q(y|x) log2(Q(y|x) / q(y))``."""
    qm = ch.q_matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(qm > 0, qm / ch.marginal[None, :], 1.0)
        terms = np.where(qm > 0, qm * np.log2(ratio), 0.0)
    return float(max(0.0, ch.partition.weights @ terms.sum(axis=1)))


def discrete_posterior_entropy(ch: DiscreteChannel) -> float:
    """Marginal-weighted von Neumann entropy of the posterior states, bits."""
    norms = np.linalg.norm(ch.posterior_vectors, axis=1)
    h = bloch.qubit_entropy_from_bloch_norm(norms)
    return float(np.dot(ch.marginal, h))


def lagrangian(ch: DiscreteChannel, multiplier: float) -> float:
    return discrete_mutual_information(ch) + multiplier * discrete_posterior_entropy(ch)


def discretize_analytic_channel(partition: CapPartition, lam: float,
                                states: str = "centroid") -> DiscreteChannel:
    """``Q(y|x) ~ q_lambda(c_y | c_x) * w_y`` on the cap centroids."""
    lam = float(analytic._check_lambda(lam))
    c = partition.centroid_vectors
    u = np.clip((1.0 + c @ c.T) / 2.0, 0.0, 1.0)
    logits = lam * u + np.log(partition.weights)[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    qm = np.exp(logits)
    qm /= qm.sum(axis=1, keepdims=True)
    return DiscreteChannel(partition, qm, states)


def multiplier_for_lambda(lam: float) -> float:
    """Multiplier ``mu`` at which the closed-form channel is stationary.

    ``mu = lam / ln((1-p)/p)`` with ``p = p(lam)``; it tends to 3 as
    ``lam -> 0`` and is the negative slope ``-dR/dS`` of the curve.
    """
    lam = float(analytic._check_lambda(lam))
    d = float(analytic._half_gap(lam))
    # ln((1/2 + d) / (1/2 - d)) = 2 artanh(2d)
    return lam / (2.0 * math.atanh(2.0 * d))


def lambda_for_multiplier(mu: float) -> float:
    """Inverse of :func:`multiplier_for_lambda`, defined for ``mu > 3``."""
    mu = float(mu)
    if not mu > 3.0:
        raise PreconditionError("only multipliers above 3 have a nontrivial extremum")
    lo, hi = math.log(1e-8), math.log(1e8)
    if multiplier_for_lambda(math.exp(lo)) >= mu:
        return math.exp(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if multiplier_for_lambda(math.exp(mid)) < mu:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


def _row_update(ch: DiscreteChannel, multiplier: float):
    """One sweep of the alternating update; returns ``(q_matrix, regularized)``."""
    r = ch.posterior_vectors
    norms = np.linalg.norm(r, axis=1)
    regularized = bool(np.any(1.0 - norms <= 1e-15))
    if regularized:
        # mix each singular posterior with 1e-12 * I/2
        r = np.where((1.0 - norms <= 1e-15)[:, None], r * (1.0 - REGULARIZATION), r)
        norms = np.linalg.norm(r, axis=1)
    lp = np.log((1.0 + norms) / 2.0)
    lm = np.log((1.0 - norms) / 2.0)
    a = 0.5 * (lp + lm)
    b = 0.5 * (lp - lm)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(norms[:, None] > 0, r / norms[:, None], 0.0)
    # <tau_x, ln rho_y> = a_y + b_y (r_hat_y . v_x)
    g = a[None, :] + (ch.letter_vectors @ (direction * b[:, None]).T)
    with np.errstate(divide="ignore"):
        logits = np.log(ch.marginal)[None, :] + multiplier * g
    logits -= logits.max(axis=1, keepdims=True)
    qm = np.exp(logits)
    qm /= qm.sum(axis=1, keepdims=True)
    return qm, regularized


def _extrapolate(q0, q1, q2, alpha=None):
    """SQUAREM point on log-probabilities.

    Returns ``(q_matrix, alpha)``; ``alpha`` defaults to the steplength
    ``-|r|/|v|`` and is never above -1 (which reproduces ``q2``).
    """
    with np.errstate(divide="ignore"):
        l0, l1, l2 = (np.maximum(np.log(q), -700.0) for q in (q0, q1, q2))
    r = l1 - l0
    v = l2 - 2.0 * l1 + l0
    if alpha is None:
        nv = np.linalg.norm(v)
        alpha = -np.linalg.norm(r) / nv if nv > 0 else -1.0
    alpha = min(-1.0, alpha)
    logits = l0 - 2.0 * alpha * r + alpha * alpha * v
    logits -= logits.max(axis=1, keepdims=True)
    # empty outputs stay empty
    qm = np.where(q2 > 0, np.exp(logits), 0.0)
    qm /= qm.sum(axis=1, keepdims=True)
    return qm, alpha


def fixed_point_step(ch: DiscreteChannel, multiplier: float) -> DiscreteChannel:
    qm, _ = _row_update(ch, multiplier)
    return DiscreteChannel(ch.partition, qm, ch.states)


@dataclass(frozen=True)
class ObjectiveReport:
    multiplier: float
    mutual_info_bits: float
    posterior_entropy_bits: float
    lagrangian_value: float
    iterations: int
    converged: bool
    residual: float
    regularized: bool = False
    first_residual: float = float("nan")

    def as_dict(self):
        return asdict(self)


def _initial_channel(partition, init, states, rng_seed=None):
    n = partition.cap_count
    if isinstance(init, DiscreteChannel):
        if init.partition is not partition and init.partition.cap_count != n:
            raise PreconditionError("initial channel belongs to another partition")
        return DiscreteChannel(partition, init.q_matrix, states)
    if init == "uniform":
        return DiscreteChannel(partition, np.tile(partition.weights, (n, 1)), states)
    if isinstance(init, str):
        m = re.fullmatch(r"random(?:\((\d+)\))?", init.strip())
        if m:
            seed = int(m.group(1)) if m.group(1) is not None else rng_seed
            rng = np.random.default_rng(seed)
            qm = rng.exponential(size=(n, n))
            qm /= qm.sum(axis=1, keepdims=True)
            return DiscreteChannel(partition, qm, states)
    raise PreconditionError(f"unknown init {init!r}")


def fixed_point_solve(partition: CapPartition, multiplier: float, init="uniform",
                      tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                      states: str = "centroid", debug: bool = False,
                      accelerate: bool = True):
    """Iterate the alternating update until the largest entry change is below ``tol``.

    The residual is always the change produced by one plain update. With
    ``accelerate`` the iterates are extrapolated (SQUAREM, in log space)
    every two updates; an extrapolated point is kept only if it does not
    raise the Lagrangian, so descent is preserved. Every map evaluation
    counts as an iteration.

    ``init`` is a :class:`DiscreteChannel`, ``"uniform"``, or
    ``"random(seed)"``. Returns ``(channel, report)``. Raises
    ``RuntimeError`` if the Lagrangian increases by more than 1e-9 bits
    between sweeps.
    """
    multiplier = float(multiplier)
    if not multiplier > 0 or not math.isfinite(multiplier):
        raise PreconditionError("multiplier must be > 0")
    if not tol > 0:
        raise PreconditionError("tol must be > 0")
    if int(max_iters) < 1:
        raise PreconditionError("max_iters must be >= 1")

    ch = _initial_channel(partition, init, states)
    value = lagrangian(ch, multiplier)
    residual = float("inf")
    first_residual = float("nan")
    regularized = False
    converged = False
    it = 0

    def accept(qm):
        nonlocal ch, value
        new = DiscreteChannel(partition, qm, states)
        if debug and np.max(np.abs(qm.sum(axis=1) - 1.0)) > ROW_TOL:
            raise RuntimeError(f"row sums drifted at iteration {it}")
        new_value = lagrangian(new, multiplier)
        if new_value > value + MONOTONE_TOL:
            raise RuntimeError(
                f"Lagrangian increased by {new_value - value:.3e} at iteration {it}"
            )
        ch, value = new, new_value

    while it < max_iters:
        q1, reg = _row_update(ch, multiplier)
        regularized |= reg
        residual = float(np.max(np.abs(q1 - ch.q_matrix)))
        if it == 0:
            first_residual = residual
        it += 1
        if residual < tol or not accelerate or it >= max_iters:
            accept(q1)
            if residual < tol:
                converged = True
                break
            continue
        q0 = ch.q_matrix
        accept(q1)
        q2, reg = _row_update(ch, multiplier)
        regularized |= reg
        it += 1
        accept(q2)
        alpha = None
        while it < max_iters:
            trial, alpha = _extrapolate(q0, q1, q2, alpha)
            if alpha == -1.0 or not np.all(np.isfinite(trial)):
                break
            q3, reg = _row_update(DiscreteChannel(partition, trial, states), multiplier)
            it += 1
            if lagrangian(DiscreteChannel(partition, q3, states), multiplier) <= value:
                regularized |= reg
                accept(q3)
                break
            alpha = (alpha - 1.0) / 2.0

    report = ObjectiveReport(
        multiplier=multiplier,
        mutual_info_bits=discrete_mutual_information(ch),
        posterior_entropy_bits=discrete_posterior_entropy(ch),
        lagrangian_value=value,
        iterations=it,
        converged=converged,
        residual=residual,
        regularized=regularized,
        first_residual=first_residual,
    )
    return ch, report


def stationarity_residual(partition: CapPartition, lam: float, states: str = "centroid"):
    """Entry changes after one update applied to the discretized closed-form channel.

    Returns ``(max_abs, max_rel)``: the largest absolute change, and the
    largest change relative to the entry itself.
    """
    ch = discretize_analytic_channel(partition, lam, states)
    qm, _ = _row_update(ch, multiplier_for_lambda(lam))
    diff = np.abs(qm - ch.q_matrix)
    return float(diff.max()), float((diff / ch.q_matrix).max())


def curve_gap(report: ObjectiveReport) -> float:
    """Mutual information minus the closed-form rate at the same entropy."""
    s = report.posterior_entropy_bits
    if s >= 1.0 - 1e-15:
        return report.mutual_info_bits
    if s <= 0.0:
        return float("nan")
    return report.mutual_info_bits - analytic.rate_r1(analytic.lambda_for_entropy(s))


def sweep_multiplier(partition: CapPartition, multiplier_grid, tol: float = DEFAULT_TOL,
                     max_iters: int = DEFAULT_MAX_ITERS, seed: int = 0,
                     restarts: int = DEFAULT_RESTARTS, states: str = "centroid",
                     workers: int = 1) -> list[ObjectiveReport]:
    """Best-of-``restarts`` random-init solves for each multiplier.

    Seeds are spawned per (multiplier, restart) from ``seed`` so the
    result does not depend on ``workers``.
    """
    grid = [float(m) for m in multiplier_grid]
    if not grid or any(m <= 0 for m in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError("multiplier grid must be positive and increasing")
    if restarts < 1:
        raise PreconditionError("restarts must be >= 1")
    children = np.random.SeedSequence(seed).spawn(len(grid) * restarts)
    jobs = [
        (mu, int(children[i * restarts + k].generate_state(1)[0]))
        for i, mu in enumerate(grid)
        for k in range(restarts)
    ]

    def run(job):
        mu, s = job
        return fixed_point_solve(partition, mu, f"random({s})", tol, max_iters, states)[1]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    best = []
    for i in range(len(grid)):
        group = results[i * restarts:(i + 1) * restarts]
        best.append(min(group, key=lambda r: r.lagrangian_value))
    return best
