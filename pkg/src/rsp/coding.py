"""Monte Carlo simulation of random-codebook coding on the Bloch sphere.

A source block of ``n`` uniform points is coarse-grained to cap indices,
mapped to the first codeword that is jointly typical with it, and every
letter is then rotated by the map sending its codeword letter's centroid to
the north pole. Pooling the rotated letters gives a single-qubit state
whose entropy estimates the per-letter posterior entropy of the code.

Two notions of joint typicality are available:

``"strong"``
    letter- and pair-frequency typicality with slack ``delta / |X|`` and
    ``delta / |X|^2``. It needs every pair with probability above the
    slack to occur in the block, so it is empty unless ``n`` is at least
    the number of such pairs (thousands for 48 caps).
``"weak"``
    entropy typicality: the per-letter log-probabilities of ``x``, ``y``
    and ``(x, y)`` are each within ``delta`` bits of the corresponding
    entropies. This is the default since it is non-degenerate at
    ``n <= 16``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytic, bloch
from .bloch import BlochPoint, CapPartition
from .errors import PreconditionError, ResourceError
from .optimizer import discretize_analytic_channel

MAX_CODE_BITS = 24
CHUNK_BLOCKS = 4096
BOOTSTRAP_RESAMPLES = 200
MIN_CODEWORD_SAMPLES = 30
MAX_EXACT_N = 8
TYPICALITY_KINDS = ("weak", "strong")


@dataclass(frozen=True)
class TypicalityParams:
    delta: float
    partition: CapPartition = field(repr=False)
    n: int

    def __post_init__(self):
        if not self.delta > 0:
            raise PreconditionError("delta must be > 0")
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError("blocklength must be an integer >= 1")
        object.__setattr__(self, "n", int(self.n))

    @property
    def cap_count(self) -> int:
        return self.partition.cap_count


def _as_indices(seq, params: TypicalityParams) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.shape != (params.n,):
        raise PreconditionError(f"sequence length {arr.shape} differs from n={params.n}")
    if arr.min() < 0 or arr.max() >= params.cap_count:
        raise PreconditionError("cap index out of range")
    return arr


def is_typical(seq, dist, params: TypicalityParams) -> bool:
    """Every letter frequency within ``delta / cap_count`` of ``dist``."""
    seq = _as_indices(seq, params)
    dist = np.asarray(dist, dtype=float)
    freq = np.bincount(seq, minlength=params.cap_count) / params.n
    return bool(np.all(np.abs(freq - dist) < params.delta / params.cap_count))


def is_jointly_typical(x_seq, y_seq, joint, params: TypicalityParams) -> bool:
    """Every pair frequency within ``delta / cap_count**2`` of ``joint[x, y]``."""
    x = _as_indices(x_seq, params)
    y = _as_indices(y_seq, params)
    k = params.cap_count
    joint = np.asarray(joint, dtype=float)
    counts = np.bincount(x * k + y, minlength=k * k).reshape(k, k) / params.n
    return bool(np.all(np.abs(counts - joint) < params.delta / k**2))


class _WeakTables:
    """Per-letter code lengths and entropies for entropy typicality."""

    def __init__(self, joint):
        joint = np.asarray(joint, dtype=float)
        px = joint.sum(axis=1)
        qy = joint.sum(axis=0)
        with np.errstate(divide="ignore"):
            self.lx = -np.log2(px)
            self.ly = -np.log2(qy)
            self.lxy = -np.log2(joint)
        self.hx = _entropy_bits(px)
        self.hy = _entropy_bits(qy)
        self.hxy = _entropy_bits(joint.ravel())


def _entropy_bits(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def is_weakly_jointly_typical(x_seq, y_seq, joint, params: TypicalityParams) -> bool:
    """Entropy typicality of ``x``, ``y`` and the pair, each within ``delta`` bits."""
    x = _as_indices(x_seq, params)
    y = _as_indices(y_seq, params)
    t = _WeakTables(joint)
    return bool(
        abs(t.lx[x].mean() - t.hx) < params.delta
        and abs(t.ly[y].mean() - t.hy) < params.delta
        and abs(t.lxy[x, y].mean() - t.hxy) < params.delta
    )


# ---------------------------------------------------------------------------
# codebooks and encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """``K`` codewords of ``n`` cap indices, stored as a ``(K, n)`` array."""

    codewords: np.ndarray

    def __post_init__(self):
        cw = np.array(self.codewords, dtype=np.int64)
        if cw.ndim != 2 or cw.shape[0] < 1 or cw.shape[1] < 1:
            raise PreconditionError("codewords must form a non-empty (K, n) array")
        if cw.min() < 0:
            raise PreconditionError("negative cap index in codebook")
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def K(self) -> int:
        return self.codewords.shape[0]

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate_bits(self) -> float:
        return math.log2(self.K) / self.n


def codebook_size(n: int, rate_bits: float) -> int:
    """``round(2^(n R))``, refusing codebooks beyond ``2^24`` words."""
    if rate_bits < 0 or not math.isfinite(rate_bits):
        raise PreconditionError("rate must be finite and >= 0")
    if n * rate_bits > MAX_CODE_BITS:
        raise ResourceError(
            f"n * rate = {n * rate_bits:.3g} bits exceeds the desk-scale guard "
            f"of {MAX_CODE_BITS} bits (MAX_CODE_BITS)"
        )
    return max(1, round(2.0 ** (n * rate_bits)))


def generate_codebook(params: TypicalityParams, rate_bits: float, marginal, seed) -> Codebook:
    """Random codebook with letters drawn i.i.d. from ``marginal``."""
    k = codebook_size(params.n, rate_bits)
    marginal = np.asarray(marginal, dtype=float)
    if marginal.shape != (params.cap_count,):
        raise PreconditionError("marginal must have one entry per cap")
    rng = np.random.default_rng(seed)
    cw = rng.choice(params.cap_count, size=(k, params.n), p=marginal / marginal.sum())
    return Codebook(cw)


def _encode_weak(x_hat, codebook, tables, delta, budget=4_000_000):
    ok_x = np.abs(tables.lx[x_hat].mean(axis=1) - tables.hx) < delta
    ok_y = np.abs(tables.ly[codebook.codewords].mean(axis=1) - tables.hy) < delta
    out = np.full(x_hat.shape[0], -1, dtype=np.int64)
    cw = codebook.codewords
    n = codebook.n
    # codewords are scanned in index order so the first hit is the lowest index;
    # the (rows, codewords, n) temporary stays within ``budget`` entries
    block = max(1, min(codebook.K, budget // n))
    for a in range(0, codebook.K, block):
        b = min(codebook.K, a + block)
        pending = np.flatnonzero((out < 0) & ok_x)
        if pending.size == 0:
            break
        step = max(1, budget // ((b - a) * n))
        for lo in range(0, pending.size, step):
            rows = pending[lo:lo + step]
            dens = tables.lxy[x_hat[rows][:, None, :], cw[None, a:b, :]].mean(axis=2)
            hit = (np.abs(dens - tables.hxy) < delta) & ok_y[None, a:b]
            found = hit.any(axis=1)
            out[rows[found]] = a + np.argmax(hit[found], axis=1)
    return out


def _encode_strong(x_hat, codebook, joint, params):
    k = params.cap_count
    n = params.n
    slack = params.delta / k**2
    out = np.full(x_hat.shape[0], -1, dtype=np.int64)
    # pairs above the slack must all occur; with fewer than that many
    # letters no block can be typical
    if np.count_nonzero(joint >= slack) > n:
        return out
    px = joint.sum(axis=1)
    for i, x in enumerate(x_hat):
        if not is_typical(x, px, TypicalityParams(params.delta, params.partition, n)):
            continue
        for c, y in enumerate(codebook.codewords):
            counts = np.bincount(x * k + y, minlength=k * k).reshape(k, k) / n
            if np.all(np.abs(counts - joint) < slack):
                out[i] = c
                break
    return out


def encode_indices(x_hat, codebook: Codebook, joint, params: TypicalityParams,
                   typicality: str = "weak") -> np.ndarray:
    """First jointly typical codeword index for each row of ``x_hat``, or -1."""
    x_hat = np.asarray(x_hat, dtype=np.int64).reshape(-1, params.n)
    if codebook.n != params.n:
        raise PreconditionError("codebook blocklength differs from params.n")
    if typicality == "weak":
        return _encode_weak(x_hat, codebook, _WeakTables(joint), params.delta)
    if typicality == "strong":
        return _encode_strong(x_hat, codebook, np.asarray(joint, dtype=float), params)
    raise PreconditionError(f"typicality must be one of {TYPICALITY_KINDS}")


def encode(x_block, codebook: Codebook, joint, params: TypicalityParams,
           typicality: str = "weak"):
    """Codeword index for a block of ``n`` points, or ``None`` on failure."""
    pts = list(x_block)
    if len(pts) != params.n:
        raise PreconditionError(f"block has {len(pts)} letters, expected {params.n}")
    x_hat = params.partition.locate(bloch.as_vectors(pts))
    idx = int(encode_indices(x_hat[None, :], codebook, joint, params, typicality)[0])
    return None if idx < 0 else idx


# ---------------------------------------------------------------------------
# entropy estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropyEstimate:
    pooled_rotated_entropy: float
    exact_block_entropy: float | None
    encoder_failure_rate: float
    samples_used: int
    confidence_halfwidth: float
    valid: bool
    codebook_size: int
    code_rate_bits: float
    coarse_graining_bias: float

    def as_dict(self):
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, float) and not math.isfinite(val):
                d[key] = None
        return d


def _tree_sum(parts):
    """Pairwise reduction; fixes the summation order independent of workers."""
    parts = list(parts)
    if not parts:
        return np.zeros(3)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _product_kets(vectors):
    """``(m, n, 3)`` Bloch vectors to ``(m, 2^n)`` product state vectors."""
    kets = bloch.kets_from_vectors(vectors)
    out = kets[:, 0, :]
    for i in range(1, kets.shape[1]):
        out = np.einsum("ma,mb->mab", out, kets[:, i, :]).reshape(out.shape[0], -1)
    return out


def _exact_block_entropy(x_vectors, idx, n):
    if n > MAX_EXACT_N or idx.size == 0:
        return None
    codes, counts = np.unique(idx, return_counts=True)
    total = 0.0
    weight = 0
    for c, m in zip(codes, counts):
        if m < MIN_CODEWORD_SAMPLES:
            continue
        v = _product_kets(x_vectors[idx == c])
        rho = (v.T @ v.conj()) / m
        total += m * bloch.von_neumann_entropy(rho) / n
        weight += m
    return total / weight if weight else None


def coarse_graining_bias(partition: CapPartition, lam: float) -> float:
    """Entropy error of the ideal coarse-grained channel simulation.

    Exact (no sampling): the pooled state when each letter is drawn as
    ``y`` from the discretized channel marginal, cap ``x`` from the
    discrete posterior, the point uniformly inside that cap, and the
    point rotated by the map sending ``y``'s centroid to the north pole.
    Returned as pooled entropy minus the closed-form entropy.
    """
    ch = discretize_analytic_channel(partition, lam)
    joint = ch.joint
    rot = bloch.su2_to_so3(bloch.north_unitaries(partition.centroid_vectors))
    # sum_y sum_x P(x,y) R_y m_x
    per_y = joint.T @ partition.mean_vectors
    r = np.einsum("yij,yj->i", rot, per_y)
    pooled = float(bloch.qubit_entropy_from_bloch_norm(np.linalg.norm(r)))
    return pooled - analytic.entropy_s(lam)


def _simulate_chunk(args):
    seed, m, params, codebook, joint, typicality = args
    rng = np.random.default_rng(seed)
    x = bloch.sample_uniform_sphere(rng, (m, params.n))
    x_hat = params.partition.locate(x)
    idx = encode_indices(x_hat, codebook, joint, params, typicality)
    ok = idx >= 0
    y_centroids = params.partition.centroid_vectors[codebook.codewords[idx[ok]]]
    rotated = bloch.rotate_to_north(x[ok], y_centroids)
    return rotated.sum(axis=1), x[ok], idx[ok]


def estimate_posterior_entropy(lam: float, params: TypicalityParams, rate_bits: float,
                               num_samples: int, seed, *, codebook: Codebook | None = None,
                               typicality: str = "weak", workers: int = 1,
                               bootstrap: int = BOOTSTRAP_RESAMPLES) -> EntropyEstimate:
    """Posterior entropy per letter of a random code, by simulation.

    The joint distribution is the closed-form channel at ``lam``
    discretized on ``params.partition``. Source blocks are processed in
    fixed-size chunks with seeds spawned from ``seed``, so results depend
    only on ``seed`` and not on ``workers``.
    """
    lam = float(analytic._check_lambda(lam))
    if int(num_samples) < 1000:
        raise PreconditionError("num_samples must be >= 1000")
    num_samples = int(num_samples)
    if typicality not in TYPICALITY_KINDS:
        raise PreconditionError(f"typicality must be one of {TYPICALITY_KINDS}")
    channel = discretize_analytic_channel(params.partition, lam)
    joint = channel.joint
    root = np.random.SeedSequence(seed)
    cb_seed, boot_seed, chunk_root = root.spawn(3)
    if codebook is None:
        codebook = generate_codebook(params, rate_bits, channel.marginal, cb_seed)
    elif codebook.n != params.n:
        raise PreconditionError("codebook blocklength differs from params.n")

    sizes = [CHUNK_BLOCKS] * (num_samples // CHUNK_BLOCKS)
    if num_samples % CHUNK_BLOCKS:
        sizes.append(num_samples % CHUNK_BLOCKS)
    seeds = chunk_root.spawn(len(sizes))
    jobs = [(s, m, params, codebook, joint, typicality) for s, m in zip(seeds, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_simulate_chunk, jobs))
    else:
        results = [_simulate_chunk(j) for j in jobs]

    block_sums = np.concatenate([r[0] for r in results])
    successes = block_sums.shape[0]
    failure = 1.0 - successes / num_samples
    bias = coarse_graining_bias(params.partition, lam)
    if successes == 0:
        return EntropyEstimate(float("nan"), None, failure, num_samples, float("nan"),
                               False, codebook.K, codebook.rate_bits, bias)

    r = _tree_sum([r[0].sum(axis=0) for r in results]) / (successes * params.n)
    pooled = bloch.von_neumann_entropy(bloch.density_from_bloch(r))

    rng = np.random.default_rng(boot_seed)
    boots = np.empty(bootstrap)
    for b in range(bootstrap):
        pick = rng.integers(0, successes, successes)
        rb = block_sums[pick].sum(axis=0) / (successes * params.n)
        boots[b] = bloch.qubit_entropy_from_bloch_norm(np.linalg.norm(rb))
    halfwidth = 1.96 * float(boots.std(ddof=1)) if bootstrap > 1 else float("nan")

    exact = None
    if params.n <= MAX_EXACT_N:
        xs = np.concatenate([r[1] for r in results])
        ids = np.concatenate([r[2] for r in results])
        exact = _exact_block_entropy(xs, ids, params.n)

    return EntropyEstimate(
        pooled_rotated_entropy=pooled,
        exact_block_entropy=exact,
        encoder_failure_rate=failure,
        samples_used=num_samples,
        confidence_halfwidth=halfwidth,
        valid=True,
        codebook_size=codebook.K,
        code_rate_bits=codebook.rate_bits,
        coarse_graining_bias=bias,
    )


# ---------------------------------------------------------------------------
# continuous channel sampling
# ---------------------------------------------------------------------------


def sample_channel_inputs(y: np.ndarray, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``x ~ P(.|y)`` for each row of ``y``, without coarse graining.

    The overlap ``u`` has density ``lam e^(lam u) / (e^lam - 1)`` on
    ``[0, 1]`` and is drawn by inversion; the azimuth about ``y`` is
    uniform.
    """
    lam = float(analytic._check_lambda(lam))
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1]
    v = rng.uniform(0.0, 1.0, shape)
    # lam u = lam + log(v (1 - e^-lam) + e^-lam)
    u = 1.0 + np.log(v * -math.expm1(-lam) + math.exp(-lam)) / lam
    cos_g = np.clip(2.0 * u - 1.0, -1.0, 1.0)
    sin_g = np.sqrt(1.0 - cos_g**2)
    psi = rng.uniform(0.0, bloch.TWO_PI, shape)
    helper = np.where(np.abs(y[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    e1 = np.cross(y, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(y, e1)
    return (cos_g[..., None] * y
            + sin_g[..., None] * (np.cos(psi)[..., None] * e1 + np.sin(psi)[..., None] * e2))


def pooled_channel_state(lam: float, num_samples: int, seed):
    """Rotation-pooled state of the continuous channel by Monte Carlo.

    Draws ``y`` uniformly, ``x ~ P(.|y)``, rotates ``x`` by the map taking
    ``y`` to the north pole and averages. Returns ``(density, z_stderr)``
    where ``z_stderr`` is the standard error of the pooled z component.
    """
    rng = np.random.default_rng(seed)
    y = bloch.sample_uniform_sphere(rng, num_samples)
    x = sample_channel_inputs(y, lam, rng)
    rotated = bloch.rotate_to_north(x, y)
    r = rotated.mean(axis=0)
    stderr = float(rotated[:, 2].std(ddof=1) / math.sqrt(num_samples))
    return bloch.density_from_bloch(r), stderr


# ---------------------------------------------------------------------------
# hemisphere example
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HemisphereResult:
    exact: float
    monte_carlo: float
    gap: float
    upper_entropy: float
    lower_entropy: float
    num_samples: int

    def as_dict(self):
        return asdict(self)


def lo_hemisphere_example(num_samples: int = 1_000_000, seed=0) -> HemisphereResult:
    """One bit naming the hemisphere: exact and sampled posterior entropy.

    The exact value uses the closed-form hemisphere mixture: the mean of
    ``cos(theta)`` over a hemisphere is 1/2, so the posterior has Bloch
    vector ``(0, 0, +-1/2)`` and eigenvalues ``(3/4, 1/4)``.
    """
    if int(num_samples) < 1000:
        raise PreconditionError("num_samples must be >= 1000")
    exact = bloch.von_neumann_entropy(bloch.density_from_bloch([0.0, 0.0, 0.5]))
    rng = np.random.default_rng(seed)
    x = bloch.sample_uniform_sphere(rng, int(num_samples))
    upper = x[:, 2] >= 0.0
    entropies = []
    for mask in (upper, ~upper):
        entropies.append(bloch.von_neumann_entropy(bloch.mix_vectors(x[mask])))
    frac = upper.mean()
    mc = frac * entropies[0] + (1.0 - frac) * entropies[1]
    return HemisphereResult(exact, float(mc), abs(float(mc) - exact),
                            entropies[0], entropies[1], int(num_samples))


def hemisphere_codebook() -> Codebook:
    """The two-word, blocklength-1 code {north, south} on the 2-cap partition."""
    return Codebook(np.array([[0], [1]]))


__all__ = [
    "BlochPoint",
    "Codebook",
    "EntropyEstimate",
    "HemisphereResult",
    "TypicalityParams",
    "coarse_graining_bias",
    "encode",
    "encode_indices",
    "estimate_posterior_entropy",
    "generate_codebook",
    "hemisphere_codebook",
    "is_jointly_typical",
    "is_typical",
    "is_weakly_jointly_typical",
    "lo_hemisphere_example",
    "pooled_channel_state",
    "sample_channel_inputs",
]
