"""Bloch-sphere geometry, qubit density matrices and entropies.

Points on the sphere are pure qubit states
``|x> = sqrt((1+cos t)/2)|0> + exp(i p) sqrt((1-cos t)/2)|1>``.
Most routines come in a scalar flavour taking :class:`BlochPoint` and an
array flavour working on ``(..., 3)`` unit vectors; the array flavour is
what the simulators use.

All entropies are returned in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidStateError, PreconditionError

TWO_PI = 2.0 * math.pi

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochPoint:
    """A pure qubit state given by polar angle ``theta`` and azimuth ``phi``.

    ``phi`` is wrapped into ``[0, 2*pi)`` and set to 0 at either pole so
    that equal states compare equal.
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        theta = float(self.theta)
        phi = float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise PreconditionError("BlochPoint angles must be finite")
        if theta < 0.0 or theta > math.pi:
            raise PreconditionError(f"theta={theta} outside [0, pi]")
        phi = math.fmod(phi, TWO_PI)
        if phi < 0.0:
            phi += TWO_PI
        if phi >= TWO_PI:
            phi = 0.0
        if theta == 0.0 or theta == math.pi:
            phi = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_vector(cls, v) -> "BlochPoint":
        x, y, z = (float(c) for c in v)
        rxy = math.hypot(x, y)
        if rxy == 0.0 and z == 0.0:
            raise PreconditionError("zero vector has no direction")
        theta = math.atan2(rxy, z)
        phi = math.atan2(y, x) if (x != 0.0 or y != 0.0) else 0.0
        return cls(theta, phi)

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )

    @property
    def ket(self) -> np.ndarray:
        half = 0.5 * self.theta
        return np.array(
            [math.cos(half), np.exp(1j * self.phi) * math.sin(half)], dtype=complex
        )


NORTH = BlochPoint(0.0, 0.0)
SOUTH = BlochPoint(math.pi, 0.0)


def spherical_to_vectors(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def as_vectors(points: Sequence[BlochPoint] | np.ndarray) -> np.ndarray:
    """Return an ``(N, 3)`` array for a list of points or pass arrays through."""
    if isinstance(points, np.ndarray):
        return points
    return np.array([p.vector for p in points]).reshape(-1, 3)


def kets_from_vectors(v: np.ndarray) -> np.ndarray:
    """Spinors ``(..., 2)`` for unit Bloch vectors ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    z = np.clip(v[..., 2], -1.0, 1.0)
    rxy = np.hypot(v[..., 0], v[..., 1])
    # take the larger amplitude from z and the smaller from |a b| = rxy / 2
    big_a = np.sqrt((1.0 + np.abs(z)) / 2.0)
    small = rxy / (2.0 * big_a)
    a = np.where(z >= 0.0, big_a, small)
    b_mag = np.where(z >= 0.0, small, big_a)
    phase = np.exp(1j * np.arctan2(v[..., 1], v[..., 0]))
    return np.stack([a.astype(complex), phase * b_mag], axis=-1)


def sample_uniform_sphere(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform unit vectors via (z, azimuth) sampling."""
    z = rng.uniform(-1.0, 1.0, size)
    phi = rng.uniform(0.0, TWO_PI, size)
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def overlap(x: BlochPoint, y: BlochPoint) -> float:
    """``|<x|y>|^2 = (1 + cos gamma) / 2`` for great-circle angle gamma."""
    return overlap_vectors(x.vector, y.vector)


def overlap_vectors(a, b):
    d = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    out = np.clip((1.0 + d) / 2.0, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def great_circle_angle(a, b):
    d = np.clip(np.sum(np.asarray(a) * np.asarray(b), axis=-1), -1.0, 1.0)
    return np.arccos(d)


# ---------------------------------------------------------------------------
# density matrices
# ---------------------------------------------------------------------------


class DensityMatrix:
    """Validated Hermitian, trace-one, positive semidefinite matrix.

    The dimension must be a power of two no larger than 1024.
    """

    __slots__ = ("_data", "_eigvals")

    def __init__(self, data, check: bool = True):
        arr = np.array(data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidStateError(f"expected a square matrix, got shape {arr.shape}")
        dim = arr.shape[0]
        if dim < 1 or dim > 1024 or dim & (dim - 1):
            raise InvalidStateError(f"dimension {dim} is not a power of two <= 1024")
        arr.setflags(write=False)
        self._data = arr
        self._eigvals = None
        if check:
            self._validate()

    def _validate(self):
        a = self._data
        if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("matrix is not Hermitian")
        tr = np.trace(a)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace {tr.real:.15g} differs from 1")
        if self.eigenvalues.min() < -PSD_TOL:
            raise InvalidStateError(
                f"negative eigenvalue {self.eigenvalues.min():.3g}"
            )

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eigvals is None:
            h = (self._data + self._data.conj().T) / 2.0
            self._eigvals = np.linalg.eigvalsh(h)
        return self._eigvals

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, eigenvalues={self.eigenvalues})"


def density_from_bloch(r) -> DensityMatrix:
    """``(I + r . sigma) / 2`` for a Bloch vector with ``|r| <= 1``."""
    r = np.asarray(r, dtype=float)
    m = 0.5 * (np.eye(2) + np.einsum("i,ijk->jk", r, PAULI))
    return DensityMatrix(m)


def bloch_from_density(rho) -> np.ndarray:
    m = np.asarray(rho)
    if m.shape != (2, 2):
        raise PreconditionError("Bloch vector only defined for 2x2 matrices")
    return np.real(np.einsum("ijk,kj->i", PAULI, m))


def pure_density(x: BlochPoint) -> DensityMatrix:
    k = x.ket
    return DensityMatrix(np.outer(k, k.conj()))


def _normalized_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise PreconditionError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise PreconditionError("weights must be finite and nonnegative")
    total = math.fsum(w)
    if abs(total - 1.0) > 1e-9:
        raise PreconditionError(f"weights sum to {total!r}, not 1")
    return w / total


def mix(points: Iterable[tuple[BlochPoint, float]]) -> DensityMatrix:
    """Weighted mixture ``sum_k w_k |x_k><x_k|`` of pure states."""
    pairs = list(points)
    if not pairs:
        raise PreconditionError("empty mixture")
    vecs = np.array([p.vector for p, _ in pairs])
    w = _normalized_weights([w for _, w in pairs])
    return mix_vectors(vecs, w)


def mix_vectors(vectors: np.ndarray, weights=None) -> DensityMatrix:
    """Mixture of the pure states with Bloch vectors ``vectors`` ``(N, 3)``.

    Qubit mixtures are affine in the Bloch vector, so the result is
    ``(I + r . sigma) / 2`` with ``r`` the weighted mean vector.
    """
    vectors = np.asarray(vectors, dtype=float).reshape(-1, 3)
    if weights is None:
        r = vectors.mean(axis=0)
    else:
        w = _normalized_weights(weights)
        if w.shape[0] != vectors.shape[0]:
            raise PreconditionError("weights and points differ in length")
        r = w @ vectors
    return density_from_bloch(r)


def von_neumann_entropy(rho) -> float:
    """``-sum_i l_i log2 l_i`` over the eigenvalues of ``rho``.

    Eigenvalues in ``[-1e-10, 0)`` are treated as solver noise and
    clipped to zero; anything more negative is rejected.
    """
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    return entropy_from_eigenvalues(rho.eigenvalues)


def entropy_from_eigenvalues(evals) -> float:
    ev = np.asarray(evals, dtype=float)
    if ev.min() < -PSD_TOL:
        raise InvalidStateError(f"negative eigenvalue {ev.min():.3g}")
    ev = ev[ev > 0.0]
    h = -np.sum(ev * np.log(ev)) / math.log(2.0)
    return float(max(0.0, h))


def binary_entropy(p):
    """``h2(p) = -p log2 p - (1-p) log2(1-p)`` with ``0 log 0 = 0``.

    Accepts scalars or arrays.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise PreconditionError("probability outside [0, 1]")
    q = 1.0 - arr
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(arr > 0.0, -arr * np.log2(np.where(arr > 0, arr, 1.0)), 0.0)
        b = np.where(q > 0.0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    out = a + b
    return float(out) if out.ndim == 0 else out


def binary_entropy_near_half(d):
    """``h2(1/2 - d)`` accurate when ``d`` is tiny.

    Uses ``h2((1-t)/2) = 1 - sum_k t^(2k) / (2k(2k-1) ln 2)`` with
    ``t = 2d`` for ``|t| < 1/2`` so that ``1 - h2`` keeps full relative
    precision near the maximum.
    """
    d = np.asarray(d, dtype=float)
    t = 2.0 * np.abs(d)
    small = t < 0.5
    ts = np.where(small, t, 0.0)
    t2 = ts * ts
    acc = np.zeros_like(ts)
    term = np.ones_like(ts)
    for k in range(1, 40):
        term = term * t2
        acc = acc + term / (2 * k * (2 * k - 1))
    series = 1.0 - acc / math.log(2.0)
    direct = binary_entropy(np.clip(0.5 - np.abs(d), 0.0, 1.0))
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def qubit_entropy_from_bloch_norm(r):
    """Entropy in bits of a qubit state with Bloch vector length ``r``."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return binary_entropy_near_half(r / 2.0)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rotation:
    """An SU(2) element together with its SO(3) action on Bloch vectors."""

    unitary: np.ndarray
    so3: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "so3", su2_to_so3(u))

    def apply(self, x: BlochPoint) -> BlochPoint:
        return BlochPoint.from_vector(self.so3 @ x.vector)

    def apply_ket(self, ket) -> np.ndarray:
        return self.unitary @ np.asarray(ket, dtype=complex)

    def apply_vectors(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v) @ self.so3.T


def su2_to_so3(u: np.ndarray) -> np.ndarray:
    """``R_ij = tr(sigma_i U sigma_j U^dagger) / 2``; works on batches."""
    u = np.asarray(u, dtype=complex)
    ud = np.conj(np.swapaxes(u, -1, -2))
    m = np.einsum("iab,...bc,jcd,...da->...ij", PAULI, u, PAULI, ud)
    return np.real(m) / 2.0


def north_unitaries(vectors: np.ndarray) -> np.ndarray:
    """Batch of SU(2) matrices sending each state in ``vectors`` to ``|0>``.

    For ``|y> = (a, b)`` the matrix is ``[[a*, b*], [-b, a]]``.
    """
    k = kets_from_vectors(vectors)
    a = k[..., 0]
    b = k[..., 1]
    top = np.stack([np.conj(a), np.conj(b)], axis=-1)
    bottom = np.stack([-b, a], axis=-1)
    return np.stack([top, bottom], axis=-2)


def rotation_to_north(y: BlochPoint) -> Rotation:
    """Unit-determinant rotation taking ``y`` to the north pole."""
    return Rotation(north_unitaries(y.vector))


def rotate_to_north(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Rotate each row of ``points`` by the map sending ``targets`` to north.

    Both arrays are ``(..., 3)`` with matching leading shapes.
    """
    r = su2_to_so3(north_unitaries(targets))
    return np.einsum("...ij,...j->...i", r, points)


# ---------------------------------------------------------------------------
# quadrature on the sphere
# ---------------------------------------------------------------------------


def sphere_grid(n_theta: int = 96, n_phi: int = 64, z_range=(-1.0, 1.0)):
    """Product quadrature on the sphere (or a polar zone).

    Gauss-Legendre in ``z = cos(theta)`` over ``z_range`` times the
    trapezoid rule in azimuth. Weights are normalized to sum to one, so
    for the full sphere they are the uniform measure. Returns
    ``(vectors, weights)``.
    """
    zlo, zhi = z_range
    nodes, w = np.polynomial.legendre.leggauss(n_theta)
    z = 0.5 * (zhi - zlo) * nodes + 0.5 * (zhi + zlo)
    wz = 0.5 * (zhi - zlo) * w
    phi = TWO_PI * np.arange(n_phi) / n_phi
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(np.maximum(0.0, 1.0 - zz * zz))
    vecs = np.stack([r * np.cos(pp), r * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    weights = np.repeat(wz, n_phi) / n_phi
    return vecs, weights / weights.sum()


def integrate_over_sphere(func, n_theta: int = 128, n_phi: int = 64) -> float:
    """Integral of ``func(vectors)`` over the sphere with area element ``dOmega``."""
    vecs, w = sphere_grid(n_theta, n_phi)
    return float(4.0 * math.pi * np.dot(w, func(vecs)))


# ---------------------------------------------------------------------------
# equal-area cap partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapPartition:
    """Equal-area partition of the sphere into near-circular caps.

    Caps are numbered from the north polar cap, band by band, with
    sectors in increasing azimuth. ``band_z`` holds the ``cos(theta)``
    boundaries from +1 down to -1 and ``band_sectors`` the number of caps
    in each band (1 for the polar caps).
    """

    band_z: np.ndarray
    band_sectors: np.ndarray
    centroid_vectors: np.ndarray = field(repr=False)
    mean_vectors: np.ndarray = field(repr=False)
    diameters: np.ndarray = field(repr=False)

    @property
    def cap_count(self) -> int:
        return int(self.band_sectors.sum())

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.cap_count, 1.0 / self.cap_count)

    @property
    def diameter_bound(self) -> float:
        return float(self.diameters.max())

    @property
    def centroids(self) -> list[BlochPoint]:
        return [BlochPoint.from_vector(v) for v in self.centroid_vectors]

    @property
    def band_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.band_sectors)[:-1]])

    def locate(self, vectors: np.ndarray) -> np.ndarray:
        """Index of the cap containing each unit vector."""
        v = np.asarray(vectors, dtype=float)
        z = np.clip(v[..., 2], -1.0, 1.0)
        # band_z is decreasing; band k covers band_z[k+1] <= z < band_z[k]
        band = np.searchsorted(-self.band_z[1:-1], -z, side="left")
        band = np.minimum(band, len(self.band_sectors) - 1)
        m = self.band_sectors[band]
        phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
        sector = np.minimum((phi / TWO_PI * m).astype(np.int64), m - 1)
        return self.band_offsets[band] + sector

    def sample_in_caps(self, caps: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Uniform points inside the given caps."""
        caps = np.asarray(caps, dtype=np.int64)
        band = np.searchsorted(np.cumsum(self.band_sectors), caps, side="right")
        sector = caps - self.band_offsets[band]
        m = self.band_sectors[band]
        z = rng.uniform(self.band_z[band + 1], self.band_z[band])
        phi = (sector + rng.uniform(0.0, 1.0, caps.shape)) * TWO_PI / m
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _band_layout(n: int):
    """Collar boundaries and sector counts for ``n`` equal-area caps."""
    if n == 2:
        return np.array([1.0, 0.0, -1.0]), np.array([1, 1])
    area = 4.0 * math.pi / n
    polar = 2.0 * math.asin(math.sqrt(1.0 / n))
    ideal_angle = math.sqrt(area)
    n_collars = max(1, round((math.pi - 2.0 * polar) / ideal_angle))
    fit_angle = (math.pi - 2.0 * polar) / n_collars
    counts = []
    carry = 0.0
    for i in range(n_collars):
        t1 = polar + i * fit_angle
        t2 = t1 + fit_angle
        ideal = 2.0 * math.pi * (math.cos(t1) - math.cos(t2)) / area
        m = round(ideal + carry)
        carry += ideal - m
        counts.append(m)
    counts = [c for c in counts if c > 0]
    sectors = np.array([1] + counts + [1])
    cum = np.cumsum(sectors)
    z = 1.0 - 2.0 * cum / n
    band_z = np.concatenate([[1.0], z])
    band_z[-1] = -1.0
    return band_z, sectors


def _sector_mean(z1, z2, f1, f2):
    """Mean position vector over the region ``z2 <= z <= z1, f1 <= phi <= f2``."""
    t1, t2 = math.acos(z1), math.acos(z2)
    s = 0.5 * ((t2 - math.sin(t2) * math.cos(t2)) - (t1 - math.sin(t1) * math.cos(t1)))
    x = s * (math.sin(f2) - math.sin(f1))
    y = -s * (math.cos(f2) - math.cos(f1))
    zc = 0.5 * (z1 * z1 - z2 * z2) * (f2 - f1)
    area = (z1 - z2) * (f2 - f1)
    return np.array([x, y, zc]) / area


def _sector_diameter(z1, z2, f1, f2, samples=48):
    if z1 == 1.0 and f2 - f1 >= TWO_PI:
        return math.pi if z2 <= 0.0 else 2.0 * math.acos(z2)
    if z2 == -1.0 and f2 - f1 >= TWO_PI:
        return math.pi if z1 >= 0.0 else 2.0 * math.acos(-z1)
    zs = np.linspace(z2, z1, samples)
    fs = np.linspace(f1, f2, samples)
    boundary = np.concatenate(
        [
            np.stack([np.full(samples, z1), fs], 1),
            np.stack([np.full(samples, z2), fs], 1),
            np.stack([zs, np.full(samples, f1)], 1),
            np.stack([zs, np.full(samples, f2)], 1),
        ]
    )
    r = np.sqrt(np.maximum(0.0, 1.0 - boundary[:, 0] ** 2))
    v = np.stack([r * np.cos(boundary[:, 1]), r * np.sin(boundary[:, 1]), boundary[:, 0]], 1)
    return float(great_circle_angle(v[:, None, :], v[None, :, :]).max())


def build_partition(target_caps: int) -> CapPartition:
    """Partition the sphere into ``target_caps`` caps of equal area.

    Two polar caps plus latitude collars, each collar cut into equal
    azimuthal sectors whose count is chosen so that the sectors are about
    as tall as they are wide. Collar heights are then adjusted so that
    every cap has area exactly ``4 pi / N``. ``target_caps == 2`` gives the
    two hemispheres.
    """
    if int(target_caps) != target_caps or target_caps < 2:
        raise PreconditionError("target_caps must be an integer >= 2")
    n = int(target_caps)
    band_z, sectors = _band_layout(n)
    centroids, means, diam = [], [], []
    for b, m in enumerate(sectors):
        z1, z2 = band_z[b], band_z[b + 1]
        for s in range(m):
            f1 = TWO_PI * s / m
            f2 = TWO_PI * (s + 1) / m
            mean = _sector_mean(z1, z2, f1, f2)
            means.append(mean)
            norm = np.linalg.norm(mean)
            if norm < 1e-12:
                # full ring symmetric about the equator
                zm = 0.5 * (z1 + z2)
                fm = 0.5 * (f1 + f2)
                rm = math.sqrt(1.0 - zm * zm)
                centroids.append(np.array([rm * math.cos(fm), rm * math.sin(fm), zm]))
            else:
                centroids.append(mean / norm)
            diam.append(_sector_diameter(z1, z2, f1, f2))
    return CapPartition(
        band_z=band_z,
        band_sectors=sectors,
        centroid_vectors=np.array(centroids),
        mean_vectors=np.array(means),
        diameters=np.array(diam),
    )
