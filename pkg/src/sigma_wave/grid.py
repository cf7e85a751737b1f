"""Fourier-side representation of real fields on the two dimensional torus.

Everything downstream (propagators, noise, dynamics) manipulates fields
through their Fourier coefficients on an ``n_grid x n_grid`` lattice of
integer modes.  Conventions, fixed once here:

* the torus is ``[0, 2*pi)^2`` with the *normalized* Lebesgue measure, so
  ``integral |f|^2 dx == sum_n |fhat(n)|^2`` (Parseval with numpy's
  ``norm="forward"`` scaling);
* coefficients are stored in numpy FFT layout, mode ``n = (n1, n2)`` with
  ``n_i in {-n_grid/2, ..., n_grid/2 - 1}``;
* real fields satisfy the Hermitian symmetry ``fhat(-n) == conj(fhat(n))``
  with index arithmetic mod ``n_grid``.  Random sampling keeps exact
  realness by drawing only a half lattice and mirroring; modes on the
  Nyquist lines that have no mirror partner inside the sampled mode ball
  are kept real or zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "GridSpec",
    "SpectralField",
    "PairState",
    "ComponentEnsemble",
    "ball_mask",
    "dealias_mask",
    "project",
    "i_multiplier",
    "apply_i_operator",
    "sobolev_norm",
    "sup_sobolev_norm",
    "rms",
    "hermitian_defect",
    "hermitian_symmetrize",
    "random_field",
    "save_field",
    "load_field",
    "FIELD_MAGIC",
    "FIELD_VERSION",
]

FIELD_MAGIC = b"SGWV"
FIELD_VERSION = 1


@lru_cache(maxsize=64)
def _mode_vectors(n_grid: int) -> tuple[np.ndarray, np.ndarray]:
    k = (np.fft.fftfreq(n_grid) * n_grid).astype(np.int64)
    n1, n2 = np.meshgrid(k, k, indexing="ij")
    n1.setflags(write=False)
    n2.setflags(write=False)
    return n1, n2


@lru_cache(maxsize=64)
def _mode_norm_sq(n_grid: int) -> np.ndarray:
    n1, n2 = _mode_vectors(n_grid)
    out = (n1 * n1 + n2 * n2).astype(np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridSpec:
    """Square Fourier grid on the torus together with the mass parameter.

    Parameters
    ----------
    n_grid : int
        Number of collocation points per direction; must be even and >= 4.
    m : float
        Mass in the dispersion relation ``m + |n|^2``; must be positive.
    """

    n_grid: int
    m: float

    def __post_init__(self) -> None:
        if self.n_grid < 4 or self.n_grid % 2 != 0:
            raise ValueError(f"n_grid must be even and >= 4, got {self.n_grid}")
        if not self.m > 0:
            raise ValueError(f"mass m must be positive, got {self.m}")

    @property
    def nyquist(self) -> int:
        return self.n_grid // 2

    @cached_property
    def mode_norm_sq(self) -> np.ndarray:
        """``|n|^2`` for every mode, in FFT layout (read-only)."""
        return _mode_norm_sq(self.n_grid)

    @cached_property
    def dispersion(self) -> np.ndarray:
        """``m + |n|^2`` per mode (read-only)."""
        out = self.m + _mode_norm_sq(self.n_grid)
        out.setflags(write=False)
        return out

    def shape(self) -> tuple[int, int]:
        return (self.n_grid, self.n_grid)


@lru_cache(maxsize=256)
def _ball_mask(n_grid: int, radius: float) -> np.ndarray:
    if radius < 0:
        mask = np.zeros((n_grid, n_grid), dtype=bool)
    else:
        mask = _mode_norm_sq(n_grid) <= radius * radius + 1e-9
    mask.setflags(write=False)
    return mask


def ball_mask(spec: GridSpec, radius: float) -> np.ndarray:
    """Boolean mask of modes with ``|n| <= radius``."""
    return _ball_mask(spec.n_grid, float(radius))


def dealias_mask(spec: GridSpec) -> np.ndarray:
    """Mask for the 2/3-rule mode set, ``|n| <= (2/3) * nyquist``."""
    return _ball_mask(spec.n_grid, 2.0 * spec.nyquist / 3.0)


class SpectralField:
    """A real scalar field stored through its Fourier coefficients.

    The coefficient array is owned by the instance; arithmetic returns new
    fields.  Realness of the represented field is a property of the data
    (Hermitian symmetry), checked on demand via :func:`hermitian_defect`.
    """

    __slots__ = ("spec", "coeffs")

    def __init__(self, spec: GridSpec, coeffs: np.ndarray, copy: bool = True):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != spec.shape():
            raise ValueError(f"coefficient shape {coeffs.shape} != {spec.shape()}")
        self.spec = spec
        self.coeffs = coeffs.copy() if copy else coeffs

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SpectralField":
        return cls(spec, np.zeros(spec.shape(), dtype=np.complex128), copy=False)

    @classmethod
    def from_grid(cls, spec: GridSpec, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != spec.shape():
            raise ValueError(f"grid shape {values.shape} != {spec.shape()}")
        return cls(spec, np.fft.fft2(values, norm="forward"), copy=False)

    def to_grid(self) -> np.ndarray:
        """Collocation values; the imaginary residual is dropped."""
        return np.fft.ifft2(self.coeffs, norm="forward").real

    def copy(self) -> "SpectralField":
        return SpectralField(self.spec, self.coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.spec, self.coeffs + other.coeffs, copy=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.spec, self.coeffs - other.coeffs, copy=False)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.spec, self.coeffs * scalar, copy=False)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.spec, -self.coeffs, copy=False)

    def _check(self, other: "SpectralField") -> None:
        if other.spec != self.spec:
            raise ValueError(f"mismatched grid specs: {self.spec} vs {other.spec}")


@dataclass
class PairState:
    """Position/velocity pair ``(u, du/dt)`` on a shared grid."""

    pos: SpectralField
    vel: SpectralField

    def __post_init__(self) -> None:
        if self.pos.spec != self.vel.spec:
            raise ValueError("pos and vel live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.pos.spec

    @classmethod
    def zeros(cls, spec: GridSpec) -> "PairState":
        return cls(SpectralField.zeros(spec), SpectralField.zeros(spec))

    def copy(self) -> "PairState":
        return PairState(self.pos.copy(), self.vel.copy())


class ComponentEnsemble:
    """Ordered collection of N pair states sharing one grid.

    Stored as stacked ``(N, n_grid, n_grid)`` coefficient arrays so that
    vectorized dynamics can broadcast per-mode multipliers; ``ens[j]``
    recovers the j-th :class:`PairState` as a copy.
    """

    __slots__ = ("spec", "pos", "vel")

    def __init__(self, spec: GridSpec, pos: np.ndarray, vel: np.ndarray, copy: bool = True):
        pos = np.asarray(pos, dtype=np.complex128)
        vel = np.asarray(vel, dtype=np.complex128)
        if pos.ndim != 3 or pos.shape[1:] != spec.shape() or pos.shape != vel.shape:
            raise ValueError(f"need matching (N, {spec.n_grid}, {spec.n_grid}) stacks")
        self.spec = spec
        self.pos = pos.copy() if copy else pos
        self.vel = vel.copy() if copy else vel

    @classmethod
    def zeros(cls, spec: GridSpec, n_components: int) -> "ComponentEnsemble":
        shape = (n_components,) + spec.shape()
        return cls(spec, np.zeros(shape, np.complex128), np.zeros(shape, np.complex128), copy=False)

    @classmethod
    def from_components(cls, states: list[PairState]) -> "ComponentEnsemble":
        if not states:
            raise ValueError("empty ensemble")
        spec = states[0].spec
        pos = np.stack([s.pos.coeffs for s in states])
        vel = np.stack([s.vel.coeffs for s in states])
        return cls(spec, pos, vel, copy=False)

    def __len__(self) -> int:
        return self.pos.shape[0]

    def __getitem__(self, j: int) -> PairState:
        return PairState(
            SpectralField(self.spec, self.pos[j]),
            SpectralField(self.spec, self.vel[j]),
        )

    def copy(self) -> "ComponentEnsemble":
        return ComponentEnsemble(self.spec, self.pos, self.vel)


def project(f: SpectralField, truncation: float) -> SpectralField:
    """Sharp Fourier truncation to the mode ball ``|n| <= truncation``."""
    out = np.where(ball_mask(f.spec, truncation), f.coeffs, 0.0)
    return SpectralField(f.spec, out, copy=False)


def project_perp(f: SpectralField, truncation: float) -> SpectralField:
    """Complement of :func:`project`: keeps ``|n| > truncation`` only."""
    out = np.where(ball_mask(f.spec, truncation), 0.0, f.coeffs)
    return SpectralField(f.spec, out, copy=False)


def i_multiplier(s: float, truncation: float, n) -> float:
    """Smoothing multiplier of the I-method at mode ``n``.

    Equals 1 on ``|n| <= truncation`` and ``(truncation / |n|)**(1 - s)``
    outside, which interpolates between ``H^s`` data and an ``H^1``-valued
    smoothed field.  ``s`` must lie in ``(0, 1]``.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must be in (0, 1], got {s}")
    n = np.asarray(n, dtype=np.float64)
    r = float(np.sqrt(np.sum(n * n)))
    if r <= truncation + 1e-12:
        return 1.0
    return (truncation / r) ** (1.0 - s)


@lru_cache(maxsize=256)
def _i_profile(n_grid: int, s: float, truncation: float) -> np.ndarray:
    r = np.sqrt(_mode_norm_sq(n_grid))
    with np.errstate(divide="ignore"):
        tail = np.where(r > 0, (truncation / np.maximum(r, 1e-300)) ** (1.0 - s), 1.0)
    out = np.where(r <= truncation + 1e-9, 1.0, tail)
    out.setflags(write=False)
    return out


def apply_i_operator(f: SpectralField, s: float, truncation: float) -> SpectralField:
    """Multiply coefficients by the I-method profile ``i_multiplier(s, M, n)``."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must be in (0, 1], got {s}")
    prof = _i_profile(f.spec.n_grid, float(s), float(truncation))
    return SpectralField(f.spec, f.coeffs * prof, copy=False)


@lru_cache(maxsize=256)
def _bracket_pow(n_grid: int, s: float) -> np.ndarray:
    out = (1.0 + _mode_norm_sq(n_grid)) ** (s / 2.0)
    out.setflags(write=False)
    return out


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``H^s`` norm, ``(sum <n>^{2s} |fhat(n)|^2)^{1/2}`` with ``<n>^2 = 1 + |n|^2``."""
    w = _bracket_pow(f.spec.n_grid, float(s))
    return float(np.sqrt(np.sum((w * np.abs(f.coeffs)) ** 2)))


def sup_sobolev_norm(f: SpectralField, s: float) -> float:
    """``W^{s,inf}`` proxy: sup over collocation points of ``<grad>^s f``.

    For negative ``s`` this is the low-regularity sup norm used to measure
    Wick products and their empirical averages.
    """
    w = _bracket_pow(f.spec.n_grid, float(s))
    smoothed = np.fft.ifft2(w * f.coeffs, norm="forward").real
    return float(np.max(np.abs(smoothed)))


def rms(values) -> float:
    """Quadratic mean ``(average of squares)**0.5`` over all entries.

    Used for the ensemble norms ``(N^-1 sum_j a_j^2)^(1/2)`` and, applied
    to an ``N x N`` table, ``(N^-2 sum_jk a_jk^2)^(1/2)``.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise ValueError("rms of empty collection")
    return float(np.sqrt(np.mean(a * a)))


def _mirror(coeffs: np.ndarray) -> np.ndarray:
    # coefficient at -n (indices mod n_grid), conjugated
    flipped = coeffs[::-1, ::-1]
    return np.conj(np.roll(flipped, (1, 1), axis=(0, 1)))


def hermitian_defect(f: SpectralField) -> float:
    """Max deviation from the realness constraint ``fhat(-n) == conj(fhat(n))``."""
    return float(np.max(np.abs(f.coeffs - _mirror(f.coeffs))))


def hermitian_symmetrize(f: SpectralField) -> SpectralField:
    """Nearest (in the averaging sense) coefficient array with exact realness."""
    return SpectralField(f.spec, 0.5 * (f.coeffs + _mirror(f.coeffs)), copy=False)


def random_field(
    spec: GridSpec,
    gen: np.random.Generator,
    decay: float = 2.0,
    amplitude: float = 1.0,
    truncation: float | None = None,
) -> SpectralField:
    """Random real field with coefficient scale ``amplitude * <n>^-decay``.

    Draws complex Gaussians on the full lattice, enforces realness by
    symmetrizing, and truncates to ``|n| <= truncation`` (default: the
    Nyquist ball, which keeps the unpaired Nyquist lines out).
    """
    if truncation is None:
        truncation = float(spec.nyquist)
    shape = spec.shape()
    z = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
    prof = amplitude * (1.0 + spec.mode_norm_sq) ** (-decay / 2.0)
    f = SpectralField(spec, z * prof, copy=False)
    return project(hermitian_symmetrize(f), truncation)


def save_field(f: SpectralField, path) -> None:
    """Write the binary snapshot format.

    Layout: 16-byte header (magic ``SGWV``, version u16, n_grid u16, 8
    reserved zero bytes), then little-endian float64 pairs ``(re, im)`` in
    row-major mode order.  The mass is not stored; it travels in the run
    manifest and is supplied again at load time.
    """
    header = FIELD_MAGIC + struct.pack("<HH8x", FIELD_VERSION, f.spec.n_grid)
    data = np.ascontiguousarray(f.coeffs, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_field(path, m: float) -> SpectralField:
    """Read a snapshot written by :func:`save_field`; ``m`` rebuilds the spec."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != FIELD_MAGIC:
            raise ValueError(f"{path}: not a spectral field snapshot")
        version, n_grid = struct.unpack("<HH", header[4:8])
        if version != FIELD_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        raw = fh.read()
    expected = n_grid * n_grid * 16
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    coeffs = np.frombuffer(raw, dtype="<c16").reshape(n_grid, n_grid)
    return SpectralField(GridSpec(n_grid, m), coeffs.astype(np.complex128))
