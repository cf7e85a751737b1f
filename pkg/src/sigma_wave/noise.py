"""Reproducible noise streams, exact stochastic-convolution sampling, and
the renormalization constants.

The damped wave equation driven by sqrt(2) space-time white noise has, per
Fourier mode, a 2d Ornstein-Uhlenbeck structure: conditional on the state
at time t, the pair ``(psi_n, d_t psi_n)`` at time ``t + dt`` is the
homogeneous flow applied to the state plus a mean-zero Gaussian whose 2x2
covariance ``Q_n(dt)`` is an elementary integral of the flow.  Sampling
that transition exactly removes every time-discretization bias from the
renormalization identities, so the variance identities ``E[psi_M(t,x)^2] =
sigma_m(t)`` and ``E[phi_M(t,x)^2] = alpha_m`` hold at machine precision in
law.

Streams are counter-based (Philox): the draw for a given ``(root_seed,
component, kind, step)`` is a pure function of the key, so Monte Carlo over
components or replicas parallelizes without any order dependence.

Renormalization constants are lattice sums over the integer mode ball
``|n| <= M``.  They match grid-sampled fields exactly as long as the
analysis truncation satisfies ``M < nyquist`` (at ``M = nyquist`` the grid
folds the two lattice modes ``(+-nyquist, 0)`` onto one slot).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .grid import GridSpec, PairState, SpectralField, ball_mask
from .propagator import _cc, _sc, flow_entries

__all__ = [
    "NoiseKind",
    "NoiseStream",
    "RenormConstants",
    "ConvolutionState",
    "alpha_m",
    "sigma_m",
    "transition_covariance",
    "sample_mu1_mu0_pair",
    "step_convolution",
]

_DEGENERATE_EPS = 1e-10


class NoiseKind(IntEnum):
    DRIVE = 1      # Brownian increments of the wave noise
    INITIAL = 2    # Gaussian data draws (mu_1 x mu_0)
    CHAIN = 3      # sampler innovations
    VELOCITY = 4   # velocity refresh draws
    FIELD = 5      # generic experiment fields


@dataclass(frozen=True)
class NoiseStream:
    """Keyed source of Gaussian draws; one logical noise per (seed, component, kind)."""

    root_seed: int
    component: int
    kind: int

    def generator(self, step: int) -> np.random.Generator:
        """Fresh generator for one step; a pure function of key and step."""
        key = (np.uint64(self.root_seed), np.uint64((self.component << 8) | self.kind))
        counter = (np.uint64(0), np.uint64(0), np.uint64(step), np.uint64(0))
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@lru_cache(maxsize=64)
def _lattice_modes(M: int) -> np.ndarray:
    k = np.arange(-M, M + 1)
    n1, n2 = np.meshgrid(k, k, indexing="ij")
    keep = n1 * n1 + n2 * n2 <= M * M
    return np.stack([n1[keep], n2[keep]], axis=1)


def alpha_m(m: float, M: int) -> float:
    """Equilibrium pointwise variance: ``sum_{|n|<=M} 1/(m + |n|^2)``."""
    if not m > 0:
        raise ValueError(f"mass m must be positive, got {m}")
    modes = _lattice_modes(int(M))
    return float(np.sum(1.0 / (m + np.sum(modes * modes, axis=1))))


def _sigma_per_mode(t: float, lam: np.ndarray) -> np.ndarray:
    """Time-t variance of one mode of the convolution started from rest.

    Closed form with ``w = lam - 1/4``; continues through ``w < 0`` in real
    arithmetic, with a quadrature fallback in a small window around w = 0.
    """
    lam = np.asarray(lam, dtype=np.float64)
    w = lam - 0.25
    et = np.exp(-t)
    sc2 = _sc(2.0 * t, w)
    cc2 = _cc(2.0 * t, w)
    safe_w = np.where(np.abs(w) > _DEGENERATE_EPS, w, 1.0)
    val = (
        (1.0 - et) / safe_w
        - et * 2.0 * sc2 / (4.0 * lam)
        - (1.0 - et * cc2) / (safe_w * 4.0 * lam)
    )
    out = np.where(np.abs(w) > _DEGENERATE_EPS, val, 0.0)
    for i in np.flatnonzero(np.abs(w) <= _DEGENERATE_EPS):
        wi = np.array([w[i]])
        out[i] = quad(
            lambda s: 2.0 * np.exp(-s) * _sc(s, wi)[0] ** 2, 0.0, t, epsabs=1e-13
        )[0] if t > 0 else 0.0
    return out


def sigma_m(t: float, m: float, M: int) -> float:
    """Pointwise variance ``E[psi_M(t,x)^2]`` of the truncated convolution."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    modes = _lattice_modes(int(M))
    lam = m + np.sum(modes * modes, axis=1).astype(np.float64)
    return float(np.sum(_sigma_per_mode(float(t), lam)))


@dataclass(frozen=True)
class RenormConstants:
    """Schedule of Wick variances on a fixed step grid, plus the equilibrium value.

    ``sigma[k] = sigma_m(k*dt)``; ``alpha = alpha_m``.  The stationary
    (Gibbs) dynamics use the time-independent ``alpha``; the zero-data
    dynamics read ``sigma`` at step boundaries.
    """

    m: float
    M: int
    dt: float
    times: np.ndarray
    sigma: np.ndarray
    alpha: float

    @classmethod
    def build(cls, m: float, M: int, dt: float, n_steps: int) -> "RenormConstants":
        if dt <= 0 or n_steps < 0:
            raise ValueError("need dt > 0 and n_steps >= 0")
        times = np.arange(n_steps + 1) * dt
        modes = _lattice_modes(int(M))
        lam = m + np.sum(modes * modes, axis=1).astype(np.float64)
        sigma = np.array([np.sum(_sigma_per_mode(float(t), lam)) for t in times])
        return cls(m, int(M), dt, times, sigma, alpha_m(m, M))

    @classmethod
    def zero(cls, m: float, dt: float, n_steps: int) -> "RenormConstants":
        """All-zero schedule with an empty truncation; turns the noise and the
        Wick subtractions off for deterministic integration tests."""
        times = np.arange(n_steps + 1) * dt
        return cls(m, -1, dt, times, np.zeros(n_steps + 1), 0.0)

    def sigma_at(self, step: int) -> float:
        return float(self.sigma[step])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,sigma_M,alpha_M\n")
            for t, s in zip(self.times, self.sigma):
                fh.write(f"{t:.17g},{s:.17g},{self.alpha:.17g}\n")


def transition_covariance(lam, dt: float):
    """Entries ``(Qxx, Qxv, Qvv)`` of the per-mode transition covariance.

    ``Q(dt) = integral_0^dt e^{As} B B^T e^{A^T s} ds`` with ``A`` the damped
    companion matrix and ``B = (0, sqrt(2))``; equivalently twice the
    integrals of ``d^2``, ``d d'``, ``d'^2`` for the impulse response d.
    Closed form away from ``w = lam - 1/4 = 0``, quadrature inside the window.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = np.asarray(lam, dtype=np.float64)
    scalar = lam.ndim == 0
    if scalar:
        lam = lam[None]
    w = lam - 0.25
    et = np.exp(-dt)
    sc2 = _sc(2.0 * dt, w)
    cc2 = _cc(2.0 * dt, w)
    i1 = 1.0 - et
    ic = (1.0 - et * cc2 + 2.0 * w * et * sc2) / (4.0 * lam)
    isw = (2.0 - et * (sc2 + 2.0 * cc2)) / (4.0 * lam)
    safe_w = np.where(np.abs(w) > _DEGENERATE_EPS, w, 1.0)
    qxx = np.where(np.abs(w) > _DEGENERATE_EPS, (i1 - ic) / safe_w, 0.0)
    qxv = isw - 0.5 * qxx
    qvv = i1 + ic - isw + 0.25 * qxx

    bad = np.flatnonzero(np.abs(w) <= _DEGENERATE_EPS)
    if bad.size:
        for i in bad:
            wi = np.array([w.flat[i]])

            def d(s):
                return np.exp(-0.5 * s) * _sc(s, wi)[0]

            def dd(s):
                return np.exp(-0.5 * s) * (_cc(s, wi)[0] - 0.5 * _sc(s, wi)[0])

            qxx.flat[i] = 2.0 * quad(lambda s: d(s) ** 2, 0, dt, epsabs=1e-13)[0]
            qxv.flat[i] = 2.0 * quad(lambda s: d(s) * dd(s), 0, dt, epsabs=1e-13)[0]
            qvv.flat[i] = 2.0 * quad(lambda s: dd(s) ** 2, 0, dt, epsabs=1e-13)[0]
    if scalar:
        return float(qxx[0]), float(qxv[0]), float(qvv[0])
    return qxx, qxv, qvv


@lru_cache(maxsize=128)
def _half_lattice(n_grid: int, radius: float):
    """Flat indices of ball modes split into self-conjugate and mirror pairs.

    The pair arrays are aligned: ``minus[i]`` is the mirror slot of
    ``plus[i]``.  Canonical representatives are the smaller flat index, so
    the draw order is reproducible.
    """
    k = (np.fft.fftfreq(n_grid) * n_grid).astype(np.int64)
    n1, n2 = np.meshgrid(k, k, indexing="ij")
    if radius < 0:
        # empty ball: a disabled noise source (deterministic integration)
        in_ball = np.zeros_like(n1, dtype=bool)
    else:
        in_ball = (n1 * n1 + n2 * n2) <= radius * radius + 1e-9
    idx = np.arange(n_grid * n_grid).reshape(n_grid, n_grid)
    mi = (-n1) % n_grid
    mj = (-n2) % n_grid
    mirror = idx[mi, mj]
    flat = idx[in_ball]
    mflat = mirror[in_ball]
    self_idx = flat[flat == mflat]
    plus = flat[flat < mflat]
    minus = mflat[flat < mflat]
    self_idx.setflags(write=False)
    plus.setflags(write=False)
    minus.setflags(write=False)
    return self_idx, plus, minus


def _sample_profile(gen, spec: GridSpec, radius: float, profile: np.ndarray) -> np.ndarray:
    """Hermitian Gaussian coefficients with per-mode variance ``profile``."""
    self_idx, plus, minus = _half_lattice(spec.n_grid, float(radius))
    out = np.zeros(spec.n_grid * spec.n_grid, dtype=np.complex128)
    p = profile.reshape(-1)
    zr = gen.standard_normal(plus.size)
    zi = gen.standard_normal(plus.size)
    zs = gen.standard_normal(self_idx.size)
    out[plus] = np.sqrt(p[plus] / 2.0) * (zr + 1j * zi)
    out[minus] = np.conj(out[plus])
    out[self_idx] = np.sqrt(p[self_idx]) * zs
    return out.reshape(spec.shape())


@lru_cache(maxsize=32)
def _transition_tables(spec: GridSpec, dt: float):
    """Cached flow entries and Cholesky factors of Q_n(dt) for one step size."""
    flow = flow_entries(spec.dispersion, dt)
    qxx, qxv, qvv = transition_covariance(spec.dispersion, dt)
    l11 = np.sqrt(np.maximum(qxx, 0.0))
    l21 = np.where(l11 > 0, qxv / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(qvv - l21 * l21, 0.0))
    for arr in flow + (l11, l21, l22):
        arr.setflags(write=False)
    return flow, (l11, l21, l22)


def _draw_kick(gen, spec: GridSpec, radius: float, chol):
    """Correlated pair of Hermitian Gaussian arrays with covariance Q_n(dt).

    Every stepper that shares a stream must draw through this one function,
    in the same order, so coupled systems see identical noise.
    """
    l11, l21, l22 = chol
    self_idx, plus, minus = _half_lattice(spec.n_grid, float(radius))
    n2 = spec.n_grid * spec.n_grid
    ex = np.zeros(n2, dtype=np.complex128)
    ev = np.zeros(n2, dtype=np.complex128)
    a, b, c = l11.reshape(-1), l21.reshape(-1), l22.reshape(-1)
    # complex standard normals on the canonical half, real on self-conjugate slots
    z1 = (gen.standard_normal(plus.size) + 1j * gen.standard_normal(plus.size)) / np.sqrt(2.0)
    z2 = (gen.standard_normal(plus.size) + 1j * gen.standard_normal(plus.size)) / np.sqrt(2.0)
    s1 = gen.standard_normal(self_idx.size)
    s2 = gen.standard_normal(self_idx.size)
    ex[plus] = a[plus] * z1
    ev[plus] = b[plus] * z1 + c[plus] * z2
    ex[minus] = np.conj(ex[plus])
    ev[minus] = np.conj(ev[plus])
    ex[self_idx] = a[self_idx] * s1
    ev[self_idx] = b[self_idx] * s1 + c[self_idx] * s2
    return ex.reshape(spec.shape()), ev.reshape(spec.shape())


def sample_mu1_mu0_pair(spec: GridSpec, M: float, stream: NoiseStream, step: int = 0) -> PairState:
    """Draw ``(phi0, phi1)`` with per-mode variances ``1/(m+|n|^2)`` and 1, ball-truncated."""
    gen = stream.generator(step)
    prof1 = np.where(ball_mask(spec, M), 1.0 / spec.dispersion, 0.0)
    prof0 = np.where(ball_mask(spec, M), 1.0, 0.0)
    pos = _sample_profile(gen, spec, M, prof1)
    vel = _sample_profile(gen, spec, M, prof0)
    return PairState(SpectralField(spec, pos, copy=False), SpectralField(spec, vel, copy=False))


@dataclass(frozen=True)
class ConvolutionState:
    """Running stochastic convolution: data pair, clock, and owning stream.

    ``truncation`` bounds the populated mode ball; modes outside stay zero
    for the state's whole life.  Analysis truncations ``M <= truncation``
    then see the correctly truncated law.
    """

    state: PairState
    time: float
    step: int
    stream: NoiseStream
    truncation: float

    @classmethod
    def zero(cls, spec: GridSpec, stream: NoiseStream, truncation: float | None = None) -> "ConvolutionState":
        trunc = float(spec.nyquist) if truncation is None else float(truncation)
        return cls(PairState.zeros(spec), 0.0, 0, stream, trunc)

    @classmethod
    def stationary(cls, spec: GridSpec, stream: NoiseStream, truncation: float | None = None) -> "ConvolutionState":
        trunc = float(spec.nyquist) if truncation is None else float(truncation)
        init = NoiseStream(stream.root_seed, stream.component, NoiseKind.INITIAL)
        return cls(sample_mu1_mu0_pair(spec, trunc, init), 0.0, 0, stream, trunc)


def step_convolution(cs: ConvolutionState, dt: float) -> ConvolutionState:
    """Advance by the exact-in-law Gaussian transition over one step of dt."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    spec = cs.state.spec
    (s11, s12, s21, s22), chol = _transition_tables(spec, dt)
    gen = cs.stream.generator(cs.step)
    ex, ev = _draw_kick(gen, spec, cs.truncation, chol)
    p, v = cs.state.pos.coeffs, cs.state.vel.coeffs
    pos = SpectralField(spec, s11 * p + s12 * v + ex, copy=False)
    vel = SpectralField(spec, s21 * p + s22 * v + ev, copy=False)
    return replace(cs, state=PairState(pos, vel), time=cs.time + dt, step=cs.step + 1)
