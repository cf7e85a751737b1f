"""Sampling the truncated renormalized Gibbs ensemble and testing its
invariance under the interacting wave flow.

The target measure on the mode ball ``|n| <= M`` has density proportional
to ``exp(-V(u) - K(u))`` against the coefficient Lebesgue measure, where K
is the Gaussian energy ``(1/2) sum_n (m+|n|^2) |u_n|^2`` (whose marginals
are exactly the per-mode equilibrium variances) and V is the Wick-
renormalized quartic interaction with variance parameter ``alpha_m``.
Velocities are independent white noise per mode and are drawn directly.

The sampler is MALA with the per-mode preconditioner ``(m+|n|^2)^{-1}``:
the proposal is ``(1-h^2/2) U - (h^2/2) grad V / w + h Z`` with Z an
equilibrium-shaped Gaussian, so the Gaussian part of the target is handled
with a well-scaled step at every frequency.  All energies and proposal
exponents are full-lattice sums; paired modes are counted twice on both
sides of the accept ratio, which cancels.

A pair of unadjusted chains driven by common innovations, one interacting
and one free, yields coupled (Gibbs, Gaussian) samples whose difference is
controlled by the interaction gradient; this is the initial-data coupling
used by the mean-field convergence experiment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .dynamics import _drift_tables, renormalized_drift
from .grid import ComponentEnsemble, GridSpec, ball_mask
from .noise import NoiseKind, NoiseStream, _draw_kick, _sample_profile, _transition_tables, alpha_m
from .wick import hermite

__all__ = [
    "GibbsSamplerConfig",
    "GibbsSamples",
    "InvarianceReport",
    "gibbs_potential",
    "gibbs_potential_reference",
    "gibbs_drift",
    "sample_gibbs",
    "coupled_gibbs_gaussian_pair",
    "evolve_gibbs_samples",
    "invariance_check",
    "gibbs_vs_gaussian_covariance",
    "integrated_autocorrelation",
]


def gibbs_potential(ens: ComponentEnsemble, alpha: float) -> float:
    """Renormalized quartic interaction, factored to one pass over components.

    The pairwise double sum over components is ``(sum H_2)^2 - sum H_2^2``
    pointwise, plus the diagonal fourth Wick powers.
    """
    ug = np.fft.ifft2(ens.pos, norm="forward").real
    n = len(ens)
    h2 = ug * ug - alpha
    total = np.sum(h2, axis=0)
    off_diag = total * total - np.sum(h2 * h2, axis=0)
    diag = np.sum(hermite(4, ug, alpha), axis=0)
    return float(np.mean(off_diag + diag) / (4.0 * n))


def gibbs_potential_reference(ens: ComponentEnsemble, alpha: float) -> float:
    """Unfactored double loop over component pairs; the oracle."""
    ug = np.fft.ifft2(ens.pos, norm="forward").real
    n = len(ens)
    acc = np.zeros(ens.spec.shape())
    for k in range(n):
        for j in range(n):
            if k == j:
                acc += hermite(4, ug[j], alpha)
            else:
                acc += hermite(2, ug[k], alpha) * hermite(2, ug[j], alpha)
    return float(np.mean(acc) / (4.0 * n))


def gibbs_drift(ens: ComponentEnsemble, alpha: float,
                truncation: float | None = None) -> np.ndarray:
    """Negative gradient of the interaction with respect to the normalized
    L2 pairing: component j gets ``-(1/N)[(sum_k u_k^2) u_j - (N+2) a u_j]``.

    The closed form is validated against finite differences of
    :func:`gibbs_potential` in the test suite before anything trusts it.
    """
    return renormalized_drift(ens, alpha, truncation)


@dataclass(frozen=True)
class GibbsSamplerConfig:
    """Chain geometry and step size for the coefficient-space MALA sampler."""

    n_components: int
    truncation: int
    m: float
    step_size: float
    chain_length: int
    burn_in: int
    thin: int = 10
    interaction: bool = True
    acceptance_band: tuple = (0.3, 0.8)

    def __post_init__(self) -> None:
        if self.step_size <= 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if not 0 <= self.burn_in < self.chain_length:
            raise ValueError("need 0 <= burn_in < chain_length")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_samples(self) -> int:
        return (self.chain_length - self.burn_in + self.thin - 1) // self.thin


@dataclass
class GibbsSamples:
    """Thinned draws packed on the mode ball, plus chain health numbers.

    ``positions[k, j]`` holds the ball-mode coefficients of component j of
    sample k, in the flat-index order of ``mode_idx``; ``ensemble`` scatters
    one sample back to full coefficient arrays.
    """

    spec: GridSpec
    truncation: int
    mode_idx: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accept_rate: float
    iact: float
    series: np.ndarray

    def __len__(self) -> int:
        return self.positions.shape[0]

    def ensemble(self, k: int) -> ComponentEnsemble:
        n = self.positions.shape[1]
        shape = (n,) + self.spec.shape()
        pos = np.zeros(shape, dtype=np.complex128)
        vel = np.zeros(shape, dtype=np.complex128)
        pos.reshape(n, -1)[:, self.mode_idx] = self.positions[k]
        vel.reshape(n, -1)[:, self.mode_idx] = self.velocities[k]
        return ComponentEnsemble(self.spec, pos, vel, copy=False)

    def mode_values(self, j: int, mode: tuple) -> np.ndarray:
        flat = (mode[0] % self.spec.n_grid) * self.spec.n_grid + (mode[1] % self.spec.n_grid)
        hits = np.flatnonzero(self.mode_idx == flat)
        if hits.size == 0:
            return np.zeros(len(self), dtype=np.complex128)
        return self.positions[:, j, hits[0]]


def integrated_autocorrelation(series: np.ndarray) -> float:
    """Initial-positive-sequence estimate of the autocorrelation time."""
    x = np.asarray(series, dtype=np.float64)
    x = x - np.mean(x)
    var = np.mean(x * x)
    if var == 0 or x.size < 4:
        return 1.0
    tau = 1.0
    for lag in range(1, x.size // 2):
        rho = np.mean(x[:-lag] * x[lag:]) / var
        if rho <= 0:
            break
        tau += 2.0 * rho
    return float(tau)


def _gaussian_energy(pos: np.ndarray, w_ball: np.ndarray) -> float:
    return float(0.5 * np.sum(w_ball * (pos.real**2 + pos.imag**2)))


def _proposal_exponent(src, dst, grad_src, w_ball, inv_w, h: float) -> float:
    beta = 1.0 - 0.5 * h * h
    mean = beta * src - 0.5 * h * h * grad_src * inv_w
    diff = dst - mean
    return float(np.sum(w_ball * (diff.real**2 + diff.imag**2)) / (2.0 * h * h))


def mala_log_ratio(pos, prop, grad_pos, grad_prop, energy_pos, energy_prop,
                   w_ball, inv_w, h: float) -> float:
    """Log acceptance ratio from energies and the two proposal exponents.

    ``log [pi(prop) q(prop -> pos)] / [pi(pos) q(pos -> prop)]`` with
    q the Gaussian proposal density; exponents enter with the forward
    one positive.
    """
    return (energy_pos - energy_prop
            + _proposal_exponent(pos, prop, grad_pos, w_ball, inv_w, h)
            - _proposal_exponent(prop, pos, grad_prop, w_ball, inv_w, h))


def _interaction_grad(pos: np.ndarray, spec: GridSpec, alpha: float,
                      truncation: float) -> np.ndarray:
    ens = ComponentEnsemble(spec, pos, np.zeros_like(pos), copy=False)
    return -gibbs_drift(ens, alpha, truncation)


def sample_gibbs(spec: GridSpec, cfg: GibbsSamplerConfig, root_seed: int) -> GibbsSamples:
    """Run one MALA chain and return thinned (position, velocity) samples.

    Velocities are exact independent draws, so only positions are chained.
    Warns when the post-burn-in acceptance rate leaves the configured band.
    """
    if abs(cfg.m - spec.m) > 1e-12:
        raise ValueError(f"config mass {cfg.m} != grid mass {spec.m}")
    n, M, h = cfg.n_components, cfg.truncation, cfg.step_size
    mask = ball_mask(spec, M)
    w = np.where(mask, spec.dispersion, 0.0)
    inv_w = np.where(mask, 1.0 / spec.dispersion, 0.0)
    alpha = alpha_m(spec.m, M) if cfg.interaction else 0.0
    prof = np.where(mask, 1.0 / spec.dispersion, 0.0)

    pos = np.stack([
        _sample_profile(NoiseStream(root_seed, j, NoiseKind.INITIAL).generator(0), spec, M, prof)
        for j in range(n)
    ])
    innovations = NoiseStream(root_seed, 0, NoiseKind.CHAIN)

    def grad_of(p):
        if not cfg.interaction:
            return np.zeros_like(p)
        return _interaction_grad(p, spec, alpha, float(M))

    def potential_of(p):
        if not cfg.interaction:
            return 0.0
        ens = ComponentEnsemble(spec, p, np.zeros_like(p), copy=False)
        return gibbs_potential(ens, alpha)

    grad = grad_of(pos)
    energy = _gaussian_energy(pos, w) + potential_of(pos)

    keep_pos = []
    series = []
    accepted = 0
    proposed = 0
    beta = 1.0 - 0.5 * h * h
    for it in range(cfg.chain_length):
        gen = innovations.generator(it)
        z = np.stack([_sample_profile(gen, spec, M, prof) for _ in range(n)])
        prop = beta * pos - 0.5 * h * h * grad * inv_w + h * z
        grad_prop = grad_of(prop)
        energy_prop = _gaussian_energy(prop, w) + potential_of(prop)
        log_ratio = mala_log_ratio(pos, prop, grad, grad_prop, energy, energy_prop,
                                   w, inv_w, h)
        if it >= cfg.burn_in:
            proposed += 1
        if np.log(gen.uniform()) < log_ratio:
            pos, grad, energy = prop, grad_prop, energy_prop
            if it >= cfg.burn_in:
                accepted += 1
        if it >= cfg.burn_in:
            u1 = np.fft.ifft2(pos[0], norm="forward").real
            series.append(np.mean(u1 * u1) - alpha)
            if (it - cfg.burn_in) % cfg.thin == 0:
                keep_pos.append(pos.copy())

    accept_rate = accepted / max(proposed, 1)
    lo, hi = cfg.acceptance_band
    if not lo <= accept_rate <= hi:
        target = 0.57
        suggestion = h * (accept_rate / target if accept_rate > 0 else 0.5) ** 0.5
        warnings.warn(
            f"MALA acceptance {accept_rate:.2f} outside [{lo}, {hi}]; "
            f"try step_size near {suggestion:.3g}", RuntimeWarning)

    idx = np.flatnonzero(mask.reshape(-1))
    k_total = len(keep_pos)
    packed_pos = np.stack([p.reshape(n, -1)[:, idx] for p in keep_pos])
    vel_prof = np.where(mask, 1.0, 0.0)
    packed_vel = np.empty_like(packed_pos)
    for k in range(k_total):
        gen = NoiseStream(root_seed, 0, NoiseKind.VELOCITY).generator(k)
        vel = np.stack([_sample_profile(gen, spec, M, vel_prof) for _ in range(n)])
        packed_vel[k] = vel.reshape(n, -1)[:, idx]
    return GibbsSamples(spec, M, idx, packed_pos, packed_vel,
                        accept_rate, integrated_autocorrelation(np.asarray(series)),
                        np.asarray(series))


def coupled_gibbs_gaussian_pair(spec: GridSpec, cfg: GibbsSamplerConfig, root_seed: int,
                                n_iters: int | None = None):
    """Common-innovation unadjusted Langevin pair: (interacting, free).

    Both chains see the same Gaussian innovations; the free chain samples
    the truncated equilibrium, the interacting one its Gibbs counterpart,
    and the coupling keeps their difference of the order of the interaction
    gradient.  Velocities are one shared equilibrium draw.  Returns a pair
    of ensembles ``(gibbs, gaussian)``.
    """
    n, M, h = cfg.n_components, cfg.truncation, cfg.step_size
    iters = cfg.chain_length if n_iters is None else n_iters
    mask = ball_mask(spec, M)
    inv_w = np.where(mask, 1.0 / spec.dispersion, 0.0)
    prof = np.where(mask, 1.0 / spec.dispersion, 0.0)
    alpha = alpha_m(spec.m, M)
    beta = 1.0 - 0.5 * h * h

    start = np.stack([
        _sample_profile(NoiseStream(root_seed, j, NoiseKind.INITIAL).generator(0), spec, M, prof)
        for j in range(n)
    ])
    pos_a = start.copy()
    pos_b = start.copy()
    innovations = NoiseStream(root_seed, 0, NoiseKind.CHAIN)
    for it in range(iters):
        gen = innovations.generator(it)
        z = np.stack([_sample_profile(gen, spec, M, prof) for _ in range(n)])
        grad = _interaction_grad(pos_a, spec, alpha, float(M))
        pos_a = beta * pos_a - 0.5 * h * h * grad * inv_w + h * z
        pos_b = beta * pos_b + h * z

    if not np.all(np.isfinite(pos_a)):
        # unadjusted proposals have no rejection safety net for the cubic drift
        raise ValueError(f"coupled chain diverged; step size {h} is too large "
                         f"for truncation {M}")
    gen = NoiseStream(root_seed, 0, NoiseKind.VELOCITY).generator(0)
    vel_prof = np.where(mask, 1.0, 0.0)
    vel = np.stack([_sample_profile(gen, spec, M, vel_prof) for _ in range(n)])
    gibbs = ComponentEnsemble(spec, pos_a, vel.copy(), copy=False)
    gaussian = ComponentEnsemble(spec, pos_b, vel.copy(), copy=False)
    return gibbs, gaussian


def evolve_gibbs_samples(positions: np.ndarray, velocities: np.ndarray, spec: GridSpec,
                         alpha: float, truncation: float, dt: float, n_steps: int,
                         noise_seed: int) -> tuple:
    """Advance a batch of K independent N-component systems in lockstep.

    Arrays are (K, N, n, n) coefficient stacks.  Bit-identical to stepping
    each system with the interacting wave stepper, with noise streams keyed
    by flattened sample-component index.
    """
    k_total, n = positions.shape[0], positions.shape[1]
    mask = ball_mask(spec, truncation)
    (s11, s12, s21, s22), chol = _transition_tables(spec, dt)
    _, (gx, gv, w1x, w1v) = _drift_tables(spec, dt, 0.5)
    pos, vel = positions.copy(), velocities.copy()
    shift = (n + 2.0) * alpha / n

    def drift(p):
        ug = np.fft.ifft2(np.where(mask, p, 0.0), norm="forward").real
        mean_sq = np.mean(ug * ug, axis=1, keepdims=True)
        out = np.fft.fft2(-(mean_sq - shift) * ug, norm="forward")
        return np.where(mask, out, 0.0)

    for step in range(n_steps):
        f0 = drift(pos)
        flow_pos = s11 * pos + s12 * vel
        flow_vel = s21 * pos + s22 * vel
        kick_x = np.zeros_like(pos)
        kick_v = np.zeros_like(vel)
        for k in range(k_total):
            for j in range(n):
                stream = NoiseStream(noise_seed, k * n + j, NoiseKind.DRIVE)
                ex, ev = _draw_kick(stream.generator(step), spec, truncation, chol)
                kick_x[k, j] = ex
                kick_v[k, j] = ev
        pred = flow_pos + gx * f0 + kick_x
        f1 = drift(pred)
        df = f1 - f0
        pos = flow_pos + gx * f0 + w1x * df + kick_x
        vel = flow_vel + gv * f0 + w1v * df + kick_v
    return pos, vel


@dataclass
class InvarianceReport:
    """KS statistics and means of the invariance observables at t=0 vs t=T."""

    rows: list

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("observable,ks_stat,p_value,mean_t0,se_t0,mean_t1,se_t1\n")
            for r in self.rows:
                fh.write(",".join([r["observable"]] +
                                  [f"{r[k]:.17g}" for k in
                                   ("ks_stat", "p_value", "mean_t0", "se_t0",
                                    "mean_t1", "se_t1")]) + "\n")


def _invariance_observables(pos: np.ndarray, spec: GridSpec, alpha: float, n: int) -> dict:
    ug = np.fft.ifft2(pos, norm="forward").real
    wick_sq = np.mean(ug[:, 0] ** 2, axis=(1, 2)) - alpha
    low = ball_mask(spec, 1.0).reshape(-1)
    low_energy = np.sum(np.abs(pos[:, 0].reshape(len(pos), -1)[:, low]) ** 2, axis=1)
    h2 = ug * ug - alpha
    tot = np.sum(h2, axis=1)
    off = tot * tot - np.sum(h2 * h2, axis=1)
    diag = np.sum(hermite(4, ug, alpha), axis=1)
    potential = np.mean(off + diag, axis=(1, 2)) / (4.0 * n)
    return {"wick_square_int": wick_sq, "low_mode_energy": low_energy,
            "potential": potential}


def invariance_check(spec: GridSpec, cfg: GibbsSamplerConfig, root_seed: int,
                     horizon: float, dt: float, noise_seed: int | None = None) -> InvarianceReport:
    """Draw Gibbs samples, evolve to the horizon, compare observable laws.

    The truncated dynamics and the sampled measure share the truncation and
    the Wick constant, so for an exact sampler and exact flow the two sample
    sets are equal in law; KS and mean shifts quantify the residual bias.
    """
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9:
        raise ValueError(f"dt {dt} does not divide horizon {horizon}")
    samples = sample_gibbs(spec, cfg, root_seed)
    k_total = len(samples)
    n = cfg.n_components
    shape = (k_total, n) + spec.shape()
    pos0 = np.zeros(shape, dtype=np.complex128)
    vel0 = np.zeros(shape, dtype=np.complex128)
    pos0.reshape(k_total, n, -1)[:, :, samples.mode_idx] = samples.positions
    vel0.reshape(k_total, n, -1)[:, :, samples.mode_idx] = samples.velocities
    alpha = alpha_m(spec.m, cfg.truncation)
    pos1, _ = evolve_gibbs_samples(pos0, vel0, spec, alpha, float(cfg.truncation),
                                   dt, n_steps,
                                   root_seed + 1 if noise_seed is None else noise_seed)
    obs0 = _invariance_observables(pos0, spec, alpha, n)
    obs1 = _invariance_observables(pos1, spec, alpha, n)
    rows = []
    for name in obs0:
        a, b = obs0[name], obs1[name]
        ks = ks_2samp(a, b)
        rows.append({
            "observable": name,
            "ks_stat": float(ks.statistic),
            "p_value": float(ks.pvalue),
            "mean_t0": float(np.mean(a)),
            "se_t0": float(np.std(a, ddof=1) / np.sqrt(len(a))),
            "mean_t1": float(np.mean(b)),
            "se_t1": float(np.std(b, ddof=1) / np.sqrt(len(b))),
        })
    return InvarianceReport(rows)


def gibbs_vs_gaussian_covariance(samples: GibbsSamples, j: int, mode: tuple) -> dict:
    """Per-mode sample variance against the free-field value ``1/(m+|n|^2)``."""
    vals = samples.mode_values(j, mode)
    spec = samples.spec
    n1 = (mode[0] + spec.n_grid // 2) % spec.n_grid - spec.n_grid // 2
    n2 = (mode[1] + spec.n_grid // 2) % spec.n_grid - spec.n_grid // 2
    in_ball = n1 * n1 + n2 * n2 <= samples.truncation**2 + 1e-9
    est = float(np.mean(np.abs(vals) ** 2))
    se = est * np.sqrt(2.0 / max(len(vals) - 1, 1))
    target = 1.0 / (spec.m + n1 * n1 + n2 * n2) if in_ball else 0.0
    return {"mode": (int(n1), int(n2)), "variance": est, "se": float(se),
            "gaussian_variance": target}
