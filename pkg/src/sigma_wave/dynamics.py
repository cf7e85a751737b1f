"""Time integration of the coupled wave systems.

Four systems share one integrator skeleton: the linear damped flow and the
noise transition are applied exactly per mode, and the cubic drift goes
through a two-stage exponential integrator (predict with the constant-
forcing Duhamel weight, correct with the trapezoid weight), giving second
order in dt.  The systems differ only in how the drift is assembled:

* residual ensemble: the six-term renormalized coupling, which collapses
  algebraically to ``-(q + 2p + w - 2c/N) (v_j + psi_j)`` with the three
  ensemble means q = <v^2>, p = <psi v>, w = <H_2(psi; c)>; the unfactored
  double loop is kept as ``hlsm_rhs_reference`` and unit-tested against the
  factored form,
* replica mean field: ``-(<v^2> + 2<psi v>) (v_r + psi_r)`` with replica
  averages in place of expectations,
* renormalized interacting wave in the original variables:
  ``-(<u^2> - (N+2) c / N) u_j``, the drift whose invariant measure is the
  truncated Gibbs ensemble,
* conservative undamped wave: ``-<u^2> u_j``, no noise, energy-conserving.

Components are vectorized (stacked FFTs), which makes reductions exactly
deterministic; parallelism across runs lives in the experiment layer.

Pointwise products are formed on the grid after a 2/3-rule truncation by
default; the no-dealias mode exists because exact products are wanted when
comparing against mode-space oracles and when the product of ball-limited
fields is representable on the grid anyway.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .grid import ComponentEnsemble, GridSpec, ball_mask, dealias_mask
from .noise import NoiseKind, NoiseStream, RenormConstants, _draw_kick, _transition_tables, sample_mu1_mu0_pair
from .propagator import duhamel_weights, flow_entries
from .wick import hermite

__all__ = [
    "BlowupError",
    "HlsmState",
    "MeanFieldState",
    "TrajectoryRecord",
    "hlsm_rhs",
    "hlsm_rhs_reference",
    "step_hlsm",
    "meanfield_rhs",
    "step_meanfield",
    "step_linear_ensemble",
    "renormalized_drift",
    "step_renormalized_wave",
    "step_deterministic_nlw",
    "step_deterministic_meanfield",
    "run_trajectory",
]


class BlowupError(RuntimeError):
    """Raised when a trajectory leaves the representable range.

    A candidate blow-up is reported, never clipped; ``time`` is the first
    recording node at which a non-finite value appeared.
    """

    def __init__(self, time: float):
        super().__init__(f"non-finite field values at t = {time:g}")
        self.time = time


@lru_cache(maxsize=32)
def _drift_tables(spec: GridSpec, dt: float, gamma: float):
    flow = flow_entries(spec.dispersion, dt, gamma=gamma)
    (gx, gv), (w1x, w1v) = duhamel_weights(spec.dispersion, dt, gamma=gamma)
    for arr in flow + (gx, gv, w1x, w1v):
        arr.setflags(write=False)
    return flow, (gx, gv, w1x, w1v)


def _grids(coeff_stack: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(coeff_stack, norm="forward").real


def _coeffs(grid_stack: np.ndarray, mask) -> np.ndarray:
    out = np.fft.fft2(grid_stack, norm="forward")
    if mask is not None:
        out = np.where(mask, out, 0.0)
    return out


def _masked(coeff_stack: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return coeff_stack
    return np.where(mask, coeff_stack, 0.0)


def _ensemble_drift(v_pos: np.ndarray, psi_pos: np.ndarray, c: float, mask) -> np.ndarray:
    """Factored six-term coupling for the residual ensemble, in mode space."""
    n = v_pos.shape[0]
    vg = _grids(_masked(v_pos, mask))
    pg = _grids(_masked(psi_pos, mask))
    q = np.mean(vg * vg, axis=0)
    p = np.mean(pg * vg, axis=0)
    w = np.mean(pg * pg, axis=0) - c
    g = q + 2.0 * p + w - 2.0 * c / n
    return _coeffs(-g[None] * (vg + pg), mask)


def _meanfield_drift(v_pos: np.ndarray, psi_pos: np.ndarray, mask) -> np.ndarray:
    """Replica-averaged limit drift; every term carries v or a v-average."""
    vg = _grids(_masked(v_pos, mask))
    pg = _grids(_masked(psi_pos, mask))
    a = np.mean(vg * vg, axis=0)
    b = np.mean(pg * vg, axis=0)
    return _coeffs(-(a + 2.0 * b)[None] * (vg + pg), mask)


def _conservative_drift(pos: np.ndarray, mask) -> np.ndarray:
    ug = _grids(_masked(pos, mask))
    return _coeffs(-np.mean(ug * ug, axis=0)[None] * ug, mask)


@dataclass(frozen=True)
class HlsmState:
    """Residual ensemble coupled to its per-component stochastic convolutions.

    The physical field of component j is ``psi_j + v_j``; the convolutions
    are advanced by the exact transition and live in the mode ball of the
    renormalization truncation, so the Wick constants of ``renorm`` match
    the fields they renormalize.
    """

    v: ComponentEnsemble
    psi: ComponentEnsemble
    streams: tuple
    time: float
    step: int
    renorm: RenormConstants
    dealias: bool = True

    def __post_init__(self) -> None:
        if not (len(self.v) == len(self.psi) == len(self.streams)):
            raise ValueError(
                f"component mismatch: v has {len(self.v)}, psi has "
                f"{len(self.psi)}, streams has {len(self.streams)}"
            )
        if self.v.spec != self.psi.spec:
            raise ValueError("v and psi live on different grids")

    @property
    def n_components(self) -> int:
        return len(self.v)

    @classmethod
    def zero(cls, spec: GridSpec, n_components: int, renorm: RenormConstants,
             root_seed: int, dealias: bool = True) -> "HlsmState":
        streams = tuple(NoiseStream(root_seed, j, NoiseKind.DRIVE) for j in range(n_components))
        return cls(ComponentEnsemble.zeros(spec, n_components),
                   ComponentEnsemble.zeros(spec, n_components),
                   streams, 0.0, 0, renorm, dealias)

    def combined(self) -> ComponentEnsemble:
        """The physical ensemble u = psi + v."""
        return ComponentEnsemble(self.v.spec, self.v.pos + self.psi.pos,
                                 self.v.vel + self.psi.vel, copy=False)


@dataclass(frozen=True)
class MeanFieldState:
    """Exchangeable replicas of the limiting one-body system.

    Expectations in the limit drift are estimated by replica averages; the
    estimator error is O(R^{-1/2}) and orthogonal to the N-limit studied by
    the convergence experiments.  ``psi`` starts from zero data by default
    and from the Gaussian equilibrium when built with ``stationary``.
    """

    v: ComponentEnsemble
    psi: ComponentEnsemble
    streams: tuple
    time: float
    step: int
    renorm: RenormConstants
    dealias: bool = True

    def __post_init__(self) -> None:
        if not (len(self.v) == len(self.psi) == len(self.streams)):
            raise ValueError(
                f"replica mismatch: v has {len(self.v)}, psi has "
                f"{len(self.psi)}, streams has {len(self.streams)}"
            )
        if self.v.spec != self.psi.spec:
            raise ValueError("v and psi live on different grids")

    @property
    def n_replicas(self) -> int:
        return len(self.v)

    @classmethod
    def zero(cls, spec: GridSpec, n_replicas: int, renorm: RenormConstants,
             root_seed: int, dealias: bool = True) -> "MeanFieldState":
        streams = tuple(NoiseStream(root_seed, r, NoiseKind.DRIVE) for r in range(n_replicas))
        return cls(ComponentEnsemble.zeros(spec, n_replicas),
                   ComponentEnsemble.zeros(spec, n_replicas),
                   streams, 0.0, 0, renorm, dealias)

    @classmethod
    def stationary(cls, spec: GridSpec, n_replicas: int, renorm: RenormConstants,
                   root_seed: int, dealias: bool = True) -> "MeanFieldState":
        state = cls.zero(spec, n_replicas, renorm, root_seed, dealias)
        pairs = [sample_mu1_mu0_pair(spec, renorm.M, NoiseStream(root_seed, r, NoiseKind.INITIAL))
                 for r in range(n_replicas)]
        psi = ComponentEnsemble.from_components([p for p in pairs])
        return replace(state, psi=psi)

    def combined(self) -> ComponentEnsemble:
        return ComponentEnsemble(self.v.spec, self.v.pos + self.psi.pos,
                                 self.v.vel + self.psi.vel, copy=False)


def _mask_for(state) -> np.ndarray | None:
    return dealias_mask(state.v.spec) if state.dealias else None


def hlsm_rhs(state: HlsmState) -> np.ndarray:
    """Drift of the residual ensemble, as a stacked coefficient array."""
    c = state.renorm.sigma_at(state.step)
    return _ensemble_drift(state.v.pos, state.psi.pos, c, _mask_for(state))


def hlsm_rhs_reference(state: HlsmState) -> np.ndarray:
    """Unfactored six-term double loop; the oracle for ``hlsm_rhs``."""
    c = state.renorm.sigma_at(state.step)
    mask = _mask_for(state)
    vg = _grids(_masked(state.v.pos, mask))
    pg = _grids(_masked(state.psi.pos, mask))
    n = state.n_components
    out = np.empty_like(vg)
    for j in range(n):
        vj, pj = vg[j], pg[j]
        acc = np.zeros_like(vj)
        for k in range(n):
            vk, pk = vg[k], pg[k]
            h2k = hermite(2, pk, c)
            pair_kj = hermite(2, pj, c) if k == j else pk * pj
            triple_kj = hermite(3, pj, c) if k == j else h2k * pj
            acc += (vk * vk * vj + 2.0 * pk * vk * vj + vk * vk * pj
                    + h2k * vj + 2.0 * vk * pair_kj + triple_kj)
        out[j] = -acc / n
    return _coeffs(out, mask)


def meanfield_rhs(state: MeanFieldState) -> np.ndarray:
    """Limit drift with replica-average expectations."""
    return _meanfield_drift(state.v.pos, state.psi.pos, _mask_for(state))


def _advance_noise(psi: ComponentEnsemble, streams, step: int, dt: float,
                   truncation: float) -> ComponentEnsemble:
    spec = psi.spec
    (s11, s12, s21, s22), chol = _transition_tables(spec, dt)
    pos = s11[None] * psi.pos + s12[None] * psi.vel
    vel = s21[None] * psi.pos + s22[None] * psi.vel
    for j, stream in enumerate(streams):
        ex, ev = _draw_kick(stream.generator(step), spec, truncation, chol)
        pos[j] += ex
        vel[j] += ev
    return ComponentEnsemble(spec, pos, vel, copy=False)


def step_linear_ensemble(ens: ComponentEnsemble, streams, step: int, dt: float,
                         truncation: float) -> ComponentEnsemble:
    """One exact transition of the free damped wave ensemble.

    This is the coupling partner of :func:`step_renormalized_wave`: with the
    same streams and step index both consume identical noise.
    """
    return _advance_noise(ens, streams, step, dt, truncation)


def _check_dt(dt: float, renorm: RenormConstants) -> None:
    if abs(dt - renorm.dt) > 1e-12 * max(1.0, dt):
        raise ValueError(f"dt = {dt} does not match the renormalization grid dt = {renorm.dt}")


def _etd2(pos, vel, f_of, psi_pos0, psi_pos1, tables):
    """Shared predictor-corrector update; ``f_of(p, psi)`` builds the drift."""
    (s11, s12, s21, s22), (gx, gv, w1x, w1v) = tables
    f0 = f_of(pos, psi_pos0)
    flow_pos = s11[None] * pos + s12[None] * vel
    flow_vel = s21[None] * pos + s22[None] * vel
    pred = flow_pos + gx[None] * f0
    f1 = f_of(pred, psi_pos1)
    df = f1 - f0
    new_pos = flow_pos + gx[None] * f0 + w1x[None] * df
    new_vel = flow_vel + gv[None] * f0 + w1v[None] * df
    return new_pos, new_vel


def step_hlsm(state: HlsmState, dt: float) -> HlsmState:
    """Advance residuals by one step: exact noise transition, ETD2 drift.

    The Wick constant is frozen at the step's left endpoint; the induced
    O(dt) bias in the drift is below the integrator error at working dt.
    """
    _check_dt(dt, state.renorm)
    if state.step + 1 >= len(state.renorm.sigma):
        raise ValueError("renormalization table exhausted; build it with more steps")
    spec = state.v.spec
    c = state.renorm.sigma_at(state.step)
    mask = _mask_for(state)
    psi1 = _advance_noise(state.psi, state.streams, state.step, dt, float(state.renorm.M))
    tables = _drift_tables(spec, dt, 0.5)
    pos, vel = _etd2(state.v.pos, state.v.vel,
                     lambda p, q: _ensemble_drift(p, q, c, mask),
                     state.psi.pos, psi1.pos, tables)
    return replace(state, v=ComponentEnsemble(spec, pos, vel, copy=False),
                   psi=psi1, time=state.time + dt, step=state.step + 1)


def step_meanfield(state: MeanFieldState, dt: float) -> MeanFieldState:
    """Advance the replica system; same integrator contract as step_hlsm."""
    _check_dt(dt, state.renorm)
    if state.step + 1 >= len(state.renorm.sigma):
        raise ValueError("renormalization table exhausted; build it with more steps")
    spec = state.v.spec
    mask = _mask_for(state)
    psi1 = _advance_noise(state.psi, state.streams, state.step, dt, float(state.renorm.M))
    tables = _drift_tables(spec, dt, 0.5)
    pos, vel = _etd2(state.v.pos, state.v.vel,
                     lambda p, q: _meanfield_drift(p, q, mask),
                     state.psi.pos, psi1.pos, tables)
    return replace(state, v=ComponentEnsemble(spec, pos, vel, copy=False),
                   psi=psi1, time=state.time + dt, step=state.step + 1)


def renormalized_drift(ens: ComponentEnsemble, alpha: float,
                       truncation: float | None = None) -> np.ndarray:
    """Gibbs drift in the original variables: ``-(<u^2> - (N+2)a/N) u_j``.

    With ``truncation`` set, inputs and output are projected to the mode
    ball, which is the sharp-cutoff system whose invariant measure is the
    truncated Gibbs ensemble (products must be grid-exact: n_grid > 4M).
    """
    spec = ens.spec
    n = len(ens)
    mask = ball_mask(spec, truncation) if truncation is not None else None
    ug = _grids(_masked(ens.pos, mask))
    mean_sq = np.mean(ug * ug, axis=0)
    shift = (n + 2.0) * alpha / n
    return _coeffs(-(mean_sq - shift)[None] * ug, mask)


def step_renormalized_wave(ens: ComponentEnsemble, streams, step: int, dt: float,
                           alpha: float, truncation: float | None) -> ComponentEnsemble:
    """One step of the interacting damped wave in the original variables.

    Exact linear flow and noise kick plus ETD2 on the renormalized drift;
    shares noise draws with :func:`step_linear_ensemble` by construction.
    ``truncation=None`` disables both the projection and the noise (the
    deterministic damped system, used by integrator-order tests).
    """
    spec = ens.spec
    (s11, s12, s21, s22), chol = _transition_tables(spec, dt)
    _, (gx, gv, w1x, w1v) = _drift_tables(spec, dt, 0.5)
    f0 = renormalized_drift(ens, alpha, truncation)
    flow_pos = s11[None] * ens.pos + s12[None] * ens.vel
    flow_vel = s21[None] * ens.pos + s22[None] * ens.vel
    kick_x = np.zeros_like(ens.pos)
    kick_v = np.zeros_like(ens.vel)
    if truncation is not None:
        for j, stream in enumerate(streams):
            ex, ev = _draw_kick(stream.generator(step), spec, truncation, chol)
            kick_x[j] = ex
            kick_v[j] = ev
    pred = ComponentEnsemble(spec, flow_pos + gx[None] * f0 + kick_x,
                             flow_vel, copy=False)
    f1 = renormalized_drift(pred, alpha, truncation)
    df = f1 - f0
    pos = flow_pos + gx[None] * f0 + w1x[None] * df + kick_x
    vel = flow_vel + gv[None] * f0 + w1v[None] * df + kick_v
    return ComponentEnsemble(spec, pos, vel, copy=False)


def _step_conservative(ens: ComponentEnsemble, dt: float, dealias: bool) -> ComponentEnsemble:
    spec = ens.spec
    mask = dealias_mask(spec) if dealias else None
    tables = _drift_tables(spec, dt, 0.0)
    pos, vel = _etd2(ens.pos, ens.vel, lambda p, _: _conservative_drift(p, mask),
                     None, None, tables)
    return ComponentEnsemble(spec, pos, vel, copy=False)


def step_deterministic_nlw(ens: ComponentEnsemble, dt: float, dealias: bool = True) -> ComponentEnsemble:
    """Undamped conservative ensemble wave with the empirical-average coupling."""
    return _step_conservative(ens, dt, dealias)


def step_deterministic_meanfield(replicas: ComponentEnsemble, dt: float,
                                 dealias: bool = True) -> ComponentEnsemble:
    """Undamped conservative mean-field wave; replica averages estimate E[u^2]."""
    return _step_conservative(replicas, dt, dealias)


@dataclass
class TrajectoryRecord:
    """Recorded observables (and optionally states) along one run."""

    times: np.ndarray
    series: dict
    states: list

    def running_max(self, name: str) -> float:
        return float(np.max(self.series[name]))

    def to_csv(self, path) -> None:
        names = list(self.series)
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{t:.17g}"] + [f"{self.series[k][i]:.17g}" for k in names]
                fh.write(",".join(row) + "\n")


def run_trajectory(state, dt: float, n_steps: int, stride: int = 1,
                   observables: dict | None = None,
                   keep_states: bool = False) -> TrajectoryRecord:
    """Integrate an HLSM or mean-field state, recording every ``stride`` steps.

    Observables map names to functions of the state.  Non-finite fields at a
    recording node raise :class:`BlowupError`; nothing is clipped.
    """
    if n_steps % stride != 0:
        raise ValueError(f"stride {stride} does not divide n_steps {n_steps}")
    if isinstance(state, HlsmState):
        stepper = step_hlsm
    elif isinstance(state, MeanFieldState):
        stepper = step_meanfield
    else:
        raise TypeError(f"cannot integrate a {type(state).__name__}")
    observables = observables or {}
    times = [state.time]
    series = {k: [fn(state)] for k, fn in observables.items()}
    states = [state] if keep_states else []
    for k in range(n_steps):
        state = stepper(state, dt)
        if (k + 1) % stride == 0:
            if not (np.all(np.isfinite(state.v.pos)) and np.all(np.isfinite(state.v.vel))):
                raise BlowupError(state.time)
            times.append(state.time)
            for name, fn in observables.items():
                series[name].append(fn(state))
            if keep_states:
                states.append(state)
    return TrajectoryRecord(np.asarray(times),
                            {k: np.asarray(v) for k, v in series.items()}, states)
