"""Time integration of the incompressible Hookean viscoelastic system.

Unknowns are a divergence-free velocity v and a strain tensor E on a periodic
grid, coupled through

    v_t + v.grad v + grad p = mu lap v + div(E E^T) + div E
    E_t + v.grad E          = (grad v) E + grad v

The pressure gradient is eliminated by Leray projection at every stage
(exact on the torus); ``pressure_recover`` reconstructs p afterwards as a
consistency diagnostic. The default stepper treats the viscous term with its
exact spectral integrating factor and everything else with explicit midpoint
RK2; ``erk4`` is a fully explicit classic Runge-Kutta alternative.

Equilibrium (v, E) = (0, 0) is an exact fixed point of every scheme, and the
discrete energy balance (energy change plus quadrature of mu ||grad v||^2)
is audited per step at the quadrature order matching the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .constraints import AdmissibleIC, constraint_residuals
from .diagnostics import (
    DiagnosticsRecord,
    ThresholdConfig,
    compute_record,
    grad_v_h2_sq,
)
from .errors import ConfigError, ContractError, DivergenceError, RankError
from .spectral import (
    Field,
    Grid,
    PHYSICAL,
    SPECTRAL,
    fftn,
    ifftn,
    to_physical,
    to_spectral,
)

SCHEMES = ("imex-cn-rk2", "erk4")

# explicit RK stability reach on the negative real axis (classic RK4)
_RK4_REAL_LIMIT = 2.785


@dataclass
class State:
    """Time slice of the incompressible system: t plus (v, E) and viscosity mu."""

    t: float
    v: Field
    E: Field
    mu: float

    def __post_init__(self):
        if self.v.rank != 1 or self.E.rank != 2:
            raise RankError("State requires a rank-1 velocity and rank-2 strain")
        if self.v.grid != self.E.grid:
            raise ContractError("velocity and strain grids differ")
        if self.mu <= 0:
            raise ContractError("viscosity must be positive")

    @property
    def grid(self) -> Grid:
        return self.v.grid

    @classmethod
    def from_ic(cls, ic: AdmissibleIC, mu: float, t: float = 0.0) -> "State":
        return cls(t=t, v=ic.v0.copy(), E=ic.E0.copy(), mu=mu)

    @classmethod
    def equilibrium(cls, grid: Grid, mu: float) -> "State":
        return cls(t=0.0, v=Field.zeros(grid, 1), E=Field.zeros(grid, 2), mu=mu)


@dataclass
class StepperConfig:
    dt: float | None = None  # fixed step size; None selects the CFL rule
    cfl: float = 0.5
    scheme: str = "imex-cn-rk2"
    dealias: bool = True
    conservative_stress: bool = True
    fluid_only: bool = False
    dt_max: float = 0.1

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt", "must be positive")
        if not (0.0 < self.cfl <= 1.0):
            raise ConfigError("cfl", "must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {SCHEMES}")
        if self.dt_max <= 0:
            raise ConfigError("dt_max", "must be positive")


# ---------------------------------------------------------------------------
# spectral tendencies


def _project(g: Grid, vh: np.ndarray) -> np.ndarray:
    kdotv = np.zeros(g.shape, dtype=np.complex128)
    for a in range(g.dim):
        kdotv += g.kd[a] * vh[a]
    kdotv *= g.k2d_inv
    out = vh.copy()
    for a in range(g.dim):
        out[a] -= g.kd[a] * kdotv
    return out


def _tendencies(g: Grid, vh, Eh, mu, cfg: StepperConfig, include_viscous: bool):
    """Spectral (dv_hat, dE_hat); dv_hat is Leray-projected.

    Transforms are batched over component axes; quadratic products are formed
    in physical space and truncated by the two-thirds mask on the way back.
    """
    d = g.dim
    sp = g.spatial_axes
    mask = g.dealias_mask if cfg.dealias else 1.0
    ikd = 1j * g.kd_full  # (d, ...)

    if cfg.fluid_only:
        back = ifftn(np.concatenate([vh, (ikd[None] * vh[:, None]).reshape((d * d,) + g.shape)]), sp).real
        v, grad_v = back[:d], back[d:].reshape((d, d) + g.shape)
        Nv = -np.einsum("a...,ia...->i...", v, grad_v)
        dvh = _project(g, fftn(Nv, sp) * mask)
        if include_viscous:
            dvh = dvh - mu * g.k2d * vh
        return dvh, np.zeros_like(Eh)

    E2h = Eh.reshape((d, d) + g.shape)
    spec_stack = np.concatenate(
        [
            vh,
            (ikd[None] * vh[:, None]).reshape((d * d,) + g.shape),  # d_a v_i
            Eh,
            (ikd[None, None] * E2h[:, :, None]).reshape((d * d * d,) + g.shape),  # d_l E_ij
        ]
    )
    back = ifftn(spec_stack, sp).real
    v = back[:d]
    grad_v = back[d : d + d * d].reshape((d, d) + g.shape)
    E = back[d + d * d : d + 2 * d * d].reshape((d, d) + g.shape)
    grad_E = back[d + 2 * d * d :].reshape((d, d, d) + g.shape)

    Nv = -np.einsum("a...,ia...->i...", v, grad_v)
    NE = (
        -np.einsum("l...,ijl...->ij...", v, grad_E)
        + np.einsum("ik...,kj...->ij...", grad_v, E)
    )
    if cfg.conservative_stress:
        quad = np.einsum("ik...,jk...->ij...", E, E)  # E E^T
    else:
        quad = np.einsum("jk...,ikj...->i...", E, grad_E)  # E_jk d_j E_ik

    nq = quad.reshape((-1,) + g.shape)
    fwd = fftn(np.concatenate([Nv, NE.reshape((d * d,) + g.shape), nq]), sp) * mask
    Nvh = fwd[:d]
    dEh = fwd[d : d + d * d] + (ikd[None] * vh[:, None]).reshape((d * d,) + g.shape)
    qh = fwd[d + d * d :]

    if cfg.conservative_stress:
        Sh = qh.reshape((d, d) + g.shape) + E2h
        Nvh = Nvh + np.einsum("j...,ij...->i...", ikd, Sh)
    else:
        Nvh = Nvh + qh.reshape((d,) + g.shape) + np.einsum("j...,ij...->i...", ikd, E2h)

    dvh = _project(g, Nvh)
    if include_viscous:
        dvh = dvh - mu * g.k2d * vh
    return dvh, dEh


def _diss(g: Grid, vh, mu: float) -> float:
    """Instantaneous dissipation mu ||grad v||^2 from the spectrum."""
    return mu * g.parseval * float(np.sum(g.k2d * (vh.real**2 + vh.imag**2)))


def _check_finite(g: Grid, vh, Eh, t, step_index, last_good: State | None):
    if np.isfinite(vh).all() and np.isfinite(Eh).all():
        return
    raise DivergenceError(
        f"non-finite field at t={t:.6g} (step {step_index})",
        last_good=last_good,
        t=t,
        step=step_index,
    )


def _advance(g: Grid, vh, Eh, mu, dt, cfg: StepperConfig):
    """One step in spectral space; returns (vh', Eh', dissipation increment).

    Overflow on the way to a blow-up is not a crash: the caller turns the
    resulting non-finite fields into a DivergenceError.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance_inner(g, vh, Eh, mu, dt, cfg)


def _advance_inner(g: Grid, vh, Eh, mu, dt, cfg: StepperConfig):
    if cfg.dealias:
        # keep the state itself on the retained band: transform round-trips
        # reseed |k| > n/3 modes at roundoff level, and those sit outside the
        # explicit scheme's stability region at the in-band step size
        vh = vh * g.dealias_mask
        Eh = Eh * g.dealias_mask
    if cfg.scheme == "erk4":
        k1v, k1E = _tendencies(g, vh, Eh, mu, cfg, True)
        y2v, y2E = vh + 0.5 * dt * k1v, Eh + 0.5 * dt * k1E
        k2v, k2E = _tendencies(g, y2v, y2E, mu, cfg, True)
        y3v, y3E = vh + 0.5 * dt * k2v, Eh + 0.5 * dt * k2E
        k3v, k3E = _tendencies(g, y3v, y3E, mu, cfg, True)
        y4v, y4E = vh + dt * k3v, Eh + dt * k3E
        k4v, k4E = _tendencies(g, y4v, y4E, mu, cfg, True)
        vn = vh + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        En = Eh + (dt / 6.0) * (k1E + 2 * k2E + 2 * k3E + k4E)
        # dissipation integral advanced with the same stage weights, so the
        # audit quadrature matches the scheme order
        dI = (dt / 6.0) * (
            _diss(g, vh, mu) + 2 * _diss(g, y2v, mu) + 2 * _diss(g, y3v, mu) + _diss(g, y4v, mu)
        )
        return _project(g, vn), En, dI

    # integrating-factor midpoint: viscous decay applied exactly,
    # the rest at explicit second order
    fac_half = np.exp(-mu * g.k2d * (0.5 * dt))
    d0 = _diss(g, vh, mu)
    n1v, n1E = _tendencies(g, vh, Eh, mu, cfg, False)
    vmid = fac_half * (vh + 0.5 * dt * n1v)
    Emid = Eh + 0.5 * dt * n1E
    n2v, n2E = _tendencies(g, vmid, Emid, mu, cfg, False)
    vn = fac_half * (fac_half * vh + dt * n2v)
    En = Eh + dt * n2E
    vn = _project(g, vn)
    dI = 0.5 * dt * (d0 + _diss(g, vn, mu))
    return vn, En, dI


# ---------------------------------------------------------------------------
# public operations


def stress_divergence(E: Field, conservative: bool = True, use_dealias: bool = True) -> Field:
    """Elastic force density: div(E E^T) + div E, or its non-conservative form
    E_jk d_j E_ik + d_j E_ij. The two agree up to O(|div E^T| * |E|)."""
    if E.rank != 2:
        raise RankError("stress_divergence expects a rank-2 field")
    g = E.grid
    d = g.dim
    sp = g.spatial_axes
    mask = g.dealias_mask if use_dealias else 1.0
    Ep = E if E.repr == PHYSICAL else to_physical(E)
    Eh = fftn(Ep.data, sp)
    out = np.zeros((d,) + g.shape, dtype=np.complex128)
    if conservative:
        for i in range(d):
            for j in range(d):
                s = sum(Ep.data[i * d + k] * Ep.data[j * d + k] for k in range(d))
                out[i] += 1j * g.kd[j] * (fftn(s, sp) * mask + Eh[i * d + j])
    else:
        for i in range(d):
            acc = np.zeros(g.shape)
            for j in range(d):
                for k in range(d):
                    dE = ifftn(1j * g.kd[j] * Eh[i * d + k], sp).real
                    acc += Ep.data[j * d + k] * dE
            out[i] = fftn(acc, sp) * mask
            for j in range(d):
                out[i] += 1j * g.kd[j] * Eh[i * d + j]
    f = Field(g, 1, out, SPECTRAL)
    return to_physical(f) if E.repr == PHYSICAL else f


def rhs(state: State, cfg: StepperConfig | None = None) -> tuple:
    """Full tendencies (dv, dE) of the system; dv is divergence-free."""
    cfg = cfg or StepperConfig()
    g = state.grid
    vh = to_spectral(state.v).data
    Eh = to_spectral(state.E).data
    dvh, dEh = _tendencies(g, vh, Eh, state.mu, cfg, include_viscous=True)
    return (
        to_physical(Field(g, 1, dvh, SPECTRAL)),
        to_physical(Field(g, 2, dEh, SPECTRAL)),
    )


def pressure_recover(state: State, use_dealias: bool = True) -> Field:
    """Recover the eliminated pressure from lap(p) = d_jE_ik d_iE_jk - d_iv_j d_jv_i.

    Solved spectrally with a zero-mean gauge. Its gradient reproduces the
    non-solenoidal part of the nonlinear terms whenever div E^T vanishes.
    """
    g = state.grid
    d = g.dim
    sp = g.spatial_axes
    mask = g.dealias_mask if use_dealias else 1.0
    vh = to_spectral(state.v).data
    Eh = to_spectral(state.E).data
    dv = np.empty((d, d) + g.shape)
    dE = np.empty((d, d, d) + g.shape)
    for i in range(d):
        for a in range(d):
            dv[i, a] = ifftn(1j * g.kd[a] * vh[i], sp).real
            for j in range(d):
                dE[i, a, j] = ifftn(1j * g.kd[j] * Eh[i * d + a], sp).real
    src = np.zeros(g.shape)
    for i in range(d):
        for j in range(d):
            src -= dv[j, i] * dv[i, j]  # - d_i v_j d_j v_i
            for k in range(d):
                src += dE[i, k, j] * dE[j, k, i]  # d_j E_ik d_i E_jk
    sh = fftn(src, sp) * mask
    ph = -sh * g.k2d_inv
    ph[(0,) * d] = 0.0
    return to_physical(Field(g, 0, ph[np.newaxis], SPECTRAL))


def cfl_dt(state: State, cfg: StepperConfig | None = None) -> float:
    """Advective/elastic step bound cfl * h / (max|v| + c_e) with c_e = 1.

    Under the fully explicit scheme the viscous stability reach caps the
    result as well; the integrating-factor default needs no such cap.
    """
    cfg = cfg or StepperConfig()
    g = state.grid
    speed = float(np.max(np.sqrt(sum(c * c for c in state.v.data))))
    if not math.isfinite(speed):
        raise DivergenceError("non-finite velocity in CFL evaluation", t=state.t)
    h = 2.0 * np.pi / g.n
    dt = cfg.cfl * h / (speed + 1.0)
    if cfg.scheme == "erk4":
        k2max = float(np.max(g.k2d * g.dealias_mask)) if cfg.dealias else float(np.max(g.k2d))
        if state.mu * k2max > 0:
            dt = min(dt, 0.9 * _RK4_REAL_LIMIT / (state.mu * k2max))
    return min(dt, cfg.dt_max)


def step(state: State, cfg: StepperConfig | None = None) -> State:
    """Advance one step (cfg.dt, or the CFL rule when dt is None)."""
    cfg = cfg or StepperConfig()
    dt = cfg.dt if cfg.dt is not None else cfl_dt(state, cfg)
    g = state.grid
    vh = to_spectral(state.v).data
    Eh = to_spectral(state.E).data
    vn, En, _ = _advance(g, vh, Eh, state.mu, dt, cfg)
    _check_finite(g, vn, En, state.t + dt, 1, state)
    return State(
        t=state.t + dt,
        v=to_physical(Field(g, 1, vn, SPECTRAL)),
        E=to_physical(Field(g, 2, En, SPECTRAL)),
        mu=state.mu,
    )


# ---------------------------------------------------------------------------
# trajectory driver


@dataclass
class RunSummary:
    """Outcome of a trajectory: status, counters, records, and annotations."""

    status: str  # completed | diverged | blowup_tripped
    steps: int
    t_final: float
    records: list = dc_field(default_factory=list)
    annotations: list = dc_field(default_factory=list)
    final_state: State | None = None
    error: str | None = None


def run(
    ic: AdmissibleIC,
    mu: float,
    t_end: float,
    cfg: StepperConfig | None = None,
    threshold: ThresholdConfig | None = None,
    diag_every: int = 10,
    snapshot_every: int = 0,
    drift_budget: float = 1e-5,
    blowup_cap: float = math.inf,
    record_sink=None,
    snapshot_sink=None,
) -> RunSummary:
    """Step the system to t_end, emitting DiagnosticsRecords at a cadence.

    Terminates early on numerical divergence or when the running integral of
    ||grad v||_{H2}^2 exceeds ``blowup_cap``, and says which in the summary.
    Constraint drift past ``drift_budget`` and smallness-threshold violations
    are annotated, never fatal.
    """
    if t_end < 0:
        raise ContractError("t_end must be non-negative")
    cfg = cfg or StepperConfig()
    threshold = threshold or ThresholdConfig()
    g = ic.grid
    state0 = State.from_ic(ic, mu)
    vh = _project(g, to_spectral(state0.v).data)
    Eh = to_spectral(state0.E).data

    records: list[DiagnosticsRecord] = []
    annotations: list[dict] = []
    flagged_threshold = False
    flagged_drift = False

    def physical_state(t):
        return State(
            t=t,
            v=to_physical(Field(g, 1, vh, SPECTRAL)),
            E=to_physical(Field(g, 2, Eh, SPECTRAL)),
            mu=mu,
        )

    def emit(t, energy_residual, blowup_integral):
        nonlocal flagged_threshold, flagged_drift
        st = physical_state(t)
        rec = compute_record(
            st,
            threshold,
            energy_residual=energy_residual,
            blowup_integral=blowup_integral,
            use_dealias=cfg.dealias,
        )
        records.append(rec)
        if record_sink is not None:
            record_sink(rec)
        if not rec.threshold_ok and not flagged_threshold:
            flagged_threshold = True
            annotations.append({"event": "threshold_exceeded", "t": t})
        if rec.constraint.max() > drift_budget and not flagged_drift:
            flagged_drift = True
            annotations.append({"event": "constraint_drift_exceeded", "t": t})
        return rec

    emit(0.0, 0.0, 0.0)
    if snapshot_sink is not None and snapshot_every > 0:
        snapshot_sink(physical_state(0.0))

    t = 0.0
    nsteps = 0
    residual_accum = 0.0
    blowup_integral = 0.0
    grad_prev = grad_v_h2_sq(Field(g, 1, vh, SPECTRAL))
    e_prev = 0.5 * g.parseval * float(
        np.sum(vh.real**2 + vh.imag**2) + np.sum(Eh.real**2 + Eh.imag**2)
    )
    status = "completed"
    error = None

    while t < t_end - 1e-14:
        dt = cfg.dt if cfg.dt is not None else cfl_dt(physical_state(t), cfg)
        dt = min(dt, t_end - t)
        try:
            vh, Eh, dI = _advance(g, vh, Eh, mu, dt, cfg)
            _check_finite(g, vh, Eh, t + dt, nsteps + 1, None)
        except DivergenceError as exc:
            status = "diverged"
            error = str(exc)
            annotations.append({"event": "diverged", "t": t + dt, "step": nsteps + 1})
            break
        t += dt
        nsteps += 1

        with np.errstate(over="ignore", invalid="ignore"):
            e_now = 0.5 * g.parseval * float(
                np.sum(vh.real**2 + vh.imag**2) + np.sum(Eh.real**2 + Eh.imag**2)
            )
            residual_accum += (e_now - e_prev) + dI
            e_prev = e_now

            grad_now = grad_v_h2_sq(Field(g, 1, vh, SPECTRAL))
            blowup_integral += 0.5 * dt * (grad_prev + grad_now)
            grad_prev = grad_now

        at_end = t >= t_end - 1e-14
        if diag_every > 0 and (nsteps % diag_every == 0 or at_end):
            emit(t, residual_accum, blowup_integral)
            residual_accum = 0.0
        if snapshot_sink is not None and snapshot_every > 0 and (
            nsteps % snapshot_every == 0 or at_end
        ):
            snapshot_sink(physical_state(t))
        if blowup_integral > blowup_cap:
            status = "blowup_tripped"
            annotations.append({"event": "blowup_tripped", "t": t, "integral": blowup_integral})
            break

    final = physical_state(t) if status != "diverged" else None
    return RunSummary(
        status=status,
        steps=nsteps,
        t_final=t,
        records=records,
        annotations=annotations,
        final_state=final,
        error=error,
    )
