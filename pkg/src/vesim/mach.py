"""Compressible viscoelastic flow and the stiff-pressure incompressible limit.

The compressible system evolves density rho, velocity v, and deformation F:

    rho_t + div(rho v) = 0
    v_t + v.grad v + lam^2 (p'(rho)/rho) grad rho
        = (mu/rho)(lap v + grad div v) + (1/rho) div(rho F F^T)
    F_t + v.grad F = (grad v) F

with equation of state p(rho) = rho^2/2, so p'(rho)/rho == 1 and the pressure
term is exactly lam^2 grad rho; the acoustic speed at equilibrium is lam (the
reciprocal Mach number). As lam grows with data prepared at the scalings
|rho-1| = O(1/lam^2), |v - v0| = O(1/lam), |F - F0| = O(1/lam), the velocity
tracks the incompressible solution; ``limit_study`` measures that convergence
against a shared incompressible reference run.

Initial data keeps rho det F = 1 pointwise: the deformation perturbation is
volume-preserving (matrix exponential of a trace-free random tensor), so the
pointwise rescaling rho = 1/det F stays within the O(1/lam^2) density bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .constraints import AdmissibleIC
from .errors import ConfigError, ConstructionError, ContractError, DivergenceError
from .spectral import (
    Field,
    Grid,
    PHYSICAL,
    SPECTRAL,
    fftn,
    ifftn,
    sobolev_norm,
    to_physical,
    to_spectral,
)

_RK4_REAL_LIMIT = 2.785
_RK4_IMAG_LIMIT = 2.0 * math.sqrt(2.0)


@dataclass
class CompressibleState:
    """Time slice (rho, v, F) with stiffness lam and viscosity mu."""

    t: float
    rho: Field
    v: Field
    F: Field
    lam: float
    mu: float

    def __post_init__(self):
        if self.rho.rank != 0 or self.v.rank != 1 or self.F.rank != 2:
            raise ContractError("CompressibleState needs ranks (0, 1, 2)")
        if not (self.rho.grid == self.v.grid == self.F.grid):
            raise ContractError("fields live on different grids")
        if self.lam < 1:
            raise ContractError("lam must be >= 1")
        if self.mu <= 0:
            raise ContractError("viscosity must be positive")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def strain(self) -> Field:
        """F - I as a rank-2 field."""
        E = self.F.copy()
        d = self.grid.dim
        for i in range(d):
            E.data[i * d + i] -= 1.0
        return E


@dataclass
class CompressibleConfig:
    dt: float | None = None
    cfl: float = 0.5
    dealias: bool = True
    dt_max: float = 0.05

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt", "must be positive")
        if not (0.0 < self.cfl <= 1.0):
            raise ConfigError("cfl", "must lie in (0, 1]")


def _identity_spectrum(g: Grid) -> np.ndarray:
    """Spectrum of the identity tensor (mean mode carries n^dim)."""
    Fh = np.zeros((g.dim * g.dim,) + g.shape, dtype=np.complex128)
    for i in range(g.dim):
        Fh[i * g.dim + i][(0,) * g.dim] = g.npoints
    return Fh


def _det_pointwise(d: int, F: np.ndarray) -> np.ndarray:
    """det of a stacked (d*d, x...) tensor field, evaluated per point."""
    if d == 2:
        return F[0] * F[3] - F[1] * F[2]
    return (
        F[0] * (F[4] * F[8] - F[5] * F[7])
        - F[1] * (F[3] * F[8] - F[5] * F[6])
        + F[2] * (F[3] * F[7] - F[4] * F[6])
    )


def rho_det_F_drift(state: CompressibleState) -> float:
    """Max |rho det F - 1|, the compressible volume constraint defect."""
    rho = state.rho.data[0]
    det = _det_pointwise(state.grid.dim, state.F.data)
    return float(np.max(np.abs(rho * det - 1.0)))


def total_mass(state: CompressibleState) -> float:
    return float(np.mean(state.rho.data[0])) * (2.0 * np.pi) ** state.grid.dim


# ---------------------------------------------------------------------------
# tendencies and stepping


def _tend_comp(g: Grid, rh, vh, Fh, lam, mu, use_dealias: bool):
    """Spectral tendencies (drho_hat, dv_hat, dF_hat)."""
    d = g.dim
    sp = g.spatial_axes
    mask = g.dealias_mask if use_dealias else 1.0
    ikd = 1j * g.kd_full

    F2h = Fh.reshape((d, d) + g.shape)
    kdotv = np.einsum("a...,a...->...", g.kd_full, vh)
    visc_h = -(g.k2d * vh) - g.kd_full * kdotv  # lap v + grad div v

    back = ifftn(
        np.concatenate(
            [
                rh,
                vh,
                Fh,
                (ikd[None] * vh[:, None]).reshape((d * d,) + g.shape),  # d_a v_i
                (ikd[None, None] * F2h[:, :, None]).reshape((d**3,) + g.shape),  # d_l F_ij
                visc_h,
            ]
        ),
        sp,
    ).real
    o = 0
    rho = back[0]
    o += 1
    v = back[o : o + d]
    o += d
    F = back[o : o + d * d].reshape((d, d) + g.shape)
    o += d * d
    grad_v = back[o : o + d * d].reshape((d, d) + g.shape)
    o += d * d
    grad_F = back[o : o + d**3].reshape((d, d, d) + g.shape)
    o += d**3
    visc = back[o : o + d]

    if np.min(rho) <= 0.0:
        raise DivergenceError(f"non-positive density (min {np.min(rho):.3e})")
    inv_rho = 1.0 / rho

    # rho F F^T with nested truncation (cubic product)
    P1 = np.einsum("ik...,jk...->ij...", F, F)
    P1 = ifftn(fftn(P1.reshape((d * d,) + g.shape), sp) * mask, sp).real
    P2h = fftn(rho * P1, sp) * mask
    divG = ifftn(np.einsum("j...,ij...->i...", ikd, P2h.reshape((d, d) + g.shape)), sp).real

    Nv = -np.einsum("a...,ia...->i...", v, grad_v) + inv_rho * (mu * visc + divG)
    NF = (
        -np.einsum("l...,ijl...->ij...", v, grad_F)
        + np.einsum("ik...,kj...->ij...", grad_v, F)
    ).reshape((d * d,) + g.shape)
    m = rho * v  # momentum density for the conservative continuity form

    fwd = fftn(np.concatenate([m, Nv, NF]), sp) * mask
    mh = fwd[:d]
    dvh = fwd[d : 2 * d] - lam**2 * (ikd * rh[0])  # p(rho)=rho^2/2 -> exactly lam^2 grad rho
    dFh = fwd[2 * d :]
    drh = -np.einsum("a...,a...->...", ikd, mh)[np.newaxis]
    return drh, dvh, dFh


def cfl_dt_compressible(state: CompressibleState, cfg: CompressibleConfig | None = None) -> float:
    """Acoustic CFL cfl*h/(max|v| + lam max sqrt(p'(rho)) + c_e), viscous-capped."""
    cfg = cfg or CompressibleConfig()
    g = state.grid
    speed = float(np.max(np.sqrt(sum(c * c for c in state.v.data))))
    sound = state.lam * float(np.sqrt(np.max(state.rho.data)))  # p'(rho) = rho
    if not (math.isfinite(speed) and math.isfinite(sound)):
        raise DivergenceError("non-finite fields in CFL evaluation", t=state.t)
    h = 2.0 * np.pi / g.n
    dt = cfg.cfl * h / (speed + sound + 1.0)
    k2max = float(np.max(g.k2d * g.dealias_mask)) if cfg.dealias else float(np.max(g.k2d))
    mu_eff = state.mu / float(np.min(state.rho.data))
    if mu_eff * k2max > 0:
        # grad div v doubles the viscous rate on longitudinal modes
        dt = min(dt, 0.9 * _RK4_REAL_LIMIT / (2.0 * mu_eff * k2max))
    return min(dt, cfg.dt_max)


def _advance_comp(g, rh, vh, Fh, lam, mu, dt, use_dealias):
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance_comp_inner(g, rh, vh, Fh, lam, mu, dt, use_dealias)


def _advance_comp_inner(g, rh, vh, Fh, lam, mu, dt, use_dealias):
    def f(y):
        return _tend_comp(g, y[0], y[1], y[2], lam, mu, use_dealias)

    if use_dealias:
        # truncate the state to the retained band; see dynamics._advance.
        # rho keeps its mean plus band fluctuations, so positivity and mass
        # are untouched
        m = g.dealias_mask
        rh, vh, Fh = rh * m, vh * m, Fh * m
    y0 = (rh, vh, Fh)
    k1 = f(y0)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(y0, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(y0, k3)))
    return tuple(
        a + (dt / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
    )


def rhs_compressible(state: CompressibleState, use_dealias: bool = True) -> tuple:
    """Physical-space tendencies (drho, dv, dF)."""
    g = state.grid
    rh = to_spectral(state.rho).data
    vh = to_spectral(state.v).data
    Fh = to_spectral(state.F).data
    drh, dvh, dFh = _tend_comp(g, rh, vh, Fh, state.lam, state.mu, use_dealias)
    return (
        to_physical(Field(g, 0, drh, SPECTRAL)),
        to_physical(Field(g, 1, dvh, SPECTRAL)),
        to_physical(Field(g, 2, dFh, SPECTRAL)),
    )


def step_compressible(state: CompressibleState, cfg: CompressibleConfig | None = None) -> CompressibleState:
    """One explicit RK4 step at the configured or CFL-limited step size."""
    cfg = cfg or CompressibleConfig()
    dt = cfg.dt if cfg.dt is not None else cfl_dt_compressible(state, cfg)
    g = state.grid
    rh = to_spectral(state.rho).data
    vh = to_spectral(state.v).data
    Fh = to_spectral(state.F).data
    rn, vn, Fn = _advance_comp(g, rh, vh, Fh, state.lam, state.mu, dt, cfg.dealias)
    if not (np.isfinite(rn).all() and np.isfinite(vn).all() and np.isfinite(Fn).all()):
        raise DivergenceError(f"non-finite field at t={state.t + dt:.6g}", last_good=state, t=state.t)
    rho = to_physical(Field(g, 0, rn, SPECTRAL))
    if np.min(rho.data) <= 0:
        raise DivergenceError(f"non-positive density at t={state.t + dt:.6g}", last_good=state, t=state.t)
    return CompressibleState(
        t=state.t + dt,
        rho=rho,
        v=to_physical(Field(g, 1, vn, SPECTRAL)),
        F=to_physical(Field(g, 2, Fn, SPECTRAL)),
        lam=state.lam,
        mu=state.mu,
    )


# ---------------------------------------------------------------------------
# data preparation


def _matrix_exp_pointwise(d: int, A: np.ndarray) -> np.ndarray:
    """exp of a stacked (d*d, x...) matrix field by plain power series."""
    M = np.moveaxis(A.reshape((d, d) + A.shape[1:]), (0, 1), (-2, -1))
    out = np.zeros_like(M)
    out[..., range(d), range(d)] = 1.0
    term = out.copy()
    for k in range(1, 30):
        term = np.matmul(term, M) / k
        out += term
        if np.max(np.abs(term)) < 1e-18:
            break
    return np.moveaxis(out, (-2, -1), (0, 1)).reshape((d * d,) + A.shape[1:])


def _random_band_field(grid: Grid, rng, ncomp: int, peak_k: float = 2.0, decay: float = 1.5) -> np.ndarray:
    """Smooth random fields with a Gaussian bump spectrum, unit-free amplitude."""
    noise = rng.standard_normal((ncomp,) + grid.shape)
    nh = fftn(noise, grid.spatial_axes)
    kmag = np.sqrt(sum(k * k for k in grid.k))
    envelope = np.exp(-(((kmag - peak_k) / max(decay, 1e-12)) ** 2)) * grid.dealias_mask
    envelope[(0,) * grid.dim] = 0.0
    return ifftn(nh * envelope, grid.spatial_axes).real


def gen_compressible_ic(
    ic: AdmissibleIC,
    lam: float,
    delta0: float,
    seed: int,
    mu: float = 1.0,
    s: int = 4,
    slack: float = 1e-8,
) -> CompressibleState:
    """Perturb admissible incompressible data into stiff-pressure initial data.

    Applies scaled random perturbations: velocity within delta0/lam in
    H^{s+1}, deformation within delta0/lam in H^s (volume-preserving so the
    density bound survives), then rescales rho = 1/det F pointwise. All three
    bounds are re-verified by direct norm evaluation; ``slack`` absorbs the
    manufacture-level residual of det F0. Deterministic in ``seed``.
    """
    g = ic.grid
    d = g.dim
    rng = np.random.default_rng(seed)

    F = ic.E0.data.copy()
    for i in range(d):
        F[i * d + i] += 1.0

    v = ic.v0.data.copy()
    v_bound = delta0 / lam
    F_bound = delta0 / lam
    rho_bound = delta0 / lam**2

    if delta0 > 0:
        vt = _random_band_field(g, rng, d)
        vt_f = Field(g, 1, vt, PHYSICAL)
        nrm = sobolev_norm(vt_f, min(s + 1, 4))
        if nrm > 0:
            v = v + (v_bound / nrm) * vt

        A = _random_band_field(g, rng, d * d)
        # remove the trace pointwise so exp(A) is volume-preserving
        tr = sum(A[i * d + i] for i in range(d)) / d
        for i in range(d):
            A[i * d + i] -= tr
        # scale A so the measured deformation perturbation meets its bound
        base = F.copy()
        scale = 1.0
        nA = sobolev_norm(Field(g, 2, A, PHYSICAL), s)
        if nA > 0:
            scale = 0.9 * F_bound / nA
            for _ in range(8):
                expA = _matrix_exp_pointwise(d, scale * A)
                Fp = np.einsum("ik...,kj...->ij...", expA.reshape((d, d) + g.shape), base.reshape((d, d) + g.shape)).reshape((d * d,) + g.shape)
                dn = sobolev_norm(Field(g, 2, Fp - base, PHYSICAL), s)
                if dn <= F_bound:
                    F = Fp
                    break
                scale *= 0.8 * F_bound / dn
            else:
                raise ConstructionError("could not scale deformation perturbation under its bound")

    det = _det_pointwise(d, F)
    if np.min(det) <= 0:
        raise ConstructionError("perturbed deformation lost orientation (det F <= 0)")
    rho = (1.0 / det)[np.newaxis]

    state = CompressibleState(
        t=0.0,
        rho=Field(g, 0, rho, PHYSICAL),
        v=Field(g, 1, v, PHYSICAL),
        F=Field(g, 2, F, PHYSICAL),
        lam=lam,
        mu=mu,
    )

    rho_dev = Field(g, 0, rho - 1.0, PHYSICAL)
    checks = {
        "rho": (sobolev_norm(rho_dev, s), rho_bound),
        "v": (sobolev_norm(Field(g, 1, v - ic.v0.data, PHYSICAL), min(s + 1, 4)), v_bound),
        "F": (sobolev_norm(state.strain() - ic.E0, s), F_bound),
    }
    for name, (measured, bound) in checks.items():
        if measured > bound + slack:
            raise ConstructionError(
                f"{name} perturbation norm {measured:.3e} exceeds bound {bound:.3e}"
            )
    return state


# ---------------------------------------------------------------------------
# the limit experiment


def energy_es(state: CompressibleState, s: int = 4) -> float:
    """E_s = ||lam(rho-1)||_{H^s}^2 + ||v||_{H^s}^2 + ||F - I||_{H^s}^2."""
    g = state.grid
    rho_dev = Field(g, 0, state.rho.data - 1.0, PHYSICAL)
    return (
        (state.lam * sobolev_norm(rho_dev, s)) ** 2
        + sobolev_norm(state.v, s) ** 2
        + sobolev_norm(state.strain(), s) ** 2
    )


@dataclass
class LimitStudyResult:
    """Per-lambda sup-in-time velocity errors against the incompressible run."""

    lambdas: list
    errors: list  # sup_t ||v_lam - v_ref||_L2 (raw field difference)
    proj_errors: list  # same with the solenoidal projection of v_lam
    rates: dict  # fitted log-log slopes and fit residuals
    es_energies: list  # E_s series per lambda (list of lists)
    sample_times: list = dc_field(default_factory=list)
    steps: list = dc_field(default_factory=list)
    wall_times: list = dc_field(default_factory=list)
    failures: list = dc_field(default_factory=list)  # (lam, message) for diverged members


def _fit_rate(lams, errs):
    xs = [math.log(l) for l, e in zip(lams, errs) if e is not None and e > 0]
    ys = [math.log(e) for e in errs if e is not None and e > 0]
    if len(xs) < 2:
        return None, None
    n = len(xs)
    xbar, ybar = sum(xs) / n, sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    slope = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys)) / sxx
    resid = math.sqrt(
        sum((y - ybar - slope * (x - xbar)) ** 2 for x, y in zip(xs, ys)) / n
    )
    return slope, resid


def limit_study(
    ic: AdmissibleIC,
    lambdas,
    T_win: float,
    mu: float = 1.0,
    delta0: float = 0.05,
    seed: int = 7,
    s: int = 4,
    n_samples: int = 20,
    cfl: float = 0.5,
    use_dealias: bool = True,
) -> LimitStudyResult:
    """Run the incompressible reference once, then the stiff system per lambda.

    Velocity error is sampled on a shared time grid; both the raw and the
    solenoidal-projected errors are recorded, along with the E_s series. A
    diverging member contributes a failure annotation instead of aborting the
    sweep.
    """
    lambdas = list(lambdas)
    if any(l < 1 for l in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ContractError("lambdas must be >= 1 and strictly increasing")
    from .dynamics import State, StepperConfig, _advance, _project, cfl_dt

    g = ic.grid
    sample_times = [T_win * i / n_samples for i in range(n_samples + 1)]

    # incompressible reference, sampled on the shared grid of times
    cfg_ref = StepperConfig(scheme="erk4", cfl=cfl, dealias=use_dealias)
    state = State.from_ic(ic, mu)
    vh = _project(g, to_spectral(state.v).data)
    Eh = to_spectral(state.E).data
    ref_spectra = [vh.copy()]
    for t0, t1 in zip(sample_times, sample_times[1:]):
        span = t1 - t0
        dt_stab = cfl_dt(
            State(
                t=t0,
                v=to_physical(Field(g, 1, vh, SPECTRAL)),
                E=to_physical(Field(g, 2, Eh, SPECTRAL)),
                mu=mu,
            ),
            cfg_ref,
        )
        nsub = max(1, math.ceil(span / dt_stab))
        for _ in range(nsub):
            vh, Eh, _ = _advance(g, vh, Eh, mu, span / nsub, cfg_ref)
        ref_spectra.append(vh.copy())

    errors, proj_errors, es_series, steps_per_lam, walls, failures = [], [], [], [], [], []
    ccfg = CompressibleConfig(cfl=cfl, dealias=use_dealias)
    for lam in lambdas:
        wall_start = time.perf_counter()
        cst = gen_compressible_ic(ic, lam, delta0, seed, mu=mu, s=s)
        rh = to_spectral(cst.rho).data
        cvh = to_spectral(cst.v).data
        Fh = to_spectral(cst.F).data
        sup_raw = 0.0
        sup_proj = 0.0
        es = []
        nsteps = 0
        failed = None

        def measure(idx):
            nonlocal sup_raw, sup_proj
            ref = ref_spectra[idx]
            diff = cvh - ref
            raw = math.sqrt(g.parseval * float(np.sum(diff.real**2 + diff.imag**2)))
            pdiff = _project(g, cvh) - ref
            proj = math.sqrt(g.parseval * float(np.sum(pdiff.real**2 + pdiff.imag**2)))
            sup_raw = max(sup_raw, raw)
            sup_proj = max(sup_proj, proj)
            st = CompressibleState(
                t=sample_times[idx],
                rho=to_physical(Field(g, 0, rh, SPECTRAL)),
                v=to_physical(Field(g, 1, cvh, SPECTRAL)),
                F=to_physical(Field(g, 2, Fh, SPECTRAL)),
                lam=lam,
                mu=mu,
            )
            es.append(energy_es(st, s))

        measure(0)
        try:
            for idx, (t0, t1) in enumerate(zip(sample_times, sample_times[1:])):
                span = t1 - t0
                probe = CompressibleState(
                    t=t0,
                    rho=to_physical(Field(g, 0, rh, SPECTRAL)),
                    v=to_physical(Field(g, 1, cvh, SPECTRAL)),
                    F=to_physical(Field(g, 2, Fh, SPECTRAL)),
                    lam=lam,
                    mu=mu,
                )
                dt_stab = cfl_dt_compressible(probe, ccfg)
                nsub = max(1, math.ceil(span / dt_stab))
                for _ in range(nsub):
                    rh, cvh, Fh = _advance_comp(g, rh, cvh, Fh, lam, mu, span / nsub, use_dealias)
                    nsteps += 1
                if not (np.isfinite(rh).all() and np.isfinite(cvh).all() and np.isfinite(Fh).all()):
                    raise DivergenceError(f"lam={lam} diverged before t={t1:.3g}")
                measure(idx + 1)
        except DivergenceError as exc:
            failed = str(exc)

        if failed is not None:
            failures.append((lam, failed))
            errors.append(None)
            proj_errors.append(None)
        else:
            errors.append(sup_raw)
            proj_errors.append(sup_proj)
        es_series.append(es)
        steps_per_lam.append(nsteps)
        walls.append(time.perf_counter() - wall_start)

    raw_rate, raw_resid = _fit_rate(lambdas, errors)
    proj_rate, proj_resid = _fit_rate(lambdas, proj_errors)
    return LimitStudyResult(
        lambdas=lambdas,
        errors=errors,
        proj_errors=proj_errors,
        rates={
            "raw": raw_rate,
            "raw_residual": raw_resid,
            "projected": proj_rate,
            "projected_residual": proj_resid,
        },
        es_energies=es_series,
        sample_times=sample_times,
        steps=steps_per_lam,
        wall_times=walls,
        failures=failures,
    )
