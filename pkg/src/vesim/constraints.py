"""Admissible initial data and structural constraint residuals.

A velocity/strain pair (v, E) is admissible when

    div v = 0
    det(I + E) = 1
    div E^T = 0
    d_m E_ij - d_j E_im = E_lj d_l E_im - E_lm d_l E_ij

These identities are transported by the flow, so nontrivial admissible strain
is manufactured by evolving E from zero in pseudo-time under a prescribed
divergence-free velocity; the residuals of all four identities are evaluated
and recorded at manufacture time and can be re-checked at any state.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Union

import numpy as np

from .errors import ContractError, ManufactureError, RankError
from .spectral import (
    Field,
    Grid,
    PHYSICAL,
    divergence,
    fftn,
    ifftn,
    leray_project,
    linf_norm,
    l2_norm,
    to_physical,
)

VelocityGen = Union[Field, Callable[[float], Field]]


# ---------------------------------------------------------------------------
# low-level helpers on raw spatial arrays


def _mask_phys(grid: Grid, a: np.ndarray) -> np.ndarray:
    """Two-thirds truncation of a physical spatial array."""
    return ifftn(fftn(a, axes=tuple(range(a.ndim))) * grid.dealias_mask,
                 axes=tuple(range(a.ndim))).real


def _pd(grid: Grid, a: np.ndarray, b: np.ndarray, use_dealias: bool = True) -> np.ndarray:
    """Pointwise product, spectrally truncated unless dealiasing is off."""
    ab = a * b
    return _mask_phys(grid, ab) if use_dealias else ab


def _grad_components(f: Field) -> np.ndarray:
    """d_a f_c as an array indexed [c, a, x...]; input may be any repr."""
    g = f.grid
    fh = f.data if f.repr == "spectral" else fftn(f.data, g.spatial_axes)
    out = np.empty((f.ncomp, g.dim) + g.shape)
    for c in range(f.ncomp):
        for a in range(g.dim):
            out[c, a] = ifftn(1j * g.kd[a] * fh[c], tuple(range(g.dim))).real
    return out


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ConstraintResiduals:
    """Max-norm defects of the four admissibility identities (plus the trace form).

    ``div_v``    max |div v|
    ``det_res``  max |det(I+E) - 1|
    ``div_Et``   max |div E^T|
    ``curl_res`` max defect of the antisymmetrized-gradient identity
    ``trace_res`` max |tr E + det E| in 2-D, |tr E + det E + gamma2(E)| in 3-D
    """

    div_v: float
    det_res: float
    div_Et: float
    curl_res: float
    trace_res: float
    #: the same five defects in L2, for reporting; not part of the identity set
    l2: dict = dc_field(default_factory=dict, compare=False)

    def max(self) -> float:
        return max(self.div_v, self.det_res, self.div_Et, self.curl_res, self.trace_res)

    def as_dict(self) -> dict:
        return {
            "div_v": self.div_v,
            "det_res": self.det_res,
            "div_Et": self.div_Et,
            "curl_res": self.curl_res,
            "trace_res": self.trace_res,
        }


def _det_minus_one(grid: Grid, E: np.ndarray, use_dealias: bool) -> np.ndarray:
    """det(I+E) - 1 by cofactor expansion, evaluated pointwise."""
    d = grid.dim

    def pd(a, b):
        return _pd(grid, a, b, use_dealias)

    if d == 2:
        return pd(1.0 + E[0], 1.0 + E[3]) - pd(E[1], E[2]) - 1.0
    M = [[E[i * 3 + j] for j in range(3)] for i in range(3)]
    m00, m11, m22 = 1.0 + M[0][0], 1.0 + M[1][1], 1.0 + M[2][2]
    det = (
        pd(m00, pd(m11, m22) - pd(M[1][2], M[2][1]))
        - pd(M[0][1], pd(M[1][0], m22) - pd(M[1][2], M[2][0]))
        + pd(M[0][2], pd(M[1][0], M[2][1]) - pd(m11, M[2][0]))
    )
    return det - 1.0


def _gamma_fields(grid: Grid, E: np.ndarray, use_dealias: bool):
    """Matrix invariants tr, gamma2 = ((tr)^2 - tr(A^2))/2, det, pointwise."""
    d = grid.dim

    def pd(a, b):
        return _pd(grid, a, b, use_dealias)

    tr = sum(E[i * d + i] for i in range(d))
    tr_sq = sum(pd(E[i * d + j], E[j * d + i]) for i in range(d) for j in range(d))
    gamma2 = 0.5 * (pd(tr, tr) - tr_sq)
    if d == 2:
        det = pd(E[0], E[3]) - pd(E[1], E[2])
    else:
        M = [[E[i * 3 + j] for j in range(3)] for i in range(3)]
        det = (
            pd(M[0][0], pd(M[1][1], M[2][2]) - pd(M[1][2], M[2][1]))
            - pd(M[0][1], pd(M[1][0], M[2][2]) - pd(M[1][2], M[2][0]))
            + pd(M[0][2], pd(M[1][0], M[2][1]) - pd(M[1][1], M[2][0]))
        )
    return tr, gamma2, det


def check_gamma_invariants(E: Field) -> dict:
    """Pointwise invariant fields {tr, gamma2, det} of a rank-2 field.

    Plain pointwise products are used (no truncation) so the algebraic
    identity det(A+I) = 1 + tr + gamma2 + det holds to roundoff for any
    input (in 2-D the third invariant vanishes and gamma2 equals det).
    """
    if E.rank != 2:
        raise RankError("check_gamma_invariants expects a rank-2 field")
    Ep = E if E.repr == PHYSICAL else to_physical(E)
    tr, gamma2, det = _gamma_fields(E.grid, Ep.data, use_dealias=False)
    wrap = lambda a: Field(E.grid, 0, a[np.newaxis], PHYSICAL)
    return {"tr": wrap(tr), "gamma2": wrap(gamma2), "det": wrap(det)}


def curl_defect(E: Field, use_dealias: bool = True) -> np.ndarray:
    """Defect d_m E_ij - d_j E_im - (E_lj d_l E_im - E_lm d_l E_ij), pair layout.

    Returns an array indexed [i, p, x...] with p over ordered pairs j < m.
    """
    g = E.grid
    d = g.dim
    Ep = E if E.repr == PHYSICAL else to_physical(E)
    Eh = fftn(Ep.data, g.spatial_axes)
    # dE[i, j, l] = d_l E_ij
    dE = np.empty((d, d, d) + g.shape)
    for i in range(d):
        for j in range(d):
            for l in range(d):
                dE[i, j, l] = ifftn(1j * g.kd[l] * Eh[i * d + j], tuple(range(d))).real
    pairs = [(j, m) for j in range(d) for m in range(j + 1, d)]
    out = np.empty((d, len(pairs)) + g.shape)
    for i in range(d):
        for p, (j, m) in enumerate(pairs):
            lin = dE[i, j, m] - dE[i, m, j]
            quad = np.zeros(g.shape)
            for l in range(d):
                quad += Ep.data[l * d + j] * dE[i, m, l] - Ep.data[l * d + m] * dE[i, j, l]
            if use_dealias:
                quad = _mask_phys(g, quad)
            out[i, p] = lin - quad
    return out


def constraint_residuals(v: Field, E: Field, use_dealias: bool = True) -> ConstraintResiduals:
    """Evaluate all admissibility defects of (v, E) in max norm (L2 attached).

    Derivatives are spectral; algebraic parts are pointwise with products
    spectrally truncated before the reduction (unless dealiasing is off).
    """
    if v.grid != E.grid:
        raise ContractError("velocity and strain live on different grids")
    g = v.grid
    vol = g.dx**g.dim

    def reduce(a: np.ndarray):
        return float(np.max(np.abs(a))), float(np.sqrt(np.sum(a * a) * vol))

    div_v, div_v2 = reduce(divergence(v).data)

    Ep = E if E.repr == PHYSICAL else to_physical(E)
    det_dev = _det_minus_one(g, Ep.data, use_dealias)
    det_res, det_res2 = reduce(det_dev)

    # div E^T: d_j E_ji
    Eh = fftn(Ep.data, g.spatial_axes)
    d = g.dim
    div_et = np.zeros((d,) + g.shape, dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            div_et[i] += 1j * g.kd[j] * Eh[j * d + i]
    div_Et, div_Et2 = reduce(ifftn(div_et, g.spatial_axes).real)

    curl_res, curl_res2 = reduce(curl_defect(Ep, use_dealias))

    tr, gamma2, det = _gamma_fields(g, Ep.data, use_dealias)
    tdef = tr + det if d == 2 else tr + det + gamma2
    trace_res, trace_res2 = reduce(tdef)

    return ConstraintResiduals(
        div_v=div_v,
        det_res=det_res,
        div_Et=div_Et,
        curl_res=curl_res,
        trace_res=trace_res,
        l2={
            "div_v": div_v2,
            "det_res": det_res2,
            "div_Et": div_Et2,
            "curl_res": curl_res2,
            "trace_res": trace_res2,
        },
    )


# ---------------------------------------------------------------------------
# velocity synthesis


def taylor_green(grid: Grid, amplitude: float = 1.0) -> Field:
    """Closed-form cellular vortex; divergence-free by construction."""
    v = Field.zeros(grid, 1)
    if grid.dim == 2:
        v.data[0] = amplitude * np.sin(grid.x[0]) * np.cos(grid.x[1])
        v.data[1] = -amplitude * np.cos(grid.x[0]) * np.sin(grid.x[1])
    else:
        v.data[0] = amplitude * np.sin(grid.x[0]) * np.cos(grid.x[1]) * np.cos(grid.x[2])
        v.data[1] = -amplitude * np.cos(grid.x[0]) * np.sin(grid.x[1]) * np.cos(grid.x[2])
        v.data[2] = 0.0
    return v


def gen_divfree_velocity(
    grid: Grid,
    seed: int,
    amplitude: float,
    peak_k: int = 2,
    decay: float = 1.0,
) -> Field:
    """Random-phase band-limited divergence-free velocity, deterministic in seed.

    The spectrum is shaped by a Gaussian bump exp(-((|k|-peak_k)/decay)^2),
    capped at the two-thirds band; the field is projected and rescaled so its
    L2 norm equals ``amplitude``.
    """
    if amplitude < 0:
        raise ContractError("amplitude must be non-negative")
    v = Field.zeros(grid, 1)
    if amplitude == 0.0:
        return v
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((grid.dim,) + grid.shape)
    nh = fftn(noise, grid.spatial_axes)
    kmag = np.sqrt(sum(k * k for k in grid.k))
    envelope = np.exp(-(((kmag - peak_k) / max(decay, 1e-12)) ** 2))
    envelope *= grid.dealias_mask
    envelope[(0,) * grid.dim] = 0.0  # zero-mean velocity
    vh = Field(grid, 1, nh * envelope, "spectral")
    v = to_physical(leray_project(vh))
    norm = l2_norm(v)
    if norm == 0.0:
        return Field.zeros(grid, 1)
    v.data *= amplitude / norm
    return v


def velocity_preset(grid: Grid, name: str, amplitude: float = 1.0) -> Field:
    if name in ("taylor-green", "taylor-green-2d", "taylor-green-3d"):
        return taylor_green(grid, amplitude)
    raise ContractError(f"unknown velocity preset {name!r}")


# ---------------------------------------------------------------------------
# manufacture


@dataclass(frozen=True)
class AdmissibleIC:
    """Initial data (v0, E0) with its residual record at manufacture time."""

    v0: Field
    E0: Field
    residuals: ConstraintResiduals

    @property
    def grid(self) -> Grid:
        return self.v0.grid


def strain_tendency(v: Field, E: Field, use_dealias: bool = True) -> Field:
    """Transport tendency of the strain: -v.grad E + (grad v) E + grad v."""
    g = v.grid
    d = g.dim
    grad_v = _grad_components(v)  # [i, a]
    grad_E = np.empty((d, d, d) + g.shape)
    Eh = fftn(E.data, g.spatial_axes)
    for i in range(d):
        for j in range(d):
            for l in range(d):
                grad_E[i, j, l] = ifftn(1j * g.kd[l] * Eh[i * d + j], tuple(range(d))).real
    out = np.empty((d * d,) + g.shape)
    for i in range(d):
        for j in range(d):
            nl = np.zeros(g.shape)
            for l in range(d):
                nl -= v.data[l] * grad_E[i, j, l]
            for k in range(d):
                nl += grad_v[i, k] * E.data[k * d + j]
            if use_dealias:
                nl = _mask_phys(g, nl)
            out[i * d + j] = nl + grad_v[i, j]
    return Field(g, 2, out, PHYSICAL)


def manufacture_strain(
    v_gen: VelocityGen,
    s_end: float,
    steps: int,
    v0: Field | None = None,
    tol: float = 1e-6,
    use_dealias: bool = True,
) -> AdmissibleIC:
    """Build admissible (v0, E0) by transporting the strain from zero.

    ``v_gen`` is either a fixed velocity field or a callable s -> field over
    pseudo-time s in [0, s_end]; it must be divergence-free to 1e-11. The
    strain transport is integrated with classic RK4. By default v0 is the
    prescription evaluated at s_end. Raises ManufactureError (with the
    residual record attached) if any defect exceeds ``tol``.
    """
    if s_end < 0:
        raise ContractError("s_end must be non-negative")
    if steps < 1 and s_end > 0:
        raise ContractError("steps must be positive for a nonzero transport time")

    steady = isinstance(v_gen, Field)
    v_of = (lambda s: v_gen) if steady else v_gen
    v_start = v_of(0.0)
    g = v_start.grid
    if linf_norm(divergence(v_start)) > 1e-11:
        raise ContractError("prescribed velocity is not divergence-free to 1e-11")

    E = Field.zeros(g, 2)
    if s_end > 0:
        ds = s_end / steps
        s = 0.0
        v_s = v_start
        for _ in range(steps):
            v_half = v_s if steady else v_of(s + 0.5 * ds)
            v_full = v_s if steady else v_of(s + ds)
            k1 = strain_tendency(v_s, E, use_dealias)
            k2 = strain_tendency(v_half, E + 0.5 * ds * k1, use_dealias)
            k3 = strain_tendency(v_half, E + 0.5 * ds * k2, use_dealias)
            k4 = strain_tendency(v_full, E + ds * k3, use_dealias)
            E = E + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            s += ds
            v_s = v_full

    v_final = v0 if v0 is not None else v_of(s_end)
    res = constraint_residuals(v_final, E, use_dealias)
    if res.max() > tol:
        raise ManufactureError(
            f"manufacture residual {res.max():.3e} exceeds tolerance {tol:.1e}",
            residuals=res,
        )
    return AdmissibleIC(v0=v_final, E0=E, residuals=res)
