"""Scalar functionals tracked along trajectories.

Covers the energy balance (kinetic + elastic energy against viscous
dissipation), Sobolev norms, the auxiliary damping variable w = lap(v) +
(1/mu) div(E) through which the strain inherits dissipation, the Hodge
splitting of the strain Laplacian, smallness-threshold monitors, and the
running integral of the H2 velocity-gradient norm whose divergence marks
finite-time breakdown.

Generic constants in the smallness thresholds are not derivable from first
principles here, so they are runtime configuration (ThresholdConfig) and the
monitors report measured ratios rather than asserting conclusions.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import ConstraintResiduals, constraint_residuals
from .errors import ContractError
from .spectral import Field, divergence, laplacian, l2_norm, l2_norm_sq, sobolev_norm, to_spectral


@dataclass(frozen=True)
class ThresholdConfig:
    """Configurable constants for the smallness monitors.

    ``M_big`` defaults to 8*C_big**3 + 1 and must exceed 8*C_big**3.
    """

    C_big: float = 1.0
    M_big: float | None = None

    def __post_init__(self):
        if self.C_big <= 0:
            raise ContractError("C_big must be positive")
        if self.M_big is None:
            object.__setattr__(self, "M_big", 8.0 * self.C_big**3 + 1.0)
        if self.M_big <= 8.0 * self.C_big**3:
            raise ContractError("M_big must exceed 8*C_big^3")

    def run_bound(self, mu: float) -> float:
        """Bound the squared H2 size must stay under along a global run."""
        return mu**2 / (2.0 * self.C_big * (mu**3 + 1.0))

    def data_gate(self, mu: float) -> float:
        """Smallness gate on the squared H2 size of the initial data."""
        return mu**8 / (self.M_big * (1.0 + mu**12))


@dataclass
class DiagnosticsRecord:
    """One row of the diagnostics series; fields are the CSV columns in order."""

    t: float
    kinetic: float
    elastic: float
    dissipation: float
    energy_residual: float
    h2_v: float
    h2_E: float
    w_norm: float
    grad_w_norm: float
    hodge_div: float
    hodge_curl: float
    blowup_integral: float
    threshold_ok: bool
    constraint: ConstraintResiduals
    #: last sampled ||grad v||_{H2}^2, kept for trapezoid updates (not a CSV column)
    grad_v_h2_sq: float = 0.0


CSV_COLUMNS = (
    "t",
    "kinetic",
    "elastic",
    "dissipation",
    "energy_residual",
    "h2_v",
    "h2_E",
    "w_norm",
    "grad_w_norm",
    "hodge_div",
    "hodge_curl",
    "blowup_integral",
    "threshold_ok",
    "div_v",
    "det_res",
    "div_Et",
    "curl_res",
    "trace_res",
)


# ---------------------------------------------------------------------------
# pointwise functionals of a state (duck-typed: needs .v, .E, .mu)


def energy_pair(state) -> tuple:
    """(total energy, instantaneous dissipation) = (||v||^2/2 + ||E||^2/2, mu ||grad v||^2)."""
    total = 0.5 * (l2_norm_sq(state.v) + l2_norm_sq(state.E))
    g = state.v.grid
    vh = to_spectral(state.v).data if state.v.repr == "physical" else state.v.data
    grad_sq = g.parseval * float(np.sum(g.k2d * (vh.real**2 + vh.imag**2)))
    return total, state.mu * grad_sq


def aux_w(state) -> Field:
    """Auxiliary damping variable lap(v) + (1/mu) div(E)."""
    if state.mu <= 0:
        raise ContractError("viscosity must be positive")
    return laplacian(state.v) + (1.0 / state.mu) * divergence(state.E)


def hodge_split(E: Field) -> tuple:
    """Row-wise split of lap(E) into grad(div E) and curl(curl E) parts.

    Returns (div_part, curl_part) with div_part - curl_part = lap(E); the two
    parts are L2-orthogonal mode by mode.
    """
    g = E.grid
    d = g.dim
    Eh = to_spectral(E).data if E.repr == "physical" else E.data
    div_rows = np.zeros((d,) + g.shape, dtype=np.complex128)
    for i in range(d):
        for a in range(d):
            div_rows[i] += 1j * g.kd[a] * Eh[i * d + a]
    div_part = np.empty_like(Eh)
    curl_part = np.empty_like(Eh)
    for i in range(d):
        for j in range(d):
            div_part[i * d + j] = 1j * g.kd[j] * div_rows[i]
            curl_part[i * d + j] = div_part[i * d + j] + g.k2d * Eh[i * d + j]
    fd = Field(g, 2, div_part, "spectral")
    fc = Field(g, 2, curl_part, "spectral")
    if E.repr == "physical":
        from .spectral import to_physical

        return to_physical(fd), to_physical(fc)
    return fd, fc


@dataclass(frozen=True)
class StrainBoundReport:
    ratio: float | None  # None when degenerate (0/0 at equilibrium)
    degenerate: bool
    applicable: bool  # smallness gate ||E||_{H2} <= 1/sqrt(2C) holds
    passed: bool
    e_h2: float
    gate: float


def strain_bound_check(state, threshold: ThresholdConfig) -> StrainBoundReport:
    """Measure ||lap E||^2 against C mu^2 (||grad w||^2 + ||grad lap v||^2).

    The bound is only claimed under the smallness gate on ||E||_{H2}; outside
    the gate the check reports failure. The ratio is always reported so the
    constant can be calibrated empirically.
    """
    g = state.v.grid
    C = threshold.C_big
    mu = state.mu
    Eh = to_spectral(state.E).data if state.E.repr == "physical" else state.E.data
    vh = to_spectral(state.v).data if state.v.repr == "physical" else state.v.data

    lap_E_sq = g.parseval * float(np.sum(g.k2d**2 * (Eh.real**2 + Eh.imag**2)))
    w = aux_w(state)
    wh = to_spectral(w).data if w.repr == "physical" else w.data
    grad_w_sq = g.parseval * float(np.sum(g.k2d * (wh.real**2 + wh.imag**2)))
    grad_lap_v_sq = g.parseval * float(np.sum(g.k2d**3 * (vh.real**2 + vh.imag**2)))

    e_h2 = sobolev_norm(state.E, 2)
    gate = 1.0 / np.sqrt(2.0 * C)
    denom = mu**2 * (grad_w_sq + grad_lap_v_sq)
    degenerate = lap_E_sq == 0.0 and denom == 0.0
    applicable = e_h2 <= gate
    if degenerate:
        return StrainBoundReport(None, True, applicable, True, e_h2, gate)
    ratio = float("inf") if denom == 0.0 else lap_E_sq / denom
    passed = applicable and ratio <= C
    return StrainBoundReport(ratio, False, applicable, passed, e_h2, gate)


@dataclass(frozen=True)
class SmallnessReport:
    ok: bool
    h2_sq: float
    run_bound: float
    data_gate: float

    def __bool__(self):
        return self.ok


def smallness_monitor(state, threshold: ThresholdConfig) -> SmallnessReport:
    """Flag whether ||v||_{H2}^2 + ||E||_{H2}^2 is under the global-run bound."""
    h2_sq = sobolev_norm(state.v, 2) ** 2 + sobolev_norm(state.E, 2) ** 2
    rb = threshold.run_bound(state.mu)
    return SmallnessReport(h2_sq <= rb, h2_sq, rb, threshold.data_gate(state.mu))


def grad_v_h2_sq(v: Field) -> float:
    """||grad v||_{H2}^2 evaluated spectrally."""
    g = v.grid
    vh = to_spectral(v).data if v.repr == "physical" else v.data
    w = (1.0 + g.k2d) ** 2 * g.k2d
    return g.parseval * float(np.sum(w * (vh.real**2 + vh.imag**2)))


def blowup_integral_update(record: DiagnosticsRecord, dt: float, grad_sq: float) -> DiagnosticsRecord:
    """Advance the running trapezoid of ||grad v||_{H2}^2 by one interval."""
    if dt <= 0:
        raise ContractError("dt must be positive")
    new = dataclasses.replace(
        record,
        blowup_integral=record.blowup_integral + 0.5 * dt * (record.grad_v_h2_sq + grad_sq),
        grad_v_h2_sq=grad_sq,
    )
    return new


def compute_record(
    state,
    threshold: ThresholdConfig,
    energy_residual: float = 0.0,
    blowup_integral: float = 0.0,
    residuals: ConstraintResiduals | None = None,
    use_dealias: bool = True,
) -> DiagnosticsRecord:
    """Assemble the full diagnostics row for a state."""
    g = state.v.grid
    total, dissipation = energy_pair(state)
    kinetic = 0.5 * l2_norm_sq(state.v)
    elastic = total - kinetic
    w = aux_w(state)
    wh = to_spectral(w).data if w.repr == "physical" else w.data
    grad_w_sq = g.parseval * float(np.sum(g.k2d * (wh.real**2 + wh.imag**2)))
    fd, fc = hodge_split(state.E)
    small = smallness_monitor(state, threshold)
    if residuals is None:
        residuals = constraint_residuals(state.v, state.E, use_dealias)
    return DiagnosticsRecord(
        t=state.t,
        kinetic=kinetic,
        elastic=elastic,
        dissipation=dissipation,
        energy_residual=energy_residual,
        h2_v=sobolev_norm(state.v, 2),
        h2_E=sobolev_norm(state.E, 2),
        w_norm=l2_norm(w),
        grad_w_norm=float(np.sqrt(grad_w_sq)),
        hodge_div=l2_norm(fd),
        hodge_curl=l2_norm(fc),
        blowup_integral=blowup_integral,
        threshold_ok=small.ok,
        constraint=residuals,
        grad_v_h2_sq=grad_v_h2_sq(state.v),
    )


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    return f"{x:.17g}"


def record_row(r: DiagnosticsRecord) -> str:
    vals = [
        r.t,
        r.kinetic,
        r.elastic,
        r.dissipation,
        r.energy_residual,
        r.h2_v,
        r.h2_E,
        r.w_norm,
        r.grad_w_norm,
        r.hodge_div,
        r.hodge_curl,
        r.blowup_integral,
        r.threshold_ok,
        r.constraint.div_v,
        r.constraint.det_res,
        r.constraint.div_Et,
        r.constraint.curl_res,
        r.constraint.trace_res,
    ]
    return ",".join(_fmt(v) for v in vals)


def write_csv(path, records) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(record_row(r) for r in records)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> dict:
    """Read a diagnostics CSV back into {column: list}."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    cols = {h: [] for h in header}
    for line in text[1:]:
        for h, v in zip(header, line.split(",")):
            if v in ("true", "false"):
                cols[h].append(v == "true")
            else:
                cols[h].append(float(v))
    return cols


def audit_energy_csv(path) -> dict:
    """Offline energy audit from an emitted CSV alone.

    Recomputes the cumulative balance total(t) - total(0) + trapezoid of the
    dissipation column and reports both that drift and the sum of the
    per-interval energy_residual column.
    """
    cols = read_csv(path)
    t = cols["t"]
    total = [k + e for k, e in zip(cols["kinetic"], cols["elastic"])]
    diss = cols["dissipation"]
    integral = 0.0
    worst = 0.0
    for i in range(1, len(t)):
        integral += 0.5 * (t[i] - t[i - 1]) * (diss[i] + diss[i - 1])
        worst = max(worst, abs(total[i] - total[0] + integral))
    return {
        "initial_energy": total[0],
        "final_drift": total[-1] - total[0] + integral,
        "max_drift": worst,
        "residual_column_sum": sum(cols["energy_residual"]),
    }
