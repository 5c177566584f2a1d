"""Acceptance suite: one test per shipping criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Everything here is desk scale (2-D n = 64, 3-D n = 16) and finishes
in a few minutes total; the stiffest item (the lambda sweep) asserts its own
wall-clock budget.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from vesim import Field, Grid, divergence, gradient, leray_project, sobolev_norm, to_physical, to_spectral
from vesim.cli import main as cli_main
from vesim.constraints import (
    AdmissibleIC,
    constraint_residuals,
    gen_divfree_velocity,
    manufacture_strain,
    taylor_green,
)
from vesim.diagnostics import ThresholdConfig, hodge_split
from vesim.dynamics import State, StepperConfig, run, step
from vesim.mach import limit_study
from vesim.snapshots import read_field, write_field
from vesim.spectral import l2_norm


def report(num, label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] criterion {num:2d} ({label}): {status}  {detail}")
    return ok


def fd4(a, axis, h):
    return (
        -np.roll(a, -2, axis) + 8 * np.roll(a, -1, axis)
        - 8 * np.roll(a, 1, axis) + np.roll(a, 2, axis)
    ) / (12.0 * h)


def small_ic(grid, amplitude, seed=42, steps=50):
    v = gen_divfree_velocity(grid, seed=seed, amplitude=amplitude, peak_k=2, decay=1.0)
    return manufacture_strain(v, 0.1, steps)


def quadrature_phase_ic(grid, r):
    """Two |k| = 1 transverse oscillators a quarter period apart.

    Both carry the same damped frequency, so the oscillating parts of the
    dissipation cancel and the decay of the breakdown functional is clean.
    Exactly admissible by construction.
    """
    v0 = Field.zeros(grid, 1)
    v0.data[1] = 0.5 * r * np.cos(grid.x[0]) + 0 * grid.x[1]
    v0.data[0] = (np.sqrt(3) / 2) * r * np.cos(grid.x[1]) + 0 * grid.x[0]
    E0 = Field.zeros(grid, 2)
    E0.data[1 * grid.dim + 0] = r * np.sin(grid.x[0]) + 0 * grid.x[1]
    return AdmissibleIC(v0, E0, constraint_residuals(v0, E0))


def test_criterion_1_spectral_substrate():
    # round trips, all ranks, both dims
    worst_rt = 0.0
    for dim, n in ((2, 64), (3, 16)):
        g = Grid(dim, n)
        rng = np.random.default_rng(dim)
        for rank in (0, 1, 2):
            f = Field(g, rank, rng.standard_normal((g.ncomp(rank),) + g.shape))
            back = to_physical(to_spectral(f))
            worst_rt = max(worst_rt, np.max(np.abs(back.data - f.data)) / np.max(np.abs(f.data)))
    ok_rt = worst_rt <= 1e-12

    # spectral derivatives against the 4th-order finite-difference oracle
    errs, hs = [], []
    for n in (32, 64, 128):
        g = Grid(2, n)
        f = Field(g, 0, np.exp(np.sin(g.x[0]) + np.cos(g.x[1]))[np.newaxis])
        df = gradient(f)
        h = g.dx
        err = max(
            float(np.max(np.abs(df.data[a] - fd4(f.data[0], a, h)))) for a in range(2)
        )
        errs.append(err)
        hs.append(h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    ok_order = slope >= 3.8

    # projection: idempotence and gradient annihilation
    g = Grid(2, 64)
    rng = np.random.default_rng(0)
    v = Field(g, 1, rng.standard_normal((2,) + g.shape))
    p1 = leray_project(v)
    p2 = leray_project(p1)
    scale = np.max(np.abs(p1.data))
    idem = np.max(np.abs(p2.data - p1.data)) / scale
    phi = Field(g, 0, rng.standard_normal((1,) + g.shape))
    annih = np.max(np.abs(leray_project(gradient(phi)).data)) / np.max(np.abs(gradient(phi).data))
    ok_leray = idem <= 1e-12 and annih <= 1e-12

    ok = report(
        1, "spectral substrate", ok_rt and ok_order and ok_leray,
        f"roundtrip={worst_rt:.2e} fd4_order={slope:.2f} idem={idem:.2e} annih={annih:.2e}",
    )
    assert ok


def test_criterion_2_constraint_manufacture():
    g = Grid(2, 64)
    ic = manufacture_strain(taylor_green(g), 0.1, 100)
    res = ic.residuals
    ok_resid = all(
        val <= 1e-6 for val in (res.div_v, res.det_res, res.div_Et, res.curl_res)
    )

    # pseudo-time order: halving the step improves the time-attributable part
    fine = manufacture_strain(taylor_green(g), 0.1, 256, tol=1.0).residuals.det_res
    coarse = manufacture_strain(taylor_green(g), 0.1, 2, tol=1.0).residuals.det_res
    halved = manufacture_strain(taylor_green(g), 0.1, 4, tol=1.0).residuals.det_res
    ratio = (coarse - fine) / max(halved - fine, 1e-300)
    ok_order = ratio >= 8.0

    ok = report(
        2, "constraint manufacture", ok_resid and ok_order,
        f"max_resid={res.max():.2e} halving_ratio={ratio:.1f}",
    )
    assert ok


def test_criterion_3_energy_law():
    g = Grid(2, 64)
    ic = small_ic(g, amplitude=0.0017)
    h2sq = sobolev_norm(ic.v0, 2) ** 2 + sobolev_norm(ic.E0, 2) ** 2
    s = run(ic, mu=1.0, t_end=5.0, cfg=StepperConfig(dt=1e-3, scheme="erk4"), diag_every=500)
    e0 = s.records[0].kinetic + s.records[0].elastic
    drift = abs(sum(r.energy_residual for r in s.records))
    ok = report(
        3, "energy law", s.status == "completed" and drift <= 1e-6 * e0,
        f"h2sq={h2sq:.1e} rel_drift={drift / e0:.2e}",
    )
    assert ok


def test_criterion_4_taylor_green_oracle():
    g = Grid(2, 64)
    tg = taylor_green(g)
    ic = AdmissibleIC(tg, Field.zeros(g, 2), constraint_residuals(tg, Field.zeros(g, 2)))
    mu = 0.1
    s = run(ic, mu=mu, t_end=1.0, cfg=StepperConfig(dt=1e-3, fluid_only=True), diag_every=0)
    expect = np.exp(-2 * mu * 1.0) * tg.data
    rel = np.max(np.abs(s.final_state.v.data - expect)) / np.max(np.abs(expect))
    ok = report(4, "exact-solution oracle", rel <= 1e-6, f"rel_err={rel:.2e}")
    assert ok


def test_criterion_5_linear_dispersion():
    g = Grid(2, 32)
    worst = 0.0
    combos = [(mu, k) for mu in (0.1, 1.0, 5.0) for k in (1, 2)]
    for mu, kmag in combos:
        a0 = np.array([0.05, 0.02])
        A = np.array([[-mu * kmag**2, kmag], [-kmag, 0.0]])
        v = Field.zeros(g, 1)
        E = Field.zeros(g, 2)
        cosb = np.cos(kmag * g.x[0]) + 0 * g.x[1]
        sinb = np.sin(kmag * g.x[0]) + 0 * g.x[1]
        v.data[1] = a0[0] * cosb
        E.data[1 * 2 + 0] = a0[1] * sinb
        st = State(0.0, v, E, mu)
        cfg = StepperConfig(dt=1e-3, scheme="erk4")
        scale = np.max(np.abs(a0))
        for quarter in range(4):
            for _ in range(250):
                st = step(st, cfg)
            at = expm(A * st.t) @ a0
            alpha = np.sum(st.v.data[1] * cosb) / np.sum(cosb * cosb)
            gamma = np.sum(st.E.comp(1, 0) * sinb) / np.sum(sinb * sinb)
            worst = max(worst, abs(alpha - at[0]) / scale, abs(gamma - at[1]) / scale)
    # eigenvalues [-mu k^2 +- sqrt(mu^2 k^4 - 4 k^2)]/2 cover both regimes:
    # mu |k| < 2 underdamped, mu |k| > 2 overdamped
    ok = report(5, "linear dispersion oracle", worst <= 1e-6, f"worst_err={worst:.2e}")
    assert ok


def test_criterion_6_lemma_shadows(tmp_path, capsys):
    g = Grid(2, 64)
    ic = manufacture_strain(taylor_green(g, 0.25), 0.2, 8)
    init = ic.residuals
    s = run(ic, mu=1.0, t_end=5.0, cfg=StepperConfig(dt=2e-3, scheme="erk4"), diag_every=100)
    worst = {
        name: max(getattr(r.constraint, name) for r in s.records) / getattr(init, name)
        for name in ("det_res", "div_Et", "curl_res")
    }
    ok_traj = s.status == "completed" and all(v <= 10.0 for v in worst.values())

    # mutation: corrupting the strain must flag det/trace failures in verify
    out = tmp_path / "ic"
    from vesim.cli import save_ic

    save_ic(out, ic, {"tool": "acceptance"})
    E0 = read_field(out / "E0.vesf")
    E0.data[0] = E0.data[0] * 1.1 + 0.05
    write_field(out / "E0.vesf", E0)
    rc = cli_main(["verify", "--ic", str(out)])
    import json

    rep = json.loads(capsys.readouterr().out)
    ok_mut = rc == 0 and not rep["all_pass"] and not rep["checks"]["det_res"]["pass"]

    ok = report(
        6, "lemma shadows", ok_traj and ok_mut,
        "ratios " + " ".join(f"{k}={v:.2f}" for k, v in worst.items()) + f" mutation_flagged={not rep['all_pass']}",
    )
    assert ok


def test_criterion_7_quadratic_curl_smallness():
    g = Grid(2, 64)
    ratios = []
    for amp in (0.4, 0.2):
        ic = manufacture_strain(taylor_green(g, amp), 0.2, 50)
        fd, fc = hodge_split(ic.E0)
        ratios.append(l2_norm(fc) / l2_norm(fd))
    factor = ratios[1] / ratios[0]
    ok = report(
        7, "quadratic curl smallness", 0.4 <= factor <= 0.6,
        f"ratio(amp)={ratios[0]:.4f} ratio(amp/2)={ratios[1]:.4f} factor={factor:.3f}",
    )
    assert ok


def test_criterion_8_global_existence_shadow():
    g = Grid(2, 64)
    ic = quadrature_phase_ic(g, r=0.015)
    th = ThresholdConfig(C_big=1.0, M_big=9.0)
    h2sq0 = sobolev_norm(ic.v0, 2) ** 2 + sobolev_norm(ic.E0, 2) ** 2
    gate_ok = h2sq0 < th.data_gate(1.0)
    s = run(ic, mu=1.0, t_end=20.0, cfg=StepperConfig(dt=0.02), diag_every=50, threshold=th)
    recs = {round(r.t): r for r in s.records}
    h2 = [recs[m].h2_v**2 + recs[m].h2_E**2 for m in range(21)]
    ok_bound = max(h2) <= 2.0 * h2[0]
    bi = [recs[m].blowup_integral for m in range(21)]
    inc = [bi[m + 1] - bi[m] for m in range(20)]
    ok_dec = all(inc[m + 1] < inc[m] for m in range(2, 19))
    ok = report(
        8, "global-existence shadow",
        gate_ok and s.status == "completed" and ok_bound and ok_dec,
        f"gate {h2sq0:.3f}<{th.data_gate(1.0):.3f} h2_max/init={max(h2) / h2[0]:.3f} "
        f"increments_decreasing={ok_dec}",
    )
    assert ok


def test_criterion_9_incompressible_limit():
    start = time.perf_counter()
    g = Grid(2, 64)
    ic = small_ic(g, amplitude=0.05)
    res = limit_study(
        ic, [5.0, 10.0, 20.0, 40.0], T_win=1.0, mu=1.0, delta0=0.05, seed=7, n_samples=20
    )
    elapsed = time.perf_counter() - start
    ok_mono = all(a > b for a, b in zip(res.proj_errors, res.proj_errors[1:]))
    rate = res.rates["projected"]
    ok_rate = rate is not None and -1.3 <= rate <= -0.7
    es_max = [max(series) for series in res.es_energies]
    ok_es = max(es_max) / min(es_max) < 2.0
    ok_time = elapsed <= 15 * 60
    ok = report(
        9, "incompressible limit",
        ok_mono and ok_rate and ok_es and ok_time and not res.failures,
        f"errors={['%.2e' % e for e in res.proj_errors]} rate={rate:.3f} "
        f"es_spread={max(es_max) / min(es_max):.3f} wall={elapsed:.0f}s",
    )
    assert ok


def test_criterion_10_determinism(tmp_path, capsys):
    args = [
        "run", "--dim", "2", "--n", "64", "--ic", "small-data", "--seed", "42",
        "--amplitude", "0.05", "--mu", "1.0", "--t-end", "0.2", "--dt", "2e-3",
        "--scheme", "erk4", "--diag-every", "10",
    ]
    rc1 = cli_main(args + ["--out", str(tmp_path / "a")])
    rc2 = cli_main(args + ["--out", str(tmp_path / "b")])
    same = (tmp_path / "a" / "diagnostics.csv").read_bytes() == (
        tmp_path / "b" / "diagnostics.csv"
    ).read_bytes()
    ok = report(10, "determinism", rc1 == 0 and rc2 == 0 and same, f"byte_identical={same}")
    assert ok
