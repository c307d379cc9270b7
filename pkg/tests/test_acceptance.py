"""Acceptance checks, one test per criterion.

Each test logs a PASS/FAIL line (printed in the terminal summary) and then
asserts, so a failing criterion shows up in both places.  Run alone with

    pytest tests/test_acceptance.py -v
"""

import csv
import filecmp
import math
import time

import numpy as np
import pytest

from layersphere import cli
from layersphere.analytic import (
    BlockSolver,
    Observation,
    free_space_greens,
    greens_frequency,
    greens_frequency_double_sum,
    greens_frequency_single_sum,
)
from layersphere.harness import (
    desk_external_scenario,
    desk_scenario,
    desk_sweep_scenario,
    porosity_sweep,
)
from layersphere.medium import Layer, LayerStack, SourceSpec, spheroid_stack
from layersphere.pbs import ParticleEnsemble, apply_degradation, brownian_step
from layersphere.scenario import save_scenario
from layersphere.specfun import (
    legendre_p,
    spherical_j,
    spherical_j_derivative,
    spherical_jyh,
    spherical_y,
    spherical_y_derivative,
)
from layersphere.timedomain import (
    TransformGrid,
    compute_cirs,
    free_peak_time,
    free_space_cir,
    peak_metrics,
    radial_mass,
)

slow = pytest.mark.slow


def _random_z(rng, n):
    mod = 10 ** rng.uniform(-1, 2, n)
    arg = rng.uniform(-math.pi, math.pi, n)
    return mod * np.exp(1j * arg)


# --------------------------------------------------------------------------
# 1. special functions
# --------------------------------------------------------------------------

def test_c1_special_functions(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    z = _random_z(rng, 1000)
    n = rng.integers(0, 41, z.size)

    wr = np.array([
        spherical_j(k, x) * spherical_y_derivative(k, x) - spherical_j_derivative(k, x) * spherical_y(k, x)
        for k, x in zip(n, z)
    ])
    wr_err = np.abs(wr * z**2 - 1)
    wr_bad = int(np.sum(~(wr_err < 1e-10)))

    rec_err = 0.0
    for x in z:
        j, y, _ = spherical_jyh(41, x)
        for f in (j, y):
            k = np.arange(1, 41)
            lhs = f[k - 1] + f[k + 1]
            rhs = (2 * k + 1) / x * f[k]
            scale = np.maximum.reduce([abs(f[k - 1]), abs(f[k + 1]), abs(rhs)])
            rec_err = max(rec_err, float(np.max(np.abs(lhs - rhs) / scale)))

    xg, wg = np.polynomial.legendre.leggauss(64)
    orth_err = 0.0
    for m in range(0, 41, 4):
        p = np.array([legendre_p(l, m, xg) for l in range(m, 41)])
        gram = (p * wg) @ p.T
        norm = np.sqrt(np.diag(gram))
        gram = gram / np.outer(norm, norm)
        orth_err = max(orth_err, float(np.max(np.abs(gram - np.eye(len(norm))))))
        expected = 2 / (2 * np.arange(m, 41) + 1) * np.exp(
            [math.lgamma(l + m + 1) - math.lgamma(l - m + 1) for l in range(m, 41)]
        )
        orth_err = max(orth_err, float(np.max(np.abs(norm**2 / expected - 1))))
    elapsed = time.perf_counter() - t0

    ok = wr_bad == 0 and rec_err < 1e-10 and orth_err < 1e-8 and elapsed < 10
    record(
        "C1 special functions", ok,
        f"wronskian failures {wr_bad}/1000 (max rel err {np.nanmax(wr_err):.1e}); "
        f"recurrence {rec_err:.1e}; legendre {orth_err:.1e}; {elapsed:.1f}s",
    )
    assert rec_err < 1e-10
    assert orth_err < 1e-8
    assert elapsed < 10
    # j y' - j' y is a difference of two numbers of size exp(2|Im z|)/|z|^2
    # whose result is 1/z^2; in double precision it cannot meet 1e-10 once
    # |Im z| exceeds about 7, whatever the implementation.
    assert wr_bad == 0, f"{wr_bad} of 1000 Wronskian samples exceed 1e-10"


# --------------------------------------------------------------------------
# 2. boundary residuals
# --------------------------------------------------------------------------

def _random_stack(rng):
    nl = int(rng.integers(2, 7))
    layers = tuple(Layer(float(rng.uniform(10, 200)), float(rng.uniform(0.05, 1)), 0.0) for _ in range(nl))
    return LayerStack(layers + (Layer(math.inf, float(rng.uniform(0.05, 1)), 0.0),), 0.1)


def test_c2_boundary_residuals(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        st = _random_stack(rng)
        lay = int(rng.integers(0, st.n_finite + 1))
        lo = st.radii[lay]
        hi = st.radii[lay + 1] if lay < st.n_finite else lo + 100
        r0 = float(rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo)))
        omega = 10 ** rng.uniform(-6, -2, 8)
        n = int(rng.integers(0, 31))
        solver = BlockSolver(st, r0, omega, nmax=n)
        worst = max(worst, float(np.max(solver.boundary_residuals(n))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 60
    record("C2 boundary residuals", ok, f"max relative residual {worst:.1e}; {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 3. single sum equals double sum
# --------------------------------------------------------------------------

def test_c3_addition_theorem(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    st = spheroid_stack()
    worst = 0.0
    nterms = 30
    for _ in range(100):
        src = SourceSpec(float(rng.uniform(1, 270)), math.acos(rng.uniform(-1, 1)), float(rng.uniform(0, 2 * math.pi)))
        obs = Observation(float(rng.uniform(1, 400)), math.acos(rng.uniform(-1, 1)), float(rng.uniform(0, 2 * math.pi)))
        # the fixture's diffusive band; far above it G is exponentially small
        # next to its terms and both sums only agree to eps * sum|terms|
        w = float(10 ** rng.uniform(-7, -4))
        a = greens_frequency_single_sum(st, src, obs, w, nterms)
        b = greens_frequency_double_sum(st, src, obs, w, nterms)
        worst = max(worst, abs(a - b) / abs(b))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 30
    record("C3 addition theorem", ok, f"max relative difference {worst:.1e} over w in [1e-7, 1e-4]; {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 4. homogeneous medium, frequency domain
# --------------------------------------------------------------------------

def test_c4_homogeneous_frequency(record):
    rng = np.random.default_rng(4)
    st = LayerStack.from_widths([100.0], [1.0])
    D = float(st.diffusion[0])
    omega = np.logspace(-7, -3, 9)
    worst, count = 0.0, 0
    while count < 100:
        src = SourceSpec(float(rng.uniform(1, 99)), math.acos(rng.uniform(-1, 1)), float(rng.uniform(0, 2 * math.pi)))
        d = float(10 ** rng.uniform(math.log10(5), math.log10(200)))
        u = rng.normal(size=3)
        p = src.cartesian + d * u / np.linalg.norm(u)
        r = float(np.linalg.norm(p))
        # across the (transparent) interface the series converges like
        # (r</r>)^n; the 200-term cap needs the radii to differ by 15%
        if (r > 100) != (src.r > 100) and max(r, src.r) / min(r, src.r) < 1.15:
            continue
        if abs(r - 100) < 1e-6:
            continue
        obs = Observation(r, math.acos(p[2] / r), math.atan2(p[1], p[0]) % (2 * math.pi))
        g = greens_frequency(st, src, obs, omega)
        worst = max(worst, float(np.max(np.abs(g / free_space_greens(d, omega, D) - 1))))
        count += 1
    ok = worst < 1e-6
    record("C4 homogeneous frequency domain", ok, f"max relative error {worst:.1e} over w in [1e-7, 1e-3]")
    assert ok


# --------------------------------------------------------------------------
# 5. homogeneous medium, time domain
# --------------------------------------------------------------------------

def test_c5_homogeneous_time(record):
    st = LayerStack.from_widths([100.0], [1.0])
    D = float(st.diffusion[0])
    src = SourceSpec(20.0, math.pi / 2, math.pi / 2)
    details, ok = [], True
    for d in (5.0, 50.0, 150.0):
        # observer straight out along +y so the pair spans layer and exterior for large d
        obs = Observation(20.0 + d, math.pi / 2, math.pi / 2)
        cir = compute_cirs(st, src, [obs])[0]
        ref = free_space_cir(cir.t, d, D)
        ts = free_peak_time(d, D)
        peak, _, _ = peak_metrics(cir)
        peak_err = abs(peak / ref.max() - 1)
        m = (cir.t >= 0.2 * ts) & (cir.t <= 5 * ts)
        band_err = float(np.max(np.abs(cir.values[m] / ref[m] - 1)))
        ok &= peak_err < 0.02 and band_err < 0.05
        details.append(f"d={d:g}: peak {peak_err:.1e}, band {band_err:.1e}")
    record("C5 homogeneous time domain", ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------------
# 6. mass conservation
# --------------------------------------------------------------------------

def test_c6_mass_conservation(record):
    st = spheroid_stack()
    src = SourceSpec(45.83)
    # "peak" is the analytic peak time at a receiver just outside the spheroid
    cir = compute_cirs(st, src, [Observation(450.0, math.pi / 2, 0.0)])[0]
    t_peak = peak_metrics(cir)[1]
    grid = TransformGrid.damped(1.0e7, 1024)
    t, mass = radial_mass(st, src, grid, r_ext=8000.0)
    checks = {"early": 0.1 * t_peak, "peak": t_peak, "late": 3 * t_peak}
    errs = {k: abs(float(np.interp(v, t, mass)) - 1) for k, v in checks.items()}
    ok = all(e < 0.01 for e in errs.values())
    record("C6 mass conservation", ok, ", ".join(f"{k} {e:.1e}" for k, e in errs.items()))
    assert ok


# --------------------------------------------------------------------------
# 7. particle statistics
# --------------------------------------------------------------------------

def test_c7_pbs_statistics(record):
    D, dt = 0.1, 0.5
    disp = brownian_step(1_000_000, D, dt, seed=11)
    var_err = float(np.max(np.abs(disp.var(axis=0) / (2 * D * dt) - 1)))

    n, k = 1_000_000, 0.3
    st = LayerStack.from_widths([50.0], [1.0], degradation=[k], exterior_degradation=k)
    ens = ParticleEnsemble.release(n, SourceSpec(10.0), 13, st)
    apply_degradation(ens, st, dt)
    p = math.exp(-k * dt)
    sd = math.sqrt(n * p * (1 - p))
    z = (ens.n_alive - n * p) / sd
    ok = var_err < 0.01 and abs(z) < 3
    record("C7 particle statistics", ok, f"variance rel err {var_err:.1e}; survival z-score {z:+.2f}")
    assert ok


# --------------------------------------------------------------------------
# 8 and 11. desk-scale cross-engine comparison, run twice
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    scen = base / "desk.json"
    save_scenario(desk_scenario(), scen)
    runs = {}
    for workers in (1, 3):
        out = base / f"w{workers}"
        t0 = time.perf_counter()
        rc = cli.main(["run", str(scen), "--engine", "both", "--out", str(out), "--workers", str(workers)])
        runs[workers] = (rc, out, time.perf_counter() - t0)
    return runs


@slow
def test_c8_cross_engine(desk_runs, record):
    rc, out, elapsed = desk_runs[1]
    assert rc == 0
    with (out / "comparison.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    ok = elapsed < 300
    parts = []
    for row in rows:
        nrmse, pt = float(row["nrmse"]), float(row["peak_time_rel_error"])
        ok &= nrmse < 0.10 and pt < 0.15
        parts.append(f"{row['receiver']} nrmse {nrmse:.3f} tpeak {pt:.3f}")
    record("C8 cross-engine agreement", ok, "; ".join(parts) + f"; {elapsed:.0f}s")
    assert len(rows) == 4
    assert ok


@slow
def test_c11_determinism(desk_runs, record):
    (_, a, _), (_, b, _) = desk_runs[1], desk_runs[3]
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    same = files == other and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)
    ncsv = sum(1 for f in files if f.suffix == ".csv")
    record("C11 determinism", same, f"{len(files)} artifacts ({ncsv} CSV) compared, workers 1 vs 3")
    assert same


# --------------------------------------------------------------------------
# 9 and 10. porosity sweeps
# --------------------------------------------------------------------------

@slow
def test_c9_internal_source_sweep(record):
    res = porosity_sweep(desk_sweep_scenario())
    o = res.ordering()
    keys = ["analytic_time_increasing", "analytic_value_decreasing", "pbs_time_increasing", "pbs_value_decreasing"]
    ok = all(o[k] for k in keys)
    record(
        "C9 internal-source sweep", ok,
        f"eps {o['porosities']}: analytic t {[round(x) for x in o['analytic_peak_time']]}, "
        f"pbs t {[round(x) for x in o['pbs_peak_time']]}",
    )
    assert ok


@slow
def test_c10_external_source_sweep(record):
    res = porosity_sweep(desk_external_scenario(), inside_window=2.0e5)
    late = 40_000.0
    o = res.inside_at(late)
    ok = o["analytic_increasing"] and o["pbs_increasing"]
    record(
        "C10 external-source sweep", ok,
        f"inside fraction at t={late:g}s: analytic {[round(x, 4) for x in o['analytic']]}, "
        f"pbs {[round(x, 4) for x in o['pbs']]}",
    )
    assert ok
