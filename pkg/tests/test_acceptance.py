"""Acceptance criteria 1-13. Each test prints one PASS/FAIL line with its measured numbers."""
import json
import math
import time

import numpy as np
import pytest

from flealab import cli
from flealab.bohr import (PhaseSpaceGrid, berezin_quantize, double_well_limit,
                          ground_state_family, husimi_measure, point_state,
                          weak_convergence_check, windowed)
from flealab.core import (ModelParams, SymmetricDoubleWell, WaveFunction, default_flea,
                          default_grid, make_grid)
from flealab.dynamics import (RampSchedule, SinRamp, adiabatic_report, flea_on_grid,
                              gamma_scan, gauge_term, propagate, quench_localization_study,
                              static_schedule, static_threshold)
from flealab.eigen import lowest_eigenpairs
from flealab.experiments import phase_test_functions
from flealab.spectral import (double_well_operator, find_partition, flea_sensitivity_sweep,
                              splitting_scan, well_probability, wkb_action)
from flealab.spinchain import (ChainSpec, SpinFlea, chain_ground_analysis, dense_lowest,
                               enumerate_spectrum)
from flealab.toy import (SGPackets, adversarial_bound_search, counterfactual_bound_check,
                         drift_batch, stern_gerlach_density)

FIGURE_LAM = 9.0  # figure preset for the sensitivity, quench and Gamma studies


@pytest.fixture
def report(capsys):
    def _report(n, title, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:2d} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
        assert ok, f"criterion {n} failed: {detail}"
    return _report


def test_criterion_01_symmetry_baseline(report):
    worst, slowest = 0.0, 0.0
    for xi in (0.1, 0.15, 0.2):
        t0 = time.perf_counter()
        p = ModelParams.from_xi(xi)
        op = double_well_operator(p)
        es = lowest_eigenpairs(op, 2, params=p)
        pl = well_probability(es.vectors[0], find_partition(op.potential, op.grid), op.grid)[0]
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, abs(pl - 0.5))
    ok = worst <= 1e-6 and slowest < 5.0
    report(1, "symmetric ground state splits 0.5/0.5", ok,
           f"max |p_left-0.5|={worst:.2e} (tol 1e-6), slowest point {slowest:.2f}s (< 5s)")


def test_criterion_02_flea_sensitivity_curves(report):
    t0 = time.perf_counter()
    eps = np.logspace(-1, -12, 45)
    flea = default_flea()
    crossings, details, ok = [], [], True
    for xi in (0.2, 0.15, 0.1):
        c = flea_sensitivity_sweep(ModelParams.from_xi(xi, lam=FIGURE_LAM), flea, eps)
        p = c.left_well_probability  # ordered by decreasing eps
        rise = float(np.max(np.diff(p)))  # p should not increase as eps shrinks
        lo, hi = float(p.min()), float(p.max())
        cross = c.crossing(0.75)
        crossings.append(cross)
        ok &= rise <= 1e-3 and lo <= 0.51 and hi >= 0.99
        details.append(f"xi={xi}: span [{lo:.4f}, {hi:.6f}], max rise {rise:.1e}, "
                       f"eps(0.75)={cross:.3e}")
    decreasing = all(b < a for a, b in zip(crossings, crossings[1:]))
    elapsed = time.perf_counter() - t0
    ok &= decreasing and elapsed < 180
    report(2, "flea sensitivity curves", ok,
           "; ".join(details) + f"; crossings decrease with xi: {decreasing}; {elapsed:.1f}s")


def test_criterion_03_splitting_law(report):
    t0 = time.perf_counter()
    fit = splitting_scan([ModelParams(h) for h in (0.30, 0.25, 0.20, 0.15, 0.12)])
    d_exact = wkb_action(SymmetricDoubleWell(1.0, 1.0), ModelParams(0.1))
    rel = abs(fit.d_fit - d_exact) / d_exact
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.10 and fit.r2 > 0.99 and elapsed < 120
    report(3, "splitting law d_fit vs WKB action", ok,
           f"d_fit={fit.d_fit:.4f}, WKB={d_exact:.4f}, rel err {rel:.1%} (tol 10%), "
           f"R2={fit.r2:.5f} (> 0.99), {elapsed:.1f}s")


@pytest.fixture(scope="module")
def gamma():
    t0 = time.perf_counter()
    scan = gamma_scan(np.linspace(0.04, 0.08, 9), default_flea(1.0, 1e-10), lam=FIGURE_LAM)
    return scan, time.perf_counter() - t0


def test_criterion_04_gamma_scaling(report, gamma):
    scan, elapsed = gamma
    lg = scan.log10_gamma
    i_lo, i_hi = int(np.argmin(scan.hbar)), int(np.argmax(scan.hbar))
    assert scan.hbar[i_hi] == pytest.approx(2 * scan.hbar[i_lo])
    orders = float(lg[i_lo] - lg[i_hi])
    ok = scan.r2 > 0.99 and scan.slope > 0 and orders >= 10 and elapsed < 180
    report(4, "log10 Gamma linear in 1/hbar", ok,
           f"slope={scan.slope:.4f}, R2={scan.r2:.6f}, halving hbar "
           f"{scan.hbar[i_hi]:.2f}->{scan.hbar[i_lo]:.2f} gains {orders:.2f} orders (>= 10), "
           f"{elapsed:.1f}s")


def test_criterion_05_flea_shrink_delocalization(report, gamma):
    scan, elapsed = gamma
    worst = float(np.max(scan.shrunk_max_well_probability))
    ok = worst < 0.95 and scan.shrink_exponent >= 12 and elapsed < 60
    report(5, "flea scaled by 1e-12 leaves ground state delocalized", ok,
           f"max single-well probability {worst:.4f} (< 0.95) over {len(scan.hbar)} hbar values, "
           f"{elapsed:.1f}s")


def test_criterion_06_quench_non_localization(report):
    t0 = time.perf_counter()
    params = ModelParams.from_xi(0.2, lam=FIGURE_LAM)
    flea = default_flea()
    thr = static_threshold(params, flea, 0.75)
    ratios = np.logspace(-2, 2, 9)
    stats = quench_localization_study(thr * ratios, params=params, flea=flea)
    avgs = np.array([s.time_averaged_p_left for s in stats])
    windows = np.array([s.window_fraction for s in stats])
    elapsed = time.perf_counter() - t0
    in_band = (avgs >= 0.35) & (avgs <= 0.65)
    ok = bool(in_band.all()) and bool(np.all(windows <= 0.25)) and elapsed < 600
    bad = ", ".join(f"eps/thr={r:.3g}: {a:.3f}" for r, a, b in zip(ratios, avgs, in_band) if not b)
    report(6, "quench never localizes", ok,
           f"threshold eps={thr:.3e}; time averages {np.round(avgs, 3).tolist()}; "
           f"outside [0.35, 0.65]: [{bad}]; max window fraction {windows.max():.3f} (<= 0.25); "
           f"{elapsed:.1f}s")


def test_criterion_07_adiabatic_identities(report):
    t0 = time.perf_counter()
    p = ModelParams.from_xi(0.2)
    g = default_grid()
    flea = default_flea(1.0, 0.01)
    worst_half = 0.0
    for T in (0.5, 1.0, 7.0, 100.0):
        r1, r2 = adiabatic_report(p, flea, T, g), adiabatic_report(p, flea, 2 * T, g)
        worst_half = max(worst_half, abs(r2.c1dot0 / r1.c1dot0 - 0.5) / 0.5)
    op = double_well_operator(p, g)
    w = flea_on_grid(flea, g)
    ramp = SinRamp(10.0)
    worst_gauge = 0.0
    for t in (0.0, 2.5, 5.0, 7.5):
        worst_gauge = max(worst_gauge, float(np.max(np.abs(
            gauge_term(op, w, ramp.scale(t), k=2, rate=ramp.rate(t))))))
    elapsed = time.perf_counter() - t0
    ok = worst_half <= 1e-12 and worst_gauge < 1e-8 and elapsed < 60
    report(7, "adiabatic identities", ok,
           f"c1dot0 halving rel err {worst_half:.1e} (<= 1e-12), max |<psi_n|dpsi_n/dt>| "
           f"{worst_gauge:.1e} (< 1e-8), {elapsed:.1f}s")


def test_criterion_08_propagator_quality(report):
    t0 = time.perf_counter()
    p = ModelParams.from_xi(0.2)
    g = default_grid()
    op = double_well_operator(p, g)
    x = g.x
    psi0 = WaveFunction.normalized(g, np.exp(-(x - 0.8) ** 2 / 0.2) * np.exp(0.5j * x / 0.2))
    sched = static_schedule()
    tr = propagate(psi0, op, sched, dt=1e-3, t_end=10.0, stride=1000)
    n_steps = int(round(tr.times[-1] / 1e-3))
    drift = float(np.max(np.abs(tr.norm - 1.0)))
    # time reversal: conj(U(t) psi) evolved forward by t returns conj(psi)
    back = propagate(WaveFunction(g, tr.states[-1].conj()), op, sched, 1e-3, 10.0, stride=10**9)
    trip = math.sqrt(float(np.sum(np.abs(back.states[-1].conj() - psi0.amplitudes) ** 2))
                     * g.spacing)

    def final(dt, s):
        return propagate(psi0, op, s, dt, 2.0, stride=10**9, check_dt=False).states[-1]

    ratios = []
    for s in (sched, RampSchedule(SinRamp(2.0), default_flea(1.0, 0.5))):
        ref = final(0.02 / 8, s)
        e1 = np.linalg.norm(final(0.02, s) - ref)
        e2 = np.linalg.norm(final(0.01, s) - ref)
        ratios.append(float(e1 / e2))
    elapsed = time.perf_counter() - t0
    ok = (n_steps >= 10**4 and drift < 1e-8 and trip < 1e-6
          and all(3.6 <= r <= 4.4 for r in ratios) and elapsed < 120)
    report(8, "Crank-Nicolson quality", ok,
           f"norm drift {drift:.1e} over {n_steps} steps (< 1e-8), round trip {trip:.1e} "
           f"(< 1e-6), dt-halving ratios static {ratios[0]:.3f} / ramp {ratios[1]:.3f} "
           f"(3.6-4.4), {elapsed:.1f}s")


def test_criterion_09_bohrification_limit(report):
    t0 = time.perf_counter()
    hbars = (0.2, 0.1, 0.05, 0.025)
    pgrid = PhaseSpaceGrid((-3.0, 3.0), (-3.0, 3.0), 128, 192)
    sym = ground_state_family()
    flea = ground_state_family(flea=default_flea(1.0, 0.01))
    monotone, details = True, []
    for name, f in phase_test_functions().items():
        a = weak_convergence_check(hbars, sym, f, double_well_limit(), pgrid)
        b = weak_convergence_check(hbars, flea, f, point_state(0.0, -1.0), pgrid)
        monotone &= a.monotone_decreasing and b.monotone_decreasing
        details.append(f"{name}: sym {a.abs_error[0]:.2e}->{a.abs_error[-1]:.2e}, "
                       f"flea {b.abs_error[0]:.2e}->{b.abs_error[-1]:.2e}")
    left, right = husimi_measure(sym(0.05), 0.05).half_plane_masses()
    g = make_grid(-4, 4, 512)
    hb = 0.05
    one = windowed(lambda p, q: np.ones_like(p), ((-2.9, 2.9), (-1.9, 1.9)), "one")
    q1 = berezin_quantize(one, hb, g)
    psi = ground_state_family(grid=g)(hb).amplitudes
    roi = math.sqrt(float(np.sum(np.abs(q1 @ psi - psi) ** 2)) * g.spacing)
    elapsed = time.perf_counter() - t0
    lobes_ok = abs(left - 0.5) <= 0.01 and abs(right - 0.5) <= 0.01
    ok = monotone and lobes_ok and roi < 1e-3 and elapsed < 300
    report(9, "semiclassical limit of ground states", ok,
           f"monotone errors: {monotone} ({'; '.join(details)}); lobes at hbar=0.05 "
           f"{left:.5f}/{right:.5f} (0.5 +- 0.01); ||Q(1)psi - psi||={roi:.1e} (< 1e-3); "
           f"{elapsed:.1f}s")


def test_criterion_10_toy_model_bounds(report):
    t0 = time.perf_counter()
    diag = max(r.drift for _, r in drift_batch(16, "diagonal", None, range(10_000)))
    almost_ok, worst_sharp, worst_loose = True, 0.0, 0.0
    for eps in (1e-3, 1e-2):
        for _, r in drift_batch(16, "almost", eps, range(1000)):
            almost_ok &= r.drift < r.sharp_bound and r.drift < r.loose_bound
            worst_sharp = max(worst_sharp, r.drift / r.sharp_bound)
            worst_loose = max(worst_loose, r.drift / r.loose_bound)
    checks = [counterfactual_bound_check(16, 1e-2, 1e-2, s) for s in range(500)]
    cf_ok = all(c.holds for c in checks)
    adv = adversarial_bound_search(16, 1e-2, 1e-2, n_angles=21)
    elapsed = time.perf_counter() - t0
    ok = diag <= 1e-12 and almost_ok and cf_ok and adv.holds and elapsed < 120
    report(10, "pointer-model drift and counterfactual bounds", ok,
           f"diagonal drift max {diag:.1e} over 1e4 (<= 1e-12); almost-diagonal max ratio "
           f"to sharp bound {worst_sharp:.3f}, to 24eps {worst_loose:.4f}; counterfactual "
           f"holds on 500: {cf_ok} (max ratio {max(c.ratio for c in checks):.3f}, "
           f"adversarial {adv.ratio:.3f}); {elapsed:.1f}s")


def test_criterion_11_stern_gerlach(report):
    t0 = time.perf_counter()
    off_err, delta_err, delta_rel, positive = 0.0, 0.0, 0.0, True
    cases = [(0.6, 0.8j, 1.0, 0.5), (math.sqrt(0.3), math.sqrt(0.7) * np.exp(0.4j), 1.5, 1.0),
             (1 / math.sqrt(2), 1 / math.sqrt(2), 2.0, 1.0)]
    for alpha, beta, s, sigma in cases:
        pk = SGPackets.symmetric(s, sigma)
        r = stern_gerlach_density(alpha, beta, pk)
        closed = alpha * np.conj(beta) * math.exp(-(s**2) / (2 * sigma**2))
        off_err = max(off_err, abs(r.state.matrix[0, 1] - closed))
        half = stern_gerlach_density(alpha, beta, pk, (0.0, math.inf))
        mp, mm = pk.mass(1, 0.0, math.inf), pk.mass(-1, 0.0, math.inf)
        wp, wm = abs(alpha) ** 2 * mp, abs(beta) ** 2 * mm
        expected = min(wp, wm) / (wp + wm)
        d = float(min(half.state.matrix[0, 0].real, half.state.matrix[1, 1].real))
        positive &= d > 0
        delta_err = max(delta_err, abs(d - expected))
        delta_rel = max(delta_rel, abs(d - expected) / expected)
    elapsed = time.perf_counter() - t0
    ok = off_err <= 1e-10 and delta_err <= 1e-8 and positive and elapsed < 10
    report(11, "Stern-Gerlach density matrix", ok,
           f"full-line off-diagonal err {off_err:.1e} (<= 1e-10); half-line delta err "
           f"{delta_err:.1e} (<= 1e-8, rel {delta_rel:.1e}), strictly positive: {positive}; "
           f"{elapsed:.2f}s")


def test_criterion_12_spin_chain(report):
    t0 = time.perf_counter()
    mismatches = 0
    for N in range(2, 13):
        for B in (0.0, 0.3):
            for boundary in ("open", "ring"):
                spec = ChainSpec(N, B, "as_printed", boundary)
                k = min(6, spec.dim)
                r = chain_ground_analysis(spec, k=k)
                mismatches += not np.array_equal(r.energies, enumerate_spectrum(spec)[:k])
    eps = 1e-6
    n2 = chain_ground_analysis(ChainSpec(2), SpinFlea(0, eps), k=2).splitting
    spec = ChainSpec(8, 0.5, "transverse", "ring")
    flea = SpinFlea(0, 1e-8)
    lan = chain_ground_analysis(spec, flea, k=2)
    w, _ = dense_lowest(spec, flea, k=2)
    dense_err = float(np.max(np.abs(lan.energies - w)))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and n2 == eps and dense_err < 1e-8 and elapsed < 120
    report(12, "spin chain spectra", ok,
           f"AsPrinted mismatches vs enumeration N=2..12: {mismatches}; N=2 splitting "
           f"{n2!r} == {eps!r}: {n2 == eps}; transverse N=8 doublet err {dense_err:.1e} "
           f"(< 1e-8); {elapsed:.1f}s")


def test_criterion_13_determinism(report, tmp_path):
    runs = {
        "flea-sweep": ["xi=[0.1, 0.15, 0.2]", "eps=logspace(-1, -12, 45)"],
        "toy-drift": ["instances=200"],
        "nwell": [],
        "spinchain": ["N=[2, 4, 6, 8]"],
        "gamma-scan": [],
    }
    results = []
    for exp, args in runs.items():
        out = tmp_path / exp
        assert cli.main([exp, "--out", str(out), "--seed", "11", "--workers", "1", *args]) == 0
        manifest = out / "manifest.json"
        for workers in (1, 4, 8):
            new = cli.replay(manifest, workers=workers, out_dir=str(tmp_path / f"{exp}-{workers}"))
            old = json.loads(manifest.read_text())
            same = ({f["file"]: f["sha256"] for f in old["outputs"] if f["kind"] == "csv"}
                    == {f["file"]: f["sha256"] for f in new["outputs"] if f["kind"] == "csv"})
            results.append((exp, workers, same))
    ok = all(s for *_, s in results)
    report(13, "replay is byte-identical across worker counts", ok,
           ", ".join(f"{e}@{w}:{'same' if s else 'DIFF'}" for e, w, s in results))
