"""One function per experiment: resolved parameters in, CSV tables and figures out."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from . import bohr, dynamics, spectral, spinchain, toy
from .core import (GaussianBump, ModelParams, ParabolicBump, PeriodicCosSq, SymmetricDoubleWell,
                   make_grid)
from .eigen import lowest_eigenpairs
from .parallel import pmap


@dataclass
class Table:
    name: str
    header: tuple
    rows: list


@dataclass
class Result:
    tables: list = field(default_factory=list)
    figures: list = field(default_factory=list)  # (filename, draw(fig_factory) -> fig)
    summary: dict = field(default_factory=dict)


def _flea(p, a=None):
    a = p.get("a", 1.0) if a is None else a
    if p["flea_shape"] == "gaussian":
        return GaussianBump(p["flea_center"] * a, p["flea_width"] * a / 3.0, p["flea_height"])
    return ParabolicBump(p["flea_center"] * a, p["flea_width"] * a, p["flea_height"])


def _params(p, xi):
    return ModelParams(hbar=xi * math.sqrt(p["mass"]), mass=p["mass"], lam=p["lam"], a=p["a"])


def _grid(p):
    return make_grid(-4 * p["a"], 4 * p["a"], p["n_points"])


# -- eigensolve ----------------------------------------------------------------

def _eigen_case(case, p):
    xi, on = case
    if p["potential"] == "nwell":
        params = ModelParams(hbar=xi, mass=1.0, lam=1.0, a=p["a"])
        fleas = (_flea(p),) if on else ()
        es = spectral.nwell_spectrum(params, p["n_wells"], fleas, p["v_b"], p["n_points"], p["k"])
        part = spectral.nwell_partition(p["n_wells"], p["a"], p["n_points"])
        pot = PeriodicCosSq(p["v_b"], p["a"], p["n_wells"])(es.grid.x)
    else:
        params = _params(p, xi)
        grid = _grid(p)
        op = spectral.double_well_operator(params, grid, _flea(p) if on else None, 1.0)
        es = lowest_eigenpairs(op, p["k"], params=params)
        pot = SymmetricDoubleWell(params.lam, params.a)(grid.x)
        part = spectral.find_partition(pot, grid)
    probs = [spectral.well_probability(es.vectors[n], part, es.grid) for n in range(len(es))]
    return es, probs, pot


def run_eigensolve(p, seed, workers):
    flags = {"on": [True], "off": [False], "both": [False, True]}[p["flea"]]
    cases = [(xi, on) for xi in p["xi"] for on in flags]
    out = pmap(partial(_eigen_case, p=p), cases, workers)
    n_w = len(out[0][1][0])
    energies, dens = [], []
    for (xi, on), (es, probs, pot) in zip(cases, out):
        for n in range(len(es)):
            energies.append((xi, on, n, float(es.energies[n]), *[float(v) for v in probs[n]]))
        d = es.vectors**2
        for j, x in enumerate(es.grid.x):
            dens.append((xi, on, float(x), float(pot[j]), *[float(v) for v in d[:, j]]))
    k = len(out[0][0])
    res = Result()
    res.tables.append(Table("energies", ("xi", "flea", "state", "energy",
                                         *[f"p_well{i}" for i in range(n_w)]), energies))
    res.tables.append(Table("densities", ("xi", "flea", "x", "potential",
                                          *[f"density{n}" for n in range(k)]), dens))

    def draw(new_figure):
        fig, axes = new_figure(len(p["xi"]), len(flags), figsize=(4 * len(flags), 2.6 * len(p["xi"])),
                               squeeze=False)
        for (xi, on), (es, _, pot) in zip(cases, out):
            ax = axes[p["xi"].index(xi)][flags.index(on)]
            for n in range(len(es)):
                ax.plot(es.grid.x, es.vectors[n] ** 2, lw=1, label=f"n={n}")
            ax2 = ax.twinx()
            ax2.plot(es.grid.x, pot, color="k", lw=0.6, alpha=0.4)
            ax.set_title(f"xi={xi}, flea {'on' if on else 'off'}", fontsize=9)
        axes[0][0].legend(fontsize=7)
        fig.tight_layout()
        return fig

    res.figures.append(("eigenfunctions.svg", draw))
    return res


# -- flea sweep ----------------------------------------------------------------

def run_flea_sweep(p, seed, workers):
    flea = _flea(p)
    grid = _grid(p)
    curves = [spectral.flea_sensitivity_sweep(_params(p, xi), flea, p["eps"], grid,
                                              workers=workers) for xi in p["xi"]]
    rows = [row for c in curves for row in c.rows()]
    summary = []
    for c in curves:
        try:
            cross = c.crossing(0.75)
        except Exception:
            cross = float("nan")
        pl = np.asarray(c.left_well_probability)
        order = np.argsort(c.epsilon_values)[::-1]
        rise = float(np.max(np.diff(pl[order]), initial=0.0))
        summary.append((float(c.xi), cross, float(pl.min()), float(pl.max()), rise))
    res = Result()
    res.tables.append(Table("sensitivity", ("epsilon", "p_left", "xi"), rows))
    res.tables.append(Table("crossings", ("xi", "eps_cross_0.75", "p_min", "p_max",
                                          "max_increase_as_eps_decreases"), summary))

    def draw(new_figure):
        fig, ax = new_figure(figsize=(6, 4))
        for c in curves:
            ax.plot(np.log10(c.epsilon_values), c.left_well_probability, marker=".",
                    label=f"xi={c.xi:g}")
        ax.set_xlabel("log10 epsilon")
        ax.set_ylabel("left-well probability")
        ax.legend()
        return fig

    res.figures.append(("sensitivity.svg", draw))
    return res


# -- n-well ----------------------------------------------------------------------

def run_nwell(p, seed, workers):
    n, a = p["n_wells"], p["a"]
    params = ModelParams(hbar=p["xi"], lam=1.0, a=a)
    bottom = -n * a + (2 * p["single_flea_well"] + 1) * a
    cases = {
        "none": [],
        "single": [ParabolicBump(bottom, p["single_flea_width"] * a, p["single_flea_height"])],
        "random": spectral.random_fleas(n, p["random_fleas"], np.random.default_rng(seed), a,
                                        (p["height_min"], p["height_max"])),
    }
    part = spectral.nwell_partition(n, a, p["n_points"])
    rows, flea_rows = [], []
    for name, fleas in cases.items():
        es = spectral.nwell_spectrum(params, n, fleas, p["v_b"], p["n_points"], p["k"])
        for s in range(len(es)):
            w = spectral.well_probability(es.vectors[s], part, es.grid)
            rows.append((name, s, float(es.energies[s]), *[float(v) for v in w]))
        for f in fleas:
            flea_rows.append((name, f.center, f.half_width, f.height))
    res = Result()
    res.tables.append(Table("nwell_states", ("case", "state", "energy",
                                             *[f"p_well{i}" for i in range(n)]), rows))
    res.tables.append(Table("fleas", ("case", "center", "half_width", "height"), flea_rows))
    return res


# -- dynamics ----------------------------------------------------------------------

def _schedule(p, flea, seed=0):
    kind = p["schedule"]
    if kind == "static":
        return dynamics.static_schedule(flea)
    if kind == "quench":
        k = dynamics.Quench(p["epsilon"], p["t_on"])
    elif kind == "sin_ramp":
        k = dynamics.SinRamp(p["T"])
    elif kind == "white_noise":
        k = dynamics.WhiteNoise(p["noise_amplitude"], p["dt_noise"], seed)
    else:
        k = dynamics.PoissonKicks(p["kick_rate"], p["kick_scale"], seed)
    return dynamics.RampSchedule(k, flea)


def run_dynamics(p, seed, workers):
    if p["mode"] == "quench-study":
        return _quench_study(p, workers)
    params = _params(p, p["xi"])
    grid = _grid(p)
    flea = _flea(p)
    sched = _schedule(p, flea, seed)
    base = spectral.double_well_operator(params, grid)
    es = lowest_eigenpairs(base, max(2, p["k"]), params=params)
    t_end = p["t_end"] or (p["T"] if p["schedule"] == "sin_ramp" else 100.0)
    traj = dynamics.propagate(es.state(0), base, sched, p["dt"], t_end, stride=p["stride"])
    coeffs = dynamics.instantaneous_coefficients(traj, k=p["k"])
    res = Result()
    res.tables.append(Table("trajectory", ("t", "norm", "energy", "p_left"), list(traj.rows())))
    crow = []
    for t, c in zip(coeffs.times, coeffs.coefficients):
        crow.append((float(t), *[v for z in c for v in (float(z.real), float(z.imag))],
                     float(1.0 - np.sum(np.abs(c) ** 2))))
    res.tables.append(Table("coefficients", ("t", *[f"{part}_c{n}" for n in range(p["k"])
                                                    for part in ("re", "im")], "deficit"), crow))
    if p["schedule"] == "sin_ramp":
        rep = dynamics.adiabatic_report(params, flea, p["T"], grid)
        res.tables.append(Table("adiabatic", ("T", "delta0", "matrix_element", "c1dot0", "gamma",
                                              "T_required", "criterion"),
                                [(rep.T, rep.delta0, rep.matrix_element, rep.c1dot0, rep.gamma,
                                  rep.T_required, rep.criterion)]))

    def draw(new_figure):
        fig, (a1, a2) = new_figure(2, 1, figsize=(6, 5), sharex=True)
        a1.plot(traj.times, traj.p_left)
        a1.set_ylabel("p_left")
        for n in range(p["k"]):
            a2.plot(coeffs.times, coeffs.populations[:, n], label=f"|c{n}|^2")
        a2.set_xlabel("t")
        a2.legend()
        return fig

    res.figures.append(("dynamics.svg", draw))
    return res


def _quench_study(p, workers):
    params = ModelParams.from_xi(p["study_xi"], lam=p["study_lam"], a=p["a"])
    grid = _grid(p)
    flea = _flea(dict(p, flea_height=p["study_flea_height"]))
    thr = dynamics.static_threshold(params, flea, 0.75, grid)
    ratios = np.logspace(-p["study_decades"], p["study_decades"], p["study_points"])
    stats = dynamics.quench_localization_study(thr * ratios, p["horizon"] or None, params, flea,
                                               grid, workers=workers)
    rows = [(s.epsilon, float(r), s.time_averaged_p_left, s.max_sustained_window,
             s.window_fraction, s.horizon, s.min_p_left, s.max_p_left, s.deficit)
            for s, r in zip(stats, ratios)]
    res = Result(summary={"static_threshold": thr})
    res.tables.append(Table("quench_study", ("epsilon", "epsilon_over_threshold",
                                             "time_averaged_p_left", "max_window",
                                             "window_fraction", "horizon", "min_p_left",
                                             "max_p_left", "deficit"), rows))
    res.tables.append(Table("threshold", ("xi", "lam", "threshold_0.75"),
                            [(params.xi, params.lam, thr)]))
    return res


# -- gamma scan -----------------------------------------------------------------

def run_gamma_scan(p, seed, workers):
    flea = _flea(p)
    scan = dynamics.gamma_scan(p["hbar"], flea, p["lam"], p["a"], p["mass"], _grid(p),
                               p["shrink"], workers)
    res = Result()
    res.tables.append(Table("gamma", ("hbar", "delta0", "matrix_element", "gamma", "log10_gamma",
                                      "shrunk_max_well_probability"), list(scan.rows())))
    res.tables.append(Table("gamma_fit", ("slope", "intercept", "r2", "excluded"),
                            [(scan.slope, scan.intercept, scan.r2,
                              ";".join(repr(h) for h in scan.excluded))]))

    def draw(new_figure):
        fig, ax = new_figure(figsize=(6, 4))
        ax.plot(scan.hbar, scan.log10_gamma, "o-")
        ax.set_xlabel("hbar")
        ax.set_ylabel("log10 Gamma")
        return fig

    res.figures.append(("gamma.svg", draw))
    return res


# -- phase space ---------------------------------------------------------------

def _pgrid(p):
    return bohr.PhaseSpaceGrid(tuple(p["p_range"]), tuple(p["q_range"]), p["n_p"], p["n_q"])


def run_husimi(p, seed, workers):
    hbar = p["xi"] * math.sqrt(p["mass"])
    grid = _grid(p)
    if p["state"] == "coherent":
        state = bohr.coherent_state(p["p0"], p["q0"], hbar, grid)
    else:
        fam = bohr.ground_state_family(p["lam"], p["a"], grid,
                                       _flea(p) if p["state"] == "flea" else None)
        state = fam(hbar)
    mu = bohr.husimi_measure(state, hbar, _pgrid(p))
    mp, mq = mu.mean()
    neg, pos = mu.half_plane_masses()
    res = Result()
    res.tables.append(Table("husimi", ("p", "q", "density"), list(mu.rows())))
    res.tables.append(Table("husimi_summary", ("mass", "mean_p", "mean_q", "mass_q_neg",
                                               "mass_q_pos"), [(mu.mass, mp, mq, neg, pos)]))

    def draw(new_figure):
        fig, ax = new_figure(figsize=(6, 4))
        im = ax.imshow(mu.density, origin="lower", aspect="auto",
                       extent=(*mu.grid.q_range, *mu.grid.p_range))
        ax.set_xlabel("q")
        ax.set_ylabel("p")
        fig.colorbar(im, ax=ax)
        return fig

    res.figures.append(("husimi.svg", draw))
    return res


def phase_test_functions(a: float = 1.0) -> dict:
    """The documented finite family of phase-space test functions."""
    return {
        "bump_right": bohr.bump(0.0, a, 0.8 * a, "bump_right"),
        "bump_left": bohr.bump(0.0, -a, 0.8 * a, "bump_left"),
        "bump_barrier": bohr.bump(0.0, 0.0, 0.4 * a, "bump_barrier"),
        "bump_far": bohr.bump(1.5, 0.0, 0.3 * a, "bump_far"),
    }


def run_converge(p, seed, workers):
    a = p["a"]
    family = phase_test_functions(a)
    missing = [n for n in p["test_functions"] if n not in family]
    if missing:
        from .errors import ConfigError

        raise ConfigError(f"unknown test function {missing[0]!r}; choose from {list(family)}")
    grid = _grid(p)
    if p["family"] == "flea":
        flea = _flea(p)
        states = bohr.ground_state_family(p["lam"], a, grid, flea)
        limit = bohr.point_state(0.0, -a if flea.center > 0 else a)
    else:
        states = bohr.ground_state_family(p["lam"], a, grid)
        limit = bohr.double_well_limit(a)
    rows = []
    for name in p["test_functions"]:
        table = bohr.weak_convergence_check(p["hbar"], states, family[name], limit, _pgrid(p))
        for row in table.rows():
            rows.append((name, *row, table.monotone_decreasing))
    res = Result()
    res.tables.append(Table("convergence", ("test_function", "hbar", "pairing", "limit_pairing",
                                            "abs_error", "monotone"), rows))
    return res


# -- toy model --------------------------------------------------------------------

def _drift_chunk(args):
    d, eps, seeds = args
    flavor = "diagonal" if eps == 0.0 else "almost"
    return toy.drift_batch(d, flavor, eps if eps else None, seeds)


def _chunks(seeds, n):
    size = max(1, math.ceil(len(seeds) / max(1, n)))
    return [seeds[i:i + size] for i in range(0, len(seeds), size)]


def run_toy_drift(p, seed, workers):
    rows = []
    for eps in p["eps"]:
        seeds = [seed * 1_000_000 + i for i in range(p["instances"])]
        tasks = [(p["d"], eps, chunk) for chunk in _chunks(seeds, 4 * max(1, workers))]
        for part in pmap(_drift_chunk, tasks, workers):
            for s, r in part:
                rows.append((s, eps, r.drift, r.sharp_bound, r.loose_bound,
                             r.drift < r.sharp_bound or eps == 0.0, r.drift < r.loose_bound or eps == 0.0))
    res = Result()
    res.tables.append(Table("drift", ("seed", "eps", "drift", "sharp_bound", "bound_24eps",
                                      "holds_sharp", "holds_24eps"), rows))
    return res


def _bound_chunk(args):
    d, e1, e2, seeds = args
    return [(s, toy.counterfactual_bound_check(d, e1, e2, s)) for s in seeds]


def run_toy_bound(p, seed, workers):
    seeds = [seed * 1_000_000 + i for i in range(p["instances"])]
    tasks = [(p["d"], p["eps1"], p["eps2"], c) for c in _chunks(seeds, 4 * max(1, workers))]
    rows = [(s, b.eps1, b.eps2, b.lhs, b.rhs, b.ratio, b.holds)
            for part in pmap(_bound_chunk, tasks, workers) for s, b in part]
    adv = toy.adversarial_bound_search(p["d"], p["eps1"], p["eps2"], p["adversarial_angles"], seed)
    ortho = [toy.almost_ortho_check(e, p["ortho_trials"], seed) for e in p["ortho_eps"]]
    res = Result()
    res.tables.append(Table("bound", ("seed", "eps1", "eps2", "lhs", "rhs", "ratio", "holds"), rows))
    res.tables.append(Table("adversarial", ("eps1", "eps2", "lhs", "rhs", "ratio", "holds"),
                            [(adv.eps1, adv.eps2, adv.lhs, adv.rhs, adv.ratio, adv.holds)]))
    res.tables.append(Table("almost_ortho", ("epsilon", "worst_distance", "lower_bound", "eta",
                                             "trials", "holds"),
                            [(o.epsilon, o.worst_distance, o.lower_bound, o.eta, o.trials, o.holds)
                             for o in ortho]))
    return res


def run_sg(p, seed, workers):
    alpha = complex(p["alpha_re"], p["alpha_im"])
    beta = complex(p["beta_re"], p["beta_im"])
    packets = toy.SGPackets.symmetric(p["s"], p["sigma"])
    slit = {"full": None, "right": (0.0, math.inf), "left": (-math.inf, 0.0),
            "interval": tuple(p["slit_interval"])}[p["slit"]]
    r = toy.stern_gerlach_density(alpha, beta, packets, slit)
    lo, hi = slit if slit else (-math.inf, math.inf)
    mp, mm = packets.mass(1, lo, hi), packets.mass(-1, lo, hi)
    wp, wm = abs(alpha) ** 2 * mp, abs(beta) ** 2 * mm
    rows = []
    for i in range(2):
        for j in range(2):
            z, zr = r.state.matrix[i, j], r.raw[i, j]
            rows.append((f"rho{i}{j}", float(z.real), float(z.imag), float(zr.real),
                         float(zr.imag)))
    res = Result()
    res.tables.append(Table("sg_density", ("entry", "re", "im", "raw_re", "raw_im"), rows))
    res.tables.append(Table("sg_closed_form", ("captured", "full_overlap", "minor_weight_erfc"),
                            [(r.captured, packets.full_overlap(), min(wp, wm) / (wp + wm))]))
    return res


def _chain_point(N, p):
    spec = spinchain.ChainSpec(N, p["B"], p["variant"], p["boundary"])
    idx = min(p["flea_index"], spec.dim - 1)
    r0 = spinchain.chain_ground_analysis(spec, None, p["k"])
    r1 = spinchain.chain_ground_analysis(spec, spinchain.SpinFlea(idx, p["eps"]), p["k"])
    return (N, p["B"], p["eps"], r0.splitting, r1.splitting, r0.polarization, r1.polarization,
            float(r1.energies[0]), float(r1.energies[1]) if len(r1.energies) > 1 else float("nan"))


def run_spinchain(p, seed, workers):
    rows = pmap(partial(_chain_point, p=p), p["N"], workers)
    res = Result()
    res.tables.append(Table("spinchain", ("N", "B", "eps", "splitting_no_flea", "splitting",
                                          "polarization_no_flea", "polarization", "E0", "E1"),
                            rows))
    return res


RUNNERS: dict[str, Callable] = {
    "eigensolve": run_eigensolve,
    "flea-sweep": run_flea_sweep,
    "nwell": run_nwell,
    "dynamics": run_dynamics,
    "gamma-scan": run_gamma_scan,
    "husimi": run_husimi,
    "converge": run_converge,
    "toy-drift": run_toy_drift,
    "toy-bound": run_toy_bound,
    "sg": run_sg,
    "spinchain": run_spinchain,
}
