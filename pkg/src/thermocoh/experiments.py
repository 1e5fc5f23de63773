"""Experiment runners behind the command line.

Every runner takes a resolved configuration dictionary and returns an
:class:`ExperimentResult`; rows carry their full parameter tuple.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coherence as coh
from .config import ConfigError
from .dipolar import (DENSE_MAX_ATOMS, AtomGeometry, Liouvillian, ThermalBath,
                      compute_couplings, nbar_from_temperature, pair_coefficients,
                      uniform_couplings)
from .dynamics import IntegratorConfig, evolve, steady_state_longtime, steady_state_null
from .harvesting import (CollisionParams, DarkPairError, derived_rates,
                         effective_temperature, monte_carlo_collisions, qubit_steady_state)
from .qlinalg import ground_state, pure_state


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[list]
    summary: list[str] = field(default_factory=list)


def parallel_map(fn, tasks, workers: int = 1):
    """Ordered map; a process pool when ``workers > 1``."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _integrator(cfg) -> IntegratorConfig:
    ic = cfg.get("integrator", {})
    return IntegratorConfig(rtol=float(ic.get("rtol", 1e-8)),
                            atol=float(ic.get("atol", 1e-10)),
                            max_step=float(ic.get("max_step", math.inf)),
                            hermitize_every=int(ic.get("hermitize_every", 50)))


def _list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _nbars(model) -> list[float]:
    if "temperature" in model:
        return [nbar_from_temperature(float(t)).nbar for t in _list(model["temperature"])]
    return [float(x) for x in _list(model.get("nbar", 10.0))]


def _times(cfg):
    tc = cfg.get("time", {})
    t_max, n = float(tc.get("t_max", 5.0)), int(tc.get("n_points", 101))
    if t_max <= 0 or n < 2:
        raise ConfigError("time grid needs t_max > 0 and n_points >= 2")
    return np.linspace(0.0, t_max, n)


def _mode(cfg, n_atoms):
    mode = cfg.get("model", {}).get("mode", "auto")
    if mode == "dense" and n_atoms > DENSE_MAX_ATOMS:
        raise ConfigError(
            f"dense mode is limited to N <= {DENSE_MAX_ATOMS} atoms (requested N={n_atoms}); "
            "set model.mode = \"matrix-free\" or \"auto\"")
    if mode not in ("auto", "dense", "matrix-free"):
        raise ConfigError(f"unknown model.mode {mode!r}")
    return mode


# pair-coherence ---------------------------------------------------------

def _pair_task(task):
    nbar, f0, gamma0, times, icfg, mode = task
    L = Liouvillian(uniform_couplings(2, f0, gamma0), ThermalBath(nbar), mode)
    tr = evolve(L, ground_state(2), times, icfg, probes={"c": coh.l1_coherence})
    exact = coh.analytic_pair_coherence(nbar, times, gamma0)
    return [[nbar, f0, t, c, a, abs(c - a)]
            for t, c, a in zip(times, tr.observables["c"], exact)]


def run_pair_coherence(cfg) -> ExperimentResult:
    model = cfg.get("model", {})
    times, icfg, mode = _times(cfg), _integrator(cfg), _mode(cfg, 2)
    gamma0 = float(model.get("gamma0", 1.0))
    tasks = [(nb, float(f0), gamma0, times, icfg, mode)
             for nb in _nbars(model) for f0 in _list(model.get("f0", 0.0))]
    rows = [r for block in parallel_map(_pair_task, tasks, cfg.get("workers", 1))
            for r in block]
    summary = [f"max_abs_error={max(r[-1] for r in rows):.6g}"]
    return ExperimentResult(["nbar", "f0", "t", "C_numeric", "C_analytic", "abs_error"],
                            rows, summary)


# dipole-effect ------------------------------------------------------------

DIPOLE_STATES = {
    # amplitudes over |ee>, |eg>, |ge>, |gg>
    "ge+i_eg": np.array([0, 1j, 1, 0]) / np.sqrt(2),
    "sqrt3_ge+eg": np.array([0, 1, np.sqrt(3), 0]) / 2,
    "insensitive": np.array([0, 1, 1, 0]) / np.sqrt(2),
}


def _dipole_task(task):
    name, f0, nbar, gamma0, times, icfg, mode = task
    L = Liouvillian(uniform_couplings(2, f0, gamma0), ThermalBath(nbar), mode)
    tr = evolve(L, pure_state(DIPOLE_STATES[name]), times, icfg,
                probes={"c": coh.l1_coherence})
    return [[name, f0, nbar, t, c] for t, c in zip(times, tr.observables["c"])]


def run_dipole_effect(cfg) -> ExperimentResult:
    model = cfg.get("model", {})
    names = _list(cfg.get("states", {}).get("names", list(DIPOLE_STATES)))
    unknown = set(names) - set(DIPOLE_STATES)
    if unknown:
        raise ConfigError(f"unknown initial states {sorted(unknown)}; "
                          f"choose from {sorted(DIPOLE_STATES)}")
    times, icfg, mode = _times(cfg), _integrator(cfg), _mode(cfg, 2)
    gamma0 = float(model.get("gamma0", 1.0))
    tasks = [(s, float(f0), nb, gamma0, times, icfg, mode) for s in names
             for f0 in _list(model.get("f0", [0.0, 1.0, 100.0])) for nb in _nbars(model)]
    rows = [r for block in parallel_map(_dipole_task, tasks, cfg.get("workers", 1))
            for r in block]
    return ExperimentResult(["state", "f0", "nbar", "t", "C"], rows)


# scaling ------------------------------------------------------------------

def _scaling_task(task):
    n, nbar, f0, gamma0, conv_tol, horizon, icfg, mode, method = task
    L = Liouvillian(uniform_couplings(n, f0, gamma0), ThermalBath(nbar), mode)
    if method == "null":
        rho, t_conv = steady_state_null(L, ground_state(n)), float("nan")
    else:
        rho, t_conv = steady_state_longtime(L, ground_state(n), conv_tol, icfg,
                                          horizon=horizon)
    res = float(np.abs(L.apply(rho)).sum())
    return [n, nbar, f0, coh.l1_coherence(rho), t_conv, res]


def run_scaling(cfg) -> ExperimentResult:
    model = cfg.get("model", {})
    sc = cfg.get("scaling", {})
    n_min, n_max = int(sc.get("n_min", 2)), int(sc.get("n_max", 7))
    if not 1 <= n_min <= n_max:
        raise ConfigError(f"empty atom-number range {n_min}..{n_max}")
    mode = _mode(cfg, n_max)
    method = sc.get("method", "longtime")
    if method not in ("longtime", "null"):
        raise ConfigError(f"unknown scaling.method {method!r}")
    if method == "null" and n_max > DENSE_MAX_ATOMS:
        raise ConfigError(f"null-space steady states need the dense superoperator "
                          f"(N <= {DENSE_MAX_ATOMS}); use scaling.method = \"longtime\"")
    nbar = _nbars(model)[0]
    f0 = float(_list(model.get("f0", 1.0))[0])
    tasks = [(n, nbar, f0, float(model.get("gamma0", 1.0)),
              float(sc.get("conv_tol", 1e-8)), float(sc.get("horizon", 1e3)),
              _integrator(cfg),
              "dense" if method == "null" else mode, method)
             for n in range(n_min, n_max + 1)]
    rows = parallel_map(_scaling_task, tasks, cfg.get("workers", 1))
    summary = []
    ns = [r[0] for r in rows]
    cs = [r[3] for r in rows]
    if len(rows) >= 5:
        fit = coh.cubic_fit(ns, cs)
        summary.append("cubic_fit " + " ".join(
            f"c{k}={c:.12g}" for k, c in enumerate(fit.coefficients))
            + f" r_squared={fit.r_squared:.12g}")
    summary.append(f"strictly_increasing={all(b > a for a, b in zip(cs, cs[1:]))}")
    if 2 in ns:
        c2 = cs[ns.index(2)]
        summary.append(f"N2_check C={c2:.12g} analytic={coh.pair_plateau(nbar):.12g} "
                       f"diff={abs(c2 - coh.pair_plateau(nbar)):.3g}")
    return ExperimentResult(["N", "nbar", "f0", "C_longtime", "t_converged", "residual_l1"],
                            rows, summary)


# harvest ------------------------------------------------------------------

def thermal_pair(nbar: float, f0: float = 0.0, gamma0: float = 1.0) -> np.ndarray:
    """Long-time state of a collectively heated pair started in ``|gg>``."""
    L = Liouvillian(uniform_couplings(2, f0, gamma0), ThermalBath(nbar), "dense")
    return steady_state_null(L, ground_state(2))


def _pair_from_spec(spec) -> np.ndarray:
    kind = spec.get("kind", "explicit")
    if kind in ("thermal", "thermal-reference"):
        a = thermal_pair(float(spec.get("nbar", 10.0)), float(spec.get("f0", 0.0)))
        if kind == "thermal-reference":
            a = np.diag(np.diag(a))
        return a
    if kind == "explicit":
        try:
            a = np.array(spec["a"], dtype=complex)
            if "a_imag" in spec:
                a = a + 1j * np.array(spec["a_imag"], dtype=float)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"pair {spec.get('name')!r}: bad explicit matrix ({exc})") from exc
        if a.shape != (4, 4):
            raise ConfigError(f"pair {spec.get('name')!r}: matrix must be 4x4")
        return a
    raise ConfigError(f"unknown pair kind {kind!r}")


def _mc_task(task):
    a, params, total_time, seed, sampling = task
    rho0 = np.diag([0.5, 0.5]).astype(complex)
    tr = monte_carlo_collisions(rho0, a, params, total_time, seed, pair_sampling=sampling)
    return tr.states[-1][0, 0].real, int(tr.observables["collisions"][-1])


def run_harvest(cfg) -> ExperimentResult:
    col = cfg.get("collision", {})
    g = float(col.get("g", 1.0))
    tau = float(col["gtau"]) / g if "gtau" in col else float(col.get("tau", 0.05))
    params = CollisionParams(p=float(col.get("p", 1.0)), g=g, tau=tau,
                             omega0=float(col.get("omega0", 1.0)))
    n_coll = int(col.get("collisions", 10_000))
    n_seeds = int(col.get("seeds", 32))
    sampling = col.get("pair_sampling", "mixed")
    pairs = cfg.get("pairs") or [
        {"name": "thermal", "kind": "thermal", "nbar": 10.0},
        {"name": "thermal-reference", "kind": "thermal-reference", "nbar": 10.0},
    ]
    seeds = [int(s) for s in np.random.SeedSequence(int(cfg.get("seed", 0)))
             .generate_state(n_seeds)]
    rows = []
    for spec in pairs:
        a = _pair_from_spec(spec)
        r = derived_rates(a, params)
        base = [spec.get("name", spec.get("kind")), params.p, params.g, params.tau,
                params.gtau, params.omega0, params.mu,
                a[0, 0].real, a[1, 1].real, a[2, 2].real, a[3, 3].real,
                a[1, 2].real, a[1, 2].imag, r.r_e, r.r_d, r.lam.real, r.lam.imag,
                r.epsilon.real, r.epsilon.imag]
        status = "ok"
        try:
            temp = effective_temperature(r, params.omega0)
            t_kind = temp.kind
            t_val = "" if temp.value is None else temp.value
        except DarkPairError:
            t_kind, t_val, status = "undefined", "", "dark"
        try:
            ss = qubit_steady_state(r)[0, 0].real
        except DarkPairError:
            ss = ""
        except ValueError:
            ss, status = "", "lambda-nonzero"
        tasks = [(a, params, n_coll / params.p, s, sampling) for s in seeds]
        out = parallel_map(_mc_task, tasks, cfg.get("workers", 1))
        vals = np.array([o[0] for o in out])
        counts = np.array([o[1] for o in out])
        stderr = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else float("nan")
        rows.append(base + [t_kind, t_val, ss, vals.mean(), stderr,
                            counts.mean(), n_seeds, sampling, status])
    cols = ["pair", "p", "g", "tau", "gtau", "omega0", "mu", "a11", "a22", "a33", "a44",
            "a23_re", "a23_im", "r_e", "r_d", "lambda_re", "lambda_im", "eps_re", "eps_im",
            "T_kind", "T_value", "rho_ee_ss", "rho_ee_mc", "rho_ee_mc_stderr",
            "collisions_mean", "seeds", "pair_sampling", "status"]
    return ExperimentResult(cols, rows)


# couplings ---------------------------------------------------------------

def _geometry_rows(geom: AtomGeometry, label: str):
    c = compute_couplings(geom)
    rows = []
    for i, j in zip(*np.triu_indices(geom.n_atoms, k=1)):
        r = geom.positions[i] - geom.positions[j]
        xi = float(np.linalg.norm(r))
        cos_a = float(np.dot(r / xi, geom.dipole_orientation))
        rows.append(_coupling_row(label, i + 1, j + 1, xi, cos_a,
                                  c.f[i, j], c.gamma[i, j]))
    return rows


def _coupling_row(label, i, j, xi, cos_a, f, g):
    alpha = math.degrees(math.acos(max(-1.0, min(1.0, cos_a))))
    f_near = 0.75 * (1 - 3 * cos_a**2) / xi**3
    return [label, i, j, xi, alpha, f, g, f_near, 1.0, 0.0, 0.0]


def run_couplings(cfg) -> ExperimentResult:
    geo = cfg.get("geometry", {})
    preset = geo.get("preset", "pair-sweep")
    rows = []
    try:
        if preset == "pair-sweep":
            xis = np.geomspace(float(geo.get("xi_min", 0.01)), float(geo.get("xi_max", 100.0)),
                               int(geo.get("n_xi", 41)))
            alphas = [float(a) for a in _list(geo.get("alpha_deg", [90.0]))]
            for alpha in alphas:
                cos_a = math.cos(math.radians(alpha))
                f, g = pair_coefficients(xis, cos_a)
                for xi, fv, gv in zip(xis, f, g):
                    rows.append(_coupling_row("pair-sweep", 1, 2, float(xi), cos_a, fv, gv))
        elif preset == "collinear":
            geom = AtomGeometry.collinear(int(geo.get("n_atoms", 3)),
                                          float(geo.get("spacing", 0.1)),
                                          math.radians(float(geo.get("alpha_deg", 90.0))))
            rows = _geometry_rows(geom, "collinear")
        elif preset == "explicit":
            d = np.array(geo.get("dipole", [0.0, 0.0, 1.0]), dtype=float)
            geom = AtomGeometry(np.array(geo["positions"], dtype=float), d / np.linalg.norm(d))
            rows = _geometry_rows(geom, "explicit")
        elif preset == "uniform-f0":
            n = int(geo.get("n_atoms", 2))
            c = uniform_couplings(n, float(geo.get("f0", 1.0)))
            rows = [["uniform-f0", i + 1, j + 1, "", "", c.f[i, j], c.gamma[i, j],
                     "", 1.0, 0.0, 0.0] for i, j in zip(*np.triu_indices(n, k=1))]
        else:
            raise ConfigError(f"unknown geometry preset {preset!r}")
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid geometry: {exc}") from exc
    return ExperimentResult(["geometry", "i", "j", "xi", "alpha_deg", "f", "gamma",
                             "f_near_field", "gamma_near_field", "f_far_field",
                             "gamma_far_field"], rows)


RUNNERS = {
    "pair-coherence": run_pair_coherence,
    "dipole-effect": run_dipole_effect,
    "scaling": run_scaling,
    "harvest": run_harvest,
    "couplings": run_couplings,
}
