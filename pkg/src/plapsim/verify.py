"""Monte Carlo verification of the quantitative bounds the scheme must obey.

Each study returns a JSON-ready report dict: a list of named checks, each
carrying the measured estimate, the bound it is held against, a standard
error where the estimate is a Monte Carlo mean, and a pass flag.  Paths are
coupled across perturbation levels by construction (the Wiener stream is
keyed by path index alone), so comparisons across n use paired differences.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .evolution import SolverConfig, build_system, simulate_path, simulate_coupled_pair
from .noise import default_sampler
from .regularize import n0
from .spatial import (initial_profile, linear_coeff, n_min_default, norm_l1,
                      norm_l2, zero_drift)

__all__ = [
    "MCEstimate",
    "ExperimentPlan",
    "energy_report",
    "contraction_experiment",
    "cauchy_in_n_study",
    "heat_oracle_study",
]


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error over independent paths."""

    mean: float
    std_error: float
    num_paths: int

    @staticmethod
    def from_samples(values):
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError("standard errors need at least two paths")
        return MCEstimate(mean=float(np.mean(values)),
                          std_error=float(np.std(values, ddof=1)
                                          / math.sqrt(values.size)),
                          num_paths=int(values.size))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a study needs to rebuild its systems and samplers.

    n_list must be sorted and stay at or above the minimum admissible
    level (the growth threshold n0, sharpened by the dissipativity default
    when the coefficient has a nontrivial c2).  num_paths >= 2 so standard
    errors exist.  workers > 1 fans path jobs out to a process pool; the
    aggregates are independent of the pool size because every path is
    keyed by (master_seed, path_index) and merged in path order.
    """

    grid: object
    coeff: object
    drift: object
    pert: object
    spec: object
    kernel: object
    config: SolverConfig
    n_list: tuple
    num_paths: int
    master_seed: int
    slack: float = 0.05
    se_mult: float = 3.0
    checkpoints: int = 10
    workers: int = 1
    num_modes: int = None
    min_level: float = None

    def __post_init__(self):
        if self.num_paths < 2:
            raise ValueError("num_paths must be at least 2")
        n_list = tuple(int(n) for n in self.n_list)
        if list(n_list) != sorted(n_list):
            raise ValueError("n_list must be sorted")
        object.__setattr__(self, "n_list", n_list)
        if self.min_level is None and self.spec is not None:
            level = n_min_default(self.grid, self.coeff, self.pert,
                                  self.spec.c_sigma)
            object.__setattr__(self, "min_level", level)
        if self.min_level is not None:
            low = [n for n in n_list if n < self.min_level]
            if low:
                raise ValueError(f"levels {low} fall below the minimum "
                                 f"admissible level {self.min_level:g}")

    def sampler(self, path_index):
        return default_sampler(self.grid, self.master_seed, path_index,
                               num_modes=self.num_modes)


def _map_jobs(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(processes=workers) as pool:
        return pool.map(fn, jobs)


def _check(name, statement, estimate, bound, passed, std_error=None):
    return {"name": name, "statement": statement,
            "estimate": None if estimate is None else float(estimate),
            "bound": None if bound is None else float(bound),
            "std_error": None if std_error is None else float(std_error),
            "pass": bool(passed)}


def _finish(name, statement, checks, extra=None):
    report = {"name": name, "statement": statement, "checks": checks,
              "pass": bool(all(c["pass"] for c in checks))}
    if extra:
        report.update(extra)
    return report


def _paired_monotone_checks(label, statement, levels, per_path, se_mult,
                            abs_floor=1e-12):
    """Checks that per-path values do not increase along consecutive levels."""
    checks = []
    for a, b in zip(range(len(levels) - 1), range(1, len(levels))):
        diffs = per_path[b] - per_path[a]
        est = MCEstimate.from_samples(diffs)
        tol = se_mult * est.std_error + abs_floor
        checks.append(_check(
            f"{label}_{levels[a]}_to_{levels[b]}",
            statement.format(a=levels[a], b=levels[b]),
            est.mean, tol, est.mean <= tol, est.std_error))
    return checks


# -------------------------------------------------------------- energy study


def _energy_path_stats(args):
    plan, n, path_index, u0 = args
    cfg = replace(plan.config, n=int(n),
                  record_every=max(1, plan.config.num_steps))
    system = build_system(plan.grid, plan.coeff, plan.drift, plan.pert, cfg,
                          spec=plan.spec, kernel=plan.kernel)
    rec = simulate_path(system, cfg, u0, plan.sampler(path_index))
    return (rec.sup_l2_sq,
            rec.integrals["grad_lp_p"],
            rec.integrals["hm0_sq"] / n,
            rec.integrals["wmq_q"] / n)


def energy_report(plan, u0=None, ratio_bound=2.0):
    """Uniform-in-n energy boundedness of the approximating trajectories.

    Estimates E sup_t ||u_n||_2^2, E int ||grad u_n||_p^p, and the
    (1/n)-weighted H^m and W^{m,q} energies for every level, on coupled
    Wiener paths.  Checks: every estimate finite; the sup-norm estimates
    stay within ratio_bound of each other across levels; the weighted
    W^{m,q} energy does not increase with n (paired, within se_mult
    standard errors).
    """
    if u0 is None:
        u0 = initial_profile(plan.grid, "sine", amplitude=0.25)
    jobs = [(plan, n, p, u0) for n in plan.n_list for p in range(plan.num_paths)]
    flat = _map_jobs(_energy_path_stats, jobs, plan.workers)
    stats = np.asarray(flat).reshape(len(plan.n_list), plan.num_paths, 4)

    names = ("sup_l2_sq", "int_grad_lp_p", "int_hm0_sq_over_n",
             "int_wmq_q_over_n")
    estimates = {}
    for i, n in enumerate(plan.n_list):
        estimates[str(n)] = {
            name: MCEstimate.from_samples(stats[i, :, k]).__dict__
            for k, name in enumerate(names)}

    checks = [_check(
        "energies_finite",
        "every second-moment and dissipation estimate is finite at every level",
        float(np.max(stats)), None, bool(np.all(np.isfinite(stats))))]

    sup_means = np.array([np.mean(stats[i, :, 0]) for i in range(len(plan.n_list))])
    ratio = float(np.max(sup_means) / np.min(sup_means))
    checks.append(_check(
        "uniform_l2_bound",
        f"E sup_t ||u_n||_2^2 varies by at most a factor {ratio_bound} over levels",
        ratio, ratio_bound, ratio <= ratio_bound))

    checks.extend(_paired_monotone_checks(
        "weighted_wmq_monotone",
        "(1/n) E int ||u_n||_Wmq^q does not increase from level {a} to {b}",
        plan.n_list, stats[:, :, 3], plan.se_mult))

    return _finish("energy_boundedness",
                   "uniform-in-level second-moment and dissipation bounds",
                   checks, extra={"levels": list(plan.n_list),
                                  "estimates": estimates})


# --------------------------------------------------------- contraction study


def _contraction_path_curves(args):
    plan, u0_a, u0_b, snap_idx, path_index = args
    cfg = replace(plan.config, sigma_mode="raw", use_perturbation=False,
                  record_every=1, newton_dt_retries=0)
    system = build_system(plan.grid, plan.coeff, plan.drift, plan.pert, cfg,
                          spec=plan.spec, kernel=plan.kernel)
    rec_a, rec_b = simulate_coupled_pair((system, system), cfg, (u0_a, u0_b),
                                         plan.sampler(path_index))
    diff = rec_a.states[snap_idx] - rec_b.states[snap_idx]
    return [norm_l1(plan.grid, d) for d in diff]


def contraction_experiment(plan, u0_a, u0_b):
    """L1 coupling bound between two solutions driven by the same noise.

    Requires the Holder exponent to sit in [1/2, 1).  Both trajectories
    run the limit dynamics (raw coefficient, no higher-order term) from
    different initial data under identical increments; at each checkpoint
    the Monte Carlo mean of ||u1 - u2||_1 is held against
    exp(l_f t) ||u0_1 - u0_2||_1 with the plan's slack and standard errors.
    """
    if plan.spec is not None and not 0.5 <= plan.spec.alpha < 1.0:
        raise ValueError(f"the coupling bound needs alpha in [1/2, 1), got "
                         f"alpha = {plan.spec.alpha}")
    grid = plan.grid
    u0_a, u0_b = grid.check(u0_a), grid.check(u0_b)
    steps = plan.config.num_steps
    snap_idx = np.unique(np.round(
        np.linspace(0, steps, plan.checkpoints + 1)).astype(int))
    t_snap = snap_idx * plan.config.dt

    jobs = [(plan, u0_a, u0_b, snap_idx, p) for p in range(plan.num_paths)]
    curves = np.asarray(_map_jobs(_contraction_path_curves, jobs, plan.workers))

    d0 = norm_l1(grid, u0_a - u0_b)
    l_f = plan.drift.l_f if plan.drift is not None else 0.0
    checks = []
    curve_out = []
    for j, t in enumerate(t_snap):
        est = MCEstimate.from_samples(curves[:, j])
        bound = math.exp(l_f * t) * d0
        limit = bound * (1.0 + plan.slack) + plan.se_mult * est.std_error
        checks.append(_check(
            f"l1_coupling_t_{t:.6g}",
            f"E ||u1(t) - u2(t)||_1 at t = {t:.6g} stays below "
            f"exp(l_f t) * ||u0_1 - u0_2||_1 with slack",
            est.mean, limit, est.mean <= limit, est.std_error))
        curve_out.append({"t": float(t), "mean": est.mean,
                          "std_error": est.std_error, "bound": bound})

    return _finish("l1_contraction",
                   "expected L1 distance of coupled solutions grows at most "
                   "like exp(l_f t), tested pointwise in t",
                   checks, extra={"initial_distance": d0, "curve": curve_out})


# -------------------------------------------------------------- cauchy study


def _cauchy_path_values(args):
    plan, u0, levels, path_index = args
    cfg0 = replace(plan.config, record_every=1)
    steps = cfg0.num_steps
    sampler = plan.sampler(path_index)
    increments = np.empty((steps, plan.grid.size))
    for k in range(steps):
        increments[k] = sampler.sample_increment(cfg0.dt)

    from .evolution import _simulate_with_increments

    finals = {}
    for n in levels:
        cfg = replace(cfg0, n=int(n))
        system = build_system(plan.grid, plan.coeff, plan.drift, plan.pert,
                              cfg, spec=plan.spec, kernel=plan.kernel)
        rec = _simulate_with_increments(system, cfg, u0, increments)
        finals[n] = rec.states

    values = []
    w = plan.grid.weight
    for n in plan.n_list:
        diff = finals[n][:-1] - finals[2 * n][:-1]   # left endpoints
        val = math.sqrt(float(np.sum(diff * diff) * w * cfg0.dt))
        values.append(val)
    return values


def cauchy_in_n_study(plan, u0=None):
    """Successive-level distances D_n = E ||u_n - u_2n||_{L2((0,T) x D)}.

    Every level pair shares its Wiener increments path by path.  n_list
    must be a doubling chain; the study simulates the union of levels and
    checks that D_n does not increase along the chain (paired differences
    within se_mult standard errors).
    """
    for a, b in zip(plan.n_list, plan.n_list[1:]):
        if b != 2 * a:
            raise ValueError(f"n_list must double at each step, got {a} -> {b}")
    if u0 is None:
        u0 = initial_profile(plan.grid, "sine", amplitude=0.25)
    u0 = plan.grid.check(u0)
    levels = list(plan.n_list) + [2 * plan.n_list[-1]]

    jobs = [(plan, u0, levels, p) for p in range(plan.num_paths)]
    values = np.asarray(_map_jobs(_cauchy_path_values, jobs, plan.workers)).T

    estimates = {str(n): MCEstimate.from_samples(values[i]).__dict__
                 for i, n in enumerate(plan.n_list)}
    checks = _paired_monotone_checks(
        "cauchy_monotone",
        "E ||u_n - u_2n||_L2 does not increase from level {a} to {b}",
        plan.n_list, values, plan.se_mult)
    return _finish("cauchy_in_level",
                   "successive-level L2 distances shrink as the level doubles",
                   checks, extra={"levels": list(plan.n_list),
                                  "estimates": estimates})


# ---------------------------------------------------------------- heat oracle


def _heat_error(n_interior, dt, t_end, scheme, newton_tol=1e-12):
    from .spatial import Grid

    grid = Grid(1, n_interior)
    cfg = SolverConfig(dt=dt, t_end=t_end, scheme=scheme,
                       use_perturbation=False, newton_tol=newton_tol,
                       record_every=max(1, int(round(t_end / dt))))
    system = build_system(grid, linear_coeff(), zero_drift(), None, cfg)
    x = grid.nodes()[:, 0]
    rec = simulate_path(system, cfg, np.sin(np.pi * x), sampler=None)
    exact = math.exp(-math.pi ** 2 * t_end) * np.sin(np.pi * x)
    err = norm_l2(grid, rec.final_state() - exact)
    return err / norm_l2(grid, exact)


def heat_oracle_study(n_interior=128, dt=1e-5, t_end=0.1,
                      scheme="semi-implicit", rel_tol=1e-3,
                      slope_grids=(8, 16, 32), slope_dt=5e-6,
                      slope_range=(1.7, 2.3)):
    """Deterministic linear benchmark with the exact separable solution.

    With p = 2, a = grad, zero noise and drift, and no perturbation, the
    solution from sin(pi x) is exp(-pi^2 t) sin(pi x).  Checks the relative
    L2 error at t_end on the main grid and the second-order Richardson
    slope of the error across a refinement chain.
    """
    err = _heat_error(n_interior, dt, t_end, scheme)
    checks = [_check(
        "heat_relative_error",
        f"relative L2 error against the exact solution at t = {t_end}",
        err, rel_tol, err <= rel_tol)]

    errors = [_heat_error(n, slope_dt, t_end, scheme) for n in slope_grids]
    hs = [1.0 / (n + 1) for n in slope_grids]
    slope = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    checks.append(_check(
        "heat_richardson_slope",
        f"log-log error slope across grids {tuple(slope_grids)} is second order",
        slope, slope_range[1], slope_range[0] <= slope <= slope_range[1]))

    return _finish("heat_oracle",
                   "the scheme reproduces the exact linear decay profile",
                   checks, extra={"relative_error": float(err),
                                  "slope": slope,
                                  "slope_errors": [float(e) for e in errors]})
