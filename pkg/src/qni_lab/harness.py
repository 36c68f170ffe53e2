"""Experiment front end: scenarios, seeded runs, verification suite, file output.

Scenarios are JSON dicts; every run is determined by (scenario digest, seed).
Each invocation appends one JSONL record per run and writes command-specific
CSVs. Floats are rendered with repr so identical runs produce byte-identical
rows. Replicates can execute in a process pool; results are merged in a
deterministic order either way.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bandit, identify, module_net, qnn_core as core, transfer
from .errors import RejectedInput

ARTIFACT_VERSION = "0.1.0"

COMMANDS = ("identify", "bandit", "transfer", "modules", "verify", "sweep")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    scenario: dict
    seeds: tuple
    out_dir: Path
    parallelism: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise RejectedInput(f"unknown command {self.command!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise RejectedInput("seeds must be nonempty and distinct")
        if self.parallelism < 1:
            raise RejectedInput("parallelism must be >= 1")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "out_dir", Path(self.out_dir))


def scenario_hash(scenario: dict) -> str:
    blob = json.dumps(scenario, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in header])


# ---------------------------------------------------------------------------
# scenario -> problem builders


def default_scenario(command: str) -> dict:
    if command == "identify":
        return {
            "d": 3, "k": 6, "truth_seed": 101, "truth_norm": 1.0,
            "sampler": {"kind": "uniform_cube", "half_width": 0.5},
            "shift": {"kind": "uniform_cube", "half_width": 0.25},
            "n_grid": [2000], "xi_max": 0.0, "noise_kind": "zero", "delta": 0.1,
            "n_eval": 2000,
            "train": {"learning_rate": 0.1, "max_iters": 3000, "grad_tol": 1e-7},
        }
    if command == "bandit":
        return {
            "d": 3, "k": 5, "spectrum": [1.0, 0.3, 0.1], "theta_seed": 7,
            "xi_max": 0.02, "T": 5000, "m_scale": 2e-4,
            "train": {"learning_rate": 0.1, "max_iters": 2500, "grad_tol": 1e-7},
        }
    if command == "transfer":
        return {
            "d": 6, "k": 8, "B": 0.1, "n_p": 8000, "n_g": 20, "sigma0": 0.25,
            "xi_max": 0.0, "noise_kind": "zero", "delta": 0.1, "theta_seed": 11,
            "sampler": {"kind": "uniform_cube", "half_width": 0.5},
            "shift_sampler": {"kind": "uniform_cube", "half_width": 0.5},
            "train": {"learning_rate": 0.12, "max_iters": 2500, "grad_tol": 1e-7},
        }
    if command == "modules":
        return {
            "d": 2, "k": 3, "alphabet_size": 4, "T": 4, "alpha_shift": 0.05,
            "x_max": 1.0, "lipschitz_target": 0.9, "width": 3,
            "n_train": 400, "xi_max": 0.02, "noise_kind": "uniform",
            "n_parser_words": 300, "n_mc": 400,
            "library_seed": 5, "parser_seed": 3, "chain_seed": 4,
            "train": {"learning_rate": 0.15, "max_iters": 2000, "grad_tol": 1e-7},
        }
    if command == "verify":
        return {"scale": 1.0}
    if command == "sweep":
        base = default_scenario("identify")
        return {"axis": "n", "grid": [500, 1000, 2000], "base": base}
    raise RejectedInput(f"unknown command {command!r}")


def sampler_from_dict(spec: dict, d: int) -> core.CovariateSampler:
    kind = spec.get("kind", "uniform_cube")
    if kind == "uniform_cube":
        return core.CovariateSampler.uniform_cube(d, spec.get("half_width", 0.5))
    if kind == "uniform_scaled":
        return core.CovariateSampler.uniform_scaled(d)
    if kind == "unit_sphere":
        return core.CovariateSampler.unit_sphere(d)
    if kind == "custom_mixture":
        return core.CovariateSampler(
            "custom_mixture", d,
            atoms=np.asarray(spec["atoms"], dtype=float),
            weights=np.asarray(spec["weights"], dtype=float) if "weights" in spec else None,
        )
    raise RejectedInput(f"unknown sampler kind {kind!r}")


def train_config_from_dict(spec: dict, seed: int = 0) -> core.TrainConfig:
    return core.TrainConfig(
        learning_rate=spec.get("learning_rate", 0.1),
        max_iters=int(spec.get("max_iters", 3000)),
        grad_tol=spec.get("grad_tol", 1e-7),
        init_scale=spec.get("init_scale"),
        seed=seed,
    )


def truth_from_scenario(scenario: dict) -> core.QuadNet:
    rng = np.random.default_rng(scenario["truth_seed"])
    return core.random_net(scenario["d"], scenario["k"], rng, scenario.get("truth_norm", 1.0))


def bandit_problem_from_scenario(scenario: dict, T: int | None = None) -> bandit.BanditProblem:
    d, k = scenario["d"], scenario["k"]
    spectrum = np.asarray(scenario["spectrum"], dtype=float)
    if spectrum.size != d:
        raise RejectedInput("spectrum must list d eigenvalues")
    rng = np.random.default_rng(scenario["theta_seed"])
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    theta = np.zeros((d, k))
    theta[:, :d] = q @ np.diag(np.sqrt(spectrum))
    return bandit.BanditProblem(
        theta_star=core.QuadNet(theta),
        xi_max=scenario.get("xi_max", 0.0),
        T=int(T if T is not None else scenario["T"]),
        M=scenario.get("M"),
        m_scale=scenario.get("m_scale", 1.0),
    )


def transfer_problem_from_scenario(scenario: dict) -> transfer.TransferProblem:
    d, k = scenario["d"], scenario["k"]
    rng = np.random.default_rng(scenario["theta_seed"])
    sigma0 = scenario["sigma0"]
    # source net built from an explicit SVD so its d-th singular value is known
    u, _ = np.linalg.qr(rng.standard_normal((d, d)))
    v, _ = np.linalg.qr(rng.standard_normal((k, k)))
    sing = rng.uniform(1.5 * sigma0, 3.0 * sigma0, size=d)
    theta_p = u @ np.diag(sing) @ v[:, :d].T
    shift = rng.standard_normal((d, k))
    shift *= scenario["B"] / np.linalg.norm(shift)
    theta_g = theta_p + shift
    return transfer.TransferProblem(
        theta_p_star=core.QuadNet(theta_p),
        theta_g_star=core.QuadNet(theta_g),
        B=scenario["B"],
        n_p=int(scenario["n_p"]),
        n_g=int(scenario["n_g"]),
        sampler_p=sampler_from_dict(scenario.get("sampler", {}), d),
        sampler_q=sampler_from_dict(scenario.get("shift_sampler", scenario.get("sampler", {})), d),
        sigma0=sigma0,
        xi_max=scenario.get("xi_max", 0.0),
        noise_kind=scenario.get("noise_kind", "zero"),
    )


def module_setup_from_scenario(scenario: dict):
    d = scenario["d"]
    k = scenario["k"]
    lib_rng = np.random.default_rng(scenario["library_seed"])
    true_lib = module_net.make_library(
        d, k, scenario.get("x_max", 1.0), scenario.get("lipschitz_target", 0.9),
        lib_rng, width=scenario.get("width"),
    )
    parser_rng = np.random.default_rng(scenario["parser_seed"])
    parser_true = module_net.random_parser(scenario["alphabet_size"], k, parser_rng)
    chain_rng = np.random.default_rng(scenario["chain_seed"])
    base = module_net.random_chain(scenario["alphabet_size"], scenario["T"], chain_rng)
    shifted = module_net.shifted_chain(base, scenario["alpha_shift"], chain_rng)
    spec = module_net.ShiftSpec(base=base, shifted=shifted, alpha_shift=scenario["alpha_shift"])
    return true_lib, parser_true, spec


# ---------------------------------------------------------------------------
# per-seed execution


def run_identify_seed(scenario: dict, seed: int) -> dict:
    truth = truth_from_scenario(scenario)
    sampler_p = sampler_from_dict(scenario.get("sampler", {}), scenario["d"])
    sampler_q = sampler_from_dict(scenario.get("shift", scenario.get("sampler", {})), scenario["d"])
    cfg = train_config_from_dict(scenario.get("train", {}))
    rows = identify.robust_shift_experiment(
        truth, sampler_p, sampler_q,
        n_grid=[int(n) for n in scenario.get("n_grid", [scenario.get("n", 2000)])],
        cfg=cfg,
        seeds=[seed],
        delta=scenario.get("delta", 0.1),
        xi_max=scenario.get("xi_max", 0.0),
        noise_kind=scenario.get("noise_kind", "zero"),
        n_eval=int(scenario.get("n_eval", 2000)),
    )
    return {"rows": rows, "all_hold": int(all(r["holds"] for r in rows))}


def run_bandit_seed(scenario: dict, seed: int) -> dict:
    problem = bandit_problem_from_scenario(scenario)
    cfg = train_config_from_dict(scenario.get("train", {}))
    trace = bandit.run_etc(problem, cfg, seed)
    cum = trace.cumulative_regret()
    trace_rows = []
    stride = max(1, int(scenario.get("trace_stride", 1)))
    for t in range(0, trace.T, stride):
        trace_rows.append({
            "t": t + 1,
            "phase": "explore" if t < trace.m else "commit",
            "reward": float(trace.rewards[t]),
            "inst_regret": float(trace.inst_regret[t]),
            "cum_regret": float(cum[t]),
        })
    return {
        "m": trace.m,
        "m_raw": trace.m_raw,
        "m_clamped": int(trace.m_clamped),
        "final_cum_regret": float(cum[-1]),
        "regret_bound": bandit.regret_bound(problem, trace.T),
        "committed_arm": [float(v) for v in trace.committed_arm],
        "trace_rows": trace_rows,
    }


def run_transfer_seed(scenario: dict, seed: int) -> dict:
    problem = transfer_problem_from_scenario(scenario)
    cfg = train_config_from_dict(scenario.get("train", {}))
    report = transfer.run_transfer(problem, scenario.get("delta", 0.1), cfg, seed=seed)
    return report


def run_modules_seed(scenario: dict, seed: int) -> dict:
    true_lib, parser_true, spec = module_setup_from_scenario(scenario)
    cfg = train_config_from_dict(scenario.get("train", {}))
    fitted = module_net.fit_library(
        true_lib, int(scenario.get("n_train", 400)), scenario.get("xi_max", 0.0),
        scenario.get("noise_kind", "zero"), cfg, seed,
    )
    word_rng = np.random.default_rng(seed + 10_000)
    examples = []
    for _ in range(int(scenario.get("n_parser_words", 300))):
        w = module_net.sample_word(spec.base, word_rng)
        js = module_net.parse(parser_true, w)
        j_prev = module_net.START_STATE
        for z, j in zip(w, js):
            examples.append((int(j_prev), int(z), int(j)))
            j_prev = j
    parser_hat = module_net.train_parser(
        examples, alphabet_size=parser_true.alphabet_size, k=parser_true.k
    )
    report = module_net.composition_error_experiment(
        true_lib, fitted, parser_true, parser_hat, spec,
        n_mc=int(scenario.get("n_mc", 400)), seed=seed + 20_000,
    )
    rows = report.pop("rows")
    report["rows"] = rows  # keep rows last for readability in JSON
    return report


# ---------------------------------------------------------------------------
# verification suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def _check_strong_convexity(scale: float, seed: int) -> CheckResult:
    est = core.estimate_alpha(
        core.CovariateSampler.uniform_cube(3), n_mc=int(200_000 * scale) or 1,
        n_directions=20, seed=seed,
    )
    floor = 1.0 / 180.0 - 0.001
    return CheckResult("strong-convexity-mc", est >= floor, {"estimate": est, "floor": floor})


def _check_loss_lipschitz(scale: float, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    phi_max, x_max = 1.0, 1.0
    K = 4.0 * phi_max * x_max**4
    worst = -math.inf
    n = max(int(300 * scale), 10)
    ok = True
    for _ in range(n):
        mats = []
        for _ in range(3):
            g = rng.standard_normal((3, 3))
            m = (g + g.T) / 2.0
            m *= rng.uniform(0.1, 1.0) * phi_max / np.linalg.norm(m)
            mats.append(m)
        phi, phi_p, phi_star = mats
        x = rng.standard_normal(3)
        x *= rng.uniform(0.0, 1.0) * x_max / np.linalg.norm(x)
        f = lambda m: float(x @ m @ x)
        lhs = abs((f(phi) - f(phi_star)) ** 2 - (f(phi_p) - f(phi_star)) ** 2)
        rhs = K * float(np.linalg.norm(phi - phi_p))
        worst = max(worst, lhs - rhs)
        ok = ok and lhs <= rhs + 1e-10
    return CheckResult("loss-lipschitz-pairs", ok, {"worst_margin": worst})


def _check_deviation_monotonic(scale: float, seed: int) -> CheckResult:
    b = core.BoundSpec(x_max=1.0, theta_max=1.0, phi_max=1.0, xi_max=0.1)
    grid = [10**p for p in range(2, 9)]
    eps = [identify.epsilon_bound(n, 3, 0.05, b).epsilon for n in grid]
    decreasing = all(a > b_ for a, b_ in zip(eps, eps[1:]))
    ratio_ok = identify.epsilon_bound(10**8, 3, 0.05, b).epsilon < identify.epsilon_bound(10**4, 3, 0.05, b).epsilon / 50.0
    return CheckResult(
        "deviation-monotonicity", decreasing and ratio_ok,
        {"eps_1e4": eps[2], "eps_1e8": eps[6]},
    )


def _check_identification_dominance(scale: float, seed: int) -> CheckResult:
    d, k, n = 2, 4, 2000
    sampler = core.CovariateSampler.uniform_cube(d)
    rng = np.random.default_rng(seed)
    truth = core.random_net(d, k, rng, 1.0)
    b = core.BoundSpec(x_max=sampler.x_max, theta_max=1.5, phi_max=2.25, xi_max=0.0)
    alpha = core.nominal_alpha(sampler)
    cfg = core.TrainConfig(learning_rate=0.2, max_iters=3000, grad_tol=1e-9)
    runs = max(int(5 * scale), 2)
    all_ok = True
    worst = 0.0
    for r in range(runs):
        data = core.generate_dataset(truth, sampler, 0.0, "zero", n, seed + 100 + r)
        fit = core.train_gd(data, d, k, core.TrainConfig(
            learning_rate=cfg.learning_rate, max_iters=cfg.max_iters,
            grad_tol=cfg.grad_tol, seed=seed + 200 + r), theta_max=b.theta_max)
        bound = identify.epsilon_bound(n, d, 0.1, b)
        verdict = identify.identification_check(truth, fit.net, bound, alpha, b.x_max)
        all_ok = all_ok and verdict.holds and verdict.frob_holds
        worst = max(worst, verdict.measured_sup_gap_sq / verdict.certified_sup_gap_sq)
    return CheckResult("identification-dominance", all_ok, {"worst_ratio": worst, "runs": runs})


def _check_smooth_best_arm(scale: float, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    phi_star = core.InducedForm(np.diag([3.0, 1.0, 0.5]))
    M = bandit.eigengap_constant(phi_star)
    n = max(int(200 * scale), 20)
    ok = True
    for _ in range(n):
        g = rng.standard_normal((3, 3))
        e = (g + g.T) / 2.0
        e /= np.linalg.norm(e)
        phi = core.InducedForm(phi_star.phi + rng.uniform(0.0, 1.0) * e)
        verdict = bandit.smooth_best_arm_check(phi, phi_star, M)
        ok = ok and verdict.holds is True
    return CheckResult("smooth-best-arm", ok, {"trials": n})


def _check_alignment(scale: float, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    n = max(int(200 * scale), 20)
    ok = True
    worst = -math.inf
    for _ in range(n):
        d, k = 3, 5
        theta_p = core.random_net(d, k, rng)
        smin = transfer.sigma_min(theta_p)
        if smin < 0.2:
            continue
        theta = core.QuadNet(theta_p.theta + 0.05 * rng.standard_normal((d, k)))
        res = transfer.align(theta, theta_p, sigma0=0.2)
        bound = identify.frobenius_gap(theta, theta_p) / smin
        orth = max(
            float(np.linalg.norm(res.R @ res.R.T - np.eye(k))),
            float(np.linalg.norm(res.R_prime @ res.R_prime.T - np.eye(k))),
        )
        ok = ok and res.aligned_gap <= bound + 1e-10 and orth <= 1e-10
        worst = max(worst, res.aligned_gap - bound)
    return CheckResult("orthogonal-alignment", ok, {"worst_margin": worst})


def _check_worst_case_shift(scale: float, seed: int) -> CheckResult:
    ok = True
    worst = 0.0
    for a in (0.3, 1.0):
        for T in range(1, 11):
            spec, exact = module_net.worst_case_shift(a, T)
            brute = module_net.sequence_tv_bruteforce(spec)
            worst = max(worst, abs(brute - exact))
            ok = ok and abs(brute - exact) <= 1e-12
    return CheckResult("worst-case-sequence-shift", ok, {"worst_abs_err": worst})


def _check_mixture_shift(scale: float, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    n = max(int(10 * scale), 3)
    ok = True
    for i in range(n):
        chain = module_net.random_chain(4, 8, rng)
        shifted = module_net.shifted_chain(chain, 0.2, rng)
        spec = module_net.ShiftSpec(chain, shifted, 0.2)
        parser = module_net.random_parser(4, 3, rng)
        ok = ok and module_net.mixture_shift_check(spec, parser)["holds"]
    return CheckResult("mixture-shift-linearity", ok, {"specs": n})


def _check_sequence_error(scale: float, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    chain = module_net.random_chain(3, 5, rng)
    parser_true = module_net.random_parser(3, 3, rng)
    n = max(int(10 * scale), 3)
    ok = True
    for i in range(n):
        table = parser_true.table.copy()
        flat = rng.random(table.shape) < 0.1
        rand_mod = rng.integers(1, 4, size=table.shape)
        table = np.where(flat, rand_mod, table)
        parser_hat = module_net.Parser(table)
        res = module_net.sequence_error_check(parser_hat, parser_true, chain, 0, seed)
        ok = ok and res["holds"] and res["exact"]
    return CheckResult("parser-sequence-error", ok, {"parsers": n})


def _check_composition_bound(scale: float, seed: int) -> CheckResult:
    scenario = default_scenario("modules")
    scenario["n_mc"] = max(int(200 * scale), 50)
    scenario["n_train"] = max(int(300 * scale), 100)
    report = run_modules_seed(scenario, seed)
    return CheckResult(
        "composition-error-bound", bool(report["holds"]),
        {"freq_within": report["freq_within"], "target": report["target"]},
    )


VERIFY_CHECKS = [
    _check_strong_convexity,
    _check_loss_lipschitz,
    _check_deviation_monotonic,
    _check_identification_dominance,
    _check_smooth_best_arm,
    _check_alignment,
    _check_worst_case_shift,
    _check_mixture_shift,
    _check_sequence_error,
    _check_composition_bound,
]


def run_verify_seed(scenario: dict, seed: int) -> dict:
    scale = float(scenario.get("scale", 1.0))
    wanted = scenario.get("checks")
    results = []
    for fn in VERIFY_CHECKS:
        res = fn(scale, seed)
        if wanted and res.name not in wanted:
            continue
        results.append(res)
    return {
        "checks": [
            {"check": r.name, "passed": int(r.passed), **{k: v for k, v in r.detail.items()}}
            for r in results
        ],
        "all_passed": int(all(r.passed for r in results)),
    }


# ---------------------------------------------------------------------------
# sweeps


def run_sweep(config: ExperimentConfig) -> tuple[int, dict]:
    scenario = config.scenario
    axis = scenario.get("axis")
    grid = scenario.get("grid")
    base = scenario.get("base", {})
    if axis not in ("n", "T", "n_g", "T_modules"):
        raise RejectedInput(f"unknown sweep axis {axis!r}")
    if grid is None or len(grid) < 3 or sorted(grid) != list(grid):
        raise RejectedInput("grid must be sorted ascending with at least 3 points")

    tasks = []
    for g in grid:
        for seed in config.seeds:
            tasks.append((axis, g, seed))

    def one(task):
        ax, g, seed = task
        b = dict(base)
        if ax == "n":
            b["n_grid"] = [int(g)]
            payload = run_identify_seed(b, seed)
            row = payload["rows"][0]
            return {"axis_value": int(g), "seed": seed, "metric": math.sqrt(row["sup_gap_sq"]), "row": row}
        if ax == "T":
            b["T"] = int(g)
            payload = run_bandit_seed({**b, "trace_stride": max(1, int(g) // 50)}, seed)
            return {
                "axis_value": int(g), "seed": seed, "metric": payload["final_cum_regret"],
                "row": {"T": int(g), "replicate": seed, "cum_regret_final": payload["final_cum_regret"]},
            }
        if ax == "n_g":
            b["n_g"] = int(g)
            payload = run_transfer_seed(b, seed)
            return {
                "axis_value": int(g), "seed": seed,
                "metric": math.sqrt(payload["gold_sup_gap"]),
                "row": {"n_g": int(g), "seed": seed, "gold_sup_gap": payload["gold_sup_gap"],
                        "certified": payload["certified"], "holds": payload["holds"]},
            }
        b["T"] = int(g)
        payload = run_modules_seed(b, seed)
        gaps = [r["gap_l2"] for r in payload["rows"] if r["parse_match"]]
        mean_gap = float(np.mean(gaps)) if gaps else 0.0
        return {
            "axis_value": int(g), "seed": seed, "metric": mean_gap,
            "row": {"T": int(g), "seed": seed, "mean_matched_gap": mean_gap,
                    "freq_within": payload["freq_within"]},
        }

    results = _map_tasks(one, tasks, config.parallelism)
    results.sort(key=lambda r: (r["axis_value"], r["seed"]))

    medians = []
    for g in grid:
        vals = [r["metric"] for r in results if r["axis_value"] == g]
        medians.append(float(np.median(vals)))
    summary = {"axis": axis, "grid": [int(g) for g in grid], "medians": medians}
    if all(m > 0 for m in medians):
        slope, intercept, stderr = bandit.fit_loglog_slope(
            np.array(grid, dtype=float), np.array(medians)
        )
        summary.update({"slope": slope, "intercept": intercept, "stderr": stderr})
    else:
        summary.update({"slope": None, "intercept": None, "stderr": None})

    config.out_dir.mkdir(parents=True, exist_ok=True)
    header = sorted({k for r in results for k in r["row"]})
    write_csv(config.out_dir / "sweep.csv", header, [r["row"] for r in results])
    (config.out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return EXIT_OK, summary


def _map_tasks(fn, tasks, parallelism: int):
    if parallelism <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# top-level run


_SEED_RUNNERS = {
    "identify": run_identify_seed,
    "bandit": run_bandit_seed,
    "transfer": run_transfer_seed,
    "modules": run_modules_seed,
    "verify": run_verify_seed,
}

IDENTIFY_COLUMNS = ["n", "seed", "shift_id", "emp_loss_q", "sup_gap_sq", "certified_bound", "holds"]
TRACE_COLUMNS = ["t", "phase", "reward", "inst_regret", "cum_regret"]
MODULE_COLUMNS = ["word_id", "parse_match", "gap_l2", "bound", "within_bound"]


def run(config: ExperimentConfig) -> int:
    """Execute the configured command; returns the process exit status."""
    if config.command == "sweep":
        status, _ = run_sweep(config)
        return status

    runner = _SEED_RUNNERS[config.command]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    digest = scenario_hash(config.scenario)

    def one(seed: int):
        t0 = time.perf_counter()
        payload = runner(config.scenario, seed)
        wall = (time.perf_counter() - t0) * 1000.0
        return seed, payload, wall

    outputs = _map_tasks(one, list(config.seeds), config.parallelism)
    outputs.sort(key=lambda r: r[0])

    jsonl_path = config.out_dir / "runs.jsonl"
    with open(jsonl_path, "a") as fh:
        for seed, payload, wall in outputs:
            slim = {k: v for k, v in payload.items() if k not in ("trace_rows", "rows")}
            record = {
                "command": config.command,
                "scenario_hash": digest,
                "seed": seed,
                "wall_time_ms": round(wall, 3),
                "artifact_version": ARTIFACT_VERSION,
                "payload": slim,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            records.append(record)

    status = EXIT_OK
    if config.command == "identify":
        rows = []
        for seed, payload, _ in outputs:
            rows.extend(payload["rows"])
        rows.sort(key=lambda r: (r["n"], r["seed"]))
        write_csv(config.out_dir / "identify.csv", IDENTIFY_COLUMNS, rows)
        if config.scenario.get("require_holds") and not all(r["holds"] for r in rows):
            status = EXIT_CHECK_FAILED
    elif config.command == "bandit":
        for seed, payload, _ in outputs:
            write_csv(config.out_dir / f"trace_{seed}.csv", TRACE_COLUMNS, payload["trace_rows"])
    elif config.command == "modules":
        for seed, payload, _ in outputs:
            write_csv(config.out_dir / f"modules_{seed}.csv", MODULE_COLUMNS, payload["rows"])
        if config.scenario.get("require_holds") and not all(p["holds"] for _, p, _ in outputs):
            status = EXIT_CHECK_FAILED
    elif config.command == "verify":
        rows = []
        failed = []
        for seed, payload, _ in outputs:
            for chk in payload["checks"]:
                rows.append({"seed": seed, "check": chk["check"], "passed": chk["passed"]})
                line = "PASS" if chk["passed"] else "FAIL"
                print(f"[{line}] {chk['check']}")
                if not chk["passed"]:
                    failed.append(chk["check"])
        write_csv(config.out_dir / "checks.csv", ["seed", "check", "passed"], rows)
        if failed:
            print("violated checks: " + ", ".join(sorted(set(failed))))
            status = EXIT_CHECK_FAILED
    elif config.command == "transfer":
        if config.scenario.get("require_holds") and not all(p["holds"] for _, p, _ in outputs):
            status = EXIT_CHECK_FAILED
    return status
