"""Acceptance suite: every stated criterion at its stated tolerance.

Each test prints one pass/fail line (run with `pytest -v`; output capture is
disabled in the project config so the lines are visible).
"""

import json
import math

import numpy as np

from conftest import finite_difference_gradient, random_symmetric
from qni_lab import (
    bandit,
    harness,
    identify,
    module_net as mn,
    qnn_core as core,
    transfer,
)


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


# ---------------------------------------------------------------------------
# 1. strong-convexity constant on the centered unit cube


def test_c01_strong_convexity_constant():
    floor = 1.0 / 180.0 - 0.001
    worst = math.inf
    for d in (2, 3, 4):
        est = core.estimate_alpha(core.CovariateSampler.uniform_cube(d), 10**6, 50, seed=d)
        worst = min(worst, est)
    passed = worst >= floor
    report("01 strong-convexity", passed, f"min estimate {worst:.6f} >= {floor:.6f}")
    assert passed


# ---------------------------------------------------------------------------
# 2. analytic gradient vs central finite differences


def test_c02_gradient_correctness():
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(50):
        d = int(rng.integers(2, 5))
        k = int(rng.integers(1, 9))
        n = int(rng.integers(5, 51))
        truth = core.random_net(d, k, rng)
        data = core.generate_dataset(truth, core.CovariateSampler.uniform_cube(d),
                                     0.1, "uniform", n, 20 + i)
        net = core.random_net(d, k, rng)
        err = float(np.abs(core.gradient(net, data) - finite_difference_gradient(net, data, 1e-4)).max())
        worst = max(worst, err)
    passed = worst <= 1e-5
    report("02 gradient-correctness", passed, f"max entry error {worst:.2e} <= 1e-5")
    assert passed


# ---------------------------------------------------------------------------
# 3. multi-restart consistency (all local minima behave as global)


def test_c03_restart_consistency():
    worst_spread, worst_loss = 0.0, 0.0
    inst = 0
    for d in (2, 3, 4):
        reps = 4 if d != 3 else 2
        for _ in range(reps):
            inst += 1
            k = d + 2
            rng = np.random.default_rng(3000 + inst)
            truth = core.random_net(d, k, rng, 1.0)
            data = core.generate_dataset(truth, core.CovariateSampler.uniform_cube(d),
                                         0.0, "zero", 200, 3100 + inst)
            losses = [
                core.train_gd(data, d, k, core.TrainConfig(
                    learning_rate=0.5, max_iters=8000, grad_tol=1e-12, seed=s)).final_loss
                for s in range(10)
            ]
            worst_spread = max(worst_spread, max(losses) - min(losses))
            worst_loss = max(worst_loss, max(losses))
    passed = worst_spread <= 1e-5 and worst_loss <= 1e-6
    report("03 restart-consistency", passed,
           f"{inst} instances, worst loss {worst_loss:.2e} <= 1e-6, spread {worst_spread:.2e} <= 1e-5")
    assert passed


# ---------------------------------------------------------------------------
# 4. certified identification bound dominates the measured gap


def test_c04_identification_dominance():
    d, k, n, delta = 3, 6, 5000, 0.1
    sampler = core.CovariateSampler.uniform_cube(d)
    alpha = core.nominal_alpha(sampler)
    rng = np.random.default_rng(4)
    truth = core.random_net(d, k, rng, 1.0)
    holds = frob_holds = 0
    runs = 0
    for xi_max in (0.0, 0.05):
        b = core.BoundSpec(x_max=sampler.x_max, theta_max=1.5, phi_max=2.25, xi_max=xi_max)
        bound = identify.epsilon_bound(n, d, delta, b)
        for r in range(25):
            runs += 1
            data = core.generate_dataset(truth, sampler, xi_max,
                                         "uniform" if xi_max else "zero", n, 400 + runs)
            fit = core.train_gd(data, d, k, core.TrainConfig(
                learning_rate=0.6, max_iters=4000, grad_tol=1e-9, seed=500 + runs),
                theta_max=b.theta_max)
            verdict = identify.identification_check(truth, fit.net, bound, alpha, b.x_max)
            holds += verdict.holds
            frob_holds += verdict.frob_holds
    passed = holds >= 45 and frob_holds >= 45
    report("04 identification-dominance", passed,
           f"sup-gap bound held {holds}/50, induced-form chain held {frob_holds}/50 (need >= 45)")
    assert passed


# ---------------------------------------------------------------------------
# 5. identification rate in n


def test_c05_identification_rate():
    d, k = 3, 6
    sampler = core.CovariateSampler.uniform_cube(d)
    rng = np.random.default_rng(500)
    truth = core.random_net(d, k, rng, 1.0)
    medians = []
    grid = [10**3, 10**4, 10**5]
    iters = {10**3: 6000, 10**4: 4000, 10**5: 1500}
    for n in grid:
        gaps = []
        for seed in range(20):
            data = core.generate_dataset(truth, sampler, 0.1, "uniform", n, 1000 + seed)
            fit = core.train_gd(data, d, k, core.TrainConfig(
                learning_rate=0.6, max_iters=iters[n], grad_tol=1e-9, seed=2000 + seed),
                theta_max=1.5)
            gaps.append(math.sqrt(identify.sup_function_gap(fit.net, truth, sampler.x_max).sup_gap_sq))
        medians.append(float(np.median(gaps)))
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    slope, _, _ = bandit.fit_loglog_slope(np.array(grid, dtype=float), np.array(medians))
    passed = decreasing and -0.6 <= slope <= -0.15
    report("05 identification-rate", passed,
           f"medians {['%.4g' % m for m in medians]}, slope {slope:.3f} in [-0.6, -0.15]")
    assert passed


# ---------------------------------------------------------------------------
# 6. smooth best arm under perturbations


def test_c06_smooth_best_arm():
    rng = np.random.default_rng(6)
    phi_star = core.InducedForm(np.diag([3.0, 1.0, 0.4]))
    M = bandit.eigengap_constant(phi_star)
    violations = 0
    for _ in range(1000):
        e = random_symmetric(3, rng, 1.0)
        phi = core.InducedForm(phi_star.phi + rng.uniform(0.0, 2.0) * e)
        verdict = bandit.smooth_best_arm_check(phi, phi_star, M)
        if verdict.holds is not True:
            violations += 1
    passed = violations == 0
    report("06 smooth-best-arm", passed, f"{violations} violations in 1000 perturbations")
    assert passed


# ---------------------------------------------------------------------------
# 7. bandit regret scaling and the closed-form bound


def _bandit_problem(T: int) -> bandit.BanditProblem:
    rng = np.random.default_rng(700)
    d, k = 3, 5
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    theta = np.zeros((d, k))
    theta[:, :d] = q @ np.diag(np.sqrt([1.0, 0.3, 0.1]))
    return bandit.BanditProblem(core.QuadNet(theta), xi_max=0.02, T=T, m_scale=2e-4)


def test_c07_bandit_regret_scaling():
    T_grid = [2000, 10000, 50000, 200000]
    cfg = core.TrainConfig(learning_rate=0.25, max_iters=2500, grad_tol=1e-8)
    out = bandit.regret_slope(_bandit_problem, T_grid, replicates=20, seeds=list(range(20)), cfg=cfg)
    assert not out["degenerate"]
    half_horizon = all(
        bandit.run_etc(_bandit_problem(T), cfg, 0).m < T // 2 for T in T_grid
    )
    dominated = all(
        out["mean_regret"][str(T)] <= bandit.regret_bound(_bandit_problem(T), T) for T in T_grid
    )
    slope_ok = 0.53 <= out["slope"] <= 0.85
    passed = slope_ok and dominated and half_horizon
    report("07 bandit-regret-scaling", passed,
           f"slope {out['slope']:.3f} in [0.53, 0.85], bound dominance {dominated}, m < T/2 {half_horizon}")
    assert passed


# ---------------------------------------------------------------------------
# 8. orthogonal alignment bound


def test_c08_alignment_bound():
    rng = np.random.default_rng(8)
    d, k = 3, 5
    violations = 0
    worst_orth = 0.0
    for _ in range(1000):
        u, _ = np.linalg.qr(rng.standard_normal((d, d)))
        v, _ = np.linalg.qr(rng.standard_normal((k, k)))
        sing = rng.uniform(0.2, 1.5, size=d)
        theta_p = core.QuadNet(u @ np.diag(sing) @ v[:, :d].T)
        theta = core.QuadNet(theta_p.theta + rng.uniform(0, 0.5) * rng.standard_normal((d, k)))
        smin = transfer.sigma_min(theta_p)
        res = transfer.align(theta, theta_p, sigma0=0.2)
        bound = identify.frobenius_gap(theta, theta_p) / smin
        orth = max(
            float(np.linalg.norm(res.R @ res.R.T - np.eye(k))),
            float(np.linalg.norm(res.R.T @ res.R - np.eye(k))),
            float(np.linalg.norm(res.R_prime @ res.R_prime.T - np.eye(k))),
        )
        worst_orth = max(worst_orth, orth)
        if res.aligned_gap > bound + 1e-10 or orth > 1e-10:
            violations += 1
    passed = violations == 0
    report("08 alignment-bound", passed,
           f"{violations} violations in 1000 pairs, worst orthogonality residual {worst_orth:.1e}")
    assert passed


# ---------------------------------------------------------------------------
# 9. transfer advantage in the small-gold regime


def test_c09_transfer_advantage():
    rng = np.random.default_rng(900)
    d, k, B, n_p, n_g, sigma0 = 10, 12, 0.1, 50000, 50, 0.2
    u, _ = np.linalg.qr(rng.standard_normal((d, d)))
    v, _ = np.linalg.qr(rng.standard_normal((k, k)))
    sing = rng.uniform(sigma0 * 1.3, sigma0 * 2.2, size=d)
    theta_p = core.QuadNet(u @ np.diag(sing) @ v[:, :d].T)
    shift = rng.standard_normal((d, k))
    shift *= B / np.linalg.norm(shift)
    theta_g = core.QuadNet(theta_p.theta + shift)
    sampler = core.CovariateSampler.uniform_cube(d)
    problem = transfer.TransferProblem(theta_p, theta_g, B, n_p, n_g, sampler, sampler,
                                       sigma0, xi_max=0.0, noise_kind="zero")
    cfg = core.TrainConfig(learning_rate=0.5, max_iters=1500, grad_tol=1e-8)
    b = problem.bounds()
    two_stage, cold_gaps, holds = [], [], 0
    for seed in range(20):
        rep = transfer.run_transfer(problem, 0.1, cfg, seed=seed)
        two_stage.append(rep["gold_sup_gap"])
        holds += rep["holds"]
        data_g = core.generate_dataset(theta_g, sampler, 0.0, "zero", n_g, seed + 2)
        cold = core.train_gd(data_g, d, k, core.TrainConfig(
            learning_rate=0.5, max_iters=1500, grad_tol=1e-8, seed=seed + 3))
        cold_gaps.append(identify.sup_function_gap(cold.net, theta_g, b.x_max).sup_gap_sq)
    med_two = float(np.median(two_stage))
    med_cold = float(np.median(cold_gaps))
    passed = med_two < med_cold and holds >= 18
    report("09 transfer-advantage", passed,
           f"median two-stage gap {med_two:.4g} < gold-only {med_cold:.4g}, certified held {holds}/20 (need >= 18)")
    assert passed


# ---------------------------------------------------------------------------
# 10. worst-case sequence shift is exact


def test_c10_worst_case_shift_exact():
    worst = 0.0
    for alpha in (0.1, 0.5, 1.0):
        for T in range(1, 13):
            spec, exact = mn.worst_case_shift(alpha, T)
            worst = max(worst, abs(mn.sequence_tv_bruteforce(spec) - exact))
    passed = worst <= 1e-12
    report("10 worst-case-shift", passed, f"max |bruteforce - closed form| = {worst:.2e} <= 1e-12")
    assert passed


# ---------------------------------------------------------------------------
# 11. mixture shift compounds linearly


def test_c11_mixture_shift_linear():
    rng = np.random.default_rng(11)
    violations = 0
    for alpha in (0.05, 0.2):
        for _ in range(50):
            chain = mn.random_chain(4, 8, rng)
            shifted = mn.shifted_chain(chain, alpha, rng)
            spec = mn.ShiftSpec(chain, shifted, alpha)
            parser = mn.random_parser(4, 3, rng)
            if not mn.mixture_shift_check(spec, parser)["holds"]:
                violations += 1
    passed = violations == 0
    report("11 mixture-shift-linear", passed, f"{violations} violations in 100 specs")
    assert passed


# ---------------------------------------------------------------------------
# 12. sequence error bounded by per-step error


def test_c12_sequence_error_bound():
    rng = np.random.default_rng(12)
    chain = mn.random_chain(3, 5, rng)
    parser_true = mn.random_parser(3, 3, rng)
    violations = 0
    for _ in range(50):
        table = parser_true.table.copy()
        mask = rng.random(table.shape) < 0.1
        table = np.where(mask, rng.integers(1, 4, size=table.shape), table)
        out = mn.sequence_error_check(mn.Parser(table), parser_true, chain, 0, 0)
        if not (out["exact"] and out["sequence_error"] <= out["bound"] + 1e-12):
            violations += 1
    passed = violations == 0
    report("12 sequence-error-bound", passed, f"{violations} violations in 50 corrupted parsers")
    assert passed


# ---------------------------------------------------------------------------
# 13. composition error bound for a contractive library


def test_c13_composition_bound():
    rng = np.random.default_rng(13)
    lib = mn.make_library(2, 3, 1.0, 0.9, rng)
    fitted = mn.fit_library(lib, 400, 0.02, "uniform", core.TrainConfig(
        learning_rate=0.15, max_iters=2000, grad_tol=1e-8), seed=14)
    parser_true = mn.random_parser(4, 3, rng)
    alpha = 0.005
    ok = True
    details = []
    for T in (2, 4, 8):
        chain = mn.random_chain(4, T, rng)
        shifted = mn.shifted_chain(chain, alpha, rng)
        spec = mn.ShiftSpec(chain, shifted, alpha)
        words = []
        word_rng = np.random.default_rng(130 + T)
        for _ in range(200):
            w = mn.sample_word(spec.base, word_rng)
            js = mn.parse(parser_true, w)
            j_prev = mn.START_STATE
            for z, j in zip(w, js):
                words.append((int(j_prev), int(z), int(j)))
                j_prev = int(j)
        parser_hat = mn.train_parser(words, alphabet_size=4, k=3)
        rep = mn.composition_error_experiment(lib, fitted, parser_true, parser_hat,
                                              spec, n_mc=1000, seed=1300 + T)
        ok = ok and rep["holds"]
        details.append(f"T={T}: freq {rep['freq_within']:.3f} >= {rep['target'] - rep['band']:.3f}")
    report("13 composition-bound", ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------------------
# 14. determinism of every command


def _tiny_scenarios():
    identify_sc = harness.default_scenario("identify")
    identify_sc.update({"d": 2, "k": 3, "n_grid": [300], "n_eval": 200,
                        "train": {"learning_rate": 0.3, "max_iters": 600, "grad_tol": 1e-7}})
    bandit_sc = harness.default_scenario("bandit")
    bandit_sc.update({"T": 400, "train": {"learning_rate": 0.2, "max_iters": 600, "grad_tol": 1e-7}})
    transfer_sc = harness.default_scenario("transfer")
    transfer_sc.update({"d": 4, "k": 5, "n_p": 1200, "n_g": 12,
                        "train": {"learning_rate": 0.2, "max_iters": 800, "grad_tol": 1e-7}})
    modules_sc = harness.default_scenario("modules")
    modules_sc.update({"n_mc": 60, "n_train": 150, "n_parser_words": 60,
                       "train": {"learning_rate": 0.15, "max_iters": 500, "grad_tol": 1e-6}})
    sweep_sc = {"axis": "n", "grid": [200, 300, 450], "base": identify_sc}
    verify_sc = {"scale": 0.15}
    return {
        "identify": identify_sc, "bandit": bandit_sc, "transfer": transfer_sc,
        "modules": modules_sc, "verify": verify_sc, "sweep": sweep_sc,
    }


def _data_files(out_dir):
    files = {}
    for path in sorted(out_dir.glob("*")):
        if path.suffix in (".csv", ".json"):
            files[path.name] = path.read_bytes()
        elif path.name == "runs.jsonl":
            payloads = []
            for line in path.read_text().strip().splitlines():
                rec = json.loads(line)
                rec.pop("wall_time_ms")
                payloads.append(rec)
            files[path.name] = json.dumps(payloads, sort_keys=True)
    return files


def test_c14_determinism(tmp_path):
    mismatches = []
    for command, scenario in _tiny_scenarios().items():
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{command}_{tag}"
            cfg = harness.ExperimentConfig(command, scenario, (0, 1) if command != "sweep" else (0,), out)
            harness.run(cfg)
            dirs.append(out)
        if _data_files(dirs[0]) != _data_files(dirs[1]):
            mismatches.append(command)
    passed = not mismatches
    report("14 determinism", passed,
           "all commands byte-identical" if passed else f"mismatches: {mismatches}")
    assert passed
