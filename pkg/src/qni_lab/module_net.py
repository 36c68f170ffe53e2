"""Compositional module network: quadratic modules sequenced by a tabular parser.

A word (token sequence) drives a deterministic parser over (token, previous
module) pairs; the selected modules, each a vector of per-coordinate quadratic
nets, are composed left to right on the input. Tokens follow a Markov chain;
a shifted chain with per-row total-variation budget alpha models composition
shift. All distribution computations on this discrete space are exact dynamic
programs (or brute-force enumerations for the oracles), and the TV convention
is the unnormalized sum of absolute differences (maximum 2).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import qnn_core as core
from .errors import RejectedInput
from .linalg import eigh_jacobi

START_STATE = 0  # parser state before any token is read; modules are 1..k


@dataclass(frozen=True)
class Parser:
    """Lookup table (token, previous module) -> module in 1..k.

    Column index is the previous state in 0..k, with 0 the start state.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=int)
        if t.ndim != 2 or t.shape[1] < 2:
            raise RejectedInput(f"table must be |Z| x (k+1), got {t.shape}")
        k = t.shape[1] - 1
        if np.any(t < 1) or np.any(t > k):
            raise RejectedInput("table entries must be module indices in 1..k")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def alphabet_size(self) -> int:
        return self.table.shape[0]

    @property
    def k(self) -> int:
        return self.table.shape[1] - 1


@dataclass(frozen=True)
class TokenChain:
    """Markov chain over tokens: first token from `initial`, then row-wise transitions."""

    initial: np.ndarray
    transition: np.ndarray
    T: int

    def __post_init__(self):
        init = np.asarray(self.initial, dtype=float)
        trans = np.asarray(self.transition, dtype=float)
        if init.ndim != 1 or trans.shape != (init.size, init.size):
            raise RejectedInput(f"incompatible shapes initial {init.shape}, transition {trans.shape}")
        if self.T < 0:
            raise RejectedInput("T must be >= 0")
        if np.any(init < -1e-15) or np.any(trans < -1e-15):
            raise RejectedInput("probabilities must be nonnegative")
        if abs(init.sum() - 1.0) > 1e-12 or np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-12):
            raise RejectedInput("rows must sum to 1 within 1e-12")
        init = init.copy(); init.setflags(write=False)
        trans = trans.copy(); trans.setflags(write=False)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transition", trans)

    @property
    def alphabet_size(self) -> int:
        return self.initial.size


@dataclass(frozen=True)
class ShiftSpec:
    """Base and shifted chains whose corresponding rows differ by at most
    alpha_shift in (sum-of-absolute-differences) total variation."""

    base: TokenChain
    shifted: TokenChain
    alpha_shift: float

    def __post_init__(self):
        if self.base.alphabet_size != self.shifted.alphabet_size or self.base.T != self.shifted.T:
            raise RejectedInput("base and shifted chains must share alphabet and length")
        if not (0.0 <= self.alpha_shift <= 2.0):
            raise RejectedInput("alpha_shift must lie in [0, 2]")
        tol = 1e-12
        if tv_distance(self.base.initial, self.shifted.initial) > self.alpha_shift + tol:
            raise RejectedInput("initial distributions differ by more than alpha_shift")
        for z in range(self.base.alphabet_size):
            if tv_distance(self.base.transition[z], self.shifted.transition[z]) > self.alpha_shift + tol:
                raise RejectedInput(f"transition row {z} differs by more than alpha_shift")


@dataclass(frozen=True)
class ModuleLibrary:
    """k vector-valued modules on the ball of radius x_max; module j maps
    x to (net_{j,1}(x), ..., net_{j,d}(x)) with one quadratic net per coordinate."""

    modules: tuple
    x_max: float
    k_module: float | None = None  # configured Lipschitz bound on the domain
    eps_f: float | None = None  # uniform sup error vs a reference library, if known

    def __post_init__(self):
        mods = tuple(tuple(coord for coord in m) for m in self.modules)
        if not mods:
            raise RejectedInput("need at least one module")
        d = mods[0][0].d
        for m in mods:
            if len(m) != d or any(net.d != d for net in m):
                raise RejectedInput("every module must have d coordinate nets of input dim d")
        if self.x_max <= 0:
            raise RejectedInput("x_max must be positive")
        object.__setattr__(self, "modules", mods)

    @property
    def k(self) -> int:
        return len(self.modules)

    @property
    def d(self) -> int:
        return self.modules[0][0].d

    def apply(self, j: int, x: np.ndarray) -> np.ndarray:
        """Evaluate module j (1-indexed) at x."""
        if not (1 <= j <= self.k):
            raise RejectedInput(f"module index {j} outside 1..{self.k}")
        return np.array([core.forward(net, x) for net in self.modules[j - 1]])

    def lipschitz_bound(self) -> float:
        """Analytic Lipschitz bound on the ball: max_j 2 x_max sqrt(sum_c rho_c^2)."""
        worst = 0.0
        for m in self.modules:
            agg = 0.0
            for net in m:
                w, _ = eigh_jacobi(core.induced(net).phi)
                agg += float(w[0]) ** 2
            worst = max(worst, 2.0 * self.x_max * math.sqrt(agg))
        return worst

    def measured_lipschitz(self, n_pairs: int, rng: np.random.Generator) -> float:
        """Max difference quotient over random pairs in the ball (a lower estimate)."""
        best = 0.0
        for _ in range(n_pairs):
            x = _uniform_ball(self.d, self.x_max, rng)
            y = _uniform_ball(self.d, self.x_max, rng)
            denom = float(np.linalg.norm(x - y))
            if denom < 1e-12:
                continue
            for j in range(1, self.k + 1):
                num = float(np.linalg.norm(self.apply(j, x) - self.apply(j, y)))
                best = max(best, num / denom)
        return best


def _uniform_ball(d: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(d)
    g /= np.linalg.norm(g)
    return radius * rng.uniform() ** (1.0 / d) * g


# ---------------------------------------------------------------------------
# parsing and composition


def parse(parser: Parser, word: np.ndarray) -> np.ndarray:
    """Module sequence j_1..j_T from a left-to-right fold starting at the start state."""
    word = np.asarray(word, dtype=int)
    if word.ndim != 1:
        raise RejectedInput("word must be a 1-d token sequence")
    if word.size and (word.min() < 0 or word.max() >= parser.alphabet_size):
        raise RejectedInput("word contains tokens outside the alphabet")
    out = np.empty(word.size, dtype=int)
    j = START_STATE
    for t, z in enumerate(word):
        j = int(parser.table[z, j])
        out[t] = j
    return out


def compose(
    library: ModuleLibrary, parser: Parser, x: np.ndarray, word: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the parsed module sequence on x; returns (output, trace x_0..x_T)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (library.d,):
        raise RejectedInput(f"x must have shape ({library.d},), got {x.shape}")
    js = parse(parser, word)
    trace = [x]
    cur = x
    for j in js:
        cur = library.apply(int(j), cur)
        trace.append(cur)
    return cur, trace


def sample_word(chain: TokenChain, rng: np.random.Generator) -> np.ndarray:
    """Token sequence of length chain.T; reproducible from the generator state."""
    out = np.empty(chain.T, dtype=int)
    if chain.T == 0:
        return out
    z = int(rng.choice(chain.alphabet_size, p=chain.initial))
    out[0] = z
    for t in range(1, chain.T):
        z = int(rng.choice(chain.alphabet_size, p=chain.transition[z]))
        out[t] = z
    return out


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of absolute differences between two distributions (range [0, 2])."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise RejectedInput(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))


# ---------------------------------------------------------------------------
# worst-case sequence-level shift


def worst_case_shift(alpha_shift: float, T: int) -> tuple[ShiftSpec, float]:
    """Binary absorbing construction whose sequence-level TV is exactly
    2 (1 - (1 - alpha/2)^T) while every row shift stays within alpha.

    The base chain is frozen at token 0; the shifted chain leaks alpha/2 per
    step into the absorbing token 1.
    """
    if not (0.0 < alpha_shift <= 2.0):
        raise RejectedInput("alpha_shift must lie in (0, 2]")
    if T < 1:
        raise RejectedInput("T must be >= 1")
    a = alpha_shift
    base = TokenChain(
        initial=np.array([1.0, 0.0]),
        transition=np.array([[1.0, 0.0], [0.0, 1.0]]),
        T=T,
    )
    shifted = TokenChain(
        initial=np.array([1.0 - a / 2.0, a / 2.0]),
        transition=np.array([[1.0 - a / 2.0, a / 2.0], [0.0, 1.0]]),
        T=T,
    )
    exact_tv = 2.0 * (1.0 - (1.0 - a / 2.0) ** T)
    return ShiftSpec(base=base, shifted=shifted, alpha_shift=a), exact_tv


def enumerate_word_distribution(chain: TokenChain) -> tuple[list[tuple], np.ndarray]:
    """All |Z|^T words with their probabilities (brute-force oracle; small T only)."""
    words = list(itertools.product(range(chain.alphabet_size), repeat=chain.T))
    probs = np.empty(len(words))
    for i, w in enumerate(words):
        p = chain.initial[w[0]] if chain.T else 1.0
        for t in range(1, chain.T):
            p *= chain.transition[w[t - 1], w[t]]
        probs[i] = p
    return words, probs


def sequence_tv_bruteforce(spec: ShiftSpec) -> float:
    """Exact sequence-level TV by full enumeration."""
    _, p = enumerate_word_distribution(spec.base)
    _, q = enumerate_word_distribution(spec.shifted)
    return float(np.sum(np.abs(p - q)))


# ---------------------------------------------------------------------------
# exact mixtures over (token, previous module)


def mixture_distribution(chain: TokenChain, parser_true: Parser, t: int) -> np.ndarray:
    """Step-t distribution over (z_t, j_{t-1}) as a |Z| x (k+1) array.

    Row z, column j holds P[z_t = z, j_{t-1} = j]; column 0 (the start state)
    carries mass only at t = 1.
    """
    if not (1 <= t <= chain.T):
        raise RejectedInput(f"t must lie in 1..{chain.T}")
    return mixture_distributions(chain, parser_true)[0][t - 1]


def mixture_distributions(chain: TokenChain, parser_true: Parser):
    """All step mixtures p_1..p_T plus their average, by exact dynamic programming."""
    nz, k = chain.alphabet_size, parser_true.k
    if parser_true.alphabet_size != nz:
        raise RejectedInput("parser and chain alphabets differ")
    steps = []
    cur = np.zeros((nz, k + 1))
    cur[:, START_STATE] = chain.initial
    steps.append(cur)
    for _ in range(2, chain.T + 1):
        nxt = np.zeros((nz, k + 1))
        for z_prev in range(nz):
            for j_prev in range(k + 1):
                mass = cur[z_prev, j_prev]
                if mass == 0.0:
                    continue
                j = int(parser_true.table[z_prev, j_prev])
                nxt[:, j] += chain.transition[z_prev] * mass
        steps.append(nxt)
        cur = nxt
    avg = np.mean(steps, axis=0)
    return steps, avg


def mixture_bruteforce(chain: TokenChain, parser_true: Parser, t: int) -> np.ndarray:
    """Prefix-enumeration oracle for the step-t mixture (small |Z|^t only)."""
    nz, k = chain.alphabet_size, parser_true.k
    out = np.zeros((nz, k + 1))
    for prefix in itertools.product(range(nz), repeat=t):
        p = chain.initial[prefix[0]]
        for s in range(1, t):
            p *= chain.transition[prefix[s - 1], prefix[s]]
        if p == 0.0:
            continue
        j = START_STATE
        for z in prefix[:-1]:
            j = int(parser_true.table[z, j])
        out[prefix[-1], j] += p
    return out


def mixture_shift_check(spec: ShiftSpec, parser_true: Parser) -> dict:
    """Verify the linear compounding of mixture shift: TV_t <= t alpha for each
    step and averaged TV <= T alpha; returns the measured sequence."""
    steps_p, avg_p = mixture_distributions(spec.base, parser_true)
    steps_q, avg_q = mixture_distributions(spec.shifted, parser_true)
    per_step = [tv_distance(p, q) for p, q in zip(steps_p, steps_q)]
    tol = 1e-12
    per_step_ok = all(
        tv <= (t + 1) * spec.alpha_shift + tol for t, tv in enumerate(per_step)
    )
    avg_tv = tv_distance(avg_p, avg_q)
    T = spec.base.T
    return {
        "per_step_tv": per_step,
        "per_step_ok": bool(per_step_ok),
        "avg_tv": float(avg_tv),
        "avg_bound": float(T * spec.alpha_shift),
        "holds": bool(per_step_ok and avg_tv <= T * spec.alpha_shift + tol),
    }


# ---------------------------------------------------------------------------
# parser training and error accounting


def train_parser(
    examples: list[tuple[int, int, int]],
    alphabet_size: int | None = None,
    k: int | None = None,
) -> Parser:
    """Tabular majority vote per (token, previous module) cell.

    examples are (j_prev, z, j_next) triples. Unseen cells map to module 1;
    vote ties break toward the smaller module index.
    """
    if not examples:
        raise RejectedInput("need at least one labeled example")
    if alphabet_size is None:
        alphabet_size = max(z for _, z, _ in examples) + 1
    if k is None:
        k = max(max(j for j, _, _ in examples), max(j for _, _, j in examples))
    counts = np.zeros((alphabet_size, k + 1, k + 1), dtype=int)
    for j_prev, z, j_next in examples:
        if not (0 <= j_prev <= k and 0 <= z < alphabet_size and 1 <= j_next <= k):
            raise RejectedInput(f"example ({j_prev}, {z}, {j_next}) outside the domain")
        counts[z, j_prev, j_next] += 1
    table = np.ones((alphabet_size, k + 1), dtype=int)
    for z in range(alphabet_size):
        for j_prev in range(k + 1):
            cell = counts[z, j_prev]
            if cell.sum() > 0:
                table[z, j_prev] = int(np.argmax(cell))
    return Parser(table)


def parser_disagreement(parser_hat: Parser, parser_true: Parser, mixture: np.ndarray) -> float:
    """Probability mass of (z, j) cells where the two parsers disagree."""
    if parser_hat.table.shape != parser_true.table.shape:
        raise RejectedInput("parsers must share table shape")
    differs = parser_hat.table != parser_true.table
    return float(np.sum(mixture[differs]))


def sequence_error_check(
    parser_hat: Parser,
    parser_true: Parser,
    chain: TokenChain,
    n_mc: int,
    seed: int,
    enumerate_limit: int = 300_000,
) -> dict:
    """Check P[parse_hat(w) != parse_true(w)] <= T * eps_g with eps_g the exact
    per-step disagreement under the averaged mixture.

    The sequence error is exact (full enumeration) when |Z|^T is small,
    otherwise Monte-Carlo over n_mc words.
    """
    _, avg = mixture_distributions(chain, parser_true)
    eps_g = parser_disagreement(parser_hat, parser_true, avg)
    T = chain.T
    n_words = chain.alphabet_size**T
    if n_words <= enumerate_limit:
        words, probs = enumerate_word_distribution(chain)
        err = 0.0
        for w, p in zip(words, probs):
            if p == 0.0:
                continue
            w = np.array(w, dtype=int)
            if not np.array_equal(parse(parser_hat, w), parse(parser_true, w)):
                err += p
        exact = True
    else:
        rng = np.random.default_rng(seed)
        bad = 0
        for _ in range(n_mc):
            w = sample_word(chain, rng)
            if not np.array_equal(parse(parser_hat, w), parse(parser_true, w)):
                bad += 1
        err = bad / n_mc
        exact = False
    tol = 1e-12 if exact else 3.0 * math.sqrt(0.25 / n_mc)
    return {
        "eps_g": float(eps_g),
        "sequence_error": float(err),
        "bound": float(T * eps_g),
        "exact": exact,
        "holds": bool(err <= T * eps_g + tol),
    }


# ---------------------------------------------------------------------------
# module estimation error and the composition experiment


def module_sup_error(fitted: ModuleLibrary, true: ModuleLibrary) -> tuple[float, list[float]]:
    """Uniform bound on ||fitted_j(x) - true_j(x)|| over the ball, per module.

    Aggregates exact per-coordinate sup gaps (spectral) in an l2 sense, which
    upper-bounds the vector-valued sup.
    """
    if fitted.k != true.k or fitted.d != true.d:
        raise RejectedInput("libraries must share k and d")
    x_max = true.x_max
    per_module = []
    for j in range(true.k):
        agg = 0.0
        for c in range(true.d):
            delta = core.induced(fitted.modules[j][c]).phi - core.induced(true.modules[j][c]).phi
            w, _ = eigh_jacobi(delta)
            rho = max(abs(float(w[0])), abs(float(w[-1])))
            agg += (x_max**2 * rho) ** 2
        per_module.append(math.sqrt(agg))
    return max(per_module), per_module


def module_error_bound(d: int, lipschitz: float, epsilon: float, alpha: float) -> float:
    """Certified uniform module error sqrt(2 d K^2 eps / alpha) from the
    per-coordinate identification bound and a union over coordinates."""
    if d < 1 or lipschitz <= 0 or epsilon < 0 or alpha <= 0:
        raise RejectedInput("need d >= 1, lipschitz > 0, epsilon >= 0, alpha > 0")
    return math.sqrt(2.0 * d * lipschitz**2 * epsilon / alpha)


def composition_error_experiment(
    true_library: ModuleLibrary,
    fitted_library: ModuleLibrary,
    parser_true: Parser,
    parser_hat: Parser,
    spec: ShiftSpec,
    n_mc: int,
    seed: int,
) -> dict:
    """Sample words from the shifted chain and check the end-to-end error bound.

    Verifies that the frequency of {gap <= T eps_f max(K^(T-1), 1)} is at
    least 1 - T eps_g - T^2 alpha, up to a one-sided 95% binomial band. eps_f
    is the measured uniform module error, K the larger of the configured and
    measured Lipschitz constants of the true library, and eps_g the exact
    parser disagreement under the base chain's averaged mixture.
    """
    rng = np.random.default_rng(seed)
    T = spec.base.T
    eps_f, _ = module_sup_error(fitted_library, true_library)
    configured = true_library.k_module
    if configured is None:
        configured = true_library.lipschitz_bound()
    measured = true_library.measured_lipschitz(200, rng)
    K = max(configured, measured)
    _, avg = mixture_distributions(spec.base, parser_true)
    eps_g = parser_disagreement(parser_hat, parser_true, avg)
    bound = T * eps_f * max(K ** (T - 1), 1.0)

    rows = []
    n_within = 0
    n_match = 0
    for i in range(n_mc):
        w = sample_word(spec.shifted, rng)
        x = _uniform_ball(true_library.d, true_library.x_max, rng)
        out_true, _ = compose(true_library, parser_true, x, w)
        out_hat, _ = compose(fitted_library, parser_hat, x, w)
        gap = float(np.linalg.norm(out_hat - out_true))
        match = bool(np.array_equal(parse(parser_hat, w), parse(parser_true, w)))
        within = gap <= bound + 1e-12
        n_within += within
        n_match += match
        rows.append({
            "word_id": i,
            "parse_match": int(match),
            "gap_l2": gap,
            "bound": float(bound),
            "within_bound": int(within),
        })
    freq = n_within / n_mc
    target = 1.0 - T * eps_g - T * T * spec.alpha_shift
    if target <= 0.0:
        holds = True
        band = 0.0
    else:
        band = 1.645 * math.sqrt(max(target * (1.0 - target), 1.0 / n_mc) / n_mc)
        holds = freq >= target - band
    return {
        "T": int(T),
        "n_mc": int(n_mc),
        "eps_f": float(eps_f),
        "eps_g": float(eps_g),
        "k_module": float(K),
        "alpha_shift": float(spec.alpha_shift),
        "gap_bound": float(bound),
        "freq_within": float(freq),
        "freq_parse_match": float(n_match / n_mc),
        "target": float(target),
        "band": float(band),
        "holds": bool(holds),
        "rows": rows,
    }


# ---------------------------------------------------------------------------
# synthetic constructions


def make_library(
    d: int,
    k: int,
    x_max: float,
    lipschitz_target: float,
    rng: np.random.Generator,
    width: int | None = None,
) -> ModuleLibrary:
    """Random module library rescaled so the analytic Lipschitz bound equals
    lipschitz_target exactly (contractive for targets <= 1)."""
    width = width if width is not None else d + 1
    target_agg = lipschitz_target / (2.0 * x_max)
    modules = []
    for _ in range(k):
        coords = [rng.standard_normal((d, width)) for _ in range(d)]
        agg = 0.0
        for theta in coords:
            w, _ = eigh_jacobi(theta @ theta.T)
            agg += float(w[0]) ** 2
        gamma = math.sqrt(target_agg / math.sqrt(agg))
        modules.append(tuple(core.QuadNet(gamma * theta) for theta in coords))
    return ModuleLibrary(tuple(modules), x_max=x_max, k_module=lipschitz_target)


def fit_library(
    true_library: ModuleLibrary,
    n_per_coordinate: int,
    xi_max: float,
    noise_kind: str,
    cfg: core.TrainConfig,
    seed: int,
) -> ModuleLibrary:
    """Fit every coordinate net of every module on fresh execution pairs
    (inputs drawn from the cube inscribed in the domain ball)."""
    d = true_library.d
    sampler = core.CovariateSampler.uniform_cube(d, true_library.x_max / math.sqrt(d))
    fitted = []
    s = seed
    for j in range(true_library.k):
        coords = []
        for c in range(d):
            truth = true_library.modules[j][c]
            data = core.generate_dataset(truth, sampler, xi_max, noise_kind, n_per_coordinate, s)
            res = core.train_gd(data, d, truth.k, core.TrainConfig(
                learning_rate=cfg.learning_rate, max_iters=cfg.max_iters,
                grad_tol=cfg.grad_tol, init_scale=cfg.init_scale, seed=s + 1,
            ))
            coords.append(res.net)
            s += 2
        fitted.append(tuple(coords))
    lib = ModuleLibrary(tuple(fitted), x_max=true_library.x_max)
    return lib


def random_parser(alphabet_size: int, k: int, rng: np.random.Generator) -> Parser:
    return Parser(rng.integers(1, k + 1, size=(alphabet_size, k + 1)))


def random_chain(alphabet_size: int, T: int, rng: np.random.Generator, concentration: float = 2.0) -> TokenChain:
    init = rng.dirichlet(np.full(alphabet_size, concentration))
    trans = np.stack([rng.dirichlet(np.full(alphabet_size, concentration)) for _ in range(alphabet_size)])
    return TokenChain(initial=init, transition=trans, T=T)


def shifted_chain(base: TokenChain, alpha_shift: float, rng: np.random.Generator) -> TokenChain:
    """Perturb every row (and the initial distribution) by a mean-zero vector
    with l1 mass at most alpha_shift, staying inside the simplex."""

    def perturb(row: np.ndarray) -> np.ndarray:
        v = rng.standard_normal(row.size)
        v -= v.mean()
        l1 = np.sum(np.abs(v))
        if l1 == 0.0:
            return row.copy()
        v *= alpha_shift * rng.uniform(0.5, 1.0) / l1
        out = row + v
        # pull the perturbation back toward zero until the row is a distribution
        scale = 1.0
        while np.any(out < 0.0) and scale > 1e-9:
            scale *= 0.5
            out = row + scale * v
        if np.any(out < 0.0):
            return row.copy()
        return out / out.sum()

    return TokenChain(
        initial=perturb(base.initial),
        transition=np.stack([perturb(base.transition[z]) for z in range(base.alphabet_size)]),
        T=base.T,
    )
