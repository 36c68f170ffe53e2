"""Quadratic neural network model, loss, trainer, and synthetic data.

The model is a one-hidden-layer net with squared activations and unit output
weights: net(x) = sum_j <theta_j, x>^2, equivalently the quadratic form
x^T (theta theta^T) x. The induced d x d PSD matrix theta theta^T is the
identifiable object; all constants used by the bound machinery
(curvature alpha, Lipschitz constant, output-gap bound) live on it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, RejectedInput

DIVERGENCE_THRESHOLD = 1e12

NOISE_KINDS = ("zero", "uniform", "truncated_gaussian")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class QuadNet:
    """Parameter matrix theta (d rows, k columns) of a quadratic net."""

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] < 1:
            raise RejectedInput(f"theta must be a d x k matrix with d,k >= 1, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise RejectedInput("theta contains non-finite entries")
        object.__setattr__(self, "theta", _frozen(t))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def k(self) -> int:
        return self.theta.shape[1]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    def content_id(self) -> str:
        return hashlib.sha1(self.theta.tobytes()).hexdigest()[:12]


@dataclass(frozen=True)
class InducedForm:
    """Symmetric PSD matrix phi = theta theta^T; the identifiable object."""

    phi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.phi, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise RejectedInput(f"phi must be square, got shape {p.shape}")
        if not np.array_equal(p, p.T):
            p = (p + p.T) / 2.0
        object.__setattr__(self, "phi", _frozen(p))

    @property
    def d(self) -> int:
        return self.phi.shape[0]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.phi))


@dataclass(frozen=True)
class BoundSpec:
    """Boundedness constants: ||x|| <= x_max, ||theta||_F <= theta_max, |noise| <= xi_max."""

    x_max: float
    theta_max: float
    phi_max: float
    xi_max: float = 0.0

    def __post_init__(self):
        if min(self.x_max, self.theta_max, self.phi_max) <= 0.0 or self.xi_max < 0.0:
            raise RejectedInput("x_max, theta_max, phi_max must be positive and xi_max >= 0")
        if self.phi_max > self.theta_max**2 * (1.0 + 1e-12):
            raise RejectedInput("phi_max must not exceed theta_max^2")


def lipschitz_constant(b: BoundSpec) -> float:
    """Lipschitz constant of the squared loss term in phi: 4 * phi_max * x_max^4."""
    return 4.0 * b.phi_max * b.x_max**4


def function_gap_bound(b: BoundSpec) -> float:
    """Upper bound on |f1(x) - f2(x)| over the domain: 2 * x_max^2 * phi_max."""
    return 2.0 * b.x_max**2 * b.phi_max


@dataclass(frozen=True)
class CovariateSampler:
    """Covariate distribution: i.i.d.-coordinate boxes, the unit sphere, or point atoms.

    kinds:
      uniform_cube    coordinates i.i.d. Uniform[-half_width, half_width]
      uniform_scaled  coordinates i.i.d. Uniform[-1/sqrt(d), 1/sqrt(d)]
      unit_sphere     uniform on the unit sphere
      custom_mixture  discrete mixture over fixed atoms
    """

    kind: str
    d: int
    half_width: float | None = None
    atoms: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise RejectedInput("d must be >= 1")
        if self.kind in ("uniform_cube", "uniform_scaled"):
            hw = self.half_width if self.kind == "uniform_cube" else 1.0 / math.sqrt(self.d)
            if hw is None or hw <= 0:
                raise RejectedInput("uniform_cube needs a positive half_width")
            object.__setattr__(self, "half_width", float(hw))
        elif self.kind == "unit_sphere":
            pass
        elif self.kind == "custom_mixture":
            atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
            if atoms.shape[1] != self.d:
                raise RejectedInput(f"atoms must have {self.d} columns, got {atoms.shape}")
            if self.weights is None:
                weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
            else:
                weights = np.asarray(self.weights, dtype=float)
                if weights.shape != (atoms.shape[0],) or np.any(weights < 0):
                    raise RejectedInput("weights must be nonnegative, one per atom")
                weights = weights / weights.sum()
            object.__setattr__(self, "atoms", _frozen(atoms))
            object.__setattr__(self, "weights", _frozen(weights))
        else:
            raise RejectedInput(f"unknown sampler kind {self.kind!r}")

    @classmethod
    def uniform_cube(cls, d: int, half_width: float = 0.5) -> "CovariateSampler":
        return cls("uniform_cube", d, half_width=half_width)

    @classmethod
    def uniform_scaled(cls, d: int) -> "CovariateSampler":
        return cls("uniform_scaled", d)

    @classmethod
    def unit_sphere(cls, d: int) -> "CovariateSampler":
        return cls("unit_sphere", d)

    @classmethod
    def point_mass(cls, x: np.ndarray) -> "CovariateSampler":
        x = np.asarray(x, dtype=float)
        return cls("custom_mixture", x.size, atoms=x.reshape(1, -1))

    @property
    def x_max(self) -> float:
        """Radius of the smallest origin-centered ball containing the support."""
        if self.kind in ("uniform_cube", "uniform_scaled"):
            return float(self.half_width * math.sqrt(self.d))
        if self.kind == "unit_sphere":
            return 1.0
        return float(np.max(np.linalg.norm(self.atoms, axis=1)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise RejectedInput("n must be >= 1")
        if self.kind in ("uniform_cube", "uniform_scaled"):
            return rng.uniform(-self.half_width, self.half_width, size=(n, self.d))
        if self.kind == "unit_sphere":
            g = rng.standard_normal(size=(n, self.d))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        idx = rng.choice(self.atoms.shape[0], size=n, p=self.weights)
        return self.atoms[idx].copy()

    def coordinate_moments(self) -> tuple[float, float]:
        """(E[x_i^2], E[x_i^4]) for the i.i.d.-coordinate kinds."""
        if self.kind not in ("uniform_cube", "uniform_scaled"):
            raise RejectedInput(f"no coordinate moments for kind {self.kind!r}")
        hw = self.half_width
        return hw**2 / 3.0, hw**4 / 5.0

    def describe(self) -> str:
        if self.kind == "uniform_cube":
            return f"uniform_cube(d={self.d},h={self.half_width:g})"
        if self.kind == "uniform_scaled":
            return f"uniform_scaled(d={self.d})"
        if self.kind == "unit_sphere":
            return f"unit_sphere(d={self.d})"
        return f"custom_mixture(d={self.d},atoms={self.atoms.shape[0]})"


@dataclass(frozen=True)
class Dataset:
    """Regression sample (X, y) with a record of how it was generated."""

    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise RejectedInput(f"incompatible shapes X {X.shape}, y {y.shape}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_iters: int = 5000
    grad_tol: float = 1e-8
    init_scale: float | None = None  # None -> 0.5/sqrt(k)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_iters < 1 or self.grad_tol <= 0:
            raise RejectedInput("learning_rate, max_iters, grad_tol must be positive")
        if self.init_scale is not None and self.init_scale <= 0:
            raise RejectedInput("init_scale must be positive")


@dataclass(frozen=True)
class TrainResult:
    net: QuadNet
    converged: bool
    iterations: int
    final_loss: float
    grad_norm: float


# ---------------------------------------------------------------------------
# model evaluation


def forward(net: QuadNet, x: np.ndarray) -> float:
    """Evaluate sum_j <theta_j, x>^2 at a single input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d,):
        raise RejectedInput(f"x must have shape ({net.d},), got {x.shape}")
    p = x @ net.theta
    return float(p @ p)


def forward_batch(net: QuadNet, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.d:
        raise RejectedInput(f"X must be n x {net.d}, got {X.shape}")
    p = X @ net.theta
    return np.einsum("ij,ij->i", p, p)


def induced(net: QuadNet) -> InducedForm:
    """Map a net to its induced form theta theta^T (symmetrized exactly)."""
    p = net.theta @ net.theta.T
    return InducedForm((p + p.T) / 2.0)


def induced_of(obj: "QuadNet | InducedForm") -> InducedForm:
    if isinstance(obj, QuadNet):
        return induced(obj)
    if isinstance(obj, InducedForm):
        return obj
    raise RejectedInput(f"expected QuadNet or InducedForm, got {type(obj).__name__}")


def empirical_loss(net: QuadNet, data: Dataset) -> float:
    """Mean squared error of the net on the dataset."""
    if data.n < 1:
        raise RejectedInput("dataset is empty")
    r = forward_batch(net, data.X) - data.y
    return float(np.mean(r * r))


def gradient(net: QuadNet, data: Dataset) -> np.ndarray:
    """Analytic gradient of the empirical loss: (4/n) sum_i r_i x_i x_i^T theta."""
    if data.n < 1:
        raise RejectedInput("dataset is empty")
    p = data.X @ net.theta
    r = np.einsum("ij,ij->i", p, p) - data.y
    return (4.0 / data.n) * (data.X.T @ (r[:, None] * p))


def population_loss_mc(
    net: QuadNet,
    truth: QuadNet,
    sampler: CovariateSampler,
    n_mc: int,
    seed: int,
) -> float:
    """Monte-Carlo estimate of E[(net(x) - truth(x))^2] under the sampler."""
    if n_mc < 1:
        raise RejectedInput("n_mc must be >= 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    remaining = n_mc
    # chunked so n_mc = 1e7 does not allocate a giant matrix
    while remaining > 0:
        chunk = min(remaining, 1_000_000)
        X = sampler.sample(chunk, rng)
        diff = forward_batch(net, X) - forward_batch(truth, X)
        total += float(np.sum(diff * diff))
        remaining -= chunk
    return total / n_mc


def quadratic_form_second_moment(
    sampler: CovariateSampler, delta: np.ndarray, n_mc: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo estimate of E[(x^T Delta x)^2] for a fixed symmetric Delta."""
    X = sampler.sample(n_mc, rng)
    q = np.einsum("ni,ij,nj->n", X, delta, X)
    return float(np.mean(q * q))


def quadratic_form_second_moment_exact(sampler: CovariateSampler, delta: np.ndarray) -> float:
    """Closed-form E[(x^T Delta x)^2] for i.i.d.-coordinate or atom samplers."""
    delta = np.asarray(delta, dtype=float)
    if sampler.kind == "custom_mixture":
        q = np.einsum("ni,ij,nj->n", sampler.atoms, delta, sampler.atoms)
        return float(np.sum(sampler.weights * q * q))
    m2, m4 = sampler.coordinate_moments()
    diag = np.diag(delta)
    diag_sq = float(np.sum(diag * diag))
    trace = float(np.sum(diag))
    off_sq = float(np.sum(delta * delta)) - diag_sq
    return (m4 - m2 * m2) * diag_sq + m2 * m2 * trace * trace + 2.0 * m2 * m2 * off_sq


def population_loss_exact(net: QuadNet, truth: QuadNet, sampler: CovariateSampler) -> float:
    """Exact population loss E[(net(x) - truth(x))^2] where a closed form exists."""
    delta = induced(net).phi - induced(truth).phi
    return quadratic_form_second_moment_exact(sampler, delta)


# ---------------------------------------------------------------------------
# curvature constant alpha (strong convexity of the loss in phi)


def exact_alpha(sampler: CovariateSampler) -> float:
    """Exact min over symmetric unit-Frobenius Delta of E[(x^T Delta x)^2].

    For an i.i.d.-coordinate sampler the moment expansion gives
    min(m4 - m2^2, 2 m2^2); the minimum is attained at a traceless diagonal
    direction when m4 - m2^2 <= 2 m2^2.
    """
    m2, m4 = sampler.coordinate_moments()
    return min(m4 - m2 * m2, 2.0 * m2 * m2)


def nominal_alpha(sampler: CovariateSampler) -> float:
    """Stated closed-form curvature constants for the two standard samplers.

    uniform cube with half-width 1/2 -> 1/180; scaled uniform -> d^(-2/5)/15.
    The scaled-family nominal constant overshoots the exact minimum
    (traceless diagonal directions); see exact_alpha for the true value.
    """
    if sampler.kind == "uniform_cube" and abs(sampler.half_width - 0.5) < 1e-12:
        return 1.0 / 180.0
    if sampler.kind == "uniform_scaled":
        return sampler.d ** (-0.4) / 15.0
    raise RejectedInput(f"no stated constant for sampler {sampler.describe()}")


def estimate_alpha(
    sampler: CovariateSampler, n_mc: int, n_directions: int, seed: int
) -> float:
    """Estimate the curvature constant by minimizing the Monte-Carlo second
    moment of x^T Delta x over random unit-Frobenius symmetric directions.

    The result upper-bounds the true constant (min over a finite direction set).
    """
    if n_mc < 1 or n_directions < 1:
        raise RejectedInput("n_mc and n_directions must be >= 1")
    rng = np.random.default_rng(seed)
    X = sampler.sample(n_mc, rng)
    best = math.inf
    for _ in range(n_directions):
        g = rng.standard_normal((sampler.d, sampler.d))
        delta = (g + g.T) / 2.0
        delta /= np.linalg.norm(delta)
        q = np.einsum("ni,ij,nj->n", X, delta, X)
        best = min(best, float(np.mean(q * q)))
    return best


# ---------------------------------------------------------------------------
# data generation and training


def generate_dataset(
    truth: QuadNet,
    sampler: CovariateSampler,
    xi_max: float,
    noise_kind: str,
    n: int,
    seed: int,
) -> Dataset:
    """Draw n i.i.d. samples y = truth(x) + noise with |noise| <= xi_max."""
    if n < 1:
        raise RejectedInput("n must be >= 1")
    if xi_max < 0:
        raise RejectedInput("xi_max must be >= 0")
    if noise_kind not in NOISE_KINDS:
        raise RejectedInput(f"noise_kind must be one of {NOISE_KINDS}")
    if sampler.d != truth.d:
        raise RejectedInput("sampler and truth dimensions differ")
    rng = np.random.default_rng(seed)
    X = sampler.sample(n, rng)
    y = forward_batch(truth, X)
    if xi_max > 0 and noise_kind != "zero":
        if noise_kind == "uniform":
            y = y + rng.uniform(-xi_max, xi_max, size=n)
        else:
            xi = rng.normal(0.0, xi_max / 2.0, size=n)
            bad = np.abs(xi) > xi_max
            while np.any(bad):
                xi[bad] = rng.normal(0.0, xi_max / 2.0, size=int(bad.sum()))
                bad = np.abs(xi) > xi_max
            y = y + xi
    provenance = {
        "truth_id": truth.content_id(),
        "sampler_id": sampler.describe(),
        "noise_id": f"{noise_kind}(xi_max={xi_max:g})",
        "seed": int(seed),
    }
    return Dataset(X, y, provenance)


def train_gd(
    data: Dataset,
    d: int,
    k: int,
    cfg: TrainConfig,
    theta_max: float | None = None,
) -> TrainResult:
    """Fit a quadratic net by full-batch gradient descent with a constant step.

    Initialization is i.i.d. uniform in [-s, s] with s = init_scale (default
    0.5/sqrt(k)); exact zero init is a stationary point and is avoided. When
    theta_max is given, theta is rescaled onto the Frobenius ball after every
    step. Raises Diverged if the loss exceeds the divergence threshold.
    """
    if data.n < 1:
        raise RejectedInput("dataset is empty")
    if data.d != d:
        raise RejectedInput(f"dataset dimension {data.d} does not match d={d}")
    if k < 1:
        raise RejectedInput("k must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    scale = cfg.init_scale if cfg.init_scale is not None else 0.5 / math.sqrt(k)
    theta = rng.uniform(-scale, scale, size=(d, k))
    if theta_max is not None and np.linalg.norm(theta) > theta_max:
        theta *= theta_max / np.linalg.norm(theta)

    X, y = data.X, data.y
    n = data.n
    grad_norm = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        p = X @ theta
        r = np.einsum("ij,ij->i", p, p) - y
        loss = float(np.mean(r * r))
        if not math.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
            raise Diverged(it, loss)
        g = (4.0 / n) * (X.T @ (r[:, None] * p))
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= cfg.grad_tol:
            break
        theta = theta - cfg.learning_rate * g
        if theta_max is not None:
            nrm = np.linalg.norm(theta)
            if nrm > theta_max:
                theta *= theta_max / nrm
    net = QuadNet(theta)
    return TrainResult(
        net=net,
        converged=grad_norm <= cfg.grad_tol,
        iterations=it,
        final_loss=empirical_loss(net, data),
        grad_norm=grad_norm,
    )


# ---------------------------------------------------------------------------
# serialization


def net_to_json(net: QuadNet) -> str:
    return json.dumps(
        {"d": net.d, "k": net.k, "theta": [float(v) for v in net.theta.ravel()]},
        sort_keys=True,
    )


def net_from_json(text: str) -> QuadNet:
    obj = json.loads(text)
    theta = np.asarray(obj["theta"], dtype=float).reshape(obj["d"], obj["k"])
    return QuadNet(theta)


def dataset_to_jsonl(data: Dataset) -> str:
    lines = [json.dumps({"provenance": data.provenance, "n": data.n, "d": data.d}, sort_keys=True)]
    for i in range(data.n):
        lines.append(
            json.dumps({"x": [float(v) for v in data.X[i]], "y": float(data.y[i])})
        )
    return "\n".join(lines) + "\n"


def dataset_from_jsonl(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise RejectedInput("empty dataset file")
    header = json.loads(lines[0])
    rows = [json.loads(ln) for ln in lines[1:]]
    if len(rows) != header.get("n"):
        raise RejectedInput("dataset row count does not match header")
    X = np.array([r["x"] for r in rows], dtype=float)
    y = np.array([r["y"] for r in rows], dtype=float)
    return Dataset(X, y, header.get("provenance", {}))


def random_net(d: int, k: int, rng: np.random.Generator, frobenius_norm: float | None = None) -> QuadNet:
    """Gaussian net, optionally rescaled to an exact Frobenius norm."""
    theta = rng.standard_normal((d, k))
    if frobenius_norm is not None:
        theta *= frobenius_norm / np.linalg.norm(theta)
    return QuadNet(theta)
