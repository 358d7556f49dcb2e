"""Two-agent Gaussian-mixture sign model: generative sampling, conjugate updates, Gibbs fitting.

Each agent holds a sign-to-category table theta (L x K, row-stochastic) and K
Gaussian components (mu_k, precision Lambda_k) over 3-D color observations.
A shared per-stimulus sign s_n drives each agent's category c_n, which drives
its observation x_n.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Hyperparams",
    "AgentState",
    "SufficientStats",
    "GeneratedData",
    "default_hyperparams",
    "generate",
    "posterior_theta",
    "posterior_gauss",
    "category_posterior",
    "sample_category",
    "category_given_sign",
    "sign_posterior",
    "sample_posterior_state",
    "posterior_mean_state",
    "gibbs_fit",
]

_DIM = 3


@dataclass(frozen=True)
class Hyperparams:
    """Priors: Dirichlet alpha per sign row, Normal-Wishart (beta, m, W, nu), sign prior pi."""

    alpha: np.ndarray  # (K,) Dirichlet concentrations
    beta: float  # Normal-Wishart scale
    m: np.ndarray  # (3,) prior mean
    w_inv: np.ndarray  # (3, 3) inverse of the Wishart scale matrix W
    nu: float  # Wishart degrees of freedom
    pi: np.ndarray  # (L,) sign prior

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        m = np.asarray(self.m, dtype=float)
        w_inv = np.asarray(self.w_inv, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        if alpha.ndim != 1 or np.any(alpha <= 0):
            raise ValueError("alpha must be a vector of positive concentrations")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if m.shape != (_DIM,):
            raise ValueError("m must be a 3-vector")
        if w_inv.shape != (_DIM, _DIM) or not np.allclose(w_inv, w_inv.T, atol=1e-10):
            raise ValueError("w_inv must be symmetric 3x3")
        if np.min(np.linalg.eigvalsh(w_inv)) <= 0:
            raise ValueError("w_inv must be positive-definite")
        if self.nu <= _DIM - 1:
            raise ValueError("nu must exceed dimension - 1")
        if pi.ndim != 1 or np.any(pi < 0) or not np.isclose(pi.sum(), 1.0, atol=1e-9):
            raise ValueError("pi must be a non-negative vector summing to 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "w_inv", w_inv)
        object.__setattr__(self, "pi", pi)

    @property
    def K(self) -> int:
        return len(self.alpha)

    @property
    def L(self) -> int:
        return len(self.pi)

    @property
    def w(self) -> np.ndarray:
        """Wishart scale matrix W (inverse of w_inv)."""
        return np.linalg.inv(self.w_inv)


def default_hyperparams(K: int = 5, L: int = 5) -> Hyperparams:
    """Empirical defaults: alpha=0.1, beta=1, m=(50,0,0), W^-1=diag(200), nu=5, uniform pi."""
    return Hyperparams(
        alpha=np.full(K, 0.1),
        beta=1.0,
        m=np.array([50.0, 0.0, 0.0]),
        w_inv=np.diag([200.0, 200.0, 200.0]),
        nu=5.0,
        pi=np.full(L, 1.0 / L),
    )


@dataclass(frozen=True)
class AgentState:
    """One agent's model state. Treated as an immutable value by all operations."""

    theta: np.ndarray  # (L, K) row-stochastic sign -> category table
    mu: np.ndarray  # (K, 3) component means
    lam: np.ndarray  # (K, 3, 3) component precisions
    assignments: np.ndarray  # (n,) category index per stimulus
    signs: np.ndarray  # (n,) sign index per stimulus

    @property
    def K(self) -> int:
        return self.theta.shape[1]

    @property
    def L(self) -> int:
        return self.theta.shape[0]

    def with_assignment(self, n: int, c: int) -> "AgentState":
        assignments = self.assignments.copy()
        assignments[n] = c
        return replace(self, assignments=assignments)

    def with_sign(self, n: int, s: int) -> "AgentState":
        signs = self.signs.copy()
        signs[n] = s
        return replace(self, signs=signs)

    def to_dict(self) -> dict:
        """Versioned checkpoint document."""
        return {
            "schema": 1,
            "theta": self.theta.tolist(),
            "mu": self.mu.tolist(),
            "lam": self.lam.tolist(),
            "assignments": self.assignments.tolist(),
            "signs": self.signs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentState":
        if doc.get("schema") != 1:
            raise ValueError(f"unsupported agent-state schema {doc.get('schema')!r}")
        return cls(
            theta=np.array(doc["theta"], dtype=float),
            mu=np.array(doc["mu"], dtype=float),
            lam=np.array(doc["lam"], dtype=float),
            assignments=np.array(doc["assignments"], dtype=int),
            signs=np.array(doc["signs"], dtype=int),
        )


@dataclass(frozen=True)
class SufficientStats:
    """Accumulators for the conjugate updates."""

    sign_category_counts: np.ndarray  # (L, K) int
    counts: np.ndarray  # (K,) observations per category
    sums: np.ndarray  # (K, 3) per-category observation sums
    scatters: np.ndarray  # (K, 3, 3) per-category centered scatter matrices

    @classmethod
    def from_data(
        cls,
        observations: np.ndarray,
        assignments: np.ndarray,
        signs: np.ndarray,
        K: int,
        L: int,
    ) -> "SufficientStats":
        observations = np.asarray(observations, dtype=float).reshape(-1, _DIM)
        assignments = np.asarray(assignments, dtype=int)
        signs = np.asarray(signs, dtype=int)
        if len(observations) != len(assignments) or len(assignments) != len(signs):
            raise ValueError("observations, assignments, and signs must align")
        sc = np.zeros((L, K), dtype=int)
        np.add.at(sc, (signs, assignments), 1)
        counts = np.bincount(assignments, minlength=K).astype(float)[:K]
        sums = np.zeros((K, _DIM))
        scatters = np.zeros((K, _DIM, _DIM))
        for k in range(K):
            xk = observations[assignments == k]
            if len(xk):
                sums[k] = xk.sum(axis=0)
                centered = xk - xk.mean(axis=0)
                scatters[k] = centered.T @ centered
        return cls(sc, counts, sums, scatters)


@dataclass(frozen=True)
class GeneratedData:
    """Forward samples from the full two-agent generative chain."""

    signs: np.ndarray
    agent_a: AgentState
    agent_b: AgentState
    x_a: np.ndarray
    x_b: np.ndarray


_TRIL_IDX = np.tril_indices(_DIM, k=-1)
_DIAG_IDX = np.diag_indices(_DIM)


def _wishart_factors_batch(
    rng: np.random.Generator, nus: np.ndarray, scales: np.ndarray
) -> np.ndarray:
    """Lower-triangular T_k with T_k T_k' ~ Wishart(nu_k, scale_k), Bartlett form.

    nus: (K,), scales: (K, d, d); returns (K, d, d).
    """
    K = len(nus)
    chol = np.linalg.cholesky(scales)
    a = np.zeros((K, _DIM, _DIM))
    a[:, _TRIL_IDX[0], _TRIL_IDX[1]] = rng.standard_normal((K, len(_TRIL_IDX[0])))
    dfs = nus[:, None] - np.arange(_DIM)[None, :]
    a[:, _DIAG_IDX[0], _DIAG_IDX[1]] = np.sqrt(rng.chisquare(dfs))
    return chol @ a


def _sample_wishart(rng: np.random.Generator, nu: float, scale: np.ndarray) -> np.ndarray:
    la = _wishart_factors_batch(rng, np.array([float(nu)]), scale[None])[0]
    return la @ la.T


def _sample_normal_wishart(
    rng: np.random.Generator, m: np.ndarray, beta: float, w: np.ndarray, nu: float
) -> tuple[np.ndarray, np.ndarray]:
    mus, lams = _sample_normal_wishart_batch(
        rng, m[None], np.array([beta]), w[None], np.array([float(nu)])
    )
    return mus[0], lams[0]


def _sample_normal_wishart_batch(
    rng: np.random.Generator,
    ms: np.ndarray,
    betas: np.ndarray,
    ws: np.ndarray,
    nus: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    la = _wishart_factors_batch(rng, nus, ws)
    lams = la @ la.swapaxes(1, 2)
    # any square root of (beta lam)^-1 works for the mean draw
    roots = np.linalg.inv(la).swapaxes(1, 2) / np.sqrt(betas)[:, None, None]
    z = rng.standard_normal(ms.shape)
    mus = ms + np.einsum("kij,kj->ki", roots, z)
    return mus, lams


def generate(hyper: Hyperparams, n: int, seed) -> GeneratedData:
    """Forward-sample shared signs, both agents' parameters, categories, and observations."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    signs = rng.choice(hyper.L, size=n, p=hyper.pi)

    def one_agent() -> tuple[AgentState, np.ndarray]:
        theta = rng.dirichlet(hyper.alpha, size=hyper.L)
        mu = np.zeros((hyper.K, _DIM))
        lam = np.zeros((hyper.K, _DIM, _DIM))
        w = hyper.w
        for k in range(hyper.K):
            mu[k], lam[k] = _sample_normal_wishart(rng, hyper.m, hyper.beta, w, hyper.nu)
        assignments = np.array([rng.choice(hyper.K, p=theta[s]) for s in signs])
        covs = np.linalg.inv(lam)
        x = np.array(
            [rng.multivariate_normal(mu[c], covs[c], method="cholesky") for c in assignments]
        )
        return AgentState(theta, mu, lam, assignments, signs.copy()), x

    state_a, x_a = one_agent()
    state_b, x_b = one_agent()
    return GeneratedData(signs, state_a, state_b, x_a, x_b)


def posterior_theta(
    counts: np.ndarray, alpha: np.ndarray, seed=0
) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet posterior per sign row: returns (one sample, analytic mean), each (L, K).

    counts[l, k] is the number of stimuli carrying sign l assigned to category k.
    """
    counts = np.asarray(counts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    rng = np.random.default_rng(seed)
    conc = counts + alpha[None, :]
    gammas = rng.gamma(conc)  # one batched draw; row-normalized gammas are Dirichlet
    sample = gammas / gammas.sum(axis=1, keepdims=True)
    mean = conc / conc.sum(axis=1, keepdims=True)
    return sample, mean


def posterior_gauss(
    stats: SufficientStats, hyper: Hyperparams, seed=0
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Normal-Wishart posterior per category.

    Returns ((mu_samples, lam_samples), (mu_means, lam_means)); categories with no
    observations keep the prior. Lambda means are the Wishart means nu' W'.
    """
    for k in range(len(stats.counts)):
        if not np.allclose(stats.scatters[k], stats.scatters[k].T, atol=1e-8):
            raise ValueError(f"scatter matrix for category {k} is not symmetric")
    rng = np.random.default_rng(seed)
    betas, ms, ws, nus = _nw_posterior_params_batch(stats, hyper)
    mu_samples, lam_samples = _sample_normal_wishart_batch(rng, ms, betas, ws, nus)
    lam_means = nus[:, None, None] * ws
    return (mu_samples, lam_samples), (ms.copy(), lam_means)


def _nw_posterior_params_batch(
    stats: SufficientStats, hyper: Hyperparams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-category posterior (beta', m', W', nu') for all K categories at once."""
    n = stats.counts
    betas = hyper.beta + n
    nus = hyper.nu + n
    safe_n = np.where(n > 0, n, 1.0)
    xbar = stats.sums / safe_n[:, None]
    ms = (hyper.beta * hyper.m[None, :] + n[:, None] * xbar) / betas[:, None]
    dev = xbar - hyper.m[None, :]
    w_invs = (
        hyper.w_inv[None, :, :]
        + stats.scatters
        + (hyper.beta * n / betas)[:, None, None] * np.einsum("ki,kj->kij", dev, dev)
    )
    empty = n == 0
    ms[empty] = hyper.m
    w_invs[empty] = hyper.w_inv
    return betas, ms, np.linalg.inv(w_invs), nus


def _gaussian_log_densities(x: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """log N(x | mu_k, lam_k^-1) for one 3-vector x against all K components."""
    delta = x[None, :] - mu  # (K, 3)
    quad = np.einsum("ki,kij,kj->k", delta, lam, delta)
    _, logdet = np.linalg.slogdet(lam)
    return 0.5 * logdet - 0.5 * _DIM * np.log(2 * np.pi) - 0.5 * quad


def category_posterior(x: np.ndarray, s: int, state: AgentState) -> np.ndarray:
    """P(c | x, s, theta, gauss) over all K categories, normalized in log-space."""
    if not 0 <= s < state.L:
        raise ValueError(f"sign index {s} out of range")
    log_w = np.log(np.clip(state.theta[s], 1e-300, None)) + _gaussian_log_densities(
        np.asarray(x, dtype=float), state.mu, state.lam
    )
    log_w[state.theta[s] == 0] = -np.inf
    top = np.max(log_w)
    if not np.isfinite(top):
        raise ValueError("all category weights are zero for this sign")
    w = np.exp(log_w - top)
    return w / w.sum()


def sample_category(x: np.ndarray, s: int, state: AgentState, seed=0) -> int:
    """Draw c with probability proportional to theta_s[c] * N(x | mu_c, lam_c^-1).

    If every unnormalized weight underflows, falls back to the argmax of the
    log-weights and emits a diagnostic warning.
    """
    rng = np.random.default_rng(seed)
    try:
        probs = category_posterior(x, s, state)
    except ValueError:
        log_w = np.log(np.clip(state.theta[s], 1e-300, None)) + _gaussian_log_densities(
            np.asarray(x, dtype=float), state.mu, state.lam
        )
        warnings.warn("category weights underflowed; using argmax of log-weights")
        return int(np.argmax(log_w))
    return int(rng.choice(state.K, p=probs))


def category_given_sign(c: int, s: int, theta: np.ndarray) -> float:
    """P(c | theta, s): a table lookup."""
    theta = np.asarray(theta)
    L, K = theta.shape
    if not 0 <= s < L:
        raise ValueError(f"sign index {s} out of range for L={L}")
    if not 0 <= c < K:
        raise ValueError(f"category index {c} out of range for K={K}")
    return float(theta[s, c])


def sign_posterior(c: int, theta: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """P(s | theta, c) over all L signs, proportional to pi_s * theta_s[c]."""
    theta = np.asarray(theta, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if not 0 <= c < theta.shape[1]:
        raise ValueError(f"category index {c} out of range")
    w = pi * theta[:, c]
    total = w.sum()
    if total <= 0:
        raise ValueError("sign posterior has zero total mass")
    return w / total


def sample_posterior_state(
    observations: np.ndarray,
    assignments: np.ndarray,
    signs: np.ndarray,
    hyper: Hyperparams,
    seed=0,
) -> AgentState:
    """One conjugate draw of (theta, gauss) given fixed (c, s)."""
    rng = np.random.default_rng(seed)
    stats = SufficientStats.from_data(observations, assignments, signs, hyper.K, hyper.L)
    theta, _ = posterior_theta(stats.sign_category_counts, hyper.alpha, rng)
    betas, ms, ws, nus = _nw_posterior_params_batch(stats, hyper)
    mu, lam = _sample_normal_wishart_batch(rng, ms, betas, ws, nus)
    return AgentState(theta, mu, lam, np.asarray(assignments, int), np.asarray(signs, int))


def posterior_mean_state(
    observations: np.ndarray,
    assignments: np.ndarray,
    signs: np.ndarray,
    hyper: Hyperparams,
) -> AgentState:
    """Posterior-mean (theta, gauss) given fixed (c, s); deterministic."""
    assignments = np.asarray(assignments, int)
    signs = np.asarray(signs, int)
    stats = SufficientStats.from_data(observations, assignments, signs, hyper.K, hyper.L)
    conc = stats.sign_category_counts + hyper.alpha[None, :]
    theta = conc / conc.sum(axis=1, keepdims=True)
    _, ms, ws, nus = _nw_posterior_params_batch(stats, hyper)
    return AgentState(theta, ms, nus[:, None, None] * ws, assignments, signs)


def _resample_categories(
    observations: np.ndarray,
    signs: np.ndarray,
    theta: np.ndarray,
    mu: np.ndarray,
    lam: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    n = len(observations)
    K = theta.shape[1]
    delta = observations[:, None, :] - mu[None, :, :]  # (n, K, 3)
    quad = np.einsum("nki,kij,nkj->nk", delta, lam, delta)
    _, logdet = np.linalg.slogdet(lam)
    log_like = 0.5 * logdet[None, :] - 0.5 * _DIM * np.log(2 * np.pi) - 0.5 * quad
    log_w = np.log(np.clip(theta[signs], 1e-300, None)) + log_like
    # Gumbel-max draw per row; immune to linear-space underflow
    gumbel = rng.gumbel(size=(n, K))
    return np.argmax(log_w + gumbel, axis=1)


def _resample_signs(
    assignments: np.ndarray, theta: np.ndarray, pi: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    log_w = np.log(np.clip(pi[None, :], 1e-300, None)) + np.log(
        np.clip(theta[:, assignments].T, 1e-300, None)
    )
    gumbel = rng.gumbel(size=log_w.shape)
    return np.argmax(log_w + gumbel, axis=1)


def gibbs_fit(
    observations: np.ndarray,
    fixed_c: np.ndarray | None,
    fixed_s: np.ndarray | None,
    hyper: Hyperparams,
    iterations: int = 2000,
    burn_in: int = 500,
    seed=0,
) -> AgentState:
    """Posterior-mean parameters by Gibbs sampling.

    With both c and s observed the parameter posteriors are conjugate and the
    Rao-Blackwellized mean (the average of per-iteration conditional means) is
    the closed-form posterior mean, returned directly. With c (and optionally s)
    unobserved the chain alternates category/sign resampling with parameter
    draws; the returned theta/gauss are averages of conditional means over the
    kept iterations and assignments/signs are the final sample.
    """
    if iterations <= burn_in:
        raise ValueError("iterations must exceed burn_in")
    observations = np.asarray(observations, dtype=float).reshape(-1, _DIM)
    n = len(observations)
    rng = np.random.default_rng(seed)

    if n == 0:
        theta = np.tile(hyper.alpha / hyper.alpha.sum(), (hyper.L, 1))
        mu = np.tile(hyper.m, (hyper.K, 1))
        lam = np.tile(hyper.nu * hyper.w, (hyper.K, 1, 1))
        empty = np.zeros(0, dtype=int)
        return AgentState(theta, mu, lam, empty, empty)

    if fixed_c is not None and fixed_s is not None:
        c = np.asarray(fixed_c, dtype=int)
        s = np.asarray(fixed_s, dtype=int)
        _check_aligned(n, c, s, hyper)
        stats = SufficientStats.from_data(observations, c, s, hyper.K, hyper.L)
        conc = stats.sign_category_counts + hyper.alpha[None, :]
        theta = conc / conc.sum(axis=1, keepdims=True)
        _, ms, ws, nus = _nw_posterior_params_batch(stats, hyper)
        return AgentState(theta, ms, nus[:, None, None] * ws, c.copy(), s.copy())

    c = np.asarray(fixed_c, int) if fixed_c is not None else rng.integers(0, hyper.K, n)
    s = np.asarray(fixed_s, int) if fixed_s is not None else rng.integers(0, hyper.L, n)
    _check_aligned(n, c, s, hyper)

    theta_acc = np.zeros((hyper.L, hyper.K))
    mu_acc = np.zeros((hyper.K, _DIM))
    lam_acc = np.zeros((hyper.K, _DIM, _DIM))
    kept = 0
    for it in range(iterations):
        stats = SufficientStats.from_data(observations, c, s, hyper.K, hyper.L)
        theta_sample, theta_mean = posterior_theta(stats.sign_category_counts, hyper.alpha, rng)
        betas, ms, ws, nus = _nw_posterior_params_batch(stats, hyper)
        mu_s, lam_s = _sample_normal_wishart_batch(rng, ms, betas, ws, nus)
        if it >= burn_in:
            theta_acc += theta_mean
            mu_acc += ms
            lam_acc += nus[:, None, None] * ws
            kept += 1
        if fixed_c is None:
            c = _resample_categories(observations, s, theta_sample, mu_s, lam_s, rng)
        if fixed_s is None:
            s = _resample_signs(c, theta_sample, hyper.pi, rng)
    return AgentState(theta_acc / kept, mu_acc / kept, lam_acc / kept, c, s)


def _check_aligned(n: int, c: np.ndarray, s: np.ndarray, hyper: Hyperparams) -> None:
    if len(c) != n or len(s) != n:
        raise ValueError("fixed assignments must align with observations")
    if len(c) and (c.min() < 0 or c.max() >= hyper.K):
        raise ValueError("category assignment out of range")
    if len(s) and (s.min() < 0 or s.max() >= hyper.L):
        raise ValueError("sign assignment out of range")
