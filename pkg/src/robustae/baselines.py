"""Comparison methods: convex RPCA, nonconvex linear l1 factorization,
the shallow regularized robust autoencoder, the alternating deep variant,
and neighborhood-wise RPCA for manifold data."""

import math
from dataclasses import dataclass

import numpy as np

from . import numkit
from .autoencoder import (
    SQUARED_FROBENIUS,
    TrainConfig,
    adam_step,
    AdamState,
    _sigmoid,
    denoise,
    init,
    train,
)
from .numkit import Rng
from .report import SolveReport


@dataclass
class AdmmState:
    """Variables of the augmented-Lagrangian RPCA iteration."""

    low_rank: np.ndarray
    sparse: np.ndarray
    dual: np.ndarray
    mu: float
    lam: float


@dataclass(frozen=True)
class AlternationConfig:
    """Outer-round / inner-epoch schedule for the alternating baselines."""

    rounds: int = 5
    inner_epochs: int = 5
    batch_size: int = 128
    seed: int = 0
    learning_rate: float = 1e-4
    shuffle: bool = True

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.inner_epochs < 0:
            raise ValueError(f"inner_epochs must be >= 0, got {self.inner_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class NrpcaConfig:
    k_neighbors: int = 40
    rounds: int = 2
    lambda_: float = 1.0
    inner_tol: float = 1e-6
    inner_max_iter: int = 200

    def __post_init__(self):
        if self.k_neighbors < 2:
            raise ValueError(f"k_neighbors must be >= 2, got {self.k_neighbors}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.lambda_ <= 0:
            raise ValueError(f"lambda must be positive, got {self.lambda_}")


def _sigma1(m, iters=100, tol=1e-12):
    """Largest singular value by power iteration on M^T M (deterministic start)."""
    cols = m.shape[1]
    v = np.full(cols, 1.0 / math.sqrt(cols))
    previous = 0.0
    value = 0.0
    for _ in range(iters):
        w = m.T @ (m @ v)
        value = math.sqrt(w @ w)
        if value == 0.0:
            return 0.0
        v = w / value
        if abs(value - previous) <= tol * value:
            break
        previous = value
    return math.sqrt(value)


def rpca_admm(observed, lam=None, tol=1e-7, max_iter=1000):
    """Low-rank + sparse split via inexact augmented-Lagrangian ADMM.

    L <- svt(M - S + Y/mu, 1/mu); S <- shrink(M - L + Y/mu, lam/mu);
    Y <- Y + mu (M - L - S); mu grows by 1.6x from 1.25/sigma1(M), capped at
    1e7 times its start.  Stops when |M - L - S|_F / |M|_F < tol.  The
    objective trace records |L|_* + lam |M - L|_1 (the feasible projection).
    """
    m = numkit.as_matrix(observed, "observed")
    rows, cols = m.shape
    if lam is None:
        lam = 1.0 / math.sqrt(max(rows, cols))
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    norm_m = numkit.norm_fro(m)
    if norm_m == 0.0:
        zero = np.zeros_like(m)
        return zero, zero.copy(), SolveReport(iterations=0, terminal_residual=0.0)
    mu0 = 1.25 / _sigma1(m)
    state = AdmmState(
        low_rank=np.zeros_like(m),
        sparse=np.zeros_like(m),
        dual=np.zeros_like(m),
        mu=mu0,
        lam=lam,
    )
    mu_cap = 1e7 * mu0
    trace = []
    converged = False
    residual_ratio = math.inf
    while len(trace) < max_iter:
        f = numkit.svd(m - state.sparse + state.dual / state.mu)
        shrunk = np.maximum(f.sigma - 1.0 / state.mu, 0.0)
        state.low_rank = (f.u * shrunk) @ f.v.T
        state.sparse = numkit.soft_threshold(
            m - state.low_rank + state.dual / state.mu, state.lam / state.mu
        )
        residual = m - state.low_rank - state.sparse
        state.dual = state.dual + state.mu * residual
        state.mu = min(1.6 * state.mu, mu_cap)
        residual_ratio = numkit.norm_fro(residual) / norm_m
        trace.append(float(shrunk.sum() + lam * np.abs(m - state.low_rank).sum()))
        if residual_ratio < tol:
            converged = True
            break
    report = SolveReport(
        iterations=len(trace),
        objective_trace=trace,
        terminal_residual=residual_ratio,
        converged=converged,
    )
    return state.low_rank, state.sparse, report


def linear_l1_factorization(observed, p_latent, config):
    """min |X - B A X|_1 by subgradient Adam; returns the best-objective iterate.

    Exists to demonstrate that the linear version of the l1 formulation
    cannot fix corrupted row spaces: row(B A X) is always contained in
    row(X), so recovery of clean data outside that row space is impossible.
    """
    x = numkit.as_matrix(observed, "observed")
    n, count = x.shape
    p_latent = int(p_latent)
    if not 0 < p_latent < min(n, count):
        raise ValueError(f"p_latent must be in (0, {min(n, count)}), got {p_latent}")
    rng = Rng(config.seed)
    bound = math.sqrt(6.0 / (n + p_latent))
    a_map = rng.uniform(-bound, bound, (p_latent, n))
    b_map = rng.uniform(-bound, bound, (n, p_latent))
    params = [a_map, b_map]
    state = AdamState.for_params(params, config.learning_rate)
    best = (math.inf, a_map.copy(), b_map.copy())
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(count) if config.shuffle else np.arange(count)
        for start in range(0, count, config.batch_size):
            xb = np.ascontiguousarray(x[:, order[start : start + config.batch_size]])
            code = a_map @ xb
            sign = np.sign(xb - b_map @ code)
            grad_b = -(sign @ code.T)
            grad_a = -(b_map.T @ sign) @ xb.T
            adam_step(params, [grad_a, grad_b], state)
        objective = float(np.abs(x - b_map @ (a_map @ x)).sum())
        trace.append(objective)
        if objective < best[0]:
            best = (objective, a_map.copy(), b_map.copy())
    report = SolveReport(
        iterations=config.epochs,
        objective_trace=trace,
        terminal_residual=best[0],
        converged=True,
    )
    return best[1], best[2], report


def rae_cha(observed, p_latent, lambda1, lambda2, config):
    """Shallow robust autoencoder with an explicit sparse term.

    Alternates an exact prox step C <- shrink(X - B sigmoid(A X), lambda2/2)
    with Adam epochs on (A, B) for the ridge-regularized squared error,
    `config.rounds` times.
    """
    x = numkit.as_matrix(observed, "observed")
    n, count = x.shape
    p_latent = int(p_latent)
    if not 0 < p_latent < n:
        raise ValueError(f"p_latent must be in (0, {n}), got {p_latent}")
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("regularization weights must be non-negative")
    rng = Rng(config.seed)
    bound = math.sqrt(6.0 / (n + p_latent))
    a_map = rng.uniform(-bound, bound, (p_latent, n))
    b_map = rng.uniform(-bound, bound, (n, p_latent))
    params = [a_map, b_map]
    state = AdamState.for_params(params, config.learning_rate)
    sparse = np.zeros_like(x)
    trace = []
    for _ in range(config.rounds):
        hidden = _sigmoid(a_map @ x)
        sparse = numkit.soft_threshold(x - b_map @ hidden, lambda2 / 2.0)
        for _ in range(config.inner_epochs):
            order = rng.permutation(count) if config.shuffle else np.arange(count)
            for start in range(0, count, config.batch_size):
                ids = order[start : start + config.batch_size]
                xb = np.ascontiguousarray(x[:, ids])
                cb = sparse[:, ids]
                h = _sigmoid(a_map @ xb)
                err = xb - b_map @ h - cb
                grad_b = -2.0 * (err @ h.T) + 2.0 * lambda1 * b_map
                dh = -2.0 * (b_map.T @ err) * h * (1.0 - h)
                grad_a = dh @ xb.T + 2.0 * lambda1 * a_map
                adam_step(params, [grad_a, grad_b], state)
        err = x - b_map @ _sigmoid(a_map @ x) - sparse
        objective = float(
            np.sum(err * err)
            + lambda1 * (np.sum(a_map * a_map) + np.sum(b_map * b_map))
            + lambda2 * np.abs(sparse).sum()
        )
        trace.append(objective)
    report = SolveReport(
        iterations=config.rounds,
        objective_trace=trace,
        terminal_residual=trace[-1],
        converged=True,
    )
    return a_map, b_map, sparse, report


def rda(observed, model_dims, lam, config):
    """Alternating deep variant: split X = observed - C, fit the autoencoder to X
    under squared error, then refresh C by soft thresholding the reconstruction
    residual.  The unsquared Frobenius term of the original objective is
    trained through its squared surrogate."""
    x_hat = numkit.as_matrix(observed, "observed")
    encoder_dims, decoder_dims = model_dims
    model = init(encoder_dims, decoder_dims, seed=config.seed)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    sparse = np.zeros_like(x_hat)
    trace = []
    steps = 0
    for rnd in range(config.rounds):
        clean_estimate = x_hat - sparse
        if config.inner_epochs > 0:
            inner = TrainConfig(
                epochs=config.inner_epochs,
                batch_size=config.batch_size,
                seed=Rng(config.seed).child(1000 + rnd).seed,
                loss=SQUARED_FROBENIUS,
                shuffle=config.shuffle,
                learning_rate=config.learning_rate,
            )
            model, inner_report = train(model, clean_estimate, inner)
            steps += inner_report.iterations
        reconstruction = denoise(model, clean_estimate)
        sparse = numkit.soft_threshold(x_hat - reconstruction, lam)
        objective = float(
            math.sqrt(np.sum((clean_estimate - reconstruction) ** 2))
            + lam * np.abs(sparse).sum()
        )
        trace.append(objective)
    clean_estimate = x_hat - sparse
    report = SolveReport(
        iterations=config.rounds,
        objective_trace=trace,
        terminal_residual=trace[-1],
        converged=True,
        trace_stride=1,
        skipped_steps=0,
    )
    return model, clean_estimate, sparse, report


def nrpca(observed, config):
    """Neighborhood-wise RPCA: per round, each column is corrected by solving
    RPCA on the stack of itself and its k nearest neighbors (all neighborhoods
    taken from the same pre-round estimate)."""
    x = numkit.as_matrix(observed, "observed")
    n, count = x.shape
    if config.k_neighbors >= count:
        raise ValueError(
            f"k_neighbors must be < column count, got {config.k_neighbors} >= {count}"
        )
    estimate = x.copy()
    k = config.k_neighbors
    lam = config.lambda_ / math.sqrt(max(n, k + 1))
    trace = []
    for _ in range(config.rounds):
        sq = np.einsum("ij,ij->j", estimate, estimate)
        gram = estimate.T @ estimate
        dist2 = sq[:, None] + sq[None, :] - 2.0 * gram
        updated = np.empty_like(estimate)
        for i in range(count):
            order = np.argsort(dist2[i], kind="stable")
            neighbors = [j for j in order if j != i][:k]
            block = np.ascontiguousarray(estimate[:, [i] + neighbors])
            low_rank, _, _ = rpca_admm(
                block, lam=lam, tol=config.inner_tol, max_iter=config.inner_max_iter
            )
            updated[:, i] = low_rank[:, 0]
        trace.append(float(np.sqrt(np.sum((updated - estimate) ** 2))))
        estimate = updated
    report = SolveReport(
        iterations=config.rounds,
        objective_trace=trace,
        terminal_residual=trace[-1],
        converged=True,
    )
    return estimate, report


def synthetic_rpca_instance(n=200, m=200, rank=5, corruption_fraction=0.05,
                            spike_scale=5.0, seed=0):
    """Planted low-rank + sparse instance: X = B A with unit-Gaussian factors,
    C has Bernoulli support and entries +-(spike_scale * mean |X|).

    Returns (clean, sparse, observed).
    """
    rng = Rng(seed)
    left = rng.normal((n, rank))
    right = rng.normal((rank, m))
    clean = left @ right
    u_support = rng.random((n, m))
    u_sign = rng.random((n, m))
    magnitude = spike_scale * float(np.abs(clean).mean())
    sparse = np.where(
        u_support < corruption_fraction,
        np.where(u_sign < 0.5, magnitude, -magnitude),
        0.0,
    )
    return clean, sparse, clean + sparse
