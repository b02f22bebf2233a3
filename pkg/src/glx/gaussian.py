"""Exact Gaussian sampling and the conditional decomposition phi = mu + psi.

Random streams are counter based: replicate ``r`` of seed ``s`` always draws
from ``Philox(key=s, counter=[0, 0, 0, r])``, so a replicate's field does not
depend on how replicates are batched or on the number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConditioningError, ConsistencyError, ParameterError, SPDError, TruncationError

# replicates per linear-algebra batch; fixed so results do not depend on workers
BATCH = 512


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(replicate)]))


def white_noise(seed: int, replicates: Sequence[int], size: int) -> np.ndarray:
    """Standard normal block of shape ``(size, len(replicates))``."""
    out = np.empty((size, len(replicates)))
    for j, r in enumerate(replicates):
        out[:, j] = replicate_rng(seed, r).standard_normal(size)
    return out


@dataclass(frozen=True)
class FieldSample:
    values: np.ndarray
    seed: int
    replicate: int
    domain: object = None


class GaussianSampler:
    """Centered Gaussian vectors from a covariance or a precision matrix.

    Covariance form uses ``x = L w`` with ``C = L L^T``; precision form solves
    ``R^T x = w`` with ``A = R R^T``, never forming ``A^{-1}``.
    """

    def __init__(self, matrix, form: str = "covariance", domain=None):
        if form not in ("covariance", "precision"):
            raise ParameterError("form must be 'covariance' or 'precision'")
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ParameterError("matrix must be square")
        try:
            self.factor = linalg.cholesky(M, lower=True)
        except linalg.LinAlgError as exc:
            raise SPDError("matrix is not symmetric positive definite") from exc
        self.form = form
        self.domain = domain
        self.size = M.shape[0]

    def transform(self, noise: np.ndarray) -> np.ndarray:
        if self.form == "covariance":
            return self.factor @ noise
        return linalg.solve_triangular(self.factor, noise, lower=True, trans="T")

    def block(self, seed: int, replicates: Sequence[int]) -> np.ndarray:
        """Fields for the given replicate ids as columns, shape ``(N, k)``."""
        return self.transform(white_noise(seed, replicates, self.size))


class MembraneSparseSampler:
    """Membrane sampler for boxes too large for a dense factor.

    With ``(Delta^2)_U = D^T D`` the vector ``x = (D^T D)^{-1} D^T w`` has
    covariance ``(D^T D)^{-1}``.  The solve is preconditioned CG.
    """

    def __init__(self, model, domain, rtol: float = 1e-10):
        from .green import _dst_box_inverse, membrane_factor, precision_matrix

        self.D = membrane_factor(domain)
        self.A = precision_matrix(model, domain, as_sparse=True)
        self.pre = LinearOperator(self.A.shape, matvec=_dst_box_inverse(domain.n, domain.d, 1.0, 2),
                                  dtype=float)
        self.size = domain.N
        self.rows = self.D.shape[0]
        self.rtol = rtol
        self.domain = domain

    def block(self, seed: int, replicates: Sequence[int]) -> np.ndarray:
        W = white_noise(seed, replicates, self.rows)
        out = np.empty((self.size, W.shape[1]))
        for j in range(W.shape[1]):
            x, info = cg(self.A, self.D.T @ W[:, j], rtol=self.rtol, atol=0.0, M=self.pre,
                         maxiter=5000)
            if info != 0:
                raise TruncationError(f"membrane CG did not converge (info={info})")
            out[:, j] = x
        return out


def _batches(count: int, start: int = 0):
    for b in range(start, start + count, BATCH):
        yield list(range(b, min(b + BATCH, start + count)))


def map_batches(sampler, count: int, seed: int, fn: Callable[[np.ndarray, list], object],
                workers: int = 1, start: int = 0) -> list:
    """Apply ``fn(fields, replicate_ids)`` to every batch, in replicate order."""
    batches = list(_batches(count, start))

    def job(ids):
        return fn(sampler.block(seed, ids), ids)

    if workers <= 1:
        return [job(ids) for ids in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, batches))


def sample_field(cov_or_precision, count: int, seed: int, form: str = "covariance",
                 workers: int = 1, domain=None) -> list:
    """Draw ``count`` independent centered Gaussian fields."""
    sampler = (cov_or_precision if hasattr(cov_or_precision, "block")
               else GaussianSampler(cov_or_precision, form, domain))
    out = []
    for block, ids in zip(map_batches(sampler, count, seed, lambda x, ids: x, workers),
                          _batches(count)):
        out.extend(FieldSample(block[:, j].copy(), seed, r, domain) for j, r in enumerate(ids))
    return out


# ---------------------------------------------------------------------------
# conditioning


@dataclass(frozen=True)
class ConditionalDecomposition:
    K: np.ndarray
    alpha: int
    weights: np.ndarray
    var_mu: float
    var_psi: float
    var_psi_schur: float
    var_psi_markov: Optional[float] = None


def _as_matrix(G) -> np.ndarray:
    return np.asarray(getattr(G, "matrix", G), dtype=float)


def conditional_weights(G, K, alpha: int) -> np.ndarray:
    """``T(alpha, .) = G(alpha, K) G_K^{-1}`` over the index set ``K``."""
    C = _as_matrix(G)
    K = np.asarray(K, dtype=np.int64)
    if K.size == 0:
        return np.zeros(0)
    hit = np.flatnonzero(K == alpha)
    if hit.size:
        w = np.zeros(K.size)
        w[hit[0]] = 1.0
        return w
    try:
        c = linalg.cho_factor(C[np.ix_(K, K)], lower=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError("covariance restricted to K is singular") from exc
    return linalg.cho_solve(c, C[K, alpha])


def conditional_variances(G, K, alpha: int, precision=None, tol: float = 1e-8) -> ConditionalDecomposition:
    """Split ``Var(phi_alpha)`` into ``Var(mu_alpha) + Var(psi_alpha)``.

    ``mu_alpha = E[phi_alpha | phi_K] = sum_g T(alpha, g) phi_g``.  Three
    routes are compared: the T-matrix product, the Schur complement through a
    triangular factor of ``G_K``, and (if ``precision`` is given) the Markov
    route ``[(A_UU)^{-1}](alpha, alpha)`` with ``U`` the complement of ``K``.
    """
    C = _as_matrix(G)
    K = np.asarray(K, dtype=np.int64)
    var = float(C[alpha, alpha])
    if K.size == 0:
        return ConditionalDecomposition(K, alpha, np.zeros(0), 0.0, var, var,
                                        var if precision is not None else None)
    T = conditional_weights(C, K, alpha)
    var_mu = float(T @ C[K, alpha])
    var_psi = var - var_mu
    if np.any(K == alpha):
        schur = 0.0
    else:
        L = linalg.cholesky(C[np.ix_(K, K)], lower=True)
        v = linalg.solve_triangular(L, C[K, alpha], lower=True)
        schur = var - float(v @ v)
    markov = None
    if precision is not None:
        A = precision if sparse.issparse(precision) else _as_matrix(precision)
        if np.any(K == alpha):
            markov = 0.0
        else:
            U = np.setdiff1d(np.arange(C.shape[0]), K)
            pos = int(np.searchsorted(U, alpha))
            A_UU = A[np.ix_(U, U)] if not sparse.issparse(A) else A[U][:, U].toarray()
            e = np.zeros(U.size)
            e[pos] = 1.0
            markov = float(linalg.cho_solve(linalg.cho_factor(A_UU, lower=True), e)[pos])
    if abs(schur - var_psi) > tol or (markov is not None and abs(markov - var_psi) > tol):
        raise ConsistencyError(
            f"conditional variance routes disagree: T={var_psi:.12g} schur={schur:.12g} markov={markov}")
    # clip the roundoff-level negatives of a fully determined site
    return ConditionalDecomposition(K, alpha, T, max(var_mu, 0.0), max(var_psi, 0.0), schur, markov)


def ball_conditional_variances(precision, G_diag: np.ndarray, balls: Sequence[np.ndarray],
                               alphas: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """``Var(psi_a)``, ``Var(mu_a)`` when conditioning on the complement of ball ``B_a``.

    Uses the precision route only: ``Var(psi_a) = [(A_BB)^{-1}](a, a)``.  Cost
    scales with the ball size, not the box.
    """
    A = precision
    is_sp = sparse.issparse(A)
    var_psi = np.empty(len(alphas))
    for i, (a, B) in enumerate(zip(alphas, balls)):
        B = np.asarray(B, dtype=np.int64)
        sub = A[B][:, B].toarray() if is_sp else A[np.ix_(B, B)]
        pos = int(np.flatnonzero(B == a)[0])
        e = np.zeros(B.size)
        e[pos] = 1.0
        var_psi[i] = linalg.cho_solve(linalg.cho_factor(sub, lower=True), e)[pos]
    var_mu = np.maximum(np.asarray(G_diag)[np.asarray(alphas)] - var_psi, 0.0)
    return var_psi, var_mu
