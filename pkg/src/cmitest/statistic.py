"""Cross-fitted kernel U-statistic for conditional mean independence.

The population measure is E[U(X,X') V(Y,Y') K_Z(Z,Z')] over an independent
copy (X',Y',Z'), where V is the inner product of conditional-mean residuals
of Y and U is the kernel analogue for X:

    U(X,X') = K_X(X,X') - E[K_X(X,X')|Z] - E[K_X(X,X')|Z'] + E[K_X(X,X')|Z,Z']

(the conditional terms use independent conditional copies of X). The
measure is zero exactly when E[Y|X,Z] = E[Y|Z].

The sample statistic replaces the conditional kernel means with Monte-Carlo
averages over M conditional draws per observation, splits the data into two
contiguous folds, and averages each fold's off-diagonal mean of

    H_jk = U_hat(X_j, X_k) * V_hat(Y_j, Y_k) * K_Z(Z_j, Z_k).

The fourth term of U_hat pairs the m-th draws of the two observations (a
single average over m, not over all M^2 pairs). Observations must be scored
only with conditional draws and mean predictions fitted on the opposite
fold; this module consumes those arrays and does not retrain anything.

:func:`gamma_star_oracle` evaluates the population measure exactly on a
finite-support joint distribution by full enumeration, serving as an
independent ground truth for the zero-iff-null property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .kernels import KernelSpec, eval_kernel, gram_matrix


@dataclass(frozen=True)
class FoldAssignment:
    """Two contiguous folds covering range(n): first floor(n/2) rows, then the rest."""

    n: int
    fold1: np.ndarray
    fold2: np.ndarray

    @property
    def folds(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.fold1, self.fold2)


def split_folds(n: int) -> FoldAssignment:
    """Deterministic contiguous split; callers shuffle rows first if order is suspect."""
    n = int(n)
    if n < 4:
        raise ValueError(f"need n >= 4 to form two folds of at least 2, got {n}")
    half = n // 2
    return FoldAssignment(n=n, fold1=np.arange(half), fold2=np.arange(half, n))


@dataclass(frozen=True)
class StatKernelMatrices:
    """Per-fold symmetric matrices H_jk = U_hat * V_hat * K_Z.

    Diagonals are stored but every statistic built from these excludes them.
    """

    h1: np.ndarray
    h2: np.ndarray
    folds: FoldAssignment

    def __post_init__(self) -> None:
        for h, idx in zip((self.h1, self.h2), self.folds.folds):
            if h.shape != (idx.size, idx.size):
                raise ValueError(f"H shape {h.shape} does not match fold size {idx.size}")
            if not np.all(np.isfinite(h)):
                raise ValueError("non-finite statistic kernel entries")


def u_hat(kx: KernelSpec, x_j, x_k, gen_j, gen_k) -> float:
    """Estimated U between two observations given their M conditional draws each."""
    gj = np.atleast_2d(np.asarray(gen_j, dtype=np.float64))
    gk = np.atleast_2d(np.asarray(gen_k, dtype=np.float64))
    if gj.shape[0] != gk.shape[0]:
        raise ValueError(f"draw counts differ: {gj.shape[0]} vs {gk.shape[0]}")
    xj = np.asarray(x_j, dtype=np.float64).ravel()[None, :]
    xk = np.asarray(x_k, dtype=np.float64).ravel()[None, :]
    term1 = eval_kernel(kx, xj, xk)
    term2 = gram_matrix(kx, xj, gk).mean()
    term3 = gram_matrix(kx, xk, gj).mean()
    # Fourth term pairs the m-th draws: one average over m, not M^2 pairs.
    paired = np.mean([eval_kernel(kx, gj[m], gk[m]) for m in range(gj.shape[0])])
    return float(term1 - term2 - term3 + paired)


def v_hat(y_j, y_k, ghat_j, ghat_k) -> float:
    """Inner product of conditional-mean residuals."""
    yj = np.asarray(y_j, dtype=np.float64).ravel()
    yk = np.asarray(y_k, dtype=np.float64).ravel()
    gj = np.asarray(ghat_j, dtype=np.float64).ravel()
    gk = np.asarray(ghat_k, dtype=np.float64).ravel()
    if not (yj.shape == yk.shape == gj.shape == gk.shape):
        raise ValueError("y and ghat widths must all agree")
    return float((yj - gj) @ (yk - gk))


def _u_hat_matrix(kx: KernelSpec, x_fold: np.ndarray, gen_fold: np.ndarray) -> np.ndarray:
    """All-pairs U_hat within a fold; gen_fold is (q, M, d_X)."""
    q, m, d = gen_fold.shape
    term1 = gram_matrix(kx, x_fold, x_fold)
    stacked = gen_fold.reshape(q * m, d)
    # cross[j, k] = mean_m K_X(x_j, gen_k^(m))
    cross = gram_matrix(kx, x_fold, stacked).reshape(q, q, m).mean(axis=2)
    paired = np.zeros((q, q))
    for mm in range(m):
        paired += gram_matrix(kx, gen_fold[:, mm, :], gen_fold[:, mm, :])
    paired /= m
    return term1 - cross - cross.T + paired


def _per_fold_specs(spec) -> tuple[KernelSpec, KernelSpec]:
    if isinstance(spec, KernelSpec):
        return (spec, spec)
    pair = tuple(spec)
    if len(pair) != 2 or not all(isinstance(s, KernelSpec) for s in pair):
        raise ValueError("kernel spec must be a KernelSpec or a pair of them")
    return pair


def stat_kernel_matrices(data: Dataset, folds: FoldAssignment, gen_samples: np.ndarray,
                         ghat: np.ndarray, kx, kz) -> StatKernelMatrices:
    """Assemble both folds' H matrices from cross-fitted predictions and draws.

    gen_samples is (n, M, d_X) where row i must come from the sampler trained
    on the fold not containing i; ghat is (n, d_Y) under the same discipline.
    kx and kz accept a single KernelSpec (shared by both folds) or a pair
    (one per fold, for per-fold bandwidths).
    """
    gen = np.asarray(gen_samples, dtype=np.float64)
    gh = np.asarray(ghat, dtype=np.float64)
    if gh.ndim == 1:
        gh = gh[:, None]
    n = data.n
    if gen.ndim != 3 or gen.shape[0] != n or gen.shape[2] != data.x.shape[1]:
        raise ValueError(
            f"gen_samples must be (n, M, d_X) = ({n}, M, {data.x.shape[1]}), got {gen.shape}"
        )
    if not np.all(np.isfinite(gen)):
        raise ValueError("generated samples contain non-finite entries (missing draws?)")
    if gh.shape != data.y.shape:
        raise ValueError(f"ghat shape {gh.shape} != Y shape {data.y.shape}")
    if not np.all(np.isfinite(gh)):
        raise ValueError("ghat contains non-finite entries")

    hs = []
    resid = data.y - gh
    for idx, kx_s, kz_s in zip(folds.folds, _per_fold_specs(kx), _per_fold_specs(kz)):
        u = _u_hat_matrix(kx_s, data.x[idx], gen[idx])
        v = resid[idx] @ resid[idx].T
        kzm = gram_matrix(kz_s, data.z[idx], data.z[idx])
        hs.append(u * v * kzm)
    return StatKernelMatrices(h1=hs[0], h2=hs[1], folds=folds)


def t_hat(matrices: StatKernelMatrices) -> float:
    """Average over folds of the off-diagonal mean of H (true fold sizes in the normalizer)."""
    total = 0.0
    for h in (matrices.h1, matrices.h2):
        q = h.shape[0]
        total += (h.sum() - np.trace(h)) / (q * (q - 1))
    return float(total / 2.0)


def oracle_kernel_matrices(data: Dataset, true_g, oracle_sampler, M: int,
                           kx: KernelSpec, kz: KernelSpec, seed: int = 0) -> StatKernelMatrices:
    """H matrices with exact nuisances: true conditional mean and exact conditional draws.

    true_g maps a z row to the conditional mean of Y (scalar or vector);
    oracle_sampler(z, M, seed) returns M exact draws from X | Z = z. No
    training happens; the fold structure matches the estimated statistic.
    Draw seeds are derived per observation from `seed`.
    """
    folds = split_folds(data.n)
    m = int(M)
    if m < 1:
        raise ValueError("M must be a positive integer")
    ghat = np.vstack([np.ravel(true_g(z_i))[None, :] for z_i in data.z])
    seeds = np.random.SeedSequence(seed).generate_state(data.n, dtype=np.uint64)
    gen = np.stack([
        np.asarray(oracle_sampler(data.z[i], m, int(seeds[i])), dtype=np.float64)
        for i in range(data.n)
    ])
    return stat_kernel_matrices(data, folds, gen, ghat, kx, kz)


def t_oracle(data: Dataset, true_g, oracle_sampler, M: int,
             kx: KernelSpec, kz: KernelSpec, seed: int = 0) -> float:
    """The statistic evaluated with exact nuisances (see oracle_kernel_matrices)."""
    return t_hat(oracle_kernel_matrices(data, true_g, oracle_sampler, M, kx, kz, seed=seed))


@dataclass(frozen=True)
class DiscreteJointSpec:
    """Finite-support joint law of (X, Y, Z): one row per atom plus its probability."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        for name, arr in (("x", self.x), ("y", self.y), ("z", self.z)):
            if arr.ndim != 2:
                raise ValueError(f"{name} must be a matrix with one row per atom")
        s = self.probs.shape[0]
        if not (self.x.shape[0] == self.y.shape[0] == self.z.shape[0] == s):
            raise ValueError("atom counts differ across x, y, z, probs")
        if np.any(self.probs < 0):
            raise ValueError("negative probabilities")
        if abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(self.probs.sum())!r}, not 1")


def discrete_joint(atoms, probs) -> DiscreteJointSpec:
    """Build a DiscreteJointSpec from (x, y, z) tuples; scalars become 1-vectors."""
    xs, ys, zs = [], [], []
    for x, y, z in atoms:
        xs.append(np.atleast_1d(np.asarray(x, dtype=np.float64)))
        ys.append(np.atleast_1d(np.asarray(y, dtype=np.float64)))
        zs.append(np.atleast_1d(np.asarray(z, dtype=np.float64)))
    return DiscreteJointSpec(
        x=np.vstack(xs), y=np.vstack(ys), z=np.vstack(zs),
        probs=np.asarray(probs, dtype=np.float64),
    )


def gamma_star_oracle(dist: DiscreteJointSpec, kx: KernelSpec, kz: KernelSpec) -> float:
    """Exact population measure on a finite-support joint, by full enumeration.

    Conditional means and conditional kernel means are computed exactly from
    the probability table; the pair expectation runs over all ordered atom
    pairs (independent copies, so coinciding atoms are included).
    """
    s = dist.probs.shape[0]
    # Group atoms by identical z rows.
    z_keys = [dist.z[i].tobytes() for i in range(s)]
    groups: dict[bytes, int] = {}
    group_of = np.empty(s, dtype=np.intp)
    for i, key in enumerate(z_keys):
        group_of[i] = groups.setdefault(key, len(groups))
    n_groups = len(groups)

    # Conditional weights w[g, i] = P(atom i | Z in group g).
    weights = np.zeros((n_groups, s))
    for i in range(s):
        weights[group_of[i], i] = dist.probs[i]
    mass = weights.sum(axis=1, keepdims=True)
    if np.any(mass == 0):
        raise ValueError("empty conditional group")
    weights /= mass

    g_y = weights @ dist.y                       # (G, d_Y): E[Y | Z = z_g]
    kx_full = gram_matrix(kx, dist.x, dist.x)    # (S, S)
    cond_km = weights @ kx_full                  # (G, S): E[K_X(X, x_j) | Z = z_g]
    cross = weights @ kx_full @ weights.T        # (G, G): E[K_X(Xa, Xb) | Za, Zb]

    gi = group_of
    u = kx_full - cond_km[gi, :] - cond_km[gi, :].T + cross[np.ix_(gi, gi)]
    resid = dist.y - g_y[gi]
    v = resid @ resid.T
    kz_full = gram_matrix(kz, dist.z, dist.z)
    return float(dist.probs @ (u * v * kz_full) @ dist.probs)
