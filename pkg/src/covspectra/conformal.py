"""Bootstrap hypothesis test of H0: the population transform is conformal.

When ``T* T = c I`` the entries of the right singular vectors of the data
are asymptotically standard normal after sqrt(N) scaling, which this
pipeline tests: resample the columns of the data matrix, collect the
(k, i) singular vector entries across resamples for a small random index
set, and run a normality test per (k, i) pair.  H0 is rejected when the
fraction of non-rejected pairs drops below 1 - alpha.

Calibration notes (measured on simulated conformal data):

* Column resampling draws ``subsample`` columns *without* replacement.
  Full-size with-replacement resampling duplicates columns, which tilts
  the singular vectors and makes the entry samples heavy-tailed and tied;
  normality tests then reject almost surely regardless of H0.
* Each pair is tested at the Sidak-corrected level
  ``1 - (1 - alpha)^(1/pairs)`` so the family-wise level of the
  any-pair-rejects rule equals alpha under H0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import ConfigError, DataError, DomainError

__all__ = [
    "ConformalTestConfig",
    "TestDecision",
    "conformal_test",
    "normality_test",
]

NORMALITY_KINDS = ("shapiro_wilk", "anderson_darling")
MIN_SAMPLE, MAX_SAMPLE = 20, 5000


@dataclass(frozen=True)
class ConformalTestConfig:
    alpha: float = 0.1
    K: int = 200
    R1_size: int = 3
    R2_size: int = 3
    seed: int = 0
    normality_test: str = "anderson_darling"
    subsample: int | None = None  # columns per resample; default ceil(N/2)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.K < 50:
            raise ConfigError("bootstrap replicate count K must be at least 50")
        if self.R1_size < 2 or self.R2_size < 2:
            raise ConfigError("index set sizes must be at least 2")
        if self.normality_test not in NORMALITY_KINDS:
            raise ConfigError(f"normality_test must be one of {NORMALITY_KINDS}")
        if self.K < MIN_SAMPLE:
            raise ConfigError(f"K below the normality test's minimum sample size {MIN_SAMPLE}")


@dataclass(frozen=True)
class TestDecision:
    reject: bool
    A: int
    pairs: int
    p_values: tuple  # ((k, i, p), ...) with 1-based indices
    alpha: float
    pair_alpha: float
    seed: int
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "decision": "reject" if self.reject else "retain",
            "A": self.A,
            "pairs": self.pairs,
            "p_values": [{"k": k, "i": i, "p": p} for k, i, p in self.p_values],
            "alpha": self.alpha,
            "pair_alpha": self.pair_alpha,
            "seed": self.seed,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# Normality tests


def _anderson_darling_pvalue(x: np.ndarray) -> float:
    """Case-3 (estimated mean and variance) A*^2 with the standard p map."""
    x = np.sort(x)
    n = len(x)
    z = (x - x.mean()) / x.std(ddof=1)
    i = np.arange(1, n + 1)
    a_sq = -n - np.mean((2 * i - 1) * (sps.norm.logcdf(z) + sps.norm.logsf(z[::-1])))
    a_star = a_sq * (1.0 + 0.75 / n + 2.25 / n**2)
    if a_star >= 0.6:
        p = math.exp(1.2937 - 5.709 * a_star + 0.0186 * a_star**2)
    elif a_star >= 0.34:
        p = math.exp(0.9177 - 4.279 * a_star - 1.38 * a_star**2)
    elif a_star >= 0.2:
        p = 1.0 - math.exp(-8.318 + 42.796 * a_star - 59.938 * a_star**2)
    else:
        p = 1.0 - math.exp(-13.436 + 101.14 * a_star - 223.73 * a_star**2)
    return min(max(p, 0.0), 1.0)


def normality_test(sample, kind: str = "anderson_darling") -> float:
    """p-value of a normality test on a 1-d sample of size 20..5000.

    ``shapiro_wilk`` uses the standard polynomial approximation of the
    W-statistic null distribution; ``anderson_darling`` the case-3
    critical-value map with estimated mean and variance.  A constant
    sample returns p = 0.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if not MIN_SAMPLE <= len(x) <= MAX_SAMPLE:
        raise DomainError(f"sample size {len(x)} outside [{MIN_SAMPLE}, {MAX_SAMPLE}]")
    if x.std(ddof=1) == 0:
        return 0.0
    if kind == "shapiro_wilk":
        return float(sps.shapiro(x).pvalue)
    if kind == "anderson_darling":
        return _anderson_darling_pvalue(x)
    raise DomainError(f"unknown normality test '{kind}'")


# ---------------------------------------------------------------------------
# Conformality test


def _top_right_vectors(Q: np.ndarray, ranks) -> dict:
    """Right singular vectors of Q at the given 1-based ranks."""
    M, N = Q.shape
    if M <= N:
        w, U = np.linalg.eigh(Q @ Q.T)
        out = {}
        for k in ranks:
            lam = w[M - k]
            if lam <= 0:
                raise DataError("degenerate singular value while extracting vectors")
            v = Q.T @ U[:, M - k] / math.sqrt(lam)
            out[k] = v
        return out
    w, V = np.linalg.eigh(Q.T @ Q)
    return {k: V[:, N - k].copy() for k in ranks}


def conformal_test(data: np.ndarray, config: ConformalTestConfig) -> TestDecision:
    """Run the conformality hypothesis test on an M x N data matrix.

    Draws R1 (singular vector ranks) and R2 (coordinates), resamples the
    columns K times, collects ``sqrt(n) zeta_k^j(i)`` per pair across
    resamples, tests each pair for normality at the Sidak-corrected level
    and rejects H0 when the non-rejected fraction falls below 1 - alpha.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DataError("data must be a 2-d matrix")
    M, N = data.shape
    if N < 20 or M < 2:
        raise DataError(f"need M >= 2 and N >= 20, got {M} x {N}")
    svals = np.linalg.svd(data, compute_uv=False)
    if np.count_nonzero(svals > svals[0] * max(M, N) * np.finfo(float).eps) < 2:
        raise DataError("data matrix is numerically rank deficient (rank < 2)")

    m_sub = config.subsample if config.subsample is not None else (N + 1) // 2
    if not 2 <= m_sub <= N:
        raise ConfigError(f"subsample size {m_sub} outside 2..{N}")
    max_rank = min(M, m_sub)
    if max_rank < config.R1_size or m_sub < config.R2_size:
        raise ConfigError("index set sizes exceed the resampled dimensions")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(config.seed)))
    ranks = np.sort(rng.choice(max_rank, size=config.R1_size, replace=False) + 1)
    coords = np.sort(rng.choice(m_sub, size=config.R2_size, replace=False) + 1)

    reference = _top_right_vectors(data, ranks)  # for sign alignment

    pairs = config.R1_size * config.R2_size
    samples = np.zeros((config.K, config.R1_size, config.R2_size))
    for j in range(config.K):
        cols = rng.choice(N, size=m_sub, replace=False)
        vectors = _top_right_vectors(data[:, cols], ranks)
        for a, k in enumerate(ranks):
            v = vectors[k]
            if v @ reference[k][cols] < 0:
                v = -v
            samples[j, a, :] = math.sqrt(m_sub) * v[coords - 1]

    pair_alpha = 1.0 - (1.0 - config.alpha) ** (1.0 / pairs)
    p_values = []
    A = 0
    for a, k in enumerate(ranks):
        for b, i in enumerate(coords):
            p = normality_test(samples[:, a, b], config.normality_test)
            p_values.append((int(k), int(i), float(p)))
            if p >= pair_alpha:
                A += 1
    reject = A / pairs < 1.0 - config.alpha
    return TestDecision(
        reject=bool(reject),
        A=A,
        pairs=pairs,
        p_values=tuple(p_values),
        alpha=config.alpha,
        pair_alpha=pair_alpha,
        seed=config.seed,
        config={
            "K": config.K,
            "R1_size": config.R1_size,
            "R2_size": config.R2_size,
            "normality_test": config.normality_test,
            "subsample": m_sub,
            "M": M,
            "N": N,
        },
    )
