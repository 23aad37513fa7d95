"""Random matrix sampling, SVD decomposition and spectral index bookkeeping.

Data matrices are ``X = q / sqrt(N)`` with i.i.d. unit-variance entries
``q`` drawn from one of three moment-controlled laws; the decomposed object
is ``Y = Sigma^(1/2) X`` with its singular values ``sqrt(lambda_k)`` and
orthonormal singular vector pairs ``(xi_k, zeta_k)``.  Index helpers map a
within-bulk rank ``l`` (counted from the right or left edge of bulk ``k``)
to the global eigenvalue index, and rescale edge eigenvalues onto the
curvature-normalized N^(2/3) fluctuation scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DomainError, SolverError
from .mplaw import SpectrumStructure

__all__ = [
    "EntryLaw",
    "SampleDecomposition",
    "SpectralIndex",
    "replicate_rng",
    "sample_matrix",
    "decompose",
    "alpha_prime",
    "alpha_prime_inverse",
    "rescale_edge_eigenvalue",
    "save_decompositions",
    "load_decompositions",
]

# Gram-matrix eigendecomposition is used below this size, thin SVD above.
GRAM_PATH_LIMIT = 512

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class EntryLaw:
    """An entry distribution with unit variance and controlled moments."""

    kind: str
    moments: tuple  # raw moments (m1, m2, m3, m4)

    @classmethod
    def gaussian(cls) -> "EntryLaw":
        return cls("gaussian", (0.0, 1.0, 0.0, 3.0))

    @classmethod
    def two_moment(cls) -> "EntryLaw":
        """Rademacher +-1: matches the Gaussian through order 2 only."""
        return cls("two_moment", (0.0, 1.0, 0.0, 1.0))

    @classmethod
    def four_moment(cls) -> "EntryLaw":
        """Three-point law +-sqrt(3) w.p. 1/6 each, 0 w.p. 2/3.

        The minimal discrete law whose first four moments (0, 1, 0, 3)
        match the standard Gaussian.
        """
        return cls("four_moment", (0.0, 1.0, 0.0, 3.0))

    @classmethod
    def from_name(cls, name: str) -> "EntryLaw":
        try:
            return {"gaussian": cls.gaussian, "two_moment": cls.two_moment, "four_moment": cls.four_moment}[name]()
        except KeyError:
            raise ConfigError(f"unknown entry law '{name}'") from None

    def matches(self, other: "EntryLaw", order: int) -> bool:
        """Whether raw moments agree with ``other`` through the given order."""
        return self.moments[:order] == other.moments[:order]

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "two_moment":
            return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
        if self.kind == "four_moment":
            u = rng.random(shape)
            return np.where(u < 1.0 / 6.0, _SQRT3, np.where(u < 1.0 / 3.0, -_SQRT3, 0.0))
        raise ConfigError(f"unknown entry law '{self.kind}'")


@dataclass(frozen=True)
class SpectralIndex:
    """Within-bulk rank l at one edge of bulk k, with its global index."""

    k: int
    l: int
    side: str  # "right_edge" or "left_edge"
    alpha_prime: int


@dataclass(frozen=True)
class SampleDecomposition:
    """SVD of one sampled Y = Sigma^(1/2) X.

    ``lambdas`` are the nonincreasing eigenvalues of Y* Y (equivalently the
    squared singular values of Y), ``xi``/``zeta`` hold the left/right
    singular vectors as columns, and ``sigma`` keeps the population
    diagonal for downstream deterministic comparisons.
    """

    lambdas: np.ndarray  # (K,)
    xi: np.ndarray  # (M, K)
    zeta: np.ndarray  # (N, K)
    sigma: np.ndarray  # (M,)
    seed: object = None

    @property
    def M(self) -> int:
        return self.xi.shape[0]

    @property
    def N(self) -> int:
        return self.zeta.shape[0]

    @property
    def K(self) -> int:
        return self.lambdas.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Y from its factors."""
        return (self.xi * np.sqrt(self.lambdas)) @ self.zeta.T


def replicate_rng(seed, replicate: int = 0) -> np.random.Generator:
    """Counter-style derived stream: independent per (seed, replicate).

    Streams depend only on the pair, not on the order replicates run in.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate),)))


def sample_matrix(law: EntryLaw, M: int, N: int, seed_or_rng) -> np.ndarray:
    """Draw an M x N data matrix with i.i.d. law entries scaled by N^(-1/2)."""
    if M < 1 or N < 1:
        raise DomainError("M and N must be positive")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else replicate_rng(seed_or_rng)
    return law.draw(rng, (M, N)) / np.sqrt(N)


def _as_sigma_diagonal(sigma, M: int) -> np.ndarray:
    sig = np.asarray(sigma, dtype=float)
    if sig.ndim == 0:
        sig = np.full(M, float(sig))
    elif sig.ndim == 2:
        if sig.shape != (M, M) or np.any(sig != np.diag(np.diag(sig))):
            raise DomainError("Sigma must be diagonal")
        sig = np.diag(sig).astype(float)
    if sig.shape != (M,):
        raise DomainError(f"Sigma diagonal must have length {M}")
    if np.any(sig <= 0):
        raise DomainError("Sigma must be positive")
    return sig


def _fix_signs(xi: np.ndarray, zeta: np.ndarray):
    # Convention only: make the largest-magnitude entry of each zeta_k
    # positive.  Downstream observables are entry products and invariant.
    top = np.argmax(np.abs(zeta), axis=0)
    flip = zeta[top, np.arange(zeta.shape[1])] < 0
    zeta[:, flip] *= -1.0
    xi[:, flip] *= -1.0


def decompose(X: np.ndarray, sigma, seed=None) -> SampleDecomposition:
    """Full SVD bookkeeping of Y = Sigma^(1/2) X.

    Uses an eigendecomposition of the smaller Gram matrix at desk scale
    (min(M, N) <= 512) and a thin SVD beyond; the two paths agree to
    rounding and are cross-tested.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("X must be a 2-d array")
    M, N = X.shape
    sig = _as_sigma_diagonal(sigma, M)
    Y = np.sqrt(sig)[:, None] * X
    K = min(M, N)
    try:
        if K <= GRAM_PATH_LIMIT:
            if M <= N:
                w, U = np.linalg.eigh(Y @ Y.T)
                order = np.argsort(w)[::-1]
                lam = np.maximum(w[order], 0.0)
                xi = U[:, order]
                zeta = Y.T @ xi
                norms = np.linalg.norm(zeta, axis=0)
                zeta /= np.where(norms > 0, norms, 1.0)
            else:
                w, V = np.linalg.eigh(Y.T @ Y)
                order = np.argsort(w)[::-1]
                lam = np.maximum(w[order], 0.0)
                zeta = V[:, order]
                xi = Y @ zeta
                norms = np.linalg.norm(xi, axis=0)
                xi /= np.where(norms > 0, norms, 1.0)
        else:
            U, s, Vt = np.linalg.svd(Y, full_matrices=False)
            lam = s**2
            xi = U
            zeta = Vt.T
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"decomposition failed for M={M}, N={N}, "
            f"max|Y|={np.abs(Y).max():.3e}: {exc}"
        ) from exc
    xi = np.ascontiguousarray(xi)
    zeta = np.ascontiguousarray(zeta)
    _fix_signs(xi, zeta)
    return SampleDecomposition(lambdas=lam, xi=xi, zeta=zeta, sigma=sig, seed=seed)


# ---------------------------------------------------------------------------
# Index bookkeeping


def _bulk_counts(structure) -> tuple:
    counts = getattr(structure, "bulk_counts", structure)
    return tuple(int(c) for c in counts)


def alpha_prime(k: int, l: int, side: str, structure) -> SpectralIndex:
    """Global index of the rank-l eigenvalue at one edge of bulk k.

    ``side='right_edge'`` counts down from the top of the bulk,
    ``side='left_edge'`` counts up from the bottom.  ``structure`` may be a
    :class:`SpectrumStructure` or a bare sequence of bulk counts.
    """
    counts = _bulk_counts(structure)
    if not 1 <= k <= len(counts):
        raise DomainError(f"bulk index {k} outside 1..{len(counts)}")
    n_k = counts[k - 1]
    if not 1 <= l <= n_k:
        raise DomainError(f"rank l={l} outside 1..{n_k} in bulk {k}")
    below = sum(counts[: k - 1])
    if side == "right_edge":
        alpha = l + below
    elif side == "left_edge":
        alpha = -l + 1 + below + n_k
    else:
        raise DomainError("side must be 'right_edge' or 'left_edge'")
    return SpectralIndex(k=k, l=l, side=side, alpha_prime=alpha)


def alpha_prime_inverse(alpha: int, structure) -> SpectralIndex:
    """Bulk, rank and side of a global index (midpoint resolves to the right)."""
    counts = _bulk_counts(structure)
    total = sum(counts)
    if not 1 <= alpha <= total:
        raise DomainError(f"global index {alpha} outside 1..{total}")
    below = 0
    for k, n_k in enumerate(counts, start=1):
        if alpha <= below + n_k:
            i = alpha - below
            if i <= n_k + 1 - i:
                return SpectralIndex(k=k, l=i, side="right_edge", alpha_prime=alpha)
            return SpectralIndex(k=k, l=n_k + 1 - i, side="left_edge", alpha_prime=alpha)
        below += n_k
    raise DomainError("unreachable")  # pragma: no cover


def rescale_edge_eigenvalue(
    decomp: SampleDecomposition,
    structure: SpectrumStructure,
    k: int,
    h: int,
    side: str = "right_edge",
) -> float:
    """Edge eigenvalue on the curvature-normalized N^(2/3) scale.

    Right edge of bulk k: ``N^(2/3) (lambda_{k,h} - a_{2k-1}) / w_{2k-1}``;
    left edge: ``-N^(2/3) (lambda_{k,N_k-h+1} - a_{2k}) / w_{2k}`` with
    ``w`` the edge curvature constant.
    """
    counts = structure.bulk_counts
    if not 1 <= k <= len(counts):
        raise DomainError(f"bulk index {k} outside 1..{len(counts)}")
    n_k = counts[k - 1]
    if not 1 <= h <= n_k:
        raise DomainError(f"edge order h={h} outside 1..{n_k}")
    below = sum(counts[: k - 1])
    N = decomp.N
    if side == "right_edge":
        edge_idx = 2 * k - 2  # a_{2k-1}
        lam = decomp.lambdas[below + h - 1]
        sign = 1.0
    elif side == "left_edge":
        edge_idx = 2 * k - 1  # a_{2k}
        lam = decomp.lambdas[below + n_k - h]
        sign = -1.0
    else:
        raise DomainError("side must be 'right_edge' or 'left_edge'")
    curvature = structure.curvatures[edge_idx]
    if curvature is None:
        raise DomainError(f"edge {edge_idx + 1} has no curvature constant (hard edge)")
    return float(sign * N ** (2.0 / 3.0) * (lam - structure.edges[edge_idx]) / curvature)


# ---------------------------------------------------------------------------
# Binary cache

_MAGIC = b"CVSPDEC1"


def save_decompositions(path, decomps) -> None:
    """Write decompositions to a little-endian binary cache.

    Layout: magic, record count; per record a header (M, N, K, seed, law
    tag) followed by lambda, xi, zeta and the Sigma diagonal as float64.
    """
    decomps = list(decomps)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(decomps)))
        for d in decomps:
            seed = -1 if d.seed is None else int(d.seed)
            law = getattr(d, "law", "")
            fh.write(struct.pack("<QQQq16s", d.M, d.N, d.K, seed, str(law).encode()[:16]))
            for arr in (d.lambdas, d.xi, d.zeta, d.sigma):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_decompositions(path) -> list:
    """Read back a cache written by :func:`save_decompositions`."""
    out = []
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise DataError(f"{path}: not a decomposition cache")
        (count,) = struct.unpack("<Q", fh.read(8))
        for _ in range(count):
            M, N, K, seed, _law = struct.unpack("<QQQq16s", fh.read(48))

            def block(n):
                raw = fh.read(8 * n)
                if len(raw) != 8 * n:
                    raise DataError(f"{path}: truncated cache")
                return np.frombuffer(raw, dtype="<f8").copy()

            lam = block(K)
            xi = block(M * K).reshape(M, K)
            zeta = block(N * K).reshape(N, K)
            sigma = block(M)
            out.append(
                SampleDecomposition(
                    lambdas=lam, xi=xi, zeta=zeta, sigma=sigma, seed=None if seed == -1 else seed
                )
            )
    return out
