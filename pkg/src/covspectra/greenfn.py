"""Linearized block resolvent probes for one sample decomposition.

For ``Y = Sigma^(1/2) X`` the linearized matrix is

    H(z) = [[-z I_M,    z^(1/2) Y],
            [z^(1/2) Y*, -z I_N ]],      G(z) = H(z)^(-1),

whose blocks carry the resolvents of Y Y* and Y* Y.  G has the spectral
form (w_k = 1/(lambda_k - z))

    G = sum_k w_k [[xi_k xi_k*,             z^(-1/2) sqrt(lambda_k) xi_k zeta_k*],
                   [z^(-1/2) sqrt(lambda_k) zeta_k xi_k*,  zeta_k zeta_k*      ]]
        - z^(-1) [[I - Xi Xi*, 0], [0, I - Z Z*]],

where the complement projectors pick up the trivial zero singular values.
Production probes never materialize G densely; bilinear forms cost
O((M+N) K).  The square root of z is the principal branch, so Im z > 0
puts arg z^(1/2) in (0, pi/2).

Deterministic counterparts: ``Pi(z)`` (diagonal, from the self-consistent
``m(z)``) and the fluctuation scale ``Psi(z) = sqrt(Im m / (N eta)) + 1/(N eta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ensembles import SampleDecomposition
from .errors import DomainError
from .mplaw import PopulationSpectrum, solve_m

__all__ = [
    "GreenEvaluation",
    "build_green",
    "build_h_matrix",
    "tilde_green",
    "anisotropic_error",
    "smoothed_counting",
    "sharp_counting",
]


def _spec_of(decomp: SampleDecomposition) -> PopulationSpectrum:
    return PopulationSpectrum.from_sigma_values(decomp.sigma, decomp.N)


def build_h_matrix(Y: np.ndarray, z: complex) -> np.ndarray:
    """Dense linearized matrix H(z); oracle path for small instances."""
    if np.imag(z) <= 0:
        raise DomainError("H(z) oracle requires Im z > 0")
    M, N = Y.shape
    sz = np.sqrt(complex(z))
    H = np.zeros((M + N, M + N), dtype=complex)
    H[:M, :M] = -z * np.eye(M)
    H[M:, M:] = -z * np.eye(N)
    H[:M, M:] = sz * Y
    H[M:, :M] = sz * Y.T
    return H


@dataclass
class GreenEvaluation:
    """G(z) of one decomposition in factored form, with Pi, Psi, m1, m2.

    ``bilinear(u, v)`` evaluates u^T G(z) v without forming G; ``matrix()``
    materializes it (tests and small instances only).  ``m`` is the
    deterministic Stieltjes transform used by Pi and Psi; ``m2`` is the
    empirical one and equals the normalized trace of the lower-right block
    of G by construction.
    """

    z: complex
    decomp: SampleDecomposition
    m: complex
    m1: complex
    m2: complex
    Psi: float

    def __post_init__(self):
        d = self.decomp
        self._w = 1.0 / (d.lambdas - self.z)
        self._off = np.sqrt(d.lambdas + 0j) * self._w / np.sqrt(complex(self.z))
        self._comp = -1.0 / self.z

    @property
    def M(self) -> int:
        return self.decomp.M

    @property
    def N(self) -> int:
        return self.decomp.N

    def bilinear(self, u, v) -> complex:
        """u^T G(z) v for vectors of length M + N (real or complex)."""
        d = self.decomp
        M = d.M
        u = np.asarray(u)
        v = np.asarray(v)
        if u.shape != (M + d.N,) or v.shape != (M + d.N,):
            raise DomainError(f"probe vectors must have length {M + d.N}")
        a, b = d.xi.T @ u[:M], d.zeta.T @ u[M:]
        c, e = d.xi.T @ v[:M], d.zeta.T @ v[M:]
        out = np.sum(self._w * (a * c + b * e)) + np.sum(self._off * (a * e + b * c))
        if d.K < M:
            out += self._comp * (u[:M] @ v[:M] - a @ c)
        if d.K < d.N:
            out += self._comp * (u[M:] @ v[M:] - b @ e)
        return complex(out)

    def entry(self, s: int, t: int) -> complex:
        """G_{st} with 0-based global indices (block I1 then I2)."""
        d = self.decomp
        M, K = d.M, d.K
        us = d.xi[s] if s < M else d.zeta[s - M]
        vt = d.xi[t] if t < M else d.zeta[t - M]
        same_block = (s < M) == (t < M)
        if same_block:
            out = np.sum(self._w * us * vt)
            deficient = K < M if s < M else K < d.N
            if deficient:
                out += self._comp * (float(s == t) - us @ vt)
        else:
            out = np.sum(self._off * us * vt)
        return complex(out)

    def matrix(self) -> np.ndarray:
        """Dense G(z); quadratic memory, intended for small instances."""
        d = self.decomp
        M, N, K = d.M, d.N, d.K
        G = np.zeros((M + N, M + N), dtype=complex)
        G[:M, :M] = (d.xi * self._w) @ d.xi.T
        G[M:, M:] = (d.zeta * self._w) @ d.zeta.T
        off = (d.xi * self._off) @ d.zeta.T
        G[:M, M:] = off
        G[M:, :M] = off.T
        if K < M:
            G[:M, :M] += self._comp * (np.eye(M) - d.xi @ d.xi.T)
        if K < N:
            G[M:, M:] += self._comp * (np.eye(N) - d.zeta @ d.zeta.T)
        return G

    def pi_diagonal(self) -> np.ndarray:
        """Diagonal of Pi(z): -1/(z (1 + m sigma_i)) on I1, m on I2."""
        d = self.decomp
        top = -1.0 / (self.z * (1.0 + self.m * d.sigma))
        return np.concatenate([top, np.full(d.N, self.m, dtype=complex)])

    def pi_matrix(self) -> np.ndarray:
        return np.diag(self.pi_diagonal())


def build_green(decomp: SampleDecomposition, z: complex, spec: PopulationSpectrum | None = None) -> GreenEvaluation:
    """Assemble the factored G(z) with its deterministic counterparts."""
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("build_green requires Im z > 0")
    if spec is None:
        spec = _spec_of(decomp)
    m = solve_m(z, spec).m
    d = decomp
    w = 1.0 / (d.lambdas - z)
    m1 = (np.sum(w) + max(d.M - d.K, 0) * (-1.0 / z)) / d.M
    m2 = (np.sum(w) + max(d.N - d.K, 0) * (-1.0 / z)) / d.N
    eta = z.imag
    psi = float(np.sqrt(max(m.imag, 0.0) / (d.N * eta)) + 1.0 / (d.N * eta))
    return GreenEvaluation(z=z, decomp=decomp, m=m, m1=complex(m1), m2=complex(m2), Psi=psi)


def tilde_green(decomp: SampleDecomposition, E: float, eta: float, indices) -> float:
    """Poisson-kernel-weighted singular vector correlation at E + i eta.

    For two indices in the same block this is

        sum_beta eta / ((E - lambda_beta)^2 + eta^2) * v_beta(s) v_beta(t)

    over the full orthonormal system (trivial zero singular values
    included), which equals (G_{st}(z) - G_{st}(conj z)) / 2i entrywise.
    """
    if eta <= 0:
        raise DomainError("tilde_green requires eta > 0")
    s, t = indices
    d = decomp
    M, N, K = d.M, d.N, d.K
    if not (0 <= s < M + N and 0 <= t < M + N):
        raise DomainError("indices out of range")
    if (s < M) != (t < M):
        raise DomainError("both indices must lie in the same block")
    weights = eta / ((E - d.lambdas) ** 2 + eta**2)
    w0 = eta / (E**2 + eta**2)
    if s < M:
        vs, vt = d.xi[s], d.xi[t]
        deficient = K < M
    else:
        vs, vt = d.zeta[s - M], d.zeta[t - M]
        deficient = K < N
    out = np.sum(weights * vs * vt)
    if deficient:
        out += w0 * (float(s == t) - vs @ vt)
    return float(out)


def anisotropic_error(decomp: SampleDecomposition, spec: PopulationSpectrum, z: complex, u, v) -> float:
    """|< u, S^(-1) (G(z) - Pi(z)) S^(-1) v >| for unit probe vectors.

    ``S`` is the block scaling diag(z^(-1/2) Sigma^(1/2), I); its inverse
    multiplies the I1 components by z^(1/2) sigma_i^(-1/2).
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("anisotropic_error requires Im z > 0")
    d = decomp
    M = d.M
    u = np.asarray(u, dtype=complex).copy()
    v = np.asarray(v, dtype=complex).copy()
    scale = np.sqrt(z) / np.sqrt(d.sigma.astype(complex))
    u[:M] *= scale
    v[:M] *= scale
    ge = build_green(decomp, z, spec)
    pi = ge.pi_diagonal()
    return float(abs(ge.bilinear(u, v) - np.sum(u * pi * v)))


def smoothed_counting(decomp: SampleDecomposition, E1: float, E2: float, eta_s: float) -> float:
    """Eigenvalue count of Y* Y on [E1, E2], smoothed on scale eta_s.

    Equals ``(N/pi) * integral of Im m2(w + i eta_s) over [E1, E2]``; the
    w-integral of each Poisson kernel is an arctan difference, so the
    quadrature is exact up to rounding.  Trivial zero eigenvalues are
    included (N > M case).
    """
    if eta_s <= 0:
        raise DomainError("smoothing scale must be positive")
    if not E1 < E2:
        raise DomainError("need E1 < E2")
    lam = _all_eigenvalues(decomp)
    terms = np.arctan((E2 - lam) / eta_s) - np.arctan((E1 - lam) / eta_s)
    return float(terms.sum() / np.pi)


def sharp_counting(decomp: SampleDecomposition, E1: float, E2: float) -> int:
    """Exact eigenvalue count of Y* Y on [E1, E2], zero eigenvalues included."""
    if not E1 < E2:
        raise DomainError("need E1 < E2")
    lam = _all_eigenvalues(decomp)
    return int(np.count_nonzero((lam >= E1) & (lam <= E2)))


def _all_eigenvalues(decomp: SampleDecomposition) -> np.ndarray:
    extra = decomp.N - decomp.K
    if extra > 0:
        return np.concatenate([decomp.lambdas, np.zeros(extra)])
    return decomp.lambdas
