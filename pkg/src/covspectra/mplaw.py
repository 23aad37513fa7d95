"""Deformed Marchenko-Pastur machinery for general diagonal populations.

Deterministic spectral theory for sample covariance matrices built from
``Y = Sigma^(1/2) X`` where ``X`` is ``M x N`` with i.i.d. entries of
variance ``1/N``.  The limiting eigenvalue density ``rho`` of ``Y* Y`` is
encoded by the unique Stieltjes transform ``m(z)`` solving

    1/m = -z + (1/r) * sum_i w_i * sigma_i / (1 + m * sigma_i),

with ``r = N/M`` and ``(sigma_i, w_i)`` the distinct population eigenvalues
and their weights.  Equivalently ``z = f(m)`` with

    f(x) = -1/x + (1/r) * sum_i w_i / (x + 1/sigma_i).

Everything here is a pure function of a :class:`PopulationSpectrum`:
critical points of ``f`` and the support edges, bulk components and their
eigenvalue counts, the density, classical (quantile) eigenvalue locations,
regularity diagnostics and the square-root edge exponent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, SolverError, StructureError

__all__ = [
    "PopulationSpectrum",
    "StieltjesValue",
    "SpectrumStructure",
    "ClassicalLocations",
    "RegularityReport",
    "EdgeRegularity",
    "BulkRegularity",
    "EdgeProximityWarning",
    "eval_f",
    "eval_f_prime",
    "eval_f_second",
    "solve_m",
    "solve_m_grid",
    "find_spectrum_structure",
    "density",
    "density_grid",
    "classical_locations",
    "check_regularity",
    "square_root_fit",
]

# Default eta ladder for evaluating the density on the real axis.
DENSITY_ETAS = (1e-5, 5e-6, 2.5e-6)

# Probe count per interval in the critical-point scan (tunable).
CRITICAL_POINT_PROBES = 256

# Two roots of f' closer than this are treated as one degenerate critical
# point counted twice.
DEGENERATE_SPACING = 1e-7


class EdgeProximityWarning(UserWarning):
    """Density requested within 1e-9 of a spectral edge."""


@dataclass(frozen=True)
class PopulationSpectrum:
    """Distinct population eigenvalues with weights, plus the aspect ratio.

    ``sigma`` must be strictly decreasing and positive; ``weights`` are the
    multiplicities divided by ``M`` and must sum to one.  ``r = N/M`` is the
    aspect ratio of the data matrix.
    """

    sigma: tuple
    weights: tuple
    M: int
    N: int

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        self._validate()

    def _validate(self, tau: float = 1e-8):
        if len(self.sigma) == 0:
            raise DomainError("sigma must be nonempty")
        if len(self.sigma) != len(self.weights):
            raise DomainError("sigma and weights must have equal length")
        if not (isinstance(self.M, int) and isinstance(self.N, int)):
            raise DomainError("M and N must be integers")
        if self.M < 1 or self.N < 1:
            raise DomainError("M and N must be positive")
        sig = np.asarray(self.sigma)
        if np.any(sig <= 0):
            raise DomainError("all sigma must be positive")
        if np.any(np.diff(sig) >= 0):
            raise DomainError("sigma must be strictly decreasing")
        wts = np.asarray(self.weights)
        if np.any(wts <= 0):
            raise DomainError("all weights must be positive")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {wts.sum()!r}, expected 1")
        if not (tau < sig[-1] and sig[0] <= 1.0 / tau):
            raise DomainError(f"sigma outside [{tau}, {1/tau}]")
        if not (tau <= self.r <= 1.0 / tau):
            raise DomainError(f"aspect ratio r={self.r} outside [{tau}, {1/tau}]")

    @property
    def r(self) -> float:
        return self.N / self.M

    @property
    def zero_atom_mass(self) -> float:
        """Mass of the trivial zero eigenvalues of Y*Y (present when N > M)."""
        return max(0.0, 1.0 - 1.0 / self.r)

    @classmethod
    def from_config(cls, cfg: dict) -> "PopulationSpectrum":
        """Build from a ``{sigma, weights, M, N}`` record with validation."""
        for key in ("sigma", "weights", "M", "N"):
            if key not in cfg:
                raise DomainError(f"missing field '{key}' in spectrum config")
        return cls(
            sigma=tuple(cfg["sigma"]),
            weights=tuple(cfg["weights"]),
            M=int(cfg["M"]),
            N=int(cfg["N"]),
        )

    @classmethod
    def from_sigma_values(cls, values, N: int) -> "PopulationSpectrum":
        """Build from the full length-M diagonal of Sigma (values may repeat)."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("sigma diagonal must be a nonempty 1-d array")
        uniq, counts = np.unique(values, return_counts=True)
        order = np.argsort(uniq)[::-1]
        M = int(values.size)
        return cls(
            sigma=tuple(uniq[order]),
            weights=tuple(counts[order] / M),
            M=M,
            N=int(N),
        )

    def sigma_diagonal(self) -> np.ndarray:
        """Expand back to the length-M diagonal (descending)."""
        counts = np.rint(np.asarray(self.weights) * self.M).astype(int)
        if counts.sum() != self.M:
            raise DomainError("weights are not multiples of 1/M")
        return np.repeat(np.asarray(self.sigma), counts)


@dataclass(frozen=True)
class StieltjesValue:
    """One solution of the self-consistent equation at a spectral point."""

    z: complex
    m: complex
    residual: float


@dataclass(frozen=True)
class SpectrumStructure:
    """Critical points, edges and bulk decomposition of the limiting law.

    ``critical_points[j]`` corresponds to ``edges[j]``; an infinite critical
    point (square case ``r == 1``) is stored as ``math.inf`` with
    ``has_infinite_critical_point`` set and edge value 0.  Curvature entries
    are ``(|f''(x)|/2)^(1/3)`` and ``None`` for the infinite point.
    """

    critical_points: tuple
    edges: tuple
    p: int
    bulk_intervals: tuple
    bulk_counts: tuple
    bulk_masses: tuple
    curvatures: tuple
    zero_atom_mass: float
    has_infinite_critical_point: bool
    degenerate_indices: tuple = ()

    def bulk_of(self, E: float, atol: float = 0.0) -> int:
        """Return the 1-based bulk index containing E, or 0 if in a gap."""
        for k, (lo, hi) in enumerate(self.bulk_intervals, start=1):
            if lo + atol < E < hi - atol:
                return k
        return 0


@dataclass(frozen=True)
class ClassicalLocations:
    """Deterministic quantile locations of one bulk component.

    ``gamma[i-1]`` carries mass ``(i - 1/2)/N`` between itself and the top
    edge of bulk ``k``; the array is strictly decreasing.
    """

    k: int
    gamma: np.ndarray


@dataclass(frozen=True)
class EdgeRegularity:
    edge: int
    a: float
    min_gap: float
    min_pole_distance: float
    ok: bool


@dataclass(frozen=True)
class BulkRegularity:
    k: int
    min_density: float
    gamma_min: float
    ok: bool


@dataclass(frozen=True)
class RegularityReport:
    tau: float
    tau_prime: float
    edge_checks: tuple
    bulk_checks: tuple
    edges_regular: bool
    bulks_regular: bool
    gammas_above_tau: bool

    @property
    def all_ok(self) -> bool:
        return self.edges_regular and self.bulks_regular and self.gammas_above_tau


# ---------------------------------------------------------------------------
# f and its derivatives


def _arrays(spec: PopulationSpectrum):
    sig = np.asarray(spec.sigma)
    return sig, np.asarray(spec.weights), 1.0 / sig


def eval_f(x, spec: PopulationSpectrum):
    """Evaluate f(x) = -1/x + (1/r) sum_i w_i / (x + 1/sigma_i).

    ``x`` may be real or complex, scalar or array.  Real pole inputs (0 or
    any -1/sigma_i) raise :class:`DomainError`.
    """
    x_arr = np.asarray(x)
    sig, wts, s_inv = _arrays(spec)
    if not np.iscomplexobj(x_arr):
        if np.any(x_arr == 0):
            raise DomainError("f has a pole at x = 0")
        hits = x_arr[..., None] + s_inv == 0
        if np.any(hits):
            i = int(np.argwhere(np.any(hits, axis=tuple(range(hits.ndim - 1))))[0])
            raise DomainError(f"f has a pole at x = -1/sigma_{i+1} = {float(-s_inv[i])}")
    terms = wts / (x_arr[..., None] + s_inv)
    out = -1.0 / x_arr + terms.sum(axis=-1) / spec.r
    return out if out.shape else out[()]


def eval_f_prime(x, spec: PopulationSpectrum):
    """First derivative f'(x) = 1/x^2 - (1/r) sum_i w_i / (x + 1/sigma_i)^2."""
    x_arr = np.asarray(x)
    _, wts, s_inv = _arrays(spec)
    terms = wts / (x_arr[..., None] + s_inv) ** 2
    out = 1.0 / x_arr**2 - terms.sum(axis=-1) / spec.r
    return out if out.shape else out[()]


def eval_f_second(x, spec: PopulationSpectrum):
    """Second derivative f''(x) = -2/x^3 + (2/r) sum_i w_i / (x + 1/sigma_i)^3."""
    x_arr = np.asarray(x)
    _, wts, s_inv = _arrays(spec)
    terms = wts / (x_arr[..., None] + s_inv) ** 3
    out = -2.0 / x_arr**3 + 2.0 * terms.sum(axis=-1) / spec.r
    return out if out.shape else out[()]


# ---------------------------------------------------------------------------
# Self-consistent solver


def _fixed_point_map(m, z, spec):
    _, wts, s_inv = _arrays(spec)
    s = (wts / (m[..., None] + s_inv)).sum(axis=-1) / spec.r
    return 1.0 / (-z + s)


def solve_m_grid(
    z,
    spec: PopulationSpectrum,
    tol: float = 1e-13,
    max_newton: int = 80,
    ladder_start: float = 1.0,
    ladder_ratio: float = 0.25,
) -> np.ndarray:
    """Solve the self-consistent equation at each point of a z array.

    Points may have ``Im z > 0`` or be real (caller asserts a gap to the
    support for real inputs).  The solver runs a damped fixed-point /
    Newton iteration with continuation in decreasing imaginary part, so
    points arbitrarily close to the real axis stay on the upper branch.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    eta_target = z.imag.copy()
    if np.any(eta_target < 0):
        raise DomainError("solve_m requires Im z >= 0")
    e_part = z.real

    eta_floor = max(min(eta_target[eta_target > 0], default=1e-9), 1e-9)
    rungs = [ladder_start]
    while rungs[-1] > eta_floor:
        rungs.append(rungs[-1] * ladder_ratio)
    rungs.append(0.0)  # final rung solves at the exact targets

    m = -1.0 / (e_part + 1j * np.maximum(eta_target, ladder_start))
    tol_abs = tol * np.maximum(1.0, np.abs(z))
    with np.errstate(all="ignore"):
        for eta_k in rungs:
            zk = e_part + 1j * np.maximum(eta_target, eta_k)
            for _ in range(3):
                m_new = _fixed_point_map(m, zk, spec)
                m = np.where(np.isfinite(m_new), 0.5 * m + 0.5 * m_new, m)
            resid = np.abs(eval_f(m, spec) - zk)
            for _ in range(max_newton):
                done = resid <= tol_abs
                if np.all(done):
                    break
                step = (eval_f(m, spec) - zk) / eval_f_prime(m, spec)
                m_nt = m - step
                # Newton is only trusted for finite, branch-preserving,
                # moderate steps; otherwise fall back to the (globally
                # convergent for Im z > 0) damped fixed-point map.
                trust = np.isfinite(m_nt)
                trust &= np.abs(step) <= 0.5 * (1.0 + np.abs(m))
                trust &= ~((m_nt.imag < 0) & (zk.imag > 0))
                m_fp = _fixed_point_map(m, zk, spec)
                m_fp = np.where(np.isfinite(m_fp), 0.5 * m + 0.5 * m_fp, m)
                m_cand = np.where(trust, m_nt, m_fp)
                resid_cand = np.abs(eval_f(m_cand, spec) - zk)
                m_cand = np.where(resid_cand > resid, m_fp, m_cand)
                resid_cand = np.abs(eval_f(m_cand, spec) - zk)
                m = np.where(done, m, m_cand)
                resid = np.where(done, resid, resid_cand)

    resid = np.abs(eval_f(m, spec) - z)
    if np.any(resid > tol_abs):
        worst = float(resid.max())
        raise SolverError(
            f"self-consistent solve did not converge (max residual {worst:.3e})",
            residual=worst,
        )
    real_target = eta_target == 0
    if np.any(real_target):
        m = np.where(real_target, m.real + 1j * np.maximum(m.imag, 0.0), m)
    return m


def solve_m(z, spec: PopulationSpectrum, tol: float = 1e-13) -> StieltjesValue:
    """Solve for m(z) at a single point; see :func:`solve_m_grid`."""
    m = solve_m_grid(np.array([z], dtype=complex), spec, tol=tol)[0]
    residual = float(abs(eval_f(m, spec) - z))
    return StieltjesValue(z=complex(z), m=complex(m), residual=residual)


# ---------------------------------------------------------------------------
# Support structure


def _chebyshev_probes(lo: float, hi: float, n: int) -> np.ndarray:
    # Chebyshev nodes cluster near the endpoints, where f' diverges.
    k = np.arange(1, n + 1)
    x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k - 1) * np.pi / (2 * n))
    return np.sort(x)


def _refine_root(fn, a: float, b: float) -> float:
    return float(brentq(fn, a, b, xtol=1e-12, rtol=8.9e-16, maxiter=200))


def _scan_interval(spec, lo, hi, expect, probes):
    """Roots of f' inside (lo, hi); endpoints are poles of f'."""
    pad = (hi - lo) * 1e-12
    grid = np.concatenate(([lo + pad], _chebyshev_probes(lo + pad, hi - pad, probes), [hi - pad]))
    vals = eval_f_prime(grid, spec)
    fn = lambda x: eval_f_prime(x, spec)
    roots = []
    sign_change = np.nonzero(np.diff(np.signbit(vals)))[0]
    for idx in sign_change:
        roots.append(_refine_root(fn, grid[idx], grid[idx + 1]))
    degenerate = False
    if expect == "pair" and not roots:
        # f' -> -inf at both endpoints: a grazing maximum may hide a
        # degenerate (double) critical point.
        top = minimize_scalar(lambda x: -fn(x), bounds=(lo + pad, hi - pad), method="bounded")
        if abs(top.fun) <= 1e-10:
            roots = [float(top.x), float(top.x)]
            degenerate = True
    if expect == "pair" and len(roots) == 2 and not degenerate:
        if abs(roots[0] - roots[1]) < DEGENERATE_SPACING:
            mid = 0.5 * (roots[0] + roots[1])
            roots = [mid, mid]
            degenerate = True
    if expect == "single" and len(roots) != 1:
        raise StructureError(
            f"expected one critical point in ({lo:.6g}, {hi:.6g}), found {len(roots)}"
        )
    if expect == "pair" and len(roots) not in (0, 2):
        raise StructureError(
            f"expected 0 or 2 critical points in ({lo:.6g}, {hi:.6g}), found {len(roots)}"
        )
    return roots, degenerate


def _outer_interval_root(spec):
    """Critical point in the unbounded interval, via u = 1/x.

    ``H(u) = 1 - (1/r) sum_i w_i / (1 + u/sigma_i)`` squared terms is
    strictly increasing where all ``1 + u/sigma_i > 0``; its root gives the
    outer critical point.  ``H(0) = 1 - 1/r``, so the square case r == 1
    has the critical point at infinity.
    """
    sig, wts, _ = _arrays(spec)

    def H(u):
        return 1.0 - (wts / (1.0 + u / sig) ** 2).sum() / spec.r

    if spec.N == spec.M:
        return math.inf, True
    if spec.r > 1:
        sig_min = sig[-1]
        a = -sig_min * (1 - 1e-13)
        while H(a) > 0:
            a = -sig_min + (a + sig_min) * 0.1
        u = _refine_root(H, a, -1e-300)
    else:
        b = 1.0
        while H(b) <= 0:
            b *= 2.0
            if b > 1e12:
                raise StructureError("failed to bracket the outer critical point")
        u = _refine_root(H, 1e-300, b)
    return 1.0 / u, False


@lru_cache(maxsize=128)
def _geometry(spec: PopulationSpectrum, probes: int = CRITICAL_POINT_PROBES):
    """Critical points, edges and bulk intervals (no masses yet)."""
    sig, _, s_inv = _arrays(spec)
    inner = []
    degenerate_at = []
    roots, _ = _scan_interval(spec, -s_inv[0], 0.0, "single", probes)
    inner.extend(roots)
    for i in range(1, len(sig)):
        roots, deg = _scan_interval(spec, -s_inv[i], -s_inv[i - 1], "pair", probes)
        if deg:
            degenerate_at.extend(roots[:1])
        inner.extend(roots)
    if len(inner) % 2 != 1:
        raise StructureError(f"found {len(inner)} interior critical points, expected odd count")
    inner = sorted(inner, reverse=True)
    x_outer, at_infinity = _outer_interval_root(spec)

    xs = inner + [x_outer]
    edges = [float(eval_f(x, spec)) for x in inner]
    edges.append(0.0 if at_infinity else float(eval_f(x_outer, spec)))
    p = len(xs) // 2
    for j in range(len(edges) - 1):
        if edges[j] < edges[j + 1] - 1e-9:
            raise StructureError("computed edges are not in decreasing order")
    curvatures = []
    for j, x in enumerate(xs):
        if math.isinf(x):
            curvatures.append(None)
        else:
            curvatures.append(float((abs(eval_f_second(x, spec)) / 2.0) ** (1.0 / 3.0)))
    intervals = tuple((edges[2 * k + 1], edges[2 * k]) for k in range(p))
    deg_idx = tuple(j for j, x in enumerate(xs) if any(x == d for d in degenerate_at))
    return tuple(xs), tuple(edges), p, intervals, tuple(curvatures), at_infinity, deg_idx


def find_spectrum_structure(spec: PopulationSpectrum, probes: int = CRITICAL_POINT_PROBES) -> SpectrumStructure:
    """Locate all critical points of f, the edges, bulks, counts and curvatures."""
    xs, edges, p, intervals, curvatures, at_inf, deg = _geometry(spec, probes)
    masses = tuple(_bulk_table(spec, k).mass for k in range(1, p + 1))
    counts = tuple(int(round(spec.N * mk)) for mk in masses)
    return SpectrumStructure(
        critical_points=xs,
        edges=edges,
        p=p,
        bulk_intervals=intervals,
        bulk_counts=counts,
        bulk_masses=masses,
        curvatures=curvatures,
        zero_atom_mass=spec.zero_atom_mass,
        has_infinite_critical_point=at_inf,
        degenerate_indices=deg,
    )


# ---------------------------------------------------------------------------
# Density


def _density_points(E: np.ndarray, spec: PopulationSpectrum, kappa: np.ndarray, etas) -> np.ndarray:
    """Im m / pi at interior points, Richardson-extrapolated in eta.

    ``kappa`` is the distance to the nearest edge; the eta ladder shrinks
    near the edges so the extrapolation stays inside its convergence range.
    """
    base = np.minimum(etas[0], kappa / 50.0)
    vals = []
    for scale in (1.0, 0.5, 0.25):
        m = solve_m_grid(E + 1j * base * scale, spec)
        vals.append(m.imag / np.pi)
    v0, v1, v2 = vals
    r1 = 2.0 * v1 - v0
    r2 = 2.0 * v2 - v1
    rho = r2 + (r2 - r1) / 3.0
    return np.maximum(rho, 0.0)


def density_grid(E, spec: PopulationSpectrum, etas=DENSITY_ETAS) -> np.ndarray:
    """Continuous part of the limiting density at each point of an array.

    Returns 0 outside the bulk intervals (the zero atom is reported
    separately on :class:`SpectrumStructure`).  Warns when a point sits
    within 1e-9 of an edge, where the square-root behavior makes the
    extrapolation ill-conditioned.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    if np.any(E <= 0):
        raise DomainError("density is defined for E > 0")
    xs, edges, p, intervals, _, _, _ = _geometry(spec)
    edge_arr = np.asarray(edges)
    near = np.abs(E[:, None] - edge_arr).min(axis=1)
    if np.any(near < 1e-9):
        warnings.warn(
            "density evaluated within 1e-9 of a spectral edge",
            EdgeProximityWarning,
            stacklevel=2,
        )
    inside = np.zeros(E.shape, dtype=bool)
    kappa = np.empty_like(E)
    for lo, hi in intervals:
        mask = (E > lo) & (E < hi)
        inside |= mask
        kappa[mask] = np.minimum(E[mask] - lo, hi - E[mask])
    out = np.zeros_like(E)
    if np.any(inside):
        out[inside] = _density_points(E[inside], spec, kappa[inside], etas)
    return out


def density(E: float, spec: PopulationSpectrum, etas=DENSITY_ETAS) -> float:
    """Scalar wrapper around :func:`density_grid`."""
    return float(density_grid(np.array([float(E)]), spec, etas)[0])


# ---------------------------------------------------------------------------
# Classical locations via cumulative quadrature


_GL_NODES, _GL_WEIGHTS = leggauss(8)


def _panel_integrals(fn, a: float, b: float, n_panels: int):
    """Composite 8-point Gauss-Legendre integrals of fn over n equal panels."""
    bounds = np.linspace(a, b, n_panels + 1)
    half = 0.5 * (bounds[1:] - bounds[:-1])
    mid = 0.5 * (bounds[1:] + bounds[:-1])
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(nodes.ravel()).reshape(nodes.shape)
    return bounds, (vals * _GL_WEIGHTS[None, :]).sum(axis=1) * half


def _partial_panel(fn, a, x):
    """Vectorized GL8 integral of fn from a (array) to x (array)."""
    half = 0.5 * (x - a)
    mid = 0.5 * (x + a)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(nodes.ravel()).reshape(nodes.shape)
    return (vals * _GL_WEIGHTS[None, :]).sum(axis=1) * half


class _HalfBulkTable:
    """Cumulative mass of one half of a bulk in a square-root variable.

    The substitution ``x = edge -/+ u^2`` removes the square-root edge
    singularity, so the integrand ``2 u rho`` is smooth and composite
    Gauss-Legendre converges at spectral rate.
    """

    def __init__(self, spec, edge: float, sign: float, u_max: float, n_panels: int):
        self.spec = spec
        self.edge = edge
        self.sign = sign  # -1: integrate downward from a right edge; +1: upward from a left edge
        self.u_max = u_max
        fn = self._integrand
        self.bounds, panel = _panel_integrals(fn, 0.0, u_max, n_panels)
        self.cum = np.concatenate(([0.0], np.cumsum(panel)))
        self.mass = float(self.cum[-1])
        self._inverse = PchipInterpolator(self.cum, self.bounds)

    def _integrand(self, u):
        x = self.edge + self.sign * u**2
        return 2.0 * u * density_grid(x, self.spec)

    def cumulative(self, u):
        """Mass between the edge and ``edge + sign*u^2`` (vectorized)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        idx = np.clip(np.searchsorted(self.bounds, u) - 1, 0, len(self.bounds) - 2)
        return self.cum[idx] + _partial_panel(self._integrand, self.bounds[idx], u)

    def invert(self, targets):
        """u values whose cumulative mass equals each target, by Newton."""
        t = np.atleast_1d(np.asarray(targets, dtype=float))
        u = np.clip(self._inverse(t), 1e-12, self.u_max)
        for _ in range(4):
            g = self._integrand(u)
            resid = self.cumulative(u) - t
            step = np.where(g > 0, resid / np.maximum(g, 1e-300), 0.0)
            u = np.clip(u - step, 1e-12, self.u_max)
        return u


class _BulkTable:
    """Mass bookkeeping of one bulk: split at midpoint, both halves substituted."""

    def __init__(self, spec, lo: float, hi: float, n_panels: int = 200):
        mid = 0.5 * (lo + hi)
        self.lo, self.hi = lo, hi
        self.top = _HalfBulkTable(spec, hi, -1.0, math.sqrt(hi - mid), n_panels)
        self.bottom = _HalfBulkTable(spec, lo, +1.0, math.sqrt(mid - lo), n_panels)
        self.mass = self.top.mass + self.bottom.mass

    def mass_from_top(self, x):
        """Integral of rho over [x, hi] (vectorized)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        upper = x >= 0.5 * (self.lo + self.hi)
        if np.any(upper):
            out[upper] = self.top.cumulative(np.sqrt(np.maximum(self.hi - x[upper], 0.0)))
        if np.any(~upper):
            v = np.sqrt(np.maximum(x[~upper] - self.lo, 0.0))
            out[~upper] = self.mass - self.bottom.cumulative(v)
        return out

    def quantiles_from_top(self, targets):
        """Locations x with ``mass_from_top(x) == target`` for each target."""
        t = np.atleast_1d(np.asarray(targets, dtype=float))
        if np.any(t <= 0) or np.any(t > self.mass + 1e-12):
            raise DomainError("quantile target outside the bulk mass range")
        out = np.empty_like(t)
        upper = t <= self.top.mass
        if np.any(upper):
            u = self.top.invert(t[upper])
            out[upper] = self.hi - u**2
        if np.any(~upper):
            v = self.bottom.invert(np.maximum(self.mass - t[~upper], 1e-300))
            out[~upper] = self.lo + v**2
        return out


@lru_cache(maxsize=256)
def _bulk_table(spec: PopulationSpectrum, k: int) -> _BulkTable:
    _, _, p, intervals, _, _, _ = _geometry(spec)
    if not 1 <= k <= p:
        raise DomainError(f"bulk index {k} outside 1..{p}")
    lo, hi = intervals[k - 1]
    return _BulkTable(spec, lo, hi)


def classical_locations(
    k: int, spec: PopulationSpectrum, structure: SpectrumStructure | None = None
) -> ClassicalLocations:
    """Quantile locations gamma_{k,i}, i = 1..N_k, of bulk component k.

    ``gamma_{k,i}`` carries mass ``(i - 1/2)/N`` between itself and the
    upper edge of the bulk; the returned array is strictly decreasing.
    """
    if structure is None:
        structure = find_spectrum_structure(spec)
    if not 1 <= k <= structure.p:
        raise DomainError(f"bulk index {k} outside 1..{structure.p}")
    table = _bulk_table(spec, k)
    n_k = structure.bulk_counts[k - 1]
    targets = (np.arange(1, n_k + 1) - 0.5) / spec.N
    if targets[-1] > table.mass:
        raise DomainError(
            f"bulk {k} mass {table.mass:.6g} cannot hold {n_k} classical locations"
        )
    gamma = table.quantiles_from_top(targets)
    if np.any(np.diff(gamma) >= 0):
        raise SolverError("classical locations failed to come out strictly decreasing")
    return ClassicalLocations(k=k, gamma=gamma)


def classical_locations_all(spec: PopulationSpectrum, structure=None) -> np.ndarray:
    """Concatenated classical locations over all bulks, globally indexed."""
    if structure is None:
        structure = find_spectrum_structure(spec)
    parts = [classical_locations(k, spec, structure).gamma for k in range(1, structure.p + 1)]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Regularity diagnostics


def check_regularity(
    spec: PopulationSpectrum,
    structure: SpectrumStructure | None = None,
    tau: float = 0.05,
    tau_prime: float = 0.01,
    grid_points: int = 1000,
) -> RegularityReport:
    """Report edge and bulk regularity margins; never raises.

    Per edge: ``a_k >= tau``, separation from every other edge ``>= tau``,
    and distance of the critical point from every pole ``>= tau``.  Per
    bulk: the minimum density on the tau_prime-shrunk interval (1000-point
    grid) and the smallest classical location, checked against tau.
    """
    if structure is None:
        structure = find_spectrum_structure(spec)
    _, _, s_inv = _arrays(spec)
    edges = np.asarray(structure.edges)
    edge_checks = []
    for j, (x, a) in enumerate(zip(structure.critical_points, edges), start=1):
        others = np.delete(edges, j - 1)
        gap = float(np.abs(others - a).min()) if others.size else math.inf
        pole = math.inf if math.isinf(x) else float(np.abs(x + s_inv).min())
        ok = (a >= tau) and (gap >= tau) and (pole >= tau)
        edge_checks.append(EdgeRegularity(edge=j, a=float(a), min_gap=gap, min_pole_distance=pole, ok=bool(ok)))
    bulk_checks = []
    for k, (lo, hi) in enumerate(structure.bulk_intervals, start=1):
        if hi - tau_prime <= lo + tau_prime:
            min_rho = math.nan
        else:
            grid = np.linspace(lo + tau_prime, hi - tau_prime, grid_points)
            min_rho = float(density_grid(grid, spec).min())
        n_k = structure.bulk_counts[k - 1]
        table = _bulk_table(spec, k)
        gamma_min = float(table.quantiles_from_top(np.array([(n_k - 0.5) / spec.N]))[0])
        ok = (min_rho > 0 if not math.isnan(min_rho) else False) and gamma_min >= tau
        bulk_checks.append(BulkRegularity(k=k, min_density=min_rho, gamma_min=gamma_min, ok=bool(ok)))
    return RegularityReport(
        tau=tau,
        tau_prime=tau_prime,
        edge_checks=tuple(edge_checks),
        bulk_checks=tuple(bulk_checks),
        edges_regular=all(e.ok for e in edge_checks),
        bulks_regular=all(not math.isnan(b.min_density) and b.min_density > 0 for b in bulk_checks),
        gammas_above_tau=all(b.gamma_min >= tau for b in bulk_checks),
    )


def square_root_fit(
    k: int,
    spec: PopulationSpectrum,
    structure: SpectrumStructure | None = None,
    side: str = "right",
    t_range=(1e-4, 1e-2),
    n_points: int = 20,
) -> float:
    """Log-log slope of the density just inside an edge of bulk k.

    Fits ``log rho(edge -/+ t)`` against ``log t`` over 20 log-spaced
    offsets; a regular edge gives a slope near 1/2.
    """
    if structure is None:
        structure = find_spectrum_structure(spec)
    if not 1 <= k <= structure.p:
        raise DomainError(f"bulk index {k} outside 1..{structure.p}")
    lo, hi = structure.bulk_intervals[k - 1]
    if side not in ("right", "left"):
        raise DomainError("side must be 'right' or 'left'")
    ts = np.logspace(np.log10(t_range[0]), np.log10(t_range[1]), n_points)
    if ts[-1] >= hi - lo:
        raise StructureError("fit window is wider than the bulk component")
    E = hi - ts if side == "right" else lo + ts
    rho = density_grid(E, spec)
    if np.any(rho <= 0):
        raise StructureError("density vanished inside the fit window")
    slope, _ = np.polyfit(np.log(ts), np.log(rho), 1)
    return float(slope)
