"""Spectral machinery: eigendecomposition, graph Fourier transforms,
exact functional-calculus filtering, and the Chebyshev fast path.

Eigenvalues are ascending, eigenvectors orthonormal with a deterministic
sign convention, so identical inputs give bit-identical systems.
"""

import threading
from dataclasses import dataclass

import numpy as np

from .graphs import NormalizedLaplacian, TokenGraph, content_hash, normalized_laplacian, symmetrize

SYMMETRY_TOL = 1e-12
CLAMP_FLOOR = -1e-9  # round-off negatives above this are snapped to 0


class NumericalError(RuntimeError):
    """Numerical failure (eigensolver breakdown or residual out of tolerance)."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenSystem:
    """Eigenpairs of a normalized Laplacian.

    u: (n, m) orthonormal columns, lam: (m,) ascending. truncated marks a
    system reduced to the m smoothest modes; full systems have m == n.
    """

    u: np.ndarray
    lam: np.ndarray
    truncated: bool = False

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]


def _check_square_symmetric(mat: np.ndarray) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # Largest-magnitude component of each eigenvector made nonnegative,
    # ties broken by lowest index (argmax picks the first maximum).
    idx = np.argmax(np.abs(u), axis=0)
    lead = u[idx, np.arange(u.shape[1])]
    return u * np.where(lead < 0, -1.0, 1.0)


def eigendecompose(l: NormalizedLaplacian, tol: float = 1e-12,
                   basis_seed: int | None = None) -> EigenSystem:
    """Full symmetric eigendecomposition L = U diag(lam) U^T.

    tol scales the accepted residual ||L U - U diag(lam)||_max; failure
    raises NumericalError carrying the residual. basis_seed applies a
    seeded random orthogonal similarity before solving, which yields an
    independent basis in degenerate eigenspaces (useful for testing that
    filtering does not depend on the basis choice).
    """
    mat = np.asarray(l.matrix, dtype=np.float64)
    _check_square_symmetric(mat)
    n = mat.shape[0]
    q = None
    work = mat
    if basis_seed is not None:
        rng = np.random.default_rng(basis_seed)
        g = rng.standard_normal((n, n))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        work = q.T @ mat @ q
        work = 0.5 * (work + work.T)
    try:
        lam, u = np.linalg.eigh(work)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    if q is not None:
        u = q @ u
    residual = float(np.max(np.abs(mat @ u - u * lam))) if n else 0.0
    bound = tol * max(1.0, float(np.max(np.abs(mat)))) * max(n, 1)
    if residual > bound:
        raise NumericalError(
            f"eigendecomposition residual {residual:.3e} exceeds {bound:.3e}",
            residual=residual,
        )
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    u = _fix_signs(u[:, order])
    lam = np.where((lam < 0.0) & (lam >= CLAMP_FLOOR), 0.0, lam)
    lam = np.ascontiguousarray(lam)
    u = np.ascontiguousarray(u)
    lam.flags.writeable = False
    u.flags.writeable = False
    return EigenSystem(u, lam, truncated=False)


def truncate(eig: EigenSystem, m: int) -> EigenSystem:
    """Keep the m smoothest modes (smallest eigenvalues)."""
    if eig.truncated:
        raise ValueError("eigensystem is already truncated")
    if not 1 <= m <= eig.m:
        raise ValueError(f"m must be in [1, {eig.m}], got {m}")
    u = eig.u[:, :m].copy()
    lam = eig.lam[:m].copy()
    u.flags.writeable = False
    lam.flags.writeable = False
    return EigenSystem(u, lam, truncated=True)


def _check_signal(eig: EigenSystem, x: np.ndarray, rows: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != rows:
        raise ValueError(f"expected signal of shape ({rows}, d), got {x.shape}")
    return x


def gft(eig: EigenSystem, x: np.ndarray) -> np.ndarray:
    """Graph Fourier transform: U^T x, shape (m, d)."""
    x = _check_signal(eig, x, eig.n)
    return eig.u.T @ x


def igft(eig: EigenSystem, xhat: np.ndarray) -> np.ndarray:
    """Inverse transform: U xhat, shape (n, d)."""
    xhat = _check_signal(eig, xhat, eig.m)
    return eig.u @ xhat


def apply_filter_exact(eig: EigenSystem, h, x: np.ndarray) -> np.ndarray:
    """h(L) x = U diag(h(lam)) U^T x for a scalar spectral response h."""
    x = _check_signal(eig, x, eig.n)
    hv = np.asarray(h(eig.lam), dtype=np.float64)
    if hv.shape != eig.lam.shape:
        raise ValueError(f"filter returned shape {hv.shape}, expected {eig.lam.shape}")
    if not np.all(np.isfinite(hv)):
        raise ValueError("filter returned non-finite values")
    return eig.u @ (hv[:, None] * (eig.u.T @ x))


@dataclass
class ChebyshevFilter:
    """Chebyshev expansion of a spectral response on [0, lambda_max]."""

    coeffs: np.ndarray
    lambda_max: float = 2.0

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1


def chebyshev_fit(h, order: int, lambda_max: float = 2.0):
    """Fit h on [0, lambda_max] at order P via Chebyshev-Gauss quadrature.

    Uses the P+1 first-kind Chebyshev nodes mapped onto the interval.
    Returns (ChebyshevFilter, max_err) where max_err is the maximum
    absolute expansion error at 1000 uniform test points.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    p1 = order + 1
    theta = np.pi * (np.arange(p1) + 0.5) / p1
    lam_nodes = 0.5 * lambda_max * (np.cos(theta) + 1.0)
    fvals = np.asarray(h(lam_nodes), dtype=np.float64)
    if fvals.shape != lam_nodes.shape:
        raise ValueError(f"filter returned shape {fvals.shape}, expected {lam_nodes.shape}")
    coeffs = (2.0 / p1) * (np.cos(np.outer(np.arange(p1), theta)) @ fvals)
    coeffs[0] *= 0.5
    filt = ChebyshevFilter(coeffs, float(lambda_max))
    grid = np.linspace(0.0, lambda_max, 1000)
    approx = np.polynomial.chebyshev.chebval(2.0 * grid / lambda_max - 1.0, coeffs)
    max_err = float(np.max(np.abs(approx - np.asarray(h(grid), dtype=np.float64))))
    return filt, max_err


def _scaled_matvec(l: NormalizedLaplacian, scale: float):
    """Returns y(x) = scale * L x - x without forming dense products when the
    Laplacian carries its edge index (O(|E| d) per call)."""
    if l._coo_src is not None:
        src, dst, val = l._coo_src, l._coo_dst, l._coo_val
        active = (l.degrees > 0).astype(np.float64)[:, None]

        def matvec(x):
            y = active * x
            if len(src):
                np.subtract.at(y, src, val[:, None] * x[dst])
            return scale * y - x

        return matvec
    mat = l.matrix

    def matvec(x):
        return scale * (mat @ x) - x

    return matvec


def _chebyshev_apply_multi(l: NormalizedLaplacian, coeffs: np.ndarray,
                           x: np.ndarray) -> np.ndarray:
    """Apply K Chebyshev filters sharing one recurrence. coeffs is (K, P+1);
    returns (K, n, d). Only T_{p-1} and T_p are held at any time."""
    k, p1 = coeffs.shape
    matvec = _scaled_matvec(l, 1.0)  # 2 / lambda_max with lambda_max = 2
    out = coeffs[:, 0][:, None, None] * x[None, :, :]
    if p1 == 1:
        return out
    t_prev = x
    t_cur = matvec(x)
    out += coeffs[:, 1][:, None, None] * t_cur[None, :, :]
    for p in range(2, p1):
        t_next = 2.0 * matvec(t_cur) - t_prev
        out += coeffs[:, p][:, None, None] * t_next[None, :, :]
        t_prev, t_cur = t_cur, t_next
    return out


def chebyshev_apply(l: NormalizedLaplacian, f: ChebyshevFilter, x: np.ndarray) -> np.ndarray:
    """f(L) x via the three-term recurrence T_{p+1} = 2 Lt T_p - T_{p-1}
    with Lt = (2/lambda_max) L - I. Never touches eigenvectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != l.n:
        raise ValueError(f"expected signal of shape ({l.n}, d), got {x.shape}")
    if abs(f.lambda_max - 2.0) > 1e-12:
        # spectra of normalized Laplacians live in [0, 2]; the recurrence
        # below hard-codes that scaling
        raise ValueError(f"unsupported lambda_max {f.lambda_max}, expected 2.0")
    return _chebyshev_apply_multi(l, f.coeffs[None, :], x)[0]


class SpectrumCache:
    """Laplacian + eigensystem cache keyed by graph content hash.

    Insertions are serialized behind a lock; lookups are lock-free reads
    of an insert-only dict. In-memory only.
    """

    def __init__(self):
        self._entries: dict = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def get_or_compute(self, g: TokenGraph):
        """Returns (NormalizedLaplacian, EigenSystem) for the symmetrized graph."""
        sym = symmetrize(g)
        key = content_hash(sym)
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._entries.get(key)
            if hit is None:
                lap = normalized_laplacian(sym)
                hit = (lap, eigendecompose(lap))
                self._entries[key] = hit
        return hit

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()


DEFAULT_CACHE = SpectrumCache()
