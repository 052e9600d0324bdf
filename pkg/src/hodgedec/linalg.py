"""Sparse symmetric linear algebra for the decomposition pipelines.

Positive semidefinite systems are solved by sparse Cholesky-free direct
factorization (SuperLU) up to a size threshold and by Jacobi-preconditioned
conjugate gradients beyond it; every solve is verified against its
residual contract and failures carry a report.  The generalized
eigensolver uses ARPACK shift-invert with a seeded start vector so runs
are reproducible.  The saddle-point solver factors the KKT system
directly, which is affordable at the problem sizes this package targets.
"""

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components


@dataclass
class SolverOptions:
    """Knobs shared by the linear solvers (config-file overridable)."""

    tol: float = 1e-11
    max_iter: int = 50000
    seed: int = 0
    augment_alpha: float = 1e-3
    direct_limit: int = 600000
    kernel_threshold: float = 1e-8
    incompatible_action: str = "error"  # or "warn"


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    regularization: list = dataclass_field(default_factory=list)
    wall_time: float = 0.0


class SolveError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    kernel_dimension: int
    all_kernel: bool
    residuals: np.ndarray
    lambda_max_estimate: float


def _jacobi(L):
    d = L.diagonal()
    if (d <= 0).any():
        d = np.where(d > 0, d, 1.0)
    return sp.diags(1.0 / d)


def solve_spsd(L, b, tol=1e-10, max_iter=None, method="auto",
               options=None):
    """Solve L x = b for symmetric positive (semi)definite sparse L.

    The caller guarantees b lies in the range of L.  Returns (x, report);
    raises SolveError when the relative residual contract cannot be met.
    """
    opts = options or SolverOptions()
    n = L.shape[0]
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    t0 = time.perf_counter()
    if bnorm == 0.0:
        return np.zeros(n), SolveReport("trivial", 0, 0.0, [],
                                        time.perf_counter() - t0)
    if method == "auto":
        method = "direct" if n <= opts.direct_limit else "cg"
    iterations = 0
    if method == "direct":
        try:
            lu = spla.splu(L.tocsc())
            x = lu.solve(b)
        except RuntimeError as exc:
            raise SolveError(f"sparse factorization failed: {exc}",
                             SolveReport("direct", 0, np.inf)) from exc
    elif method == "cg":
        maxiter = max_iter if max_iter is not None else opts.max_iter
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(L, b, rtol=max(tol / 4, 1e-15), atol=0.0,
                          maxiter=maxiter, M=_jacobi(L), callback=cb)
        iterations = count[0]
        if info > 0:
            res = np.linalg.norm(L @ x - b) / bnorm
            raise SolveError(
                f"CG did not reach tol={tol} in {maxiter} iterations "
                f"(residual {res:.3e})",
                SolveReport("cg", iterations, res, [],
                            time.perf_counter() - t0))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(L @ x - b) / bnorm
    report = SolveReport(method, iterations, res, [],
                         time.perf_counter() - t0)
    if res > tol:
        msg = (f"solution residual {res:.3e} exceeds tol {tol:.1e}; "
               "right-hand side may have a kernel component")
        if opts.incompatible_action == "warn":
            import warnings
            warnings.warn(msg)
        else:
            raise SolveError(msg, report)
    return x, report


def pin_kernel(L, pin_indices, mode="pin", alpha=1e-3,
               kernel_dimension=None):
    """Remove a known rank deficiency by pinning or diagonal augmentation.

    mode='pin' replaces the pinned rows/columns by identity rows (for
    graph-Laplacian-like operators whose kernel is one constant per
    connected component; the pin count is checked against the component
    count).  mode='augment' adds alpha * mean(diag L) to the selected
    diagonal entries.
    """
    pins = np.asarray(pin_indices, dtype=np.int64)
    if kernel_dimension is not None and len(pins) != kernel_dimension:
        raise ValueError(f"{len(pins)} pins for kernel dimension "
                         f"{kernel_dimension}")
    n = L.shape[0]
    if mode == "pin":
        ncomp, labels = connected_components(abs(L), directed=False)
        if len(pins) != ncomp:
            raise ValueError(f"{len(pins)} pins for {ncomp} connected "
                             "components")
        if len(np.unique(labels[pins])) != ncomp:
            raise ValueError("pins must cover each component exactly once")
        keep = np.ones(n)
        keep[pins] = 0.0
        Dm = sp.diags(keep)
        ind = np.zeros(n)
        ind[pins] = 1.0
        return (Dm @ L @ Dm + sp.diags(ind)).tocsr()
    if mode == "augment":
        bump = np.zeros(n)
        bump[pins] = alpha * L.diagonal().mean()
        return (L + sp.diags(bump)).tocsr()
    raise ValueError(f"unknown mode {mode!r}")


def _gershgorin_generalized(L, S):
    rowsum = np.asarray(abs(L).sum(axis=1)).ravel()
    return float((rowsum / S.diagonal()).max())


def smallest_eigs(L, S, count, kernel_threshold=1e-8, seed=0):
    """Smallest generalized eigenpairs of L x = lambda S x (S diagonal).

    Shift-invert ARPACK with a seeded start vector; eigenvectors come out
    S-orthonormal.  kernel_dimension counts eigenvalues below
    kernel_threshold times the largest requested eigenvalue; if every
    requested eigenvalue falls below the threshold the result is flagged
    (`all_kernel`), meaning `count` must be increased to see the spectrum.
    """
    n = L.shape[0]
    if count < 1:
        raise ValueError("count must be positive")
    if count > n:
        raise ValueError(f"requested {count} eigenpairs of size-{n} operator")
    lam_max = _gershgorin_generalized(L, S)
    if count > max(1, n - 2) or n < 50:
        sqrt_s = np.sqrt(S.diagonal())
        A = (L.toarray() / sqrt_s[:, None]) / sqrt_s[None, :]
        w, y = np.linalg.eigh(0.5 * (A + A.T))
        w, y = w[:count], y[:, :count]
        x = y / sqrt_s[:, None]
    else:
        sigma = max(1e-12, 1e-8 * lam_max)
        rng = np.random.default_rng(seed)
        v0 = rng.uniform(-1.0, 1.0, size=n)
        w, x = spla.eigsh(L.tocsc(), k=count, M=S.tocsc(), sigma=-sigma,
                          which="LM", v0=v0, maxiter=5000)
        order = np.argsort(w)
        w, x = w[order], x[:, order]
    s_diag = S.diagonal()
    residuals = np.array([
        np.linalg.norm(L @ x[:, i] - w[i] * (s_diag * x[:, i]))
        / max(np.linalg.norm(s_diag * x[:, i]), 1e-300)
        for i in range(count)])
    lam_ref = abs(w[-1])
    kernel_dim = int((np.abs(w) < kernel_threshold * lam_ref).sum()) \
        if lam_ref > 0 else count
    all_kernel = kernel_dim >= count
    return EigenResult(w, x, kernel_dim, all_kernel, residuals, lam_max)


def solve_saddle(Mblock, C, rhs, pins=(), tol=1e-9):
    """Equality-constrained quadratic minimization via the KKT system.

    Minimizes 0.5 x^T M x - rhs^T x subject to C x = 0 and x[p] = 0 for
    the pinned indices.  `rhs` may hold several right-hand sides as
    columns; they share one factorization.  Returns (x, multipliers,
    report); raises SolveError with a diagnostic if the KKT matrix is
    singular after pinning.
    """
    n = Mblock.shape[0]
    pins = np.asarray(list(pins), dtype=np.int64)
    rhs = np.asarray(rhs, dtype=float)
    single = rhs.ndim == 1
    R = rhs[:, None] if single else rhs
    t0 = time.perf_counter()
    blocks = [C] if C is not None and C.shape[0] > 0 else []
    if len(pins):
        blocks.append(sp.csr_matrix(
            (np.ones(len(pins)), (np.arange(len(pins)), pins)),
            shape=(len(pins), n)))
    if not blocks:
        x, rep = solve_spsd(Mblock, rhs, tol=tol)
        return x, np.zeros(0), rep
    Ca = sp.vstack(blocks).tocsr()
    nc = Ca.shape[0]
    K = sp.bmat([[Mblock, Ca.T], [Ca, None]], format="csc")
    full_rhs = np.vstack([R, np.zeros((nc, R.shape[1]))])
    try:
        lu = spla.splu(K)
        z = lu.solve(full_rhs)
    except RuntimeError as exc:
        raise SolveError(
            "singular KKT system after pinning; the constraint block and "
            f"quadratic form share a null direction ({exc})",
            SolveReport("kkt-direct", 0, np.inf)) from exc
    x, lam = z[:n], z[n:]
    scale = max(np.linalg.norm(full_rhs), 1e-300)
    res = np.linalg.norm(K @ z - full_rhs) / scale
    cres = np.linalg.norm(Ca @ x) / max(np.linalg.norm(x), 1e-300)
    report = SolveReport("kkt-direct", 0, max(res, cres), [],
                         time.perf_counter() - t0)
    if not np.isfinite(res) or res > tol:
        raise SolveError(f"KKT residual {res:.3e} exceeds {tol:.1e}; "
                         "system is singular or badly scaled", report)
    if single:
        x, lam = x[:, 0], lam[:, 0]
    return x, lam, report


def gram_schmidt_S(vectors, S, drop_tol=1e-10):
    """S-orthonormalize columns by modified Gram-Schmidt, reorthogonalized.

    Returns (Q, dropped) where dropped lists input column indices whose
    pivot fell below drop_tol times the first column's S-norm.
    """
    V = np.array(vectors, dtype=float, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    s_diag = S.diagonal()
    kept, dropped = [], []
    first_norm = None
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        for _ in range(2):
            for q in kept:
                v -= (q @ (s_diag * v)) * q
        norm = np.sqrt(v @ (s_diag * v))
        if first_norm is None:
            first_norm = norm if norm > 0 else 1.0
        if norm < drop_tol * first_norm:
            dropped.append(j)
            continue
        kept.append(v / norm)
    Q = np.column_stack(kept) if kept else np.zeros((V.shape[0], 0))
    return Q, dropped
