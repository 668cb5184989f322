"""
Top eigenpairs of symmetric operators that are only available as products.

The deflated kernel (I - QQ')K(I - QQ') is never formed: applying it costs
two thin products with Q and one (sparse) product with K.

Kernels with a known upper bound on their spectrum (LEM, and every flipped
minimization kernel such as LLE) are solved in shift-invert mode: their
useful eigenvalues crowd just below the bound, where Lanczos on K itself
cannot tell them apart.
"""
import functools
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from nrdr.config import get_settings
from nrdr.core.errors import ConvergenceError, ParameterError
from nrdr.services.kernels import KernelMatrix, Orientation
from nrdr.services.smoother import DeflationBasis

logger = logging.getLogger(__name__)

# Relative eigen-gap below which the top pair is flagged as near-degenerate
NEAR_DEGENERATE_GAP = 1e-10

# Shift-invert pole above the spectral bound, relative to the bound
RESOLVENT_OFFSET = 1e-6


class Resolvent:
    """x -> (sigma I - K)^-1 x for a kernel whose eigenvalues all lie below sigma.

    The factorization of sigma I - K is cached on the kernel, so successive
    deflations of one kernel factor it once.
    """

    def __init__(self, K: KernelMatrix, sigma: float):
        self.kernel = K
        self.sigma = float(sigma)

    def _solver(self) -> Callable[[np.ndarray], np.ndarray]:
        K = self.kernel
        key = ("resolvent", self.sigma)
        solve = K.factor_cache.get(key)
        if solve is None:
            if K.is_sparse:
                A = (self.sigma * sp.identity(K.n, format="csc") - K.entries).tocsc()
                solve = splu(A).solve
            else:
                lu = scipy.linalg.lu_factor(self.sigma * np.eye(K.n) - np.asarray(K.entries))
                solve = functools.partial(scipy.linalg.lu_solve, lu)
            K.factor_cache[key] = solve
            logger.debug(f"Factored {self.sigma:.8g} I - K for kernel '{K.name}' (N={K.n})")
        return lambda b: solve(np.ascontiguousarray(b, dtype=float))

    def restricted(self, C: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Inverse of (I - CC')(sigma I - K)(I - CC') on the complement of C.

        C has orthonormal columns. The result of every product is orthogonal
        to C: x = A^-1 b - A^-1 C (C'A^-1 C)^-1 C'A^-1 b with A = sigma I - K.
        Raises numpy.linalg.LinAlgError or RuntimeError when sigma I - K is
        not positive definite.
        """
        solve = self._solver()
        if C.shape[1] == 0:
            return solve
        AC = solve(C)
        schur = scipy.linalg.cho_factor(0.5 * (C.T @ AC + AC.T @ C))

        def apply(b):
            b = b - C @ (C.T @ b)
            x = solve(b)
            return x - AC @ scipy.linalg.cho_solve(schur, C.T @ x)

        return apply


class ImplicitOperator:
    """Symmetric linear map x -> Ax given by a product callable.

    `basis` holds orthonormal columns the operator annihilates (its range is
    orthogonal to them); `scale` is an upper bound on the spectral norm.
    `resolvent`, when set, inverts sigma I - A on the complement of any
    constraint set that contains `basis`.
    """

    def __init__(
        self,
        dimension: int,
        apply: Callable[[np.ndarray], np.ndarray],
        scale: float,
        basis: Optional[np.ndarray] = None,
        symmetric: bool = True,
        name: str = "operator",
        resolvent: Optional[Resolvent] = None,
    ):
        self.dimension = dimension
        self._apply = apply
        self.scale = float(scale)
        self.basis = np.zeros((dimension, 0)) if basis is None else basis
        self.symmetric = symmetric
        self.name = name
        self.resolvent = resolvent

    @property
    def free_dimension(self) -> int:
        """Dimension of the subspace the operator can act on."""
        return self.dimension - self.basis.shape[1]

    def matmat(self, x: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=float))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matmat(np.asarray(x, dtype=float).reshape(-1, 1)).ravel()

    def as_linear_operator(self) -> LinearOperator:
        n = self.dimension
        return LinearOperator(
            (n, n), matvec=self.matvec, matmat=self.matmat, rmatvec=self.matvec, dtype=float
        )

    def to_dense(self) -> np.ndarray:
        return self.matmat(np.eye(self.dimension))

    def symmetry_error(self, pairs: int = 3, seed: int = 0) -> float:
        """max |x'(Ay) - y'(Ax)| / (||x|| ||y|| scale) over random vector pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(pairs):
            x = rng.standard_normal(self.dimension)
            y = rng.standard_normal(self.dimension)
            gap = abs(x @ self.matvec(y) - y @ self.matvec(x))
            denom = np.linalg.norm(x) * np.linalg.norm(y) * max(self.scale, 1e-300)
            worst = max(worst, gap / denom)
        return float(worst)

    def check_symmetry(self, tol: float = 1e-8, seed: int = 0) -> bool:
        error = self.symmetry_error(seed=seed)
        if error > tol:
            logger.warning(f"Operator '{self.name}' is not symmetric (relative error {error:.2e})")
            return False
        return True


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    near_degenerate: bool = False


def _norm_bound(K: KernelMatrix) -> float:
    """Largest absolute row sum; bounds the spectral norm of a symmetric matrix."""
    if K.is_sparse:
        bound = float(np.max(np.asarray(abs(K.entries).sum(axis=1)).ravel()))
    else:
        bound = float(np.max(np.sum(np.abs(K.entries), axis=1)))
    return bound if bound > 0 else 1.0


def _constraint_basis(n: int, V: np.ndarray, remove_constant: bool) -> np.ndarray:
    if not remove_constant:
        return V
    ones = np.full((n, 1), 1.0 / np.sqrt(n))
    if V.shape[1] == 0:
        return ones
    V = V - ones @ (ones.T @ V)
    # drops directions of V already spanned by the constant vector
    return scipy.linalg.orth(np.hstack([ones, V]))


def deflated_operator(
    K: KernelMatrix,
    V: Union[DeflationBasis, np.ndarray, None] = None,
    remove_constant: bool = True,
) -> ImplicitOperator:
    """x -> (I - QQ') K (I - QQ') x with Q spanning V (and 1/sqrt(N) if requested)."""
    if K.orientation is not Orientation.MAXIMIZE:
        raise ParameterError("deflated_operator needs a maximization kernel; apply to_maximization first")

    n = K.n
    if V is None:
        V = np.zeros((n, 0))
    elif isinstance(V, DeflationBasis):
        V = V.vectors
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != n:
        raise ParameterError(f"deflation basis has shape {V.shape}, expected ({n}, r)")

    Q = _constraint_basis(n, V, remove_constant)

    if Q.shape[1] == 0:
        def apply(x):
            return K.matmat(x)
    else:
        def apply(x):
            x = x - Q @ (Q.T @ x)
            y = K.matmat(x)
            return y - Q @ (Q.T @ y)

    resolvent = None
    # a centered kernel only agrees with its entries off the constant vector
    if K.lambda_max_bound is not None and (remove_constant or not K.centered):
        bound = K.lambda_max_bound
        resolvent = Resolvent(K, bound + RESOLVENT_OFFSET * max(abs(bound), 1.0))

    return ImplicitOperator(
        dimension=n, apply=apply, scale=_norm_bound(K), basis=Q,
        name=f"{K.name} deflated by {Q.shape[1]}", resolvent=resolvent,
    )


def _shift(op: ImplicitOperator, extra: Optional[np.ndarray] = None):
    """Columns B to push below the spectrum and the shift size for them."""
    B = op.basis if extra is None or extra.shape[1] == 0 else np.hstack([op.basis, extra])
    return B, 2.2 * op.scale + 1.0


def _symmetric_linear_operator(n: int, apply: Callable[[np.ndarray], np.ndarray]) -> LinearOperator:
    def matvec(x):
        return apply(x.reshape(-1, 1)).ravel()

    return LinearOperator((n, n), matvec=matvec, matmat=apply, rmatvec=matvec, dtype=float)


def _solve(op: ImplicitOperator, B: np.ndarray, shift: float, tol: float, max_iter: int, v0: np.ndarray):
    """Two largest eigenpairs of A - shift * BB'."""
    n = op.dimension
    settings = get_settings()

    def shifted(x):
        y = op.matmat(x)
        if B.shape[1]:
            y = y - shift * (B @ (B.T @ x))
        return y

    if n <= max(settings.dense_cutoff, 3):
        A = shifted(np.eye(n))
        values, vectors = np.linalg.eigh(0.5 * (A + A.T))
        return values[::-1][:2], vectors[:, ::-1][:, :2]

    ncv = min(n, max(settings.eig_ncv, 5))
    values, vectors = eigsh(_symmetric_linear_operator(n, shifted), k=2, which="LA",
                            tol=0.1 * tol, maxiter=max_iter, v0=v0, ncv=ncv)
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def _inverse(op: ImplicitOperator, B: np.ndarray) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Restricted resolvent of op off B, or None when op has none or it cannot be factored."""
    if op.resolvent is None or op.dimension <= max(get_settings().dense_cutoff, 3):
        return None
    try:
        return op.resolvent.restricted(B)
    except (np.linalg.LinAlgError, RuntimeError) as e:
        logger.warning(f"Shift-invert unavailable for '{op.name}' ({e}); using plain Lanczos")
        return None


def _solve_inverted(
    op: ImplicitOperator,
    inverse: Callable[[np.ndarray], np.ndarray],
    B: np.ndarray,
    tol: float,
    max_iter: int,
    v0: np.ndarray,
):
    """Two largest eigenpairs of A off B, from the largest ones of (sigma I - A)^-1.

    The inverse is a contraction of the whole spectrum onto (0, 1/offset];
    its tolerance is tightened so the residual on A stays within tol.
    """
    n = op.dimension
    ncv = min(n, max(get_settings().eig_ncv, 5))
    if B.shape[1]:
        v0 = v0 - B @ (B.T @ v0)
    theta, vectors = eigsh(_symmetric_linear_operator(n, inverse), k=2, which="LA",
                           tol=0.01 * tol, maxiter=max_iter, v0=v0, ncv=ncv)
    order = np.argsort(theta)[::-1]
    theta = theta[order]
    # theta <= 0 only for directions in B
    values = np.full(len(theta), -np.inf)
    positive = theta > 0
    values[positive] = op.resolvent.sigma - 1.0 / theta[positive]
    return values, vectors[:, order]


def _failure_residual(
    op: ImplicitOperator, B: np.ndarray, error: ArpackNoConvergence, v0: np.ndarray
) -> float:
    """Rayleigh residual of the best vector at hand when the solver gives up.

    That is the leading partial Ritz vector if ARPACK returned any, else the
    start vector.
    """
    vectors = getattr(error, "eigenvectors", None)
    if vectors is not None and np.size(vectors):
        v = vectors[:, int(np.argmax(error.eigenvalues))]
    else:
        v = v0
    if B.shape[1]:
        v = v - B @ (B.T @ v)
    v = v / max(np.linalg.norm(v), np.finfo(float).tiny)
    Av = op.matvec(v)
    return float(np.linalg.norm(Av - (v @ Av) * v))


def _finish(op: ImplicitOperator, B: np.ndarray, f: np.ndarray):
    """Re-project f off B, normalize, fix the sign and measure the residual."""
    if B.shape[1]:
        f = f - B @ (B.T @ f)
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ConvergenceError("eigenvector collapsed onto the deflated subspace")
    f = f / norm
    # a second pass keeps |B'f| at rounding level
    if B.shape[1]:
        f = f - B @ (B.T @ f)
        f = f / np.linalg.norm(f)

    peak = int(np.argmax(np.abs(f)))
    if f[peak] < 0:
        f = -f

    Af = op.matvec(f)
    value = float(f @ Af)
    residual = float(np.linalg.norm(Af - value * f))
    return value, f, residual


def _top_pair(
    op: ImplicitOperator,
    extra: Optional[np.ndarray],
    tol: float,
    max_iter: int,
    seed: int,
) -> EigenPair:
    B, shift = _shift(op, extra)
    if B.shape[1] >= op.dimension:
        raise ParameterError(f"operator '{op.name}' has no free directions left")

    v0 = np.random.default_rng(seed).standard_normal(op.dimension)
    inverse = _inverse(op, B)
    try:
        if inverse is None:
            values, vectors = _solve(op, B, shift, tol, max_iter, v0)
        else:
            values, vectors = _solve_inverted(op, inverse, B, tol, max_iter, v0)
    except ArpackNoConvergence as e:
        raise ConvergenceError(
            f"no convergence in {max_iter} iterations", _failure_residual(op, B, e, v0)
        )

    value, f, residual = _finish(op, B, vectors[:, 0])
    if residual > tol * max(abs(value), op.scale):
        raise ConvergenceError(f"residual above tolerance {tol:g} for '{op.name}'", residual)

    gap = values[0] - values[1] if len(values) > 1 else np.inf
    near_degenerate = bool(gap < NEAR_DEGENERATE_GAP * max(abs(value), 1e-300))
    if near_degenerate:
        logger.warning(
            f"Top eigenvalue {value:.6g} of '{op.name}' is near-degenerate (gap {gap:.2e}); "
            "any vector of the top eigenspace may be returned"
        )
    return EigenPair(value=value, vector=f, residual=residual, near_degenerate=near_degenerate)


def top_eigenpair(
    op: ImplicitOperator,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: int = 0,
) -> EigenPair:
    """Largest eigenvalue of op restricted to the complement of its basis.

    Directions the operator annihilates are shifted below the spectrum, so
    the result is orthogonal to op.basis even when every remaining
    eigenvalue is zero or negative. The sign is fixed so the entry of
    largest magnitude is positive.
    """
    settings = get_settings()
    tol = settings.eig_tol if tol is None else tol
    max_iter = settings.eig_max_iter if max_iter is None else max_iter
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    return _top_pair(op, None, tol, max_iter, seed)


def top_eigenpairs(
    op: ImplicitOperator,
    d: int,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: int = 0,
) -> List[EigenPair]:
    """The d largest eigenpairs, each found after deflating the ones before it."""
    settings = get_settings()
    tol = settings.eig_tol if tol is None else tol
    max_iter = settings.eig_max_iter if max_iter is None else max_iter
    if not 1 <= d <= op.free_dimension:
        raise ParameterError(f"d must be in [1, {op.free_dimension}], got {d}")

    pairs = [top_eigenpair(op, tol, max_iter, seed)]
    found = pairs[0].vector[:, None]
    for i in range(1, d):
        pair = _top_pair(op, found, tol, max_iter, seed)
        # Gram-Schmidt against earlier vectors
        f = pair.vector - found @ (found.T @ pair.vector)
        pair.vector = f / np.linalg.norm(f)
        pairs.append(pair)
        found = np.hstack([found, pair.vector[:, None]])
        logger.debug(f"Eigenpair {i + 1}/{d}: lambda={pair.value:.8g}, residual={pair.residual:.2e}")
    return pairs


def dense_operator(matrix: Union[np.ndarray, sp.spmatrix], name: str = "matrix") -> ImplicitOperator:
    """Wrap an explicit symmetric matrix as an operator."""
    M = matrix.tocsr() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {M.shape}")
    if sp.issparse(M):
        scale = float(np.max(np.asarray(abs(M).sum(axis=1)).ravel()))
    else:
        scale = float(np.max(np.sum(np.abs(M), axis=1)))
    return ImplicitOperator(
        dimension=M.shape[0], apply=lambda x: np.asarray(M @ x), scale=scale or 1.0, name=name
    )
