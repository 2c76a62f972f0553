"""Parameter sets for affine diffusions on the state space R+^m x R^n.

The first m coordinates (index block I) must stay nonnegative, the last n
(block J) are unconstrained.  A diffusion with

    a(x) = a + sum_{i in I} x_i alpha_i,      b(x) = b + B x

stays on the state space exactly when the coefficients satisfy the
admissibility conditions enforced by :func:`validate_admissible`:

* a and every alpha_i symmetric positive semi-definite,
* a_II = 0 (hence a_IJ = 0),
* alpha_i has zeros in every I-row except row i,
* b_I >= 0,
* B_IJ = 0 and B_II has nonnegative off-diagonal entries.

:func:`canonical_transform` brings the diffusion matrix into the
block-diagonal normal form diag(y_1, ..., y_q, 0, ..., 0) (+) JJ-block by a
state-space-preserving linear map, and :func:`rho_factor` produces the
volatility factor rho(x) with rho rho^T = a(x) used by the simulator.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, DimensionError, NumericalError

__all__ = [
    "AffineParams",
    "StateVector",
    "ShortRateSpec",
    "ValidationReport",
    "CanonicalTransform",
    "validate_admissible",
    "diffusion_matrix",
    "drift",
    "canonical_transform",
    "transform_params",
    "rho_factor",
    "is_block_diagonal",
]


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineParams:
    """Coefficients (a, alpha_1..alpha_m, b, B) of an affine diffusion.

    ``alphas`` stacks the m state-dependent diffusion loadings into an
    (m, d, d) array; the loadings for the unconstrained coordinates are
    identically zero and are not stored.  ``Bmat`` holds the linear drift,
    column i being the loading of the i-th state coordinate.
    """

    m: int
    n: int
    a: np.ndarray
    alphas: np.ndarray
    b: np.ndarray
    Bmat: np.ndarray

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or self.m + self.n < 1:
            raise DimensionError(f"need m, n >= 0 with m + n >= 1, got m={self.m}, n={self.n}")
        d = self.m + self.n
        a = _readonly(self.a)
        alphas = np.array(self.alphas, dtype=float)
        if alphas.size == 0:
            alphas = alphas.reshape(0, d, d)
        alphas = _readonly(alphas)
        b = _readonly(self.b)
        B = _readonly(self.Bmat)
        if a.shape != (d, d):
            raise DimensionError(f"a must be {d}x{d}, got {a.shape}")
        if alphas.shape != (self.m, d, d):
            raise DimensionError(f"alphas must be ({self.m}, {d}, {d}), got {alphas.shape}")
        if b.shape != (d,):
            raise DimensionError(f"b must have length {d}, got {b.shape}")
        if B.shape != (d, d):
            raise DimensionError(f"B must be {d}x{d}, got {B.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Bmat", B)

    @property
    def d(self):
        return self.m + self.n

    @property
    def I(self):
        return slice(0, self.m)

    @property
    def J(self):
        return slice(self.m, self.d)

    def __eq__(self, other):
        if not isinstance(other, AffineParams):
            return NotImplemented
        return (
            self.m == other.m
            and self.n == other.n
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.alphas, other.alphas)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.Bmat, other.Bmat)
        )


@dataclass(frozen=True)
class StateVector:
    """A point of the state space; the first m coordinates must be >= 0."""

    x: np.ndarray
    m: int = 0

    def __post_init__(self):
        x = _readonly(np.atleast_1d(self.x))
        if x.ndim != 1:
            raise DimensionError(f"state must be a vector, got shape {x.shape}")
        if self.m and np.min(x[: self.m], initial=0.0) < -1e-12:
            raise AdmissibilityError(f"state has negative entries in the first {self.m} coordinates")
        object.__setattr__(self, "x", x)


def as_state_array(x, p=None):
    """Coerce a StateVector or array-like to a plain d-vector."""
    arr = np.atleast_1d(np.asarray(getattr(x, "x", x), dtype=float))
    if p is not None and arr.shape != (p.d,):
        raise DimensionError(f"state must have length {p.d}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ShortRateSpec:
    """Short rate r(t) = c + gamma . X(t)."""

    c: float
    gamma: np.ndarray

    def __post_init__(self):
        g = _readonly(np.atleast_1d(self.gamma))
        if g.ndim != 1:
            raise DimensionError(f"gamma must be a vector, got shape {g.shape}")
        if not np.isfinite(self.c) or not np.all(np.isfinite(g)):
            raise DimensionError("short rate parameters must be finite")
        object.__setattr__(self, "gamma", g)


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def default_psd_tol(p):
    """Scale-aware tolerance: 1e-10 * (1 + largest coefficient magnitude)."""
    mags = [np.max(np.abs(p.a), initial=0.0), np.max(np.abs(p.b), initial=0.0),
            np.max(np.abs(p.Bmat), initial=0.0)]
    if p.m:
        mags.append(np.max(np.abs(p.alphas), initial=0.0))
    return 1e-10 * (1.0 + max(mags))


def _psd_violation(M, tol):
    """Returns (is_symmetric, min_eigenvalue) of a square matrix."""
    sym = np.max(np.abs(M - M.T), initial=0.0) <= tol
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return sym, float(w[0]) if w.size else 0.0


def validate_admissible(candidate, tol_psd=None):
    """Check the admissibility conditions, naming each violation.

    Dimension mismatches raise :class:`DimensionError` at construction of
    ``AffineParams`` and are therefore structurally impossible here.
    """
    p = candidate
    tol = default_psd_tol(p) if tol_psd is None else float(tol_psd)
    m, d = p.m, p.d
    bad = []

    sym, lo = _psd_violation(p.a, tol)
    if not sym:
        bad.append("a is not symmetric")
    if lo < -tol:
        bad.append(f"a not positive semi-definite (min eigenvalue {lo:.3e})")
    for i in range(m):
        sym, lo = _psd_violation(p.alphas[i], tol)
        if not sym:
            bad.append(f"alpha[{i}] is not symmetric")
        if lo < -tol:
            bad.append(f"alpha[{i}] not positive semi-definite (min eigenvalue {lo:.3e})")

    aII = p.a[:m, :m]
    if np.max(np.abs(aII), initial=0.0) > tol:
        k, l = np.unravel_index(np.argmax(np.abs(aII)), aII.shape)
        bad.append(f"a_II must vanish, a[{k},{l}] = {aII[k, l]:.3e}")
    aIJ = p.a[:m, m:]
    if np.max(np.abs(aIJ), initial=0.0) > tol:
        k, l = np.unravel_index(np.argmax(np.abs(aIJ)), aIJ.shape)
        bad.append(f"a_IJ must vanish, a[{k},{m + l}] = {aIJ[k, l]:.3e}")

    for i in range(m):
        rows = [k for k in range(m) if k != i]
        if rows:
            block = p.alphas[i][rows, :]
            if np.max(np.abs(block), initial=0.0) > tol:
                r, l = np.unravel_index(np.argmax(np.abs(block)), block.shape)
                bad.append(
                    f"alpha[{i}] must vanish on I-rows other than {i}: entry ({rows[r]},{l})"
                )

    if m and np.min(p.b[:m], initial=0.0) < -tol:
        k = int(np.argmin(p.b[:m]))
        bad.append(f"b_I must be nonnegative, b[{k}] = {p.b[k]:.3e}")

    BIJ = p.Bmat[:m, m:]
    if np.max(np.abs(BIJ), initial=0.0) > tol:
        k, l = np.unravel_index(np.argmax(np.abs(BIJ)), BIJ.shape)
        bad.append(f"B_IJ must vanish, B[{k},{m + l}] = {BIJ[k, l]:.3e}")

    BII = p.Bmat[:m, :m].copy()
    np.fill_diagonal(BII, 0.0)
    if np.min(BII, initial=0.0) < -tol:
        k, l = np.unravel_index(np.argmin(BII), BII.shape)
        bad.append(f"B_II off-diagonal must be nonnegative, B[{k},{l}] = {BII[k, l]:.3e}")

    return ValidationReport(ok=not bad, violations=bad)


def require_admissible(p, tol_psd=None):
    rep = validate_admissible(p, tol_psd)
    if not rep.ok:
        raise AdmissibilityError("; ".join(rep.violations))


def diffusion_matrix(p, x):
    """a(x) = a + sum_{i in I} x_i alpha_i."""
    xv = as_state_array(x, p)
    out = p.a.copy()
    for i in range(p.m):
        out += xv[i] * p.alphas[i]
    return out


def drift(p, x):
    """b(x) = b + B x."""
    xv = as_state_array(x, p)
    return p.b + p.Bmat @ xv


def transform_params(p, L):
    """Coefficients of Y = L X when X has coefficients ``p``.

    Valid for any invertible L; the result lives on L(state space), so only
    state-space-preserving maps give admissible output.
    """
    L = np.asarray(L, dtype=float)
    Linv = np.linalg.inv(L)
    a_new = L @ p.a @ L.T
    alphas_new = np.zeros_like(p.alphas)
    lal = np.array([L @ p.alphas[i] @ L.T for i in range(p.m)])
    for j in range(p.m):
        # alpha'_j = sum_i (L^-1)_{ij} (L alpha_i L^T); only I-rows contribute.
        for i in range(p.m):
            alphas_new[j] += Linv[i, j] * lal[i]
    b_new = L @ p.b
    B_new = L @ p.Bmat @ Linv
    return AffineParams(m=p.m, n=p.n, a=a_new, alphas=alphas_new, b=b_new, Bmat=B_new)


@dataclass(frozen=True)
class CanonicalTransform:
    """Linear map Lambda with Lambda(R+^m x R^n) = R+^m x R^n that
    block-diagonalizes the diffusion matrix."""

    Lambda: np.ndarray
    q: int
    transformed: AffineParams

    def __post_init__(self):
        object.__setattr__(self, "Lambda", _readonly(self.Lambda))

    @property
    def Lambda_inv(self):
        return np.linalg.inv(self.Lambda)

    def map_state(self, x):
        return self.Lambda @ as_state_array(x)

    def unmap_state(self, y):
        return self.Lambda_inv @ as_state_array(y)

    def map_short_rate(self, srs):
        # r = c + gamma . x = c + (Lambda^-T gamma) . y
        return ShortRateSpec(c=srs.c, gamma=self.Lambda_inv.T @ srs.gamma)


def canonical_transform(p, tol=1e-12):
    """Normal form of the diffusion matrix under state-space-preserving maps.

    The returned map is (shear) o (scaling o permutation of the first m axes):
    coordinates with alpha_{i,ii} > tol are moved to the front and rescaled to
    unit diagonal loading, then the cross block alpha_{i,iJ} is removed by a
    shear [[I, 0], [D, I]] with column delta_i = -alpha_{i,iJ} of the rescaled
    loadings.  Ordering is deterministic: positive-diagonal indices first,
    original order preserved within each group.
    """
    require_admissible(p)
    m, n, d = p.m, p.n, p.d

    diag = np.array([p.alphas[i][i, i] for i in range(m)])
    pos = [i for i in range(m) if diag[i] > tol]
    zer = [i for i in range(m) if diag[i] <= tol]
    order = pos + zer
    q = len(pos)

    # y = S P x: P reorders the first m coordinates, S rescales the positive ones.
    P = np.zeros((d, d))
    for new, old in enumerate(order):
        P[new, old] = 1.0
    for j in range(m, d):
        P[j, j] = 1.0
    scale = np.ones(d)
    for new, old in enumerate(order):
        if diag[old] > tol:
            scale[new] = 1.0 / diag[old]
    L1 = np.diag(scale) @ P
    p1 = transform_params(p, L1)

    D = np.zeros((n, m))
    for i in range(q):
        D[:, i] = -p1.alphas[i][i, m:]
    L2 = np.eye(d)
    L2[m:, :m] = D

    L = L2 @ L1
    transformed = transform_params(p, L)
    return CanonicalTransform(Lambda=L, q=q, transformed=transformed)


def is_block_diagonal(p, tol=1e-9):
    """True when the diffusion loadings are in the canonical normal form:
    alpha_{i,ii} in {0, 1} and no I-J cross terms."""
    m, d = p.m, p.d
    if m and np.max(np.abs(p.a[:m, :]), initial=0.0) > tol:
        return False
    for i in range(m):
        dii = p.alphas[i][i, i]
        if not (abs(dii) <= tol or abs(dii - 1.0) <= tol):
            return False
        if np.max(np.abs(p.alphas[i][i, m:]), initial=0.0) > tol:
            return False
    return True


def _pivoted_cholesky(M, rel_tol=1e-12):
    """Diagonally-pivoted Cholesky of a symmetric PSD matrix.

    Returns F with F F^T = M; F has the original row order (so it is not
    triangular when pivoting reordered rows) and zero columns past the
    numerical rank.  Pivots below rel_tol * trace stop the factorization.
    """
    A = np.array(M, dtype=float)
    k = A.shape[0]
    piv = np.arange(k)
    stop = rel_tol * max(np.trace(A), 0.0) + 1e-300
    rank = k
    for i in range(k):
        j = i + int(np.argmax(np.diagonal(A)[i:]))
        if A[j, j] <= stop:
            rank = i
            break
        if j != i:
            A[:, [i, j]] = A[:, [j, i]]
            A[[i, j], :] = A[[j, i], :]
            piv[[i, j]] = piv[[j, i]]
        A[i, i] = np.sqrt(A[i, i])
        if i + 1 < k:
            A[i + 1:, i] /= A[i, i]
            A[i + 1:, i + 1:] -= np.outer(A[i + 1:, i], A[i + 1:, i])
    F = np.tril(A)
    F[:, rank:] = 0.0
    inv = np.empty(k, dtype=int)
    inv[piv] = np.arange(k)
    return F[inv, :]


def rho_factor(p, x, tol=None):
    """Volatility factor rho(x) with rho rho^T = a(x) for canonical params.

    The II block is diag(sqrt(x_1), ..., sqrt(x_q), 0, ..., 0), the cross
    blocks vanish, and the JJ block factorizes a_JJ + sum_i x_i alpha_{i,JJ}:
    plain Cholesky (lower triangular, nonnegative diagonal) when that block is
    positive definite, diagonally-pivoted factorization when it is singular.
    """
    if not is_block_diagonal(p):
        raise AdmissibilityError(
            "params are not in canonical block-diagonal form; apply canonical_transform first"
        )
    require_admissible(p)
    xv = as_state_array(x, p)
    m, d = p.m, p.d
    if np.min(xv[:m], initial=0.0) < 0.0:
        raise AdmissibilityError("state has negative entries in the nonnegative block")
    if tol is None:
        tol = default_psd_tol(p) * (1.0 + np.max(np.abs(xv), initial=0.0))

    rho = np.zeros((d, d))
    for i in range(m):
        rho[i, i] = np.sqrt(p.alphas[i][i, i] * xv[i]) if p.alphas[i][i, i] > 0.5 else 0.0

    if p.n:
        M = p.a[m:, m:].copy()
        for i in range(m):
            M += xv[i] * p.alphas[i][m:, m:]
        M = 0.5 * (M + M.T)
        try:
            F = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            F = _pivoted_cholesky(M)
            resid = np.max(np.abs(F @ F.T - M), initial=0.0)
            if resid > tol + 1e-8 * max(np.max(np.abs(M), initial=0.0), 1.0):
                raise NumericalError(
                    f"JJ diffusion block is not positive semi-definite within tolerance "
                    f"(factor residual {resid:.3e})"
                )
        rho[m:, m:] = F
    return rho
