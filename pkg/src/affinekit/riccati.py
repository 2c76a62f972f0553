"""Transform exponents of affine diffusions.

The conditional transform E[e^{u.X(T)} | X(t)] of an admissible affine
diffusion equals exp(phi(T-t, u) + psi(T-t, u).X(t)) where (phi, psi) solve

    d/dt phi   = 1/2 psi_J . a_JJ psi_J + b . psi            (- c)
    d/dt psi_i = 1/2 psi . alpha_i psi + (B^T psi)_i          (- gamma_i), i in I
    d/dt psi_J = B_JJ^T psi_J                                 (- gamma_J)

with phi(0) = 0 and psi(0) = u; the parenthesised constants appear when a
short-rate spec is attached and the expectation carries the discount factor
e^{-int r}.  This module provides a generic adaptive integrator for the
system with blow-up detection, the closed form for the scalar case, and the
componentwise comparison machinery used by the property suites.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ._numeric import cexpm1, continuous_log
from .core import require_admissible
from .errors import AdmissibilityError, DimensionError, ExplosionError, NumericalError

__all__ = [
    "RiccatiSystem",
    "PhiPsi",
    "ScalarRiccatiSpec",
    "ComponentwiseRiccati",
    "ComparisonReport",
    "rhs",
    "integrate",
    "integrate_path",
    "blow_up_time",
    "scalar_riccati",
    "compare_solutions",
    "BLOW_UP_NORM",
]

# Operational blow-up threshold on max|psi_i|; past this the solution is
# declared exploded and the reached time reported.
BLOW_UP_NORM = 1e8


@dataclass(frozen=True)
class RiccatiSystem:
    """The coupled equations for (phi, psi); discounted when ``srs`` is set."""

    params: object
    srs: object = None

    def __post_init__(self):
        require_admissible(self.params)
        if self.srs is not None and self.srs.gamma.shape != (self.params.d,):
            raise DimensionError(
                f"gamma must have length {self.params.d}, got {self.srs.gamma.shape}"
            )

    @property
    def d(self):
        return self.params.d


def rhs(sys, psi):
    """Right-hand side (dphi, dpsi) at a given psi value."""
    p = sys.params
    psi = np.asarray(psi, dtype=complex)
    dpsi = p.Bmat.T.astype(complex) @ psi
    if p.m:
        dpsi[: p.m] += 0.5 * np.einsum("ikl,k,l->i", p.alphas, psi, psi)
    dphi = 0.5 * (psi @ p.a @ psi) + p.b @ psi
    if sys.srs is not None:
        dphi = dphi - sys.srs.c
        dpsi = dpsi - sys.srs.gamma
    return dphi, dpsi


@dataclass(frozen=True)
class PhiPsi:
    """Transform exponents at horizon t for initial condition u."""

    t: float
    u: np.ndarray
    phi: complex
    psi: np.ndarray


# Dormand-Prince 5(4) tableau; the 5th-order solution propagates, the
# embedded 4th-order difference drives the step control (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = _DP_B5 - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dopri5(f, y0, t0, t1, rtol, atol, cap=None, cap_dim=None, h0=None, max_steps=2_000_000):
    """March y' = f(y) (autonomous) from t0 to t1 with embedded error control.

    Raises ExplosionError when max|y[:cap_dim]| crosses ``cap`` or the step
    size underflows; the exception carries the last reached time.  Returns
    (y(t1), suggested next step).
    """
    y = np.array(y0)
    span = t1 - t0
    if span == 0.0:
        return y, h0
    t = t0
    k1 = f(y)

    if h0 is None:
        sc = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean(np.abs(y / sc) ** 2))
        d1 = np.sqrt(np.mean(np.abs(k1 / sc) ** 2))
        h = 0.01 * d0 / d1 if (d0 > 1e-5 and d1 > 1e-5) else 1e-6 * span
        h = min(h, span)
    else:
        h = min(h0, span)
    h_min = 1e-14 * span

    ks = [k1] + [None] * 6
    for _ in range(max_steps):
        h = min(h, t1 - t)
        for i in range(1, 7):
            yi = y + h * (_DP_A[i] @ ks[:i])
            ks[i] = f(yi)
        y_new = yi  # stage 7 uses the b5 weights: FSAL
        err_vec = h * (_DP_ERR @ ks)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err = np.sqrt(np.mean(np.abs(err_vec / sc) ** 2))
        if not np.isfinite(err):
            err = 10.0

        if err <= 1.0:
            t = t + h
            y = y_new
            k1 = ks[6]
            ks[0] = k1
            if cap is not None:
                lead = np.abs(y[:cap_dim]) if cap_dim else np.abs(y)
                if lead.max(initial=0.0) > cap:
                    raise ExplosionError(
                        f"transform exponent exceeded {cap:.0e} at t = {t:.9g}", t_reached=t
                    )
            if t >= t1 or (t1 - t) <= 1e-15 * max(abs(t1), 1.0):
                return y, h
        factor = 0.9 * err ** -0.2 if err > 0.0 else 5.0
        h = h * min(5.0, max(0.2, factor))
        if h < h_min:
            raise ExplosionError(
                f"step size underflow at t = {t:.9g} (solution blowing up)", t_reached=t
            )
    raise NumericalError("integrator exceeded the step budget")


def _state_rhs(sys):
    p = sys.params
    m, d = p.m, p.d
    Bt = p.Bmat.T.astype(complex)
    alphas = p.alphas.astype(complex)
    a = p.a.astype(complex)
    b = p.b.astype(complex)
    c = sys.srs.c if sys.srs is not None else 0.0
    gamma = sys.srs.gamma.astype(complex) if sys.srs is not None else None

    def f(y):
        psi = y[:d]
        out = np.empty(d + 1, dtype=complex)
        dpsi = Bt @ psi
        if m:
            dpsi[:m] += 0.5 * np.einsum("ikl,k,l->i", alphas, psi, psi)
        if gamma is not None:
            dpsi -= gamma
        out[:d] = dpsi
        out[d] = 0.5 * (psi @ a @ psi) + b @ psi - c
        return out

    return f


def _as_u(sys, u):
    uv = np.atleast_1d(np.asarray(u, dtype=complex))
    if uv.shape != (sys.d,):
        raise DimensionError(f"u must have length {sys.d}, got {uv.shape}")
    return uv


def integrate(sys, u, t, rtol=1e-10, atol=1e-12):
    """Solve for (phi(t,u), psi(t,u)) adaptively.

    In the plain (undiscounted) case the unconstrained block decouples into
    an autonomous linear system; its matrix-exponential solution replaces the
    integrated value after a consistency cross-check.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    uv = _as_u(sys, u)
    if t == 0.0:
        return PhiPsi(t=0.0, u=uv, phi=0.0 + 0.0j, psi=uv.copy())
    d, m = sys.d, sys.params.m
    y0 = np.concatenate([uv, [0.0 + 0.0j]])
    y, _ = _dopri5(_state_rhs(sys), y0, 0.0, float(t), rtol, atol, cap=BLOW_UP_NORM, cap_dim=d)
    psi = y[:d]
    if sys.srs is None and sys.params.n:
        exact = expm(sys.params.Bmat[m:, m:].T * t) @ uv[m:]
        gap = np.max(np.abs(psi[m:] - exact))
        if gap > 1e-7 * (1.0 + np.max(np.abs(exact))):
            raise NumericalError(
                f"linear psi block disagrees with its matrix-exponential solution by {gap:.3e}"
            )
        psi = psi.copy()
        psi[m:] = exact
    return PhiPsi(t=float(t), u=uv, phi=complex(y[d]), psi=psi)


def integrate_path(sys, u, ts, rtol=1e-10, atol=1e-12):
    """Transform exponents along an increasing time grid (one continued solve)."""
    uv = _as_u(sys, u)
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) < 0) or ts[0] < 0:
        raise ValueError("ts must be a nondecreasing nonnegative grid")
    f = _state_rhs(sys)
    out = []
    y = np.concatenate([uv, [0.0 + 0.0j]])
    t_cur, h = 0.0, None
    for t in ts:
        if t > t_cur:
            y, h = _dopri5(f, y, t_cur, float(t), rtol, atol, cap=BLOW_UP_NORM,
                           cap_dim=sys.d, h0=h)
            t_cur = float(t)
        out.append(PhiPsi(t=float(t), u=uv, phi=complex(y[sys.d]), psi=y[: sys.d].copy()))
    return out


def blow_up_time(sys, u, t_max, width=1e-6, rtol=1e-10, atol=1e-12):
    """Escape time of the transform exponent, or math.inf when above t_max.

    Bisection on the integrator's explosion outcome localizes the time to the
    requested absolute width.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    uv = _as_u(sys, u)
    try:
        integrate(sys, uv, t_max, rtol, atol)
        return math.inf
    except ExplosionError as e:
        lo, hi = 0.0, t_max
        if e.t_reached is not None:
            hi = min(hi, max(e.t_reached, width))
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        try:
            integrate(sys, uv, mid, rtol, atol)
            lo = mid
        except ExplosionError as e:
            hi = mid if e.t_reached is None else min(mid, max(e.t_reached, lo + 1e-16))
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ScalarRiccatiSpec:
    """Coefficients of dG/dt = A G^2 + B G - C with G(0) = u."""

    A: complex
    B: complex
    C: complex
    u: complex

    def __post_init__(self):
        if self.A == 0:
            raise ValueError("A must be nonzero (the equation is otherwise linear)")


def _unwrap_grid_size(t, lam, B, A, u):
    lam_p = (-B + lam) / (2.0 * A)
    lam_m = (-B - lam) / (2.0 * A)
    bound_g = max(abs(u), abs(lam_p), abs(lam_m))
    rate = 0.5 * (abs(lam.imag) + abs(complex(B).imag)) + abs(A) * bound_g
    return 17 + int(min(t * rate * 1.5, 60000.0))


def scalar_riccati(spec, t):
    """Closed-form (G(t,u), int_0^t G ds) with branch-continuous logarithm.

    With lam = sqrt(B^2 + 4AC) (principal branch) and E = e^{lam t} - 1,

        G = [u (1 + E/2 + B E/(2 lam)) - 2 C E/(2 lam)] / q,
        q = 1 + E/2 - (B + 2Au) E/(2 lam),
        int G = (1/A) [ (lam - B) t / 2 - log q ],

    where log q is tracked continuously in t from log q(0) = 0.  Real
    coefficient sets use explicit real branches whose denominator zeros (the
    blow-up times) are located exactly; the complex branch unwraps the
    argument of q along a grid sized to its winding rate.
    """
    A, B, C, u = complex(spec.A), complex(spec.B), complex(spec.C), complex(spec.u)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return u, 0.0 + 0.0j
    t = float(t)
    disc = B * B + 4.0 * A * C
    w = B + 2.0 * A * u
    is_real = all(z.imag == 0.0 for z in (A, B, C, u))

    if is_real and disc.real > 0.0:
        lam = math.sqrt(disc.real)
        Ar, Br, Cr, ur, wr = A.real, B.real, C.real, u.real, w.real
        qinf = 0.5 - wr / (2.0 * lam)
        q0 = 0.5 + wr / (2.0 * lam)
        if qinf < 0.0:
            t_star = math.log(-q0 / qinf) / lam
            if t_star <= t:
                raise ExplosionError(
                    f"denominator vanishes at t = {t_star:.9g}", t_reached=t_star
                )
        el = math.exp(-lam * t)
        if lam * t < 1e-6:
            em2l = 0.5 * t - lam * t * t / 4.0 + lam * lam * t**3 / 12.0
        else:
            em2l = -math.expm1(-lam * t) / (2.0 * lam)
        den = 0.5 * (1.0 + el) - wr * em2l
        num = ur * 0.5 * (1.0 + el) + (Br * ur - 2.0 * Cr) * em2l
        G = num / den
        intg = (-(lam + Br) * t / 2.0 - math.log(den)) / Ar
        return complex(G), complex(intg)

    if is_real and disc.real < 0.0:
        mu = math.sqrt(-disc.real)
        Ar, Br, Cr, ur, wr = A.real, B.real, C.real, u.real, w.real
        phase = math.atan2(wr, mu)
        t_star = (math.pi - 2.0 * phase) / mu
        if t_star <= t:
            raise ExplosionError(f"denominator vanishes at t = {t_star:.9g}", t_reached=t_star)
        hs = 0.5 * mu * t
        co, si = math.cos(hs), math.sin(hs)
        r_end = mu * co - wr * si
        G = (ur * (mu * co + Br * si) - 2.0 * Cr * si) / r_end
        intg = (-Br * t / 2.0 + math.log(mu / r_end)) / Ar
        return complex(G), complex(intg)

    lam = np.sqrt(disc) if disc.imag != 0.0 or disc.real >= 0.0 else 1j * math.sqrt(-disc.real)
    if abs(lam) * t < 1e-12:
        # lam -> 0 limit: q = 1 - w t / 2 linearly.
        q_end = 1.0 - 0.5 * w * t
        if abs(q_end) < 1e-13:
            raise ExplosionError(f"denominator vanishes near t = {t:.9g}", t_reached=t)
        G = (u * (1.0 + 0.5 * B * t) - C * t) / q_end
        intg = (-0.5 * B * t - np.log(q_end)) / A
        return complex(G), complex(intg)

    n = _unwrap_grid_size(t, lam, B, A, u)
    s = np.linspace(0.0, t, n)
    if lam.real * t <= 40.0:
        E = cexpm1(lam * s)
        q = 1.0 + 0.5 * E - w * (E / (2.0 * lam))
        log_shift = 0.0 + 0.0j
    else:
        qinf = 0.5 - w / (2.0 * lam)
        q0 = 0.5 + w / (2.0 * lam)
        q = qinf + q0 * np.exp(-lam * s)  # q(s) scaled by e^{-lam s}; q(0) = 1
        log_shift = lam * t
    small = np.abs(q) < 1e-13
    if np.any(small):
        t_hit = float(s[int(np.argmax(small))])
        raise ExplosionError(f"denominator vanishes near t = {t_hit:.9g}", t_reached=t_hit)
    clog = continuous_log(q) + log_shift

    el = np.exp(-lam * t)
    den_s = (0.5 - w / (2.0 * lam)) + (0.5 + w / (2.0 * lam)) * el
    num_s = u * (0.5 * (1.0 + el) + B * (1.0 - el) / (2.0 * lam)) - 2.0 * C * (1.0 - el) / (2.0 * lam)
    if lam.real * t <= 40.0:
        # direct, cancellation-free evaluation for small horizons
        E_end = cexpm1(lam * t)
        Ehat = E_end / (2.0 * lam)
        G = (u * (1.0 + 0.5 * E_end + B * Ehat) - 2.0 * C * Ehat) / (1.0 + 0.5 * E_end - w * Ehat)
    else:
        G = num_s / den_s
    intg = (0.5 * (lam - B) * t - clog) / A
    return complex(G), complex(intg)


@dataclass(frozen=True)
class ComponentwiseRiccati:
    """System d f_i = A_i f_i^2 + B_i . f + C_i(t), f(0) = f0, on R^m.

    ``C`` may be a constant vector or a callable of t.  The off-diagonal
    entries of B must be nonnegative for the comparison principle to apply.
    """

    A: np.ndarray
    B: np.ndarray
    C: object
    f0: np.ndarray

    def __post_init__(self):
        A = np.atleast_1d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        f0 = np.atleast_1d(np.asarray(self.f0, dtype=float))
        m = A.shape[0]
        if B.shape != (m, m) or f0.shape != (m,):
            raise DimensionError("A, B, f0 dimensions are inconsistent")
        off = B.copy()
        np.fill_diagonal(off, 0.0)
        if off.min(initial=0.0) < -1e-12:
            raise AdmissibilityError("off-diagonal coupling must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "f0", f0)

    def c_at(self, t):
        if callable(self.C):
            return np.atleast_1d(np.asarray(self.C(t), dtype=float))
        return np.atleast_1d(np.asarray(self.C, dtype=float))


@dataclass
class ComparisonReport:
    times: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    max_violation: float
    lower_bound_violation: float | None
    truncated_at: float | None


def _integrate_componentwise(spec, grid, rtol, atol):
    """Values on the grid; stops early if the solution escapes."""

    def f(y):
        # time is carried as the last component to allow time-dependent C
        t = y[-1].real if np.iscomplexobj(y) else y[-1]
        out = np.empty_like(y)
        out[:-1] = spec.A * y[:-1] ** 2 + spec.B @ y[:-1] + spec.c_at(t)
        out[-1] = 1.0
        return out

    vals = [spec.f0.copy()]
    y = np.concatenate([spec.f0, [grid[0]]]).astype(float)
    h = None
    for t0, t1 in zip(grid[:-1], grid[1:]):
        try:
            y, h = _dopri5(f, y, t0, t1, rtol, atol, cap=BLOW_UP_NORM,
                           cap_dim=len(spec.f0), h0=h)
        except ExplosionError:
            break
        vals.append(y[:-1].copy())
    return np.array(vals)


def compare_solutions(spec1, spec2, horizon, n_grid=65, rtol=1e-10, atol=1e-12):
    """Componentwise ordering check f1(t) <= f2(t) over [0, horizon].

    Preconditions (rejected otherwise): shared coupling matrix with
    nonnegative off-diagonals, A1 <= A2, C1(t) <= C2(t) on the grid, and
    f1(0) <= f2(0).  When A1 = 0 the explicit linear lower bound
    e^{Bt}(f1(0) + int e^{-Bs} C1(s) ds) is also checked against f2.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    grid = np.linspace(0.0, float(horizon), n_grid)
    if spec1.A.shape != spec2.A.shape:
        raise AdmissibilityError("specs have different dimension")
    if not np.allclose(spec1.B, spec2.B, atol=1e-12):
        raise AdmissibilityError("comparison requires a common coupling matrix B")
    tol = 1e-12
    if np.any(spec1.A > spec2.A + tol):
        raise AdmissibilityError("requires A1 <= A2 componentwise")
    if np.any(spec1.f0 > spec2.f0 + tol):
        raise AdmissibilityError("requires f1(0) <= f2(0) componentwise")
    for t in grid:
        if np.any(spec1.c_at(t) > spec2.c_at(t) + tol):
            raise AdmissibilityError("requires C1(t) <= C2(t) componentwise")

    f1 = _integrate_componentwise(spec1, grid, rtol, atol)
    f2 = _integrate_componentwise(spec2, grid, rtol, atol)
    k = min(len(f1), len(f2))
    truncated = None if k == n_grid else float(grid[k - 1])
    viol = float(np.max(np.maximum(0.0, f1[:k] - f2[:k]), initial=0.0))

    lower_viol = None
    if np.all(spec1.A == 0.0):
        lin = ComponentwiseRiccati(A=np.zeros_like(spec1.A), B=spec1.B, C=spec1.C, f0=spec1.f0)
        g = _integrate_componentwise(lin, grid, rtol, atol)
        kk = min(len(g), k)
        lower_viol = float(np.max(np.maximum(0.0, g[:kk] - f2[:kk]), initial=0.0))

    return ComparisonReport(
        times=grid[:k], f1=f1[:k], f2=f2[:k], max_violation=viol,
        lower_bound_violation=lower_viol, truncated_at=truncated,
    )
