"""Quadrature pricing of payoffs with an exponential-strip representation.

A payoff f(x) = int e^{(u + i y w).x} f~(y) dy (anchor u = p w inside the
exponential-moment domain) prices by swapping expectation and integral:

    pi(t) = int e^{Phi(T-t, u + i y w) + Psi(T-t, u + i y w).X(t)} f~(y) dy.

The built-in transform is the dampened European call,
f~(y) = K^{1-p-iy} / ((p+iy)(p+iy-1)) / (2 pi), valid for p > 1; for
0 < p < 1 the same integral represents (e^z - K)^+ - e^z, so the discounted
stock value is added back.  Heston calls use the model closed form per
quadrature node; generic models go through the adaptive Riccati integrator.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from .core import as_state_array
from .errors import ExplosionError, NoSolutionError, StripError
from .models import heston_phi_psi
from .pricing import PriceResult
from .riccati import RiccatiSystem, blow_up_time, integrate

__all__ = [
    "PayoffTransform",
    "call_transform",
    "transform_price",
    "heston_call",
    "bs_call_price",
    "bs_implied_vol",
    "vol_surface",
    "write_vol_surface_csv",
]


@dataclass(frozen=True)
class PayoffTransform:
    """Strip anchor u = p * direction, scalar dampening p, integrand weight
    f_tilde, and a tail constant with |f_tilde(y)| <= tail_coeff / y^2.

    ``subtract_stock`` marks the 0 < p < 1 call variant whose integral
    represents payoff-minus-stock.
    """

    u: np.ndarray
    p: float
    f_tilde: object
    subtract_stock: bool = False
    tail_coeff: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))

    @property
    def direction(self):
        return self.u / self.p

    def along(self, axis, d):
        """Embed a one-dimensional transform on coordinate ``axis`` of a
        d-dimensional state."""
        u = np.zeros(d)
        u[axis] = self.p
        return PayoffTransform(u=u, p=self.p, f_tilde=self.f_tilde,
                               subtract_stock=self.subtract_stock,
                               tail_coeff=self.tail_coeff)


def call_transform(K, p):
    """Dampened transform of the call payoff (e^z - K)^+ on one coordinate.

    For p > 1 the integral gives the payoff itself; for 0 < p < 1 it gives
    payoff minus stock (flagged via ``subtract_stock``).  |f_tilde| is
    integrable with |f_tilde(y)| <= K^{1-p} / (2 pi y^2).
    """
    if K <= 0:
        raise ValueError("K must be positive")
    if p <= 0 or p == 1.0:
        raise ValueError("p must be positive and different from 1 (integrand poles)")

    def f_tilde(y):
        s = p + 1j * y
        return K ** (1.0 - p) * np.exp(-1j * y * math.log(K)) / (s * (s - 1.0)) / (2.0 * math.pi)

    return PayoffTransform(u=np.array([p]), p=float(p), f_tilde=f_tilde,
                           subtract_stock=(p < 1.0),
                           tail_coeff=K ** (1.0 - p) / (2.0 * math.pi))


def _damped_quadrature(exponent, f_tilde, tail_coeff, bound_m0, abs_tol):
    """2 int_0^Y Re(e^{exponent(y)} f_tilde(y)) dy with the truncation Y set
    so the analytic 1/y^2 tail is below abs_tol.

    ``bound_m0`` must bound |e^{exponent}| over all y (the value at y = 0
    works, by the modulus-of-expectation bound).  Returns (value, err).
    """
    cap = max(8.0 * bound_m0 * tail_coeff / max(abs_tol, 1e-300), 64.0)
    Y = 64.0
    while Y < cap:
        m_here = abs(np.exp(exponent(Y)))
        if 8.0 * m_here * tail_coeff / Y < 0.25 * abs_tol:
            break
        Y *= 2.0
    Y = min(Y, cap)

    def integrand(y):
        return (np.exp(exponent(y)) * f_tilde(y)).real

    val, qerr = quad(integrand, 0.0, Y, epsabs=0.25 * abs_tol, limit=800)
    m_y = abs(np.exp(exponent(Y)))
    tail = 2.0 * min(4.0 * m_y, bound_m0) * tail_coeff / Y
    return 2.0 * val, 2.0 * qerr + tail


def transform_price(p, srs, x, t, T, pt, abs_tol=1e-10):
    """Price a strip-represented payoff on a generic affine model.

    Every quadrature node solves the discounted transform equations with the
    adaptive integrator; the anchor is pre-checked against the maximal
    domain via the blow-up search.
    """
    if T < t:
        raise ValueError("need t <= T")
    xv = as_state_array(x, p)
    tau = T - t
    if pt.u.shape != (p.d,):
        raise ValueError(f"transform anchor must have length {p.d}; use PayoffTransform.along")
    sys = RiccatiSystem(params=p, srs=srs)
    tb = blow_up_time(sys, pt.u.astype(complex), max(tau, 1e-12))
    if tb <= tau:
        raise StripError(
            f"dampening anchor p = {pt.p:g} leaves the transform domain at t = {tb:.6g} "
            f"< {tau:g}; choose a different p"
        )
    w = pt.direction.astype(complex)

    def exponent(y):
        pp = integrate(sys, pt.u + 1j * y * w, tau)
        return pp.phi + pp.psi @ xv

    m0 = abs(np.exp(exponent(0.0)))
    val, err = _damped_quadrature(exponent, pt.f_tilde, pt.tail_coeff, m0, abs_tol)
    if pt.subtract_stock:
        stock = integrate(sys, w, tau)
        val += float(np.exp((stock.phi + stock.psi @ xv).real))
    return PriceResult(value=float(val), method="quadrature", err=float(err))


def heston_call(hp, t, T, K, p=0.5, variant=2):
    """European call on S = e^{X2} under the Heston model, state (x1_0, x2_0)
    read as the time-t state.

    variant 1 uses a dampening p > 1 (plain payoff transform), variant 2 any
    0 < p < 1 (payoff-minus-stock transform, stock value added back).
    """
    if T < t:
        raise ValueError("need t <= T")
    if variant == 1:
        if p <= 1.0:
            raise ValueError("variant 1 requires p > 1")
    elif variant == 2:
        if not 0.0 < p < 1.0:
            raise ValueError("variant 2 requires 0 < p < 1")
    else:
        raise ValueError("variant must be 1 or 2")
    if min(abs(p), abs(p - 1.0)) < 0.05:
        warnings.warn("dampening p close to an integrand pole: expect slow convergence",
                      RuntimeWarning, stacklevel=2)
    tau = T - t
    x1, x2 = hp.x1_0, hp.x2_0
    pt = call_transform(K, p)
    disc = math.exp(-hp.r * tau)
    if tau == 0.0:
        return PriceResult(value=max(math.exp(x2) - K, 0.0), method="quadrature", err=0.0)

    try:
        anchor = heston_phi_psi(hp, tau, p, 0.0)
    except ExplosionError as e:
        raise StripError(
            f"dampening p = {p:g} is outside the transform domain for horizon {tau:g} "
            f"(blow-up near t = {e.t_reached}); choose a different p"
        ) from e

    def exponent(y):
        pp = heston_phi_psi(hp, tau, p + 1j * y, 0.0)
        return pp.phi + pp.psi[0] * x1 + (p + 1j * y) * x2

    m0 = math.exp((anchor.phi + anchor.psi[0] * x1 + p * x2).real)
    val, err = _damped_quadrature(exponent, pt.f_tilde, pt.tail_coeff, m0, 1e-10 / disc)
    price = disc * val
    if pt.subtract_stock:
        price += math.exp(x2)
    return PriceResult(value=float(price), method="quadrature", err=float(disc * err))


def bs_call_price(S0, K, r, T, sigma):
    """Black-Scholes call value."""
    if sigma <= 0 or T <= 0:
        return max(S0 - K * math.exp(-r * T), 0.0)
    sq = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma * sigma) * T) / sq
    d2 = d1 - sq
    return S0 * float(ndtr(d1)) - K * math.exp(-r * T) * float(ndtr(d2))


def bs_implied_vol(price, S0, K, r, T, vol_tol=1e-8):
    """Volatility solving the Black-Scholes call formula for ``price``."""
    lo_bound = max(S0 - K * math.exp(-r * T), 0.0)
    if not lo_bound < price < S0:
        raise NoSolutionError(
            f"price {price:.6g} violates the no-arbitrage bounds ({lo_bound:.6g}, {S0:.6g})"
        )
    lo, hi = 1e-9, 10.0

    def f(s):
        return bs_call_price(S0, K, r, T, s) - price

    if f(hi) < 0:
        raise NoSolutionError("price above the attainable range at sigma = 10")
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    for _ in range(60):
        fs = f(s)
        if fs > 0:
            hi = s
        else:
            lo = s
        sq = s * math.sqrt(T)
        d1 = (math.log(S0 / K) + (r + 0.5 * s * s) * T) / sq
        vega = S0 * math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi) * math.sqrt(T)
        s_new = s - fs / vega if vega > 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) < vol_tol * 1e-4:
            s = s_new
            break
        s = s_new
    return float(s)


def vol_surface(hp, maturities, strikes, p=0.5, variant=2):
    """Rows (T, K, call price, implied vol) over a maturity/strike grid."""
    rows = []
    s0 = math.exp(hp.x2_0)
    for T in maturities:
        for K in strikes:
            pr = heston_call(hp, 0.0, T, K, p=p, variant=variant)
            iv = bs_implied_vol(pr.value, s0, K, hp.r, T)
            rows.append((float(T), float(K), pr.value, iv))
    return rows


def write_vol_surface_csv(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "K", "price", "implied_vol", "price_full", "implied_vol_full"])
        for T, K, price, vol in rows:
            w.writerow([f"{T:g}", f"{K:g}", f"{price:.4f}", f"{vol:.4f}",
                        repr(float(price)), repr(float(vol))])
