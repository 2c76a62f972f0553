"""Bond, bond-option and cap pricing from the discounted affine transform.

Prices rest on the discounted exponents (Phi, Psi) of
E[e^{-int_t^T r} e^{u.X(T)} | X(t)] = e^{Phi(T-t,u) + Psi(T-t,u).X(t)}:
the T-bond is the u = 0 case, P(t,T) = e^{-A(T-t) - B(T-t).X(t)} with
A = -Phi(.,0), B = -Psi(.,0), and the conditional transform of X(T) under
the S-forward measure follows by a change of numeraire.  Bond options
decompose into exercise probabilities under the S- and T-forward measures,
which are Gaussian for the Vasicek model, noncentral chi-square for CIR,
and recovered by Fourier inversion otherwise.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammainc, gammaln, ndtr

from .core import as_state_array
from .errors import NoSolutionError, NumericalError
from .models import (
    CIRParams,
    HestonParams,
    VasicekParams,
    cir_bond_coeffs,
    cir_forward_chisq,
    cir_phi_psi,
    heston_phi_psi,
    vasicek_bond_coeffs,
    vasicek_forward_gaussian,
    vasicek_phi_psi,
)
from .riccati import RiccatiSystem, integrate, integrate_path

__all__ = [
    "PriceResult",
    "TenorStructure",
    "DiscountedTransform",
    "discounted_transform",
    "bond_price",
    "forward_char",
    "noncentral_chisq_cdf",
    "bond_option",
    "atm_strike",
    "cap_price",
    "simple_forward_rates",
    "black_cap_price",
    "black_cap_vega",
    "implied_vol_cap",
    "cap_table",
    "write_cap_table_csv",
    "detect_named_model",
]

_METHODS = ("closed-form", "quadrature", "chi2", "mc")


@dataclass(frozen=True)
class PriceResult:
    value: float
    method: str
    err: float

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.err < 0:
            raise ValueError("err must be nonnegative")


@dataclass(frozen=True)
class TenorStructure:
    """Uniformly spaced settlement grid T_0 < T_1 < ... < T_n."""

    dates: np.ndarray
    spacing: float = 0.25

    def __post_init__(self):
        d = np.asarray(self.dates, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("dates must be a nonempty vector")
        if d.size > 1:
            gaps = np.diff(d)
            if np.any(gaps <= 0) or np.max(np.abs(gaps - self.spacing)) > 1e-9:
                raise ValueError("dates must increase in steps of `spacing`")
        object.__setattr__(self, "dates", d)

    @classmethod
    def quarterly(cls, maturity):
        k = int(round(maturity / 0.25))
        if abs(k * 0.25 - maturity) > 1e-9 or k < 1:
            raise ValueError("maturity must be a positive multiple of 0.25 years")
        return cls(dates=0.25 * np.arange(1, k + 1), spacing=0.25)

    @property
    def n_caplets(self):
        return self.dates.size - 1


@dataclass(frozen=True)
class DiscountedTransform:
    t: float
    u: np.ndarray
    Phi: complex
    Psi: np.ndarray


def detect_named_model(p, srs):
    """(kind, params) when (p, srs) is a canonical Vasicek/CIR/Heston setup,
    else (None, None).  Used to dispatch to closed forms."""
    g = srs.gamma
    if p.m == 1 and p.n == 0 and srs.c == 0.0 and np.array_equal(g, [1.0]) and p.a[0, 0] == 0.0:
        sig2 = p.alphas[0][0, 0]
        return "cir", CIRParams(b=p.b[0], beta=p.Bmat[0, 0], sigma=math.sqrt(sig2))
    if p.m == 0 and p.n == 1 and srs.c == 0.0 and np.array_equal(g, [1.0]) and p.a[0, 0] >= 0.0:
        return "vasicek", VasicekParams(b=p.b[0], beta=p.Bmat[0, 0], sigma=math.sqrt(p.a[0, 0]))
    if p.m == 1 and p.n == 1 and np.all(p.a == 0.0) and np.array_equal(g, [0.0, 0.0]):
        al = p.alphas[0]
        if abs(al[1, 1] - 2.0) < 1e-12 and al[0, 0] >= 0.0:
            s = math.sqrt(0.5 * al[0, 0])
            rho = al[0, 1] / (2.0 * s) if s > 0 else 0.0
            ok = (
                abs(rho) <= 1.0 + 1e-12
                and p.Bmat[0, 1] == 0.0
                and p.Bmat[1, 0] == -1.0
                and p.Bmat[1, 1] == 0.0
                and srs.c == p.b[1]
            )
            if ok:
                return "heston", HestonParams(
                    k=p.b[0], kappa=p.Bmat[0, 0], sigma=s, rho=min(max(rho, -1.0), 1.0),
                    r=p.b[1], x1_0=0.0, x2_0=0.0,
                )
    return None, None


def discounted_transform(p, srs, u, t, rtol=1e-10, atol=1e-12):
    """(Phi, Psi) via the generic adaptive integrator."""
    pp = integrate(RiccatiSystem(params=p, srs=srs), u, t, rtol=rtol, atol=atol)
    return DiscountedTransform(t=pp.t, u=pp.u, Phi=pp.phi, Psi=pp.psi)


def _transform_auto(p, srs, u, t):
    """(Phi, Psi) using a model closed form when available, integrator otherwise."""
    kind, mp = detect_named_model(p, srs)
    uv = np.atleast_1d(np.asarray(u, dtype=complex))
    if kind == "cir":
        pp = cir_phi_psi(mp, t, uv[0])
        return pp.phi, pp.psi
    if kind == "vasicek":
        pp = vasicek_phi_psi(mp, t, uv[0])
        return pp.phi, pp.psi
    if kind == "heston":
        pp = heston_phi_psi(mp, t, uv[1], uv[0])
        return pp.phi - mp.r * t, pp.psi
    dt_ = discounted_transform(p, srs, uv, t)
    return dt_.Phi, dt_.Psi


def bond_coeffs(p, srs, tau):
    """(A, B) of P = e^{-A - B.x} over horizon tau; closed forms when the
    setup is a named short-rate model."""
    kind, mp = detect_named_model(p, srs)
    if kind == "cir":
        A, B = cir_bond_coeffs(mp, tau)
        return A, np.array([B])
    if kind == "vasicek":
        A, B = vasicek_bond_coeffs(mp, tau)
        return A, np.array([B])
    Phi, Psi = _transform_auto(p, srs, np.zeros(p.d), tau)
    if abs(Phi.imag) > 1e-9 or np.max(np.abs(Psi.imag), initial=0.0) > 1e-9:
        raise NumericalError("bond exponents came out non-real")
    return -Phi.real, -Psi.real


def bond_price(p, srs, x, t, T):
    """P(t,T) = e^{-A(T-t) - B(T-t).x}."""
    if T < t:
        raise ValueError("need t <= T")
    xv = as_state_array(x, p)
    kind, _ = detect_named_model(p, srs)
    A, B = bond_coeffs(p, srs, T - t)
    value = float(np.exp(-A - B @ xv))
    method = "closed-form" if kind else "quadrature"
    return PriceResult(value=value, method=method, err=abs(value) * 1e-9)


def forward_char(p, srs, x, t, T, S, u):
    """E_{Q^S}[e^{u.X(T)} | X(t) = x] by the change-of-numeraire formula."""
    if not (t <= T <= S):
        raise ValueError("need t <= T <= S")
    xv = as_state_array(x, p)
    uv = np.atleast_1d(np.asarray(u, dtype=complex))
    A_ST, B_ST = bond_coeffs(p, srs, S - T)
    Phi, Psi = _transform_auto(p, srs, uv - B_ST, T - t)
    A_St, B_St = bond_coeffs(p, srs, S - t)
    log_pts = -A_St - B_St @ xv
    return complex(np.exp(-A_ST + Phi + Psi @ xv - log_pts))


def noncentral_chisq_cdf(delta, zeta, x):
    """CDF of the noncentral chi-square law chi^2(delta, zeta).

    Poisson(zeta/2)-weighted mixture of central chi-square CDFs, expanded
    bidirectionally from the modal Poisson index until terms fall below
    1e-16 of the running sum (at most 1e5 terms).  ``x`` may be an array of
    quantiles (delta and zeta stay scalar).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    scalar = np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    hd, hx = 0.5 * delta, 0.5 * np.maximum(xv, 0.0)
    if zeta == 0.0:
        out = gammainc(hd, hx)
    else:
        lam = 0.5 * zeta
        j0 = int(lam)
        out = np.zeros_like(hx)
        budget = 100_000
        chunk = 64

        def block(js):
            logw = -lam + js * math.log(lam) - gammaln(js + 1.0)
            # (terms over j) x (quantiles): weights w_j * P(hd + j, x/2)
            return np.exp(logw)[:, None] * gammainc(hd + js[:, None], hx[None, :])

        j = j0
        while budget > 0:
            js = np.arange(j, j + chunk, dtype=float)
            terms = block(js)
            out += terms.sum(axis=0)
            budget -= chunk
            if terms[-1].max() < 1e-16 * max(out.max(), 1e-300):
                break
            j += chunk
        j = j0 - 1
        while j >= 0 and budget > 0:
            lo = max(0, j - chunk + 1)
            js = np.arange(lo, j + 1, dtype=float)
            terms = block(js)
            out += terms.sum(axis=0)
            budget -= js.size
            if terms[0].max() < 1e-16 * max(out.max(), 1e-300) or lo == 0:
                break
            j = lo - 1
        out = np.minimum(out, 1.0)
    out = np.where(xv <= 0.0, 0.0, out)
    out = np.where(np.isposinf(xv), 1.0, out)
    return float(out[0]) if scalar else out


def _gil_pelaez_prob(cf, z, abs_tol=1e-10):
    """P[Z <= z] from the characteristic function s -> E e^{i s Z}.

    The truncation grows until |cf| is negligible; the decay scale also
    estimates the dispersion of Z.  Degenerate laws (|cf| never decays) and
    thresholds dozens of dispersion units from the mean short-circuit to a
    step function: in both cases the oscillatory integral is numerically
    hopeless but the probability is 0/1 beyond the working precision.
    """
    s_max = 16.0
    tail = abs(cf(s_max))
    while tail > 1e-9 and s_max < 2**15:
        s_max *= 2.0
        tail = abs(cf(s_max))
    h = min(1e-3, 1.0 / s_max)
    mean = float(np.angle(cf(h)) / h)
    if tail > 0.5:
        # (nearly) deterministic law: step at the mean, the residual diffuse
        # mass is bounded by the shortfall of |cf| from 1
        return (1.0 if mean <= z else 0.0), max(1.0 - tail, 1e-12)
    # |cf(s_max)| <= 1e-9 at roughly 6.4 dispersion-inverses for light tails
    disp = 6.4 / s_max
    if abs(z - mean) > 40.0 * disp:
        return (1.0 if mean <= z else 0.0), 1e-10

    def integrand(s):
        return (np.exp(-1j * s * z) * cf(s)).imag / s

    val, err = quad(integrand, 1e-12, s_max, epsabs=abs_tol, limit=400)
    return 0.5 - val / math.pi, err / math.pi + tail


def bond_option(p, srs, x, t, T, S, K, kind="call", law="generic"):
    """European option on the S-bond, expiry T, strike K.

    The exercise event is E = {B(S-T).X(T) <= -A(S-T) - log K}; the price is
    P(t,S) Q^S[E] - K P(t,T) Q^T[E] for a call and the complementary
    decomposition for a put.  ``law`` selects how the forward-measure
    probabilities are computed: 'gaussian' (Vasicek), 'chi2' (CIR) or
    'generic' (Fourier inversion of the forward transform).
    """
    if not (t <= T <= S):
        raise ValueError("need t <= T <= S")
    if K <= 0:
        raise ValueError("K must be positive")
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    xv = as_state_array(x, p)
    model_kind, mp = detect_named_model(p, srs)
    if law == "gaussian" and model_kind != "vasicek":
        raise ValueError("law='gaussian' requires a Vasicek model setup")
    if law == "chi2" and model_kind != "cir":
        raise ValueError("law='chi2' requires a CIR model setup")

    A_ST, B_ST = bond_coeffs(p, srs, S - T)
    pts = bond_price(p, srs, xv, t, S).value
    ptT = bond_price(p, srs, xv, t, T).value
    thresh = -A_ST - math.log(K)
    err = 1e-12

    if law == "gaussian":
        r_t = xv[0]
        r_star = thresh / B_ST[0]
        m_s, var = vasicek_forward_gaussian(mp, r_t, t, T, S)
        m_t, _ = vasicek_forward_gaussian(mp, r_t, t, T, T)
        sd = math.sqrt(max(var, 0.0))
        if sd == 0.0:
            q_s = 1.0 if r_star >= m_s else 0.0
            q_t = 1.0 if r_star >= m_t else 0.0
        else:
            q_s = float(ndtr((r_star - m_s) / sd))
            q_t = float(ndtr((r_star - m_t) / sd))
        method = "closed-form"
    elif law == "chi2":
        r_t = xv[0]
        r_star = thresh / B_ST[0]
        if r_star <= 0:
            q_s = q_t = 0.0
        else:
            fs = cir_forward_chisq(mp, r_t, t, T, S)
            ft = cir_forward_chisq(mp, r_t, t, T, T)
            q_s = noncentral_chisq_cdf(fs.delta, fs.zeta, 2.0 * r_star / fs.c1)
            q_t = noncentral_chisq_cdf(ft.delta, ft.zeta, 2.0 * r_star / ft.c1)
        method = "chi2"
    elif law == "generic":
        def cf(s, S_meas):
            return forward_char(p, srs, xv, t, T, S_meas, 1j * s * B_ST)

        q_s, e1_ = _gil_pelaez_prob(lambda s: cf(s, S), thresh)
        q_t, e2_ = _gil_pelaez_prob(lambda s: cf(s, T), thresh)
        err = abs(pts) * e1_ + K * abs(ptT) * e2_ + 1e-12
        method = "quadrature"
    else:
        raise ValueError("law must be 'gaussian', 'chi2' or 'generic'")

    if kind == "call":
        value = pts * q_s - K * ptT * q_t
    else:
        value = K * ptT * (1.0 - q_t) - pts * (1.0 - q_s)
    return PriceResult(value=float(value), method=method, err=float(err))


def _discount_curve(p, srs, x, dates):
    xv = as_state_array(x, p)
    kind, _ = detect_named_model(p, srs)
    if kind in ("cir", "vasicek"):
        return np.array([bond_price(p, srs, xv, 0.0, T).value for T in dates])
    sys = RiccatiSystem(params=p, srs=srs)
    path = integrate_path(sys, np.zeros(p.d, dtype=complex), dates)
    return np.array([math.exp((pp.phi + pp.psi @ xv).real) for pp in path])


def atm_strike(p, srs, x, tenor):
    """Forward swap rate 4 (P(0,T_0) - P(0,T_n)) / sum_{i>=1} P(0,T_i)."""
    if tenor.n_caplets < 1:
        raise ValueError("tenor needs at least two dates")
    disc = _discount_curve(p, srs, x, tenor.dates)
    return float(4.0 * (disc[0] - disc[-1]) / np.sum(disc[1:]))


def cap_price(p, srs, x, kappa, tenor, law=None):
    """Cap with strike rate kappa: (1 + kappa/4) multiples of bond puts with
    strike 1/(1 + kappa/4) at each reset date."""
    if kappa <= -4.0:
        raise ValueError("strike rate must exceed -4 for a well-defined payoff")
    if law is None:
        kind, _ = detect_named_model(p, srs)
        law = {"cir": "chi2", "vasicek": "gaussian"}.get(kind, "generic")
    K = 1.0 / (1.0 + kappa / 4.0)
    values = []
    errs = []
    for i in range(tenor.n_caplets):
        T, S = tenor.dates[i], tenor.dates[i + 1]
        put = bond_option(p, srs, x, 0.0, T, S, K, kind="put", law=law)
        values.append((1.0 + kappa / 4.0) * put.value)
        errs.append((1.0 + kappa / 4.0) * put.err)
    method = {"chi2": "chi2", "gaussian": "closed-form"}.get(law, "quadrature")
    return PriceResult(value=float(np.sum(values)) if values else 0.0, method=method,
                       err=float(np.sum(errs)) if errs else 0.0)


def simple_forward_rates(discounts):
    """Quarterly simple forward rates F(T_{i-1}, T_i) = 4 (P_{i-1}/P_i - 1)."""
    d = np.asarray(discounts, dtype=float)
    return 4.0 * (d[:-1] / d[1:] - 1.0)


def black_cap_price(forwards, kappa, sigma_b, discounts, tenor):
    """Black's cap value; ``discounts`` are P(0, T_i) for the settlement
    dates T_1..T_n and ``forwards`` the matching simple forward rates."""
    if kappa <= 0 or sigma_b <= 0:
        raise ValueError("kappa and sigma_b must be positive")
    F = np.asarray(forwards, dtype=float)
    P = np.asarray(discounts, dtype=float)
    resets = tenor.dates[:-1]
    if F.shape != resets.shape or P.shape != resets.shape:
        raise ValueError("forwards/discounts must align with the caplets")
    sq = sigma_b * np.sqrt(resets)
    d1 = (np.log(F / kappa) + 0.5 * sigma_b**2 * resets) / sq
    d2 = (np.log(F / kappa) - 0.5 * sigma_b**2 * resets) / sq
    return float(np.sum(0.25 * P * (F * ndtr(d1) - kappa * ndtr(d2))))


def black_cap_vega(forwards, kappa, sigma_b, discounts, tenor):
    F = np.asarray(forwards, dtype=float)
    P = np.asarray(discounts, dtype=float)
    resets = tenor.dates[:-1]
    sq = sigma_b * np.sqrt(resets)
    d1 = (np.log(F / kappa) + 0.5 * sigma_b**2 * resets) / sq
    pdf = np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
    return float(np.sum(0.25 * P * F * pdf * np.sqrt(resets)))


def implied_vol_cap(target, forwards, kappa, discounts, tenor,
                    bracket=(1e-6, 10.0), price_tol=1e-12, vol_tol=1e-8):
    """Black volatility matching a cap price: bisection to a 1e-4 bracket,
    then Newton polish with the analytic vega."""
    lo, hi = bracket

    def f(s):
        return black_cap_price(forwards, kappa, s, discounts, tenor) - target

    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise NoSolutionError(
            f"target {target:.6g} outside the attainable price range "
            f"[{flo + target:.6g}, {fhi + target:.6g}]"
        )
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    for _ in range(60):
        fs = f(s)
        if abs(fs) <= price_tol:
            break
        if fs > 0:
            hi = s
        else:
            lo = s
        v = black_cap_vega(forwards, kappa, s, discounts, tenor)
        s_new = s - fs / v if v > 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) < vol_tol * 1e-4:
            s = s_new
            break
        s = s_new
    return float(s)


def cap_table(p, srs, x, maturities):
    """Rows (maturity, atm strike, cap price, implied vol); degenerate
    maturities (no caplets) yield a zero price with blank strike/vol."""
    rows = []
    for mat in maturities:
        tenor = TenorStructure.quarterly(mat)
        if tenor.n_caplets == 0:
            rows.append((float(mat), None, 0.0, None))
            continue
        kappa = atm_strike(p, srs, x, tenor)
        price = cap_price(p, srs, x, kappa, tenor).value
        disc = _discount_curve(p, srs, x, tenor.dates)
        fwds = simple_forward_rates(disc)
        vol = implied_vol_cap(price, fwds, kappa, disc[1:], tenor)
        rows.append((float(mat), kappa, price, vol))
    return rows


def write_cap_table_csv(rows, path):
    """CSV with 4-decimal display columns plus full-precision duplicates."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([
            "maturity_years", "strike_rate", "cap_price", "implied_vol",
            "strike_rate_full", "cap_price_full", "implied_vol_full",
        ])
        for mat, kappa, price, vol in rows:
            disp = lambda v: "" if v is None else f"{v:.4f}"
            full = lambda v: "" if v is None else repr(float(v))
            w.writerow([f"{mat:g}", disp(kappa), disp(price), disp(vol),
                        full(kappa), full(price), full(vol)])
