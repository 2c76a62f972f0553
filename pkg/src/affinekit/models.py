"""Closed-form transform exponents for the Vasicek, CIR and Heston models.

Conventions (state written as X, short rate as r):

* Vasicek:  dr = (b + beta r) dt + sigma dW               on R
* CIR:      dr = (b + beta r) dt + sigma sqrt(r) dW       on R+
* Heston:   dX1 = (k + kappa X1) dt + sigma sqrt(2 X1) dW1            on R+
            dX2 = (r - X1) dt + sqrt(2 X1)(rho dW1 + sqrt(1-rho^2) dW2)
            with the stock S = e^{X2} and constant rate r.

For the short-rate models the functions below return the *discounted*
exponents (Phi, Psi) of E[e^{-int_0^t r} e^{u r(t)}], i.e. the system with
unit rate loading.  For Heston they return the plain exponents (phi, psi);
discounting is the deterministic factor e^{-rt}.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._numeric import e1, e1c, e2, e2c, g3
from .core import AffineParams, ShortRateSpec, StateVector
from .errors import AdmissibilityError
from .riccati import PhiPsi, ScalarRiccatiSpec, scalar_riccati

__all__ = [
    "VasicekParams",
    "CIRParams",
    "HestonParams",
    "vasicek_phi_psi",
    "vasicek_bond_coeffs",
    "vasicek_forward_gaussian",
    "cir_lambda",
    "cir_L",
    "cir_phi_psi",
    "cir_bond_coeffs",
    "cir_forward_chisq",
    "ForwardChiSq",
    "heston_phi_psi",
    "heston_from_variance_form",
    "as_affine",
]


@dataclass(frozen=True)
class VasicekParams:
    b: float
    beta: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise AdmissibilityError("sigma must be nonnegative")


@dataclass(frozen=True)
class CIRParams:
    b: float
    beta: float
    sigma: float

    def __post_init__(self):
        if self.b < 0:
            raise AdmissibilityError("b must be nonnegative on R+")
        if self.sigma < 0:
            raise AdmissibilityError("sigma must be nonnegative")


@dataclass(frozen=True)
class HestonParams:
    k: float
    kappa: float
    sigma: float
    rho: float
    r: float
    x1_0: float
    x2_0: float

    def __post_init__(self):
        if self.k < 0 or self.sigma < 0:
            raise AdmissibilityError("k and sigma must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise AdmissibilityError("rho must lie in [-1, 1]")
        if self.x1_0 < 0:
            raise AdmissibilityError("x1_0 must be nonnegative")


def _linear_g(B, C, u, t):
    """(G, int G) for the linear equation dG = B G - C, G(0) = u."""
    B, C, u = complex(B), complex(C), complex(u)
    G = np.exp(B * t) * u - C * t * e1c(B * t)
    intg = u * t * e1c(B * t) - C * t * t * e2c(B * t)
    return complex(G), complex(intg)


def vasicek_phi_psi(p, t, u):
    """Discounted exponents for the Vasicek short rate (unit rate loading).

    Psi(t,u) = e^{bt} u - (e^{bt}-1)/b with b = beta, and Phi is its exact
    integral Phi = sigma^2/2 int Psi^2 + b int Psi, valid for every u in C.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    beta, sig, b = p.beta, p.sigma, p.b
    u = complex(u)
    t = float(t)
    bt = beta * t
    psi = np.exp(bt) * u - t * e1(bt)
    phi = 0.5 * sig * sig * (
        u * u * t * e1(2.0 * bt) - u * t * t * e1(bt) ** 2 + t**3 * g3(bt)
    ) + b * (u * t * e1(bt) - t * t * e2(bt))
    return PhiPsi(t=t, u=np.array([u]), phi=complex(phi), psi=np.array([complex(psi)]))


def vasicek_bond_coeffs(p, t):
    """(A, B) with bond price e^{-A - B r}; A = -Phi(t,0), B = -Psi(t,0)."""
    pp = vasicek_phi_psi(p, t, 0.0)
    return -pp.phi.real, -pp.psi[0].real


def vasicek_forward_gaussian(p, r_t, t, T, S):
    """Mean and variance of r(T) given r(t) under the S-forward measure.

    Derived by solving the forward-measure linear dynamics
    dr = (b - sigma^2 B(S-u) + beta r) du + sigma dW^S, which gives

        mean = e^{beta tau} r_t + b (e^{beta tau}-1)/beta
               + sigma^2 (e^{beta tau}-1)/beta^2
               - sigma^2 (e^{beta(S+T-2t)} - e^{beta(S-T)})/(2 beta^2),
        var  = sigma^2 (e^{2 beta tau} - 1)/(2 beta),     tau = T - t.

    The mean propagator is e^{beta tau} = B'(tau), consistent with the
    instantaneous forward rate f(t,T) = A'(T-t) + B'(T-t) r(t).
    """
    if not (t <= T <= S):
        raise ValueError("need t <= T <= S")
    beta, sig, b = p.beta, p.sigma, p.b
    tau = T - t
    var = sig * sig * tau * e1(2.0 * beta * tau)
    if abs(beta) * (S - t) < 1e-8:
        mean = r_t + b * tau - sig * sig * tau * (0.5 * tau + (S - T))
        return float(mean), float(var)
    ebt = math.exp(beta * tau)
    m = b * tau * e1(beta * tau) + sig * sig / (beta * beta) * (
        (ebt - 1.0) - 0.5 * math.exp(beta * (S - T)) * (math.exp(2.0 * beta * tau) - 1.0)
    )
    return float(ebt * r_t + m), float(var)


def cir_lambda(p):
    return math.sqrt(p.beta * p.beta + 2.0 * p.sigma * p.sigma)


def cir_L(p, t):
    """The five auxiliary functions (L1..L5) of the CIR discounted solution."""
    lam = cir_lambda(p)
    e = math.exp(lam * t)
    L1 = 2.0 * (e - 1.0)
    L2 = lam * (e + 1.0) + p.beta * (e - 1.0)
    L3 = lam * (e + 1.0) - p.beta * (e - 1.0)
    L4 = p.sigma * p.sigma * (e - 1.0)
    L5 = 2.0 * lam * math.exp(0.5 * (lam - p.beta) * t)
    return L1, L2, L3, L4, L5


def cir_phi_psi(p, t, u):
    """Discounted exponents for the CIR short rate (unit rate loading).

    Psi solves the scalar equation with A = sigma^2/2, B = beta, C = 1 and
    Phi = b * int Psi; global for u in the closed left half-plane, and for
    real u > 0 until the denominator L3 - L4 u vanishes.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    u = complex(u)
    t = float(t)
    if p.sigma == 0.0:
        G, intg = _linear_g(p.beta, 1.0, u, t)
    else:
        spec = ScalarRiccatiSpec(A=0.5 * p.sigma**2, B=p.beta, C=1.0, u=u)
        G, intg = scalar_riccati(spec, t)
    return PhiPsi(t=t, u=np.array([u]), phi=complex(p.b * intg), psi=np.array([G]))


def cir_bond_coeffs(p, t):
    """(A, B) with bond price e^{-A - B r} via the L-function closed form."""
    if p.sigma == 0.0:
        pp = cir_phi_psi(p, t, 0.0)
        return -pp.phi.real, -pp.psi[0].real
    lam = cir_lambda(p)
    L1, _, L3, _, L5 = cir_L(p, t)
    A = -(2.0 * p.b / p.sigma**2) * math.log(L5 / L3)
    B = L1 / L3
    return A, B


@dataclass(frozen=True)
class ForwardChiSq:
    """Scaled noncentral chi-square law of the CIR rate under Q^S:
    2 r(T) / c1 ~ chi^2(delta, zeta) conditionally on r(t)."""

    c1: float
    c2: float
    delta: float
    zeta: float


def cir_forward_chisq(p, r_t, t, T, S):
    if not (t <= T <= S):
        raise ValueError("need t <= T <= S")
    if p.sigma <= 0.0:
        raise AdmissibilityError("degenerate sigma = 0: the rate evolves deterministically")
    if r_t < 0:
        raise ValueError("r_t must be nonnegative")
    lam = cir_lambda(p)
    _, _, L3_ST, _, _ = cir_L(p, S - T)
    L1_Tt, L2_Tt, L3_Tt, L4_Tt, _ = cir_L(p, T - t)
    L1_St, _, L3_St, _, _ = cir_L(p, S - t)
    c1 = L3_ST * L4_Tt / (2.0 * lam * L3_St)
    c2 = L2_Tt / L4_Tt - L1_St / L3_St
    return ForwardChiSq(c1=c1, c2=c2, delta=4.0 * p.b / p.sigma**2, zeta=2.0 * c2 * r_t)


def heston_phi_psi(p, t, u2, u1=0.0):
    """Plain exponents (phi, psi1, psi2=u2) of the Heston transform.

    psi1 solves the scalar equation with A = sigma^2, B = 2 rho sigma u2 +
    kappa, C = u2 - u2^2; phi = k int psi1 + r u2 t.  Globally defined for
    u1 in the closed left half-plane and 0 <= Re u2 <= 1; other arguments
    are served by the same closed form up to the blow-up time, past which an
    ExplosionError is raised.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    u1, u2 = complex(u1), complex(u2)
    t = float(t)
    B = 2.0 * p.rho * p.sigma * u2 + p.kappa
    C = u2 - u2 * u2
    if p.sigma == 0.0:
        G, intg = _linear_g(B, C, u1, t)
    else:
        G, intg = scalar_riccati(ScalarRiccatiSpec(A=p.sigma**2, B=B, C=C, u=u1), t)
    phi = p.k * intg + p.r * u2 * t
    return PhiPsi(t=t, u=np.array([u1, u2]), phi=complex(phi), psi=np.array([G, u2]))


def heston_from_variance_form(kappa_bar, eta, sigma, v0, r, rho):
    """Map the variance-form parameters (dv = kappa_bar (eta - v) dt +
    sigma sqrt(v) dW) to the state form via v = 2 X1.

    Differentiating X1 = v/2 halves the drift constant and the vol-of-vol:
    k = kappa_bar eta / 2, kappa = -kappa_bar, state sigma = sigma / 2,
    x1_0 = v0 / 2.  The stock starts at S(0) = 1 (x2_0 = 0).  The mapping is
    verified against the variance process by a moment-matching Monte Carlo
    oracle in the test suite.
    """
    if kappa_bar < 0 or eta < 0 or v0 < 0:
        raise AdmissibilityError("kappa_bar, eta, v0 must be nonnegative")
    return HestonParams(
        k=0.5 * kappa_bar * eta, kappa=-kappa_bar, sigma=0.5 * sigma, rho=rho, r=r,
        x1_0=0.5 * v0, x2_0=0.0,
    )


def as_affine(model, r0=None):
    """(AffineParams, ShortRateSpec, StateVector) for a named model.

    Vasicek and CIR need the initial rate ``r0``; Heston carries its own
    initial state.
    """
    if isinstance(model, VasicekParams):
        if r0 is None:
            raise ValueError("r0 is required for the Vasicek model")
        p = AffineParams(m=0, n=1, a=[[model.sigma**2]], alphas=[], b=[model.b],
                         Bmat=[[model.beta]])
        return p, ShortRateSpec(c=0.0, gamma=[1.0]), StateVector(x=[float(r0)], m=0)
    if isinstance(model, CIRParams):
        if r0 is None:
            raise ValueError("r0 is required for the CIR model")
        p = AffineParams(m=1, n=0, a=[[0.0]], alphas=[[[model.sigma**2]]], b=[model.b],
                         Bmat=[[model.beta]])
        return p, ShortRateSpec(c=0.0, gamma=[1.0]), StateVector(x=[float(r0)], m=1)
    if isinstance(model, HestonParams):
        s, rho = model.sigma, model.rho
        alpha1 = [[2.0 * s * s, 2.0 * rho * s], [2.0 * rho * s, 2.0]]
        p = AffineParams(
            m=1, n=1, a=np.zeros((2, 2)), alphas=[alpha1], b=[model.k, model.r],
            Bmat=[[model.kappa, 0.0], [-1.0, 0.0]],
        )
        srs = ShortRateSpec(c=model.r, gamma=[0.0, 0.0])
        return p, srs, StateVector(x=[model.x1_0, model.x2_0], m=1)
    raise TypeError(f"unsupported model type {type(model).__name__}")
