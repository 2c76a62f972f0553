import math

import numpy as np
import pytest

from affinekit import AffineParams, CIRParams, HestonParams, VasicekParams, as_affine

# Parameter sets used throughout: the CIR cap-table setup and the Heston
# vol-surface setup, plus a Vasicek variant with the same rate dynamics.
CIR_BENCH = CIRParams(b=0.08, beta=-0.9, sigma=math.sqrt(0.033))
CIR_R0 = 0.08
HESTON_BENCH = HestonParams(k=0.02, kappa=-2.0, sigma=0.1, rho=0.5, r=0.01,
                            x1_0=0.02, x2_0=0.0)
VASICEK_BENCH = VasicekParams(b=0.08, beta=-0.9, sigma=0.1)
VASICEK_R0 = 0.08


@pytest.fixture(scope="session")
def cir_setup():
    p, srs, x0 = as_affine(CIR_BENCH, r0=CIR_R0)
    return CIR_BENCH, p, srs, x0


@pytest.fixture(scope="session")
def heston_setup():
    p, srs, x0 = as_affine(HESTON_BENCH)
    return HESTON_BENCH, p, srs, x0


@pytest.fixture(scope="session")
def vasicek_setup():
    p, srs, x0 = as_affine(VASICEK_BENCH, r0=VASICEK_R0)
    return VASICEK_BENCH, p, srs, x0


def random_admissible(rng, m, n, scale=1.0, stable=True):
    """Draw a random admissible parameter set on R+^m x R^n."""
    d = m + n
    a = np.zeros((d, d))
    if n:
        M = rng.standard_normal((n, max(n, 1))) * scale
        a[m:, m:] = M @ M.T / max(n, 1)
    alphas = np.zeros((m, d, d))
    for i in range(m):
        if rng.random() < 0.25:
            # zero diagonal loading: only the JJ block may be nonzero
            if n:
                F = rng.standard_normal((n, n)) * scale
                alphas[i][m:, m:] = F @ F.T / n
            continue
        idx = np.array([i] + list(range(m, d)))
        F = rng.standard_normal((n + 1, n + 1)) * scale
        Mi = F @ F.T / (n + 1)
        alphas[i][np.ix_(idx, idx)] = Mi
    b = rng.standard_normal(d) * scale
    b[:m] = np.abs(b[:m])
    B = rng.standard_normal((d, d)) * scale
    B[:m, m:] = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                B[i, j] = abs(B[i, j])
    if stable:
        B -= np.eye(d) * (scale + np.max(np.abs(B)))
    return AffineParams(m=m, n=n, a=a, alphas=alphas, b=b, Bmat=B)


def random_state(rng, p, scale=1.0):
    x = rng.standard_normal(p.d) * scale
    x[: p.m] = np.abs(x[: p.m])
    return x
