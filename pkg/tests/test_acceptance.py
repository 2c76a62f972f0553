"""Acceptance suite.

Every criterion runs at its stated tolerance and prints one pass/fail line
(run with ``pytest tests/test_acceptance.py -v -s`` to see them).
"""

import math
import time

import numpy as np

from affinekit import (
    ComponentwiseRiccati,
    ExplosionError,
    RiccatiSystem,
    SimConfig,
    TenorStructure,
    bond_option,
    bond_price,
    bs_implied_vol,
    canonical_transform,
    cir_exact_step,
    cir_phi_psi,
    compare_solutions,
    discounted_transform,
    heston_call,
    heston_phi_psi,
    integrate,
    mc_price,
    noncentral_chisq_cdf,
    simulate,
    vasicek_phi_psi,
)
from affinekit.models import as_affine
from affinekit.pricing import cap_table
from affinekit.riccati import blow_up_time

from conftest import CIR_BENCH, HESTON_BENCH, VASICEK_BENCH, random_admissible

TABLE_1 = [
    (1, 0.0843, 0.0073, 0.4506), (2, 0.0855, 0.0190, 0.3720),
    (3, 0.0862, 0.0302, 0.3226), (4, 0.0866, 0.0406, 0.2890),
    (5, 0.0868, 0.0501, 0.2647), (6, 0.0870, 0.0588, 0.2462),
    (7, 0.0871, 0.0668, 0.2316), (8, 0.0872, 0.0742, 0.2198),
    (9, 0.0873, 0.0809, 0.2100), (10, 0.0873, 0.0871, 0.2017),
    (15, 0.0875, 0.1110, 0.1744), (20, 0.0876, 0.1265, 0.1594),
    (25, 0.0876, 0.1365, 0.1502), (30, 0.0876, 0.1430, 0.1442),
]

TABLE_2 = {
    (0.5, 0.8): 0.1611, (0.5, 0.9): 0.1682, (0.5, 1.0): 0.1785,
    (0.5, 1.1): 0.1892, (0.5, 1.2): 0.1992,
    (1.0, 0.8): 0.1513, (1.0, 0.9): 0.1579, (1.0, 1.0): 0.1664,
    (1.0, 1.1): 0.1751, (1.0, 1.2): 0.1835,
    (1.5, 0.8): 0.1464, (1.5, 0.9): 0.1524, (1.5, 1.0): 0.1594,
    (1.5, 1.1): 0.1665, (1.5, 1.2): 0.1734,
    (2.0, 0.8): 0.1438, (2.0, 0.9): 0.1492, (2.0, 1.0): 0.1551,
    (2.0, 1.1): 0.1611, (2.0, 1.2): 0.1668,
    (2.5, 0.8): 0.1424, (2.5, 0.9): 0.1473, (2.5, 1.0): 0.1524,
    (2.5, 1.1): 0.1574, (2.5, 1.2): 0.1623,
    (3.0, 0.8): 0.1417, (3.0, 0.9): 0.1460, (3.0, 1.0): 0.1505,
    (3.0, 1.1): 0.1549, (3.0, 1.2): 0.1591,
}


def _report(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_1_cap_table(cir_setup):
    _, p, srs, x0 = cir_setup
    t0 = time.perf_counter()
    rows = cap_table(p, srs, x0, [r[0] for r in TABLE_1])
    elapsed = time.perf_counter() - t0
    worst = [0.0, 0.0, 0.0]
    for (mat, k, c, v), (_, ek, ec, ev) in zip(rows, TABLE_1):
        worst[0] = max(worst[0], abs(k - ek))
        worst[1] = max(worst[1], abs(c - ec))
        worst[2] = max(worst[2], abs(v - ev))
    ok = worst[0] <= 5e-5 and worst[1] <= 2e-4 and worst[2] <= 2e-3 and elapsed < 10.0
    _report(1, ok, f"14 rows, |strike| <= {worst[0]:.1e}, |price| <= {worst[1]:.1e}, "
                   f"|vol| <= {worst[2]:.1e}, {elapsed:.2f}s")


def test_criterion_2_vol_surface():
    t0 = time.perf_counter()
    worst = 0.0
    for (T, K), ref in TABLE_2.items():
        price = heston_call(HESTON_BENCH, 0.0, T, K, p=0.5, variant=2).value
        iv = bs_implied_vol(price, 1.0, K, HESTON_BENCH.r, T)
        worst = max(worst, abs(iv - ref))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed < 30.0
    _report(2, ok, f"30 implied vols, worst |err| = {worst:.1e}, {elapsed:.2f}s")


def test_criterion_3_route_agreement():
    worst = 0.0
    for (T, K) in TABLE_2:
        a = heston_call(HESTON_BENCH, 0.0, T, K, p=0.5, variant=2).value
        b = heston_call(HESTON_BENCH, 0.0, T, K, p=2.0, variant=1).value
        worst = max(worst, abs(a - b) / a)
    _report(3, worst <= 1e-8, f"p>1 vs 0<p<1 routes, worst relative gap {worst:.1e}")


def test_criterion_4_closed_form_vs_integrator(cir_setup, heston_setup, vasicek_setup):
    t_grid = [0.1, 0.5, 1.0, 5.0, 30.0]
    worst = 0.0

    _, pv, srsv, _ = vasicek_setup
    sys_v = RiccatiSystem(params=pv, srs=srsv)
    for t in t_grid:
        for u in [0.0, 0.3j, -1.0, 2.0, -0.5 + 1.5j]:
            cf = vasicek_phi_psi(VASICEK_BENCH, t, u)
            num = integrate(sys_v, [u], t)
            worst = max(worst, abs(cf.phi - num.phi), abs(cf.psi[0] - num.psi[0]))

    _, pc, srsc, _ = cir_setup
    sys_c = RiccatiSystem(params=pc, srs=srsc)
    for t in t_grid:
        for u in [0.0, -1.0, -0.5 + 2.0j, 2.0j, -3.0]:
            cf = cir_phi_psi(CIR_BENCH, t, u)
            num = integrate(sys_c, [u], t)
            worst = max(worst, abs(cf.phi - num.phi), abs(cf.psi[0] - num.psi[0]))

    _, ph, srsh, _ = heston_setup
    sys_plain = RiccatiSystem(params=ph)
    for t in t_grid:
        for (u1, u2) in [(0.0, 0.0), (0.0, 1.0), (0.0, 0.5 + 2.0j),
                         (-0.5, 0.3 + 1.0j), (-1.0 + 1.0j, 1.0 - 3.0j)]:
            cf = heston_phi_psi(HESTON_BENCH, t, u2, u1)
            num = integrate(sys_plain, [u1, u2], t)
            worst = max(worst, abs(cf.phi - num.phi),
                        float(np.max(np.abs(cf.psi - num.psi))))
            # discounted variant: Phi = phi - r t under srs = (r, 0)
            dt_ = discounted_transform(ph, srsh, [u1, u2], t)
            worst = max(worst, abs((cf.phi - HESTON_BENCH.r * t) - dt_.Phi),
                        float(np.max(np.abs(cf.psi - dt_.Psi))))
    _report(4, worst <= 1e-8, f"worst |closed-form - integrator| = {worst:.1e}")


def test_criterion_5_martingale(heston_setup):
    _, p, srs, x0 = heston_setup
    gap = 0.0
    for t in [0.5, 1.0, 3.0]:
        cf = heston_phi_psi(HESTON_BENCH, t, 1.0)
        gap = max(gap, abs(cf.phi - HESTON_BENCH.r * t), abs(cf.psi[0]),
                  abs(cf.psi[1] - 1.0))
        num = integrate(RiccatiSystem(params=p), [0.0, 1.0], t)
        gap = max(gap, abs(num.phi - HESTON_BENCH.r * t), abs(num.psi[0]),
                  abs(num.psi[1] - 1.0))
    res = mc_price(p, srs, x0, lambda xT: np.exp(xT[:, 1]), 1.0,
                   SimConfig(n_paths=100_000, n_steps=500, seed=19, steps_per_year=True))
    s0 = math.exp(HESTON_BENCH.x2_0)
    z = abs(res.value - s0) / res.err
    ok = gap <= 1e-10 and z < 3.0
    _report(5, ok, f"phi=rt/psi=(0,1) gap {gap:.1e}; discounted stock z = {z:.2f}")


def test_criterion_6_mc_vs_analytic(cir_setup, heston_setup):
    _, p, srs, x0 = cir_setup
    cfg = SimConfig(n_paths=100_000, n_steps=500, seed=7, steps_per_year=True)
    zs = {}

    mc_bond = mc_price(p, srs, x0, lambda xT: np.ones(len(xT)), 1.0, cfg)
    zs["bond"] = abs(mc_bond.value - bond_price(p, srs, x0, 0.0, 1.0).value) / mc_bond.err

    K = 1.0 / (1.0 + 0.0843 / 4.0)
    from affinekit.pricing import bond_coeffs

    A, B = bond_coeffs(p, srs, 0.25)
    put_payoff = lambda xT: np.maximum(K - np.exp(-A - xT @ B), 0.0)
    mc_put = mc_price(p, srs, x0, put_payoff, 0.25, cfg)
    an_put = bond_option(p, srs, x0, 0.0, 0.25, 0.5, K, kind="put", law="chi2").value
    zs["bond put"] = abs(mc_put.value - an_put) / mc_put.err

    _, ph, srsh, xh = heston_setup
    mc_call = mc_price(ph, srsh, xh, lambda xT: np.maximum(np.exp(xT[:, 1]) - 1.0, 0.0),
                       0.5, SimConfig(n_paths=100_000, n_steps=500, seed=11,
                                      steps_per_year=True))
    zs["heston call"] = abs(mc_call.value - heston_call(HESTON_BENCH, 0.0, 0.5, 1.0).value) \
        / mc_call.err

    ok = all(z < 3.0 for z in zs.values())
    _report(6, ok, "; ".join(f"{k} z = {z:.2f}" for k, z in zs.items()) +
            " (1e5 paths, 500 steps/yr)")


def test_criterion_7_moment_explosion(cir_setup):
    _, p, srs, x0 = cir_setup
    sys_d = RiccatiSystem(params=p, srs=srs)
    lam = math.sqrt(CIR_BENCH.beta**2 + 2 * CIR_BENCH.sigma**2)
    beta, sig2 = CIR_BENCH.beta, CIR_BENCH.sigma**2
    worst = 0.0
    for u in np.linspace(60.0, 150.0, 10):
        ratio = (lam + beta + sig2 * u) / (sig2 * u + beta - lam)
        t_exact = math.log(ratio) / lam
        tb = blow_up_time(sys_d, [u], 10.0)
        worst = max(worst, abs(tb - t_exact))

    # star-shapedness and convexity of the finite-horizon domains
    rng = np.random.default_rng(2024)
    tau = 1.0
    e = math.exp(abs(beta) * tau)
    u_plain = ((abs(beta) * (e + 1) / (e - 1)) - beta) / sig2
    el = math.exp(lam * tau)
    u_disc = ((lam * (el + 1) / (el - 1)) - beta) / sig2
    sys_p = RiccatiSystem(params=p)
    ph, _, _ = as_affine(HESTON_BENCH)
    sys_h = RiccatiSystem(params=ph)
    # locate the Heston domain boundary along the stock coordinate once
    lo, hi = 1.0, 40.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        try:
            integrate(sys_h, [0.0, mid], tau)
            lo = mid
        except ExplosionError:
            hi = mid
    u2_max = lo

    violations = 0
    for k in range(500):
        which = k % 3
        try:
            if which == 0:
                u = rng.uniform(0.0, 0.99 * u_disc)
                if k % 2:
                    integrate(sys_d, [rng.uniform(0.0, 1.0) * u], tau)
                else:
                    v = rng.uniform(0.0, 0.99 * u_disc)
                    th = rng.uniform(0.0, 1.0)
                    integrate(sys_d, [th * u + (1 - th) * v], tau)
            elif which == 1:
                u = rng.uniform(0.0, 0.99 * u_plain)
                if k % 2:
                    integrate(sys_p, [rng.uniform(0.0, 1.0) * u], tau)
                else:
                    v = rng.uniform(0.0, 0.99 * u_plain)
                    th = rng.uniform(0.0, 1.0)
                    integrate(sys_p, [th * u + (1 - th) * v], tau)
            else:
                u = np.array([-abs(rng.standard_normal()), rng.uniform(0.0, 0.99 * u2_max)])
                if k % 2:
                    integrate(sys_h, rng.uniform(0.0, 1.0) * u, tau)
                else:
                    v = np.array([-abs(rng.standard_normal()),
                                  rng.uniform(0.0, 0.99 * u2_max)])
                    th = rng.uniform(0.0, 1.0)
                    integrate(sys_h, th * u + (1 - th) * v, tau)
        except ExplosionError:
            violations += 1
    ok = worst <= 1e-4 and violations == 0
    _report(7, ok, f"blow-up vs closed-form root |err| <= {worst:.1e} (10 points); "
                   f"{violations} star/convexity violations in 500 trials")


def test_criterion_8_comparison_suite():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 5))
        B = rng.standard_normal((m, m)) * 0.4
        off = ~np.eye(m, dtype=bool)
        B[off] = np.abs(B[off])
        np.fill_diagonal(B, -np.abs(np.diag(B)) - 0.3)
        A1 = rng.uniform(-0.4, 0.2, m)
        A2 = A1 + rng.uniform(0.0, 0.3, m)
        C1 = rng.uniform(-0.4, 0.2, m)
        C2 = C1 + rng.uniform(0.0, 0.3, m)
        f01 = rng.uniform(-0.5, 0.1, m)
        f02 = f01 + rng.uniform(0.0, 0.3, m)
        rep = compare_solutions(
            ComponentwiseRiccati(A=A1, B=B, C=C1, f0=f01),
            ComponentwiseRiccati(A=A2, B=B, C=C2, f0=f02),
            horizon=1.0, n_grid=33,
        )
        worst = max(worst, rep.max_violation)
        if rep.lower_bound_violation is not None:
            worst = max(worst, rep.lower_bound_violation)
    _report(8, worst <= 1e-8, f"200 randomized pairs (m <= 4), worst violation {worst:.1e}")


def test_criterion_9_chisq_cdf():
    import mpmath as mp

    def cdf_by_density_quadrature(delta, zeta, x):
        # adaptive (tanh-sinh) quadrature of the Bessel-series density in
        # 30-digit arithmetic; handles the integrable endpoint singularity
        with mp.workdps(30):
            d2 = mp.mpf(delta) / 2
            z = mp.mpf(zeta)

            def f(s):
                return (mp.mpf("0.5") * mp.e ** (-(s + z) / 2)
                        * (s / z) ** (d2 / 2 - mp.mpf("0.5"))
                        * mp.besseli(d2 - 1, mp.sqrt(z * s)))

            mode = max(delta + zeta - 2.0, 0.0)
            pts = sorted({0.0, x} | {q for q in (0.5 * mode, mode) if 0.0 < q < x})
            return float(mp.quad(f, pts))

    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        delta = rng.uniform(0.6, 30.0)
        zeta = rng.uniform(0.05, 80.0)
        x = rng.uniform(0.05, delta + zeta + 4.0 * math.sqrt(2 * delta + 4 * zeta))
        ref = cdf_by_density_quadrature(delta, zeta, x)
        worst = max(worst, abs(noncentral_chisq_cdf(delta, zeta, x) - ref))

    rng2 = np.random.default_rng(56)
    r0, dt = 0.08, 0.5
    samp = np.sort(cir_exact_step(CIR_BENCH, np.full(100_000, r0), dt, rng2))
    s = CIR_BENCH.sigma**2 * (1 - math.exp(CIR_BENCH.beta * dt)) / (-4 * CIR_BENCH.beta)
    delta = 4 * CIR_BENCH.b / CIR_BENCH.sigma**2
    zeta = r0 * math.exp(CIR_BENCH.beta * dt) / s
    F = noncentral_chisq_cdf(delta, zeta, samp / s)
    n = len(samp)
    ks = max(float(np.max(np.arange(1, n + 1) / n - F)),
             float(np.max(F - np.arange(0, n) / n)))
    ok = worst <= 1e-9 and ks < 0.01
    _report(9, ok, f"CDF vs density quadrature |err| <= {worst:.1e} (50 triples); "
                   f"sampler KS = {ks:.4f} at 1e5 samples")


def test_criterion_10_stochastic_invariance(cir_setup, heston_setup):
    mins = []
    _, pc, _, x0c = cir_setup
    ctc = canonical_transform(pc)
    y0 = ctc.map_state(x0c)
    mins.append(simulate(ctc.transformed, y0, 1.0,
                         SimConfig(n_paths=20_000, n_steps=50, seed=41)).states.min())
    mins.append(simulate(ctc.transformed, y0, 1.0,
                         SimConfig(n_paths=20_000, n_steps=8, seed=42,
                                   scheme="cir-exact")).states.min())

    # near-absorbing square-root diffusion: the truncation actually binds
    from affinekit import CIRParams

    tight = CIRParams(b=0.004, beta=-0.9, sigma=math.sqrt(0.033))
    pt, _, xt = as_affine(tight, r0=0.02)
    ctt = canonical_transform(pt)
    mins.append(simulate(ctt.transformed, ctt.map_state(xt), 1.0,
                         SimConfig(n_paths=20_000, n_steps=50, seed=43)).states.min())
    mins.append(simulate(ctt.transformed, ctt.map_state(xt), 1.0,
                         SimConfig(n_paths=20_000, n_steps=8, seed=44,
                                   scheme="cir-exact")).states.min())

    _, ph, _, xh = heston_setup
    cth = canonical_transform(ph)
    ens = simulate(cth.transformed, cth.map_state(xh), 1.0,
                   SimConfig(n_paths=20_000, n_steps=50, seed=45))
    mins.append(ens.states[:, :, 0].min())

    rng = np.random.default_rng(46)
    for _ in range(3):
        p = canonical_transform(random_admissible(rng, 2, 2)).transformed
        ens = simulate(p, np.abs(rng.standard_normal(4)) * 0.3, 1.0,
                       SimConfig(n_paths=2000, n_steps=40, seed=47))
        mins.append(ens.states[:, :, :2].min())

    worst = min(mins)
    _report(10, worst >= 0.0, f"min nonnegative-block entry across schemes = {worst:.3e}")
