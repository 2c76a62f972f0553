"""Command-line front end.

    affinekit validate    --config model.toml
    affinekit phipsi      --config model.toml --t 1.0 --u 0.5j [--plain]
    affinekit bond        --config model.toml --maturity 10
    affinekit bond-option --config model.toml --expiry 0.25 --bond-maturity 0.5
                          --strike 0.98 [--kind put] [--law chi2]
    affinekit cap-table   --config cir.toml [--maturities 1,2,5,10] [--out caps.csv]
    affinekit heston-call --config heston.toml --maturity 0.5 --strike 1.0 [--p 0.5]
    affinekit vol-surface --config heston.toml [--maturities ...] [--strikes ...]
    affinekit mc-price    --config model.toml --instrument bond --maturity 1
                          [--paths N] [--steps N] [--seed N]
    affinekit explosion   --config model.toml --u 60 [--t-max 10] [--ray-scan 5]

All commands accept repeated --set section.key=value overrides applied after
the file parse.  Errors print a line starting with ``error:`` and exit 1.
"""

import argparse
import sys

import numpy as np

from . import fourier, mc, pricing
from .config import apply_overrides, load_config
from .errors import AffineError
from .riccati import RiccatiSystem, blow_up_time, integrate

DEFAULT_MATURITIES = "1,2,3,4,5,6,7,8,9,10,15,20,25,30"
DEFAULT_SURFACE_T = "0.5,1.0,1.5,2.0,2.5,3.0"
DEFAULT_SURFACE_K = "0.8,0.9,1.0,1.1,1.2"


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _complexes(text):
    return [complex(v) for v in text.split(",") if v.strip()]


def _add_common(sp):
    sp.add_argument("--config", required=True, help="TOML model configuration")
    sp.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="dotted override, e.g. model.sigma=0.1")
    sp.add_argument("--out", default=None, help="output CSV path (table commands)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--p", type=float, default=0.5, help="dampening exponent")
    sp.add_argument("--variant", type=int, choices=(1, 2), default=2)


def _build_parser():
    ap = argparse.ArgumentParser(prog="affinekit", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="check admissibility of a config")
    _add_common(sp)

    sp = sub.add_parser("phipsi", help="transform exponents at (t, u)")
    _add_common(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--u", required=True, help="comma-separated complex components")
    sp.add_argument("--plain", action="store_true",
                    help="drop the short-rate discounting")

    sp = sub.add_parser("bond", help="zero-coupon bond price")
    _add_common(sp)
    sp.add_argument("--maturity", type=float, required=True)

    sp = sub.add_parser("bond-option", help="European bond option")
    _add_common(sp)
    sp.add_argument("--expiry", type=float, required=True)
    sp.add_argument("--bond-maturity", type=float, required=True)
    sp.add_argument("--strike", type=float, required=True)
    sp.add_argument("--kind", choices=("call", "put"), default="call")
    sp.add_argument("--law", choices=("gaussian", "chi2", "generic"), default="generic")

    sp = sub.add_parser("cap-table", help="ATM cap prices and implied vols")
    _add_common(sp)
    sp.add_argument("--maturities", default=DEFAULT_MATURITIES)

    sp = sub.add_parser("heston-call", help="European call via strip quadrature")
    _add_common(sp)
    sp.add_argument("--maturity", type=float, required=True)
    sp.add_argument("--strike", type=float, required=True)

    sp = sub.add_parser("vol-surface", help="implied-vol grid for a Heston config")
    _add_common(sp)
    sp.add_argument("--maturities", default=DEFAULT_SURFACE_T)
    sp.add_argument("--strikes", default=DEFAULT_SURFACE_K)

    sp = sub.add_parser("mc-price", help="Monte Carlo price with standard error")
    _add_common(sp)
    sp.add_argument("--instrument", choices=("bond", "heston-call", "bond-put"),
                    required=True)
    sp.add_argument("--maturity", type=float, required=True)
    sp.add_argument("--strike", type=float, default=1.0)
    sp.add_argument("--bond-maturity", type=float, default=None)
    sp.add_argument("--notional", type=float, default=1.0)

    sp = sub.add_parser("explosion", help="blow-up time of the transform exponent")
    _add_common(sp)
    sp.add_argument("--u", required=True, help="comma-separated real components")
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("--plain", action="store_true", default=True,
                    help="use the undiscounted system (default)")
    sp.add_argument("--discounted", dest="plain", action="store_false")
    sp.add_argument("--ray-scan", type=int, default=0, metavar="N",
                    help="also report blow-up times along theta*u for N scales")
    return ap


def _load(args):
    cfg = load_config(args.config)
    if args.overrides:
        cfg = apply_overrides(cfg.raw, args.overrides)
    return cfg


def _cmd_validate(args):
    from .core import validate_admissible

    cfg = _load(args)
    rep = validate_admissible(cfg.params)
    if rep.ok:
        print(f"ok: {cfg.kind} parameters are admissible (m={cfg.params.m}, n={cfg.params.n})")
        return 0
    for v in rep.violations:
        print(f"error: {v}")
    return 1


def _cmd_phipsi(args):
    cfg = _load(args)
    u = np.array(_complexes(args.u), dtype=complex)
    sys_ = RiccatiSystem(params=cfg.params, srs=None if args.plain else cfg.srs)
    pp = integrate(sys_, u, args.t, rtol=args.tol, atol=args.tol * 1e-2)
    kindtag = "plain" if args.plain else "discounted"
    print(f"{kindtag} exponents at t={args.t:g}")
    print(f"phi = {pp.phi}")
    for i, v in enumerate(pp.psi):
        print(f"psi[{i}] = {v}")
    return 0


def _cmd_bond(args):
    cfg = _load(args)
    res = pricing.bond_price(cfg.params, cfg.srs, cfg.x0, 0.0, args.maturity)
    print(f"P(0,{args.maturity:g}) = {res.value:.10f}  (method={res.method}, err<={res.err:.2e})")
    return 0


def _cmd_bond_option(args):
    cfg = _load(args)
    res = pricing.bond_option(cfg.params, cfg.srs, cfg.x0, 0.0, args.expiry,
                              args.bond_maturity, args.strike, kind=args.kind, law=args.law)
    print(f"{args.kind} on P(.,{args.bond_maturity:g}), expiry {args.expiry:g}, "
          f"strike {args.strike:g}: {res.value:.10f}  (method={res.method}, err<={res.err:.2e})")
    return 0


def _cmd_cap_table(args):
    cfg = _load(args)
    if cfg.kind != "cir":
        print("error: cap-table requires a CIR config")
        return 1
    mats = _floats(args.maturities)
    rows = pricing.cap_table(cfg.params, cfg.srs, cfg.x0, mats)
    header = "maturity_years  strike_rate  cap_price  implied_vol"
    print(header)
    for mat, k, c, v in rows:
        fmt = lambda x: "      -" if x is None else f"{x:.4f}"
        print(f"{mat:>14g}  {fmt(k):>11}  {fmt(c):>9}  {fmt(v):>11}")
    if args.out:
        pricing.write_cap_table_csv(rows, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_heston_call(args):
    cfg = _load(args)
    if cfg.kind != "heston":
        print("error: heston-call requires a heston config")
        return 1
    res = fourier.heston_call(cfg.model, 0.0, args.maturity, args.strike,
                              p=args.p, variant=args.variant)
    iv = fourier.bs_implied_vol(res.value, float(np.exp(cfg.model.x2_0)),
                                args.strike, cfg.model.r, args.maturity)
    print(f"call(T={args.maturity:g}, K={args.strike:g}) = {res.value:.10f}  "
          f"(err<={res.err:.2e}, implied vol {iv:.4f})")
    return 0


def _cmd_vol_surface(args):
    cfg = _load(args)
    if cfg.kind != "heston":
        print("error: vol-surface requires a heston config")
        return 1
    rows = fourier.vol_surface(cfg.model, _floats(args.maturities), _floats(args.strikes),
                               p=args.p, variant=args.variant)
    print("T  K  price  implied_vol")
    for T, K, price, vol in rows:
        print(f"{T:g}  {K:g}  {price:.4f}  {vol:.4f}")
    if args.out:
        fourier.write_vol_surface_csv(rows, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_mc_price(args):
    cfg = _load(args)
    simcfg = mc.SimConfig(n_paths=args.paths, n_steps=args.steps, seed=args.seed,
                          steps_per_year=True)
    T = args.maturity
    notional = args.notional
    analytic = None
    if args.instrument == "bond":
        payoff = lambda xT: notional * np.ones(len(xT))
        analytic = notional * pricing.bond_price(cfg.params, cfg.srs, cfg.x0, 0.0, T).value
    elif args.instrument == "bond-put":
        S = args.bond_maturity if args.bond_maturity is not None else T + 0.25
        A, B = pricing.bond_coeffs(cfg.params, cfg.srs, S - T)
        payoff = lambda xT: notional * np.maximum(
            args.strike - np.exp(-A - xT @ B), 0.0)
        kind, _ = pricing.detect_named_model(cfg.params, cfg.srs)
        law = {"cir": "chi2", "vasicek": "gaussian"}.get(kind, "generic")
        analytic = notional * pricing.bond_option(
            cfg.params, cfg.srs, cfg.x0, 0.0, T, S, args.strike, kind="put", law=law).value
    else:
        if cfg.kind != "heston":
            print("error: instrument heston-call requires a heston config")
            return 1
        K = args.strike
        payoff = lambda xT: notional * np.maximum(np.exp(xT[:, 1]) - K, 0.0)
        analytic = notional * fourier.heston_call(cfg.model, 0.0, T, K,
                                                  p=args.p, variant=args.variant).value
    res = mc.mc_price(cfg.params, cfg.srs, cfg.x0, payoff, T, simcfg)
    line = f"mc {args.instrument}: {res.value:.8f} +- {res.err:.2e}"
    if analytic is not None:
        dev = abs(res.value - analytic) / res.err if res.err > 0 else 0.0
        line += f"  (analytic {analytic:.8f}, {dev:.2f} standard errors away)"
    print(line)
    return 0


def _cmd_explosion(args):
    cfg = _load(args)
    u = np.array(_floats(args.u), dtype=float)
    sys_ = RiccatiSystem(params=cfg.params, srs=None if args.plain else cfg.srs)
    tb = blow_up_time(sys_, u.astype(complex), args.t_max)
    if np.isinf(tb):
        print(f"no explosion <= {args.t_max:g}")
    else:
        print(f"t_plus(u) = {tb:.6f}")
    if args.ray_scan > 0:
        print("theta  t_plus(theta*u)")
        for theta in np.linspace(1.0 / args.ray_scan, 1.0, args.ray_scan):
            tb_s = blow_up_time(sys_, theta * u.astype(complex), args.t_max)
            label = f"{tb_s:.6f}" if np.isfinite(tb_s) else f"> {args.t_max:g}"
            print(f"{theta:.4f}  {label}")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "phipsi": _cmd_phipsi,
    "bond": _cmd_bond,
    "bond-option": _cmd_bond_option,
    "cap-table": _cmd_cap_table,
    "heston-call": _cmd_heston_call,
    "vol-surface": _cmd_vol_surface,
    "mc-price": _cmd_mc_price,
    "explosion": _cmd_explosion,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except AffineError as e:
        print(f"error: {e}")
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
