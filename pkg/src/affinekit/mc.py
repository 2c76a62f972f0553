"""Monte Carlo simulation of canonical affine diffusions.

The Euler scheme evaluates drift and volatility at the positive part of the
state and clamps the nonnegative block after every step (full truncation),
so simulated paths never leave the state space.  The volatility factor is
the canonical rho(x) with rho_II = diag(sqrt(x_1..x_q), 0..0) and rho_JJ a
Cholesky factor of the JJ diffusion block; parameters must therefore be in
the canonical block-diagonal form (``canonical_transform`` produces it).

Randomness is counter-based and splittable: paths are grouped into fixed
blocks of 1024 and block b draws from an independent Philox stream keyed by
(seed, b).  Blocks are always generated in full, so enlarging the path
count extends an ensemble without reshuffling existing paths, and blocks
may be simulated concurrently (AFFINEKIT_THREADS caps the workers) with a
deterministic reduction order.
"""

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._numeric import e1
from .core import as_state_array, canonical_transform, is_block_diagonal, require_admissible
from .errors import AdmissibilityError, DimensionError
from .pricing import PriceResult
from .riccati import RiccatiSystem, blow_up_time, integrate

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "SCHEMES",
    "simulate",
    "cir_exact_step",
    "mc_price",
    "empirical_char",
    "moment_explosion_probe",
    "ProbeReport",
    "save_ensemble",
    "load_ensemble",
    "worker_count",
]

SCHEMES = ("euler-full-truncation", "cir-exact")
_BLOCK = 1024
_MAGIC = b"AFKENS01"


def worker_count():
    """min(4, cpu count), capped by the AFFINEKIT_THREADS environment variable."""
    base = min(4, os.cpu_count() or 1)
    env = os.environ.get("AFFINEKIT_THREADS")
    if env:
        try:
            base = max(1, min(base, int(env)))
        except ValueError:
            pass
    return base


@dataclass(frozen=True)
class SimConfig:
    """``n_steps`` is the total step count, or steps per year when
    ``steps_per_year`` is set."""

    n_paths: int
    n_steps: int
    seed: int = 0
    scheme: str = "euler-full-truncation"
    steps_per_year: bool = False

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("need n_paths >= 1 and n_steps >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    def total_steps(self, T):
        if self.steps_per_year:
            return max(1, int(math.ceil(self.n_steps * T)))
        return self.n_steps


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray
    config: SimConfig
    m: int
    n: int

    @property
    def terminal(self):
        return self.states[:, -1, :]


def _require_canonical(p):
    require_admissible(p)
    if not is_block_diagonal(p):
        raise AdmissibilityError(
            "simulation requires canonical block-diagonal parameters; "
            "apply canonical_transform first"
        )


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + block))


def _euler_block(p, x0, dt, n_steps, rng):
    """One full block of Euler full-truncation paths; returns (B, K+1, d)."""
    m, n, d = p.m, p.n, p.d
    Z = rng.standard_normal((_BLOCK, n_steps, d)) * math.sqrt(dt)
    X = np.empty((_BLOCK, n_steps + 1, d))
    X[:, 0, :] = x0
    diag_flags = np.array([p.alphas[i][i, i] for i in range(m)]) if m else np.zeros(0)
    a_JJ = p.a[m:, m:]
    alpha_JJ = p.alphas[:, m:, m:] if m else np.zeros((0, n, n))
    for k in range(n_steps):
        x = X[:, k, :]
        xn = x + (p.b + x @ p.Bmat.T) * dt
        if m:
            xn[:, :m] += np.sqrt(x[:, :m] * diag_flags) * Z[:, k, :m]
        if n == 1:
            var = a_JJ[0, 0] + (x[:, :m] @ alpha_JJ[:, 0, 0] if m else 0.0)
            xn[:, m] += np.sqrt(np.maximum(var, 0.0)) * Z[:, k, m]
        elif n > 1:
            M = a_JJ[None, :, :] + np.einsum("pi,ijk->pjk", x[:, :m], alpha_JJ)
            L = _chol_psd_batch(M)
            xn[:, m:] += np.einsum("pjk,pk->pj", L, Z[:, k, m:])
        if m:
            np.maximum(xn[:, :m], 0.0, out=xn[:, :m])
        X[:, k + 1, :] = xn
    return X


def _chol_psd_batch(M):
    """Batched Cholesky with a pivoted fallback for singular PSD blocks."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        from .core import _pivoted_cholesky

        out = np.empty_like(M)
        for i in range(M.shape[0]):
            try:
                out[i] = np.linalg.cholesky(M[i])
            except np.linalg.LinAlgError:
                out[i] = _pivoted_cholesky(M[i])
        return out


def _cir_exact_block(p, x0, dt, n_steps, rng):
    """Exact square-root-diffusion transitions (m = 1, n = 0)."""
    b, beta, sig2 = p.b[0], p.Bmat[0, 0], p.alphas[0][0, 0]
    X = np.empty((_BLOCK, n_steps + 1, 1))
    X[:, 0, 0] = x0[0]
    r = np.full(_BLOCK, x0[0])
    for k in range(n_steps):
        r = _cir_exact_sample(b, beta, sig2, r, dt, rng)
        X[:, k + 1, 0] = r
    return X


def _cir_exact_sample(b, beta, sig2, r, dt, rng):
    if sig2 == 0.0:
        return np.exp(beta * dt) * r + b * dt * float(e1(beta * dt))
    if beta == 0.0:
        s = 0.25 * sig2 * dt
        growth = 1.0
    else:
        s = sig2 * (1.0 - math.exp(beta * dt)) / (-4.0 * beta)
        growth = math.exp(beta * dt)
    delta = 4.0 * b / sig2
    zeta = r * growth / s
    j = rng.poisson(0.5 * zeta)
    return s * 2.0 * rng.gamma(0.5 * delta + j, 1.0)


def cir_exact_step(p, r, dt, rng):
    """One exact transition of dr = (b + beta r) dt + sigma sqrt(r) dW.

    The conditional law is scale * chi^2(delta, zeta) with
    scale = sigma^2 (1 - e^{beta dt}) / (-4 beta), delta = 4 b / sigma^2 and
    zeta = r e^{beta dt} / scale, obtained by matching the transform
    exponents of the transition to the noncentral chi-square transform (see
    docs/cir_exact_transition.md).  Sampling is the Poisson-Gamma mixture:
    j ~ Poisson(zeta/2), then Gamma(delta/2 + j, scale 2).  sigma = 0 falls
    back to the deterministic exponential-drift update.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = _cir_exact_sample(p.b, p.beta, p.sigma**2, r, dt, rng)
    return out if out.ndim else float(out)


def _run_blocks(p, x0, T, cfg, consume):
    """Simulate full blocks (concurrently) and hand (start, stop, block) to
    ``consume`` in deterministic block order."""
    n_steps = cfg.total_steps(T)
    dt = T / n_steps
    n_blocks = (cfg.n_paths + _BLOCK - 1) // _BLOCK
    engine = _cir_exact_block if cfg.scheme == "cir-exact" else _euler_block

    def run(bi):
        return engine(p, x0, dt, n_steps, _block_rng(cfg.seed, bi))

    workers = worker_count()
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = ex.map(run, range(n_blocks))
            for bi, blk in enumerate(blocks):
                start = bi * _BLOCK
                stop = min(start + _BLOCK, cfg.n_paths)
                consume(start, stop, blk[: stop - start])
    else:
        for bi in range(n_blocks):
            start = bi * _BLOCK
            stop = min(start + _BLOCK, cfg.n_paths)
            consume(start, stop, run(bi)[: stop - start])
    return n_steps, dt


def simulate(p, x0, T, cfg):
    """Full path ensemble on a uniform grid over [0, T].

    Requires canonical block-diagonal parameters; the cir-exact scheme
    additionally requires a one-dimensional nonnegative state.  Ensembles
    are deterministic in (seed, n_paths, n_steps, scheme), and extending
    n_paths leaves existing paths unchanged.
    """
    _require_canonical(p)
    if T <= 0:
        raise ValueError("T must be positive")
    xv = as_state_array(x0, p)
    if np.min(xv[: p.m], initial=0.0) < 0:
        raise AdmissibilityError("initial state outside the state space")
    if cfg.scheme == "cir-exact" and not (p.m == 1 and p.n == 0):
        raise AdmissibilityError("cir-exact scheme requires m = 1, n = 0")
    n_steps = cfg.total_steps(T)
    states = np.empty((cfg.n_paths, n_steps + 1, p.d))

    def consume(start, stop, blk):
        states[start:stop] = blk

    _run_blocks(p, xv, T, cfg, consume)
    times = np.linspace(0.0, T, n_steps + 1)
    return PathEnsemble(times=times, states=states, config=cfg, m=p.m, n=p.n)


def mc_price(p, srs, x0, payoff, T, cfg):
    """Discounted-payoff Monte Carlo price with its standard error.

    The discount factor integrates c + gamma.X along each path with the
    trapezoidal rule; ``payoff`` receives the (n_paths, d) terminal states
    in the *original* coordinates and must return one value per path.
    Non-canonical parameters are transformed on the fly.
    """
    require_admissible(p)
    xv = as_state_array(x0, p)
    to_user = None
    if not is_block_diagonal(p):
        ct = canonical_transform(p)
        to_user = ct.Lambda_inv.T
        srs = ct.map_short_rate(srs)
        xv = ct.map_state(xv)
        p = ct.transformed
    if T <= 0:
        raise ValueError("T must be positive")
    samples = np.empty(cfg.n_paths)
    gamma, c = srs.gamma, srs.c

    def consume(start, stop, blk):
        rates = c + blk @ gamma
        disc = np.exp(-np.trapezoid(rates, dx=dt, axis=1))
        term = blk[:, -1, :]
        if to_user is not None:
            term = term @ to_user
        vals = np.asarray(payoff(term), dtype=float)
        samples[start:stop] = disc * np.broadcast_to(vals, (stop - start,))

    n_steps = cfg.total_steps(T)
    dt = T / n_steps
    _run_blocks(p, xv, T, cfg, consume)
    value = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
    return PriceResult(value=value, method="mc", err=stderr)


def empirical_char(ensemble, u):
    """Sample mean of e^{u.X(T)} over the ensemble, with a standard error."""
    uv = np.atleast_1d(np.asarray(u, dtype=complex))
    term = ensemble.terminal
    if uv.shape != (term.shape[1],):
        raise DimensionError(f"u must have length {term.shape[1]}")
    expo = term @ uv
    mx = float(np.max(expo.real, initial=0.0))
    if mx > 700.0:
        raise ValueError(
            f"exponent real part up to {mx:.1f} would overflow; rescale u or "
            "use moment_explosion_probe for divergence diagnostics"
        )
    z = np.exp(expo)
    mean = complex(np.mean(z))
    n = z.size
    if n > 1:
        var = float(np.var(z.real, ddof=1) + np.var(z.imag, ddof=1))
        se = math.sqrt(var / n)
    else:
        se = 0.0
    return mean, se


@dataclass
class ProbeReport:
    ode_finite: bool
    t_plus: float
    theta_star: float
    estimates: list
    mc_divergent: bool
    agree: bool
    inconclusive: bool


def moment_explosion_probe(p, x0, u, T, cfg):
    """Cross-check the exponential-moment verdict of the transform equations
    against Monte Carlo tail behaviour (plain, undiscounted setting).

    The transform side reports the blow-up time of the exponent for real u;
    the Monte Carlo side flags divergence when the sample mean of e^{u.X(T)}
    keeps growing by more than 50% under successive path-count doublings
    (estimates at n, 2n, 4n paths reuse a common ensemble prefix).
    """
    require_admissible(p)
    uv = np.atleast_1d(np.asarray(u, dtype=float))
    xv = as_state_array(x0, p)
    sys = RiccatiSystem(params=p, srs=None)
    t_plus = blow_up_time(sys, uv.astype(complex), max(2.0 * T, T + 1.0))
    ode_finite = t_plus > T

    def finite_at(theta):
        try:
            integrate(sys, theta * uv.astype(complex), T)
            return True
        except Exception:
            return False

    lo, hi = 0.0, 4.0
    if finite_at(hi):
        theta_star = math.inf
    else:
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if finite_at(mid):
                lo = mid
            else:
                hi = mid
        theta_star = 0.5 * (lo + hi)
    inconclusive = math.isfinite(theta_star) and abs(theta_star - 1.0) < 0.01

    u_mc = uv
    p_mc, x_mc = p, xv
    if not is_block_diagonal(p):
        ct = canonical_transform(p)
        p_mc = ct.transformed
        x_mc = ct.map_state(xv)
        u_mc = ct.Lambda_inv.T @ uv
    big = replace(cfg, n_paths=4 * cfg.n_paths)
    term = np.empty((big.n_paths, p.d))

    def consume(start, stop, blk):
        term[start:stop] = blk[:, -1, :]

    _run_blocks(p_mc, x_mc, T, big, consume)
    with np.errstate(over="ignore"):
        z = np.exp(term @ u_mc)
    estimates = [float(np.mean(z[: cfg.n_paths * 2**k])) for k in range(3)]
    # a stabilizing estimator keeps its value under path-count doubling; a
    # jump of 50% or more (or an overflow) flags a diverging expectation
    jumps = [
        (not math.isfinite(e2)) or (math.isfinite(e1_) and e2 > 1.5 * e1_)
        for e1_, e2 in zip(estimates[:-1], estimates[1:])
    ]
    mc_divergent = any(jumps)
    agree = ode_finite == (not mc_divergent)
    return ProbeReport(
        ode_finite=ode_finite, t_plus=t_plus, theta_star=theta_star,
        estimates=estimates, mc_divergent=mc_divergent, agree=agree,
        inconclusive=inconclusive,
    )


_SCHEME_TAGS = {name: i for i, name in enumerate(SCHEMES)}
_HEADER = struct.Struct("<8sIIIIQQQB7x")


def save_ensemble(ensemble, path):
    """Binary dump: header (magic, version, d, m, n, n_paths, n_steps, seed,
    scheme tag) followed by the time grid and the states, little-endian
    float64, row-major (see docs/ensemble_format.md)."""
    ens = ensemble
    n_paths, k1, d = ens.states.shape
    header = _HEADER.pack(
        _MAGIC, 1, d, ens.m, ens.n, n_paths, k1 - 1, ens.config.seed,
        _SCHEME_TAGS[ens.config.scheme],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ens.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.states, dtype="<f8").tobytes())


def load_ensemble(path):
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, d, m, n, n_paths, n_steps, seed, tag = _HEADER.unpack(raw)
        if magic != _MAGIC or version != 1:
            raise ValueError("not an affinekit ensemble file")
        times = np.frombuffer(fh.read(8 * (n_steps + 1)), dtype="<f8")
        states = np.frombuffer(fh.read(8 * n_paths * (n_steps + 1) * d), dtype="<f8")
    states = states.reshape(n_paths, n_steps + 1, d)
    cfg = SimConfig(n_paths=n_paths, n_steps=n_steps, seed=seed, scheme=SCHEMES[tag])
    return PathEnsemble(times=times.copy(), states=states.copy(), config=cfg, m=m, n=n)
