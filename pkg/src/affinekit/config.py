"""TOML model configuration.

Schema (full reference in docs/config_format.md): a ``[model]`` table with a
``kind`` tag selecting the field set, and for generic models an optional
``[short_rate]`` table::

    [model]                     [model]
    kind = "cir"                kind = "generic"
    b = 0.08                    m = 1
    beta = -0.9                 n = 1
    sigma_sq = 0.033            a = [[0.0, 0.0], [0.0, 0.0]]
    r0 = 0.08                   alphas = [[[0.02, 0.01], [0.01, 2.0]]]
                                b = [0.02, 0.01]
                                B = [[-2.0, 0.0], [-1.0, 0.0]]
                                x0 = [0.02, 0.0]

                                [short_rate]
                                c = 0.01
                                gamma = [0.0, 0.0]

Named kinds imply their short-rate spec (unit loading for vasicek/cir,
constant rate for heston) and reject an explicit ``[short_rate]`` table.
CIR accepts exactly one of ``sigma`` / ``sigma_sq``.  Values written by
:func:`dump_config` use ``repr`` floats, so load -> dump -> load is
bit-identical (and in particular any decimal input with at most 15
significant digits round-trips exactly).
"""

import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .core import AffineParams, ShortRateSpec, StateVector
from .models import CIRParams, HestonParams, VasicekParams, as_affine

__all__ = [
    "ModelConfig",
    "load_config",
    "loads_config",
    "dump_config",
    "dumps_config",
    "apply_overrides",
    "parse_override",
]

KINDS = ("vasicek", "cir", "heston", "generic")


@dataclass(frozen=True)
class ModelConfig:
    """Parsed configuration: the model kind, its native parameter object
    (None for generic), and the assembled affine coefficients."""

    kind: str
    model: object
    params: AffineParams
    srs: ShortRateSpec
    x0: StateVector
    raw: dict


def _need(table, key, where):
    if key not in table:
        raise ValueError(f"missing key '{key}' in [{where}]")
    return table[key]


def _float(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"key '{key}' must be a number")
    return float(v)


def loads_config(text):
    raw = _toml.loads(text)
    if "model" not in raw:
        raise ValueError("config must contain a [model] table")
    model = raw["model"]
    kind = _need(model, "kind", "model")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")

    if kind in ("vasicek", "cir", "heston") and "short_rate" in raw:
        raise ValueError(f"[short_rate] is implied by kind = '{kind}' and must be omitted")

    if kind == "vasicek":
        mp = VasicekParams(
            b=_float(_need(model, "b", "model"), "b"),
            beta=_float(_need(model, "beta", "model"), "beta"),
            sigma=_float(_need(model, "sigma", "model"), "sigma"),
        )
        p, srs, x0 = as_affine(mp, r0=_float(_need(model, "r0", "model"), "r0"))
    elif kind == "cir":
        if ("sigma" in model) == ("sigma_sq" in model):
            raise ValueError("cir needs exactly one of 'sigma' or 'sigma_sq'")
        sigma = (
            _float(model["sigma"], "sigma")
            if "sigma" in model
            else float(np.sqrt(_float(model["sigma_sq"], "sigma_sq")))
        )
        mp = CIRParams(
            b=_float(_need(model, "b", "model"), "b"),
            beta=_float(_need(model, "beta", "model"), "beta"),
            sigma=sigma,
        )
        p, srs, x0 = as_affine(mp, r0=_float(_need(model, "r0", "model"), "r0"))
    elif kind == "heston":
        mp = HestonParams(
            k=_float(_need(model, "k", "model"), "k"),
            kappa=_float(_need(model, "kappa", "model"), "kappa"),
            sigma=_float(_need(model, "sigma", "model"), "sigma"),
            rho=_float(_need(model, "rho", "model"), "rho"),
            r=_float(_need(model, "r", "model"), "r"),
            x1_0=_float(_need(model, "x1_0", "model"), "x1_0"),
            x2_0=_float(_need(model, "x2_0", "model"), "x2_0"),
        )
        p, srs, x0 = as_affine(mp)
    else:
        m = int(_need(model, "m", "model"))
        n = int(_need(model, "n", "model"))
        p = AffineParams(
            m=m, n=n,
            a=np.array(_need(model, "a", "model"), dtype=float),
            alphas=np.array(_need(model, "alphas", "model"), dtype=float).reshape(m, m + n, m + n),
            b=np.array(_need(model, "b", "model"), dtype=float),
            Bmat=np.array(_need(model, "B", "model"), dtype=float),
        )
        sr = raw.get("short_rate", {})
        srs = ShortRateSpec(
            c=_float(sr.get("c", 0.0), "c"),
            gamma=np.array(sr.get("gamma", [0.0] * p.d), dtype=float),
        )
        x0 = StateVector(x=np.array(model.get("x0", [0.0] * p.d), dtype=float), m=m)
        mp = None
    return ModelConfig(kind=kind, model=mp, params=p, srs=srs, x0=x0, raw=raw)


def load_config(path):
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return loads_config(text)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        r = repr(v)
        return r if ("." in r or "e" in r or "n" in r) else r + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in np.asarray(v).tolist()) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def dumps_config(cfg):
    """Emit the configuration back as TOML (canonical float formatting)."""
    raw = cfg.raw if isinstance(cfg, ModelConfig) else cfg
    lines = []
    for section, table in raw.items():
        lines.append(f"[{section}]")
        for k, v in table.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def dump_config(cfg, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_config(cfg))


def parse_override(text):
    """'section.key=value' -> (section, key, parsed value)."""
    if "=" not in text:
        raise ValueError(f"override must look like section.key=value, got {text!r}")
    lhs, rhs = text.split("=", 1)
    if "." not in lhs:
        raise ValueError(f"override key must be dotted (e.g. model.sigma), got {lhs!r}")
    section, key = lhs.split(".", 1)
    rhs = rhs.strip()
    if rhs in ("true", "false"):
        val = rhs == "true"
    else:
        try:
            val = int(rhs)
        except ValueError:
            try:
                val = float(rhs)
            except ValueError:
                val = rhs.strip('"')
    return section.strip(), key.strip(), val


def apply_overrides(raw, overrides):
    """Apply dotted-key overrides onto a parsed raw dict, returning a new
    ModelConfig.  Overrides are applied after the file parse and win."""
    out = {k: dict(v) for k, v in raw.items()}
    for ov in overrides:
        section, key, val = parse_override(ov)
        out.setdefault(section, {})[key] = val
    return loads_config(dumps_config(out))
