"""Plain ``key = value`` run configuration.

One setting per line, ``#`` starts a comment.  Field descriptions (``u0``,
``f``, ``u0_b``, ``f_b``) are a shape keyword followed by its numbers, for
example ``disk 0.5 0.5 0.25 1.0``, or ``file PATH``:

======== ==================================
zero     (no numbers)
constant value
disk     cx cy radius height
square   cx cy side height
step     x0 height
spike    cx cy alpha scale
random   seed amplitude
file     path to CSV, PGM or binary snapshot
======== ==================================
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ConfigError, MissingKey, RangeViolation, UnknownKey

#: Environment variable overriding the ``output_dir`` setting.
OUTPUT_DIR_ENV = "TVFLOW_OUTPUT_DIR"

EXPERIMENTS = ("contraction", "comparison", "l1_bound", "boundedness", "decay",
               "regularity", "gn", "uniqueness")

_SHAPE_ARITY = {"zero": 0, "constant": 1, "disk": 4, "square": 4, "step": 2,
                "spike": 4, "random": 2}


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    args: tuple = ()

    def text(self) -> str:
        if self.kind == "file":
            return f"file {self.args[0]}"
        return " ".join([self.kind, *(_fmt_float(a) for a in self.args)])


# -- value types -------------------------------------------------------------


def _fmt_float(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _float(key, s):
    try:
        return float(s)
    except ValueError:
        raise RangeViolation(key, f"expected a number, got {s!r}") from None


def _int(key, s):
    try:
        v = float(s)
    except ValueError:
        raise RangeViolation(key, f"expected an integer, got {s!r}") from None
    if not v.is_integer():
        raise RangeViolation(key, f"expected an integer, got {s!r}")
    return int(v)


def _float_list(key, s):
    return tuple(_float(key, p) for p in s.replace(",", " ").split())


def _field(key, s):
    parts = s.split(None, 1)
    if not parts:
        raise RangeViolation(key, "empty field description")
    kind = parts[0].lower()
    if kind == "file":
        if len(parts) < 2:
            raise RangeViolation(key, "file needs a path")
        return FieldSpec("file", (parts[1].strip(),))
    if kind not in _SHAPE_ARITY:
        raise RangeViolation(key, f"unknown shape {kind!r}")
    nums = parts[1].split() if len(parts) > 1 else []
    if len(nums) != _SHAPE_ARITY[kind]:
        raise RangeViolation(key, f"{kind} takes {_SHAPE_ARITY[kind]} numbers, got {len(nums)}")
    return FieldSpec(kind, tuple(_float(key, n) for n in nums))


def _ladder(key, s):
    s = s.strip().lower()
    if s in ("none", "auto"):
        return s
    return _int(key, s)


def _snapshots(key, s):
    s = s.strip().lower()
    return "all" if s == "all" else _float_list(key, s)


def _experiments(key, s):
    names = tuple(p for p in s.replace(",", " ").split())
    for n in names:
        if n not in EXPERIMENTS:
            raise RangeViolation(key, f"unknown experiment {n!r}")
    return names


def _string(key, s):
    return s.strip()


def _lower(key, s):
    return s.strip().lower()


# key -> (parser, default, formatter); required keys have default None
_KEYS = {
    "nx": (_int, None, str),
    "ny": (_int, "nx", str),
    "h": (_float, "1/nx", _fmt_float),
    "T": (_float, None, _fmt_float),
    "tau": (_float, None, _fmt_float),
    "u0": (_field, None, FieldSpec.text),
    "f": (_field, FieldSpec("zero"), FieldSpec.text),
    "u0_b": (_field, "u0", FieldSpec.text),
    "f_b": (_field, "f", FieldSpec.text),
    "ladder": (_ladder, "none", str),
    "gap_tol": (_float, 1e-6, _fmt_float),
    "max_iters": (_int, 20000, str),
    "norm": (_lower, "isotropic", str),
    "snapshots": (_snapshots, "all",
                  lambda v: v if v == "all" else ", ".join(_fmt_float(x) for x in v)),
    "experiments": (_experiments, (), ", ".join),
    "ks": (_float_list, (0.25, 1.0, 4.0), lambda v: ", ".join(_fmt_float(x) for x in v)),
    "r0": (_float, 1.5, _fmt_float),
    "r": (_float, 1.2, _fmt_float),
    "levels": (_float_list, (4.0, 8.0), lambda v: ", ".join(_fmt_float(x) for x in v)),
    "gn_k": (_float, 0.5, _fmt_float),
    "p_schedule": (_float_list, (1.5, 1.2, 1.1, 1.05),
                   lambda v: ", ".join(_fmt_float(x) for x in v)),
    "output_dir": (_string, "tvflow_out", str),
    "seed": (_int, 0, str),
    "threads": (_int, 1, str),
}
REQUIRED = tuple(k for k, (_, d, _) in _KEYS.items() if d is None)


@dataclass(frozen=True)
class RunConfig:
    """Validated settings; ``explicit`` lists the keys given in the source text."""

    values: dict
    explicit: tuple = field(default=())

    def __getitem__(self, key):
        return self.values[key]

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def output_dir(self, override: str | None = None) -> str:
        """``override`` if given, else the environment variable, else the setting."""
        return override or os.environ.get(OUTPUT_DIR_ENV) or self.values["output_dir"]


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            raise UnknownKey(key, "unknown key")
        yield key, value


def _raw(text: str) -> dict:
    raw = {}
    for key, value in _lines(text):
        if key in raw:
            raise ConfigError(key, "given more than once")
        raw[key] = value
    return raw


def _validate(v: dict):
    def need(key, ok, msg):
        if not ok:
            raise RangeViolation(key, msg)

    need("nx", v["nx"] >= 2, "nx >= 2")
    need("ny", v["ny"] >= 2, "ny >= 2")
    need("h", v["h"] > 0, "h > 0")
    need("T", v["T"] > 0, "T > 0")
    need("tau", v["tau"] > 0, "tau > 0")
    need("tau", v["tau"] < v["T"], "tau < T")
    lvl = v["ladder"]
    need("ladder", lvl in ("none", "auto") or lvl >= 1, "ladder >= 1, 'none' or 'auto'")
    need("gap_tol", v["gap_tol"] > 0, "gap_tol > 0")
    need("max_iters", v["max_iters"] >= 1, "max_iters >= 1")
    need("norm", v["norm"] in ("isotropic", "anisotropic"), "norm is isotropic or anisotropic")
    if v["snapshots"] != "all":
        need("snapshots", all(0 <= t <= v["T"] for t in v["snapshots"]), "snapshots in [0, T]")
    need("ks", len(v["ks"]) > 0 and all(k >= 0 for k in v["ks"]), "ks >= 0")
    need("r", 1 < v["r"] < 2, "1 < r < 2")
    need("r0", v["r"] < v["r0"] < 2, "r < r0 < 2")
    levels = v["levels"]
    need("levels", len(levels) == 2 and all(float(x).is_integer() for x in levels)
         and 1 <= levels[0] <= levels[1], "two integers 1 <= n <= m")
    need("gn_k", v["gn_k"] >= 0, "gn_k >= 0")
    ps = v["p_schedule"]
    need("p_schedule", len(ps) > 0 and all(1 < p <= 2 for p in ps)
         and all(a > b for a, b in zip(ps, ps[1:])), "strictly decreasing in (1, 2]")
    need("seed", v["seed"] >= 0, "seed >= 0")
    need("threads", v["threads"] >= 1, "threads >= 1")
    for key in ("u0", "f", "u0_b", "f_b"):
        spec = v[key]
        if spec.kind == "disk" or spec.kind == "square":
            need(key, spec.args[2] > 0, "radius/side > 0")
        if spec.kind == "random":
            need(key, spec.args[0] >= 0 and float(spec.args[0]).is_integer(),
                 "seed is a nonnegative integer")


def parse_config(text: str) -> RunConfig:
    """Parse and validate; errors name the offending key and constraint."""
    raw = _raw(text)
    for key in REQUIRED:
        if key not in raw:
            raise MissingKey(key, "required key missing")
    v = {k: _KEYS[k][0](k, s) for k, s in raw.items()}
    for key, (_, default, _) in _KEYS.items():
        if key in v:
            continue
        if default == "1/nx":
            v[key] = 1.0 / v["nx"]
        elif isinstance(default, str) and default in _KEYS:
            v[key] = v[default]
        else:
            v[key] = default
    _validate(v)
    return RunConfig(v, tuple(k for k in _KEYS if k in raw))


def _emit(pairs) -> str:
    return "".join(f"{k} = {s}\n" for k, s in pairs)


def serialize(cfg: RunConfig) -> str:
    """Explicitly given keys, canonical order and number format."""
    return _emit((k, _KEYS[k][2](cfg.values[k])) for k in cfg.explicit)


def normalize(text: str) -> str:
    """Canonical text form (comments and spacing dropped, keys ordered); no range checks."""
    raw = _raw(text)
    return _emit((k, _KEYS[k][2](_KEYS[k][0](k, raw[k]))) for k in _KEYS if k in raw)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
