"""Plain ``key = value`` run configurations.

One key per line, ``#`` starts a comment.  Parsing collects every violation
(unknown key, bad value, out-of-range value, duplicate, missing key) before
reporting, each tagged with the line it came from.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

COMMANDS = ("hardy", "elliptic", "wave", "schrodinger", "hum", "semilinear", "study")
DOMAINS = {"interval": 1, "tangent_disk": 2, "half_disk": 2}
STUDY_CHECKS = ("hardy", "pohozaev", "trace", "multiplier", "smult", "semilinear")
LOADS = ("one", "xN", "sin")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _floats(s):
    vals = [float(p) for p in s.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _choice(options):
    def conv(s):
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s
    return conv


# key -> (converter, default, description)
KEYS = {
    "command": (_choice(COMMANDS), None, "subcommand"),
    "domain": (_choice(tuple(DOMAINS)), None, "domain kind"),
    "L": (_float, 1.0, "interval length"),
    "radius": (_float, 1.0, "disk radius"),
    "h": (_float, None, "mesh size of the coarsest level"),
    "levels": (_int, 1, "number of nested refinement levels"),
    "h_list": (_floats, None, "mesh sizes for a study (re-meshed, not nested)"),
    "grading": (_float, 0.0, "radial grading toward the origin (0 = off)"),
    "quad_order": (_int, None, "cell quadrature order (default 6 in 1D, 4 in 2D)"),
    "delta": (_float, 0.0, "regularisation of 1/|x|^2 (sensitivity runs only)"),
    "lambda": (_float, None, "coupling constant"),
    "T": (_float, None, "time horizon"),
    "dt": (_float, None, "time step (default h/2)"),
    "dt_ratio": (_float, None, "time step as a multiple of h, used per level"),
    "alpha": (_float, None, "nonlinearity exponent"),
    "rho": (_float, 0.3, "filter fraction of retained modes"),
    "tol": (_float, 1e-6, "CG relative tolerance"),
    "cg_max_iter": (_int, 200, "CG iteration cap"),
    "eps_list": (_floats, None, "decreasing eps values for the lambda continuation"),
    "tu8_eps": (_floats, [2.0, 1.0], "exponents for the weighted inequality constants"),
    "load": (_choice(LOADS), "one", "right-hand side for elliptic solves"),
    "equation": (_choice(("wave", "schrodinger")), "wave", "equation for the hum subcommand"),
    "data": (_choice(("mode1", "random")), "mode1", "target data for hum"),
    "samples": (_int, 16, "random filtered pairs for the Gramian algebra checks"),
    "scan_samples": (_int, 64, "samples per horizon in the observability scan"),
    "linearity_tol": (_float, 1e-12, "CG tolerance of the HUM linearity solves"),
    "export_matrices": (_bool, False, "write K, M, W of the first level as row col value text"),
    "T_list": (_floats, None, "horizons for the observability scan"),
    "allow_short_time": (_bool, False, "permit T <= 2 R_Omega for wave HUM"),
    "check": (_choice(STUDY_CHECKS), None, "check rerun by the study subcommand"),
    "seed": (_int, 0, "seed of the single random generator"),
    "output": (str, "hardylab-out", "output directory"),
}

REQUIRED = {
    "hardy": ("h",),
    "elliptic": ("h", "lambda"),
    "wave": ("h", "lambda", "T"),
    "schrodinger": ("h", "lambda", "T"),
    "hum": ("h", "lambda", "T"),
    "semilinear": ("h", "lambda", "alpha"),
    "study": ("h_list", "check"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    lines: dict = field(default_factory=dict)
    text: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def dim(self) -> int:
        return DOMAINS[self.values["domain"]]

    @property
    def lambda_N(self) -> float:
        return self.dim**2 / 4.0

    def canonical(self) -> str:
        """Sorted key = value text of the effective configuration.

        The output directory is left out: it does not affect any result.
        """
        out = []
        for k in sorted(self.values):
            v = self.values[k]
            if v is None or k == "output":
                continue
            if isinstance(v, list):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{k} = {v}")
        return "\n".join(out) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _split(text: str):
    """Yield (line number, key, raw value, error) for every non-blank line."""
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            yield no, None, None, f"line {no}: expected 'key = value', got {raw.strip()!r}"
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            yield no, None, None, f"line {no}: missing key"
        elif not v:
            yield no, k, None, f"line {no}: missing value for '{k}'"
        else:
            yield no, k, v, None


def parse_config(text: str, command: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate; raises ConfigError listing every violation."""
    errors = []
    raw, where = {}, {}
    for no, k, v, err in _split(text):
        if err:
            errors.append(err)
            continue
        if k not in KEYS:
            errors.append(f"line {no}: unknown key '{k}'")
            continue
        if k in raw:
            errors.append(f"duplicate key '{k}' on lines {where[k]} and {no}")
            continue
        raw[k], where[k] = v, no
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in KEYS:
            errors.append(f"command line: unknown option '{k}'")
            continue
        raw[k], where[k] = str(v), "command line"
    if command is not None:
        if "command" in raw and raw["command"] != command:
            errors.append(f"line {where['command']}: command '{raw['command']}' conflicts with subcommand '{command}'")
        raw["command"] = command
        where.setdefault("command", "command line")
    vals = {}
    for k, v in raw.items():
        try:
            vals[k] = KEYS[k][0](v)
        except ValueError as exc:
            errors.append(f"{_loc(where[k])}: invalid value for '{k}': {v!r} ({exc})")
    cmd = vals.get("command")
    if cmd is None and "command" not in raw:
        errors.append("missing required key 'command'")
    if "domain" not in raw:
        errors.append("missing required key 'domain'")
    for k in REQUIRED.get(cmd, ()):
        if k not in raw:
            errors.append(f"missing required key '{k}' for '{cmd}'")
    for k, (conv, default, _) in KEYS.items():
        vals.setdefault(k, default)
    if vals.get("domain") in DOMAINS and vals["quad_order"] is None:
        vals["quad_order"] = 6 if DOMAINS[vals["domain"]] == 1 else 4
    errors += _range_errors(vals, where)
    if errors:
        raise ConfigError(errors)
    return RunConfig(cmd, vals, where, text)


def _loc(w) -> str:
    return w if isinstance(w, str) else f"line {w}"


def _range_errors(v: dict, where: dict) -> list:
    errs = []

    def bad(key, msg):
        errs.append(f"{_loc(where.get(key, '?'))}: {msg}")

    dom = v.get("domain")
    N = DOMAINS.get(dom)
    R = None
    if dom == "interval":
        if v["L"] is not None and v["L"] <= 0:
            bad("L", "L must be positive")
        R = v["L"]
    elif dom is not None:
        if v["radius"] is not None and v["radius"] <= 0:
            bad("radius", "radius must be positive")
        R = 2 * v["radius"] if dom == "tangent_disk" else v["radius"]
    for key in ("h",):
        if isinstance(v.get(key), float) and R and not (0 < v[key] < R / 4):
            bad(key, f"{key}={v[key]:g} must satisfy 0 < h < R_Omega/4 = {R / 4:g}")
    if isinstance(v.get("h_list"), list) and R:
        for x in v["h_list"]:
            if not 0 < x < R / 4:
                bad("h_list", f"h={x:g} must satisfy 0 < h < R_Omega/4 = {R / 4:g}")
    lam = v.get("lambda")
    if isinstance(lam, float) and N is not None and lam > N * N / 4.0:
        bad("lambda", f"lambda exceeds lambda(N)={N * N / 4.0:g}")
    positive = ("T", "dt", "dt_ratio", "tol", "linearity_tol")
    for key in positive:
        if isinstance(v.get(key), float) and not v[key] > 0:
            bad(key, f"{key} must be positive")
    if isinstance(v.get("alpha"), float) and not v["alpha"] > 1:
        bad("alpha", "alpha must exceed 1")
    if isinstance(v.get("rho"), float) and not 0 < v["rho"] <= 1:
        bad("rho", "rho must lie in (0, 1]")
    for key, lo in (("levels", 1), ("samples", 1), ("scan_samples", 1), ("cg_max_iter", 1), ("quad_order", 2)):
        if isinstance(v.get(key), int) and v[key] < lo:
            bad(key, f"{key} must be >= {lo}")
    if isinstance(v.get("levels"), int) and v["levels"] > 6:
        bad("levels", "levels must be <= 6")
    for key in ("grading", "delta"):
        if isinstance(v.get(key), float) and v[key] < 0:
            bad(key, f"{key} must be non-negative")
    eps = v.get("eps_list")
    if isinstance(eps, list):
        if any(e < 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            bad("eps_list", "eps_list must be non-negative and strictly decreasing")
    if isinstance(v.get("tu8_eps"), list) and any(e <= 0 for e in v["tu8_eps"]):
        bad("tu8_eps", "tu8_eps values must be positive")
    if isinstance(v.get("T_list"), list) and any(t <= 0 for t in v["T_list"]):
        bad("T_list", "T_list values must be positive")
    if v.get("command") == "hum" and v.get("equation") == "wave" and isinstance(v.get("T"), float) and R:
        if not v["T"] > 2 * R and not v.get("allow_short_time"):
            bad("T", f"T={v['T']:g} must exceed 2 R_Omega = {2 * R:g} for wave HUM (or set allow_short_time)")
    if v.get("command") == "semilinear" and N is not None and N > 2:
        bad("domain", "semilinear runs need N <= 2")
    return errs
