"""Run configuration: a flat JSON document with named blocks.

Example::

    {
      "experiment": "simulate",
      "seed": 1,
      "model": {"nu": 1.0, "alpha": 0.0, "beta": 0.0, "gamma": 1.0, "delta": 1, "epsilon": 0.0},
      "grid": {"n_interior": 127},
      "time": {"T": 0.1, "dt": 1e-4, "save_stride": 100},
      "noise": {"regime": "colored", "eta": 0.5},
      "g": {"family": "constant", "K": 1.0},
      "initial": {"kind": "mode", "mode": 1, "amplitude": 1.0}
    }

Validation never raises for a bad value; it collects every problem with the
line of the offending key so the whole file can be fixed in one pass.
"""

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .dynamics import FAMILIES, GCoefficient, ModelParams
from .errors import ConfigError
from .grid import Grid, eigenfunctions
from .noise import COLORED, WHITE, NoiseSpec
from .solver import default_monitor_p

EXPERIMENTS = ("simulate", "skeleton", "rate", "mc", "uniform", "kernel-check", "decompose")
MODEL_KEYS = ("nu", "alpha", "beta", "gamma", "delta", "epsilon")


@dataclass
class Issue:
    message: str
    key: str
    line: int | None
    severity: str = "error"

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        return f"{where}: {self.key}: {self.message}"

    def to_dict(self):
        return {"message": self.message, "key": self.key, "line": self.line,
                "severity": self.severity}


def locate(text, path):
    """1-based line of the key ``path`` (tuple of nested names), or None."""
    pos = 0
    for name in path:
        m = re.compile(r'"%s"\s*:' % re.escape(name)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def parse_text(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", 1)
    return data


def field_from_spec(spec, grid):
    """Nodal values from ``{"kind": "zero" | "mode" | "modes" | "values", ...}``."""
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return np.zeros(grid.n)
    if kind == "mode":
        return float(spec.get("amplitude", 1.0)) * eigenfunctions(grid, int(spec["mode"]))[-1]
    if kind == "modes":
        c = np.asarray(spec["coefficients"], dtype=float)
        return c @ eigenfunctions(grid, c.size)
    if kind == "values":
        v = np.asarray(spec["values"], dtype=float)
        if v.shape != (grid.n,):
            raise ConfigError(f"values must have {grid.n} entries")
        return v
    raise ConfigError(f"unknown field kind {kind!r}")


@dataclass
class RunConfig:
    experiment: str
    params: ModelParams
    grid: Grid
    T: float
    dt: float
    save_stride: int
    spec: NoiseSpec | None
    g: GCoefficient
    u0: np.ndarray
    monitor_p: int
    R_trunc: float | None
    seed: int
    output_dir: str | None
    blocks: dict = field(default_factory=dict)
    text: str = ""
    warnings: list = field(default_factory=list)

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()


class _Checker:
    def __init__(self, text, data):
        self.text, self.data, self.issues = text, data, []

    def add(self, path, message, severity="error"):
        line = locate(self.text, path)
        self.issues.append(Issue(message, ".".join(path), line, severity))

    def block(self, name, required=True):
        b = self.data.get(name)
        if b is None:
            if required:
                self.add((name,), "block is required")
            return {}
        if not isinstance(b, dict):
            self.add((name,), "must be an object")
            return {}
        return b

    def number(self, block, bname, key, default=None, integer=False):
        val = block.get(key, default)
        if val is None:
            return None
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        if integer:
            ok = ok and float(val) == int(val)
        if not ok or not np.isfinite(val):
            self.add((bname, key), "must be an integer" if integer else "must be a finite number")
            return None
        return int(val) if integer else float(val)


def _check(text, data):
    c = _Checker(text, data)
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        c.add(("experiment",), f"must be one of {', '.join(EXPERIMENTS)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        c.add(("seed",), "must be an integer in [0, 2^64)")
    if exp == "kernel-check":
        kc = c.block("kernel-check", required=False)
        nu = c.number(kc, "kernel-check", "nu", 1.0)
        if nu is not None and nu <= 0:
            c.add(("kernel-check", "nu"), "nu must be > 0")
        return c

    model = c.block("model")
    vals = {k: c.number(model, "model", k) for k in MODEL_KEYS if k in model}
    for k in model:
        if k not in MODEL_KEYS:
            c.add(("model", k), "unknown key")
    if vals.get("nu") is not None and vals["nu"] <= 0:
        c.add(("model", "nu"), "nu must be > 0")
    for k in ("alpha", "beta"):
        if vals.get(k) is not None and vals[k] < 0:
            c.add(("model", k), f"{k} must be >= 0")
    if vals.get("gamma") is not None and vals["gamma"] < 1:
        c.add(("model", "gamma"), "gamma must be >= 1")
    delta = vals.get("delta", 1) or 1
    if "delta" in vals and (vals["delta"] is None or vals["delta"] != int(vals["delta"]) or vals["delta"] < 1):
        c.add(("model", "delta"), "delta must be an integer >= 1")
        delta = 1
    delta = int(delta)
    if vals.get("epsilon") is not None and not 0 <= vals["epsilon"] <= 1:
        c.add(("model", "epsilon"), "epsilon must lie in [0, 1]")

    gridb = c.block("grid")
    n = c.number(gridb, "grid", "n_interior", integer=True)
    if n is None and "n_interior" not in gridb:
        c.add(("grid",), "n_interior is required")
    elif n is not None and n < 3:
        c.add(("grid", "n_interior"), "need at least 3 interior nodes")
        n = None

    timeb = c.block("time")
    T = c.number(timeb, "time", "T")
    dt = c.number(timeb, "time", "dt")
    stride = c.number(timeb, "time", "save_stride", 1, integer=True)
    if T is None or T <= 0:
        c.add(("time", "T"), "T must be > 0")
        T = None
    if dt is None or dt <= 0:
        c.add(("time", "dt"), "dt must be > 0")
        dt = None
    if T and dt and abs(T / dt - round(T / dt)) > 1e-9 * max(1.0, T / dt):
        c.add(("time", "dt"), "T must be an integer multiple of dt")
    if stride is not None and stride < 1:
        c.add(("time", "save_stride"), "save_stride must be >= 1")

    noise = c.block("noise", required=False)
    regime = noise.get("regime", COLORED)
    if regime not in (COLORED, WHITE):
        c.add(("noise", "regime"), f"must be {COLORED!r} or {WHITE!r}")
    if regime == COLORED and noise.get("q") is None:
        eta = c.number(noise, "noise", "eta", 0.5)
        if eta is not None and not eta > 0.25:
            c.add(("noise", "eta"),
                  f"eta={eta} violates the trace condition sum q_j^2 < inf (needs eta > 1/4)")
    if noise.get("J") is not None:
        J = c.number(noise, "noise", "J", integer=True)
        if J is not None and J < 1:
            c.add(("noise", "J"), "J must be >= 1")

    gb = c.block("g", required=False)
    fam = gb.get("family", "constant")
    if fam not in FAMILIES:
        c.add(("g", "family"), f"must be one of {', '.join(sorted(FAMILIES))}")
    for k in ("K", "L"):
        v = c.number(gb, "g", k, 1.0)
        if v is not None and v <= 0:
            c.add(("g", k), f"{k} must be > 0")

    mon = c.block("monitor", required=False)
    p = c.number(mon, "monitor", "p")
    if p is not None:
        if fam == "linear" and not p > max(6, 2 * delta + 1):
            c.add(("monitor", "p"),
                  f"p > max{{6,2*delta+1}} = {max(6, 2 * delta + 1)} required in the linear-growth regime")
        elif fam != "linear" and not p >= 2 * delta + 1:
            c.add(("monitor", "p"), f"p >= 2*delta+1 = {2 * delta + 1} required in the bounded-g regime")
    if fam == "linear" and regime == WHITE and (vals.get("epsilon") or 0) > 0:
        c.add(("g", "family"),
              "space-time white noise needs a bounded g (constant or bounded_sigmoid)")
    R = c.number(mon, "monitor", "R_trunc")
    if R is not None and R <= 0:
        c.add(("monitor", "R_trunc"), "R_trunc must be > 0")

    # CFL at the configured (or initial) field bound
    alpha = vals.get("alpha") or 0.0
    if alpha > 0 and n and dt:
        bound = c.number(mon, "monitor", "field_bound")
        if bound is None:
            try:
                bound = float(np.max(np.abs(field_from_spec(data.get("initial", {}), Grid(n)))))
            except (ConfigError, KeyError, TypeError, ValueError):
                bound = 0.0
        courant = alpha * bound**delta * dt * (n + 1)
        if courant > 1:
            c.add(("monitor", "field_bound") if "field_bound" in mon else ("time", "dt"),
                  f"convective Courant number alpha*|u|^delta*dt/h = {courant:.3g} > 1 at field bound "
                  f"{bound:g}; the stepper will stop with a CFL error", severity="warning")

    if n:
        for key in ("initial",):
            if key in data:
                try:
                    field_from_spec(data[key], Grid(n))
                except (ConfigError, KeyError, TypeError, ValueError, IndexError) as exc:
                    c.add((key,), str(exc))
    _check_experiment(c, exp, data)
    return c


def _check_experiment(c, exp, data):
    if exp == "rate":
        b = c.block("rate")
        if "target" not in b:
            c.add(("rate",), "target field is required")
        pens = b.get("penalties", [1e2, 1e3, 1e4])
        if (not isinstance(pens, list) or not pens or any(not isinstance(m, (int, float)) or m <= 0 for m in pens)
                or any(y <= x for x, y in zip(pens, pens[1:]))):
            c.add(("rate", "penalties"), "must be a positive increasing list")
    elif exp == "mc":
        b = c.block("mc")
        ev = b.get("event", {})
        if ev.get("kind") not in ("terminal_ball", "tube"):
            c.add(("mc", "event"), "event kind must be 'terminal_ball' or 'tube'")
        r = ev.get("radius", ev.get("eta"))
        if not isinstance(r, (int, float)) or not r > 0:
            c.add(("mc", "event"), "event radius must be > 0")
        _check_ladder(c, "mc", b)
        ns = b.get("n_samples")
        if not isinstance(ns, int) or ns < 100:
            c.add(("mc", "n_samples"), "n_samples must be an integer >= 100")
    elif exp == "uniform":
        b = c.block("uniform")
        _check_ladder(c, "uniform", b)
        if not isinstance(b.get("eta"), (int, float)) or not b["eta"] > 0:
            c.add(("uniform", "eta"), "eta must be > 0")
        ns = b.get("n_samples")
        if not isinstance(ns, int) or ns < 100:
            c.add(("uniform", "n_samples"), "n_samples must be an integer >= 100")
    elif exp == "decompose":
        b = c.block("decompose", required=False)
        if b.get("kernel", "discrete") not in ("discrete", "spectral"):
            c.add(("decompose", "kernel"), "kernel must be 'discrete' or 'spectral'")
        if data.get("g", {}).get("family", "constant") == "linear":
            c.add(("g", "family"), "decomposition needs a bounded g")


def _check_ladder(c, name, b):
    lad = b.get("eps_ladder")
    if (not isinstance(lad, list) or not lad or any(not isinstance(e, (int, float)) or not 0 < e <= 1 for e in lad)
            or any(y >= x for x, y in zip(lad, lad[1:]))):
        c.add((name, "eps_ladder"), "must be a strictly decreasing list in (0, 1]")


def validate_text(text):
    """All issues (errors and warnings) of a config document."""
    try:
        data = parse_text(text)
    except ConfigError as exc:
        return [Issue(str(exc).split(": ", 1)[-1], "", exc.line)]
    return _check(text, data).issues


def load(path):
    with open(path) as fh:
        return build(fh.read())


def build(text):
    """Parse and validate; raise ConfigError on the first error-level issue."""
    data = parse_text(text)
    issues = _check(text, data).issues
    errors = [i for i in issues if i.severity == "error"]
    if errors:
        exc = ConfigError("; ".join(str(i) for i in errors))
        exc.line = errors[0].line
        raise exc
    exp = data["experiment"]
    seed = int(data.get("seed", 0))
    if exp == "kernel-check":
        return RunConfig(exp, ModelParams(), Grid(3), 1.0, 1.0, 1, None, GCoefficient(),
                         np.zeros(3), 6, None, seed, data.get("output_dir"),
                         {"kernel-check": data.get("kernel-check", {})}, text, issues)
    model = ModelParams(**{k: data["model"][k] for k in MODEL_KEYS if k in data["model"]})
    grid = Grid(int(data["grid"]["n_interior"]))
    tb = data["time"]
    nb = data.get("noise", {})
    q = nb.get("q")
    spec = NoiseSpec(nb.get("regime", COLORED), float(nb.get("eta", 0.5)), nb.get("J"), seed,
                     int(nb.get("stream_id", 0)), None if q is None else tuple(q))
    gb = data.get("g", {})
    g = GCoefficient(gb.get("family", "constant"), float(gb.get("K", 1.0)), float(gb.get("L", 1.0)))
    mon = data.get("monitor", {})
    p = int(mon["p"]) if "p" in mon else default_monitor_p(model.delta)
    u0 = field_from_spec(data.get("initial", {"kind": "zero"}), grid)
    blocks = {k: v for k, v in data.items() if k in EXPERIMENTS}
    return RunConfig(exp, model, grid, float(tb["T"]), float(tb["dt"]), int(tb.get("save_stride", 1)),
                     spec, g, u0, p, mon.get("R_trunc"), seed, data.get("output_dir"), blocks, text,
                     issues)
