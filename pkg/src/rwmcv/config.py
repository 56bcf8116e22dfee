"""Experiment configuration: a single JSON document.

Schema (all keys optional except ``target``, ``d_grid`` and ``knob``)::

    {
      "target":   {"family": "product_mixture",
                   "params": {"preset": "bimodal"}},
      "f":        "first_coordinate",
      "d_grid":   [5, 10, 20],
      "knob":     {"name": "n_MC", "values": [10, 50, 150]},
      "T": 20000, "n_R": 100, "n_MC_default": 50,
      "l":        "auto",
      "cv":       "grid",
      "rho_f":    "estimate",
      "covariance": "true",
      "grid_nodes": 100,
      "seed": 0, "output_dir": "results",
      "full_scale": false, "record_timing": false
    }

``target.family`` is ``product_mixture`` (params: ``preset`` in
``bimodal``/``standard_normal``, or ``weights``/``means``/``std_devs``)
or ``mv_gaussian_mixture`` (params: ``spike``, default 25, and ``h``,
default 0, the distance between the two modes along the first axis).
``knob.name`` is ``n_MC`` or ``h`` (``h`` only for the multivariate
family). ``l`` is ``"auto"`` (``optimal_l(J)`` per dimension), a
number, or a mapping ``{"<d>": value}``. ``cv`` is ``closed_form``,
``grid``, ``gaussian_analytic`` or ``none``. ``rho_f`` selects the
constant in the Poisson equation: ``exact`` (quadrature) or
``estimate`` (the run's plain average); the default is ``exact`` for
``closed_form`` and ``estimate`` for ``grid``. ``covariance`` applies
to ``gaussian_analytic``: ``true`` (mixture covariance) or
``estimated`` (sample covariance of the whole trajectory).
``full_scale`` replaces T and n_R by 200000 and 500.
"""
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields

from .exceptions import ConfigError

FAMILIES = ("product_mixture", "mv_gaussian_mixture")
PRESETS = ("bimodal", "standard_normal")
KNOBS = ("n_MC", "h")
CVS = ("closed_form", "grid", "gaussian_analytic", "none")
OBSERVABLES = ("first_coordinate",)
FULL_SCALE = {"T": 200_000, "n_R": 500}


@dataclass
class ExperimentConfig:
    target: dict
    d_grid: list
    knob: dict
    f: str = "first_coordinate"
    T: int = 20_000
    n_R: int = 100
    n_MC_default: int = 50
    l: object = "auto"
    cv: str = "grid"
    rho_f: str = None
    covariance: str = "true"
    grid_nodes: int = 100
    seed: int = 0
    output_dir: str = "results"
    full_scale: bool = False
    record_timing: bool = False
    _lines: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self):
        out = asdict(self)
        out.pop("_lines")
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data, lines=None):
        lines = lines or {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls) if f.name != "_lines"}
        for key in data:
            if key not in known:
                raise ConfigError(_at(lines, key, f"unknown key {key!r}"))
        for key in ("target", "d_grid", "knob"):
            if key not in data:
                raise ConfigError(f"line 1: missing required key {key!r}")
        cfg = cls(**{k: v for k, v in data.items()}, _lines=dict(lines))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(data, _key_lines(text))

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_json(text)

    def _err(self, key, msg):
        return ConfigError(_at(self._lines, key, msg))

    def validate(self):
        t = self.target
        if not isinstance(t, dict) or t.get("family") not in FAMILIES:
            raise self._err("target", f"target.family must be one of {FAMILIES}")
        params = t.get("params", {})
        if not isinstance(params, dict):
            raise self._err("target", "target.params must be an object")
        if t["family"] == "product_mixture":
            if "preset" in params:
                if params["preset"] not in PRESETS:
                    raise self._err("preset", f"preset must be one of {PRESETS}")
            elif not {"weights", "means", "std_devs"} <= set(params):
                raise self._err("target", "product_mixture needs a preset or weights/means/std_devs")
        if not isinstance(self.d_grid, list) or not self.d_grid:
            raise self._err("d_grid", "d_grid must be a non-empty list")
        if any(not _is_int(d) or d < 1 for d in self.d_grid):
            raise self._err("d_grid", "d_grid entries must be positive integers")
        k = self.knob
        if not isinstance(k, dict) or k.get("name") not in KNOBS:
            raise self._err("knob", f"knob.name must be one of {KNOBS}")
        vals = k.get("values")
        if not isinstance(vals, list) or not vals:
            raise self._err("knob", "knob.values must be a non-empty list")
        if k["name"] == "n_MC" and any(not _is_int(v) or v < 1 for v in vals):
            raise self._err("knob", "n_MC values must be positive integers")
        if k["name"] == "h":
            if t["family"] != "mv_gaussian_mixture":
                raise self._err("knob", "knob h requires target family mv_gaussian_mixture")
            if any(not _is_real(v) or v < 0 for v in vals):
                raise self._err("knob", "h values must be non-negative numbers")
        if self.f not in OBSERVABLES:
            raise self._err("f", f"f must be one of {OBSERVABLES}")
        for key in ("T", "n_R", "n_MC_default", "grid_nodes"):
            if not _is_int(getattr(self, key)):
                raise self._err(key, f"{key} must be an integer")
        if self.T < 2:
            raise self._err("T", "T must be >= 2")
        if self.n_R < 1 or self.n_MC_default < 1:
            raise self._err("n_R", "n_R and n_MC_default must be >= 1")
        if self.grid_nodes < 4:
            raise self._err("grid_nodes", "grid_nodes must be >= 4")
        if self.cv not in CVS:
            raise self._err("cv", f"cv must be one of {CVS}")
        if self.cv == "gaussian_analytic" and not self._gaussian_target():
            raise self._err("cv", "gaussian_analytic needs mv_gaussian_mixture or a product Gaussian")
        if self.cv in ("closed_form", "grid") and t["family"] != "product_mixture":
            raise self._err("cv", f"cv={self.cv} needs a product_mixture target")
        if self.rho_f not in (None, "exact", "estimate"):
            raise self._err("rho_f", "rho_f must be exact or estimate")
        if self.covariance not in ("true", "estimated"):
            raise self._err("covariance", "covariance must be true or estimated")
        self._check_l()
        if not _is_int(self.seed):
            raise self._err("seed", "seed must be an integer")
        if not isinstance(self.full_scale, bool) or not isinstance(self.record_timing, bool):
            raise self._err("full_scale", "full_scale and record_timing must be booleans")

    def _gaussian_target(self):
        t = self.target
        if t["family"] == "mv_gaussian_mixture":
            return True
        p = t.get("params", {})
        return p.get("preset") == "standard_normal" or len(p.get("weights", [0, 0])) == 1

    def _check_l(self):
        l = self.l
        if l == "auto":
            return
        if _is_real(l):
            if not l > 0:
                raise self._err("l", "l must be positive")
            return
        if isinstance(l, dict):
            for d in self.d_grid:
                v = l.get(str(d))
                if not _is_real(v) or not v > 0:
                    raise self._err("l", f"l has no positive value for d={d}")
            return
        raise self._err("l", 'l must be "auto", a number, or a {"d": value} mapping')

    def resolved(self, l_for_d):
        """Copy with ``l`` as an explicit ``{"d": value}`` mapping, the
        ``rho_f`` default filled in and full-scale counts applied.

        ``l_for_d`` maps a dimension to the automatic scale.
        """
        data = self.to_dict()
        if self.l == "auto":
            data["l"] = {str(d): float(l_for_d(d)) for d in self.d_grid}
        elif _is_real(self.l):
            data["l"] = {str(d): float(self.l) for d in self.d_grid}
        else:
            data["l"] = {str(d): float(self.l[str(d)]) for d in self.d_grid}
        if data["rho_f"] is None:
            data["rho_f"] = "estimate" if self.cv == "grid" else "exact"
        if self.full_scale:
            warnings.warn("full_scale: T=200000 and n_R=500; expect long runtimes", RuntimeWarning,
                          stacklevel=2)
            data.update(FULL_SCALE)
        return ExperimentConfig.from_dict(data, self._lines)

    def l_of(self, d):
        if isinstance(self.l, dict):
            return float(self.l[str(d)])
        if _is_real(self.l):
            return float(self.l)
        raise ValueError("l is not resolved")

    def knob_values(self):
        return list(self.knob["values"])


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _key_lines(text):
    """First line number at which each quoted key appears."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        start = 0
        while True:
            i = line.find('"', start)
            if i < 0:
                break
            j = line.find('"', i + 1)
            if j < 0:
                break
            key = line[i + 1:j]
            rest = line[j + 1:].lstrip()
            if rest.startswith(":"):
                out.setdefault(key, n)
            start = j + 1
    return out


def _at(lines, key, msg):
    return f"line {lines.get(key, 1)}: {msg}"
