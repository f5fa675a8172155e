"""Run configuration: TOML loading, validation and a stable content hash."""

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, CtRegionsError
from .model import LtiSystem

DEFAULT_TOLERANCES = {
    "boundary_band": 1e-9,      # classify band around each plane (sigma units)
    "oracle": 1e-7,             # pointwise optimality violation accepted by the oracle
    "terminal": 1e-6,           # transversality check of simulated trajectories
    "volume_min": 1e-9,         # full-dimensionality threshold for DT regions
    "bisection": 1e-10,         # junction residual at which t_s = 0 is returned
}


@dataclass(frozen=True)
class RunConfig:
    system: dict
    samples: int = 2000
    degree: int = 3
    seed: int = 0
    N: tuple = (5, 10)
    grid: int = 21
    endpoint_samples: int = 200
    out_dir: str = "out"
    tol_mult: float = 1.0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def lti(self):
        s = self.system
        try:
            return LtiSystem(s["A"], s["B"], s["t_f"], s["u_max"], s["theta_lo"], s["theta_hi"])
        except KeyError as exc:
            raise ConfigError(f"system block is missing {exc.args[0]!r}") from None
        except (CtRegionsError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid system: {exc}") from None

    def tol(self, name):
        return self.tolerances[name] * self.tol_mult

    @property
    def effective_tolerances(self):
        return {k: v * self.tol_mult for k, v in sorted(self.tolerances.items())}

    def canonical(self):
        """Everything that affects results; the output directory is excluded."""
        return {
            "system": self.system, "switching": {"samples": self.samples, "degree": self.degree,
                                                 "seed": self.seed},
            "dt": {"N": list(self.N)},
            "verify": {"grid": self.grid, "endpoint_samples": self.endpoint_samples},
            "tolerances": self.effective_tolerances,
        }

    @property
    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw))


def _int(block, key, default, minimum=None):
    v = block.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key} must be at least {minimum}, got {v}")
    return v


def validate(cfg):
    cfg.lti()
    if cfg.degree < 1:
        raise ConfigError("degree must be at least 1")
    if cfg.samples < 1 or cfg.grid < 2 or cfg.endpoint_samples < 1:
        raise ConfigError("sample counts must be positive and the grid at least 2")
    if not cfg.N or any(int(n) < 1 for n in cfg.N):
        raise ConfigError("dt.N entries must be at least 1")
    if not (cfg.tol_mult > 0):
        raise ConfigError("tolerance multiplier must be positive")
    return cfg


def from_dict(doc):
    if "system" not in doc:
        raise ConfigError("missing [system] block")
    sw = doc.get("switching", {})
    dt = doc.get("dt", {})
    ver = doc.get("verify", {})
    out = doc.get("output", {})
    tols = dict(DEFAULT_TOLERANCES)
    for k, v in doc.get("tolerances", {}).items():
        if k not in tols:
            raise ConfigError(f"unknown tolerance {k!r}")
        tols[k] = float(v)
    N = dt.get("N", [5, 10])
    if isinstance(N, int):
        N = [N]
    if not all(isinstance(n, int) and not isinstance(n, bool) for n in N):
        raise ConfigError("dt.N must be a list of integers")
    cfg = RunConfig(
        system=dict(doc["system"]),
        samples=_int(sw, "samples", 2000, 1),
        degree=_int(sw, "degree", 3, 1),
        seed=_int(sw, "seed", 0),
        N=tuple(N),
        grid=_int(ver, "grid", 21, 2),
        endpoint_samples=_int(ver, "endpoint_samples", 200, 1),
        out_dir=str(out.get("dir", "out")),
        tolerances=tols,
    )
    return validate(cfg)


def load_config(path=None):
    """Read a TOML run configuration; ``None`` loads the shipped default."""
    try:
        if path is None:
            text = resources.files("ctregions").joinpath("data/default.toml").read_text()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        doc = tomllib.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_dict(doc)
