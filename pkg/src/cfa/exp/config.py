"""Experiment configuration: a flat YAML mapping with typed keys.

Unknown keys, wrong types and out-of-range values are rejected when the
file is read.  ``config_hash`` is a digest of the canonical JSON form, so
two configs that parse to the same values share a hash.

Seed splitting
--------------
Every random stream is a ``numpy.random.Generator`` built from
``SeedSequence([master_seed, purpose, variant_index, round(1000 * sigma_f)])``
with ``purpose`` 1 for training and 2 for evaluation.  Evaluation streams
use ``variant_index = 0`` for every variant so all policies at one
``sigma_f`` are scored on the same paths; training streams use the
variant's position in ``VARIANT_ORDER`` and are therefore disjoint.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from ..energy import GridModel, PriceModel, RenewableModel
from ..model import Horizon, StorageParams
from ..policy import KINDS, Theta
from ..search import Problem

VARIANT_ORDER = ("constant", "lookup", "exponential", "capacity")
TRAIN, EVAL = 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    T: int = 48
    H: int = 24
    R_max: float = 120.0
    gamma_c: float = 30.0
    gamma_d: float = 30.0
    beta_c: float = 0.9
    beta_d: float = 0.9
    # None means 10 * P_max
    C_penalty: float | None = None
    R0: float = 0.0
    G_min: float = 40.0
    G_max: float = 140.0
    P_min: float = -10.0
    P_max: float = 70.0
    mu_p: float = 0.0
    sigma_p: float = 5.0
    base_mean: float = 60.0
    base_amplitude: float = 40.0
    rho_cross: float = 0.9
    sigma_E: float = 10.0
    lead_growth: float = 0.0
    sigma_f_grid: tuple = (20.0, 25.0, 30.0, 35.0)
    variants: tuple = VARIANT_ORDER
    N: int = 500
    batch_size: int = 8
    n_eval_paths: int = 500
    eta: float = 0.1
    checkpoint_every: int = 50
    master_seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            object.__setattr__(self, f.name, _coerce(f.name, f.type, v))
        self._validate()

    def _validate(self):
        if self.T < 1 or self.H < 1:
            raise ConfigError("T and H must be at least 1")
        for name in ("R_max", "gamma_c", "gamma_d", "penalty"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("beta_c", "beta_d"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not 0 <= self.R0 <= self.R_max:
            raise ConfigError("R0 must lie in [0, R_max]")
        if any(s < 0 for s in self.sigma_f_grid):
            raise ConfigError("sigma_f values must be non-negative")
        for v in self.variants:
            if v not in KINDS:
                raise ConfigError(f"unknown variant {v!r}")
        if self.N < 1 or self.batch_size < 1 or self.n_eval_paths < 2:
            raise ConfigError("need N >= 1, batch_size >= 1, n_eval_paths >= 2")
        if self.eta <= 0 or self.checkpoint_every < 0:
            raise ConfigError("eta must be positive and checkpoint_every non-negative")
        # the model constructors carry their own range checks
        try:
            self.problem()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def penalty(self):
        return 10.0 * self.P_max if self.C_penalty is None else self.C_penalty

    # construction of the simulation objects
    def problem(self, sigma_f=0.0) -> Problem:
        return Problem(
            horizon=Horizon(self.T, self.H),
            params=StorageParams(self.R_max, self.gamma_c, self.gamma_d, self.beta_c,
                                 self.beta_d, self.penalty, self.R0),
            prices=PriceModel(self.P_min, self.P_max, self.mu_p, self.sigma_p),
            renewables=RenewableModel(self.base_mean, self.base_amplitude, self.rho_cross,
                                      self.sigma_E, 0.0, self.lead_growth),
            grid=GridModel(self.G_min, self.G_max),
            sigma_f=float(sigma_f),
        )

    def initial_theta(self, variant) -> Theta:
        return Theta.identity(variant, self.H)

    # seeds
    def rng(self, purpose, variant=None, sigma_f=0.0, master_seed=None):
        seed = self.master_seed if master_seed is None else master_seed
        idx = 0 if variant is None or purpose == EVAL else VARIANT_ORDER.index(variant) + 1
        key = [int(seed), int(purpose), idx, int(round(1000 * float(sigma_f)))]
        return np.random.default_rng(np.random.SeedSequence(key))

    # serialization
    def to_dict(self):
        d = asdict(self)
        d["sigma_f_grid"] = list(self.sigma_f_grid)
        d["variants"] = list(self.variants)
        return d

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping of keys to values")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def loads(cls, text):
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config: {e}") from None
        return cls.from_dict({} if d is None else d)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        return cls.loads(text)

    def with_overrides(self, **kw):
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)

    @property
    def config_hash(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _coerce(name, typ, v):
    typ = str(typ)
    if typ == "int":
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise ConfigError(f"{name} must be an integer, got {v!r}")
        return int(v)
    if typ == "float":
        return _float(name, v)
    if typ == "float | None":
        return None if v is None else _float(name, v)
    if name == "sigma_f_grid":
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError("sigma_f_grid must be a non-empty list of numbers")
        return tuple(_float(name, x) for x in v)
    if name == "variants":
        if not isinstance(v, (list, tuple)) or not v or not all(isinstance(x, str) for x in v):
            raise ConfigError("variants must be a non-empty list of names")
        return tuple(v)
    raise ConfigError(f"no type rule for {name}")


def _float(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(f"{name} must be finite")
    return v
