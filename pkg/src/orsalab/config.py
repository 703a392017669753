"""Run configuration: typed sections, defaults and aggregated validation.

Every section is a plain dataclass.  ``load_config`` reads a YAML (or JSON)
document, fills defaults and validates the whole thing at once so that a
broken file reports every problem in a single :class:`ConfigError`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

SHOCK_IDS = ("equity_down", "rates_up", "rates_down", "mass_lapse")
CONSTRAINT_KINDS = ("SC0", "SC1", "SC2", "SC3", "SC4", "SC5")


class ConfigError(ValueError):
    """Invalid configuration.  ``errors`` lists every violation found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class EsgConfig:
    stock_drift_rw: float = 0.06
    stock_vol: float = 0.20
    real_estate_drift_rw: float = 0.045
    real_estate_vol: float = 0.10
    short_rate_initial: float = 0.02
    rate_mean_reversion: float = 0.10
    rate_long_term_mean: float = 0.035
    rate_vol: float = 0.01
    rate_risk_premium: float = 0.0
    stock_rate_correlation: float = -0.2
    time_step: float = 1.0
    rate_floor: bool = True

    def problems(self, prefix="esg"):
        out = []
        for name in ("stock_vol", "real_estate_vol", "rate_vol"):
            if getattr(self, name) < 0:
                out.append(f"{prefix}.{name} must be >= 0 (got {getattr(self, name)})")
        if self.rate_mean_reversion <= 0:
            out.append(f"{prefix}.rate_mean_reversion must be > 0 (got {self.rate_mean_reversion})")
        if abs(self.stock_rate_correlation) > 1:
            out.append(f"{prefix}.stock_rate_correlation must lie in [-1, 1] "
                       f"(got {self.stock_rate_correlation})")
        if self.time_step != 1.0:
            out.append(f"{prefix}.time_step is fixed at 1 year (got {self.time_step})")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self


@dataclass(frozen=True)
class ModelPoint:
    reserve: float
    guaranteed_rate: float
    weight: float = 1.0


@dataclass(frozen=True)
class PortfolioConfig:
    # market-value weights: stock, real estate, bonds, cash
    asset_allocation: tuple = (0.14, 0.03, 0.78, 0.05)
    model_points: tuple = (
        ModelPoint(reserve=70.0, guaranteed_rate=0.00085, weight=0.7),
        ModelPoint(reserve=30.0, guaranteed_rate=0.025, weight=0.3),
    )
    profit_sharing_rate: float = 0.85
    margin_fee: float = 0.014
    base_lapse: float = 0.05
    dynamic_lapse_slope: float = 2.0
    liability_horizon_H: int = 20
    bond_ladder_maturity: int = 10

    @property
    def reserves(self):
        return np.array([mp.reserve for mp in self.model_points], dtype=float)

    @property
    def guaranteed_rates(self):
        return np.array([mp.guaranteed_rate for mp in self.model_points], dtype=float)

    def problems(self, prefix="portfolio"):
        out = []
        w = np.asarray(self.asset_allocation, dtype=float)
        if w.shape != (4,):
            out.append(f"{prefix}.asset_allocation needs 4 weights (stock, real_estate, bonds, cash)")
        else:
            if np.any(w < 0):
                out.append(f"{prefix}.asset_allocation weights must be >= 0")
            if abs(w.sum() - 1.0) > 1e-9:
                out.append(f"{prefix}.asset_allocation must sum to 1 (got {w.sum():.6g})")
        if not self.model_points:
            out.append(f"{prefix}.model_points must not be empty")
        for i, mp in enumerate(self.model_points):
            if mp.reserve <= 0:
                out.append(f"{prefix}.model_points[{i}].reserve must be > 0")
        if not 0 <= self.profit_sharing_rate <= 1:
            out.append(f"{prefix}.profit_sharing_rate must lie in [0, 1]")
        if not 0 <= self.base_lapse <= 1:
            out.append(f"{prefix}.base_lapse must lie in [0, 1]")
        if self.dynamic_lapse_slope < 0:
            out.append(f"{prefix}.dynamic_lapse_slope must be >= 0")
        if self.liability_horizon_H < 1:
            out.append(f"{prefix}.liability_horizon_H must be >= 1")
        if self.bond_ladder_maturity < 1:
            out.append(f"{prefix}.bond_ladder_maturity must be >= 1")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self


@dataclass(frozen=True)
class ShockSpec:
    """Instantaneous Standard Formula shock applied at t+."""

    shock_id: str
    magnitude: float

    def __post_init__(self):
        if self.shock_id not in SHOCK_IDS:
            raise ConfigError(f"unknown shock_id {self.shock_id!r}; expected one of {SHOCK_IDS}")


DEFAULT_SHOCKS = (
    ShockSpec("equity_down", -0.39),
    ShockSpec("rates_up", 0.01),
    ShockSpec("rates_down", -0.01),
    ShockSpec("mass_lapse", 0.30),
)


@dataclass(frozen=True)
class NestedConfig:
    n_primary: int = 1000
    n_secondary: int = 100
    horizon_T: int = 5
    liability_horizon_H: int = 20
    shock_set: tuple = DEFAULT_SHOCKS
    seed: int = 20091231
    common_random_numbers: bool = True
    retain_npv: bool = False
    block_size: int = 50

    def problems(self, prefix="nested"):
        out = []
        if self.n_primary < 1:
            out.append(f"{prefix}.n_primary must be >= 1")
        if self.n_secondary < 1:
            out.append(f"{prefix}.n_secondary must be >= 1")
        if self.horizon_T < 1:
            out.append(f"{prefix}.horizon_T must be >= 1")
        if self.liability_horizon_H < 1:
            out.append(f"{prefix}.liability_horizon_H must be >= 1")
        if self.block_size < 1:
            out.append(f"{prefix}.block_size must be >= 1")
        ids = [s.shock_id for s in self.shock_set]
        if len(set(ids)) != len(ids):
            out.append(f"{prefix}.shock_set has duplicate shock ids")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self


@dataclass(frozen=True)
class ProxyConfig:
    methods: tuple = ("CF", "LSMC")
    cf_n_calibration: int = 100
    cf_selection: str = "extreme_norm"
    lsmc_n_calibration: int = 50_000
    lsmc_selection: str = "extreme_norm"
    lsmc_pool: int = 50_000
    max_degree: int = 3
    significance: float = 0.05
    max_terms: int = 25
    use_lag: bool = True
    reuse_central_terms: bool = True

    def problems(self, prefix="proxy"):
        out = []
        for m in self.methods:
            if m not in ("CF", "LSMC"):
                out.append(f"{prefix}.methods entries must be CF or LSMC (got {m!r})")
        for name in ("cf_selection", "lsmc_selection"):
            if getattr(self, name) not in ("extreme_norm", "sobol_grid"):
                out.append(f"{prefix}.{name} must be extreme_norm or sobol_grid")
        if self.cf_n_calibration < 2:
            out.append(f"{prefix}.cf_n_calibration must be >= 2")
        if self.lsmc_n_calibration < 2:
            out.append(f"{prefix}.lsmc_n_calibration must be >= 2")
        if self.lsmc_n_calibration > self.lsmc_pool:
            out.append(f"{prefix}.lsmc_n_calibration must not exceed lsmc_pool")
        if not 0 < self.significance < 1:
            out.append(f"{prefix}.significance must lie in (0, 1)")
        if self.max_degree < 1:
            out.append(f"{prefix}.max_degree must be >= 1")
        return out


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    p: float = 0.995
    alpha: float = 0.0
    horizon_T: int = 1
    name: str = ""
    deterministic_set: str | None = None  # CSV path for SC5

    @property
    def label(self):
        return self.name or f"{self.kind}_p{self.p:g}_a{self.alpha:g}"

    def problems(self, prefix="constraint"):
        out = []
        if self.kind not in CONSTRAINT_KINDS:
            out.append(f"{prefix}.kind must be one of {CONSTRAINT_KINDS} (got {self.kind!r})")
            return out
        if self.kind != "SC5" and not 0 < self.p < 1:
            out.append(f"{prefix}.p must lie in (0, 1)")
        if self.alpha < 0:
            out.append(f"{prefix}.alpha must be >= 0")
        if self.kind == "SC0" and (self.p != 0.995 or self.horizon_T != 1):
            out.append(f"{prefix}: SC0 is fixed at p = 0.995 and T = 1")
        if self.kind == "SC5" and not self.deterministic_set:
            out.append(f"{prefix}: SC5 requires deterministic_set")
        return out


@dataclass(frozen=True)
class RiskGroup:
    """One Standard Formula risk; several shock directions combine by max."""

    name: str
    shocks: tuple


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    risks: tuple  # of RiskGroup
    correlation: tuple  # nested tuples, aligned with risks


@dataclass(frozen=True)
class StructureConfig:
    modules: tuple = (
        ModuleSpec("market",
                   (RiskGroup("equity", ("equity_down",)),
                    RiskGroup("interest_rate", ("rates_up", "rates_down"))),
                   ((1.0, 0.5), (0.5, 1.0))),
        ModuleSpec("life", (RiskGroup("lapse", ("mass_lapse",)),), ((1.0,),)),
    )
    inter_correlation: tuple = ((1.0, 0.25), (0.25, 1.0))


@dataclass(frozen=True)
class TheoryConfig:
    n_terms: int = 6
    cf_n: int = 500
    P: int = 50
    w_over_npv: float = 0.1
    npv_var: float = 1.0
    replications: int = 500
    seed: int = 7


@dataclass(frozen=True)
class RunConfig:
    esg: EsgConfig = field(default_factory=EsgConfig)
    portfolio: PortfolioConfig = field(default_factory=PortfolioConfig)
    nested: NestedConfig = field(default_factory=NestedConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    constraints: tuple = ()
    structure: StructureConfig = field(default_factory=StructureConfig)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    output_dir: str = "run"
    workers: Any = 1

    @property
    def seed(self):
        return self.nested.seed

    def problems(self):
        out = []
        out += self.esg.problems()
        out += self.portfolio.problems()
        out += self.nested.problems()
        out += self.proxy.problems()
        for i, c in enumerate(self.constraints):
            out += c.problems(prefix=f"constraints[{i}]")
            if c.kind in ("SC1", "SC2", "SC3", "SC4") and c.horizon_T > self.nested.horizon_T:
                out.append(f"constraints[{i}].horizon_T exceeds nested.horizon_T")
        if self.nested.liability_horizon_H != self.portfolio.liability_horizon_H:
            out.append("nested.liability_horizon_H and portfolio.liability_horizon_H disagree "
                       f"({self.nested.liability_horizon_H} vs {self.portfolio.liability_horizon_H})")
        out += _structure_problems(self.structure, self.nested.shock_set)
        if not (self.workers == "auto" or (isinstance(self.workers, int) and self.workers >= 1)):
            out.append("workers must be a positive integer or 'auto'")
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self

    def with_overrides(self, seed=None, workers=None, output_dir=None):
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, nested=dataclasses.replace(cfg.nested, seed=int(seed)))
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=workers)
        if output_dir is not None:
            cfg = dataclasses.replace(cfg, output_dir=str(output_dir))
        return cfg

    def fingerprint(self):
        """Short hash of everything that influences numerical results."""
        doc = to_dict(self)
        doc.pop("output_dir", None)
        doc.pop("workers", None)
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _structure_problems(structure, shock_set):
    out = []
    seen = {}
    for m in structure.modules:
        k = len(m.risks)
        corr = np.asarray(m.correlation, dtype=float)
        out += _matrix_problems(corr, k, f"structure.{m.name}.correlation")
        for r in m.risks:
            for s in r.shocks:
                if s in seen:
                    out.append(f"shock {s!r} belongs to modules {seen[s]!r} and {m.name!r}")
                seen[s] = m.name
    out += _matrix_problems(np.asarray(structure.inter_correlation, dtype=float),
                            len(structure.modules), "structure.inter_correlation")
    for s in shock_set:
        if s.shock_id not in seen:
            out.append(f"shock {s.shock_id!r} is not assigned to any module")
    configured = {s.shock_id for s in shock_set}
    for s in seen:
        if s not in configured:
            out.append(f"structure references shock {s!r} missing from nested.shock_set")
    return out


def _matrix_problems(mat, k, where):
    if k == 0 and mat.size == 0:
        return []
    if mat.shape != (k, k):
        return [f"{where} must be {k}x{k} (got shape {mat.shape})"]
    out = []
    if not np.allclose(mat, mat.T):
        out.append(f"{where} must be symmetric")
    if not np.allclose(np.diag(mat), 1.0):
        out.append(f"{where} must have a unit diagonal")
    if np.any(np.abs(mat) > 1):
        out.append(f"{where} entries must lie in [-1, 1]")
    if not out and np.linalg.eigvalsh(mat).min() < -1e-10:
        out.append(f"{where} is not positive semi-definite")
    return out


# -- (de)serialisation -------------------------------------------------------

def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _build(cls, raw, where, errors):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        errors.append(f"{where} must be a mapping")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    for u in unknown:
        errors.append(f"{where}.{u} is not a recognised field")
    kwargs = {k: _tupleize(v) for k, v in raw.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ConfigError) as exc:
        errors.append(f"{where}: {exc}")
        return cls()


def from_dict(doc):
    """Build a :class:`RunConfig` from a plain mapping; raises ConfigError."""
    doc = dict(doc or {})
    errors = []
    esg = _build(EsgConfig, doc.pop("esg", None), "esg", errors)

    praw = doc.pop("portfolio", None)
    if isinstance(praw, dict) and "model_points" in praw:
        praw = dict(praw)
        try:
            praw["model_points"] = tuple(ModelPoint(**mp) for mp in praw["model_points"])
        except TypeError as exc:
            errors.append(f"portfolio.model_points: {exc}")
            praw.pop("model_points")
    portfolio = _build(PortfolioConfig, praw, "portfolio", errors)

    nraw = doc.pop("nested", None)
    if isinstance(nraw, dict) and "shock_set" in nraw:
        nraw = dict(nraw)
        shocks = []
        for i, s in enumerate(nraw["shock_set"] or []):
            try:
                shocks.append(ShockSpec(s["shock_id"], float(s["magnitude"])))
            except (KeyError, TypeError, ConfigError) as exc:
                errors.append(f"nested.shock_set[{i}]: {exc}")
        nraw["shock_set"] = tuple(shocks)
    nested = _build(NestedConfig, nraw, "nested", errors)
    proxy = _build(ProxyConfig, doc.pop("proxy", None), "proxy", errors)
    theory = _build(TheoryConfig, doc.pop("theory", None), "theory", errors)

    constraints = []
    for i, c in enumerate(doc.pop("constraints", None) or []):
        constraints.append(_build(ConstraintSpec, c, f"constraints[{i}]", errors))

    sraw = doc.pop("structure", None)
    structure = StructureConfig()
    if sraw is not None:
        try:
            modules = tuple(
                ModuleSpec(m["name"],
                           tuple(RiskGroup(rname, tuple(shocks))
                                 for rname, shocks in m["risks"].items()),
                           _tupleize(m["correlation"]))
                for m in sraw["modules"])
            structure = StructureConfig(modules, _tupleize(sraw["inter_correlation"]))
        except (KeyError, TypeError, AttributeError) as exc:
            errors.append(f"structure: malformed section ({exc})")

    output_dir = doc.pop("output_dir", "run")
    workers = doc.pop("workers", 1)
    for k in sorted(doc):
        errors.append(f"{k} is not a recognised section")

    cfg = RunConfig(esg=esg, portfolio=portfolio, nested=nested, proxy=proxy,
                    constraints=tuple(constraints), structure=structure, theory=theory,
                    output_dir=str(output_dir), workers=workers)
    try:
        errors += cfg.problems()
    except Exception as exc:  # malformed values that break the checks themselves
        errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path):
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from exc
    return from_dict(doc)


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(_structure_friendly(to_dict(cfg)), sort_keys=False))


def _structure_friendly(doc):
    # risks are stored as mappings in the file format
    for m in doc["structure"]["modules"]:
        m["risks"] = {r["name"]: list(r["shocks"]) for r in m["risks"]}
    return doc
