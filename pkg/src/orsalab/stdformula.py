"""Standard Formula shock-and-aggregate SCR.

Stand-alone capitals ``C = max(NAV - NAV_shocked, 0)``, square-root
aggregation inside each module and across modules.  Rate up/down are
floored first and then the larger direction is kept.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, StructureConfig, _matrix_problems
from .nested import NavScrPaths


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "labels", tuple(self.labels))
        errs = _matrix_problems(m, len(self.labels), "correlation matrix")
        if errs:
            raise ConfigError(errs)


@dataclass(frozen=True)
class ModuleStructure:
    """Modules as ``(name, {risk: shocks}, intra matrix)`` plus the inter matrix."""

    modules: tuple
    inter: CorrelationMatrix

    @classmethod
    def from_config(cls, cfg: StructureConfig):
        mods = []
        for m in cfg.modules:
            risks = {r.name: tuple(r.shocks) for r in m.risks}
            mods.append((m.name, risks, CorrelationMatrix(tuple(risks), m.correlation)))
        inter = CorrelationMatrix(tuple(m.name for m in cfg.modules), cfg.inter_correlation)
        return cls(tuple(mods), inter)

    @property
    def shocks(self):
        return [s for _, risks, _ in self.modules for group in risks.values() for s in group]

    def check_shocks(self, shock_ids):
        seen = set()
        for s in self.shocks:
            if s in seen:
                raise ConfigError(f"shock {s!r} belongs to more than one module")
            seen.add(s)
        extra = set(shock_ids) - seen
        if extra:
            raise ConfigError(f"shocks {sorted(extra)} are not assigned to any module")


def stand_alone_capital(nav, nav_shocked):
    return np.maximum(np.asarray(nav) - np.asarray(nav_shocked), 0.0)


def _quadratic(values, matrix: CorrelationMatrix, labels=None):
    c = np.asarray(values, dtype=float)
    if labels is not None and tuple(labels) != matrix.labels:
        raise ValueError(f"labels {tuple(labels)} do not match matrix labels {matrix.labels}")
    if c.shape[-1] != len(matrix.labels):
        raise ValueError(f"got {c.shape[-1]} capitals for a {len(matrix.labels)}-risk matrix")
    q = np.einsum("...i,ij,...j->...", c, matrix.entries, c)
    return np.sqrt(np.maximum(q, 0.0))


def aggregate_intra(capitals, matrix: CorrelationMatrix, labels=None):
    """sqrt(sum_ij rho_ij C_i C_j); the last axis of ``capitals`` runs over risks.

    ``capitals`` may also be a mapping keyed by the matrix labels.
    """
    if isinstance(capitals, dict):
        missing = [k for k in matrix.labels if k not in capitals]
        if missing or len(capitals) != len(matrix.labels):
            raise ValueError(f"capital labels {sorted(capitals)} do not match {list(matrix.labels)}")
        capitals = np.stack([np.asarray(capitals[k], dtype=float) for k in matrix.labels], axis=-1)
    return _quadratic(capitals, matrix, labels)


aggregate_inter = aggregate_intra


def scr_from_capitals(capitals: dict, structure: ModuleStructure):
    """Two-level aggregation from per-shock stand-alone capitals."""
    module_scr = {}
    for name, risks, intra in structure.modules:
        per_risk = {}
        for risk, shocks in risks.items():
            missing = [s for s in shocks if s not in capitals]
            if missing:
                raise KeyError(f"risk {risk!r} needs shocked NAV for {missing}")
            per_risk[risk] = np.max(np.stack([capitals[s] for s in shocks]), axis=0)
        module_scr[name] = aggregate_intra(per_risk, intra)
    return aggregate_inter(module_scr, structure.inter)


def scr_from_navs(nav, shocked: dict, structure: ModuleStructure):
    caps = {s: stand_alone_capital(nav, v) for s, v in shocked.items()}
    return scr_from_capitals(caps, structure)


def solvency_ratio(nav, scr):
    """NAV / SCR; +inf where SCR is 0 (trivially covered), nan propagates."""
    nav = np.asarray(nav, dtype=float)
    scr = np.asarray(scr, dtype=float)
    out = np.full(np.broadcast(nav, scr).shape, np.inf)
    pos = scr > 0
    np.divide(nav, scr, out=out, where=pos)
    out[np.isnan(nav + scr)] = np.nan
    return out


def build_scr_paths(paths: NavScrPaths, structure) -> NavScrPaths:
    """Fill ``scr`` and ``solvency_ratio`` (and SCR_0 when NAV_0 is known)."""
    if isinstance(structure, StructureConfig):
        structure = ModuleStructure.from_config(structure)
    for _, risks, _ in structure.modules:
        for risk, group in risks.items():
            missing = [s for s in group if s not in paths.shock_ids]
            if missing:
                raise KeyError(f"risk {risk!r}: no shocked NAV column for {missing}")
    shocked = {s: paths.shocked(s) for s in structure.shocks}
    paths.scr = scr_from_navs(paths.nav_hat, shocked, structure)
    paths.solvency_ratio = solvency_ratio(paths.nav_hat, paths.scr)
    if np.isfinite(paths.nav0) and len(paths.nav0_shocked):
        sh0 = {s: paths.nav0_shocked[paths.shock_ids.index(s)] for s in structure.shocks}
        paths.scr0 = float(scr_from_navs(paths.nav0, sh0, structure))
    return paths
