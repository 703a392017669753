import dataclasses
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from orsalab.config import ModuleSpec, RiskGroup, RunConfig, StructureConfig, load_config

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "orsalab" / "configs"

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def small_config(N=20, P=10, T=2, H=8, shocks=None, **esg):
    """A fast RunConfig; ``esg`` keyword arguments override EsgConfig fields."""
    cfg = RunConfig()
    nested = dataclasses.replace(cfg.nested, n_primary=N, n_secondary=P, horizon_T=T,
                                 liability_horizon_H=H, block_size=max(1, N // 3))
    structure = cfg.structure
    if shocks is not None:
        # custom shocks: one module, one uncorrelated risk per shock
        nested = dataclasses.replace(nested, shock_set=tuple(shocks))
        k = len(shocks)
        eye = tuple(tuple(float(i == j) for j in range(k)) for i in range(k))
        structure = StructureConfig(
            (ModuleSpec("all", tuple(RiskGroup(s.shock_id, (s.shock_id,)) for s in shocks),
                        eye),) if k else (),
            ((1.0,),) if k else ())
    return dataclasses.replace(
        cfg, nested=nested, structure=structure,
        portfolio=dataclasses.replace(cfg.portfolio, liability_horizon_H=H),
        esg=dataclasses.replace(cfg.esg, **esg))


@pytest.fixture
def make_config():
    return small_config


@pytest.fixture(scope="session")
def smoke_config():
    return load_config(CONFIG_DIR / "smoke.yaml")


@pytest.fixture(scope="session")
def desk_config():
    return load_config(CONFIG_DIR / "desk.yaml")


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory, desk_config):
    """The desk-scale pipeline, run once per session."""
    from orsalab.pipeline import run_pipeline
    out = tmp_path_factory.mktemp("desk") / "run"
    report = run_pipeline(desk_config, out, workers=1)
    return out, report


@pytest.fixture
def acceptance():
    def record(criterion, passed, detail):
        line = f"criterion {criterion:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip(":abc")),
                                                             s)):
            terminalreporter.write_line(line)
