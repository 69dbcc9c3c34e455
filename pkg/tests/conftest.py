"""Shared fixtures: toy code maps, a small enrollee fixture, and one
session-scoped downsized synthetic population so the expensive generation
runs once."""

from __future__ import annotations

import dataclasses
import re

import numpy as np
import pytest

from fairstep import CodeMaps, EnrolleeRecord, HierarchyRule
from fairstep.scenario import figure1_default
from fairstep.synthpop import generate
from helpers import ACCEPTANCE_LINES


def pytest_runtest_logreport(report):
    # acceptance tests register their own PASS line; failures get one here
    if report.failed and "test_acceptance" in report.nodeid:
        match = re.search(r"test_criterion_(\d+)", report.nodeid)
        if match:
            number = int(match.group(1))
            ACCEPTANCE_LINES.setdefault(
                number, f"FAIL criterion-{number}: {report.nodeid} ({report.when})"
            )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def toy_maps() -> CodeMaps:
    icd_to_hcc = {
        "D100": "HCC_A",
        "D101": "HCC_A",
        "D200": "HCC_B",
        "D300": "HCC_C",
        "D400": "HCC_D",
    }
    icd_to_ccs = {
        "D100": "CCS_1",
        "D101": "CCS_1",
        "D200": "CCS_2",
        "D300": "CCS_3",
        "D400": "CCS_3",
        "D500": "CCS_4",
    }
    # HCC_A dominates HCC_B; HCC_B dominates HCC_C (transitive chain)
    hierarchies = (
        HierarchyRule("HCC_A", frozenset({"HCC_B"})),
        HierarchyRule("HCC_B", frozenset({"HCC_C"})),
    )
    payment = ("HCC_A", "HCC_B", "HCC_C", "HCC_D")
    return CodeMaps(icd_to_hcc, icd_to_ccs, hierarchies, payment)


@pytest.fixture()
def toy_records() -> list[EnrolleeRecord]:
    def rec(pid, age, sex, region, codes, spend):
        return EnrolleeRecord(pid, age, sex, region, frozenset(codes), spend)

    # 10 records: 2 missing region, 1 negative spend -> 7 kept
    return [
        rec("p01", 37, "F", "R1", {"D100"}, 1200.0),
        rec("p02", 0, "M", "R1", set(), 50.0),
        rec("p03", 91, "F", "R2", {"D200", "D300"}, 8000.0),
        rec("p04", 45, "M", None, {"D100"}, 900.0),
        rec("p05", 52, "F", "R1", {"D400"}, 740.0),
        rec("p06", 60, "M", "R2", {"D100", "D200"}, -10.0),
        rec("p07", 28, "F", "R1", {"D500"}, 300.0),
        rec("p08", 71, "M", "R2", set(), 4100.0),
        rec("p09", 33, "F", None, {"D300"}, 310.0),
        rec("p10", 18, "M", "R1", {"D100", "D300"}, 2500.0),
    ]


SMALL_N = 20_000
SMALL_SEED = 7


@pytest.fixture(scope="session")
def small_scenario():
    """figure1 scenario downsized to 20k rows; population generated once."""
    sc = figure1_default()
    spec = dataclasses.replace(sc.spec, n=SMALL_N, seed=SMALL_SEED)
    sc = dataclasses.replace(sc, spec=spec)
    records = generate(spec, sc.maps)
    return sc, records


@pytest.fixture(scope="session")
def small_problem(small_scenario):
    sc, records = small_scenario
    return sc.problem(records)


@pytest.fixture(scope="session")
def small_baseline_data(small_scenario):
    """Design restricted to the baseline formula, with outcome and groups."""
    from fairstep import build_design, group_membership

    sc, records = small_scenario
    X = build_design(records, sc.baseline, sc.maps, sc.banding)
    y = np.array([r.spend_total for r in records])
    groups = {g.group_id: group_membership(records, g, sc.maps) for g in sc.groups}
    return sc, X, y, groups


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    """Scenario artifacts written by the CLI, shared by CLI/service tests."""
    from click.testing import CliRunner

    from fairstep.cli import main

    out = tmp_path_factory.mktemp("demo") / "scenario"
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["scenario", "--out", str(out), "--n", str(SMALL_N), "--seed", str(SMALL_SEED)],
    )
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)
