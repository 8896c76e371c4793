"""Acceptance criteria at full size; one PASS/FAIL line each in the terminal summary.

Takes roughly fifteen minutes on one core, most of it the 48-agent block sweep
that runs twice for the determinism check.
"""

import hashlib
import json
import shutil
from pathlib import Path

import pytest

from dbpm.cli import main
from dbpm.experiment import ExperimentResult
from dbpm.metrics import read_columns_csv
from dbpm.verify import (Check, check_b1_reference, check_block_comparison, check_bound_curves,
                         check_consensus_matrices, check_diminishing, check_entropy_grid, check_formulations, check_optimality_residuals,
                         check_plateau_scaling, check_quadratic_prox_exact, check_spread_contraction,
                         check_step_bound)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TRACES: dict[str, list] = {}


def record(log, label, checks):
    checks = checks if isinstance(checks, list) else [checks]
    ok = all(c.ok for c in checks)
    detail = "; ".join(f"{c.name}: {c.detail}" for c in checks)
    log.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return ok, detail


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="session")
def sweep_dir(tmp_path_factory):
    """The 48-agent sweep over B in {1, 2, 5, 10, 50}, run with eight worker threads."""
    out = tmp_path_factory.mktemp("synthetic48") / "run"
    assert main(["run", str(CONFIGS / "synthetic48.toml"), "--output-dir", str(out), "--threads", "8"]) == 0
    return out


@pytest.fixture(scope="session")
def c2():
    check, sims = check_plateau_scaling(alpha=0.1, seeds=20, rounds=10_000)
    TRACES["2"] = [s.trace for s in sims]
    return check


@pytest.fixture(scope="session")
def c3():
    check, sims = check_diminishing(seeds=20, rounds=50_000)
    TRACES["3"] = [s.trace for s in sims]
    return check


@pytest.fixture(scope="session")
def c4():
    TRACES["4"] = []
    return check_b1_reference(5, 1000, collect=TRACES["4"])


@pytest.fixture(scope="session")
def c5():
    TRACES["5"] = []
    return check_formulations(5, 1000, blocks=(1, 5), p_ons=(0.7, 1.0), collect=TRACES["5"])


@pytest.fixture(scope="session")
def c7():
    TRACES["7"] = []
    return check_consensus_matrices(10_000, collect=TRACES["7"])


@pytest.fixture(scope="session")
def c9():
    TRACES["9"] = []
    return check_spread_contraction(rounds=5000, collect=TRACES["9"])


@pytest.fixture(scope="session")
def bound_check():
    check, sims = check_bound_curves(seeds=20, rounds=2000)
    TRACES["bounds"] = [s.trace for s in sims]
    return check


def test_c01_block_counts_comparable(sweep_dir, acceptance_log):
    means = {B: read_columns_csv(sweep_dir / f"mean_B{B}.csv") for B in (1, 2, 5, 10, 50)}
    checks = check_block_comparison(ExperimentResult({}, sweep_dir, means), max_ratio=3.0)
    ok, detail = record(acceptance_log, "1 block-count comparison", checks)
    assert ok, detail


def test_c02_plateau_scaling(c2, acceptance_log):
    ok, detail = record(acceptance_log, "2 constant-stepsize plateau scaling", c2)
    assert ok, detail


def test_c03_diminishing_exactness(c3, acceptance_log):
    ok, detail = record(acceptance_log, "3 diminishing-stepsize exactness", c3)
    assert ok, detail


def test_c04_single_block_reference(c4, acceptance_log):
    ok, detail = record(acceptance_log, "4 B=1 matches distributed subgradient", c4)
    assert ok, detail


def test_c05_formulations_identical(c5, acceptance_log):
    ok, detail = record(acceptance_log, "5 copy-table and compact bit-identical", c5)
    assert ok, detail


def test_c06_prox(acceptance_log):
    checks = [check_quadratic_prox_exact(10_000), check_entropy_grid(20, 1e-4), check_optimality_residuals(10_000)]
    ok, detail = record(acceptance_log, "6 prox correctness", checks)
    assert ok, detail


def test_c07_consensus_matrices(c7, acceptance_log):
    ok, detail = record(acceptance_log, "7 realized consensus matrices", c7)
    assert ok, detail


def test_c08_step_bound(sweep_dir, c2, c3, c4, c5, c7, c9, bound_check, acceptance_log):
    traces = [t for group in TRACES.values() for t in group]
    check = check_step_bound(traces)
    sweep = json.loads((sweep_dir / "summary.json").read_text())["step_bound_violations"]
    check.ok = check.ok and sweep == 0
    check.detail += f"; 48-agent sweep: {sweep} violations"
    ok, detail = record(acceptance_log, "8 step-bound invariant", check)
    assert ok, detail


def test_c09_spread_contraction(c9, acceptance_log):
    ok, detail = record(acceptance_log, "9 spread contraction", c9)
    assert ok, detail


SMALL = """
[problem]
n_points = 48
dim = 4
[network]
n_agents = 12
[algorithm]
blocks = [1, 5]
p_on = 0.8
horizon = 300
[metrics]
seeds = 6
reference_iterations = 5000
"""


def test_c10_determinism(sweep_dir, tmp_path, acceptance_log):
    first = tree_digest(sweep_dir)
    shutil.rmtree(sweep_dir)
    assert main(["run", str(CONFIGS / "synthetic48.toml"), "--output-dir", str(sweep_dir), "--threads", "1"]) == 0
    same_sweep = tree_digest(sweep_dir) == first

    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    out = tmp_path / "small"
    digests = []
    for threads in ("1", "1", "8"):
        if out.exists():
            shutil.rmtree(out)
        assert main(["run", str(cfg), "--output-dir", str(out), "--threads", threads, "--seed", "3"]) == 0
        digests.append(tree_digest(out))
    same_small = digests[0] == digests[1] == digests[2]

    check = Check("determinism", same_sweep and same_small,
                  f"48-agent sweep threads 8 vs 1 identical: {same_sweep} ({len(first)} files); "
                  f"small config 1/1/8 threads identical: {same_small}")
    ok, detail = record(acceptance_log, "10 determinism", check)
    assert ok, detail


def test_bound_curves_estimate_based(bound_check, acceptance_log):
    ok, detail = record(acceptance_log, "bound curves (estimated constants)", bound_check)
    assert ok, detail
