"""Verification-suite plumbing at reduced scale (full scale runs in acceptance)."""

from __future__ import annotations

import numpy as np
import pytest

from gpbandits.checks import (
    check_elimination_safety,
    check_gp_oracle,
    check_lemma1_coverage,
    check_lemma3_bound,
    check_theorem4_bound,
)
from gpbandits.environment import build_experiment, run_experiment


class TestGpOracleSuite:
    def test_reduced_run_passes(self):
        report = check_gp_oracle(cases=40, moment_instances=4, moment_draws=4000)
        assert report["passed"]
        assert report["dense_failures"] == 0
        assert report["dense_max_abs_error"] < 1e-8


class TestLemma1Suite:
    def test_reduced_run_reports_frequency(self):
        report = check_lemma1_coverage(num_seeds=30, num_arms=20, horizon=15)
        assert report["episodes"] == 30
        assert 0.0 <= report["violation_frequency"] <= 1.0
        assert report["allowed_frequency"] > 0.05
        assert report["passed"]


class TestLemma3Suite:
    def test_monte_carlo_margins(self):
        report = check_lemma3_bound(mc_draws=4000, seed=2)
        assert report["passed"]
        for config in report["configs"]:
            assert config["estimate"] >= config["rhs"] - 3 * config["mc_se"]
            assert config["rhs_sharp"] <= config["rhs"] + 1e-12


class TestTheorem4Suite:
    def test_bound_holds_on_small_run(self):
        plan = build_experiment(
            "kernel", horizon=30, num_arms=40, num_seeds=10, agents=("hp-gp-ts",)
        )
        records = run_experiment(plan, workers=1)
        report = check_theorem4_bound(records, plan)
        assert report["passed"]
        assert report["min_slack"] > 0
        expected = np.sqrt(2 * 40 * np.log(40) * (report["sigma0_sq"] + 0.0625) * 30)
        assert report["rhs_final"] == pytest.approx(expected, rel=1e-12)


class TestEliminationSafetySuite:
    def test_reduced_run(self):
        report = check_elimination_safety(
            num_seeds=20, horizon=40, num_arms=30, workers=1
        )
        assert set(report["eliminated_fraction"]) == {"pe-gp-ts", "pe-gp-ucb"}
        assert report["passed"]
