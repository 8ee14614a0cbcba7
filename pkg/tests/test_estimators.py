"""Tests for the cross-fitted one-step estimators."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

import hetsurv.estimators as est
from hetsurv.data import FoldPlan, SurvivalDataset, make_folds
from hetsurv.errors import DataError, DegenerateTargetError, FitError
from hetsurv.estimators import (
    EstimateReport,
    TargetSpec,
    cross_fit_nuisances,
    cross_fit_variance,
    estimate,
    estimate_gamma_chi_omega,
    estimate_psi_l,
    estimate_share_pair,
    estimate_theta_d,
    estimate_theta_l,
    estimate_zeta_l,
)
from hetsurv.nuisance.config import LearnerSpec, LearnerStack


def small_stack() -> LearnerStack:
    """Fast deterministic learners sized for tiny test samples."""
    return LearnerStack(
        event_model=LearnerSpec(
            "cox-breslow",
            {"covariates": [1], "treatment": True, "interactions": [1]},
        ),
        censoring_model=LearnerSpec("cox-breslow", {"covariates": [1]}),
        propensity_model=LearnerSpec("logistic-glm", {"covariates": [1]}),
        tau_l_regressor=LearnerSpec("kernel-smoother", {}),
        xj_regressor=LearnerSpec("kernel-smoother", {}),
    )


def simulate(
    n: int,
    seed: int,
    effect: float = 1.0,
    null: bool = False,
    d: int = 2,
    effect2: float = 0.0,
):
    """Continuous-time exponential DGP with optional effect heterogeneity."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    p = 1.0 / (1.0 + np.exp(-0.4 * x[:, 0]))
    a = (rng.uniform(size=n) < p).astype(int)
    if null:
        rate = 0.5 * np.exp(-0.4 * a)
    else:
        rate = 0.5 * np.exp(
            0.3 * x[:, 0]
            - 0.4 * a
            + effect * a * x[:, 0]
            + effect2 * a * x[:, 1]
        )
    t_event = rng.exponential(1.0 / rate)
    t_cens = rng.exponential(1.0 / (0.3 * np.exp(0.1 * x[:, 1])))
    admin = 2.5
    time = np.minimum(np.minimum(t_event, t_cens), admin)
    event = (t_event <= np.minimum(t_cens, admin)).astype(int)
    return SurvivalDataset(time=time, event=event, treatment=a, covariates=x)


def spec_for(kind: str, **overrides) -> TargetSpec:
    base = {
        "kind": kind,
        "horizon": 1.5,
        "subset": () if kind == "theta_d" else (2,),
        "folds": 2,
        "inner_folds": 2,
        "seed": 7,
        "learners": small_stack(),
    }
    base.update(overrides)
    return TargetSpec(**base)


class TestTargetSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(DataError, match="unknown target kind"):
            TargetSpec(kind="theta_x", horizon=1.0, subset=(1,))

    def test_subset_required_for_variance_targets(self):
        for kind in ("theta_l", "psi_l", "zeta_l"):
            with pytest.raises(DataError, match="nonempty covariate subset"):
                TargetSpec(kind=kind, horizon=1.0)

    def test_projection_targets_take_one_index(self):
        for kind in ("gamma_j", "chi_j", "omega_j"):
            with pytest.raises(DataError, match="exactly one covariate index"):
                TargetSpec(kind=kind, horizon=1.0, subset=(1, 2))

    def test_theta_d_takes_no_subset(self):
        with pytest.raises(DataError, match="does not take"):
            TargetSpec(kind="theta_d", horizon=1.0, subset=(1,))

    def test_indices_one_based_and_distinct(self):
        with pytest.raises(DataError, match="1-based"):
            TargetSpec(kind="theta_l", horizon=1.0, subset=(0,))
        with pytest.raises(DataError, match="duplicates"):
            TargetSpec(kind="theta_l", horizon=1.0, subset=(1, 1))

    def test_bounds_checked(self):
        with pytest.raises(DataError, match="horizon"):
            TargetSpec(kind="theta_d", horizon=0.0)
        with pytest.raises(DataError, match="fold count"):
            TargetSpec(kind="theta_d", horizon=1.0, folds=0)
        with pytest.raises(DataError, match="inner fold"):
            TargetSpec(kind="theta_d", horizon=1.0, inner_folds=1)
        with pytest.raises(DataError, match="epsilon"):
            TargetSpec(kind="theta_d", horizon=1.0, epsilon=0.5)

    def test_default_learners_filled_in(self):
        spec = TargetSpec(kind="theta_d", horizon=1.0)
        assert spec.learners.event_model.kind == "cox-breslow"
        assert spec.folds == 10 and spec.inner_folds == 5

    def test_subset_outside_dimension_rejected_at_run(self):
        data = simulate(60, seed=1)
        with pytest.raises(DataError, match="exceeds dimension"):
            estimate_theta_l(data, spec_for("theta_l", subset=(9,)))


class TestCrossFitVariance:
    def test_constant_values_give_square(self):
        assert cross_fit_variance([np.full(3, 2.5), np.full(2, 2.5)]) == 2.5**2

    def test_plus_minus_one_two_singleton_folds(self):
        assert cross_fit_variance([np.array([1.0]), np.array([-1.0])]) == 1.0

    def test_group_order_irrelevant(self):
        g1, g2 = np.array([1.0, 3.0]), np.array([-2.0, 0.5, 1.5])
        assert cross_fit_variance([g1, g2]) == cross_fit_variance([g2, g1])

    def test_empty_input_rejected(self):
        with pytest.raises(DataError):
            cross_fit_variance([])


class TestCrossFitNuisances:
    def test_two_folds_give_two_bundles(self):
        data = simulate(60, seed=3)
        pairs = cross_fit_nuisances(data, spec_for("theta_l"))
        assert [k for k, _ in pairs] == [1, 2]
        b1, b2 = pairs[0][1], pairs[1][1]
        assert b1.cate_projection is not None
        assert b1.subset == (2,)
        # complementary training halves fit different hazard baselines
        assert not np.array_equal(
            b1.event_hazard.baseline_times, b2.event_hazard.baseline_times
        )

    def test_rerun_is_byte_identical(self):
        import pickle

        data = simulate(60, seed=3)
        pairs_a = cross_fit_nuisances(data, spec_for("theta_l"))
        pairs_b = cross_fit_nuisances(data, spec_for("theta_l"))
        assert pickle.dumps(pairs_a) == pickle.dumps(pairs_b)

    def test_learner_failure_names_the_fold(self):
        data = simulate(60, seed=3)
        stack = small_stack()
        bad = LearnerStack(
            event_model=LearnerSpec("cox-breslow", {"covariates": [9]}),
            censoring_model=stack.censoring_model,
            propensity_model=stack.propensity_model,
            tau_l_regressor=stack.tau_l_regressor,
            xj_regressor=stack.xj_regressor,
        )
        with pytest.raises(FitError, match="fold 1"):
            cross_fit_nuisances(data, spec_for("theta_l", learners=bad))


class TestLinearTargets:
    def test_kind_mismatch_rejected(self):
        data = simulate(60, seed=3)
        with pytest.raises(DataError, match="does not match"):
            estimate_theta_l(data, spec_for("theta_d"))
        with pytest.raises(DataError, match="does not match"):
            estimate_theta_d(data, spec_for("theta_l"))

    def test_projection_reproducing_tau_gives_exact_zero(self, monkeypatch):
        data = simulate(100, seed=11, effect=1.0)
        made = []
        real_build = est.build_cate

        def build(model, horizon, estimand="survival"):
            cate = real_build(model, horizon, estimand)
            made.append(cate)
            return cate

        class Echo:
            def __init__(self, cate):
                self.cate = cate

            def predict(self, x):
                return self.cate.tau(x)

        monkeypatch.setattr(est, "build_cate", build)
        monkeypatch.setattr(
            est, "fit_cate_projection", lambda *a, **k: Echo(made[-1])
        )
        report = estimate_theta_l(data, spec_for("theta_l"))
        assert report.point == 0.0
        assert report.se == 0.0
        assert all(entry["estimate"] == 0.0 for entry in report.folds)

    def test_estimating_equation_solved(self):
        data = simulate(150, seed=13, effect=1.2)
        for kind in ("theta_l", "theta_d", "gamma_j", "chi_j"):
            report = estimate(data, spec_for(kind))
            scale = max(1.0, abs(report.point))
            assert abs(float(report.eif_values.mean())) <= 1e-10 * scale

    def test_constant_effect_dgp_gives_null_theta_d(self):
        data = simulate(250, seed=17, null=True)
        report = estimate_theta_d(data, spec_for("theta_d"))
        assert abs(report.point) <= max(3.0 * report.se, 1e-8)

    def test_nested_inner_fold_count_is_stable(self):
        data = simulate(300, seed=19, effect=1.2)
        r2 = estimate_theta_d(data, spec_for("theta_d", inner_folds=2))
        r3 = estimate_theta_d(data, spec_for("theta_d", inner_folds=3))
        assert abs(r2.point - r3.point) < 2.0 * max(r2.se, r3.se)

    def test_fold_relabeling_changes_nothing(self, monkeypatch):
        data = simulate(120, seed=23, effect=1.2)
        base = estimate_theta_l(data, spec_for("theta_l"))
        real_make = est.make_folds

        def relabeled(n, K, seed, inner_folds=None):
            plan = real_make(n, K, seed, inner_folds=inner_folds)
            swap = {1: 2, 2: 1}
            assignment = np.array([swap.get(k, k) for k in plan.assignment])
            inner = {swap.get(k, k): v for k, v in plan.inner.items()}
            return FoldPlan(n=plan.n, K=plan.K, assignment=assignment, inner=inner)

        monkeypatch.setattr(est, "make_folds", relabeled)
        swapped = estimate_theta_l(data, spec_for("theta_l"))
        assert swapped.point == base.point
        assert swapped.se == base.se

    def test_single_fold_mode_runs_without_cross_fitting(self):
        data = simulate(100, seed=29, effect=1.2)
        report = estimate_theta_l(data, spec_for("theta_l", folds=1))
        assert len(report.folds) == 1
        assert report.folds[0]["n"] == 100
        again = estimate_theta_l(data, spec_for("theta_l", folds=1))
        assert again.point == report.point


class TestRatioTargets:
    def test_ratio_coherence_across_targets(self):
        data = simulate(150, seed=31, effect=1.2)
        r_l = estimate_theta_l(data, spec_for("theta_l"))
        r_d = estimate_theta_d(data, spec_for("theta_d"))
        r_psi = estimate_psi_l(data, spec_for("psi_l"))
        assert r_psi.point == r_l.point / r_d.point

    def test_rerun_determinism(self):
        data = simulate(120, seed=37, effect=1.2)
        a = estimate_psi_l(data, spec_for("psi_l"))
        b = estimate_psi_l(data, spec_for("psi_l"))
        assert a.to_json() == b.to_json()
        assert np.array_equal(a.eif_values, b.eif_values)

    def test_share_of_equal_variances_is_one(self, monkeypatch):
        data = simulate(120, seed=41, effect=1.5)
        recorded = {}
        real_phi_batch = est.phi_batch

        def phi_rec(ds, bundle):
            batch = real_phi_batch(ds, bundle)
            recorded["mean"] = float(batch.phi.mean())
            return batch

        class ConstMean:
            def predict(self, x):
                x = np.atleast_2d(np.asarray(x, dtype=float))
                return np.full(x.shape[0], recorded["mean"])

        monkeypatch.setattr(est, "phi_batch", phi_rec)
        monkeypatch.setattr(est, "fit_cate_projection", lambda *a, **k: ConstMean())
        report = estimate_psi_l(data, spec_for("psi_l", folds=1))
        assert report.point == 1.0
        assert report.se == 0.0

    def test_degenerate_total_variance_raises(self, monkeypatch):
        data = simulate(60, seed=43)
        values = np.zeros(60)
        monkeypatch.setattr(
            est, "_psi_pieces", lambda run: (values, values, 0.1, -0.2)
        )
        with pytest.raises(DegenerateTargetError, match="not positive"):
            estimate_psi_l(data, spec_for("psi_l"))
        with pytest.raises(DegenerateTargetError, match="not positive"):
            estimate_zeta_l(data, spec_for("zeta_l"))


class TestZeta:
    def test_correction_vanishes_at_plug_in(self, monkeypatch):
        # power-of-two fold sizes keep the crafted fold means bit-exact
        data = simulate(64, seed=47, effect=1.5)
        captured = {}

        def fake_pieces(run):
            unc_l = np.empty(run.n)
            unc_d = np.empty(run.n)
            pieces = []
            for fit in run.fold_fits:
                resid = fit.tau_train - fit.tau_l_train
                psi0 = float(np.mean(resid**2)) / float(np.var(fit.tau_train))
                assert 0.0 < psi0 < 1.0
                unc_l[fit.valid_idx] = psi0
                unc_d[fit.valid_idx] = 1.0
                pieces.append((fit.valid_idx.size, math.log(psi0 / (1.0 - psi0))))
            captured["expected"] = sum(nk * z for nk, z in pieces) / run.n
            return unc_l, unc_d, float(unc_l.mean()), 1.0

        monkeypatch.setattr(est, "_psi_pieces", fake_pieces)
        report = estimate_zeta_l(data, spec_for("zeta_l"))
        assert report.point == captured["expected"]
        assert report.diagnostics["dropped_folds"] == []

    def test_back_transform_inside_unit_interval(self):
        data = simulate(150, seed=53, effect=1.2)
        report = estimate_zeta_l(data, spec_for("zeta_l"))
        assert 0.0 < report.psi_point < 1.0
        assert 0.0 < report.psi_ci[0] <= report.psi_ci[1] < 1.0
        assert report.psi_ci[0] <= report.psi_point <= report.psi_ci[1]
        assert report.statistic is not None and 0.0 <= report.p_value <= 1.0

    def test_unusable_fold_dropped_with_warning(self, monkeypatch):
        data = simulate(120, seed=59, effect=1.2)
        real_crossfit = est._crossfit

        def degrade_first(ds, spec, **kw):
            run = real_crossfit(ds, spec, **kw)
            fit = run.fold_fits[0]
            # zero projection residual forces the plug-in share to 0
            fit.tau_l_train = fit.tau_train.copy()
            return run

        monkeypatch.setattr(est, "_crossfit", degrade_first)
        report = estimate_zeta_l(data, spec_for("zeta_l"))
        assert report.diagnostics["dropped_folds"] == [1]
        assert report.folds[0]["estimate"] is None
        assert any("dropped" in w for w in report.diagnostics["learner_warnings"])
        assert report.point == report.folds[1]["estimate"]

    def test_all_folds_dropped_raises(self, monkeypatch):
        data = simulate(120, seed=59, effect=1.2)
        real_crossfit = est._crossfit

        def degrade_all(ds, spec, **kw):
            run = real_crossfit(ds, spec, **kw)
            for fit in run.fold_fits:
                fit.tau_l_train = fit.tau_train.copy()
            return run

        monkeypatch.setattr(est, "_crossfit", degrade_all)
        with pytest.raises(DegenerateTargetError, match="more than half"):
            estimate_zeta_l(data, spec_for("zeta_l"))


class TestProjectionTargets:
    def test_omega_coherent_with_gamma_and_chi(self):
        data = simulate(150, seed=61, effect=1.2)
        r_g = estimate_gamma_chi_omega(data, spec_for("gamma_j"))
        r_c = estimate_gamma_chi_omega(data, spec_for("chi_j"))
        r_o = estimate_gamma_chi_omega(data, spec_for("omega_j"))
        assert r_o.point == r_g.point / r_c.point
        assert r_o.statistic == r_o.point / r_o.se
        assert r_o.p_value == math.erfc(abs(r_o.statistic) / math.sqrt(2.0))
        assert r_g.statistic is None and r_c.statistic is None

    def test_perfect_conditional_mean_recovers_marginal_second_moment(
        self, monkeypatch
    ):
        data = simulate(2000, seed=67, effect=1.0, d=2)

        class Zero:
            def predict(self, x):
                x = np.atleast_2d(np.asarray(x, dtype=float))
                return np.zeros(x.shape[0])

        monkeypatch.setattr(est, "fit_covariate_mean", lambda *a, **k: Zero())
        report = estimate_gamma_chi_omega(data, spec_for("chi_j"))
        expected = float(np.mean(data.covariates[:, 1] ** 2))
        assert report.point == pytest.approx(expected, rel=1e-12)
        assert abs(report.point - 1.0) < 0.08

    def test_collinear_covariate_raises(self, monkeypatch):
        data = simulate(100, seed=71)

        class Copy:
            def predict(self, x):
                x = np.atleast_2d(np.asarray(x, dtype=float))
                # reproduce X_2 from X_1 exactly (fixture wiring below)
                return x[:, 0]

        monkeypatch.setattr(est, "fit_covariate_mean", lambda *a, **k: Copy())
        rigged = SurvivalDataset(
            time=data.time,
            event=data.event,
            treatment=data.treatment,
            covariates=np.column_stack([data.covariates[:, 0]] * 2),
        )
        with pytest.raises(DegenerateTargetError, match="collinear"):
            estimate_gamma_chi_omega(rigged, spec_for("omega_j"))


class TestReports:
    def test_json_shape_and_ci_arithmetic(self):
        data = simulate(120, seed=73, effect=1.2)
        report = estimate_theta_l(data, spec_for("theta_l"))
        payload = json.loads(report.to_json())
        assert set(payload) == {
            "target", "subset", "point", "se", "ci", "statistic", "p_value",
            "folds", "diagnostics", "psi_point", "psi_ci",
        }
        assert payload["target"] == "theta_l"
        assert payload["subset"] == [2]
        assert payload["ci"] == [
            report.point - 1.96 * report.se,
            report.point + 1.96 * report.se,
        ]
        assert payload["statistic"] is None and payload["p_value"] is None
        assert payload["psi_point"] is None and payload["psi_ci"] is None
        assert set(payload["diagnostics"]) == {
            "truncated_weights", "dropped_folds", "learner_warnings",
        }
        assert [f["fold"] for f in payload["folds"]] == [1, 2]
        assert sum(f["n"] for f in payload["folds"]) == 120

    def test_dispatch_covers_every_kind(self):
        data = simulate(100, seed=79, effect=1.2)
        for kind in ("theta_l", "theta_d", "psi_l", "zeta_l",
                     "gamma_j", "chi_j", "omega_j"):
            report = estimate(data, spec_for(kind))
            assert isinstance(report, EstimateReport)
            assert report.target == kind
            assert math.isfinite(report.point) and report.se >= 0.0

    def test_phi_table_carried_for_diagnostics(self):
        data = simulate(80, seed=83, effect=1.2)
        report = estimate_theta_l(data, spec_for("theta_l"))
        table = report.phi_table
        assert set(table) >= {"index", "fold", "phi", "phi1", "phi0", "tau", "tau_l"}
        assert all(len(np.asarray(v)) == 80 for v in table.values())


class TestSharePair:
    def test_matches_single_target_runs(self):
        import dataclasses

        data = simulate(240, seed=31)
        spec = spec_for("psi_l")
        pair_psi, pair_zeta = estimate_share_pair(data, spec)
        assert pair_psi.to_json() == estimate_psi_l(data, spec).to_json()
        zeta_spec = dataclasses.replace(spec, kind="zeta_l")
        assert pair_zeta.to_json() == estimate_zeta_l(data, zeta_spec).to_json()

    def test_rejects_other_kinds(self):
        with pytest.raises(DataError):
            estimate_share_pair(simulate(120, seed=1), spec_for("gamma_j"))


class TestScaling:
    def test_se_shrinks_like_root_n(self):
        # heterogeneity in the dropped covariate keeps the target away from 0,
        # and the event design must be rich enough to pick that signal up
        stack = small_stack()
        rich = LearnerStack(
            event_model=LearnerSpec(
                "cox-breslow",
                {"covariates": [1, 2], "treatment": True, "interactions": [1, 2]},
            ),
            censoring_model=stack.censoring_model,
            propensity_model=stack.propensity_model,
            tau_l_regressor=stack.tau_l_regressor,
            xj_regressor=stack.xj_regressor,
        )
        ses = {}
        for n in (400, 800):
            vals = []
            for seed in (89, 97, 101):
                data = simulate(n, seed=seed, effect=0.8, effect2=0.8)
                spec = spec_for("theta_l", folds=5, learners=rich)
                vals.append(estimate_theta_l(data, spec).se)
            ses[n] = np.mean(vals)
        ratio = ses[800] / ses[400]
        assert abs(ratio - 1.0 / math.sqrt(2.0)) < 0.15 / math.sqrt(2.0)
