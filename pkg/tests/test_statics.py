import math

import numpy as np
import pytest

from helpers import star_in, zigzag, line_instance, random_instances, two_component
from netcontract.errors import ConsistencyError, ModelValidationError, PropertyViolation
from netcontract.model import build_instance
from netcontract import statics
from netcontract.statics import (
    classify,
    classify_link_effect,
    da_dbeta,
    da_dg,
    da_dparam,
    derivative_reports,
    dm_dbeta,
    dm_dg,
    dprofit,
    dv_dbeta,
    dv_dg,
    dv_dparam,
    fd_derivative,
    kappa_forms,
    marginal_effect,
    predict_beta_effect,
)


class TestFd:
    def test_quadratic_exact(self):
        assert fd_derivative(lambda x: x * x, 3.0) == pytest.approx(6.0, abs=1e-9)

    def test_exp(self):
        assert fd_derivative(math.exp, 0.0, 1e-5) == pytest.approx(1.0, abs=2e-11)

    def test_vector_and_bad_step(self):
        np.testing.assert_allclose(fd_derivative(lambda x: np.array([x, x**2]), 2.0), [1.0, 4.0])
        with pytest.raises(ValueError):
            fd_derivative(math.exp, 0.0, 0.0)

    def test_classify(self):
        assert classify([0.0, 1e-13, 5e-10, 1e-3, -1e-3, -5e-10]) == (
            "zero", "zero", "weak_increase", "strict_increase", "strict_decrease", "weak_decrease",
        )


class TestLinkDerivatives:
    def test_empty_alpha_term(self):
        inst = build_instance(np.zeros((3, 3)), beta=0.3, cost=1.0)
        rep = dv_dg(inst, 0, 2)
        # W = I, so dv = d(alpha)/(1 + c eta sigma2) with d(alpha)_j = lambda
        np.testing.assert_allclose(rep.analytic, [0, 0, 0.3 / 2], atol=1e-15)

    def test_star_in_fd(self):
        for i, j in [(0, 1), (1, 0), (0, 2), (2, 1)]:
            rv, ra = derivative_reports(star_in(), (i, j))
            assert rv.max_rel_err <= 1e-6 and ra.max_rel_err <= 1e-6

    def test_star_in_efforts_all_rise(self):
        assert da_dg(star_in(), "1", "2").sign_class == ("strict_increase",) * 3

    def test_zigzag_link_21(self):
        rep = dv_dg(zigzag(), "2", "1")
        assert [rep.sign_class[k] for k in (0, 2, 4)] == ["strict_increase"] * 3
        assert rep.analytic[1] == 0.0 and rep.analytic[3] == 0.0

    def test_other_component_zero(self):
        g = np.zeros((5, 5))
        g[0, 1] = g[2, 1] = 1.0
        g[3, 4] = g[4, 3] = 0.6
        inst = build_instance(g, beta=0.5, cost=1.0)
        rv, ra = derivative_reports(inst, (0, 1))
        assert np.all(rv.analytic[3:] == 0.0) and np.all(ra.analytic[3:] == 0.0)

    def test_dm_dg_fd(self):
        for inst in random_instances(41, 20):
            i, j = 0, 1
            g0 = inst.g[i, j]

            def m_of(x):
                g = inst.g.copy()
                g[i, j] = x
                return np.linalg.inv(np.eye(inst.n) - inst.beta / inst.c * g)

            np.testing.assert_allclose(dm_dg(inst, i, j), fd_derivative(m_of, g0), atol=1e-6)
            m_b = lambda b: np.linalg.inv(np.eye(inst.n) - b / inst.c * inst.g)  # noqa: E731
            np.testing.assert_allclose(dm_dbeta(inst), fd_derivative(m_b, inst.beta), atol=1e-6)

    def test_weak_monotonicity_random(self):
        rng = np.random.default_rng(42)
        for inst in random_instances(42, 40):
            i, j = rng.choice(inst.n, 2, replace=False)
            rv, ra = derivative_reports(inst, (int(i), int(j)))
            assert np.all(rv.analytic >= -1e-12) and np.all(ra.analytic >= -1e-12)
            assert rv.max_rel_err <= 1e-5 and ra.max_rel_err <= 1e-5

    def test_block_zero(self):
        rng = np.random.default_rng(43)
        for _ in range(15):
            inst, first, second = two_component(rng)
            i, j = rng.choice(first, 2, replace=False)
            for rep in derivative_reports(inst, (int(i), int(j))):
                assert np.all(np.abs(rep.analytic[second]) <= 1e-12)

    def test_self_loop_rejected(self):
        with pytest.raises(ModelValidationError):
            dv_dg(star_in(), 1, 1)


class TestParameterDerivatives:
    def test_empty_cost_and_variance(self):
        inst = build_instance(np.zeros((2, 2)), beta=0.3, cost=1.0)
        np.testing.assert_allclose(dv_dparam(inst, "cost").analytic, [-0.25, -0.25], atol=1e-15)
        np.testing.assert_allclose(dv_dparam(inst, "sigma2").analytic, [-0.25, -0.25], atol=1e-15)
        np.testing.assert_allclose(dv_dparam(inst, "eta").analytic, [-0.25, -0.25], atol=1e-15)
        # a = v / c, so da/dc = v'/c - v/c^2 = -0.25 - 0.5
        np.testing.assert_allclose(da_dparam(inst, "cost").analytic, [-0.75, -0.75], atol=1e-15)

    def test_star_in_eta(self):
        rep = dv_dparam(star_in(), "eta")
        assert np.all(rep.analytic < 0) and rep.max_rel_err <= 1e-5

    def test_star_in_beta(self):
        inst = star_in(beta=0.3)
        rv, ra = dv_dbeta(inst), da_dbeta(inst)
        assert rv.max_rel_err <= 1e-5 and ra.max_rel_err <= 1e-5
        assert np.all(ra.analytic > 1e-9)
        # only agent 2 is linked to; 1 and 3 only link out, so their pay stays at the baseline
        assert rv.sign_class == ("zero", "strict_increase", "zero")

    def test_isolated_beta(self):
        inst = build_instance(np.zeros((3, 3)), beta=0.2, cost=1.0)
        assert np.all(dv_dbeta(inst).analytic == 0.0) and np.all(da_dbeta(inst).analytic == 0.0)

    def test_directions_random(self):
        for inst in random_instances(44, 30):
            for which in ("cost", "eta", "sigma2"):
                rv, ra = derivative_reports(inst, which)
                assert np.all(rv.analytic <= 1e-12) and np.all(ra.analytic <= 1e-12)
                assert rv.max_rel_err <= 1e-5 and ra.max_rel_err <= 1e-5
            rv, ra = derivative_reports(inst, "beta")
            pv, pa = predict_beta_effect(inst.network)
            assert rv.sign_class == pv and ra.sign_class == pa

    def test_unknown_parameter(self):
        with pytest.raises(ModelValidationError):
            dv_dparam(star_in(), "beta")
        with pytest.raises(ModelValidationError):
            derivative_reports(star_in(), "colour")

    def test_heterogeneous_is_fd_only(self):
        rv, ra = derivative_reports(line_instance(0.1), "beta")
        assert rv.method == "fd-only" and rv.analytic is None and rv.max_rel_err is None
        assert ra.fd.shape == (3,)
        with pytest.raises(ModelValidationError):
            derivative_reports(line_instance(0.1), "cost")

    def test_mismatch_raises(self, monkeypatch):
        real = statics._d_beta
        monkeypatch.setattr(statics, "_d_beta", lambda p: tuple(1.01 * x + 0.1 for x in real(p)))
        with pytest.raises(ConsistencyError):
            dv_dbeta(star_in(beta=0.3))

    def test_profit_slope(self):
        rep = dprofit(star_in(beta=0.3), "beta")
        assert rep.target == "profit" and rep.method == "fd-only" and rep.fd[0] > 0

    def test_report_dict(self):
        d = dv_dg(star_in(), "1", "2").to_dict(["1", "2", "3"])
        assert d["parameter"] == "g:1:2" and d["method"] == "analytic"


class TestMarginalEffect:
    def test_unit_cost(self):
        me = marginal_effect(star_in(beta=0.0))
        assert me.kappa == pytest.approx(0.5, abs=1e-15)
        assert me.analytic_slope == pytest.approx(1.0)
        assert abs(me.fd_slope - 1.0) <= 1e-6 and me.fd_agrees

    def test_kappa_at_c2(self):
        k, k_app, _ = kappa_forms(2.0, 1.0, 1.0)
        assert k == pytest.approx(17 / 96, abs=1e-15) and k_app == pytest.approx(17 / 96, abs=1e-15)

    def test_forms_agree_on_grid(self):
        for c in (0.5, 1.0, 1.5, 2.0, 3.0):
            for eta in (0.5, 1.0, 2.0):
                for s2 in (0.25, 1.0, 4.0):
                    k, k_app, _ = kappa_forms(c, eta, s2)
                    assert abs(k - k_app) <= 1e-12 * max(1.0, abs(k))

    def test_empty_slope(self):
        me = marginal_effect(build_instance(np.zeros((3, 3)), beta=0.0, cost=2.0))
        assert me.analytic_slope == 0.0 and abs(me.fd_slope) <= 1e-9

    def test_envelope_value_matches_fd(self):
        # the slope that finite differences actually see is v0 / c^2 per unit of link weight
        for inst in random_instances(45, 30):
            me = marginal_effect(inst.replace(beta=0.0))
            assert me.envelope_fd_agrees
            assert me.envelope_slope == pytest.approx(me.fd_slope, rel=1e-6, abs=1e-9)

    def test_closed_form_off_unless_unit_cost(self):
        me = marginal_effect(star_in(beta=0.0, cost=2.0))
        assert me.kappa_envelope == pytest.approx(1 / 12)
        assert not me.fd_agrees and me.envelope_fd_agrees


class TestClassification:
    def test_in_link_matters(self):
        # k -> i present: raising g_ij raises i's pay
        g = np.zeros((3, 3))
        g[2, 0] = g[0, 1] = 1.0
        eff = classify_link_effect(build_instance(g, beta=0.4, cost=1.0), 0, 1)
        assert eff.numeric_v[0] == "strict_increase"
        # i -> k instead: i has no in-link, its pay does not move
        g = np.zeros((3, 3))
        g[0, 2] = g[0, 1] = 1.0
        eff = classify_link_effect(build_instance(g, beta=0.4, cost=1.0), 0, 1)
        assert eff.numeric_v[0] == "zero" and eff.numeric_a[0] == "strict_increase"

    def test_other_component(self):
        g = np.zeros((4, 4))
        g[0, 1] = 1.0
        g[2, 3] = 1.0
        eff = classify_link_effect(build_instance(g, beta=0.4, cost=1.0), 0, 1)
        assert eff.predicted_v[2:] == ("zero", "zero") and eff.numeric_a[2:] == ("zero", "zero")

    def test_new_link_connects(self):
        # g_ij starts at zero: the link being raised defines the component
        g = np.zeros((4, 4))
        g[2, 3] = 1.0
        eff = classify_link_effect(build_instance(g, beta=0.4, cost=1.0), 1, 2)
        assert eff.numeric_a == ("zero", "strict_increase", "strict_increase", "strict_increase")

    def test_violation_raised(self, monkeypatch):
        monkeypatch.setattr(statics, "predict_link_effect", lambda net, i, j: (("zero",) * net.n,) * 2)
        with pytest.raises(PropertyViolation):
            classify_link_effect(star_in(), 0, 1)
        assert classify_link_effect(star_in(), 0, 1, strict=False).mismatches
