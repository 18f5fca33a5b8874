import numpy as np
import pytest

from pbql.env import observational_conditionals, random_environment, validate_spec
from pbql.errors import DomainError, InfeasibleObservation, NonConvergence
from pbql.oracles import (audit_table, bound_certificate, bound_fixed_points, confounded_q,
                          enumerate_cell, enumerate_compatible_scms, fixed_confounder_q,
                          interventional_tables, natural_bounds_closed_form, optimal_q,
                          value_iteration)
from reference import best_q_by_policy_enumeration, interventional_by_loops, observational_by_loops


def test_optimal_q_x0_entries(env):
    q = optimal_q(env).values
    assert q[0, 0] == pytest.approx(5.219, abs=1e-3)
    assert q[1, 0] == pytest.approx(5.406, abs=1e-3)


def test_optimal_q_matches_policy_enumeration(env):
    r, P = interventional_by_loops(env)
    ref = best_q_by_policy_enumeration(r, P, 0.9)
    np.testing.assert_allclose(optimal_q(env).values, ref, atol=1e-9)
    # frozen from the reference: 0.25 + 0.9 * (0.875 * 5.21875 + 0.125 * 5.40625)
    np.testing.assert_allclose(ref[:, 1], 4.96796875, atol=1e-9)


def test_myopic_limit(env):
    q = optimal_q(env, gamma=0.0).values
    np.testing.assert_allclose(q, np.einsum("u,usx->sx", env.p_u, env.reward))


def test_optimal_q_is_fixed_point(env):
    qt = optimal_q(env, tol=1e-12)
    r, P = interventional_tables(env)
    backup = r + 0.9 * P @ qt.values.max(axis=1)
    assert np.abs(backup - qt.values).max() <= 1e-11


def test_nonconvergence(env):
    r, P = interventional_tables(env)
    with pytest.raises(NonConvergence):
        value_iteration(r, P, 0.9, tol=1e-12, max_iter=5)
    with pytest.raises(DomainError):
        value_iteration(r, P, 0.9, tol=0)


def test_confounded_q(env):
    q = confounded_q(env, 0.9).values
    # q(s,1) solves q = 0.25/0.325 + 0.9 q
    np.testing.assert_allclose(q[:, 1], (0.25 / 0.325) / 0.1, atol=1e-8)
    np.testing.assert_allclose(q[:, 0], [0.25 + 0.9 * q[0, 1], 0.5 + 0.9 * q[0, 1]], atol=1e-8)
    np.testing.assert_allclose(q, [[7.17, 7.69], [7.42, 7.69]], atol=5e-3)
    p_x, p_yx, p_next = observational_by_loops(env)
    np.testing.assert_allclose(q, best_q_by_policy_enumeration(p_yx / p_x, p_next, 0.9), atol=1e-8)


def test_confounded_q_vs_reported_vanilla_table(env):
    reported = np.array([[7.206, 7.637], [7.466, 7.703]])
    assert np.abs(confounded_q(env, 0.9).values - reported).max() <= 0.2


def test_confounded_over_predicts(env):
    assert np.all(confounded_q(env, 0.9).values >= optimal_q(env).values)


def test_unconfounded_confounded_equals_optimal(unconfounded_env):
    np.testing.assert_allclose(confounded_q(unconfounded_env, 0.9).values,
                               optimal_q(unconfounded_env).values, atol=1e-8)


def test_natural_bounds(env):
    a, b = natural_bounds_closed_form(env)
    np.testing.assert_allclose(a, [[0.16875, 0.25], [0.3375, 0.25]], atol=1e-12)
    np.testing.assert_allclose(b, [[0.49375, 0.925], [0.6625, 0.925]], atol=1e-12)


def test_zero_width_when_action_certain(unconfounded_env):
    from conftest import unconfounded_spec
    e = validate_spec(unconfounded_spec(behavior_x1=1.0))
    a, b = natural_bounds_closed_form(e)
    np.testing.assert_allclose(a[:, 1], b[:, 1])
    np.testing.assert_allclose(a[:, 1], e.reward[0][:, 1])


def test_bounds_contain_truth_random_envs():
    for seed in range(100):
        e = random_environment(seed)
        a, b = natural_bounds_closed_form(e)
        truth, _ = interventional_tables(e)
        assert np.all(a <= truth + 1e-12) and np.all(truth <= b + 1e-12)


def test_bound_fixed_points(env):
    lo, hi = bound_fixed_points(env, 0.9)
    np.testing.assert_allclose(hi[:, 1], 0.925 / 0.1, atol=1e-8)
    np.testing.assert_allclose(hi, [[8.82, 9.25], [8.99, 9.25]], atol=5e-3)
    np.testing.assert_allclose(lo, [[2.77, 2.84], [2.94, 2.84]], atol=5e-3)
    obs = observational_conditionals(env)
    a, b = natural_bounds_closed_form(obs)
    np.testing.assert_allclose(lo, best_q_by_policy_enumeration(a, obs.p_next_sx, 0.9), atol=1e-8)


def test_fixed_confounder_closed_form(env):
    q = fixed_confounder_q(env)
    np.testing.assert_allclose(q[:, 0], [5.21875, 5.40625], atol=1e-12)
    np.testing.assert_allclose(q[:, 1], 4.1875, atol=1e-12)


def test_audit_lists_alternatives(env):
    audit = audit_table(env)
    np.testing.assert_allclose(np.array(audit["uniform_next_state_backup"])[:, 1], 5.03125)


def test_enumeration_x1_sharp(env):
    ranges = enumerate_compatible_scms(env, grid=101)
    for s in range(2):
        r = ranges[(s, 1)]
        assert r.low == pytest.approx(0.25, abs=0.01)
        assert r.high == pytest.approx(0.925, abs=0.01)


def test_enumeration_refines(env):
    obs = observational_conditionals(env)
    a, b = natural_bounds_closed_form(obs)
    gaps = []
    for grid in (11, 41, 101):
        r = enumerate_cell(obs.p_x[0, 0], obs.p_yx[0, 0], grid)
        assert a[0, 0] - 1e-9 <= r.low and r.high <= b[0, 0] + 1e-9
        gaps.append((r.low - a[0, 0]) + (b[0, 0] - r.high))
    assert gaps[-1] <= gaps[0]
    assert gaps[-1] <= 2 / 100


def test_witness_pair_reproduces_observation(env):
    obs = observational_conditionals(env)
    r = enumerate_cell(obs.p_x[0, 1], obs.p_yx[0, 1], 101)
    for w in (r.witness_low, r.witness_high):
        assert w["observational"]["p_x"] == pytest.approx(0.325, abs=1e-9)
        assert w["observational"]["p_yx"] == pytest.approx(0.25, abs=1e-9)
    assert r.witness_high["interventional"] - r.witness_low["interventional"] > 0.6


def test_hand_witness_shift(env):
    # shift p(y=1|x=1,u=0) by +1 and p(y=1|x=1,u=1) by -0.3 under the env's own latent
    pu, px_u = env.p_u, env.behavior[:, 0, 1]
    q_true = env.reward[:, 0, 1]
    q_alt = q_true + np.array([1.0, -0.3])
    obs_true, obs_alt = (float(np.sum(pu * px_u * q)) for q in (q_true, q_alt))
    assert obs_true == pytest.approx(obs_alt, abs=1e-12)
    assert float(pu @ q_true) == pytest.approx(0.25)
    assert float(pu @ q_alt) == pytest.approx(0.925)
    # the fixed-latent enumeration reaches the same endpoints
    r = enumerate_cell(0.325, 0.25, 101, latent=(pu, px_u))
    assert (r.low, r.high) == pytest.approx((0.25, 0.925), abs=1e-9)


def test_unconfounded_range_width_zero():
    # p(x|s,u) identical across u and p(x|s) = 1: nothing left to vary
    r = enumerate_cell(1.0, 0.4, 101)
    assert r.width == pytest.approx(0.0, abs=1e-9)
    r = enumerate_cell(0.5, 0.2, 101, latent=([0.5, 0.5], [0.5, 0.5]))
    assert r.low <= 0.4 <= r.high


def test_infeasible_observation():
    with pytest.raises(InfeasibleObservation):
        enumerate_cell(0.3, 0.5, 21)  # p(y, x) cannot exceed p(x)


def test_certificate(env):
    cert = bound_certificate(env, 101)
    assert cert.truth_inside() and cert.ranges_inside() and cert.endpoints_sharp()
    assert len(cert.to_dict()["cells"]) == 4


def test_certificate_random_envs():
    for seed in range(10):
        cert = bound_certificate(random_environment(seed), 41)
        assert cert.truth_inside() and cert.ranges_inside()
