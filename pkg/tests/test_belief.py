import numpy as np
import pytest

from conftest import pfs, random_mass, small_scope
import algebra_checks
from oracles import brute_q
from dsfactor.belief import (
    CommonalityTable,
    MassFunction,
    RemovalError,
    bel_of,
    classify,
    combine,
    combine_q,
    condition,
    extend,
    marginalize,
    mass_from_q,
    max_abs_difference,
    pl_of,
    q_of,
    q_table,
    remove,
    vacuous,
    verify_eq4,
)
from dsfactor.frames import FrameError, ProductFocalSet, Scope, Variable

THETA = Scope.of(Variable("T", ("x1", "x2")))


def two_focal_pair():
    x1 = ProductFocalSet(THETA, [{"x1"}])
    x2 = ProductFocalSet(THETA, [{"x2"}])
    full = THETA.full_set()
    m1 = MassFunction(THETA, {x1: 0.6, full: 0.4})
    m2 = MassFunction(THETA, {x2: 0.5, full: 0.5})
    return m1, m2, x1, x2, full


class TestClassify:
    def test_fixture(self, fixture_model):
        c = classify(fixture_model)
        assert c.proper and c.normal and not c.positive_normal and not c.zero

    def test_vacuous(self, fixture_scope):
        c = classify(vacuous(fixture_scope))
        assert c.proper and c.normal and c.positive_normal

    def test_conditional_is_pseudo(self, fixture_model):
        assert not classify(condition(fixture_model, ["Z"])).proper

    def test_zero(self, fixture_scope):
        c = classify(MassFunction(fixture_scope, {}))
        assert c.zero and not c.normal


class TestMeasures:
    def test_q_of_singleton(self, fixture_model, fixture_scope):
        # rows 1 and 5 contain (p, r, b)
        assert q_of(fixture_model, pfs(fixture_scope, "p", "r", "b")) == pytest.approx(0.175, abs=1e-15)

    def test_bel_of_full_frame(self, fixture_model, fixture_scope):
        assert bel_of(fixture_model, fixture_scope.full_set()) == pytest.approx(1.0, abs=1e-15)

    def test_pl_of_x_is_p(self, fixture_model, fixture_scope):
        assert pl_of(fixture_model, pfs(fixture_scope, "p", "rst", "abc")) == pytest.approx(0.35, abs=1e-15)

    def test_empty_argument(self, fixture_model):
        with pytest.raises(FrameError):
            q_of(fixture_model, None)

    def test_scope_mismatch(self, fixture_model, fixture_scope):
        with pytest.raises(FrameError):
            bel_of(fixture_model, pfs(fixture_scope.sub("Z"), "a"))


class TestQTable:
    def test_vacuous_is_all_ones(self):
        scope = small_scope("AB", (2, 2))
        q = q_table(vacuous(scope))
        assert np.all(q.values[1:] == 1.0)

    def test_z_marginal_b(self, fixture_model, fixture_scope):
        zq = q_table(marginalize(fixture_model, ["Z"]))
        assert zq[pfs(fixture_scope.sub("Z"), "b")] == pytest.approx(1.0, abs=1e-15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        scope = small_scope("AB", (2, 2))
        for _ in range(20):
            m = random_mass(rng, scope, explicit=True)
            q = q_table(m)
            for mask in range(1, 16):
                assert q.values[mask] == pytest.approx(brute_q(m, mask), abs=1e-14)

    def test_antitone_for_proper(self):
        rng = np.random.default_rng(4)
        scope = small_scope("AB", (2, 2))
        m = random_mass(rng, scope, explicit=True)
        q = q_table(m).values
        for a in range(1, 16):
            for b in range(1, 16):
                if a & ~b == 0:
                    assert q[a] >= q[b] - 1e-15

    def test_full_frame_value_is_its_mass(self, fixture_model, fixture_scope):
        m = combine(fixture_model, MassFunction(fixture_scope, {fixture_scope.full_set(): 1.0}))
        q = q_table(m)
        assert q.values[fixture_scope.full_mask] == m[fixture_scope.full_set()]


class TestMoebius:
    def test_vacuous_inverse(self):
        scope = small_scope("AB", (2, 2))
        q = CommonalityTable(scope, np.ones(16))
        assert mass_from_q(q) == vacuous(scope)

    def test_fixture_roundtrip(self, fixture_model):
        back = mass_from_q(q_table(fixture_model))
        assert max_abs_difference(back, fixture_model) <= 1e-10
        assert set(back) == set(fixture_model)

    def test_self_removal_is_identity_for_q(self, fixture_model):
        # Q vanishes on {a,c} and {a,b,c}, so q ⊖ q is an identity for q, not the vacuous one
        qz = q_table(marginalize(fixture_model, ["Z"]))
        ident = remove(qz, qz)
        assert np.allclose(combine_q(qz, ident).values[1:], qz.values[1:], atol=1e-12)

    def test_self_removal_of_positive_normal_is_vacuous(self, fixture_model):
        m = marginalize(fixture_model, ["Z"])
        masses = {k: 0.5 * v for k, v in m.items()}
        masses[m.scope.full_set()] = 0.5
        qz = q_table(MassFunction(m.scope, masses))
        out = mass_from_q(remove(qz, qz))
        assert max_abs_difference(out, vacuous(qz.scope)) <= 1e-12

    def test_negative_masses_survive(self):
        scope = small_scope("A", (2,))
        a0 = ProductFocalSet(scope, [{"a0"}])
        m = MassFunction(scope, {a0: 1.2, scope.full_set(): -0.2})
        back = mass_from_q(q_table(m))
        assert back[scope.full_set()] == pytest.approx(-0.2)
        assert not classify(back).proper


class TestCombine:
    def test_vacuous_identity(self, fixture_model, fixture_scope):
        out = combine(fixture_model, vacuous(fixture_scope))
        assert max_abs_difference(out, fixture_model) == 0.0

    def test_two_focal_example(self):
        m1, m2, x1, x2, full = two_focal_pair()
        out = combine(m1, m2)
        assert out[x1] == pytest.approx(3 / 7, abs=1e-15)
        assert out[x2] == pytest.approx(2 / 7, abs=1e-15)
        assert out[full] == pytest.approx(2 / 7, abs=1e-15)

    def test_total_conflict_is_zero_valuation(self):
        x1 = ProductFocalSet(THETA, [{"x1"}])
        x2 = ProductFocalSet(THETA, [{"x2"}])
        out = combine(MassFunction(THETA, {x1: 1.0}), MassFunction(THETA, {x2: 1.0}))
        assert classify(out).zero

    def test_different_scopes_extend(self, fixture_model, fixture_scope):
        mz = marginalize(fixture_model, ["Z"])
        mxy = marginalize(fixture_model, ["X", "Y"])
        out = combine(mxy, mz)
        assert out.scope == fixture_scope
        assert classify(out).normal

    def test_q_domain_example(self):
        m1, m2, x1, *_ = two_focal_pair()
        q = combine_q(q_table(m1), q_table(m2))
        assert q[x1] == pytest.approx(5 / 7, abs=1e-15)

    def test_q_domain_vacuous(self):
        rng = np.random.default_rng(5)
        scope = small_scope("AB", (2, 2))
        m = random_mass(rng, scope)
        q = combine_q(q_table(vacuous(scope)), q_table(m))
        assert np.allclose(q.values[1:], q_table(m).values[1:], atol=1e-14)


class TestMarginalize:
    def test_to_z(self, fixture_model, fixture_scope):
        z = fixture_scope.sub("Z")
        out = marginalize(fixture_model, ["Z"])
        assert len(out) == 3
        assert out[pfs(z, "ab")] == pytest.approx(0.350, abs=1e-15)
        assert out[pfs(z, "bc")] == pytest.approx(0.44375, abs=1e-15)
        assert out[pfs(z, "b")] == pytest.approx(0.20625, abs=1e-15)

    def test_to_xz(self, fixture_model, fixture_scope):
        xz = fixture_scope.sub("XZ")
        out = marginalize(fixture_model, ["X", "Z"])
        expected = {
            ("p", "ab"): 0.200,
            ("q", "ab"): 0.150,
            ("p", "bc"): 0.075,
            ("q", "bc"): 0.36875,
            ("p", "b"): 0.075,
            ("q", "b"): 0.13125,
        }
        assert len(out) == len(expected)
        for parts, value in expected.items():
            assert out[pfs(xz, *parts)] == pytest.approx(value, abs=1e-15)

    def test_full_scope_identity(self, fixture_model, fixture_scope):
        assert marginalize(fixture_model, fixture_scope.names) == fixture_model


class TestRemoveAndCondition:
    def test_cr_axiom(self):
        rng = np.random.default_rng(6)
        scope = small_scope("AB", (3, 1))
        for _ in range(20):
            m1 = random_mass(rng, scope, explicit=True)
            m2 = random_mass(rng, scope, explicit=True)
            # a full-frame focal set keeps q2 nonzero everywhere
            m2 = MassFunction(scope, {**{k: 0.5 * v for k, v in m2.items()}, scope.full_set(): 0.5 + 0.5 * m2[scope.full_set()]})
            q1, q2 = q_table(m1), q_table(m2)
            back = combine_q(remove(q1, q2), q2)
            assert np.allclose(back.values[1:], q1.values[1:], atol=1e-10)

    def test_cr_axiom_where_divisor_vanishes(self):
        rng = np.random.default_rng(16)
        scope = small_scope("AB", (3, 1))
        for _ in range(20):
            q1 = q_table(random_mass(rng, scope, explicit=True))
            q2 = q_table(random_mass(rng, scope, explicit=True))
            both = (q1.values != 0) & (q2.values != 0)
            both[0] = False
            if not both.any():
                continue
            back = combine_q(remove(q1, q2), q2)
            scale = back.values[both] / q1.values[both]
            assert np.allclose(scale, scale[0], rtol=1e-10)
            assert np.all(back.values[1:][~both[1:]] == 0)

    def test_xz_conditional_on_z_is_pseudo(self, fixture_model):
        mxz = marginalize(fixture_model, ["X", "Z"])
        out = condition(mxz, ["Z"])
        assert min(v for _, v in out.items()) < 0
        assert classify(out).normal

    def test_condition_vacuous(self, fixture_scope):
        out = condition(vacuous(fixture_scope), ["Z"])
        assert max_abs_difference(out, vacuous(fixture_scope)) <= 1e-12

    def test_condition_fixture_on_z_is_pseudo(self, fixture_model):
        assert not classify(condition(fixture_model, ["Z"])).proper

    def test_reconstruction(self):
        rng = np.random.default_rng(7)
        scope = small_scope("AB", (2, 2))
        checked = 0
        while checked < 20:
            m = random_mass(rng, scope, explicit=True)
            marginal = marginalize(m, ["A"])
            if not classify(marginal).positive_normal:
                continue
            out = combine(condition(m, ["A"]), marginal)
            assert max_abs_difference(out, m) <= 1e-9
            checked += 1

    def test_removal_without_support(self):
        scope = small_scope("A", (2,))
        a0 = ProductFocalSet(scope, [{"a0"}])
        a1 = ProductFocalSet(scope, [{"a1"}])
        with pytest.raises(RemovalError):
            remove(q_table(MassFunction(scope, {a0: 1.0})), q_table(MassFunction(scope, {a1: 1.0})))


class TestDecomposition:
    def test_fixture_holds(self, fixture_model):
        res = verify_eq4(fixture_model, ["X"], ["Y"], ["Z"], tol=1e-6)
        assert res.holds
        assert res.max_abs_deviation <= 1e-6
        assert res.route_deviation <= 1e-9

    def test_independent_product_with_vacuous_v(self):
        rng = np.random.default_rng(8)
        scope = small_scope("ABC", (2, 2, 2))
        ma = random_mass(rng, scope.sub("A"))
        mb = random_mass(rng, scope.sub("B"))
        m = extend(combine(ma, mb), scope)
        assert verify_eq4(m, ["A"], ["B"], ["C"], tol=1e-9).holds

    def test_perturbed_fixture_fails(self, fixture_model, fixture_scope):
        masses = dict(fixture_model.items())
        masses[pfs(fixture_scope, "p", "r", "ab")] = 0.260
        total = sum(masses.values())
        perturbed = MassFunction(fixture_scope, {k: v / total for k, v in masses.items()})
        res = verify_eq4(perturbed, ["X"], ["Y"], ["Z"], tol=1e-6)
        assert not res.holds
        assert res.route_deviation <= 1e-9

    def test_bad_partition(self, fixture_model):
        with pytest.raises(FrameError):
            verify_eq4(fixture_model, ["X"], ["Y"], ["X"])


class TestAlgebraProperties:
    def test_commutative(self):
        assert algebra_checks.check_commutativity(n=60) <= 1e-10

    def test_associative(self):
        assert algebra_checks.check_associativity(n=60) <= 1e-10

    def test_cm1(self):
        assert algebra_checks.check_cm1(n=60) <= 1e-10

    def test_marginal_order_and_total_exact(self):
        assert algebra_checks.check_marginal_order(n=60) == 0

    def test_moebius_roundtrips(self):
        assert algebra_checks.check_moebius_roundtrips(n=60) <= 1e-10

    def test_combine_q_consistency(self):
        assert algebra_checks.check_combine_q(n=60) <= 1e-10

    def test_q_antitone_for_proper(self):
        rng = np.random.default_rng(11)
        scope = algebra_checks.SCOPE
        for _ in range(30):
            q = q_table(random_mass(rng, scope, explicit=True)).values
            for a in range(1, len(q)):
                for bit in range(scope.size):
                    assert q[a] >= q[a | (1 << bit)] - 1e-15
