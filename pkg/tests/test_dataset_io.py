import json
from decimal import Decimal

import numpy as np
import pytest

from conftest import pfs, random_mass, small_scope
from dsfactor.belief import MassFunction, classify, max_abs_difference
from dsfactor.dataset_io import (
    DataError,
    PseudoModelError,
    RecordSet,
    decimal_masses,
    empirical_mass,
    generate_records,
    parse_model,
    parse_model_document,
    parse_records,
    serialize_model,
    serialize_records,
)
from dsfactor.frames import ExplicitSubset

FIXTURE_MASSES = ["0.160", "0.040", "0.120", "0.030", "0.015", "0.060", "0.07375", "0.295", "0.075", "0.13125"]

SMALL = """{
  "variables": [{"name": "X", "frame": ["p", "q"]}, {"name": "Y", "frame": ["r", "s"]}],
  "focals": [
    {"X": ["p"], "Y": ["r"], "mass": "0.6"},
    {"X": ["q"], "Y": ["r", "s"], "mass": %s}
  ]
}
"""


def tv_distance(m1, m2):
    keys = {k for k, _ in m1.items()} | {k for k, _ in m2.items()}
    return 0.5 * sum(abs(m1[k] - m2[k]) for k in keys)


class TestParseModel:
    def test_fixture(self, fixture_model):
        dec = decimal_masses(fixture_model)
        assert len(fixture_model) == 10
        assert sorted(dec.values()) == sorted(Decimal(s) for s in FIXTURE_MASSES)
        assert sum(dec.values()) == Decimal("1.000")
        cls = classify(fixture_model)
        assert cls.proper and cls.normal and not cls.positive_normal

    def test_duplicate(self):
        text = SMALL.replace('"Y": ["r", "s"]', '"Y": ["r"]').replace('"q"]', '"p"]', 1) % '"0.4"'
        with pytest.raises(DataError, match="duplicate"):
            parse_model(text)

    def test_negative_mass_loads(self):
        m = parse_model(SMALL.replace('"0.6"', '"1.1"') % '"-0.1"')
        assert not classify(m).proper
        assert classify(m).normal

    @pytest.mark.parametrize(
        "bad",
        [
            SMALL % '"abc"',
            SMALL % '"0.4"'.replace("0.4", "NaN"),
            SMALL.replace('"Y": ["r", "s"], "mass"', '"Y": ["r", "zz"], "mass"') % '"0.4"',
            SMALL.replace('"Y": ["r", "s"], "mass"', '"Y": [], "mass"') % '"0.4"',
            "{not json",
        ],
    )
    def test_errors(self, bad):
        with pytest.raises(DataError):
            parse_model(bad)

    def test_number_masses_accepted(self):
        m = parse_model(SMALL % "0.4")
        assert decimal_masses(m) == {k: Decimal(v) for k, v in zip([k for k, _ in m.items()], ["0.6", "0.4"])}

    def test_impossible_section(self):
        doc = json.loads(SMALL % '"0.4"')
        doc["impossible"] = [{"X": ["p"], "Y": ["s"]}]
        _, impossible = parse_model_document(json.dumps(doc))
        assert impossible == ({"X": ("p",), "Y": ("s",)},)


class TestModelRoundtrip:
    def test_fixture_text_preserved(self, fixture_model):
        again = parse_model(serialize_model(fixture_model))
        assert again == fixture_model
        assert decimal_masses(again) == decimal_masses(fixture_model)
        doc = json.loads(serialize_model(fixture_model))
        assert [f["mass"] for f in doc["focals"]].count("0.07375") == 1

    def test_random_models(self):
        rng = np.random.default_rng(0)
        scope = small_scope("AB", (2, 3))
        for _ in range(20):
            m = random_mass(rng, scope, explicit=bool(rng.integers(2)))
            assert parse_model(serialize_model(m)) == m

    def test_explicit_sets_as_tuples(self):
        scope = small_scope("AB", (2, 2))
        odd = ExplicitSubset.from_tuples(scope, [("a0", "b0"), ("a1", "b1")])
        m = MassFunction(scope, {odd: 1.0})
        doc = json.loads(serialize_model(m))
        assert doc["focals"][0]["tuples"] == [["a0", "b0"], ["a1", "b1"]]
        assert parse_model(serialize_model(m)) == m


class TestParseRecords:
    def test_set_valued_cell(self, fixture_scope):
        rs = parse_records('{"X": ["p"], "Y": ["s", "t"], "Z": ["b"]}\n', fixture_scope)
        assert rs.records == (pfs(fixture_scope, "p", "st", "b"),)

    def test_empty(self):
        assert len(parse_records("")) == 0

    def test_empty_cell_line_number(self, fixture_scope):
        text = '{"X": ["p"], "Y": ["r"], "Z": ["a"]}\n{"X": ["p"], "Y": ["r"], "Z": []}\n'
        with pytest.raises(DataError, match="line 2"):
            parse_records(text, fixture_scope)

    def test_unknown_label(self, fixture_scope):
        with pytest.raises(DataError, match="line 1"):
            parse_records('{"X": ["w"], "Y": ["r"], "Z": ["a"]}\n', fixture_scope)

    def test_malformed_line(self, fixture_scope):
        with pytest.raises(DataError, match="line 3"):
            parse_records('{"X": ["p"], "Y": ["r"], "Z": ["a"]}\n\n{"X": \n', fixture_scope)

    def test_header_and_inference(self, fixture_scope):
        recs = RecordSet(fixture_scope, (pfs(fixture_scope, "p", "r", "a"),))
        text = serialize_records(recs)
        assert parse_records(text) == recs
        inferred = parse_records('{"A": ["x"], "B": ["y", "z"]}\n')
        assert inferred.scope.names == ("A", "B")
        assert inferred.scope.variable("B").frame == ("y", "z")


class TestEmpirical:
    def test_identical_records(self, fixture_scope):
        rec = pfs(fixture_scope, "p", "r", "a")
        m = empirical_mass(RecordSet(fixture_scope, (rec,) * 4))
        assert dict(m.items()) == {rec: 1.0}

    def test_row_one_share(self, fixture_scope):
        row1 = pfs(fixture_scope, "p", "r", "ab")
        other = pfs(fixture_scope, "q", "t", "c")
        m = empirical_mass(RecordSet(fixture_scope, (row1,) * 160 + (other,) * 840))
        assert m[row1] == 0.160
        cls = classify(m)
        assert cls.proper and cls.normal

    def test_empty(self, fixture_scope):
        with pytest.raises(DataError):
            empirical_mass(RecordSet(fixture_scope, ()))

    def test_standard_error_bound(self, fixture_model):
        n = 40000
        bound = 3 * np.sqrt(0.25 / n)
        for seed in range(10):
            m_hat = empirical_mass(generate_records(fixture_model, n, seed))
            assert max_abs_difference(m_hat, fixture_model) <= bound

    def test_tv_distance_shrinks(self, fixture_model):
        means = []
        for n in (1000, 10000, 100000):
            means.append(np.mean([
                tv_distance(empirical_mass(generate_records(fixture_model, n, seed)), fixture_model)
                for seed in range(10)
            ]))
        assert means[0] > means[1] > means[2]


class TestGenerate:
    def test_zero(self, fixture_model):
        assert len(generate_records(fixture_model, 0, 1)) == 0

    def test_single_focal(self, fixture_scope):
        rec = pfs(fixture_scope, "p", "r", "a")
        out = generate_records(MassFunction(fixture_scope, {rec: 1.0}), 25, 3)
        assert out.records == (rec,) * 25

    def test_deterministic_bytes(self, fixture_model):
        a = generate_records(fixture_model, 500, 42)
        b = generate_records(fixture_model, 500, 42)
        assert serialize_records(a, a.header["generator"]) == serialize_records(b, b.header["generator"])
        assert a.records != generate_records(fixture_model, 500, 43).records

    def test_frequencies(self, fixture_model):
        m_hat = empirical_mass(generate_records(fixture_model, 100000, 42))
        for focal, mass in fixture_model.items():
            assert abs(m_hat[focal] - mass) <= 0.01

    def test_rejects_pseudo(self):
        with pytest.raises(PseudoModelError):
            generate_records(parse_model(SMALL.replace('"0.6"', '"1.1"') % '"-0.1"'), 10, 0)

    def test_rejects_non_normal(self):
        with pytest.raises(PseudoModelError):
            generate_records(parse_model(SMALL % '"0.2"'), 10, 0)
