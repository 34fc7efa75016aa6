import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corpus import UNSAT, corpus, model
from liftedmln import numerics, wfomc
from liftedmln.logic import Vocabulary, parse_formula, parse_model
from liftedmln.oracle import WeightFunctions, brute_log_partition, brute_wfomc, brute_world_count

SMOKERS_FRIENDS = parse_model("predicate sm/1\npredicate fr/2\n1.0 :: fr(x,y) => sm(y)")
CORPUS = dict(corpus())


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_unary_count(n):
    m = parse_model("predicate sm/1")
    assert wfomc.lifted_z(m, [], n) == pytest.approx(n * math.log(2))
    assert wfomc.log_world_count((), m.vocabulary, n, exact=True) == 2 ** n


def test_smokers_friends_zero_weights():
    assert wfomc.lifted_z(SMOKERS_FRIENDS, [0.0], 2) == pytest.approx(math.log(64))
    assert wfomc.log_world_count((), SMOKERS_FRIENDS.vocabulary, 3, exact=True) == 4096


@pytest.mark.parametrize("n", [1, 2, 3, 6])
def test_binary_count(n):
    vocab = Vocabulary((), ("fr",))
    assert wfomc.log_world_count((), vocab, n) == pytest.approx(n * n * math.log(2))


def test_symmetric_count():
    hard = (parse_formula("fr(x,y) => fr(y,x)"),)
    assert wfomc.log_world_count(hard, Vocabulary((), ("fr",)), 2, exact=True) == 8


def test_unsatisfiable():
    m = parse_model(UNSAT)
    assert wfomc.lifted_z(m, [1.0], 3) == -math.inf
    assert wfomc.log_world_count(m.hard, m.vocabulary, 3, exact=True) == 0
    with pytest.raises(wfomc.UnsatisfiableTheory):
        wfomc.lifted_expectations(m, [1.0], 3)


def test_uniform_expectations():
    assert wfomc.lifted_expectations(model("smoker"), [0.0], 4) == pytest.approx([0.5])
    assert wfomc.lifted_expectations(SMOKERS_FRIENDS, [0.0], 4) == pytest.approx([0.75])


@settings(max_examples=25)
@given(st.sampled_from(sorted(CORPUS)), st.integers(1, 3), st.data())
def test_matches_brute_force(name, n, data):
    m = CORPUS[name]
    lam = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=len(m.soft), max_size=len(m.soft))))
    lifted = wfomc.LiftedModel(m, n)
    lz, le = lifted.log_partition(lam)
    bz, be = brute_log_partition(m, n, lam)
    assert abs(lz - bz) <= 1e-9 * max(1.0, abs(bz))
    assert np.allclose(le, be, atol=1e-9)


@settings(max_examples=15)
@given(st.sampled_from(sorted(CORPUS)), st.data())
def test_expectations_are_gradient_of_log_z(name, data):
    m = CORPUS[name]
    lam = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=len(m.soft), max_size=len(m.soft))))
    lifted = wfomc.LiftedModel(m, 3)
    _, expected = lifted.log_partition(lam)
    fd = numerics.central_gradient(lambda x: lifted.log_partition(x)[0], lam)
    assert np.allclose(fd, expected, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_exact_counts_match_brute(name):
    m = CORPUS[name]
    for n in (1, 2, 3):
        assert wfomc.log_world_count(m.hard, m.vocabulary, n, exact=True) == \
            brute_world_count(m.vocabulary, m.hard, n)


def test_encoding_weights():
    _, _, w = wfomc.encode(SMOKERS_FRIENDS, [0.0], 3)
    assert set(w.w.values()) == {1}
    _, _, w = wfomc.encode(parse_model("6 :: e(x,y)"), [6.0], 3)
    assert list(w.w.values())[0] == pytest.approx(math.e)


@pytest.mark.parametrize("name,n,seed", [("smokers", 2, 0), ("edge_reciprocal", 3, 1), ("symmetric_friends", 2, 2),
                                         ("two_unary", 3, 3), ("reflexive", 2, 4)])
def test_encoding_reproduces_partition_function(name, n, seed):
    m = CORPUS[name]
    lam = np.random.default_rng(seed).uniform(-2, 2, len(m.soft))
    vocab, theory, weights = wfomc.encode(m, lam, n)
    brute = brute_wfomc(vocab, theory, weights, n, cap=40).log_value
    assert brute == pytest.approx(brute_log_partition(m, n, lam)[0], abs=1e-9)
    lifted = wfomc.lifted_wfomc(vocab, theory, weights, n).log_value
    assert lifted == pytest.approx(brute, abs=1e-9)


def test_exact_weighted_count():
    vocab = Vocabulary(("sm",), ())
    res = wfomc.lifted_wfomc(vocab, (), WeightFunctions({"sm": 2}, {"sm": 1}), 3, exact=True)
    assert res.exact == 27
    res = wfomc.lifted_wfomc(vocab, (), WeightFunctions({"sm": Fraction(1, 2)}), 2, exact=True)
    assert res.exact == Fraction(9, 4)


@given(st.integers(0, 9), st.integers(1, 4))
def test_compositions(n, parts):
    rows = np.concatenate(list(wfomc.compositions(n, parts, chunk=7)))
    assert len(rows) == math.comb(n + parts - 1, parts - 1)
    assert (rows.sum(axis=1) == n).all() and (rows >= 0).all()
    assert len({tuple(r) for r in rows.tolist()}) == len(rows)


def test_thread_count_does_not_change_result():
    m = parse_model("predicate sm/1\npredicate fr/2\n0.7 :: fr(x,y) => sm(y)\n-0.2 :: sm(x)")
    # four cells and n = 60 give more than one chunk of compositions
    assert math.comb(63, 3) > wfomc.CHUNK
    one = wfomc.LiftedModel(m, 60, threads=1).log_partition([0.7, -0.2])
    four = wfomc.LiftedModel(m, 60, threads=4).log_partition([0.7, -0.2])
    assert one[0] == four[0]
    assert np.array_equal(one[1], four[1])


def test_corrupted_tables_disagree():
    m = model("friendship")
    tables = wfomc.build_tables(m.vocabulary, tuple(m.hard), m.formulas)
    good = wfomc.LiftedModel(m, 3).log_partition([0.0, 0.0])[0]
    bad = wfomc.LiftedModel(m, 3, tables=wfomc.corrupt(tables)).log_partition([0.0, 0.0])[0]
    assert good != pytest.approx(bad)


def test_domain_must_be_positive():
    with pytest.raises(ValueError):
        wfomc.LiftedModel(model("smoker"), 0)
