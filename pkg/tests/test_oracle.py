import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from corpus import UNSAT, model
from liftedmln import numerics
from liftedmln.logic import Vocabulary, World, parse_formula, parse_model, satisfies
from liftedmln.oracle import (CapExceeded, ConvergenceError, WeightFunctions, as_domain, brute_dual,
                              brute_hull_vertices, brute_kl, brute_world_count, brute_mle,
                              brute_polytope_points, brute_wfomc, enumerate_models, model_table)

SM = Vocabulary(("sm",), ())
SM_FR = Vocabulary(("sm",), ("fr",))
SYMMETRIC = (parse_formula("fr(x,y) => fr(y,x)"),)


def naive_models(vocab, hard, n):
    domain = as_domain(n)
    ground = vocab.ground_atoms(domain)
    for bits in itertools.product([False, True], repeat=len(ground)):
        w = World(domain, frozenset(a for a, b in zip(ground, bits) if b))
        if all(satisfies(w, h) for h in hard):
            yield w


def test_enumerate_without_constraints():
    assert len(list(enumerate_models(SM, (), 2))) == 4


def test_enumerate_matches_naive_filter():
    fast = set(enumerate_models(SM_FR, SYMMETRIC, 2))
    assert fast == set(naive_models(SM_FR, SYMMETRIC, 2))
    assert len(fast) == 2 ** 2 * 2 ** 3


def test_enumerate_checks_reflexive_groundings():
    hard = (parse_formula("!fr(x,y)"),)
    assert len(list(enumerate_models(SM_FR, hard, 2))) == 4


def test_cap_exceeded():
    with pytest.raises(CapExceeded):
        list(enumerate_models(SM_FR, (), 5, cap=25))


def test_brute_wfomc_examples():
    assert brute_wfomc(SM_FR, (), WeightFunctions(), 2).exact == 64
    res = brute_wfomc(SM, (), WeightFunctions({"sm": 2}, {"sm": 1}), 3)
    assert res.exact == 27 and res.log_value == pytest.approx(math.log(27))
    unsat = parse_model(UNSAT)
    res = brute_wfomc(unsat.vocabulary, unsat.hard, WeightFunctions(), 2)
    assert res.exact == 0 and res.log_value == -math.inf


def test_weight_functions_must_be_positive():
    with pytest.raises(ValueError):
        WeightFunctions({"sm": 0})


def test_world_count():
    assert brute_world_count(SM_FR, SYMMETRIC, 2) == 32


def test_brute_dual_at_zero():
    m = model("friends_smoke")
    theta = (Fraction(1, 2),)
    value, grad = brute_dual(m, 3, [0.0], theta)
    table = model_table(m, as_domain(3))
    mean = np.average(table.float_statistics()[:, 0], weights=np.array(table.counts, float))
    assert value == pytest.approx(-math.log(table.num_worlds))
    assert grad[0] == pytest.approx(0.5 - mean)


@given(st.floats(-4, 4), st.fractions(0, 1))
def test_brute_dual_two_world_closed_form(t, theta):
    value, grad = brute_dual(model("smoker"), 1, [t], (theta,))
    assert value == pytest.approx(t * float(theta) - math.log1p(math.exp(t)), abs=1e-12)
    assert grad[0] == pytest.approx(float(theta) - 1 / (1 + math.exp(-t)), abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_brute_gradient_matches_finite_differences(lam):
    m = model("smokers")
    theta = (Fraction(1, 3), Fraction(1, 2))
    _, grad = brute_dual(m, 2, lam, theta)
    fd = numerics.central_gradient(lambda x: brute_dual(m, 2, x, theta)[0], lam)
    assert np.allclose(grad, fd, atol=1e-6)


def test_polytope_points_examples():
    assert brute_polytope_points(model("smoker"), 2) == {(Fraction(0),), (Fraction(1, 2),), (Fraction(1),)}
    complete_only = parse_model("1 :: e(x,y)\nhard e(x,y)")
    assert brute_polytope_points(complete_only, 3) == {(Fraction(1),)}


def test_no_reciprocity_without_edges():
    for p in brute_polytope_points(model("edge_reciprocal"), 3):
        if p[0] == 0:
            assert p[1] == 0


def test_hull_vertices_oracle():
    pts = {(Fraction(0),), (Fraction(1, 2),), (Fraction(1),)}
    assert brute_hull_vertices(pts) == {(Fraction(0),), (Fraction(1),)}
    square = {(Fraction(a), Fraction(b)) for a in (0, 1) for b in (0, 1)} | {(Fraction(1, 2), Fraction(1, 2))}
    assert len(brute_hull_vertices(square)) == 4
    assert brute_hull_vertices({(Fraction(1), Fraction(2))}) == {(Fraction(1), Fraction(2))}


def test_mle_closed_form():
    lam = brute_mle(model("smoker"), 1, (Fraction(3, 4),))
    assert lam[0] == pytest.approx(math.log(3), abs=1e-9)


def test_mle_at_uniform_mean_is_zero():
    m = model("smokers")
    table = model_table(m, as_domain(3))
    mean = np.average(table.float_statistics(), axis=0, weights=np.array(table.counts, float))
    lam = brute_mle(m, 3, tuple(Fraction(v) for v in mean))
    assert np.linalg.norm(lam) < 1e-6


def test_mle_stationary_and_orthogonal_to_hull_normals():
    m = model("smoker_complement")
    theta = (Fraction(1, 3), Fraction(2, 3))
    lam = brute_mle(m, 3, theta, tolerance=1e-10)
    _, grad = brute_dual(m, 3, lam, theta)
    assert np.linalg.norm(grad) <= 1e-9
    assert lam[0] + lam[1] == pytest.approx(0, abs=1e-12)


def test_mle_refuses_boundary():
    with pytest.raises(ConvergenceError):
        brute_mle(model("edge"), 3, (Fraction(1),))


def test_kl_properties():
    m = model("smokers")
    assert brute_kl(m, 2, [1.0, -1.0], [1.0, -1.0]) == pytest.approx(0, abs=1e-12)
    assert brute_kl(m, 2, [1.0, -1.0], [0.0, 2.0]) > 0
