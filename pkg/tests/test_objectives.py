import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointlink import objectives as ob
from jointlink.datamodel import KnowledgeGraph
from jointlink.embedding import CONTEXT, MENTION, TARGET

from conftest import sentence, small_store, tuple_for, zero_store
import oracles


@pytest.mark.parametrize("kind", ["FE", "MY", "EE", "ET", "COH"])
def test_gradients_match_finite_differences(kind):
    assert oracles.gradient_check(kind, n_instances=25, seed=7) < 1e-4


def test_fe_context_variant_gradient():
    params = small_store()
    negs = ["B", "C", "B"]
    loss, grads = ob.fe_loss_grad("f1", "A", negs, params, 1.5, CONTEXT)
    fn = lambda: oracles.fe_loss(params, "f1", "A", negs, 1.5, CONTEXT)
    assert loss == pytest.approx(fn(), abs=1e-12)
    assert oracles.max_rel_error(grads, params, fn) < 1e-4
    with pytest.raises(ValueError):
        ob.fe_loss_grad("f1", "A", negs, params, 1.0, "t")


def test_coherence_gradient_with_equal_entities():
    params = small_store()
    quad = ob.CoherenceQuad("A", "A", 0, 1)
    negs = [ob.CoherenceQuad("A", "B", 0, 2)]
    loss, grads = ob.coherence_loss_grad(quad, negs, params)
    fn = lambda: oracles.coherence_loss(params, quad, negs)
    assert loss == pytest.approx(fn(), abs=1e-12)
    assert oracles.max_rel_error(grads, params, fn) < 1e-4


def test_zero_vector_closed_forms():
    params = zero_store()
    two_log2 = 2 * math.log(2)
    assert abs(ob.fe_loss_grad("f0", "A", ["B"], params)[0] - two_log2) <= 1e-12
    assert abs(ob.ee_loss_grad("A", "B", ["C"], params)[0] - two_log2) <= 1e-12
    assert abs(ob.et_loss_grad("A", "T1", ["T2"], params)[0] - two_log2) <= 1e-12
    quad = ob.CoherenceQuad("A", "B", 0, 1)
    assert abs(ob.coherence_confidence(quad, params) - 0.75) <= 1e-12
    assert ob.coherence_loss_grad(quad, [], params)[0] == pytest.approx(-math.log(0.75), abs=1e-12)
    assert -math.log(0.75) == pytest.approx(0.2877, abs=1e-4)
    neg_only = ob.coherence_loss_grad(quad, [quad], params)[0] + math.log(0.75)
    assert neg_only == pytest.approx(-math.log(0.25), abs=1e-12)


def test_hinge_examples():
    params = zero_store(d=2)
    params.tables[MENTION][params.row(MENTION, 0)] = [1.0, 0.0]
    params.tables[TARGET][params.row(TARGET, "A")] = [1.0, 0.0]
    params.tables[TARGET][params.row(TARGET, "B")] = [0.0, 0.0]
    loss, grads = ob.hinge_loss_grad(0, "A", ["A", "B"], params, lam=0.0)
    assert loss == 0.0 and all(not g.any() for g in grads.values())
    params.tables[TARGET][params.row(TARGET, "B")] = [0.9, 0.0]
    assert ob.hinge_loss_grad(0, "A", ["A", "B"], params, lam=0.0)[0] == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(ValueError):
        ob.hinge_loss_grad(0, "C", ["A", "B"], params)


def test_hinge_single_candidate_only_regularizes():
    params = small_store()
    loss, _ = ob.hinge_loss_grad(0, "A", ["A"], params, lam=0.2)
    m, y = params.vec(MENTION, 0), params.vec(TARGET, "A")
    assert loss == pytest.approx(0.1 * (m @ m + y @ y))


def test_noise_distribution_exact():
    table = ob.NoiseTable({"rare": 1, "common": 16})
    exact = oracles.noise_probs({"rare": 1, "common": 16})
    assert exact["rare"] == pytest.approx(1 / 9, abs=1e-15)
    assert table.prob("rare") == pytest.approx(exact["rare"], abs=1e-15)
    draws = np.array(table.draw(200_000))
    assert abs((draws == "rare").mean() - 1 / 9) < 0.01


@given(st.dictionaries(st.sampled_from("abcdefg"), st.floats(0.1, 1000), min_size=1))
def test_noise_probs_sum_to_one(counts):
    table = ob.NoiseTable(counts)
    assert abs(table.probs.sum() - 1.0) < 1e-12
    exact = oracles.noise_probs(counts)
    for k in counts:
        assert table.prob(k) == pytest.approx(exact[k], rel=1e-12)


def test_noise_table_rejects_bad_counts():
    with pytest.raises(ValueError):
        ob.NoiseTable({})
    with pytest.raises(ValueError):
        ob.NoiseTable({"a": 0})


def test_sample_negatives_excludes_and_errors():
    table = ob.NoiseTable({"a": 1, "b": 1, "c": 1}, seed=3)
    negs = ob.sample_negatives(table, 200, exclude=("a",))
    assert len(negs) == 200 and "a" not in negs
    assert len(ob.sample_negatives(table, 5, exclude=("a",))) == 5
    with pytest.raises(ob.SamplingError):
        ob.sample_negatives(ob.NoiseTable({"a": 1}), 3, exclude=("a",))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_small_step_descends(seed):
    rng = np.random.default_rng(seed)
    for kind in ("FE", "MY", "EE", "ET", "COH"):
        params = small_store(seed=seed)
        analytic_fn, oracle_fn = oracles.random_instance(kind, params, rng)
        before, grads = analytic_fn()
        norm2 = sum(float(g @ g) for g in grads.values())
        if norm2 < 1e-10:
            continue
        eta = 1e-3 / max(1.0, math.sqrt(norm2))
        for (table, row), g in grads.items():
            params.tables[table][row] -= eta * g
        assert oracle_fn() < before


def test_descent_property_many_instances():
    rng = np.random.default_rng(11)
    failures = 0
    for i in range(1000):
        kind = ("FE", "MY", "EE", "ET", "COH")[i % 5]
        params = small_store(seed=i)
        analytic_fn, oracle_fn = oracles.random_instance(kind, params, rng)
        before, grads = analytic_fn()
        norm2 = sum(float(g @ g) for g in grads.values())
        if norm2 < 1e-10:
            continue
        for (table, row), g in grads.items():
            params.tables[table][row] -= 1e-4 * g
        failures += oracle_fn() > before
    assert failures == 0


def test_clamping_keeps_losses_finite():
    params = small_store(d=4)
    for table in params.tables.values():
        table[:] = 40.0
    loss, grads = ob.fe_loss_grad("f0", "A", ["B"], params)
    assert math.isfinite(loss) and all(np.isfinite(g).all() for g in grads.values())
    loss, grads = ob.coherence_loss_grad(ob.CoherenceQuad("A", "B", 0, 1), [ob.CoherenceQuad("A", "C", 0, 2)], params)
    assert math.isfinite(loss)


# -- negative quads -----------------------------------------------------------


def quad_corpus():
    s1 = sentence("d1", 0, ["a", "b", "c"])
    s2 = sentence("d1", 1, ["d", "e"])
    s3 = sentence("d2", 0, ["f", "g"])
    tuples = [tuple_for(s1, 0, 1, 0, "A"), tuple_for(s1, 1, 2, 1, "B"), tuple_for(s1, 2, 3, 2, "C"),
              tuple_for(s2, 0, 1, 3, "D"), tuple_for(s2, 1, 2, 4, "C"),
              tuple_for(s3, 0, 1, 5, "E"), tuple_for(s3, 1, 2, 6, "B")]
    kg = KnowledgeGraph()
    kg.add_ee("A", "D")
    return tuples, kg


def test_negative_quads_admissible():
    tuples, kg = quad_corpus()
    index = ob.CorpusIndex.from_tuples(tuples)
    table = ob.NoiseTable({e: 1 for e in "ABCDE"}, seed=0)
    quad = ob.CoherenceQuad("A", "B", 0, 1)
    negs = ob.sample_negative_quads(quad, index, kg, table, Q=200)
    assert len(negs) == 200
    assert all(ob.quad_violation(quad, n, index, kg) is None for n in negs)
    assert {n.e_j for n in negs} <= {"C", "E", "B"}
    assert all(n.e_j != "D" for n in negs)


def test_quad_violation_reasons():
    tuples, kg = quad_corpus()
    index = ob.CorpusIndex.from_tuples(tuples)
    quad = ob.CoherenceQuad("A", "B", 0, 1)
    assert "sentence" in ob.quad_violation(quad, ob.CoherenceQuad("A", "C", 0, 2), index, kg)
    assert "knowledge graph" in ob.quad_violation(quad, ob.CoherenceQuad("A", "D", 0, 3), index, kg)
    assert ob.quad_violation(quad, ob.CoherenceQuad("A", "C", 0, 4), index, kg) is None


def test_negative_quads_exhaust_budget():
    s = sentence("d", 0, ["a", "b"])
    tuples = [tuple_for(s, 0, 1, 0, "A"), tuple_for(s, 1, 2, 1, "B")]
    index = ob.CorpusIndex.from_tuples(tuples)
    table = ob.NoiseTable({"A": 1, "B": 1})
    with pytest.raises(ob.SamplingError):
        ob.sample_negative_quads(ob.CoherenceQuad("A", "B", 0, 1), index, KnowledgeGraph(), table, Q=2, retries=5)
