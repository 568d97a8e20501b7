import itertools
import math

import numpy as np
import pytest

from gramediate.loglin import GeneratingClass, downset, ipf_fit, named_model
from gramediate.modelspace import (
    MODEL_CLASSES,
    FitCache,
    backward_neighbors,
    consensus,
    edge_moves,
    enumerate_hierarchical,
    forward_neighbors,
    search,
    stepwise,
)
from gramediate.table import ContingencyTable, VariableSchema

# Forward search settles on independence, backward on saturation.
DISAGREEING_COUNTS = [7, 6, 6, 11, 3, 9, 8, 0]


def _binary_table(counts, names="ABC"):
    schema = [VariableSchema(v, ("0", "1")) for v in names]
    return ContingencyTable(schema, np.array(counts, dtype=float).reshape((2,) * len(names)))


def _oracle_count(n):
    # independent route: count down-sets of the term lattice above the singletons
    # by brute force over all subsets of the >=2 terms that are closed downward
    terms = [frozenset(c) for r in range(2, n + 1) for c in itertools.combinations(range(n), r)]
    count = 0
    for mask in range(2 ** len(terms)):
        chosen = {t for i, t in enumerate(terms) if mask >> i & 1}
        if all(len(t) == 2 or all(t - {v} in chosen for v in t) for t in chosen):
            count += 1
    return count


# ---------------------------------------------------------------- enumeration


@pytest.mark.parametrize("n,count", [(2, 2), (3, 9), (4, 114)])
def test_enumeration_counts(n, count):
    models = enumerate_hierarchical(n)
    assert len(models) == count
    assert len(set(models)) == count
    assert count == _oracle_count(n)


def test_enumeration_of_two_variables():
    assert [str(m) for m in enumerate_hierarchical(2)] == ["[A][B]", "[A,B]"]


# Dedekind numbers: antichains of subsets of an n-set (including the empty antichain and {{}})
DEDEKIND = [2, 3, 6, 20, 168, 7581]


def _covers_by_inclusion_exclusion(n):
    # antichains of nonempty sets number D(k) - 1 on a k-set; subtract those missing some variable
    return sum((-1) ** (n - k) * math.comb(n, k) * (DEDEKIND[k] - 1) for k in range(n + 1))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_counts_match_dedekind_oracle(n):
    assert len(enumerate_hierarchical(n)) == _covers_by_inclusion_exclusion(n)


def test_five_variable_antichain_covers():
    # 6894 antichain covers; 7580 = D(5) - 1 counts antichains without the cover requirement
    models = enumerate_hierarchical(5)
    assert len(models) == 6894
    assert len(set(models)) == 6894
    assert DEDEKIND[5] - 1 == 7580


def test_enumerated_models_are_valid_antichain_covers():
    for gc in enumerate_hierarchical(4):
        gens = [frozenset(g) for g in gc.generators]
        assert set().union(*gens) == set("ABCD")
        assert not any(a < b for a in gens for b in gens)


def test_enumeration_is_deterministic():
    assert enumerate_hierarchical(4) == enumerate_hierarchical(4)
    assert [str(m) for m in enumerate_hierarchical(3)] == [str(m) for m in enumerate_hierarchical(3)]


@pytest.mark.parametrize("n", [1, 6])
def test_enumeration_range(n):
    with pytest.raises(ValueError):
        enumerate_hierarchical(n)


# ---------------------------------------------------------------- neighbours


def test_forward_neighbor_examples():
    assert len(forward_neighbors(GeneratingClass.independence("ABC"))) == 3
    [nb] = forward_neighbors(named_model("model5"))
    assert nb == named_model("model8")
    assert forward_neighbors(GeneratingClass.saturated("ABC")) == []


def test_backward_neighbor_examples():
    [nb] = backward_neighbors(GeneratingClass.saturated("ABC"))
    assert nb == GeneratingClass.parse("[A,B][A,C][B,C]")
    assert backward_neighbors(GeneratingClass.independence("ABC")) == []
    nbs = backward_neighbors(named_model("model9"))
    assert len(nbs) == 3
    assert all(len(downset(m)) == 6 for m in nbs)


def test_neighbours_are_inverse_adjacent():
    models = enumerate_hierarchical(4)
    for gc in models:
        for nb in forward_neighbors(gc):
            assert gc in backward_neighbors(nb)
        for nb in backward_neighbors(gc):
            assert gc in forward_neighbors(nb)


def test_neighbours_differ_by_one_term():
    for gc in enumerate_hierarchical(4):
        for nb in forward_neighbors(gc):
            assert len(downset(nb) - downset(gc)) == 1


def test_decomposable_edge_moves_keep_chordality():
    square = GeneratingClass.parse("[A,B][B,C][C,D]")
    added = {frozenset(e) for e, _ in edge_moves(square, "forward", decomposable=True)}
    # closing the 4-cycle A-B-C-D-A would create a chordless square
    assert frozenset("AD") not in added
    assert frozenset("AD") in {frozenset(e) for e, _ in edge_moves(square, "forward")}


# ---------------------------------------------------------------- stepwise


@pytest.mark.parametrize("model_class", MODEL_CLASSES)
def test_trace_aic_strictly_decreases(model_class, builtin):
    for direction in ("forward", "backward"):
        tr = stepwise(builtin, direction=direction, model_class=model_class)
        for step in tr.steps:
            assert step.aic_after < step.aic_before
        for a, b in zip(tr.steps, tr.steps[1:]):
            assert b.aic_before == a.aic_after


def test_three_variable_search(builtin3):
    for mc in MODEL_CLASSES:
        fwd, bwd, agreed = search(builtin3, model_class=mc)
        assert agreed == named_model("model5")


def test_four_variable_search_default(builtin):
    fwd = stepwise(builtin, direction="forward")
    bwd = stepwise(builtin, direction="backward")
    assert fwd.final == named_model("model9")
    assert bwd.final == named_model("model9")
    assert consensus(builtin) == named_model("model9")


def test_unrestricted_term_search_prefers_model11(builtin):
    assert consensus(builtin, model_class="hierarchical") == named_model("model11")
    fits = [ipf_fit(builtin, gc) for gc in enumerate_hierarchical(4, builtin.names)]
    best = min(fits, key=lambda f: f.aic)
    assert best.generating_class == named_model("model11")
    from gramediate.graphs import is_graphical

    graphical = [f for f in fits if is_graphical(f.generating_class)]
    assert min(graphical, key=lambda f: f.aic).generating_class == named_model("model9")


def test_independent_table_keeps_independence():
    a, b, c = np.array([300, 500]), np.array([200, 600, 400]), np.array([700, 100])
    counts = np.einsum("i,j,k->ijk", a, b, c)
    schema = [VariableSchema(n, tuple(map(str, range(s)))) for n, s in zip("ABC", counts.shape)]
    t = ContingencyTable(schema, counts)
    for mc in MODEL_CLASSES:
        tr = stepwise(t, direction="forward", model_class=mc)
        assert tr.final.is_independence()
        assert tr.steps == []


@pytest.mark.parametrize("seed", range(25))
def test_three_variable_consensus_hits_exhaustive_minimum(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(2, 4, size=3))
    schema = [VariableSchema(n, tuple(map(str, range(s)))) for n, s in zip("ABC", shape)]
    # mix dependence in through a random low-rank intensity
    lam = np.exp(rng.normal(size=shape) + rng.normal(size=shape[:2])[:, :, None])
    t = ContingencyTable(schema, rng.poisson(lam * 20).astype(float))
    agreed = consensus(t, model_class="hierarchical")
    if agreed is None:
        return
    best = min(ipf_fit(t, gc).aic for gc in enumerate_hierarchical(3, "ABC"))
    assert ipf_fit(t, agreed).aic == pytest.approx(best, abs=1e-7)


def test_disagreement_fixture():
    t = _binary_table(DISAGREEING_COUNTS)
    for mc in MODEL_CLASSES:
        fwd, bwd, agreed = search(t, model_class=mc)
        assert agreed is None
        assert fwd.final.is_independence()
        assert bwd.final.is_saturated()
        assert consensus(t, model_class=mc) is None


def test_cache_is_shared(builtin):
    cache = FitCache(builtin)
    search(builtin, cache)
    n = len(cache)
    assert n > 0
    search(builtin, cache)
    assert len(cache) == n


def test_cache_for_other_table_rejected(builtin, builtin3):
    with pytest.raises(ValueError):
        stepwise(builtin, cache=FitCache(builtin3))


def test_tie_break_prefers_first_term():
    # fully symmetric table: all single-edge additions have equal AIC
    counts = [12, 3, 3, 3, 3, 3, 3, 12]
    tr = stepwise(_binary_table(counts), direction="forward", model_class="hierarchical")
    assert tr.steps[0].term == ("A", "B")


def test_search_json(builtin):
    fwd, bwd, _ = search(builtin)
    obj = fwd.to_json()
    assert obj["final"] == str(named_model("model9"))
    assert all(s["aic_after"] < s["aic_before"] for s in obj["steps"])


def test_bad_arguments(builtin):
    with pytest.raises(ValueError):
        stepwise(builtin, direction="sideways")
    with pytest.raises(ValueError):
        stepwise(builtin, model_class="chordal")
