import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lwis.constraints import ConstraintSet, Relative, SimilarPair, Triplet
from lwis.data import Dataset
from lwis.errors import ContractViolation, UnsatisfiableConstraintError
from lwis.metric import MetricMatrix, pairwise_sq
from lwis.selection import (
    LiuVemuriPrior,
    Lwis,
    MeiDynamic,
    RandomPrior,
    WeightLedger,
    disorder_count,
    draw_anchor,
    init_uniform,
    liu_vemuri_triplets,
    lwis_update,
    make_strategy,
    mei_select,
    sample_constraint,
)


def brute_disorder(D, labels):
    n = len(labels)
    return sum(
        1
        for i in range(n)
        for j in range(n)
        for k in range(n)
        if j != i and labels[j] == labels[i] and labels[k] != labels[i] and D[i, j] >= D[i, k]
    )


def brute_violations(D, labels):
    """All triplets with their violation d_ij - d_ik."""
    n = len(labels)
    return [
        (D[i, j] - D[i, k], i, j, k)
        for i in range(n)
        for j in range(n)
        for k in range(n)
        if j != i and labels[j] == labels[i] and labels[k] != labels[i]
    ]


def test_init_uniform():
    assert np.array_equal(init_uniform(4).weights, np.full(4, 0.25))
    assert np.array_equal(init_uniform(2).weights, [0.5, 0.5])
    with pytest.raises(ContractViolation):
        init_uniform(1)


@given(st.integers(2, 5000))
def test_uniform_is_on_simplex(n):
    assert init_uniform(n).is_valid()


def test_concentrated_ledger_draws_its_mass():
    w = np.full(10, 1e-6)
    w[0] = 1 - 9e-6
    ledger = WeightLedger(w)
    rng = np.random.default_rng(0)
    hits = sum(draw_anchor(ledger, rng) == 0 for _ in range(10000))
    assert hits >= 9900


def test_uniform_anchor_frequencies_within_binomial_band():
    cs = ConstraintSet([0, 0, 1, 1])
    ledger = init_uniform(4)
    rng = np.random.default_rng(1)
    N = 10000
    counts = np.bincount([sample_constraint(ledger, cs, "triplet", rng).anchor for _ in range(N)], minlength=4)
    band = 3 * math.sqrt(N * 0.25 * 0.75)
    assert np.all(np.abs(counts - N / 4) <= band)


def test_sampling_is_deterministic_under_seed():
    cs = ConstraintSet([0, 1, 0, 1, 2, 2])
    ledger = init_uniform(6)
    seqs = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        seqs.append([sample_constraint(ledger, cs, kind, rng) for kind in ("similar", "dissimilar", "triplet", "relative") * 10])
    assert seqs[0] == seqs[1]


def test_sampled_kinds():
    cs = ConstraintSet([0, 0, 1, 1])
    rng = np.random.default_rng(0)
    ledger = init_uniform(4)
    assert isinstance(sample_constraint(ledger, cs, "similar", rng), SimilarPair)
    r = sample_constraint(ledger, cs, "relative", rng)
    assert isinstance(r, Relative) and r.i == r.k
    with pytest.raises(ContractViolation):
        sample_constraint(ledger, cs, "nonsense", rng)
    with pytest.raises(UnsatisfiableConstraintError):
        sample_constraint(init_uniform(3), ConstraintSet([0, 0, 0]), "triplet", rng)


def test_update_with_zero_alpha_keeps_weights():
    ledger = WeightLedger(np.array([0.1, 0.2, 0.7]))
    out = lwis_update(ledger, 1, 0.0, 1.0)
    assert np.array_equal(out.weights, ledger.weights)
    assert out.generation == 1


def test_update_two_points_hand_evaluated():
    out = lwis_update(init_uniform(2), 1, 1.0, 1.0)
    e = math.e
    assert np.allclose(out.weights, [1 / (1 + e), e / (1 + e)])
    assert np.allclose(out.weights, [0.2689, 0.7311], atol=5e-5)


def test_repeated_updates_drive_anchor_to_one():
    ledger = init_uniform(5)
    prev = ledger.weights[2]
    for _ in range(100):
        ledger = lwis_update(ledger, 2, 1.0, 1.0)
        assert ledger.weights[2] > prev or ledger.weights[2] == pytest.approx(1.0, abs=1e-15)
        prev = ledger.weights[2]
        assert ledger.is_valid()
    assert prev > 1 - 1e-15


def test_update_floor_keeps_weights_positive():
    ledger = init_uniform(4)
    for _ in range(200):
        ledger = lwis_update(ledger, 0, 10.0, 2.0)
        assert ledger.is_valid()


@given(
    st.integers(2, 50).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.lists(st.tuples(st.integers(0, n - 1), st.floats(0, 10), st.floats(1e-4, 2)), max_size=60),
        )
    )
)
def test_simplex_invariant_under_any_update_sequence(args):
    n, steps = args
    ledger = init_uniform(n)
    for anchor, a, d in steps:
        ledger = lwis_update(ledger, anchor, a, d)
        assert ledger.is_valid()


def test_entropy_of_uniform():
    assert np.isclose(init_uniform(8).entropy(), math.log(8))


def test_make_strategy():
    assert make_strategy("lwis") == Lwis()
    assert make_strategy("LWIS:delta=0.5") == Lwis(0.5)
    assert make_strategy("liu_vemuri:a=5") == LiuVemuriPrior(5)
    assert make_strategy("mei:refresh_period=10") == MeiDynamic(10)
    assert make_strategy("random") == RandomPrior()
    for bad in ("bogus", "lwis:alpha=1", "mei:refresh_period"):
        with pytest.raises(ContractViolation):
            make_strategy(bad)


def test_liu_vemuri_four_points():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [5.0, 0.0]])
    data = Dataset("four", X, np.array([0, 0, 1, 1]))
    D = ((X[:, None] - X[None]) ** 2).sum(-1)
    got = liu_vemuri_triplets(data, a=1)
    expected = []
    for i in range(4):
        same = [j for j in range(4) if j != i and data.labels[j] == data.labels[i]]
        other = [k for k in range(4) if data.labels[k] != data.labels[i]]
        expected.append(Triplet(i, same[0], min(other, key=lambda k: D[i, k])))
    assert got == expected


def test_liu_vemuri_clamps_to_class_size():
    rng = np.random.default_rng(0)
    data = Dataset("d", rng.normal(size=(9, 2)), np.array([0, 0, 0, 1, 1, 1, 2, 2, 2]))
    out = liu_vemuri_triplets(data, a=10)
    assert len(out) == 9 * 2
    for i in range(9):
        js = [t.j for t in out if t.i == i]
        assert len(js) == len(set(js)) == 2


def test_liu_vemuri_count_on_balanced_data():
    rng = np.random.default_rng(1)
    data = Dataset("d", rng.normal(size=(40, 3)), np.arange(40) % 4)
    assert len(liu_vemuri_triplets(data, a=3)) == 40 * 3


def test_mei_separated_clusters_have_no_disorder():
    X = np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.3]])
    data = Dataset("sep", X, np.array([0, 0, 0, 1, 1, 1]))
    out, disorder = mei_select(data, MetricMatrix.identity(1), 3)
    assert disorder == 0
    D = pairwise_sq(MetricMatrix.identity(1), X)
    best = sorted(brute_violations(D, data.labels), reverse=True)
    assert [D[t.i, t.j] - D[t.i, t.k] for t in out] == pytest.approx([v for v, *_ in best[:3]])


def test_mei_four_points_one_inversion():
    X = np.array([[0.0], [3.0], [1.0], [4.0]])
    labels = np.array([0, 0, 1, 1])
    data = Dataset("inv", X, labels)
    D = pairwise_sq(MetricMatrix.identity(1), X)
    _, disorder = mei_select(data, MetricMatrix.identity(1), 1)
    assert disorder == brute_disorder(D, labels) > 0


def test_mei_budget_beyond_available():
    rng = np.random.default_rng(2)
    data = Dataset("d", rng.normal(size=(6, 2)), np.array([0, 0, 0, 1, 1, 2]))
    total = len(brute_violations(np.zeros((6, 6)), data.labels))
    out, _ = mei_select(data, MetricMatrix.identity(2), 1000)
    assert len(out) == total
    assert len(set(out)) == total


@given(st.integers(4, 30), st.integers(2, 4), st.integers(0, 10**6), st.booleans())
def test_mei_matches_brute_force(n, classes, seed, grid):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    X = rng.integers(0, 3, size=(n, 2)).astype(float) if grid else rng.normal(size=(n, 2))
    data = Dataset("h", X, labels)
    A = MetricMatrix.identity(2)
    D = pairwise_sq(A, X)
    budget = int(rng.integers(1, 40))
    out, disorder = mei_select(data, A, budget)
    assert disorder == brute_disorder(D, labels)
    assert disorder == disorder_count(D, labels)
    ranked = sorted((v for v, *_ in brute_violations(D, labels)), reverse=True)
    got = [D[t.i, t.j] - D[t.i, t.k] for t in out]
    assert got == pytest.approx(ranked[: len(got)])
    assert len(out) == min(budget, len(ranked)) == len(set(out))
    for t in out:
        assert labels[t.j] == labels[t.i] != labels[t.k] and t.j != t.i


def test_mei_requires_two_classes():
    data = Dataset("one", np.zeros((4, 1)) + np.arange(4)[:, None], np.zeros(4, dtype=int))
    with pytest.raises(UnsatisfiableConstraintError):
        mei_select(data, MetricMatrix.identity(1), 2)
