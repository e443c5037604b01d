import numpy as np
import pytest

from grscale.eval import (
    EvalReport,
    delta_recall,
    evaluate,
    mr_at_k,
    ndcg_at_k,
    read_report,
    recall_at_k,
    write_report,
)
from oracles import recall_count


def test_rank_one_hit():
    assert recall_at_k([["a", "b", "c"]], ["a"], 5) == 1.0
    assert ndcg_at_k([["a", "b"]], ["a"], 5) == 1.0


def test_all_misses():
    assert recall_at_k([["a", "b"], ["c"]], ["z", "y"], 5) == 0.0
    assert mr_at_k([["a", "b"], ["c"]], ["z", "y"], 5) == 1.0


def test_ndcg_closed_forms():
    assert ndcg_at_k([["x", "y", "t"]], ["t"], 3) == 0.5
    r = [f"i{j}" for j in range(11)]
    assert ndcg_at_k([r], ["i10"], 10) == 0.0


def test_bad_inputs():
    with pytest.raises(ValueError):
        recall_at_k([["a"]], ["a"], 0)
    with pytest.raises(ValueError):
        recall_at_k([["a", "a"]], ["a"], 1)
    with pytest.raises(ValueError):
        recall_at_k([["a"]], ["a", "b"], 1)


def random_case(seed, users=200, items=50):
    rng = np.random.default_rng(seed)
    rankings = [list(rng.permutation(items)[:rng.integers(1, 20)]) for _ in range(users)]
    targets = [int(t) for t in rng.integers(0, items, users)]
    return rankings, targets


def test_counting_oracle():
    rankings, targets = random_case(0)
    for k in (1, 5, 10, 20):
        assert recall_at_k(rankings, targets, k) == recall_count(rankings, targets, k)


def test_properties():
    rankings, targets = random_case(1)
    prev = 0.0
    for k in range(1, 21):
        rec, nd = recall_at_k(rankings, targets, k), ndcg_at_k(rankings, targets, k)
        assert 0.0 <= nd <= rec <= 1.0
        assert nd >= rec / np.log2(k + 1) - 1e-15
        assert mr_at_k(rankings, targets, k) + rec == 1.0
        assert rec >= prev
        prev = rec


def test_user_permutation_invariance():
    rankings, targets = random_case(2)
    perm = np.random.default_rng(0).permutation(len(targets))
    pr, pt = [rankings[i] for i in perm], [targets[i] for i in perm]
    for k in (5, 10):
        assert recall_at_k(rankings, targets, k) == recall_at_k(pr, pt, k)
        assert ndcg_at_k(rankings, targets, k) == ndcg_at_k(pr, pt, k)


def test_miss_rate_identity_exact():
    r = np.random.default_rng(0).random(1_000_000)
    assert np.all((1.0 - r) + r == 1.0)


def test_delta_recall():
    a = EvalReport({5: 0.3}, {}, {}, 1)
    b = EvalReport({5: 0.25}, {}, {}, 1)
    assert delta_recall(a, a, 5) == 0.0
    assert delta_recall(a, b, 5) == pytest.approx(0.05)
    assert delta_recall(a, b, 5) == -delta_recall(b, a, 5)


def test_report_round_trip(tmp_path):
    rankings, targets = random_case(3)
    rep = evaluate(rankings, targets)
    write_report(rep, tmp_path / "r.json", extra={"model_params": 10})
    back = read_report(tmp_path / "r.json")
    assert back.recall == rep.recall and back.ndcg == rep.ndcg and back.mr == rep.mr
    assert back.n_users == 200 and set(rep.to_json()) == {"recall", "ndcg", "mr", "n_users"}
