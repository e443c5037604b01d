"""One test per acceptance criterion; each prints a PASS/FAIL line.

The lines are also repeated in the pytest terminal summary.
"""

import contextlib
import time

import numpy as np
import pytest

from grscale import autodiff as ad
from grscale.corpus import SplitSpec, prepare_logs, split
from grscale.decode import DecodeConfig, batch_next_items, constrained_beam_search
from grscale.embed import EmbeddingMatrix, SyntheticEmbedSpec, synth_embeddings
from grscale.eval import mr_at_k, recall_at_k
from grscale.models import (
    AdapterConfig,
    SasrecConfig,
    Seq2SeqConfig,
    TrainConfig,
    attach_adapter,
    build_sasrec,
    build_tiger,
    sasrec_param_count,
    tiger_param_count,
    train_tiger,
)
from grscale.scaling import ScalingPoint, eval_eq, fit, heldout_error, huber
from grscale.synthetic import PlantedSpec, planted_corpus, planted_logs
from grscale.tokenizer import SidCodebooks, SidConfig, assign_batch, train_tokenizer
from grscale.trie import EOS, SequenceTrie, SidVocab, build_item_trie
from oracles import TableModel, enumerate_ranking, nearest_codes, random_trie_sequences
from test_autodiff import _op_cases, t64

RESULTS = {}


@contextlib.contextmanager
def criterion(n, title):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        RESULTS[n] = f"criterion {n} FAIL  {title} ({time.perf_counter() - t0:.1f}s): {exc}".splitlines()[0]
        print(RESULTS[n])
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    RESULTS[n] = f"criterion {n} PASS  {title} ({time.perf_counter() - t0:.1f}s) {extra}".rstrip()
    print(RESULTS[n])


def test_criterion_1_constrained_decoding_oracle():
    with criterion(1, "constrained decoding equals exhaustive enumeration") as d:
        t0 = time.perf_counter()
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng([seed, 99])
            seqs = random_trie_sequences(rng, np.arange(3, 9), max_count=64, max_len=4)
            trie = SequenceTrie.build((s, j) for j, s in enumerate(seqs))
            model = TableModel(9, seed)
            ctx = tuple(int(t) for t in rng.integers(3, 9, 3))
            got = constrained_beam_search(model, ctx, DecodeConfig(len(seqs), 5, trie))
            want = enumerate_ranking(lambda p: model.logits(ctx, p), seqs, EOS)
            assert [g[0] for g in got] == [w[0] for w in want], f"order differs on instance {seed}"
            worst = max(worst, max(abs(g[1] - w[1]) for g, w in zip(got, want)))
        elapsed = time.perf_counter() - t0
        assert worst < 1e-6
        assert elapsed < 30
        d["max_score_diff"] = f"{worst:.1e}"


def test_criterion_2_quantization_oracle():
    with criterion(2, "residual assignment equals exhaustive search, reconstruction bitwise") as d:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2)
        done = 0
        while done < 1000:
            dim, L, W = int(rng.integers(1, 17)), int(rng.integers(1, 5)), int(rng.integers(1, 17))
            books = SidCodebooks([rng.normal(size=(W, dim)).astype(np.float32) for _ in range(L)])
            h = rng.normal(size=(50, dim)).astype(np.float32)
            codes, _, recon = assign_batch(h, books)
            for i in range(len(h)):
                assert codes[i].tolist() == nearest_codes(h[i], books.levels)
            manual = np.zeros_like(recon)
            for l, book in enumerate(books.levels):
                manual = manual + book[codes[:, l]].astype(np.float64)
            assert recon.tobytes() == manual.tobytes()
            done += len(h)
        elapsed = time.perf_counter() - t0
        assert elapsed < 10
        d["embeddings"] = done


def _model_grad_cases(rng):
    """Small float64 TIGER and SASRec graphs, each with an adapter attached."""
    n_items = 12
    ids = tuple(f"m{j}" for j in range(n_items))
    W = 4
    codes = np.stack([np.arange(n_items) // W, np.arange(n_items) % W], axis=1)
    from grscale.tokenizer import SidAssignment

    sa = SidAssignment(ids, codes, np.zeros(n_items, dtype=np.int64))
    vocab = SidVocab.for_assignment(sa, (W, W))
    aux = EmbeddingMatrix(rng.normal(size=(n_items, 5)).astype(np.float32), ids)
    d = int(rng.choice([4, 8]))
    heads = int(rng.integers(1, 3))
    tiger = build_tiger(Seq2SeqConfig(layers=1, d_model=d, heads=heads, d_kv=3, d_ff=6, dropout=0.0,
                                      vocab_size=vocab.size, max_positions=9, sid_length=3), vocab,
                        seed=int(rng.integers(1 << 30)), dtype=np.float64).bind_items(sa)
    attach_adapter(tiger, aux, AdapterConfig(hidden_dim=3, zero_init=False), seed=1)
    sas = build_sasrec(SasrecConfig(layers=1, d_model=d, heads=heads if d % heads == 0 else 1, max_positions=4,
                                    item_count=n_items, dropout=0.0), ids, seed=int(rng.integers(1 << 30)),
                       dtype=np.float64)
    attach_adapter(sas, aux, AdapterConfig(hidden_dim=3, zero_init=False), seed=2)
    # O(1) weights keep gradients well above finite-difference roundoff
    for m in (tiger, sas):
        for t in m.trainable().values():
            t.data = rng.normal(scale=0.5, size=t.data.shape)
    hist = [tuple(rng.choice(ids, int(rng.integers(1, 4)), replace=False)) for _ in range(2)]
    tgt = list(rng.choice(ids, 2))
    return [("tiger+adapter", tiger, hist, tgt), ("sasrec+adapter", sas, hist, tgt)]


def test_criterion_3_gradient_correctness():
    with criterion(3, "finite-difference gradients for every op and both models") as d:
        t0 = time.perf_counter()
        worst = 0.0
        with ad.precision("float64"):
            for seed in range(50):
                rng = np.random.default_rng([seed, 3])
                shape = tuple(int(s) for s in rng.integers(1, 5, size=3))
                shape = (shape[0], shape[1], shape[2] + 1)
                for name, (fn, arrays) in _op_cases(rng, shape).items():
                    inputs = [t64(a) for a in arrays]
                    err = ad.check_gradients(lambda: fn(*inputs), inputs, eps=1e-4)
                    assert err < 1e-5, f"{name} seed {seed}: {err:.2e}"
                    worst = max(worst, err)
                for name, model, hist, tgt in _model_grad_cases(rng):
                    params = list(model.trainable().values())
                    # key biases have an identically zero gradient (softmax shift invariance)
                    err = ad.check_gradients(lambda: model.loss(hist, tgt), params, eps=1e-4, max_entries=3,
                                             rng=np.random.default_rng(seed), floor=1e-6)
                    assert err < 1e-5, f"{name} seed {seed}: {err:.2e}"
                    worst = max(worst, err)
        elapsed = time.perf_counter() - t0
        assert elapsed < 120
        d["worst_rel_err"] = f"{worst:.1e}"


def _recovery(form, params, sizes, fixed=None):
    pts = [ScalingPoint(s, eval_eq(form, params, s)) for s in sizes]
    res = fit(form, pts, fixed=fixed or {})
    pred = np.array([eval_eq(form, res.params, p.sizes) for p in pts])
    err = float(np.max(np.abs(pred - np.array([p.recall for p in pts]))))
    return res.r_square, err


def test_criterion_4_scaling_fit_recovery():
    with criterion(4, "noise-free scaling fits recovered; free beta beats beta=0 held out") as d:
        t0 = time.perf_counter()
        eq4 = {"R0": 0.30, "A": 5.0, "B": 2.0, "gamma": 0.05, "beta": 0.02, "a": 0.40, "b": 0.35}
        grid4 = [{"N_LLM": m, "N_LoRA": r * 2**20} for m in (0.6e9, 1.7e9, 4e9, 8e9, 14e9) for r in (8, 16, 24, 32, 40)]
        cases = {
            "eq2": ({"R0": 0.4, "A": 3.0, "B": 1.5, "a": 0.3, "b": 0.25},
                    [{"N_SI": si, "N_CF": cf} for si in (1e5, 1e6, 1e7, 1e8, 1e9) for cf in (1e4, 1e5, 1e6, 1e7, 1e8)],
                    None),
            "eq3": ({"R0": 0.3, "A": 2.0, "B": 0.5, "a": 0.3, "b": 0.15, "gamma1": 0.0, "gamma2": 0.0},
                    [{"N_RS": n, "N_LLM": 1e9, "N_QT": 1e5} for n in np.geomspace(3e5, 2e8, 12)],
                    {"gamma1": 0.0, "gamma2": 0.0}),
            "eq4": (eq4, grid4, None),
        }
        for form, (p, sizes, fixed) in cases.items():
            r2, err = _recovery(form, p, sizes, fixed)
            assert r2 >= 0.9999, f"{form} R^2 {r2}"
            assert err < 1e-6, f"{form} max error {err:.2e}"
            d[form] = f"{err:.1e}"
        pts = [ScalingPoint(s, eval_eq("eq4", eq4, s)) for s in grid4]
        free = heldout_error("eq4", pts, 0.2, seed=0)
        pinned = heldout_error("eq4", pts, 0.2, seed=0, fixed={"beta": 0.0})
        assert free < pinned
        d["heldout"] = f"{free:.1e}<{pinned:.1e}"
        assert time.perf_counter() - t0 < 60


def test_criterion_5_algebraic_identities():
    with criterion(5, "eq8 = eq7 - eq6, MR + Recall = 1, Huber smooth at sigma") as d:
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(1000):
            p = {"R0": rng.uniform(0.2, 0.9), "A": rng.uniform(0.1, 10), "B": rng.uniform(0.1, 10),
                 "a": rng.uniform(0.05, 1.5), "b": rng.uniform(0.05, 1.5), "gamma": rng.uniform(0, 1)}
            s = {"N_LoRA": 10 ** rng.uniform(5, 9), "N_LLM": 10 ** rng.uniform(8, 10), "N_SA": 10 ** rng.uniform(3, 8)}
            diff = eval_eq("eq7", p, s) - eval_eq("eq6", p, s) - eval_eq("eq8", {"B": p["B"], "b": p["b"]}, s)
            worst = max(worst, abs(diff))
        assert worst < 1e-12
        items = list(range(40))
        for seed in range(20):
            r = np.random.default_rng(seed)
            rankings = [list(r.permutation(items)[:10]) for _ in range(97)]
            targets = list(r.integers(0, 40, 97))
            for k in (1, 5, 10):
                assert mr_at_k(rankings, targets, k) + recall_at_k(rankings, targets, k) == 1.0
        s, h = 0.03, 1e-7
        assert huber(s) == 0.5 * s * s == s * (s - 0.5 * s)
        left = (huber(s - h) - huber(s - 2 * h)) / h
        right = (huber(s + 2 * h) - huber(s + h)) / h
        assert abs(left - s) < 1e-6 and abs(right - s) < 1e-6
        d["eq8_max_diff"] = f"{worst:.1e}"


RS_TABLE = {336_000: (1, 64, 3, 64, 512), 778_000: (2, 64, 3, 64, 512), 1_900_000: (5, 64, 3, 64, 512),
            3_300_000: (9, 64, 3, 64, 512), 6_700_000: (3, 128, 6, 64, 1024), 13_000_000: (4, 128, 6, 64, 1024),
            21_000_000: (7, 128, 6, 64, 1024), 43_000_000: (8, 192, 9, 64, 1536),
            88_000_000: (9, 320, 15, 64, 2560), 192_000_000: (20, 384, 18, 64, 3072)}
SA_TABLE = {98_304: (2, 64, 2), 786_432: (4, 128, 4), 1_572_864: (8, 128, 4), 6_291_456: (8, 256, 8),
            25_165_824: (8, 512, 8), 75_497_472: (24, 512, 8)}


def test_criterion_6_parameter_counts():
    with criterion(6, "scaling-table parameter counts within 5% for >= 3 rows per model") as d:
        rs_ok = []
        for target, (L, dm, h, dkv, dff) in RS_TABLE.items():
            n = tiger_param_count(Seq2SeqConfig(layers=L, d_model=dm, heads=h, d_kv=dkv, d_ff=dff, vocab_size=775,
                                                max_positions=80, sid_length=4))
            if abs(n - target) / target <= 0.05:
                rs_ok.append(target)
        sa_ok = []
        for target, (L, dm, h) in SA_TABLE.items():
            n = sasrec_param_count(SasrecConfig(layers=L, d_model=dm, heads=h, item_count=1))
            if abs(n - target) / target <= 0.05:
                sa_ok.append(target)
        assert len(rs_ok) >= 3, rs_ok
        assert len(sa_ok) >= 3, sa_ok
        assert 98_304 in sa_ok
        d["rs_rows"] = len(rs_ok)
        d["sasrec_rows"] = len(sa_ok)


def _planted(seed=0):
    es = SyntheticEmbedSpec(dim=32, n_clusters=10, cluster_spread=0.1, seed=seed)
    corpus = planted_corpus(500, es)
    logs = planted_logs(corpus, es, PlantedSpec(n_items=500, n_users=2000, p_stay=0.9, seed=seed))
    logs, _ = prepare_logs(corpus, logs, 20)
    return synth_embeddings(corpus, es), split(logs, SplitSpec("leave-one-out", 0, 0))


def _tiger_for(vocab, seed, history_items=10):
    cfg = Seq2SeqConfig(layers=2, d_model=64, heads=4, d_kv=16, d_ff=128, dropout=0.1, vocab_size=vocab.size,
                        max_positions=vocab.sid_length * history_items, sid_length=vocab.sid_length)
    return build_tiger(cfg, vocab, seed=seed)


@pytest.mark.slow
def test_criterion_7_end_to_end_planted_signal():
    with criterion(7, "end-to-end planted signal Recall@10 >= 0.10") as d:
        t0 = time.perf_counter()
        emb, sp = _planted()
        W = int(np.ceil(np.sqrt(len(emb.ids))))  # 256 capped to the catalog
        books, sa, _ = train_tokenizer(emb, SidConfig(3, min(256, W), seed=0), iters=20)
        vocab = SidVocab.for_assignment(sa, books.sizes)
        trie = build_item_trie(sa, vocab)
        model = _tiger_for(vocab, 0)
        train_tiger(model, sp, sa, TrainConfig(epochs=3, batch_size=64, lr=1e-3, eval_valid=False))
        ranked = batch_next_items(model, [e.history for e in sp.test], 10, trie)
        rec = recall_at_k(ranked, [e.target for e in sp.test], 10)
        elapsed = time.perf_counter() - t0
        d["recall@10"] = f"{rec:.4f}"
        assert rec >= 0.10
        assert elapsed < 15 * 60


@pytest.mark.slow
def test_criterion_8_adapter_effect_direction():
    with criterion(8, "semantic adapter improves Recall@5 with impoverished SIDs, 3/3 seeds") as d:
        emb, sp = _planted()
        books, sa, _ = train_tokenizer(emb, SidConfig(1, 8, seed=0), iters=20)
        vocab = SidVocab.for_assignment(sa, books.sizes)
        trie = build_item_trie(sa, vocab)
        targets = [e.target for e in sp.test]
        wins = []
        for seed in range(3):
            scores = []
            for use in (False, True):
                model = _tiger_for(vocab, seed)
                if use:
                    attach_adapter(model, emb, AdapterConfig(hidden_dim=64), seed=seed)
                train_tiger(model, sp, sa, TrainConfig(epochs=8, batch_size=64, lr=1e-3, seed=seed, eval_valid=False))
                ranked = batch_next_items(model, [e.history for e in sp.test], 5, trie)
                scores.append(recall_at_k(ranked, targets, 5))
            d[f"seed{seed}"] = f"{scores[0]:.4f}->{scores[1]:.4f}"
            wins.append(scores[1] > scores[0])
        assert all(wins), d
