"""Inject item-content embeddings through an MLP adapter when SIDs are too coarse.

With one level of 8 codewords most items collide, so the decoder must lean
on the disambiguation digit. Adding the true embeddings at each item's first
SID token gives the encoder the cluster signal the coarse codes lose.
"""

from grscale.corpus import SplitSpec, prepare_logs, split
from grscale.decode import batch_next_items
from grscale.embed import SyntheticEmbedSpec, synth_embeddings
from grscale.eval import recall_at_k
from grscale.models import AdapterConfig, Seq2SeqConfig, TrainConfig, attach_adapter, build_tiger, train_tiger
from grscale.synthetic import PlantedSpec, planted_corpus, planted_logs
from grscale.tokenizer import SidConfig, train_tokenizer
from grscale.trie import SidVocab, build_item_trie

spec = SyntheticEmbedSpec(dim=32, n_clusters=10, cluster_spread=0.1, seed=0)
corpus = planted_corpus(500, spec)
logs, _ = prepare_logs(corpus, planted_logs(corpus, spec, PlantedSpec(n_users=2000)), 20)
sp = split(logs, SplitSpec())
emb = synth_embeddings(corpus, spec)
books, sa, _ = train_tokenizer(emb, SidConfig(1, 8, seed=0))
vocab = SidVocab.for_assignment(sa, books.sizes)
trie = build_item_trie(sa, vocab)
print(f"8 codewords for 500 items: collision groups up to {sa.max_disambig}")

for use in (False, True):
    cfg = Seq2SeqConfig(layers=2, d_model=64, heads=4, d_kv=16, d_ff=128, vocab_size=vocab.size,
                        max_positions=20, sid_length=vocab.sid_length)
    model = build_tiger(cfg, vocab, seed=0)
    if use:
        attach_adapter(model, emb, AdapterConfig(hidden_dim=64))
    train_tiger(model, sp, sa, TrainConfig(epochs=8, eval_valid=False))
    ranked = batch_next_items(model, [e.history for e in sp.test], 5, trie)
    rec = recall_at_k(ranked, [e.target for e in sp.test], 5)
    print(f"adapter={use}: {model.num_params():,} parameters, test Recall@5 {rec:.4f}")
