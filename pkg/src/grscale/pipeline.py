"""File-based experiment steps behind the command line.

Each step reads its inputs from and writes its outputs to one run directory,
so steps can be chained, re-run, or inspected independently. All outputs are
recorded in ``manifest.json`` with the config hash and seed that produced them.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import corpus as C
from .decode import batch_next_items, read_decodes, write_decodes
from .embed import SyntheticEmbedSpec, load_embeddings, synth_embeddings, write_embeddings
from .eval import EvalReport, evaluate, write_report
from .models import (
    AdapterConfig,
    SasrecConfig,
    Seq2SeqConfig,
    TrainConfig,
    attach_adapter,
    build_sasrec,
    build_tiger,
    load_model_params,
    save_model,
    select_lr,
    train_sasrec,
    train_tiger,
)
from .scaling import FitOptions, fit, heldout_error, read_points
from .synthetic import PlantedSpec, planted_corpus, planted_logs
from .tokenizer import RQVAEConfig, SidConfig, read_assignment, read_codebooks, train_tokenizer, write_assignment
from .tokenizer import write_codebooks
from .trie import SidVocab, build_item_trie


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path, producer: str):
        super().__init__(f"missing upstream artifact {path} (run `{producer}` first)")
        self.path = str(path)


DEFAULTS = {
    "seed": 0,
    "data": {
        "items": None,
        "interactions": None,
        "max_seq_len": 20,
        "synthetic": {"n_items": 200, "n_users": 600, "p_stay": 0.9, "min_len": 5, "max_len": 10},
    },
    "split": {"scheme": "leave-one-out", "cold_item_count": 0, "all_prefixes": True},
    "embed": {"path": None, "dim": 32, "n_clusters": 10, "cluster_spread": 0.1, "normalize": False},
    "tokenizer": {"num_codebooks": 3, "codebook_size": 256, "level_sizes": None, "cap_to_items": True,
                  "trainer": "residual-kmeans", "iters": 20, "rqvae": {}},
    "tiger": {"layers": 2, "d_model": 64, "heads": 4, "d_kv": 16, "d_ff": 128, "dropout": 0.1,
              "history_items": 10},
    "sasrec": {"layers": 2, "d_model": 64, "heads": 2, "ff_mult": 4, "dropout": 0.1},
    "adapter": None,
    "train": {"epochs": 3, "batch_size": 64, "lr": 1e-3, "lr_grid": None, "weight_decay": 0.0,
              "max_valid_users": 300, "eval_valid": True},
    "decode": {"beam_width": 10, "batch_size": 256},
    "eval": {"ks": [5, 10]},
    "scaling": {"form": "eq4", "points": None, "residual_form": "log-log", "multistart": 32, "max_iter": 2000,
                "fixed": {}, "holdout_fraction": 0.2, "error_metric": "mse-log", "compare_beta": True},
    "report": {"runs": None},
}


# -- config -----------------------------------------------------------------------------


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k.startswith("_"):
            continue
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and base[k]:
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if node.get(k) is None:
            node[k] = {}
        if not isinstance(node[k], dict):
            raise ConfigError(f"{dotted}: {k!r} is not a section")
        node = node[k]
    node[keys[-1]] = value


def load_config(path=None, overrides=(), seed=None) -> dict:
    """Defaults, then the JSON file, then ``key.path=value`` overrides (values parsed as JSON)."""
    user = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base_dir = path.resolve().parent
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        set_dotted(user, key, value)
    if seed is not None:
        user["seed"] = seed
    cfg = _merge(DEFAULTS, user)
    cfg["_base_dir"] = str(base_dir)  # relative paths resolve here; not part of the hash
    if cfg["adapter"] is not None:
        cfg["adapter"] = {"source": "semantic", "hidden_dim": 64, **cfg["adapter"]}
        if cfg["adapter"]["source"] not in ("semantic", "cf"):
            raise ConfigError("adapter.source must be 'semantic' or 'cf'")
    return cfg


def resolve(cfg: dict, p):
    """Path from the config, relative to the config file's directory."""
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.get("_base_dir", ".")) / p


def config_hash(cfg: dict) -> str:
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(public, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# -- run directory ------------------------------------------------------------------------


class Run:
    def __init__(self, out_dir, cfg: dict, command: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.command = command
        self.hash = config_hash(cfg)
        self.seed = int(cfg["seed"])

    def path(self, name: str) -> Path:
        return self.dir / name

    def need(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(p, producer)
        return p

    def stamp(self, obj: dict) -> dict:
        return {**obj, "config_hash": self.hash, "seed": self.seed}

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def finish(self, outputs) -> None:
        """Record outputs in the manifest and snapshot the resolved config."""
        self.write_json(f"config.{self.command}.json", self.stamp({"config": self.cfg}))
        man_path = self.path("manifest.json")
        manifest = json.loads(man_path.read_text()) if man_path.exists() else {}
        for name in outputs:
            manifest[name] = {"command": self.command, "config_hash": self.hash, "seed": self.seed,
                              "sha256": hashlib.sha256(self.path(name).read_bytes()).hexdigest()}
        self.write_json("manifest.json", dict(sorted(manifest.items())))


# -- steps ----------------------------------------------------------------------------------


def _embed_spec(cfg) -> SyntheticEmbedSpec:
    e = cfg["embed"]
    return SyntheticEmbedSpec(dim=int(e["dim"]), n_clusters=int(e["n_clusters"]),
                              cluster_spread=float(e["cluster_spread"]), seed=int(cfg["seed"]),
                              normalize=bool(e["normalize"]))


def run_ingest(run: Run) -> dict:
    cfg = run.cfg
    d = cfg["data"]
    if d["items"] or d["interactions"]:
        if not (d["items"] and d["interactions"]):
            raise ConfigError("data.items and data.interactions must be given together")
        items, inter = resolve(cfg, d["items"]), resolve(cfg, d["interactions"])
        for p in (items, inter):
            if not p.exists():
                raise C.CorpusError(f"input file {p} does not exist")
        corpus, logs, stats = C.ingest(items, inter, int(d["max_seq_len"]))
    else:
        s = d["synthetic"]
        spec = PlantedSpec(n_items=int(s["n_items"]), n_users=int(s["n_users"]), p_stay=float(s["p_stay"]),
                           min_len=int(s["min_len"]), max_len=int(s["max_len"]), seed=int(cfg["seed"]))
        espec = _embed_spec(cfg)
        corpus = planted_corpus(spec.n_items, espec)
        logs, stats = C.prepare_logs(corpus, planted_logs(corpus, espec, spec), int(d["max_seq_len"]))
    sp = cfg["split"]
    assignment = C.split(logs, C.SplitSpec(sp["scheme"], int(sp["cold_item_count"]), int(cfg["seed"]),
                                           bool(sp["all_prefixes"])))
    C.write_items(corpus, run.path("items.jsonl"))
    C.write_interactions(logs, run.path("interactions.jsonl"))
    C.write_split(assignment, run.path("split.jsonl"))
    stats = run.stamp({**stats, "users": len(logs), "items": len(corpus),
                       "actions": sum(len(l.items) for l in logs),
                       "train_pairs": len(assignment.train), "cold_items": list(assignment.cold_items)})
    run.write_json("ingest_stats.json", stats)
    run.finish(["items.jsonl", "interactions.jsonl", "split.jsonl", "ingest_stats.json"])
    return stats


def run_synth_embed(run: Run):
    corpus = C.read_items(run.need("items.jsonl", "ingest"))
    matrix = synth_embeddings(corpus, _embed_spec(run.cfg))
    write_embeddings(matrix, run.path("embeddings.bin"))
    run.finish(["embeddings.bin", "embeddings.bin.index.jsonl"])
    return matrix


def _item_embeddings(run: Run):
    corpus = C.read_items(run.need("items.jsonl", "ingest"))
    src = resolve(run.cfg, run.cfg["embed"]["path"])
    if src:
        if not Path(src).exists():
            raise MissingArtifactError(src, "synth-embed")
        return load_embeddings(src, corpus)
    return load_embeddings(run.need("embeddings.bin", "synth-embed"), corpus)


def sid_config(cfg, n_items: int) -> SidConfig:
    """Codebook shape from config; with ``cap_to_items`` each level gets at most ``ceil(sqrt(n_items))`` codes."""
    t = cfg["tokenizer"]
    sizes = t["level_sizes"] or [int(t["codebook_size"])] * int(t["num_codebooks"])
    if t["cap_to_items"]:
        cap = max(2, int(np.ceil(np.sqrt(n_items))))
        sizes = [min(int(w), cap) for w in sizes]
    return SidConfig(num_codebooks=len(sizes), codebook_size=max(sizes), level_sizes=tuple(sizes),
                     trainer=t["trainer"], seed=int(cfg["seed"]))


def run_tokenize(run: Run):
    matrix = _item_embeddings(run)
    scfg = sid_config(run.cfg, len(matrix))
    t = run.cfg["tokenizer"]
    books, sa, _ = train_tokenizer(matrix, scfg, iters=int(t["iters"]), rqvae=RQVAEConfig(**t["rqvae"]))
    write_codebooks(books, run.path("codebooks.grsid"))
    write_assignment(sa, run.path("sids.jsonl"))
    run.finish(["codebooks.grsid", "sids.jsonl"])
    return books, sa


def _train_cfg(cfg, eval_valid=None) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(epochs=int(t["epochs"]), batch_size=int(t["batch_size"]), lr=float(t["lr"]),
                       weight_decay=float(t["weight_decay"]), seed=int(cfg["seed"]),
                       eval_valid=bool(t["eval_valid"]) if eval_valid is None else eval_valid,
                       max_valid_users=t["max_valid_users"])


def _tiger_setup(run: Run):
    books = read_codebooks(run.need("codebooks.grsid", "tokenize"))
    sa = read_assignment(run.need("sids.jsonl", "tokenize"))
    vocab = SidVocab.for_assignment(sa, books.sizes)
    t = run.cfg["tiger"]
    cfg = Seq2SeqConfig(layers=int(t["layers"]), d_model=int(t["d_model"]), heads=int(t["heads"]),
                        d_kv=int(t["d_kv"]), d_ff=int(t["d_ff"]), dropout=float(t["dropout"]),
                        vocab_size=vocab.size, max_positions=int(t["history_items"]) * vocab.sid_length,
                        sid_length=vocab.sid_length)
    return sa, vocab, cfg


def _build_tiger(run: Run, sa, vocab, cfg):
    model = build_tiger(cfg, vocab, seed=run.seed).bind_items(sa)
    a = run.cfg["adapter"]
    if a is not None:
        if a["source"] == "cf":
            aux = load_embeddings(run.need("cf_embeddings.bin", "train-sasrec"))
        else:
            aux = _item_embeddings(run)
        attach_adapter(model, aux, AdapterConfig(source=a["source"], hidden_dim=int(a["hidden_dim"])), seed=run.seed)
    return model


def run_train_tiger(run: Run):
    split = C.read_split(run.need("split.jsonl", "ingest"))
    sa, vocab, cfg = _tiger_setup(run)
    trie = build_item_trie(sa, vocab)
    tcfg = _train_cfg(run.cfg)
    grid = run.cfg["train"]["lr_grid"]
    metrics = run.path("tiger_metrics.jsonl")
    if grid:
        lr, _, scores = select_lr(lambda: _build_tiger(run, sa, vocab, cfg),
                                  lambda m, c: train_tiger(m, split, None, c, trie), tcfg, grid)
        tcfg = TrainConfig(**{**tcfg.__dict__, "lr": lr})
        run.write_json("lr_search.json", run.stamp({"scores": {str(k): v for k, v in scores.items()}, "best": lr}))
    model = _build_tiger(run, sa, vocab, cfg)
    result = train_tiger(model, split, None, tcfg, trie, metrics_path=metrics)
    save_model(model, run.path("tiger.ckpt"))
    run.write_json("tiger_model.json", run.stamp({"params": model.num_params(), "lr": tcfg.lr,
                                                  "losses": result.losses, "valid_recall": result.valid_recall}))
    outputs = ["tiger.ckpt", "tiger_metrics.jsonl", "tiger_model.json"] + (["lr_search.json"] if grid else [])
    run.finish(outputs)
    return model, result


def load_trained_tiger(run: Run):
    sa, vocab, cfg = _tiger_setup(run)
    model = _build_tiger(run, sa, vocab, cfg)
    load_model_params(model, run.need("tiger.ckpt", "train-tiger"))
    return model, build_item_trie(sa, vocab)


def run_train_sasrec(run: Run):
    split = C.read_split(run.need("split.jsonl", "ingest"))
    corpus = C.read_items(run.need("items.jsonl", "ingest"))
    s = run.cfg["sasrec"]
    cfg = SasrecConfig(layers=int(s["layers"]), d_model=int(s["d_model"]), heads=int(s["heads"]),
                       max_positions=int(run.cfg["data"]["max_seq_len"]), item_count=len(corpus),
                       ff_mult=int(s["ff_mult"]), dropout=float(s["dropout"]))
    model = build_sasrec(cfg, corpus.ids, seed=run.seed)
    result = train_sasrec(model, split, _train_cfg(run.cfg), metrics_path=run.path("sasrec_metrics.jsonl"))
    save_model(model, run.path("sasrec.ckpt"))
    write_embeddings(model.item_embeddings(), run.path("cf_embeddings.bin"))
    run.write_json("sasrec_model.json", run.stamp({"nonembedding_params": model.num_nonembedding_params(),
                                                   "params": model.num_params(), "losses": result.losses,
                                                   "valid_recall": result.valid_recall}))
    run.finish(["sasrec.ckpt", "sasrec_metrics.jsonl", "cf_embeddings.bin", "cf_embeddings.bin.index.jsonl",
                "sasrec_model.json"])
    return model, result


def run_decode(run: Run):
    split = C.read_split(run.need("split.jsonl", "ingest"))
    model, trie = load_trained_tiger(run)
    test = split.test
    d = run.cfg["decode"]
    results = batch_next_items(model, [e.history for e in test], int(d["beam_width"]), trie,
                               batch_size=int(d["batch_size"]), return_scores=True)
    write_decodes(run.path("decodes.jsonl"), [e.user_id for e in test], results)
    run.finish(["decodes.jsonl"])
    return results


def run_eval(run: Run) -> EvalReport:
    split = C.read_split(run.need("split.jsonl", "ingest"))
    decodes = {d["user_id"]: d["ranked_items"] for d in read_decodes(run.need("decodes.jsonl", "decode"))}
    test = split.test
    missing = [e.user_id for e in test if e.user_id not in decodes]
    if missing:
        raise C.CorpusError(f"decodes.jsonl lacks {len(missing)} test users (e.g. {missing[0]!r})")
    report = evaluate([decodes[e.user_id] for e in test], [e.target for e in test],
                      tuple(int(k) for k in run.cfg["eval"]["ks"]))
    extra = {"config_hash": run.hash, "seed": run.seed}
    model_info = run.path("tiger_model.json")
    if model_info.exists():
        extra["model_params"] = json.loads(model_info.read_text())["params"]
    write_report(report, run.path("report.json"), extra)
    run.finish(["report.json"])
    return report


def _fit_options(cfg) -> FitOptions:
    s = cfg["scaling"]
    return FitOptions(residual_form=s["residual_form"], multistart=int(s["multistart"]), seed=int(cfg["seed"]),
                      max_iter=int(s["max_iter"]), fixed=tuple(sorted((k, float(v)) for k, v in s["fixed"].items())))


def _points(run: Run):
    p = resolve(run.cfg, run.cfg["scaling"]["points"])
    if not p:
        raise ConfigError("scaling.points is required")
    if not p.exists():
        raise MissingArtifactError(p, "an experiment producing scaling points")
    return read_points(p)


def run_fit_scaling(run: Run):
    result = fit(run.cfg["scaling"]["form"], _points(run), _fit_options(run.cfg))
    obj = json.loads(result.to_json())
    run.write_json("fit.json", run.stamp(obj))
    run.finish(["fit.json"])
    return result


def run_heldout(run: Run) -> dict:
    s = run.cfg["scaling"]
    points = _points(run)
    opts = _fit_options(run.cfg)
    kw = dict(holdout_fraction=float(s["holdout_fraction"]), seed=run.seed, error_metric=s["error_metric"])
    out = {"form": s["form"], "holdout_fraction": kw["holdout_fraction"], "error_metric": s["error_metric"],
           "error": heldout_error(s["form"], points, options=opts, **kw)}
    if s["form"] == "eq4" and s["compare_beta"] and "beta" not in s["fixed"]:
        fixed = tuple(sorted(dict(opts.fixed, beta=0.0).items()))
        out["error_beta0"] = heldout_error("eq4", points, options=FitOptions(**{**opts.__dict__, "fixed": fixed}), **kw)
    run.write_json("heldout.json", run.stamp(out))
    run.finish(["heldout.json"])
    return out


REPORT_COLUMNS = ("run", "model_params", "recall@5", "recall@10", "ndcg@5", "ndcg@10")


def run_report(run: Run, runs=None) -> list[dict]:
    """Collect ``report.json`` from run directories into a Markdown table and a scaling CSV."""
    runs = runs if runs is not None else run.cfg["report"]["runs"]
    if runs is None:
        runs = sorted(str(p.parent) for p in run.dir.glob("*/report.json"))
        if run.path("report.json").exists():
            runs.insert(0, str(run.dir))
    rows = []
    for r in runs:
        p = Path(r) / "report.json"
        if not p.exists():
            raise MissingArtifactError(p, "eval")
        obj = json.loads(p.read_text())
        rep = EvalReport.from_json(obj)
        rows.append({"run": Path(r).name or str(r), "model_params": obj.get("model_params", ""),
                     "recall@5": rep.recall.get(5, ""), "recall@10": rep.recall.get(10, ""),
                     "ndcg@5": rep.ndcg.get(5, ""), "ndcg@10": rep.ndcg.get(10, "")})
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for row in rows:
        lines.append("| " + " | ".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c])
                                       for c in REPORT_COLUMNS) + " |")
    run.path("report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    run.path("scaling_curve.csv").write_text(buf.getvalue(), encoding="utf-8")
    run.finish(["report.md", "scaling_curve.csv"])
    return rows


STEPS = {
    "ingest": run_ingest,
    "synth-embed": run_synth_embed,
    "tokenize": run_tokenize,
    "train-tiger": run_train_tiger,
    "train-sasrec": run_train_sasrec,
    "decode": run_decode,
    "eval": run_eval,
    "fit-scaling": run_fit_scaling,
    "heldout": run_heldout,
    "report": run_report,
}
