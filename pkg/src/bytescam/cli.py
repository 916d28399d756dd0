"""Command-line interface: fetch, tokenize, build-vocab, train, evaluate, predict, ablation.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure
(network trouble, divergence).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import model as M
from . import train as T
from .errors import BytescamError, InvalidAddress, NotAContract
from .features import NgramVocabulary, build_vocab, encode
from .ingest import (
    DEFAULT_CACHE_DIR,
    BytecodeCache,
    ContractRecord,
    Dataset,
    fetch_bytecode,
    load_dataset,
    normalize_address,
    read_address_list,
    save_dataset,
)
from .tokenizer import normalize_hex, opcode_name, render_mnemonics, tokenize

log = logging.getLogger("bytescam")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
ENDPOINT_ENV = "SCS_ENDPOINT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared option groups ----------------------------------------------------------


def _add_network_args(p):
    p.add_argument("--endpoint", help=f"RPC or explorer URL (default: ${ENDPOINT_ENV} or --config)")
    p.add_argument("--endpoint-style", choices=("rpc", "explorer"), default=None,
                   help="node JSON-RPC eth_getCode, or explorer proxy API (default rpc)")
    p.add_argument("--config", type=Path, help="JSON file with endpoint / endpoint_style / cache_dir")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"bytecode cache (default {DEFAULT_CACHE_DIR})")
    p.add_argument("--timeout", type=float, default=30.0)


def _network(args):
    conf = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            conf = json.load(f)
    endpoint = args.endpoint or conf.get("endpoint") or os.environ.get(ENDPOINT_ENV)
    style = args.endpoint_style or conf.get("endpoint_style", "rpc")
    cache = BytecodeCache(args.cache_dir or conf.get("cache_dir", DEFAULT_CACHE_DIR))
    return endpoint, style, cache


def _fetch_one(address, args):
    endpoint, style, cache = _network(args)
    hit = cache.get(address)
    if hit is not None:
        return hit
    if not endpoint:
        raise UsageError(f"{address} is not cached and no --endpoint was given")
    return fetch_bytecode(address, endpoint, cache=cache, style=style, timeout=args.timeout)


def _add_model_args(p):
    g = p.add_argument_group("model")
    d = M.ModelConfig()
    g.add_argument("--n", type=int, default=d.n, choices=(1, 2, 3, 4), help="n-gram order")
    g.add_argument("--embed-dim", type=int, default=d.embed_dim)
    g.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    g.add_argument("--cell", choices=sorted(M.CELLS), default=d.cell)
    g.add_argument("--attention", action=argparse.BooleanOptionalAction, default=d.attention)
    g.add_argument("--lam", type=float, default=d.lam, help="L2 coefficient")
    g.add_argument("--max-len", type=int, default=d.max_len, help="n-grams kept per contract")
    g.add_argument("--embedding", choices=M.EMBEDDINGS, default=d.embedding)
    g = p.add_argument_group("training")
    t = T.TrainConfig()
    g.add_argument("--epochs", type=int, default=t.epochs)
    g.add_argument("--batch-size", type=int, default=t.batch_size)
    g.add_argument("--lr", type=float, default=t.lr)
    g.add_argument("--beta1", type=float, default=t.beta1)
    g.add_argument("--beta2", type=float, default=t.beta2)
    g.add_argument("--adam-eps", type=float, default=t.adam_eps)
    g.add_argument("--clip-norm", type=float, default=t.clip_norm, help="global gradient-norm cap (default off)")
    g.add_argument("--undersample-benign-to", type=int, default=t.undersample_benign_to)
    g.add_argument("--split", type=float, nargs=3, default=list(t.split), metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--min-count", type=int, default=t.min_count)
    g.add_argument("--max-size", type=int, default=t.max_size)


def _train_config(args):
    try:
        mcfg = M.ModelConfig(
            n=args.n, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim, cell=args.cell,
            attention=args.attention, lam=args.lam, max_len=args.max_len, embedding=args.embedding,
        )
        return T.TrainConfig(
            seed=args.seed, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
            beta1=args.beta1, beta2=args.beta2, adam_eps=args.adam_eps, clip_norm=args.clip_norm,
            undersample_benign_to=args.undersample_benign_to, split=tuple(args.split),
            min_count=args.min_count, max_size=args.max_size, model=mcfg,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- subcommands -----------------------------------------------------------------------


def cmd_fetch(args):
    entries = [(a, None, None) for a in args.addresses]
    if args.list:
        entries += read_address_list(args.list)
    try:
        entries = [(normalize_address(a), lab, kind) for a, lab, kind in entries]
    except InvalidAddress as exc:
        raise UsageError(str(exc)) from exc
    if not entries:
        raise UsageError("no addresses given")
    records, failures = [], []
    for i, (addr, label, kind) in enumerate(entries, start=1):
        try:
            code = _fetch_one(addr, args)
        except BytescamError as exc:
            failures.append((addr, exc))
            print(f"[{i}/{len(entries)}] {addr} FAILED: {exc}", file=sys.stderr)
            if not args.keep_going:
                break
            continue
        print(f"[{i}/{len(entries)}] {addr} ok ({len(code) // 2} bytes)", file=sys.stderr)
        records.append(ContractRecord(addr, code, label, kind))
    if args.out:
        save_dataset(Dataset(records, args.provenance), args.out)
    if failures:
        print(f"{len(failures)} of {len(entries)} addresses failed:", file=sys.stderr)
        for addr, exc in failures:
            print(f"  {addr}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return max(getattr(exc, "exit_code", EXIT_DATA) for _, exc in failures)
    return EXIT_OK


def _read_target(target, args):
    """Bytecode from a file path, or from the cache/endpoint for an address."""
    path = Path(target)
    if path.is_file():
        code = normalize_hex(path.read_text(encoding="utf-8"))
        if not code:
            raise NotAContract(f"{target} holds no bytecode")
        return None, code
    try:
        address = normalize_address(target)
    except InvalidAddress:
        raise UsageError(f"{target!r} is neither a file nor an address") from None
    return address, _fetch_one(address, args)


def cmd_tokenize(args):
    _, code = _read_target(args.target, args)
    for tok in tokenize(code):
        print(f"{tok}\t{opcode_name(int(tok, 16))}" if args.mnemonic else tok)
    return EXIT_OK


def cmd_build_vocab(args):
    ds = load_dataset(args.dataset)
    records = list(ds)
    if args.train_split:
        records = T.split_dataset(ds, args.seed)[0]
    vocab = build_vocab([tokenize(r.bytecode_hex) for r in records], args.n, args.min_count, args.max_size)
    vocab.save(args.out)
    print(f"vocabulary: n={vocab.n} size={vocab.size} sha256={vocab.sha256()}", file=sys.stderr)
    return EXIT_OK


def _print_scores(metrics, stream=sys.stdout):
    for key in ("accuracy", "precision", "recall", "f1"):
        print(f"{key:<10} {getattr(metrics, key):.6f}", file=stream)


def cmd_train(args):
    cfg = _train_config(args)
    ds = load_dataset(args.dataset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = T.run_experiment(ds, cfg)
    vocab_path = out / "vocab.tsv"
    exp.vocab.save(vocab_path)
    M.save_checkpoint(exp.params, exp.model_cfg, exp.vocab.sha256(), out / "model.ckpt")
    exp.history.save(out / "history.csv")
    save_dataset(Dataset(exp.splits[2], f"test split of {args.dataset} (seed {cfg.seed})"), out / "test.jsonl")
    extra = {"best_epoch": exp.history.best_epoch, "param_count": M.param_count(exp.model_cfg),
             "model": exp.model_cfg.name, "n": exp.model_cfg.n}
    (out / "metrics.json").write_text(T.metrics_json(exp.test_metrics, extra), encoding="utf-8")
    (out / "config.json").write_text(
        json.dumps(T.config_dict(replace(cfg, model=exp.model_cfg)), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"model {exp.model_cfg.name}, {M.param_count(exp.model_cfg)} parameters, "
          f"vocabulary {exp.vocab.size}, best epoch {exp.history.best_epoch}")
    print("test split (natural class distribution):")
    _print_scores(exp.test_metrics)
    return EXIT_OK


def _load_model(args):
    vocab = NgramVocabulary.load(args.vocab)
    params, cfg, _ = M.load_checkpoint(args.checkpoint, expected_vocab_hash=vocab.sha256())
    return vocab, params, cfg


def cmd_evaluate(args):
    vocab, params, cfg = _load_model(args)
    ds = load_dataset(args.dataset)
    metrics = T.evaluate(params, cfg, T.encode_records(list(ds), vocab, cfg.max_len))
    text = T.metrics_json(metrics)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    _print_scores(metrics)
    return EXIT_OK


def build_report(params, cfg, vocab, code, address=None, model_id=None, top_k=10):
    """Structured scam report for one contract's bytecode."""
    tokens = tokenize(code)
    enc = encode(tokens, vocab, cfg.max_len)
    res = M.forward(params, cfg, enc)
    m = enc.effective_length
    weights = res.attention_weights if res.attention_weights is not None else np.full(m, 1.0 / m)
    grams = [tokens[i:i + vocab.n] for i in range(m)]
    best = {}
    for gram, w in zip(("".join(g) for g in grams), weights):
        if gram not in best or w > best[gram]:
            best[gram] = float(w)
    ranked = sorted(best.items(), key=lambda kv: -kv[1])[:top_k]
    return {
        "address": address,
        "probability": res.prob,
        "label": "scam" if M.predict_label(res.prob) else "safe",
        "model": model_id,
        "architecture": cfg.name,
        "weights_from": "attention" if cfg.attention else "uniform",
        "n_ngrams": enc.true_length,
        "truncated": enc.true_length > cfg.max_len,
        "top_features": [{"ngram": g, "mnemonics": render_mnemonics(g), "weight": w} for g, w in ranked],
    }


def cmd_predict(args):
    vocab, params, cfg = _load_model(args)
    address, code = _read_target(args.target, args)
    if vocab.n != cfg.n:
        raise UsageError(f"vocabulary n={vocab.n} does not match model n={cfg.n}")
    report = build_report(params, cfg, vocab, code, address, M.file_digest(args.checkpoint)[:16], args.top_k)
    if args.pretty:
        print(f"contract     {report['address'] or args.target}")
        print(f"verdict      {report['label'].upper()}  (p_scam = {report['probability']:.4f})")
        print(f"model        {report['architecture']} [{report['model']}]")
        print(f"top n-grams ({report['weights_from']} weights):")
        for f in report["top_features"]:
            print(f"  {f['weight']:.4f}  {f['ngram']:<10} {f['mnemonics']}")
    else:
        print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_ablation(args):
    cfg = _train_config(args)
    ds = load_dataset(args.dataset)
    only = [o for chunk in (args.only or []) for o in chunk.split(",") if o.strip()]
    known = {name.lower() for _, name, _ in T.ablation_plan(cfg)}
    unknown = [o for o in only if o.strip().lower() not in known]
    if unknown:
        raise UsageError(f"unknown ablation rows {unknown}; choose from {sorted(known)}")
    rows = T.run_ablation(ds, cfg, only=only or None, baseline_lam=args.baseline_lam,
                          baseline_epochs=args.baseline_epochs)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.tsv").write_text(T.ablation_tsv(rows), encoding="utf-8")
    sys.stdout.write(T.ablation_pretty(rows))
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="bytescam", description="Scam detection for EVM contracts from bytecode n-grams.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fetch", help="download bytecode for addresses into the cache")
    s.add_argument("addresses", nargs="*")
    s.add_argument("--list", type=Path, help="file of address[,label[,scam_kind]] lines")
    s.add_argument("--out", type=Path, help="write fetched records as a dataset file")
    s.add_argument("--provenance", default="", help="free-text note stored in the dataset header")
    s.add_argument("--keep-going", action="store_true", help="continue past failed addresses")
    _add_network_args(s)
    s.set_defaults(func=cmd_fetch)

    s = sub.add_parser("tokenize", help="print byte tokens of a bytecode file or address")
    s.add_argument("target")
    s.add_argument("--mnemonic", action="store_true", help="add the opcode mnemonic column")
    _add_network_args(s)
    s.set_defaults(func=cmd_tokenize)

    s = sub.add_parser("build-vocab", help="build an n-gram vocabulary from a dataset")
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--n", type=int, default=2, choices=(1, 2, 3, 4))
    s.add_argument("--min-count", type=int, default=1)
    s.add_argument("--max-size", type=int, default=None)
    s.add_argument("--train-split", action="store_true", help="count only the seeded training split")
    s.set_defaults(func=cmd_build_vocab)

    s = sub.add_parser("train", help="split, rebalance, train and test")
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--out-dir", required=True, type=Path)
    _add_model_args(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a checkpoint on a labeled dataset")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--vocab", required=True, type=Path)
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--out", type=Path, help="write metrics JSON here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="detection report for one contract")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--vocab", required=True, type=Path)
    s.add_argument("target", help="bytecode file or contract address")
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--pretty", action="store_true")
    _add_network_args(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("ablation", help="embedding and architecture comparison tables")
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--out-dir", type=Path)
    s.add_argument("--only", action="append", help="row names, e.g. gru+attention (repeatable, comma-separated)")
    s.add_argument("--baseline-lam", type=float, default=1e-4)
    s.add_argument("--baseline-epochs", type=int, default=2000)
    _add_model_args(s)
    s.set_defaults(func=cmd_ablation)

    for s in sub.choices.values():
        s.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bytescam {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BytescamError as exc:
        print(f"bytescam {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_RUNTIME)
    except FileNotFoundError as exc:
        print(f"bytescam {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
