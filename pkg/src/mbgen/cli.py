"""``mbgen`` command line: data, tokenizer, training, decoding and evaluation.

Every sub-command writes its artifacts atomically into ``--out`` (default
``$MBGEN_OUT`` or ``./mbgen_out``) together with ``manifest.json``: the
resolved configuration, SHA-256 hashes of the inputs it read and of the
artifacts it wrote. All randomness comes from ``--seed``.

Quickstart::

    mbgen synth-data --spec s.cfg --out d/
    mbgen fit-tokenizer --sid --data d/ --out t/
    mbgen train --data d/ --tokenizer t/tokenizer.npz --out r/
    mbgen evaluate --task target --data d/ --tokenizer t/tokenizer.npz --checkpoint r/model.npz --out e/
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("mbgen")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad inputs discovered after argument parsing (missing files and the like)."""


# ---- helpers ------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, tuple)):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _need(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


class Run:
    """Collects inputs and artifacts of one sub-command and writes the manifest."""

    def __init__(self, args, command: str):
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config: dict = {"seed": args.seed}
        self.inputs: dict[str, str] = {}
        self.artifacts: dict[str, str] = {}

    def read(self, path, what: str) -> Path:
        path = _need(path, what)
        self.inputs[what] = _sha256(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        from .numerics.checkpoint import atomic_write_text
        path = self.out / name
        atomic_write_text(path, text)
        self.artifacts[name] = _sha256(path)
        return path

    def record(self, name: str) -> None:
        self.artifacts[name] = _sha256(self.out / name)

    def finish(self) -> None:
        from .numerics.checkpoint import atomic_write_text
        manifest = {"command": self.command, "config": self.config, "inputs": self.inputs,
                    "artifacts": self.artifacts}
        atomic_write_text(self.out / "manifest.json", _json(manifest))
        log.info("wrote %s", self.out / "manifest.json")


def load_data(data_dir):
    """Dataset (and item features when present) from a directory written by synth-data or ingest."""
    from .data import ingest, load_item_features
    data_dir = _need(data_dir, "data directory")
    meta = json.loads(_need(data_dir / "dataset.json", "dataset metadata").read_text())
    ds = ingest(_need(data_dir / "dataset.csv", "dataset file"), behaviors=meta["behaviors"],
                target_behavior=meta["target_behavior"], min_count=1)
    feat_path = data_dir / "item_features.csv"
    feats = load_item_features(feat_path, ds) if feat_path.exists() else None
    return ds, feats


def _write_dataset(run: Run, ds, feats=None) -> None:
    run.write_text("dataset.csv", ds.to_csv())
    run.write_text("dataset.json", _json({"behaviors": list(ds.behaviors.names),
                                          "target_behavior": ds.behaviors.target_name,
                                          "n_users": ds.n_users, "n_items": ds.n_items,
                                          "n_interactions": ds.n_interactions,
                                          "content_hash": ds.content_hash()}))
    if feats is not None:
        lines = ["item," + ",".join(f"f{j + 1}" for j in range(feats.shape[1]))]
        for name, row in zip(ds.item_ids, feats):
            lines.append(name + "," + ",".join(repr(float(x)) for x in row))
        run.write_text("item_features.csv", "\n".join(lines) + "\n")


def _load_tokenizer(run: Run, path):
    from .tokenizer import ItemTokenizer
    return ItemTokenizer.load(run.read(path, "tokenizer"))


def _load_model(run: Run, path):
    from .seqmodel import Seq2SeqModel
    path = _need(path, "checkpoint")
    model, meta = Seq2SeqModel.load(path)
    run.inputs["checkpoint"] = _sha256(path)
    return model, meta


def _behavior_index(ds, value):
    if value is None:
        return None
    if str(value).lstrip("-").isdigit():
        b = int(value)
        if not 0 <= b < ds.n_behaviors:
            raise UsageError(f"behavior index {b} outside [0, {ds.n_behaviors})")
        return b
    try:
        return ds.behaviors.index(str(value))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _corpus_behavior_probs(ds) -> np.ndarray:
    counts = np.zeros(ds.n_behaviors)
    for u in range(ds.n_users):
        counts += np.bincount(ds.train_region(u)[1], minlength=ds.n_behaviors)
    return counts / counts.sum()


def _check_codes_fit(model, codes) -> None:
    if codes.shape[1] != model.cfg.n_digits or codes.max() >= model.cfg.codebook_size:
        raise UsageError(f"tokenizer codes ({codes.shape[1]} digits, max {codes.max()}) do not fit the "
                         f"model vocabulary (m={model.cfg.n_digits}, K={model.cfg.codebook_size})")


def _ranker(model, tok, max_items):
    from .eval import GenerativeRanker
    codes = tok.codes
    _check_codes_fit(model, codes)
    return GenerativeRanker(model, codes, model.vocab, max_items=max_items)


# ---- sub-commands ---------------------------------------------------------------

def cmd_synth_data(args) -> int:
    from .data import generate_synthetic, planted_spec
    run = Run(args, "synth-data")
    knobs = {}
    if args.spec:
        knobs = json.loads(run.read(args.spec, "spec").read_text())
    for key in ("n_users", "n_items", "n_behaviors", "n_clusters"):
        if getattr(args, key) is not None:
            knobs[key] = getattr(args, key)
    knobs["seed"] = args.seed
    try:
        spec = planted_spec(**knobs)
    except TypeError as exc:
        raise UsageError(f"bad spec file: {exc}") from None
    ds, feats, ref = generate_synthetic(spec)
    run.config["spec"] = knobs
    _write_dataset(run, ds, feats)
    run.write_text("spec.json", spec.to_json() + "\n")
    run.write_text("bayes.json", ref.to_json() + "\n")
    run.finish()
    print(f"{ds.n_users} users, {ds.n_items} items, {ds.n_interactions} interactions -> {run.out}")
    print(f"Bayes next-behavior accuracy {ref.next_behavior_accuracy:.4f}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    from .data import ingest, load_item_features
    run = Run(args, "ingest")
    behaviors = args.behaviors.split(",") if args.behaviors else None
    ds = ingest(run.read(args.input, "input"), behaviors=behaviors, target_behavior=args.target,
                min_count=args.min_count)
    feats = load_item_features(run.read(args.features, "features"), ds) if args.features else None
    run.config.update({"behaviors": behaviors, "target": args.target, "min_count": args.min_count})
    _write_dataset(run, ds, feats)
    run.finish()
    print(f"{ds.n_users} users, {ds.n_items} items, {ds.n_interactions} interactions -> {run.out}")
    return EXIT_OK


def cmd_fit_tokenizer(args) -> int:
    from .tokenizer import TokenizerConfig, build_cid, code_distribution_stats, fit_rqvae_baseline, fit_sid
    run = Run(args, "fit-tokenizer")
    ds, feats = load_data(args.data)
    run.inputs["dataset"] = ds.content_hash()
    kind = "cid" if args.cid else "rq" if args.rq else "sid"
    if kind != "cid" and feats is None:
        raise UsageError(f"--{kind} needs item features (item_features.csv in {args.data})")
    cfg = TokenizerConfig(codebook_size=args.K, n_digits=args.m, seed=args.seed)
    if kind == "sid":
        tok = fit_sid(feats, cfg)
    elif kind == "cid":
        tok = build_cid(ds.n_items, args.K, args.m, seed=args.seed)
    else:
        tok, _ = fit_rqvae_baseline(feats, cfg, levels=args.m)
    run.config.update({"kind": kind, "K": args.K, "m": args.m})
    tok.save(run.out / "tokenizer.npz")
    run.record("tokenizer.npz")
    run.write_text("codes.csv", tok.assignment.to_text(ds.item_ids))
    stats = code_distribution_stats(tok.codes[:, :args.m], args.K)
    run.write_text("code_stats.json", _json({"kind": kind, "injective": tok.assignment.is_injective(),
                                             **stats.as_dict()}))
    run.finish()
    print(f"{kind} codes for {ds.n_items} items: injective={tok.assignment.is_injective()}, "
          f"collisions={stats.collisions}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .eval import evaluate_task
    from .seqmodel import ModelConfig, Seq2SeqModel, TrainConfig, build_examples, train
    if args.val_users > 0 and args.val_beams < 10:
        raise UsageError(f"--val-beams {args.val_beams}: validation ranks a top-10 list and needs at least 10 beams")
    run = Run(args, "train")
    ds, _ = load_data(args.data)
    run.inputs["dataset"] = ds.content_hash()
    tok = _load_tokenizer(run, args.tokenizer)
    file_cfg = json.loads(run.read(args.config, "config").read_text()) if args.config else {}
    mdict = {**file_cfg.get("model", {}), "n_behaviors": ds.n_behaviors, "codebook_size": tok.assignment.codebook_size,
             "n_digits": tok.codes.shape[1], "seed": args.seed}
    for key in ("d_model", "experts", "dropout", "max_items", "n_users"):
        if getattr(args, key) is not None:
            mdict[key] = getattr(args, key)
    tdict = {**file_cfg.get("train", {}), "seed": args.seed}
    for key in ("steps", "batch_size", "lr", "warmup", "eval_every"):
        if getattr(args, key) is not None:
            tdict[key] = getattr(args, key)
    if args.sliding_window:
        tdict["sliding_window"] = True
    try:
        mcfg, tcfg = ModelConfig.from_dict(mdict), TrainConfig.from_dict(tdict)
    except TypeError as exc:
        raise UsageError(f"bad config: {exc}") from None
    model = Seq2SeqModel(mcfg)
    _check_codes_fit(model, tok.codes)
    examples = build_examples(ds, tok.codes, model.vocab, sliding_window=tcfg.sliding_window,
                              max_items=mcfg.max_items)
    val_fn = None
    if args.val_users > 0:
        ranker = _ranker(model, tok, mcfg.max_items)

        def val_fn(_model):
            return evaluate_task(ranker, ds, "behavior-specific", "valid", n_beams=args.val_beams,
                                 max_users=args.val_users).ndcg[10]
    run.config.update({"model": mcfg.to_dict(), "train": tcfg.to_dict(), "val_users": args.val_users,
                       "val_beams": args.val_beams})
    res = train(model, examples, tcfg, val_fn=val_fn, checkpoint_path=run.out / "model.npz",
                checkpoint_extra={"tokenizer": run.inputs["tokenizer"], "dataset": ds.content_hash()})
    run.record("model.npz")
    # wall-clock columns stay out of the hashed log so reruns are byte-identical
    rows = [{k: v for k, v in r.items() if k != "seconds"} for r in res.log_rows]
    from .eval import rows_csv
    run.write_text("train_log.csv", rows_csv(rows))
    run.finish()
    print(f"trained {tcfg.steps} steps on {len(examples)} examples in {res.seconds:.1f}s: "
          f"loss {res.initial_loss:.4f} -> {res.final_loss:.4f}"
          + (f", best valid NDCG@10 {res.best_val:.4f} at step {res.best_step}" if res.best_val is not None else ""))
    return EXIT_OK


def _decode_setup(args, command):
    run = Run(args, command)
    ds, _ = load_data(args.data)
    run.inputs["dataset"] = ds.content_hash()
    tok = _load_tokenizer(run, args.tokenizer)
    model, _ = _load_model(run, args.checkpoint)
    return run, ds, tok, model


def cmd_predict(args) -> int:
    from .eval import evaluation_queries
    from .inference import dump_predictions
    run, ds, tok, model = _decode_setup(args, "predict")
    ranker = _ranker(model, tok, model.cfg.max_items)
    tb = _behavior_index(ds, args.target_behavior)
    if args.task == "target" and tb is None:
        tb = ds.behaviors.target_behavior
    probs = _corpus_behavior_probs(ds) if args.behavior_probs == "corpus" else None
    queries = evaluation_queries(ds, args.split, args.task, tb, args.max_users)
    preds = ranker.rank(queries, args.task, args.N, args.n_beams, tb, probs)
    run.config.update({"task": args.task, "split": args.split, "n_beams": args.n_beams, "N": args.N,
                       "target_behavior": tb, "behavior_probs": args.behavior_probs,
                       "max_users": args.max_users})
    dump_predictions(run.out / "predictions.csv", queries, preds, list(ds.behaviors.names), ds.item_ids)
    run.record("predictions.csv")
    run.finish()
    print(f"{len(queries)} queries x top-{args.N} -> {run.out / 'predictions.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .eval import evaluate_task
    run, ds, tok, model = _decode_setup(args, "evaluate")
    ranker = _ranker(model, tok, model.cfg.max_items)
    tb = _behavior_index(ds, args.target_behavior)
    probs = _corpus_behavior_probs(ds) if args.behavior_probs == "corpus" else None
    config = {"task": args.task, "split": args.split, "n_beams": args.n_beams, "target_behavior": tb,
              "behavior_probs": args.behavior_probs, "max_users": args.max_users, "model": model.cfg.to_dict()}
    rep = evaluate_task(ranker, ds, args.task, args.split, args.n_beams, target_behavior=tb,
                        max_users=args.max_users, behavior_probs=probs, config=config)
    run.config.update(config)
    run.write_text("metrics.json", rep.to_json() + "\n")
    run.write_text("metrics.csv", rep.to_csv())
    print(rep.to_text())
    status = EXIT_OK
    if args.check:
        failures = _acceptance_failures(args, ds, rep, ranker)
        for msg in failures:
            print(f"CHECK FAILED: {msg}")
        if not failures:
            print("CHECK PASSED")
        status = EXIT_CHECK_FAILED if failures else EXIT_OK
        run.config["check"] = {"passed": not failures, "failures": failures}
    run.finish()
    return status


def _acceptance_failures(args, ds, rep, ranker) -> list[str]:
    """Desk thresholds: HR@10 against the uniform baseline, next-behavior accuracy against Bayes.

    The Bayes figure averages over every held-out position, so accuracy is
    measured on all users of the split rather than the task's filtered subset.
    """
    from .data import BayesReference
    from .eval import evaluation_queries, next_behavior_accuracy
    out = []
    space = ds.n_items * (ds.n_behaviors if args.task in ("behavior-item", "behavior-aware") else 1)
    floor = args.min_hr_ratio * 10 / space
    if rep.hr[10] < floor:
        out.append(f"HR@10 {rep.hr[10]:.4f} < {args.min_hr_ratio} x uniform {10 / space:.4f}")
    bayes_path = Path(args.data) / "bayes.json"
    if bayes_path.exists():
        ref = BayesReference.from_json(bayes_path.read_text())
        need = args.min_acc_ratio * ref.next_behavior_accuracy
        acc = next_behavior_accuracy(ranker, evaluation_queries(ds, args.split, "behavior-specific",
                                                                max_users=args.max_users))
        if acc < need:
            out.append(f"next-behavior accuracy {acc:.4f} < {args.min_acc_ratio} x Bayes "
                       f"{ref.next_behavior_accuracy:.4f}")
    return out


def cmd_analyze_codes(args) -> int:
    from .tokenizer import code_distribution_stats, minimal_variance
    run = Run(args, "analyze-codes")
    rows = []
    for path in args.tokenizer:
        tok = _load_tokenizer(run, path)
        K, n = tok.assignment.codebook_size, len(tok.codes)
        m = min(tok.codes.shape[1], args.levels or tok.codes.shape[1])
        stats = code_distribution_stats(tok.codes[:, :m], K)
        row = {"tokenizer": str(path), "kind": tok.kind, "n_items": n, "K": K,
               "injective": tok.assignment.is_injective(), "collisions": stats.collisions}
        for lvl, v in enumerate(stats.variances, start=1):
            row[f"L{lvl}_variance"] = round(v, 6)
            row[f"L{lvl}_minimal"] = round(minimal_variance(n, K ** lvl), 6)
        rows.append(row)
    from .eval import rows_csv
    run.write_text("code_stats.csv", rows_csv(rows))
    run.write_text("code_stats.json", _json(rows))
    run.finish()
    for row in rows:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_sweep_beams(args) -> int:
    from .eval import beam_count_sweep, evaluate_task, rows_csv
    run, ds, tok, model = _decode_setup(args, "sweep-beams")
    ranker = _ranker(model, tok, model.cfg.max_items)
    beams = [int(b) for b in args.beams.split(",")]
    rows = beam_count_sweep(ranker, ds, beams, args.split, max_users=args.max_users)
    if args.aware:
        rep = evaluate_task(ranker, ds, "behavior-aware", args.split, args.aware_beams, max_users=args.max_users)
        row = rep.flat()
        row.pop("next_behavior_acc")
        rows.append(row)
    run.config.update({"beams": beams, "split": args.split, "max_users": args.max_users, "aware": args.aware,
                       "aware_beams": args.aware_beams})
    text = rows_csv(rows)
    run.write_text("sweep.csv", text)
    run.finish()
    print(text, end="")
    return EXIT_OK


def cmd_count_flops(args) -> int:
    from .eval import rows_csv
    from .seqmodel import ModelConfig, count_params_flops
    run = Run(args, "count-flops")
    base = json.loads(run.read(args.config, "config").read_text()).get("model", {}) if args.config else {}
    if args.preset == "full":
        from .seqmodel import full_preset
        base = {**full_preset().to_dict(), **base}
    rows = []
    for e in [int(x) for x in args.experts.split(",")]:
        cfg = ModelConfig.from_dict({**base, "experts": e})
        c = count_params_flops(cfg, args.enc_len, args.dec_len)
        rows.append({"experts": e, "params": c["params"], "sparse_ffn_params": c["sparse_ffn_params"],
                     "macs_per_forward": c["macs"], "enc_len": c["enc_len"], "dec_len": c["dec_len"]})
    run.config.update({"model": base, "preset": args.preset, "experts": args.experts})
    text = rows_csv(rows)
    run.write_text("flops.csv", text)
    run.finish()
    print(text, end="")
    return EXIT_OK


# ---- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .inference import TASKS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=os.environ.get("MBGEN_OUT", "mbgen_out"),
                        help="output directory (default: $MBGEN_OUT or ./mbgen_out)")
    common.add_argument("--seed", type=int, default=0, help="global seed for every random choice")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default: library choice)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="mbgen", description="Multi-behavior generative recommendation at desk scale.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("synth-data", parents=[common], help="generate a planted synthetic dataset")
    s.add_argument("--spec", help="JSON file of generator knobs (n_items, transition, cluster_stay, zipf, ...)")
    s.add_argument("--users", dest="n_users", type=int)
    s.add_argument("--items", dest="n_items", type=int)
    s.add_argument("--behaviors", dest="n_behaviors", type=int)
    s.add_argument("--clusters", dest="n_clusters", type=int)
    s.set_defaults(fn=cmd_synth_data)

    s = sub.add_parser("ingest", parents=[common], help="read a user,item,behavior,timestamp log")
    s.add_argument("--input", required=True)
    s.add_argument("--behaviors", help="comma-separated behavior names in id order (default: first seen)")
    s.add_argument("--target", help="target behavior name (default: the first behavior)")
    s.add_argument("--min-count", type=int, default=5, help="drop items seen fewer times (default 5)")
    s.add_argument("--features", help="optional item,f1,...,fd feature file")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("fit-tokenizer", parents=[common], help="assign item codes")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--sid", action="store_true", help="balanced semantic IDs (default)")
    g.add_argument("--cid", action="store_true", help="chunked IDs from a seeded permutation")
    g.add_argument("--rq", action="store_true", help="plain residual-quantization baseline")
    s.add_argument("--data", required=True)
    s.add_argument("--K", type=int, default=16, help="codebook size / CID base (default 16)")
    s.add_argument("--m", type=int, default=3, help="number of digits (default 3)")
    s.set_defaults(fn=cmd_fit_tokenizer)

    s = sub.add_parser("train", parents=[common], help="train the sequence model")
    s.add_argument("--data", required=True)
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--config", help='JSON file {"model": {...}, "train": {...}}; flags override it')
    s.add_argument("--steps", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--warmup", type=int)
    s.add_argument("--eval-every", type=int)
    s.add_argument("--sliding-window", action="store_true", help="one example per training position")
    s.add_argument("--d-model", type=int)
    s.add_argument("--experts", type=int)
    s.add_argument("--dropout", type=float)
    s.add_argument("--max-items", type=int)
    s.add_argument("--n-users", type=int, help="user-token hash buckets")
    s.add_argument("--val-users", type=int, default=300, help="validation users per check; 0 disables")
    s.add_argument("--val-beams", type=int, default=20)
    s.set_defaults(fn=cmd_train)

    decode = argparse.ArgumentParser(add_help=False)
    decode.add_argument("--data", required=True)
    decode.add_argument("--tokenizer", required=True)
    decode.add_argument("--checkpoint", required=True)
    decode.add_argument("--split", choices=("valid", "test"), default="test")
    decode.add_argument("--max-users", type=int)

    for name, fn, helptext in (("predict", cmd_predict, "write top-N predictions"),
                               ("evaluate", cmd_evaluate, "HR/NDCG for one task")):
        s = sub.add_parser(name, parents=[common, decode], help=helptext)
        s.add_argument("--task", choices=TASKS, default="target")
        s.add_argument("--n-beams", type=int, default=50)
        s.add_argument("--target-behavior", help="behavior name or index (target task)")
        s.add_argument("--behavior-probs", choices=("model", "corpus"), default="model",
                       help="slot allocation source for behavior-aware sampling")
        if name == "predict":
            s.add_argument("--N", type=int, default=10)
        else:
            s.add_argument("--check", action="store_true", help="exit 1 when desk thresholds fail")
            s.add_argument("--min-hr-ratio", type=float, default=5.0, help="HR@10 floor as a multiple of uniform")
            s.add_argument("--min-acc-ratio", type=float, default=0.9,
                           help="next-behavior accuracy floor as a fraction of Bayes (synthetic data)")
        s.set_defaults(fn=fn)

    s = sub.add_parser("analyze-codes", parents=[common], help="prefix-histogram variance and collisions")
    s.add_argument("--tokenizer", required=True, nargs="+")
    s.add_argument("--levels", type=int)
    s.set_defaults(fn=cmd_analyze_codes)

    s = sub.add_parser("sweep-beams", parents=[common, decode], help="behavior-item metrics vs beam count")
    s.add_argument("--beams", default="10,20,30,40,50")
    s.add_argument("--aware", action="store_true", help="add a behavior-aware sampling row")
    s.add_argument("--aware-beams", type=int, default=10)
    s.set_defaults(fn=cmd_sweep_beams)

    s = sub.add_parser("count-flops", parents=[common], help="parameters and MACs per forward call")
    s.add_argument("--config", help='JSON file {"model": {...}}')
    s.add_argument("--preset", choices=("desk", "full"), default="desk",
                   help="base shape: desk (default ModelConfig) or full (256-wide, 4+4 layers)")
    s.add_argument("--experts", default="1,5", help="comma-separated expert counts")
    s.add_argument("--enc-len", type=int)
    s.add_argument("--dec-len", type=int)
    s.set_defaults(fn=cmd_count_flops)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    from threadpoolctl import threadpool_limits
    try:
        with threadpool_limits(limits=args.threads):
            return args.fn(args)
    except (UsageError, FileNotFoundError, ValueError) as exc:
        # ValueError covers malformed inputs (IngestError, TokenError, CapacityError, bad configs)
        print(f"mbgen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
