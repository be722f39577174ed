"""Command-line surface: preprocess, train, generate, evaluate, ablate, gradcheck.

Configuration precedence is CLI flags > config file > defaults. All
randomness flows from a single --seed through named sub-streams. Every
command records a manifest in its output directory; output directories
are protected by a lock file against concurrent commands.
"""

import argparse
import contextlib
import hashlib
import json
import os
import sys
from dataclasses import asdict
from typing import List, Optional

from . import __version__
from .decoder import load_pretrained_embeddings
from .errors import ContractError, DataError
from .gradcheck import check_model_gradients
from .graph import read_jsonl, validate_graph, write_jsonl
from .ingestion import (DatasetSplit, anonymise_sr, check_dataset_stats,
                        delexicalise, filter_long_targets, linearise,
                        parse_sr11_blocks, parse_triple_blocks, reify,
                        relexicalise, split_multiword_entities)
from .metrics import corpus_bleu
from .model import Graph2SeqModel, ModelConfig, build_model, example_seed
from .training import TrainConfig, evaluate_split, multi_run, train

DATA_ROOT_ENV = "GRAPH2SEQ_DATA_ROOT"


def _resolve(path: Optional[str]) -> Optional[str]:
    if path is None or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not os.path.exists(path):
        return os.path.join(root, path)
    return path


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _vocab_hash(tokens: List[str]) -> str:
    return hashlib.sha256("\n".join(tokens).encode("utf-8")).hexdigest()[:16]


def write_manifest(out_dir: str, command: str, config: dict,
                   inputs: List[str], artifacts: List[str], seed: int) -> None:
    """Append a run record to the directory's manifest (append-only)."""
    path = os.path.join(out_dir, "manifest.json")
    entries = []
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
    entries.append({
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "artifacts": artifacts,
    })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)


@contextlib.contextmanager
def output_lock(out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    lock = os.path.join(out_dir, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ContractError(f"output directory {out_dir} is locked by another command")
    try:
        os.close(fd)
        yield
    finally:
        os.unlink(lock)


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid config JSON: {exc}") from exc


def _merged(args, file_cfg: dict, key: str, default):
    """CLI flag beats config file beats default."""
    cli_val = getattr(args, key.replace("-", "_"), None)
    if cli_val is not None:
        return cli_val
    if key in file_cfg:
        return file_cfg[key]
    return default


def _model_config(args, file_cfg: dict) -> ModelConfig:
    base = ModelConfig()
    return ModelConfig(
        encoder=_merged(args, file_cfg, "encoder", base.encoder),
        gcn_layers=_merged(args, file_cfg, "layers", base.gcn_layers),
        skip=_merged(args, file_cfg, "skip", base.skip),
        hidden=_merged(args, file_cfg, "hidden", base.hidden),
        feat_dim=_merged(args, file_cfg, "feat_dim", base.feat_dim),
        copy=_merged(args, file_cfg, "copy", base.copy),
        attention=_merged(args, file_cfg, "attention", base.attention),
        input_feeding=not _merged(args, file_cfg, "no_input_feeding", False),
        dropout=_merged(args, file_cfg, "dropout", base.dropout),
        seed=_merged(args, file_cfg, "seed", base.seed),
        beam_width=_merged(args, file_cfg, "beam", base.beam_width),
    )


def _train_config(args, file_cfg: dict) -> TrainConfig:
    base = TrainConfig()
    return TrainConfig(
        epochs_max=_merged(args, file_cfg, "epochs", base.epochs_max),
        batch_size=_merged(args, file_cfg, "batch_size", base.batch_size),
        lr=_merged(args, file_cfg, "lr", base.lr),
        dropout=_merged(args, file_cfg, "dropout", base.dropout),
        seed=_merged(args, file_cfg, "seed", base.seed),
        eval_every=_merged(args, file_cfg, "eval_every", base.eval_every),
        patience=_merged(args, file_cfg, "patience", base.patience),
        max_decode_len=_merged(args, file_cfg, "max_decode_len", base.max_decode_len),
        clip_norm=_merged(args, file_cfg, "clip_norm", base.clip_norm),
        model=_model_config(args, file_cfg),
    )


# -- preprocess ---------------------------------------------------------

def cmd_preprocess(args) -> int:
    out_dir = args.out
    with output_lock(out_dir):
        delex_map = {}
        if args.delex_map:
            with open(_resolve(args.delex_map), encoding="utf-8") as fh:
                delex_map = json.load(fh)
        type_maps = {}
        if args.anonymise_types:
            with open(_resolve(args.anonymise_types), encoding="utf-8") as fh:
                type_maps = json.load(fh)

        stats = {"splits": {}, "warnings": []}
        relations = set()
        artifacts = []
        inputs = []
        relex_tables = {}
        for split_name in ("train", "dev", "test"):
            in_path = _resolve(getattr(args, split_name))
            if not in_path:
                continue
            if not os.path.exists(in_path):
                raise DataError(f"input file not found: {in_path}")
            inputs.append(in_path)
            with open(in_path, encoding="utf-8") as fh:
                text = fh.read()
            graphs = []
            filtered = 0
            if args.task == "webnlg":
                for ex_id, triples, target in parse_triple_blocks(text, f"{split_name}"):
                    relations.update(t.relation for t in triples)
                    if args.lowercase:
                        triples = [type(t)(t.subject.lower(), t.relation, t.object.lower())
                                   for t in triples]
                        target = [tok.lower() for tok in target]
                    if delex_map:
                        triples, target, relex = delexicalise(triples, target, delex_map)
                        if relex:
                            relex_tables[ex_id] = relex
                    g = reify(triples, ex_id, target)
                    if args.split_entities:
                        g = split_multiword_entities(g)
                    graphs.append(g)
            else:
                for g in parse_sr11_blocks(text, f"{split_name}"):
                    relations.update(e.label for e in g.edges)
                    if g.id in type_maps:
                        g = anonymise_sr(g, {int(k): v for k, v in type_maps[g.id].items()})
                    graphs.append(g)
            for g in graphs:
                bad = validate_graph(g)
                if bad:
                    raise DataError(f"{g.id}: {'; '.join(bad)}")
            split = DatasetSplit(split_name, graphs)
            kept = filter_long_targets(split, args.max_target_len)
            filtered = len(split) - len(kept)
            out_path = os.path.join(out_dir, f"{split_name}.jsonl")
            write_jsonl(kept.examples, out_path)
            artifacts.append(out_path)
            if args.linearise:
                lin_path = os.path.join(out_dir, f"{split_name}.linearised.txt")
                with open(lin_path, "w", encoding="utf-8") as fh:
                    for g in kept.examples:
                        toks = linearise(g, example_seed(args.seed, g.id))
                        fh.write(" ".join(toks) + "\n")
                artifacts.append(lin_path)
            stats["splits"][split_name] = {"examples": len(kept), "filtered": filtered}
            stats["warnings"] += check_dataset_stats(args.task, split_name, len(kept))
        stats["distinct_relations"] = len(relations)
        stats["warnings"] += check_dataset_stats(args.task, "", 0, len(relations))
        if relex_tables:
            relex_path = os.path.join(out_dir, "relex.json")
            with open(relex_path, "w", encoding="utf-8") as fh:
                json.dump(relex_tables, fh, indent=2)
            artifacts.append(relex_path)
        stats_path = os.path.join(out_dir, "stats.json")
        with open(stats_path, "w", encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2)
        artifacts.append(stats_path)
        cfg = {k: v for k, v in vars(args).items() if k != "func"}
        write_manifest(out_dir, "preprocess", cfg, inputs, artifacts, args.seed)
        print(json.dumps(stats, indent=2))
    return 0


# -- train --------------------------------------------------------------

def _load_split(data_dir: str, name: str) -> Optional[DatasetSplit]:
    path = os.path.join(data_dir, f"{name}.jsonl")
    if not os.path.exists(path):
        return None
    return DatasetSplit(name, read_jsonl(path))


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    config = _train_config(args, file_cfg)
    data_dir = _resolve(args.data)
    train_split = _load_split(data_dir, "train")
    if train_split is None:
        raise DataError(f"no train.jsonl under {data_dir}")
    dev_split = _load_split(data_dir, "dev")
    test_split = _load_split(data_dir, "test")
    with output_lock(args.out):
        if args.runs and args.runs > 1:
            if test_split is None:
                raise DataError("--runs needs a test.jsonl for the reported metric")
            stats, _ = multi_run(config, train_split, dev_split, test_split,
                                 n_runs=args.runs, checkpoint_root=args.out)
            print(json.dumps({"metric": stats.metric, "runs": stats.values,
                              "mean": stats.mean, "stddev": stats.stddev,
                              "degenerate": stats.degenerate}, indent=2))
        else:
            ckpt_dir = os.path.join(args.out, "run0")
            model = None
            if args.pretrained:
                model = build_model(config.model, train_split.examples)
                report = load_pretrained_embeddings(_resolve(args.pretrained),
                                                    model.vocab, model.embed)
                print(f"pretrained embedding coverage: {report['coverage']:.3f} "
                      f"({report['found']}/{report['vocab']})")
            result = train(config, train_split, dev_split, model=model,
                           log_path=os.path.join(args.out, "train.log.jsonl"),
                           checkpoint_dir=ckpt_dir)
            print(json.dumps({"best_epoch": result.best_epoch,
                              "best_dev_bleu": result.best_dev_bleu,
                              "epochs_run": len(result.log)}, indent=2))
        write_manifest(args.out, "train", asdict(config.model),
                       [os.path.join(data_dir, f"{n}.jsonl") for n in ("train", "dev", "test")],
                       [args.out], config.seed)
    return 0


# -- generate -----------------------------------------------------------

def cmd_generate(args) -> int:
    model = Graph2SeqModel.load(_resolve(args.checkpoint))
    if args.vocab:
        with open(_resolve(args.vocab), encoding="utf-8") as fh:
            expected = json.load(fh)
        h_data, h_ckpt = _vocab_hash(expected), _vocab_hash(model.vocab.to_list())
        if h_data != h_ckpt:
            raise ContractError(
                f"vocabulary mismatch: data vocab {h_data} vs checkpoint vocab {h_ckpt}")
    graphs = read_jsonl(_resolve(args.infile))
    relex_tables = {}
    if args.relex:
        with open(_resolve(args.relex), encoding="utf-8") as fh:
            relex_tables = json.load(fh)
    attention_sidecar = {}
    with open(args.out, "w", encoding="utf-8") as fh:
        for g in graphs:
            if args.attention_out:
                from .decoder import extend_vocab, greedy_decode
                enc = model.encode(g)
                src_ext_ids, ext_tokens = (extend_vocab(model.source_tokens(g), model.vocab)
                                           if model.config.copy else (None, ()))
                tokens, attn = greedy_decode(model.decoder, enc, model.vocab, args.max_len,
                                             src_ext_ids=src_ext_ids, ext_tokens=ext_tokens,
                                             collect_attention=True)
                attention_sidecar[g.id] = attn.tolist()
            else:
                tokens = model.generate(g, max_len=args.max_len)
            if g.id in relex_tables:
                tokens = relexicalise(tokens, relex_tables[g.id])
            fh.write(" ".join(tokens) + "\n")
    if args.attention_out:
        with open(args.attention_out, "w", encoding="utf-8") as fh:
            json.dump(attention_sidecar, fh)
    print(f"wrote {len(graphs)} outputs to {args.out}")
    return 0


# -- evaluate -----------------------------------------------------------

def _read_token_lines(path: str) -> List[List[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def cmd_evaluate(args) -> int:
    hyps = _read_token_lines(_resolve(args.hyp))
    ref_files = [_read_token_lines(_resolve(p)) for p in args.ref]
    for refs in ref_files:
        if len(refs) != len(hyps):
            raise DataError(
                f"hypothesis count {len(hyps)} != reference count {len(refs)}")
    references = [[refs[i] for refs in ref_files] for i in range(len(hyps))]
    report = corpus_bleu(hyps, references, smoothing=args.smooth)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


# -- ablate -------------------------------------------------------------

def cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config)
    config = _train_config(args, file_cfg)
    data_dir = _resolve(args.data)
    train_split = _load_split(data_dir, "train")
    dev_split = _load_split(data_dir, "dev")
    test_split = _load_split(data_dir, "test") or dev_split
    if train_split is None or test_split is None:
        raise DataError(f"need train.jsonl and dev/test.jsonl under {data_dir}")
    layer_grid = [int(x) for x in (args.layers_grid or "1,2,3").split(",")]
    skip_grid = args.skips.split(",")
    rows = []
    for n_layers in layer_grid:
        for skip in skip_grid:
            if n_layers == 1 and skip != "none":
                rows.append({"layers": n_layers, "skip": skip, "bleu": None,
                             "stddev": None, "params": None})
                continue
            cell_cfg = TrainConfig(**{**config.__dict__,
                                      "model": ModelConfig(**config.model.__dict__)})
            cell_cfg.model.gcn_layers = n_layers
            cell_cfg.model.skip = skip
            stats, results = multi_run(cell_cfg, train_split, dev_split, test_split,
                                       n_runs=args.runs)
            rows.append({"layers": n_layers, "skip": skip, "bleu": stats.mean,
                         "stddev": stats.stddev,
                         "params": results[0].model.param_count()})
    print(f"{'L':>3} {'skip':>9} {'BLEU':>8} {'std':>8} {'params':>10}")
    for r in rows:
        if r["bleu"] is None:
            print(f"{r['layers']:>3} {r['skip']:>9} {'-':>8} {'-':>8} {'-':>10}")
        else:
            print(f"{r['layers']:>3} {r['skip']:>9} {r['bleu']:>8.4f} "
                  f"{r['stddev']:>8.4f} {r['params']:>10}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


# -- gradcheck ----------------------------------------------------------

def cmd_gradcheck(args) -> int:
    file_cfg = _load_config_file(args.config)
    config = _model_config(args, file_cfg)
    if getattr(args, "hidden", None) is None and "hidden" not in file_cfg:
        config.hidden = 8  # toy scale: checking every component must stay fast
    fault_hook = None
    if args.corrupt:
        def fault_hook(analytic, _name=args.corrupt):
            analytic[_name] += 1.0
    result = check_model_gradients(config, tolerance=args.tolerance,
                                   fault_hook=fault_hook)
    worst_name = max(result.max_rel_error, key=result.max_rel_error.get)
    print(json.dumps({
        "worst": result.worst,
        "worst_parameter": worst_name,
        "tolerance": args.tolerance,
        "skipped_kink_components": result.skipped,
        "per_parameter": result.max_rel_error,
    }, indent=2))
    if not result.passed(args.tolerance):
        print(f"FAIL: {worst_name} rel error {result.max_rel_error[worst_name]:.3e}",
              file=sys.stderr)
        return 2
    print("PASS")
    return 0


# -- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graph2seq",
                                description="Graph-to-sequence text generation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="build JSONL datasets from raw files")
    pp.add_argument("--task", choices=("webnlg", "sr11"), required=True)
    pp.add_argument("--train")
    pp.add_argument("--dev")
    pp.add_argument("--test")
    pp.add_argument("--out", required=True)
    pp.add_argument("--linearise", action="store_true")
    pp.add_argument("--seed", type=int, default=1)
    pp.add_argument("--max-target-len", type=int, default=50)
    pp.add_argument("--delex-map", help="JSON entity->placeholder map (webnlg)")
    pp.add_argument("--split-entities", action="store_true",
                    help="split multi-word entities into NE chains (webnlg)")
    pp.add_argument("--anonymise-types", help="JSON id->{node->type} map (sr11)")
    pp.add_argument("--lowercase", action="store_true")
    pp.set_defaults(func=cmd_preprocess)

    def model_flags(sp):
        sp.add_argument("--config", help="JSON config file (flags override it)")
        sp.add_argument("--encoder", choices=("gcn", "bilstm"))
        sp.add_argument("--layers", type=int, dest="layers")
        sp.add_argument("--skip", choices=("none", "residual", "dense"))
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--feat-dim", type=int, dest="feat_dim")
        sp.add_argument("--copy", action="store_const", const=True, default=None)
        sp.add_argument("--attention", choices=("general", "dot"))
        sp.add_argument("--no-input-feeding", action="store_const", const=True,
                        default=None, dest="no_input_feeding")
        sp.add_argument("--dropout", type=float)
        sp.add_argument("--seed", type=int)

    tr = sub.add_parser("train", help="train a model on preprocessed data")
    model_flags(tr)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--epochs", type=int, dest="epochs")
    tr.add_argument("--batch-size", type=int, dest="batch_size")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--patience", type=int)
    tr.add_argument("--eval-every", type=int, dest="eval_every")
    tr.add_argument("--clip-norm", type=float, dest="clip_norm")
    tr.add_argument("--beam", type=int)
    tr.add_argument("--runs", type=int, default=1)
    tr.add_argument("--pretrained", help="pretrained embedding text file")
    tr.set_defaults(func=cmd_train)

    ge = sub.add_parser("generate", help="decode a test set with a checkpoint")
    ge.add_argument("--checkpoint", required=True)
    ge.add_argument("--in", dest="infile", required=True)
    ge.add_argument("--out", required=True)
    ge.add_argument("--relex", help="JSON relex tables from preprocess")
    ge.add_argument("--vocab", help="vocabulary JSON to cross-check against the checkpoint")
    ge.add_argument("--max-len", type=int, default=60)
    ge.add_argument("--attention-out", dest="attention_out",
                    help="JSON sidecar with per-example attention matrices")
    ge.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="corpus BLEU of a hypothesis file")
    ev.add_argument("--hyp", required=True)
    ev.add_argument("--ref", action="append", required=True)
    ev.add_argument("--smooth", action="store_true")
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="layers x skip-connection grid")
    model_flags(ab)
    ab.add_argument("--data", required=True)
    ab.add_argument("--out")
    ab.add_argument("--layers-grid", dest="layers_grid")
    ab.add_argument("--skips", default="none,residual,dense")
    ab.add_argument("--runs", type=int, default=3)
    ab.add_argument("--epochs", type=int, dest="epochs")
    ab.add_argument("--batch-size", type=int, dest="batch_size")
    ab.add_argument("--lr", type=float)
    ab.add_argument("--patience", type=int)
    ab.add_argument("--eval-every", type=int, dest="eval_every")
    ab.set_defaults(func=cmd_ablate)

    gc = sub.add_parser("gradcheck", help="finite-difference check of a built model")
    model_flags(gc)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.add_argument("--corrupt", help="fault-injection hook: parameter name to corrupt")
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
