"""Command-line entry point: ``mlgcn <subcommand> [flags]``.

Every subcommand that produces files writes them under ``--out`` together
with a ``manifest.json`` recording the fully resolved arguments, input file
digests and artifact digests.  ``mlgcn rerun DIR/manifest.json`` repeats a
run from its manifest.  On any error the files written so far are removed
and the process exits with status 1 and a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from typing import Sequence

from . import __version__
from .ablation import results_table, sweep
from .dataset_io import (
    decode_matrix,
    load_annotations,
    load_dataset,
    write_annotations,
    write_csv,
    write_matrix,
    write_vocabulary,
)
from .embeddings import ONE_HOT, build_label_embeddings, load_vocabulary, load_word_vectors, write_word_vectors
from .errors import ConfigurationError, MlGcnError
from .label_graph import build_label_graph
from .metrics import evaluate_scores, knn_retrieve, parse_rule, retrieval_distances
from .model import ModelConfig, generate_classifiers, init_model, load_checkpoint, save_checkpoint, score_features
from .synthetic import SyntheticConfig, generate_synthetic, train_test_split
from .trainer import TrainConfig, train

MANIFEST = "manifest.json"


def _floats(text: str) -> list[float]:
    """Comma-separated reals; ``a,b,...,z`` extends an arithmetic progression."""
    parts = [s.strip() for s in text.split(",") if s.strip()]
    if "..." in parts:
        k = parts.index("...")
        if k < 2 or k != len(parts) - 2:
            raise argparse.ArgumentTypeError(f"cannot expand grid {text!r}")
        a, b, end = float(parts[k - 2]), float(parts[k - 1]), float(parts[-1])
        step = b - a
        if step <= 0:
            raise argparse.ArgumentTypeError(f"grid {text!r} must increase")
        n = int(round((end - a) / step))
        head = [float(x) for x in parts[:k - 2]]
        return head + [round(a + i * step, 10) for i in range(n + 1)]
    try:
        return [float(s) for s in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _dims(text: str) -> list[int]:
    try:
        dims = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None
    if not dims:
        raise argparse.ArgumentTypeError("empty layer dims")
    return dims


def _dims_grid(text: str) -> list[list[int]]:
    return [_dims(chunk) for chunk in text.split(";") if chunk.strip()]


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunArtifacts:
    """Tracks files written by a run so they can be validated or rolled back."""

    def __init__(self, out: str | None):
        self.out = out
        self.paths: list[str] = []
        self._created_dir = False
        if out is not None and not os.path.isdir(out):
            os.makedirs(out)
            self._created_dir = True

    def path(self, name: str) -> str:
        if self.out is None:
            raise ConfigurationError("--out is required for this command")
        p = os.path.join(self.out, name)
        self.paths.append(p)
        return p

    def add(self, paths: Sequence[str]) -> None:
        self.paths.extend(paths)

    def validate(self) -> None:
        for p in self.paths:
            if not os.path.isfile(p):
                raise MlGcnError(f"artifact {p} missing after write")
            if p.endswith(".mlgf"):
                with open(p, "rb") as fh:
                    decode_matrix(fh.read(), p)

    def rollback(self) -> None:
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)
        if self._created_dir and self.out and os.path.isdir(self.out) and not os.listdir(self.out):
            os.rmdir(self.out)

    def write_manifest(self, command: str, args: dict, inputs: Sequence[str | None]) -> None:
        if self.out is None:
            return
        path = os.path.join(self.out, MANIFEST)
        manifest = {
            "tool": "mlgcn",
            "version": __version__,
            "command": command,
            "config": args,
            "seed": args.get("seed"),
            "inputs": {p: _digest(p) for p in inputs if p and os.path.isfile(p)},
            "artifacts": {os.path.relpath(p, self.out): _digest(p) for p in self.paths},
        }
        self.paths.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _write_checked(art: RunArtifacts, name: str, array) -> str:
    path = art.path(name)
    write_matrix(path, array)
    return path


def _embedding(source: str, vocab):
    if source == ONE_HOT:
        return build_label_embeddings(vocab, ONE_HOT)
    table = load_word_vectors(source, tokens=vocab.tokens())
    return build_label_embeddings(vocab, table)


def _model_config(args) -> ModelConfig:
    return ModelConfig(layer_dims=tuple(args.layer_dims), slope=args.slope,
                       final_activation=args.final_activation, seed=args.seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr0=args.lr0, momentum=args.momentum, weight_decay=args.weight_decay,
                       epochs=args.epochs, decay_every=args.decay_every, decay_factor=args.decay_factor,
                       batch_size=args.batch_size, seed=args.seed)


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args, art: RunArtifacts) -> list[str]:
    cfg = SyntheticConfig(num_labels=args.classes, feature_dim=args.feature_dim, num_samples=args.samples,
                          strength=args.strength, base_rate=args.base_rate, noise=args.noise,
                          embedding_dim=args.embedding_dim, seed=args.seed)
    data = generate_synthetic(cfg)
    write_vocabulary(art.path("labels.txt"), data.dataset.vocabulary)
    write_word_vectors(art.path("embeddings.txt"), data.word_vectors)
    if args.train_samples and args.train_samples < len(data.dataset):
        splits = zip(("train", "test"), train_test_split(data.dataset, args.train_samples))
    else:
        splits = [("train", data.dataset)]
    for name, ds in splits:
        write_annotations(art.path(f"{name}.tsv"), ds.samples, ds.vocabulary)
        _write_checked(art, f"{name}.mlgf", ds.features)
    print(f"wrote synthetic dataset to {art.out}")
    return []


def cmd_build_graph(args, art: RunArtifacts) -> list[str]:
    vocab = load_vocabulary(args.vocab)
    samples = load_annotations(args.annotations, vocab)
    graph = build_label_graph(samples, len(vocab), args.tau, args.p)
    for name, values in graph.stages().items():
        _write_checked(art, f"{name}.mlgf", values)
        if args.csv:
            write_csv(art.path(f"{name}.csv"), values)
    edges = int(graph.binary.values.sum())
    print(f"{len(samples)} samples, {len(vocab)} labels, {edges} edges at tau={args.tau:g}, p={args.p:g}")
    return [args.annotations, args.vocab]


def _train_from_args(args):
    vocab = load_vocabulary(args.vocab)
    data = load_dataset(args.annotations, args.features, vocab)
    graph = build_label_graph(data.samples, len(vocab), args.tau, args.p)
    emb = _embedding(args.embeddings, vocab)
    info = {"tau": args.tau, "p": args.p, "normalized": not args.skip_normalization,
            "embedding_source": emb.source}
    model = init_model(emb, graph.adjacency(not args.skip_normalization), _model_config(args),
                       feature_dim=data.feature_dim, graph_info=info)
    return vocab, data, model


def cmd_train(args, art: RunArtifacts) -> list[str]:
    vocab, data, model = _train_from_args(args)
    model, history = train(model, data, _train_config(args))
    art.add(save_checkpoint(art.out, model, vocab))
    history.write(art.path("history.jsonl"))
    print(f"trained {len(history)} epochs: loss {history.losses[0]:.6f} -> {history.losses[-1]:.6f}")
    return [args.annotations, args.features, args.vocab,
            args.embeddings if args.embeddings != ONE_HOT else None]


def cmd_evaluate(args, art: RunArtifacts) -> list[str]:
    model, ckpt_vocab = load_checkpoint(args.checkpoint)
    vocab = load_vocabulary(args.vocab) if args.vocab else ckpt_vocab
    if vocab is None:
        raise ConfigurationError("checkpoint has no vocabulary; pass --vocab")
    data = load_dataset(args.annotations, args.features, vocab)
    report = evaluate_scores(score_features(model, data.features), data.label_matrix(), parse_rule(args.rule))
    text = report.to_text()
    sys.stdout.write(text)
    if art.out is not None:
        with open(art.path("report.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return [os.path.join(args.checkpoint, f) for f in sorted(os.listdir(args.checkpoint))] + [
        args.annotations, args.features, args.vocab]


def cmd_sweep(args, art: RunArtifacts) -> list[str]:
    vocab = load_vocabulary(args.vocab)
    train_set = load_dataset(args.annotations, args.features, vocab)
    test_set = load_dataset(args.test_annotations, args.test_features, vocab)
    embeddings = {}
    for source in args.embeddings or [ONE_HOT]:
        name = ONE_HOT if source == ONE_HOT else os.path.basename(source)
        embeddings[name] = _embedding(source, vocab)
    depths = args.layer_dims_grid or [args.layer_dims]
    results = sweep(train_set, test_set, embeddings, args.tau_grid, args.p_grid, depths,
                    _model_config(args), _train_config(args), not args.skip_normalization, args.workers)
    table = results_table(results)
    with open(art.path("results.tsv"), "w", encoding="utf-8") as fh:
        fh.write(table)
    sys.stdout.write(table)
    return [args.annotations, args.features, args.test_annotations, args.test_features, args.vocab] + [
        s for s in (args.embeddings or []) if s != ONE_HOT]


def cmd_retrieve(args, art: RunArtifacts) -> list[str]:
    vocab = load_vocabulary(args.vocab)
    data = load_dataset(args.annotations, args.features, vocab)
    ids = data.ids
    if args.query not in ids:
        raise ConfigurationError(f"query id {args.query!r} not in {args.annotations}")
    q = data.features[ids.index(args.query)]
    idx = knn_retrieve(q, data.features, args.k)
    dist = retrieval_distances(q, data.features, idx)
    lines = [f"{rank}\t{ids[i]}\t{d:.6f}" for rank, (i, d) in enumerate(zip(idx, dist), start=1)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if art.out is not None:
        with open(art.path("retrieval.tsv"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return [args.annotations, args.features, args.vocab]


def cmd_export(args, art: RunArtifacts) -> list[str]:
    model, vocab = load_checkpoint(args.checkpoint)
    W = generate_classifiers(model).data
    _write_checked(art, "classifiers.mlgf", W)
    write_csv(art.path("classifiers.csv"), W)
    if vocab is not None:
        write_vocabulary(art.path("labels.txt"), vocab)
    print(f"exported {W.shape[0]} classifiers of dimension {W.shape[1]}")
    return [os.path.join(args.checkpoint, f) for f in sorted(os.listdir(args.checkpoint))]


# -- parser --------------------------------------------------------------------

def _add_data(p, features=True):
    p.add_argument("--annotations", required=True, help="id<TAB>label,label,... file")
    if features:
        p.add_argument("--features", required=True, help="MLGF matrix (N x D, or N x D x h x w maps)")
    p.add_argument("--vocab", required=True, help="label names, one per line")


def _add_graph(p):
    p.add_argument("--tau", type=float, default=0.4)
    p.add_argument("--p", type=float, default=0.2)


def _add_model_train(p, embeddings=True):
    if embeddings:
        p.add_argument("--embeddings", default=ONE_HOT, help="word-vector text file, or 'one-hot'")
    p.add_argument("--layer-dims", type=_dims, default=[1024, 2048])
    p.add_argument("--slope", type=float, default=0.2)
    p.add_argument("--final-activation", action="store_true", help="apply LeakyReLU after the last layer too")
    p.add_argument("--skip-normalization", action="store_true", help="feed A' to the GCN without degree normalization")
    p.add_argument("--lr0", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--decay-every", type=int, default=40)
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlgcn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with planted label co-occurrence")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--samples", type=int, default=2500)
    p.add_argument("--train-samples", type=int, default=2000, help="leading samples in train split; 0 = no split")
    p.add_argument("--strength", type=float, default=0.9)
    p.add_argument("--base-rate", type=float, default=0.15)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--embedding-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graph", help="write the P, A, A' and normalized adjacency matrices")
    _add_data(p, features=False)
    _add_graph(p)
    p.add_argument("--csv", action="store_true", help="also write CSV mirrors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train GCN classifiers; writes checkpoint and history")
    _add_data(p)
    _add_graph(p)
    _add_model_train(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print the metrics report of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", help="defaults to the checkpoint's vocabulary")
    p.add_argument("--rule", default="threshold:0.5", help="threshold:T or topk:K")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train and evaluate over a tau x p (x depth x embedding) grid")
    _add_data(p)
    p.add_argument("--test-annotations", required=True)
    p.add_argument("--test-features", required=True)
    p.add_argument("--tau-grid", type=_floats, default=[0.4], metavar="T1,T2,...")
    p.add_argument("--p-grid", type=_floats, default=[0.2], metavar="P1,P2,...")
    p.add_argument("--layer-dims-grid", type=_dims_grid, default=None, metavar="D1,D2;D1,D2,D3")
    p.add_argument("--workers", type=int, default=1)
    _add_model_train(p, embeddings=False)
    p.add_argument("--embeddings", action="append", help="repeatable; word-vector file or 'one-hot'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("retrieve", help="k nearest neighbours of one sample's feature vector")
    _add_data(p)
    p.add_argument("--query", required=True, help="sample id")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("export-classifiers", help="write the generated C x D classifier matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to a different directory")
    p.set_defaults(func=None)
    return parser


def _args_from_manifest(path: str, out: str | None) -> argparse.Namespace:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("command") not in COMMANDS:
        raise ConfigurationError(f"{path}: unknown command {manifest.get('command')!r}")
    config = dict(manifest["config"])
    if out is not None:
        config["out"] = out
    return argparse.Namespace(command=manifest["command"], **config)


COMMANDS = {
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "retrieve": cmd_retrieve,
    "export-classifiers": cmd_export,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    art = None
    try:
        if args.command == "rerun":
            args = _args_from_manifest(args.manifest, args.out)
        func = COMMANDS[args.command]
        art = RunArtifacts(getattr(args, "out", None))
        inputs = func(args, art)
        art.validate()
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
        art.write_manifest(args.command, config, inputs)
    except (MlGcnError, OSError, KeyError, json.JSONDecodeError) as exc:
        if art is not None:
            art.rollback()
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"mlgcn {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
