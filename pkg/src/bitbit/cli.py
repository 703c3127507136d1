"""Command-line surface tying the pipeline together.

Subcommands: ``encode`` (fit the encoder, print the allocation table),
``train`` (fresh model at one size), ``grow`` (sub-net chain over a qubit
ladder), ``eval`` (loss/accuracy of a checkpoint), ``analyze``
(per-coordinate amplitude statistics and an optional gradient-descent
baseline).  Data comes from ``--data-dir`` (MNIST IDX files, gzipped or
not) or ``--synthetic`` (the bundled deterministic surrogate).  Values in a
``--config`` JSON file override the corresponding flags.
"""

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, ansatz, checkpoints, datasets, encoder, subnet, trainer


class CliError(Exception):
    pass


def _parse_classes(text: str) -> tuple[int, ...]:
    try:
        classes = tuple(sorted({int(tok) for tok in text.split(",") if tok.strip()}))
    except ValueError as exc:
        raise CliError(f"--classes wants comma-separated integers, got {text!r}") from exc
    if not classes:
        raise CliError("--classes must name at least one class")
    return classes


def _parse_ladder(text: str) -> list[int]:
    try:
        ladder = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise CliError(f"--qubits-ladder wants comma-separated integers, got {text!r}") from exc
    if not ladder or sorted(set(ladder)) != ladder:
        raise CliError(f"--qubits-ladder must be strictly ascending, got {text!r}")
    return ladder


def _int_or_auto(text: str, flag: str):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError as exc:
        raise CliError(f"{flag} wants an integer or 'auto', got {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classes", default="0,1,2,3",
                   help="comma-separated class labels (default 0,1,2,3)")
    p.add_argument("--data-dir", default=None,
                   help="directory of MNIST IDX files (gzipped accepted)")
    p.add_argument("--synthetic", type=int, default=None, metavar="N_PER_CLASS",
                   help="use the bundled surrogate dataset with this many samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None,
                   help="JSON file whose values override flags of the same name")
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--n-bins", type=int, default=None,
                   help="mutual-information bins (default ceil(sqrt(N)) capped at 64)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("exact", "sampled"), default="sampled")
    p.add_argument("--shots", default="auto",
                   help="initial shots, or 'auto' for the Wasserstein heuristic")
    p.add_argument("--batch-size", default="150", dest="batch_size",
                   help="batch size, or 'auto' for the KS heuristic")
    p.add_argument("--ks-threshold", type=float, default=0.1)
    p.add_argument("--sweeps", type=int, default=3)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--fill-mode", choices=("identity", "random"), default="identity")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitbit",
        description="binary-encoded variational quantum classifiers on a "
                    "statevector simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_encode = sub.add_parser("encode", help="fit the encoder, print the allocation table")
    _add_common(p_encode)
    p_encode.add_argument("--bits", type=int, required=True)

    p_train = sub.add_parser("train", help="train a fresh model at one size")
    _add_common(p_train)
    _add_train_flags(p_train)
    p_train.add_argument("--bits", type=int, default=None)
    p_train.add_argument("--qubits-ladder", default=None, dest="qubits_ladder",
                         help="single qubit count (alternative to --bits)")

    p_grow = sub.add_parser("grow", help="sub-net chain over a qubit ladder")
    _add_common(p_grow)
    _add_train_flags(p_grow)
    p_grow.add_argument("--qubits-ladder", required=True, dest="qubits_ladder")
    p_grow.add_argument("--from", dest="from_checkpoint", default=None,
                        help="checkpoint providing the first ladder size")

    p_eval = sub.add_parser("eval", help="loss/accuracy of a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_an = sub.add_parser("analyze", help="coordinate amplitude statistics")
    _add_common(p_an)
    p_an.add_argument("--checkpoint", required=True)
    p_an.add_argument("--n-coords", type=int, default=50)
    p_an.add_argument("--gd-steps", type=int, default=0,
                      help="also run a gradient-descent baseline this many steps")
    p_an.add_argument("--gd-rate", type=float, default=0.05)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if not args.config:
        return
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(overrides, dict):
        raise CliError("config file must hold a JSON object")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise CliError(f"config file key {key!r} is not a known flag")
        setattr(args, attr, value)


def _load_pool(args, classes: tuple[int, ...]) -> datasets.RawDataset:
    if args.data_dir and args.synthetic:
        raise CliError("--data-dir and --synthetic are mutually exclusive")
    if args.data_dir:
        return datasets.load_idx_dir(args.data_dir)
    if args.synthetic:
        return datasets.synthetic_digits(n_classes=max(classes) + 1,
                                         n_per_class=args.synthetic)
    raise CliError("choose a data source: --data-dir or --synthetic")


def _split(args, classes) -> datasets.SplitDataset:
    pool = _load_pool(args, classes)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    train, test = datasets.make_splits(pool, classes, rng,
                                       test_per_class=args.test_per_class)
    return datasets.SplitDataset(train=train, test=test)


def _n_y(n_classes: int) -> int:
    return max(1, math.ceil(math.log2(n_classes)))


def _prepare(split: datasets.SplitDataset, B: int, n_bins: int | None,
             D: int | None = None) -> trainer.TrainingData:
    X, y = split.train.images, split.train.labels
    pca, alloc, train_ds = encoder.encode_dataset(X, y, B, D=D, n_bins=n_bins)
    Xp_train = encoder.project_unit(pca, X)
    Xp_test = encoder.project_unit(pca, split.test.images)
    z_test = encoder.encode_samples(Xp_test, alloc)
    test_ds = encoder.dataset_from_samples(
        list(zip(z_test, (int(v) for v in split.test.labels))),
        n_classes=train_ds.n_classes)
    scores = encoder.mutual_information_scores(
        Xp_train, y, n_bins if n_bins else encoder.default_mi_bins(len(X)))
    return trainer.TrainingData(
        train=train_ds, test=test_ds, pca=pca, allocation=alloc, scores=scores,
        class_labels=split.train.class_labels,
        train_pca1=Xp_train[:, 0], test_pca1=Xp_test[:, 0],
    )


def _make_config(args, data: trainer.TrainingData | None) -> trainer.TrainConfig:
    shots = _int_or_auto(str(args.shots), "--shots")
    batch = _int_or_auto(str(args.batch_size), "--batch-size")
    if batch == "auto":
        if data is None or data.train_pca1 is None:
            raise CliError("--batch-size auto needs an encoded dataset")
        batch = trainer.ks_batch_size(
            data.train_pca1, data.test_pca1, threshold=args.ks_threshold,
            rng=np.random.default_rng(np.random.SeedSequence([args.seed, 2])))
        print(f"# ks batch size: {batch}")
    return trainer.TrainConfig(
        batch_size=batch,
        ks_threshold=args.ks_threshold,
        initial_shots=shots,
        sweeps_per_size=args.sweeps,
        mode=args.mode,
        seed=args.seed,
        eval_every=args.eval_every,
        fill_mode=args.fill_mode,
    )


def _out_dir(args) -> Path:
    out = Path(args.out if args.out else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _allocation_table(alloc: encoder.BitAllocation, n_y: int) -> str:
    bits = list(alloc.bits)
    while bits and bits[-1] == 0:
        bits.pop()
    B = alloc.total_bits
    p = ansatz.parameter_count(ansatz.build_topology(B, n_y))
    header = "B\tbit_distribution\tp"
    return f"{header}\n{B}\t{bits}\t{p}\n"


def _cmd_encode(args) -> int:
    classes = _parse_classes(args.classes)
    split = _split(args, classes)
    data = _prepare(split, args.bits, args.n_bins)
    sys.stdout.write(_allocation_table(data.allocation, _n_y(len(classes))))
    if args.out:
        out = _out_dir(args)
        scores = ", ".join(f"{s:.6g}" for s in data.scores)
        (out / "allocation.json").write_text(json.dumps({
            "bits": list(data.allocation.bits),
            "grant_order": list(data.allocation.grant_order),
            "scores": [float(s) for s in data.scores],
        }, indent=2) + "\n")
        print(f"# scores: {scores}")
    return 0


def _resolve_bits(args, classes) -> int:
    n_y = _n_y(len(classes))
    if args.bits is not None and args.qubits_ladder is not None:
        raise CliError("give --bits or --qubits-ladder, not both")
    if args.bits is not None:
        return args.bits
    if args.qubits_ladder is not None:
        ladder = _parse_ladder(args.qubits_ladder)
        if len(ladder) != 1:
            raise CliError("train takes a single size; use grow for a ladder")
        if ladder[0] <= n_y:
            raise CliError(f"{ladder[0]} qubits leave no data qubits (n_y = {n_y})")
        return ladder[0] - n_y
    raise CliError("train needs --bits or --qubits-ladder")


def _cmd_train(args) -> int:
    classes = _parse_classes(args.classes)
    split = _split(args, classes)
    B = _resolve_bits(args, classes)
    data = _prepare(split, B, args.n_bins)
    config = _make_config(args, data)
    topology = ansatz.build_topology(n_x=B, n_y=_n_y(len(classes)))
    ckpt = trainer.train_model(data, topology, config)
    out = _out_dir(args)
    checkpoints.save_checkpoint(out / "checkpoint.json", ckpt)
    (out / "metrics.tsv").write_text(trainer.metrics_table(ckpt.history))
    last = ckpt.history[-1]
    print(f"trained {topology.n_qubits} qubits (p = {topology.n_params}): "
          f"test loss {last.test_loss:.4f}, accuracy {last.test_accuracy:.4f}")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'metrics.tsv'}")
    return 0


def _cmd_grow(args) -> int:
    classes = _parse_classes(args.classes)
    split = _split(args, classes)
    ladder = _parse_ladder(args.qubits_ladder)
    # KS-auto batch sizing needs an encoding; use the largest ladder size.
    if str(args.batch_size) == "auto":
        n_y = _n_y(len(classes))
        config = _make_config(args, _prepare(split, ladder[-1] - n_y, args.n_bins))
    else:
        config = _make_config(args, None)
    start_params = None
    if args.from_checkpoint:
        loaded = checkpoints.load_checkpoint(args.from_checkpoint)
        if loaded.topology.n_qubits != ladder[0]:
            raise CliError(
                f"--from checkpoint has {loaded.topology.n_qubits} qubits, "
                f"ladder starts at {ladder[0]}")
        start_params = loaded.params
    ckpts, reports = subnet.grow_and_train_chain(
        split, ladder, config, n_bins=args.n_bins, start_params=start_params)
    out = _out_dir(args)
    rows = []
    for ckpt in ckpts:
        path = out / f"checkpoint_q{ckpt.topology.n_qubits}.json"
        checkpoints.save_checkpoint(path, ckpt)
        rows.extend(ckpt.history)
        print(f"size {ckpt.topology.n_qubits}: final test loss "
              f"{ckpt.history[-1].test_loss:.4f}, accuracy "
              f"{ckpt.history[-1].test_accuracy:.4f} -> {path}")
    (out / "metrics.tsv").write_text(trainer.metrics_table(rows))
    for rep in reports:
        print(f"boundary {rep.old_n_qubits}->{rep.new_n_qubits} qubits: "
              f"carried-target gap {rep.carried_gap:.3e}, rebuilt-table loss "
              f"{rep.new_initial_test_loss:.6f} vs old {rep.old_final_test_loss:.6f}")
    return 0


def _rebuild_data(args, ckpt: checkpoints.Checkpoint) -> trainer.TrainingData:
    classes = ckpt.class_labels
    seed = int(ckpt.seeds["master"])
    pool = _load_pool(args, classes)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    train, test = datasets.make_splits(pool, classes, rng,
                                       test_per_class=args.test_per_class)
    Xp_train = encoder.project_unit(ckpt.pca, train.images)
    Xp_test = encoder.project_unit(ckpt.pca, test.images)
    n_classes = len(classes)
    train_ds = encoder.dataset_from_samples(
        list(zip(encoder.encode_samples(Xp_train, ckpt.allocation),
                 (int(v) for v in train.labels))), n_classes=n_classes)
    test_ds = encoder.dataset_from_samples(
        list(zip(encoder.encode_samples(Xp_test, ckpt.allocation),
                 (int(v) for v in test.labels))), n_classes=n_classes)
    return trainer.TrainingData(
        train=train_ds, test=test_ds, pca=ckpt.pca, allocation=ckpt.allocation,
        scores=ckpt.scores, class_labels=classes,
        train_pca1=Xp_train[:, 0], test_pca1=Xp_test[:, 0],
    )


def _cmd_eval(args) -> int:
    ckpt = checkpoints.load_checkpoint(args.checkpoint)
    if ckpt.pca is None:
        raise CliError("checkpoint carries no encoder state; cannot encode data")
    data = _rebuild_data(args, ckpt)
    loss, acc = trainer.evaluate(ckpt.topology, ckpt.params, data.test)
    recorded = ckpt.history[-1].test_loss if ckpt.history else float("nan")
    print(f"test loss {loss:.12g} (recorded {recorded:.12g}), accuracy {acc:.4f}")
    return 0


def _cmd_analyze(args) -> int:
    ckpt = checkpoints.load_checkpoint(args.checkpoint)
    if ckpt.pca is None:
        raise CliError("checkpoint carries no encoder state; cannot encode data")
    data = _rebuild_data(args, ckpt)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 3]))
    n_coords = min(args.n_coords, ckpt.topology.n_params)
    stats = analysis.kj_statistics(ckpt.topology, ckpt.params, data.train,
                                   n_coords=n_coords, rng=rng)
    sys.stdout.write(analysis.statistics_table([
        (f"q{ckpt.topology.n_qubits}", stats.mean, stats.max)]))
    if args.gd_steps > 0:
        history = analysis.gradient_descent_baseline(
            ckpt.topology, ckpt.params, data.train,
            learning_rate=args.gd_rate, steps=args.gd_steps)
        print("step\tn_evals\tloss\tgrad_norm\tdiverged")
        for rec in history:
            print(f"{rec.step}\t{rec.n_evals}\t{rec.loss:.12g}\t"
                  f"{rec.grad_norm:.12g}\t{rec.diverged}")
    return 0


_COMMANDS = {
    "encode": _cmd_encode,
    "train": _cmd_train,
    "grow": _cmd_grow,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, checkpoints.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
