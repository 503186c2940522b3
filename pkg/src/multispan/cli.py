"""Command-line entry point: synth, train, predict, evaluate, enumerate.

Settings come from flags, then an optional ``--config`` file of ``key=value``
lines, then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import DEFAULT_MAX_LENGTH, DatasetError, gold_occurrences, load_dataset, truncate, truncate_and_filter
from .decode import predict
from .evaluation import evaluate
from .heads import Model
from .objective import TrainConfig, gold_taggings, train, write_loss_csv
from .synth import write_synth

logger = logging.getLogger("multispan")

HEAD_CHOICES = {"tase": ("tase",), "sse": ("sse",), "tase+sse": ("tase", "sse")}


class UsageError(Exception):
    pass


def read_config(path) -> dict[str, str]:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _data_args(p: argparse.ArgumentParser, required=True) -> None:
    p.add_argument("--data", type=Path, required=required, help="dataset JSON")
    p.add_argument("--format", choices=("drop", "quoref", "synth"), default="drop")
    p.add_argument("--max-length", type=int, default=DEFAULT_MAX_LENGTH)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value defaults file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="multispan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic DROP-layout dataset")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="train heads, write model + loss CSV")
    _data_args(p)
    p.add_argument("--scheme", choices=("bio", "io"), default="io")
    p.add_argument("--heads", choices=tuple(HEAD_CHOICES), default="tase")
    p.add_argument("--cap", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--no-marginalize", action="store_true",
                   help="train on the single all-occurrences tagging")
    p.add_argument("--model", type=Path, required=True, help="output model file")
    p.add_argument("--out", type=Path, help="loss CSV (default: <model>.loss.csv)")

    p = sub.add_parser("predict", parents=[common], help="write predictions JSON")
    _data_args(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold")
    _data_args(p)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--out", type=Path, help="report JSON")

    p = sub.add_parser("enumerate", parents=[common], help="list possibly-correct taggings")
    _data_args(p)
    p.add_argument("--id", required=True, help="question id")
    p.add_argument("--scheme", choices=("bio", "io"), default="bio")
    p.add_argument("--cap", type=int, default=1000)
    return parser


def _require_file(path: Path | None, flag: str) -> None:
    if path is not None and not path.is_file():
        raise UsageError(f"{flag}: no such file: {path}")


def _load_predictions(path: Path) -> dict[str, list[str]]:
    def no_duplicates(pairs):
        out = {}
        for key, value in pairs:
            if key in out:
                raise DatasetError(f"{path}: duplicate prediction id {key!r}")
            out[key] = value
        return out
    try:
        data = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=no_duplicates)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise DatasetError(f"{path}: expected an object mapping id -> list of strings")
    return data


def cmd_synth(args) -> int:
    write_synth(args.out, args.n, args.seed)
    print(f"wrote {args.n} examples to {args.out}")
    return 0


def cmd_train(args) -> int:
    examples = load_dataset(args.data, args.format).examples
    kept, discarded = truncate_and_filter(examples, args.max_length)
    print(f"loaded {len(examples)} examples; training on {len(kept)}, discarded {len(discarded)}")
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, seed=args.seed, cap=args.cap,
        scheme=args.scheme, heads=HEAD_CHOICES[args.heads], feature_dim=args.feature_dim,
        hidden_dim=args.hidden_dim, marginalize=not args.no_marginalize,
    )
    model, trace = train(kept, config)
    model.save(args.model)
    loss_path = args.out or args.model.with_name(args.model.name + ".loss.csv")
    write_loss_csv(trace, loss_path)
    print(f"final mean loss {trace[-1].mean_loss:.6f}; model -> {args.model}, losses -> {loss_path}")
    return 0


def cmd_predict(args) -> int:
    model = Model.load(args.model)
    examples = load_dataset(args.data, args.format).examples
    fitted = []
    for ex in examples:
        cut = truncate(ex, args.max_length)
        if cut is None:
            cut = replace(ex, question_tokens=ex.question_tokens[:args.max_length], passage_tokens=())
        fitted.append(cut)
    preds = predict(fitted, model)
    args.out.write_text(json.dumps(preds, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    examples = load_dataset(args.data, args.format).examples
    report = evaluate(examples, _load_predictions(args.predictions))
    sys.stdout.write(report.to_text())
    if args.out:
        args.out.write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_enumerate(args) -> int:
    examples = load_dataset(args.data, args.format).examples
    matches = [ex for ex in examples if ex.id == args.id]
    if not matches:
        raise DatasetError(f"{args.data}: no question with id {args.id!r}")
    ex = truncate(matches[0], args.max_length)
    if ex is None:
        raise DatasetError(f"{args.id}: question longer than --max-length")
    missing = [a for a, occ in gold_occurrences(ex).items() if not occ]
    if missing:
        raise DatasetError(f"{args.id}: answer {missing[0]!r} does not occur in the input")
    taggings, fell_back = gold_taggings(ex, args.scheme, args.cap)
    print("tokens: " + " ".join(t.text for t in ex.sequence))
    print(f"count: {len(taggings)}")
    print(f"fell_back: {str(fell_back).lower()}")
    for t in taggings:
        print(t)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "enumerate": cmd_enumerate,
}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    _require_file(known.config, "--config")
    values = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    dests = {sp: {a.dest for a in sp._actions} for sp in subparsers.choices.values()}
    unknown = set(values).difference(*dests.values())
    if unknown:
        raise UsageError(f"{known.config}: unknown keys {sorted(unknown)}")
    for sp, names in dests.items():
        sp.set_defaults(**{k: v for k, v in values.items() if k in names})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        for flag in ("data", "model", "predictions"):
            if flag == "model" and args.command == "train":
                continue
            _require_file(getattr(args, flag, None), f"--{flag}")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"multispan: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DatasetError, ValueError, FloatingPointError, OSError) as exc:
        print(f"multispan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
