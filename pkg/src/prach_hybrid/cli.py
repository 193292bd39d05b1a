"""``prach`` command-line tool.

Exit codes: 0 success, 2 usage/configuration, 3 data error, 4 numeric or
training failure.  Any flag may also come from an INI file given with
``--config`` (section ``[prach]`` or a section named after the command; keys
are flag names with dashes or underscores).  Flags on the command line win.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .channel import CHANNEL_MODELS, ChannelConfig, draw_noise, simulate_superposition
from .correlator import INPUT_KINDS, NORMALIZATIONS
from .dataset import (DESK_INSTANCES_PER_SNR, CaptureMeta, DatasetSpec, export_capture,
                      generate, import_capture, read_capture, read_dataset, split)
from .detectors import run_receiver
from .errors import ConfigError, DataError, EstimationError, PrachError, TrainingError
from .evaluation import EvalConfig, read_eval_csv, run_eval, write_eval_csv
from .explain import explain_report, reference_baseline, shapley_values
from .mlp import (TrainConfig, accuracy, forward, load_model, save_model, train,
                  window_arrays)
from .zc import DEFAULT_ROOTS, RootSet

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
SEED_ENV = "PRACH_SEED"
TOOL = f"prach_hybrid {__version__}"


def float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def str_list(text: str) -> tuple:
    return tuple(t for t in str(text).replace(" ", "").split(",") if t)


def default_seed() -> int:
    try:
        return int(os.environ.get(SEED_ENV, "0"))
    except ValueError:
        return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prach", description="5G NR PRACH hybrid receiver toolkit")
    ap.add_argument("--version", action="version", version=TOOL)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI file supplying defaults for any flag")
        p.add_argument("--seed", type=int, default=default_seed(),
                       help=f"RNG seed (default ${SEED_ENV} or 0)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo loops")
        return p

    g = common(sub.add_parser("generate", help="simulate a window dataset (JSON lines)"))
    g.add_argument("--snr-list", type=float_list, default="-20,-15,-10,-5,0,5,10,15,20")
    g.add_argument("--instances", type=int, default=DESK_INSTANCES_PER_SNR,
                   help="instances per SNR")
    g.add_argument("--channel", choices=CHANNEL_MODELS, default="tdlc300")
    g.add_argument("--num-rx", type=int, default=1)
    g.add_argument("--input", choices=INPUT_KINDS, default="pdp")
    g.add_argument("--ratio", type=float, default=0.5, help="fraction of user-present instances")
    g.add_argument("--roots", type=int_list, default=",".join(map(str, DEFAULT_ROOTS)))
    g.add_argument("--out")

    t = common(sub.add_parser("train", help="train the window classifier"))
    t.add_argument("--data", help="dataset produced by 'generate'")
    t.add_argument("--split", type=float, default=0.75, help="train fraction of the train/test split")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--normalization", choices=NORMALIZATIONS, default="profile_mean")
    t.add_argument("--out")

    e = common(sub.add_parser("eval", help="detection / TA accuracy sweep to CSV"))
    e.add_argument("--model", action="append", default=[], help="model file (repeatable)")
    e.add_argument("--channels", type=str_list, default="tdlc300")
    e.add_argument("--num-rx", type=int_list, default="1")
    e.add_argument("--snr-list", type=float_list, default="-20,-15,-10,-5,0,5,10,15,20")
    e.add_argument("--trials", type=int, default=DESK_INSTANCES_PER_SNR)
    e.add_argument("--no-conventional", action="store_true")
    e.add_argument("--decision-point", type=float, default=0.5)
    e.add_argument("--plot", action="store_true", help="render PNG figures next to the CSV")
    e.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to the CSV")
    e.add_argument("--out")

    d = common(sub.add_parser("detect", help="run the receiver on an RE capture file"))
    d.add_argument("--capture")
    d.add_argument("--model")
    d.add_argument("--detector", choices=("hybrid", "conventional"), default="hybrid")
    d.add_argument("--roots", type=int_list, default=",".join(map(str, DEFAULT_ROOTS)))
    d.add_argument("--fa-target", type=float, default=1e-4,
                   help="per-window false-alarm rate the threshold is calibrated to")
    d.add_argument("--decision-point", type=float, default=None,
                   help="fixed hybrid p(present) cut; disables calibration")

    x = common(sub.add_parser("explain", help="Shapley attributions for a dataset slice"))
    x.add_argument("--model")
    x.add_argument("--data")
    x.add_argument("--snr", type=float, default=None, help="keep only this SNR")
    x.add_argument("--label", choices=("present", "absent", "any"), default="present")
    x.add_argument("--limit", type=int, default=200)
    x.add_argument("--baseline", choices=("mean", "zero"), default="mean")
    x.add_argument("--plot", action="store_true",
                   help="render the first detected instance's attribution figure")
    x.add_argument("--out")

    c = common(sub.add_parser("capture", help="simulate occasions and export them as an RE capture"))
    c.add_argument("--rapids", type=int_list, default="", help="users per occasion (empty: noise only)")
    c.add_argument("--occasions", type=int, default=1)
    c.add_argument("--snr", type=float, default=10.0)
    c.add_argument("--channel", choices=CHANNEL_MODELS, default="tdlc300")
    c.add_argument("--num-rx", type=int, default=1)
    c.add_argument("--delay-bins", type=float, default=2.0)
    c.add_argument("--roots", type=int_list, default=",".join(map(str, DEFAULT_ROOTS)))
    c.add_argument("--out")

    i = common(sub.add_parser("import", help="turn an RE capture into a window dataset"))
    i.add_argument("--capture")
    i.add_argument("--labels", help="JSON list of present RAPIDs per occasion (omit: unlabeled)")
    i.add_argument("--input", choices=INPUT_KINDS, default="pdp")
    i.add_argument("--snr", type=float, default=None)
    i.add_argument("--roots", type=int_list, default=",".join(map(str, DEFAULT_ROOTS)))
    i.add_argument("--out")
    return ap


def _config_defaults(path: str, command: str, parser: argparse.ArgumentParser) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path}")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    known = {a.dest for a in sub.choices[command]._actions}
    values = {}
    for section in ("prach", command):
        if cp.has_section(section):
            for key, val in cp.items(section):
                dest = key.replace("-", "_")
                if dest not in known:
                    raise ConfigError(f"{path}: unknown key {key!r} for '{command}'")
                values[dest] = val
    return values


def _attach_negative_values(argv):
    """Join ``--opt -5,0,5`` into ``--opt=-5,0,5``; argparse would read the
    list as an unknown option because it is not a plain negative number."""
    out = []
    it = iter(argv)
    for tok in it:
        out.append(tok)
        if tok.startswith("--") and "=" not in tok:
            nxt = next(it, None)
            if nxt is None:
                break
            if len(nxt) > 1 and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == "."):
                out[-1] = f"{tok}={nxt}"
            else:
                out.append(nxt)
    return out


def parse_args(argv):
    parser = build_parser()
    argv = _attach_negative_values(argv)
    args = parser.parse_args(argv)
    if args.config:
        defaults = _config_defaults(args.config, args.command, parser)
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        subparser = sub.choices[args.command]
        for act in subparser._actions:
            if act.dest in defaults and isinstance(act, argparse._StoreTrueAction):
                defaults[act.dest] = defaults[act.dest].lower() in ("1", "true", "yes", "on")
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return parser, args


def _need(parser, args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "", [])]
    if missing:
        parser.error(f"{args.command}: missing required option(s): "
                     + ", ".join("--" + m.replace("_", "-") for m in missing))


def resolved(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()}


def cmd_generate(parser, args):
    _need(parser, args, "out")
    spec = DatasetSpec(args.snr_list, args.instances, args.channel, args.num_rx, args.input,
                       args.ratio, args.seed, roots=args.roots)
    n = generate(spec, args.out)
    print(f"wrote {n} windows to {args.out}")


def cmd_train(parser, args):
    _need(parser, args, "data", "out")
    data = read_dataset(args.data)
    if not data:
        raise DataError(f"{args.data}: empty dataset")
    train_set, test_set = split(data, args.split, args.seed)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                      patience=args.patience, val_fraction=args.val_fraction, seed=args.seed,
                      normalization=args.normalization)
    model = train(train_set, cfg)
    xt, yt, _ = window_arrays(test_set, cfg.normalization)
    test_acc = accuracy(model, xt, yt)
    first = data[0]
    model.train_meta.update({
        "tool": TOOL,
        "dataset": {"path": Path(args.data).name, "channel": first.channel,
                    "num_rx": first.num_rx, "n_total": len(data), "n_test": len(test_set)},
        "test_accuracy": test_acc,
        "cli": resolved(args),
    })
    save_model(model, args.out)
    meta = model.train_meta
    print(f"train accuracy {meta['train_accuracy']:.4f}  val accuracy {meta['val_accuracy']:.4f}"
          f"  test accuracy {test_acc:.4f}  epochs {meta['epochs']}")


def cmd_eval(parser, args):
    _need(parser, args, "out")
    models = [load_model(p) for p in args.model]
    if not models and args.no_conventional:
        parser.error("eval: nothing to evaluate (no --model and --no-conventional)")
    for ch in args.channels:
        if ch not in CHANNEL_MODELS:
            raise ConfigError(f"unknown channel {ch!r}; valid: {', '.join(CHANNEL_MODELS)}")
    cfg = EvalConfig(args.snr_list, args.channels, args.num_rx, args.trials, args.seed,
                     not args.no_conventional, args.decision_point, threads=args.threads)
    rows = run_eval(models, cfg)
    write_eval_csv(rows, args.out, cfg, models)
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.plot:
        from .plotting import render_eval
        for p in render_eval(read_eval_csv(args.out), args.out):
            print(f"figure {p}")
    if args.gnuplot:
        from .plotting import gnuplot_script
        gp = Path(args.out).with_suffix(".gp")
        gp.write_text(gnuplot_script(args.out))
        print(f"gnuplot script {gp}")


def cmd_detect(parser, args):
    _need(parser, args, "capture")
    if args.detector == "hybrid":
        _need(parser, args, "model")
    model = load_model(args.model) if args.model else None
    roots = RootSet(tuple(args.roots))
    for oi, rx in enumerate(read_capture(args.capture, roots.l_ra)):
        fa = None if args.decision_point is not None else args.fa_target
        dp = 0.5 if args.decision_point is None else args.decision_point
        for rapid, ta in run_receiver(rx, roots, model, args.detector, decision_point=dp,
                                      fa_target=fa):
            print(f"{rapid}, {ta.ta_bins}, {ta.ta_meters:.1f}, {oi}")


def cmd_explain(parser, args):
    _need(parser, args, "model", "data", "out")
    model = load_model(args.model)
    data = read_dataset(args.data)
    kinds = {w.input_kind for w in data}
    if data and kinds != {model.input_kind}:
        raise DataError(f"model expects {model.input_kind} windows, dataset has {sorted(kinds)}")
    if model.n_in > 16:
        raise DataError("exact Shapley attribution is only supported for PDP (13-feature) models")
    ref = data
    if args.snr is not None:
        data = [w for w in data if w.snr_db is not None and float(w.snr_db) == args.snr]
    if args.label != "any":
        data = [w for w in data if w.label == args.label]
    data = data[:args.limit]
    baseline = None
    if args.baseline == "zero":
        baseline = np.zeros(model.n_in)
    elif ref:
        baseline = reference_baseline(ref, model.normalization)
    summary = explain_report(model, data, args.out, baseline,
                             header={"tool": TOOL, "config": resolved(args)})
    print(json.dumps({k: v for k, v in summary.items() if k != "baseline"}, sort_keys=True))
    if args.plot:
        from .plotting import plot_attribution
        for w in data:
            x = w.normalized(model.normalization)
            if forward(model, x)[1] >= 0.5:
                fig = Path(args.out).with_suffix(".png")
                plot_attribution(x, shapley_values(model, x, baseline), fig,
                                 title=f"RAPID {w.rapid}, SNR {w.snr_db} dB")
                print(f"figure {fig}")
                break


def cmd_capture(parser, args):
    _need(parser, args, "out")
    roots = RootSet(tuple(args.roots))
    grids, labels = [], []
    for oi in range(args.occasions):
        c = ChannelConfig(args.channel, args.num_rx, snr_db=args.snr, seed=[args.seed, oi])
        if args.rapids:
            users = []
            for r in args.rapids:
                b, v = roots.locate(r)
                users.append((roots.config(b, v), args.delay_bins * roots.config(b).samples_per_bin))
            grids.append(simulate_superposition(users, c))
        else:
            rng = np.random.default_rng(c.seed)
            grids.append(draw_noise(args.num_rx, roots.l_ra, args.snr, rng))
        labels.append(list(args.rapids))
    export_capture(grids, args.out, roots.l_ra, {"tool": TOOL, "config": resolved(args)})
    lab = Path(str(args.out) + ".labels.json")
    lab.write_text(json.dumps({"tool": TOOL, "config": resolved(args), "rapids": labels},
                              sort_keys=True) + "\n")
    print(f"wrote {len(grids)} occasions to {args.out} (labels: {lab})")


def cmd_import(parser, args):
    _need(parser, args, "capture", "out")
    rapids = None
    if args.labels:
        try:
            doc = json.loads(Path(args.labels).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.labels}: {exc}") from exc
        rapids = doc["rapids"] if isinstance(doc, dict) else doc
    meta = CaptureMeta(tuple(args.roots), args.input, args.snr, None, rapids,
                       extra={"config": resolved(args)})
    windows = import_capture(args.capture, meta, args.out)
    print(f"wrote {len(windows)} windows to {args.out}")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "detect": cmd_detect, "explain": cmd_explain, "capture": cmd_capture,
            "import": cmd_import}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser, args = parse_args(argv)
    except ConfigError as exc:
        print(f"prach: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](parser, args)
    except (ConfigError, ValueError) as exc:
        print(f"prach: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EstimationError, OSError, KeyError) as exc:
        print(f"prach: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, FloatingPointError) as exc:
        print(f"prach: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PrachError as exc:
        print(f"prach: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
