"""Pipeline driver.

One subcommand per stage: gen, abs, encode, enc-error, train, eval,
report.  Every option resolves as CLI flag > config file > built-in
default; the effective configuration is echoed to stdout, into CSV
outputs as leading # comments, and next to binary outputs as a .meta
file.  Outputs are deterministic, so re-running a command overwrites its
files with identical bytes.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time

import numpy as np

from . import abstraction, datagen, encoding, metrics, network
from .cards import board_str, make_deck
from .datagen import CfrConfig, DatagenConfig, train_test_split
from .subgame import ActionConfig

DEFAULT_BUCKETS = {"ehs2": 1326, "pa": 1000}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


class Effective:
    """Option values resolved from flag > config file > default."""

    def __init__(self, args, config: configparser.ConfigParser, section: str):
        self.args = args
        self.config = config
        self.section = section
        self.resolved: dict = {}

    def get(self, key: str, default, cast=None):
        flag = getattr(self.args, key.replace("-", "_"), None)
        if flag is not None:
            value = flag
        elif self.config.has_option(self.section, key):
            value = self.config.get(self.section, key)
        else:
            value = default
        if isinstance(value, str) and (cast or not isinstance(default, str) and default is not None):
            value = (cast or type(default))(value)
        self.resolved[key] = value
        return value

    def lines(self) -> list:
        return [f"{self.section}.{k}={v}" for k, v in sorted(self.resolved.items())]


def _echo(eff: Effective) -> None:
    for line in eff.lines():
        print(f"# {line}")


def _write_meta(path, eff: Effective) -> None:
    with open(str(path) + ".meta", "w") as f:
        f.write("\n".join(eff.lines()) + "\n")


def _csv_header(path, eff: Effective, columns: str, rows: list) -> None:
    with open(path, "w", newline="") as f:
        for line in eff.lines():
            f.write(f"# {line}\n")
        f.write(columns + "\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# ------------------------------------------------------------------ commands


def cmd_gen(args, config) -> int:
    eff = Effective(args, config, "gen")
    n = eff.get("n", 10_000)
    seed = eff.get("seed", 1)
    deck = eff.get("deck", "full")
    threads = eff.get("threads", 1)
    out = eff.get("out", None)
    fmt = eff.get("format", "bin")
    dg = DatagenConfig(
        deck=deck,
        pot_fractions=eff.get("pot-fractions", datagen.DEFAULT_POT_FRACTIONS, _floats),
        stack_depth=eff.get("stack-depth", 200.0),
        cfr=CfrConfig(
            iterations=eff.get("cfr-iters", 1000),
            averaging_start=eff.get("cfr-start", 500),
            plus_variant=eff.get("cfr-plus", True, _bool),
        ),
        actions=ActionConfig(
            bet_fractions=eff.get("bet-fractions", (1.0,), _floats),
            include_allin=eff.get("allin", True, _bool),
            raise_cap=eff.get("raise-cap", 3),
        ),
    )
    if out is None:
        raise ValueError("gen needs --out")
    if fmt not in ("bin", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    _echo(eff)
    t0 = time.time()
    last = {"t": t0}

    def progress(i):
        now = time.time()
        if now - last["t"] >= 10:
            last["t"] = now
            done = i + 1
            rate = (now - t0) / done
            print(f"  {done}/{n} examples, {rate:.2f}s each, eta {(n - done) * rate / 60:.1f} min")

    examples = datagen.generate_dataset(n, seed, dg, threads=threads, progress=progress)
    if fmt == "csv":
        datagen.export_csv(out, examples)
    else:
        datagen.save_dataset(out, examples)
    _write_meta(out, eff)
    print(f"wrote {n} examples to {out} in {time.time() - t0:.1f}s")
    return 0


def _unique_boards(examples) -> list:
    seen = {}
    for ex in examples:
        seen.setdefault(tuple(int(c) for c in ex.spec.board), None)
    return [np.array(b, dtype=np.int64) for b in seen]


def cmd_abs(args, config) -> int:
    eff = Effective(args, config, "abs")
    kind = eff.get("kind", None)
    dataset = eff.get("dataset", None)
    out = eff.get("out", None)
    seed = eff.get("seed", 1)
    deck_name = eff.get("deck", "full")
    if kind not in (abstraction.KIND_EHS2, abstraction.KIND_NESTED, abstraction.KIND_PA):
        raise ValueError(f"unknown abstraction kind {kind!r}")
    if dataset is None or out is None:
        raise ValueError("abs needs --dataset and --out")
    deck = make_deck(deck_name)
    examples = datagen.load_dataset(dataset)
    boards = _unique_boards(examples)
    model = None
    if kind == abstraction.KIND_EHS2:
        buckets = eff.get("buckets", DEFAULT_BUCKETS["ehs2"])
        _echo(eff)
        mappings = [abstraction.build_ehs2_mapping(b, buckets, deck) for b in boards]
    elif kind == abstraction.KIND_PA:
        buckets = eff.get("buckets", DEFAULT_BUCKETS["pa"])
        bins = eff.get("bins", 50)
        _echo(eff)
        t0 = time.time()
        mappings = []
        for i, b in enumerate(boards):
            mappings.append(abstraction.build_potential_aware_mapping(b, buckets, bins=bins, seed=seed, deck=deck))
            if i == 0:
                print(f"  {(time.time() - t0):.2f}s per board, {len(boards)} boards")
    else:
        k_public = eff.get("k-public", 10)
        k_sub = eff.get("k-sub", 100)
        _echo(eff)
        model = abstraction.build_public_nested_mapping(boards, k_public, k_sub, seed=seed, deck=deck)
        mappings = [model.mapping_for(b, deck) for b in boards]
    abstraction.save_mappings(out, mappings, model)
    _write_meta(out, eff)
    print(f"wrote {len(mappings)} {kind} mappings to {out}")
    return 0


def _mapping_index(path):
    return abstraction.load_mappings(path)


def _mapping_for_spec(index, model, spec, deck):
    key = tuple(int(c) for c in spec.board)
    m = index.get(key)
    if m is None and model is not None:
        m = model.mapping_for(spec.board, deck)
        index[key] = m
    if m is None:
        raise ValueError(f"no mapping for board {board_str(spec.board)}; rebuild the abstraction file")
    return m


def cmd_encode(args, config) -> int:
    eff = Effective(args, config, "encode")
    dataset = eff.get("dataset", None)
    kind = eff.get("kind", None)
    out = eff.get("out", None)
    abs_path = eff.get("abs", None)
    weighted = not eff.get("unweighted", False, _bool)
    deck = make_deck(eff.get("deck", "full"))
    if dataset is None or out is None or kind is None:
        raise ValueError("encode needs --dataset, --kind and --out")
    if kind not in encoding.KINDS:
        raise ValueError(f"unknown encoding kind {kind!r}")
    _echo(eff)
    examples = datagen.load_dataset(dataset)
    if kind == encoding.KIND_DIRECT:
        encoded = [encoding.encode_example(ex, kind, None) for ex in examples]
        num_buckets = 1326
    else:
        if abs_path is None:
            raise ValueError(f"encode --kind {kind} needs --abs")
        file_kind, index, model = _mapping_index(abs_path)
        if file_kind != kind:
            raise ValueError(f"abstraction file holds {file_kind!r} mappings, not {kind!r}")
        encoded = []
        for ex in examples:
            m = _mapping_for_spec(index, model, ex.spec, deck)
            encoded.append(encoding.encode_example(ex, kind, m, weighted))
        num_buckets = next(iter(index.values())).num_buckets
    encoding.save_encoded(out, kind, num_buckets, encoded)
    _write_meta(out, eff)
    print(f"encoded {len(encoded)} examples ({kind}) to {out}")
    return 0


def cmd_enc_error(args, config) -> int:
    eff = Effective(args, config, "enc-error")
    dataset = eff.get("dataset", None)
    kind = eff.get("kind", None)
    out = eff.get("out", None)
    abs_path = eff.get("abs", None)
    weighted = not eff.get("unweighted", False, _bool)
    deck = make_deck(eff.get("deck", "full"))
    if dataset is None or kind is None:
        raise ValueError("enc-error needs --dataset and --kind")
    if kind not in encoding.KINDS:
        raise ValueError(f"unknown encoding kind {kind!r}")
    _echo(eff)
    examples = datagen.load_dataset(dataset)
    if kind == encoding.KIND_DIRECT:
        mapping_for = lambda spec: None
    else:
        if abs_path is None:
            raise ValueError(f"enc-error --kind {kind} needs --abs")
        file_kind, index, model = _mapping_index(abs_path)
        if file_kind != kind:
            raise ValueError(f"abstraction file holds {file_kind!r} mappings, not {kind!r}")
        mapping_for = lambda spec: _mapping_for_spec(index, model, spec, deck)
    h = encoding.encoding_error(examples, mapping_for, metrics.huber, weighted)
    s = encoding.encoding_error(examples, mapping_for, metrics.mse, weighted)
    print(f"encoding error ({kind}): huber={h!r} mse={s!r} over {len(examples)} examples")
    if out:
        _csv_header(out, eff, "encoding,huber,mse,n_examples", [[kind, repr(h), repr(s), len(examples)]])
    return 0


def cmd_train(args, config) -> int:
    eff = Effective(args, config, "train")
    encoded_path = eff.get("encoded", None)
    out = eff.get("out", None)
    curve_path = eff.get("curve", None)
    epochs = eff.get("epochs", 350)
    batch = eff.get("batch", 1000)
    lr = eff.get("lr", 1e-3)
    seed = eff.get("seed", 0)
    hidden = eff.get("hidden", network.DESK_HIDDEN, _ints)
    if eff.get("paper-arch", False, _bool):
        hidden = network.PAPER_HIDDEN
    if encoded_path is None or out is None:
        raise ValueError("train needs --encoded and --out")
    _echo(eff)
    kind, num_buckets, encoded = encoding.load_encoded(encoded_path)
    train_idx, test_idx = train_test_split(len(encoded))
    train_set = [encoded[i] for i in train_idx]
    test_set = [encoded[i] for i in test_idx]
    mlp = network.MlpConfig(
        input_dim=len(encoded[0].inputs),
        output_dim=len(encoded[0].targets),
        hidden=tuple(hidden),
        seed=seed,
    )
    tc = network.TrainConfig(epochs=epochs, batch_size=batch, learning_rate=lr, seed=seed)
    t0 = time.time()

    def progress(epoch, train_loss, test_loss):
        if epoch % 25 == 0 or epoch == epochs:
            print(f"  epoch {epoch}/{epochs}  train {train_loss:.5f}  test {test_loss:.5f}  ({time.time() - t0:.0f}s)")

    params, curve = network.train(train_set, mlp, tc, encoded_test=test_set, progress=progress)
    network.save_model(out, mlp, params)
    _write_meta(out, eff)
    if curve_path:
        network.save_curve(curve_path, curve)
    print(f"trained {kind} ({num_buckets} buckets) for {epochs} epochs -> {out}")
    return 0


def cmd_eval(args, config) -> int:
    eff = Effective(args, config, "eval")
    model_path = eff.get("model", None)
    encoded_path = eff.get("encoded", None)
    dataset = eff.get("dataset", None)
    abs_path = eff.get("abs", None)
    results = eff.get("results", None)
    deck = make_deck(eff.get("deck", "full"))
    if model_path is None or encoded_path is None or dataset is None or results is None:
        raise ValueError("eval needs --model, --encoded, --dataset and --results")
    _echo(eff)
    mlp, params = network.load_model(model_path)
    kind, num_buckets, encoded = encoding.load_encoded(encoded_path)
    examples = datagen.load_dataset(dataset)
    if len(examples) != len(encoded):
        raise ValueError(f"dataset has {len(examples)} examples, encoded file has {len(encoded)}")
    if kind == encoding.KIND_DIRECT:
        mapping_for = lambda spec: None
    else:
        if abs_path is None:
            raise ValueError("eval on a bucketed encoding needs --abs")
        file_kind, index, model = _mapping_index(abs_path)
        if file_kind != kind:
            raise ValueError(f"abstraction file holds {file_kind!r} mappings, not {kind!r}")
        mapping_for = lambda spec: _mapping_for_spec(index, model, spec, deck)
    K = mlp.output_dim // 2
    train_idx, test_idx = train_test_split(len(encoded))
    reports = []
    for split_name, idx in (("train", train_idx), ("test", test_idx)):
        subset = [encoded[i] for i in idx]
        raw = [examples[i] for i in idx]
        preds = network.predict(params, subset, K)
        for regime in ("abstracted", "unabstracted"):
            reports.append(
                metrics.evaluate(preds, raw, subset, mapping_for, kind, f"{regime}-{split_name}")
            )
    rows = [[r.encoding, r.regime, repr(r.huber), repr(r.mse), r.n_examples] for r in reports]
    _csv_header(results, eff, ",".join(metrics._CSV_FIELDS), rows)
    for r in reports:
        print(f"  {r.encoding:7s} {r.regime:18s} huber {r.huber:.5f}  mse {r.mse:.5f}")
    return 0


def _read_csv_rows(path) -> list:
    import csv as _csv

    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(_csv.DictReader(lines))


def cmd_report(args, config) -> int:
    eff = Effective(args, config, "report")
    enc_files = args.enc_errors or []
    result_files = args.results or []
    out = eff.get("out", None)
    if not enc_files and not result_files:
        raise ValueError("report needs --enc-errors and/or --results files")
    lines = []
    if enc_files:
        rows = [r for p in enc_files for r in _read_csv_rows(p)]
        lines.append("Encoding error by scheme")
        lines.append(f"{'encoding':12s} {'huber':>12s} {'mse':>12s} {'n':>8s}")
        for r in rows:
            lines.append(
                f"{r['encoding']:12s} {float(r['huber']):12.6f} {float(r['mse']):12.6f} {int(r['n_examples']):8d}"
            )
        lines.append("")
    if result_files:
        rows = [r for p in result_files for r in _read_csv_rows(p)]
        regimes = list(metrics.REGIMES)
        by_enc: dict = {}
        for r in rows:
            by_enc.setdefault(r["encoding"], {})[r["regime"]] = float(r["huber"])
        lines.append("Prediction error (Huber) by encoding and regime")
        lines.append(f"{'encoding':12s}" + "".join(f" {reg:>19s}" for reg in regimes))
        for enc, per in by_enc.items():
            cells = "".join(f" {per.get(reg, float('nan')):19.6f}" for reg in regimes)
            lines.append(f"{enc:12s}{cells}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if out:
        with open(out, "w") as f:
            for line in eff.lines():
                f.write(f"# {line}\n")
            f.write(text)
    return 0


# -------------------------------------------------------------------- driver


def _add_common(sub, *flags):
    spec = {
        "n": int, "seed": int, "deck": str, "out": str, "threads": int,
        "cfr-iters": int, "cfr-start": int, "cfr-plus": str, "stack-depth": float,
        "pot-fractions": _floats, "bet-fractions": _floats, "allin": str, "raise-cap": int,
        "format": str, "kind": str, "dataset": str, "buckets": int, "bins": int,
        "k-public": int, "k-sub": int, "abs": str, "unweighted": str, "encoded": str,
        "curve": str, "epochs": int, "batch": int, "lr": float, "hidden": _ints,
        "paper-arch": str, "model": str, "results": str,
    }
    for flag in flags:
        sub.add_argument(f"--{flag}", type=spec[flag], default=None, dest=flag.replace("-", "_"))


def build_parser() -> _Parser:
    parser = _Parser(prog="cfvnet", description=__doc__)
    parser.add_argument("--config", default=None, help="key=value config file with [section]s")
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(
        subs.add_parser("gen", help="CFR-solve random turn situations into a dataset"),
        "n", "seed", "deck", "out", "threads", "cfr-iters", "cfr-start", "cfr-plus",
        "stack-depth", "pot-fractions", "bet-fractions", "allin", "raise-cap", "format",
    )
    _add_common(
        subs.add_parser("abs", help="build bucket mappings for a dataset's boards"),
        "kind", "dataset", "out", "seed", "deck", "buckets", "bins", "k-public", "k-sub",
    )
    _add_common(
        subs.add_parser("encode", help="encode a dataset under an abstraction"),
        "dataset", "kind", "out", "abs", "unweighted", "deck",
    )
    _add_common(
        subs.add_parser("enc-error", help="round-trip information loss of an encoding"),
        "dataset", "kind", "out", "abs", "unweighted", "deck",
    )
    _add_common(
        subs.add_parser("train", help="train a CV network on an encoded dataset"),
        "encoded", "out", "curve", "epochs", "batch", "lr", "seed", "hidden", "paper-arch",
    )
    _add_common(
        subs.add_parser("eval", help="score a model under the four regimes"),
        "model", "encoded", "dataset", "abs", "results", "deck",
    )
    rep = subs.add_parser("report", help="join result CSVs into the two summary tables")
    rep.add_argument("--enc-errors", nargs="+", default=None)
    rep.add_argument("--results", nargs="+", default=None)
    rep.add_argument("--out", type=str, default=None)
    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "abs": cmd_abs,
    "encode": cmd_encode,
    "enc-error": cmd_enc_error,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = configparser.ConfigParser()
    if args.config:
        with open(args.config) as f:
            config.read_file(f)
    try:
        return _COMMANDS[args.command](args, config)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
