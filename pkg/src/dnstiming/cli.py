"""``dnstiming`` command line: simulate, ingest, analyze, detect, sweep, report.

Every run writes its outputs together with a JSON manifest (argv, seed,
input and output SHA-256 digests, library versions). ``report --manifest``
re-executes a recorded run and checks that it reproduces the recorded bytes.

Exit codes: 0 success, 1 usage error, 2 data error. Outputs are staged in
memory and written only once the whole command has succeeded.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dnstiming import __version__
from dnstiming.detect.evaluate import (
    EvaluationError, Forest, Knn, NaiveMask, attack_task, cache_task, evaluate, level_task, trial_seeds,
)
from dnstiming.detect.knn import ModelError
from dnstiming.detect.mask import alpha_grid, sweep
from dnstiming.detect.modelio import dumps_model, load_model
from dnstiming.ingest import (
    LogFormatError, ServerRegistry, correlate, format_log, format_transactions, read_log, read_transactions,
    tag_level, to_logs,
)
from dnstiming.levels import Label
from dnstiming.report import ReportResults, TaskResult, build_report, render_report
from dnstiming.timing import COARSE, FINE, Binning, domain_table, domains, format_histogram, histogram, \
    interval_table, split_cache_resolve
from dnstiming.traffic import (
    PROFILES, ConfigError, LevelModel, TtlMode, Workload, load_profile, reference_workload, simulate_attack,
    simulate_benign, with_total,
)

MANIFEST_FORMAT = "manifest/1"
SWEEP_FORMAT = "#format=sweep/1"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# flags whose values are files read by a command, and flags naming outputs
INPUT_FLAGS = ("--input", "--client", "--resolver", "--registry", "--model", "--workload", "--apply", "--config")
OUTPUT_FLAGS = ("--out", "--out-dir", "--logs")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Outcome:
    """Files to write (path -> bytes) plus lines for stdout."""

    files: dict[Path, bytes] = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)

    def add(self, path: str | Path, text: str) -> None:
        self.files[Path(path)] = text.encode("utf-8")


# -- argument grammar -----------------------------------------------------------------


def _alpha_spec(text: str) -> list[float]:
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}") from None
    if len(parts) == 1:
        return parts
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("alpha grid is START:STOP:STEP or a single value")
    try:
        return alpha_grid(*parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _interval_ms(text: str) -> tuple[int, int]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"interval is LO:HI in ms, got {text!r}") from None
    return int(round(lo * 1000)), int(round(hi * 1000))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnstiming", description="DNS response-timing analysis and poisoning detection.")
    parser.add_argument("--version", action="version", version=f"dnstiming {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="INI", help="INI file whose [run] section supplies default flags")
        return p

    p = command("simulate", "Generate benign (and optionally attack) transactions.")
    p.add_argument("--profile", choices=PROFILES, default="local", help="built-in level model (default local)")
    p.add_argument("--model", metavar="INI", help="levelmodel/1 file, overrides --profile")
    p.add_argument("--workload", metavar="INI", help="workload/1 file (default: the profile's top-site mix)")
    p.add_argument("--queries", type=_positive_int, help="number of benign queries (overrides the workload)")
    p.add_argument("--ttl-mode", choices=[m.value for m in TtlMode], help="force cache or resolution")
    p.add_argument("--attack", action="store_true", help="add one spoofed answer per benign query")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, metavar="CSV", help="transactions/1 output")
    p.add_argument("--logs", metavar="DIR", help="also write client/resolver logs and a registry (benign only)")

    p = command("ingest", "Correlate client and resolver logs into tagged transactions.")
    p.add_argument("--client", required=True, metavar="CSV")
    p.add_argument("--resolver", required=True, metavar="CSV")
    p.add_argument("--registry", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")

    p = command("analyze", "Histograms, cache/resolve split and per-domain level tables.")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--ping-ms", type=float, help="client-resolver ping (default: the profile's)")
    p.add_argument("--profile", choices=PROFILES, default="local")
    p.add_argument("--interval", type=_interval_ms, metavar="LO:HI", help="interval table bounds in ms")
    p.add_argument("--bin-width-us", type=_positive_int, default=COARSE.width_us)
    p.add_argument("--range-us", type=_positive_int, default=COARSE.hi_us)

    p = command("detect", "Evaluate a classifier on repeated 80/20 splits, or apply a saved model.")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--task", choices=("attack", "cache", "level"), default="attack")
    p.add_argument("--classifier", choices=("rf", "knn", "naive"), default="rf")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=_positive_int, default=1)
    p.add_argument("--split", type=float, default=0.8, help="training share (default 0.8)")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--trees", type=_positive_int, default=50)
    p.add_argument("--depth", type=_positive_int, default=8)
    p.add_argument("--apply", metavar="MODEL", help="label the input with a saved model instead of evaluating")

    p = command("sweep", "Attack success rate across alpha thresholds.")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--alpha", type=_alpha_spec, default=alpha_grid(0.0, 0.08, 0.005),
                   metavar="START:STOP:STEP", help="fractions, default 0:0.08:0.005")
    p.add_argument("--bin-width-us", type=_positive_int, default=COARSE.width_us)
    p.add_argument("--range-us", type=_positive_int, default=COARSE.hi_us)

    p = command("report", "Plot-ready histograms, metrics and summary; or re-run a manifest.")
    p.add_argument("--input", metavar="CSV")
    p.add_argument("--out-dir", metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=_positive_int, default=1)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--trees", type=_positive_int, default=50)
    p.add_argument("--depth", type=_positive_int, default=8)
    p.add_argument("--manifest", metavar="JSON", help="re-run this manifest and verify its outputs")
    return parser


# -- config file defaults -------------------------------------------------------------


def _flag_given(argv: list[str], flag: str) -> bool:
    return any(a == flag or a.startswith(flag + "=") for a in argv)


def expand_config(argv: list[str]) -> list[str]:
    """Append ``[run]`` defaults from ``--config`` for flags not given on the command line."""
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return list(argv)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise DataError(f"bad config {path}: {exc}") from None
    if not cp.has_section("run"):
        raise DataError(f"config {path} has no [run] section")
    out = list(argv)
    for key, value in cp["run"].items():
        flag = "--" + key.replace("_", "-")
        if flag == "--config" or _flag_given(argv, flag):
            continue
        if value.lower() in ("true", "yes", "on"):
            out.append(flag)
        elif value.lower() not in ("false", "no", "off"):
            out += [flag, value]
    return out


# -- commands -------------------------------------------------------------------------


def cmd_simulate(args) -> Outcome:
    model = LevelModel.load(args.model) if args.model else load_profile(args.profile)
    if args.workload:
        workload = Workload.load(args.workload)
    else:
        workload = reference_workload(args.profile, args.queries or 10_000)
    if args.queries:
        workload = with_total(workload, args.queries)
    if args.ttl_mode:
        workload = Workload(workload.domains, workload.total_queries, TtlMode(args.ttl_mode))
    benign = simulate_benign(workload, model, args.seed)
    txs = list(benign)
    if args.attack:
        txs += simulate_attack(benign, model, trial_seeds(args.seed, 1)[0])
    out = Outcome()
    out.add(args.out, format_transactions(txs))
    if args.logs:
        client, resolver, registry = to_logs(benign)
        logs = Path(args.logs)
        out.add(logs / "client.csv", format_log(client))
        out.add(logs / "resolver.csv", format_log(resolver))
        out.add(logs / "registry.csv", registry.format())
    n_att = len(txs) - len(benign)
    out.messages.append(f"{len(benign)} benign and {n_att} attack transactions")
    return out


def cmd_ingest(args) -> Outcome:
    registry = ServerRegistry.load(args.registry)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        corr = correlate(read_log(args.client), read_log(args.resolver), registry)
    txs = [tag_level(t, registry) for t in corr.trees]
    out = Outcome()
    out.add(args.out, format_transactions(txs))
    out.messages += [str(w.message) for w in caught]
    out.messages += [f"{k}: {v}" for k, v in corr.report().items()]
    return out


def cmd_analyze(args) -> Outcome:
    txs = [t for t in read_transactions(args.input) if t.label is Label.BENIGN]
    if not txs:
        raise DataError("input has no benign transactions")
    rtt = np.array([t.rtt_us for t in txs], dtype=np.int64)
    ping_ms = args.ping_ms if args.ping_ms is not None else load_profile(args.profile).cache.ping_mean_ms
    if ping_ms <= 0:
        raise UsageError("--ping-ms must be positive")
    binning = Binning(0, args.range_us, args.bin_width_us)
    out_dir = Path(args.out_dir)
    out = Outcome()
    out.add(out_dir / "hist_rtt.csv", format_histogram(histogram(rtt, binning)))
    out.add(out_dir / "hist_fine.csv", format_histogram(histogram(rtt, FINE)))

    split = split_cache_resolve(rtt, int(round(ping_ms * 1000)))
    cache_share = float(split.is_cache(rtt).mean())
    out.add(out_dir / "cache_split.csv",
            "#format=cachesplit/1\nthreshold_us,ping_mean_us,gap_width_us,low_confidence,cache_share\n"
            f"{split.threshold_us},{split.ping_mean_us},{split.gap_width_us},{int(split.low_confidence)},"
            f"{cache_share:.12g}\n")

    rows = ["#format=domaintable/1", "domain,level,share,count,total"]
    for d in domains(txs):
        table = domain_table(txs, d)
        for level, share in table.level_shares.items():
            rows.append(f"{d},{level.value},{share:.12g},{int(round(share * table.total))},{table.total}")
    out.add(out_dir / "domains.csv", "\n".join(rows) + "\n")

    if args.interval:
        lo, hi = args.interval
        if hi <= lo:
            raise UsageError("--interval needs HI > LO")
        rows = ["#format=intervaltable/1", "domain,lo_us,hi_us,interval_probability,level,share"]
        for d in domains(txs):
            it = interval_table(txs, d, lo, hi)
            prob = f"{it.interval_probability:.12g}"
            if not it.level_shares:
                rows.append(f"{d},{lo},{hi},{prob},,")
            for level, share in it.level_shares.items():
                rows.append(f"{d},{lo},{hi},{prob},{level.value},{share:.12g}")
        out.add(out_dir / "intervals.csv", "\n".join(rows) + "\n")

    noise = int(histogram(rtt, binning).noise_bins().sum())
    out.messages.append(f"cache threshold {split.threshold_us} us, gap {split.gap_width_us} us"
                        f"{' (low confidence)' if split.low_confidence else ''}; {noise} noise bins")
    return out


_TASKS = {"attack": attack_task, "cache": cache_task, "level": level_task}


def _classifier(args):
    if args.classifier == "rf":
        return Forest(args.trees, args.depth)
    if args.classifier == "knn":
        return Knn(args.k)
    if args.task != "attack":
        raise UsageError("the naive mask only separates benign from attack answers (--task attack)")
    return NaiveMask()


def cmd_detect(args) -> Outcome:
    txs = read_transactions(args.input)
    x, y = _TASKS[args.task](txs)
    if x.size == 0:
        raise DataError(f"input has no samples for the {args.task} task")
    out_dir = Path(args.out_dir)
    out = Outcome()
    if args.apply:
        model = load_model(args.apply)
        pred = model.predict(x)
        rows = ["#format=predictions/1", "rtt_us,truth,predicted"]
        rows += [f"{r},{t},{p}" for r, t, p in zip(x.tolist(), y.tolist(), pred.tolist())]
        out.add(out_dir / "predictions.csv", "\n".join(rows) + "\n")
        out.messages.append(f"accuracy against input labels {float((pred == y).mean()):.4f}")
        return out
    if not 0 < args.split < 1:
        raise UsageError("--split must lie strictly between 0 and 1")
    clf = _classifier(args)
    positive = Label.ATTACK.value if args.task == "attack" else None
    ev = evaluate(x, y, clf, split_ratio=args.split, trials=args.trials, seed=args.seed, positive=positive)
    results = ReportResults(results=[TaskResult(args.task, clf.name, ev.metrics)])
    files = render_report(results)
    out.add(out_dir / "metrics.csv", files["metrics.csv"])
    out.add(out_dir / "summary.txt", files["summary.txt"])
    rows = ["#format=similarity/1", "trial,bin_lo_us,bin_hi_us,share_diff"]
    for i, rep in enumerate(ev.similarity):
        rows += [f"{i},{lo},{hi},{d:.12g}" for lo, hi, d in rep.flagged]
    out.add(out_dir / "similarity.csv", "\n".join(rows) + "\n")
    if args.classifier != "naive":
        out.add(out_dir / "model.txt", dumps_model(clf.fit(x, y, seed=args.seed)))
    out.messages.append(files["summary.txt"].rstrip("\n"))
    if not ev.similar:
        out.messages.append("warning: train/test RTT distributions differ by 5 pp or more in some interval")
    return out


def cmd_sweep(args) -> Outcome:
    txs = [t for t in read_transactions(args.input) if t.label is Label.BENIGN]
    if not txs:
        raise DataError("input has no benign transactions")
    alphas = args.alpha
    if any(not 0 <= a <= 1 for a in alphas):
        raise UsageError("alpha values must lie in [0, 1]")
    hist = histogram([t.rtt_us for t in txs], Binning(0, args.range_us, args.bin_width_us))
    rows = [SWEEP_FORMAT, "alpha,success_rate,retained_bins"]
    rows += [f"{r.alpha:.12g},{r.success_rate:.12g},{r.retained_bins}" for r in sweep(hist, alphas)]
    out = Outcome()
    out.add(args.out, "\n".join(rows) + "\n")
    return out


def cmd_report(args) -> Outcome:
    if not (args.input and args.out_dir) or args.seed is None:
        raise UsageError("report needs --input, --out-dir and --seed (or --manifest)")
    results = build_report(read_transactions(args.input), args.seed, args.trials, args.k, args.trees, args.depth)
    out = Outcome()
    for name, text in render_report(results).items():
        out.add(Path(args.out_dir) / name, text)
    out.messages.append(f"report written to {args.out_dir}")
    return out


COMMANDS = {"simulate": cmd_simulate, "ingest": cmd_ingest, "analyze": cmd_analyze, "detect": cmd_detect,
            "sweep": cmd_sweep, "report": cmd_report}


# -- manifests and staged writes ------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict[str, str]:
    return {"dnstiming": __version__, "numpy": np.__version__}


def manifest_path(args) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / "manifest.json"
    return Path(args.out + ".manifest.json")


def _inputs(argv: list[str]) -> list[str]:
    return [argv[i + 1] for i, a in enumerate(argv[:-1]) if a in INPUT_FLAGS]


def _manifest(argv: list[str], args, outcome: Outcome) -> str:
    inputs = {}
    for p in _inputs(argv):
        inputs[p] = _sha256(Path(p).read_bytes())
    doc = {
        "format": MANIFEST_FORMAT,
        "command": args.command,
        "argv": argv,
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": {str(p): _sha256(b) for p, b in sorted(outcome.files.items())},
        "versions": _versions(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _check_no_clobber(argv: list[str], outcome: Outcome) -> None:
    inputs = {os.path.realpath(p) for p in _inputs(argv)}
    for p in outcome.files:
        if os.path.realpath(p) in inputs:
            raise DataError(f"output {p} would overwrite an input")


def write_outputs(files: dict[Path, bytes]) -> None:
    """Write every file or none: stage to temporaries, then rename."""
    staged = []
    try:
        for path, data in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(f".{path.name}.tmp")
            tmp.write_bytes(data)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except OSError as exc:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise DataError(f"cannot write {exc.filename}: {exc.strerror}") from None


def _normalise_argv(argv: list[str]) -> list[str]:
    """Spell every ``--flag=value`` as two tokens so manifests compare cleanly."""
    out = []
    for a in argv:
        if a.startswith("--") and "=" in a:
            out += a.split("=", 1)
        else:
            out.append(a)
    return out


def execute(argv: list[str]) -> int:
    parser = build_parser()
    try:
        argv = _normalise_argv(expand_config(argv))
    except DataError as exc:
        print(f"dnstiming: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    args = parser.parse_args(argv)
    if args.command == "report" and args.manifest:
        return rerun(args.manifest, args.out_dir)
    try:
        for p in _inputs(argv):
            if not Path(p).is_file():
                raise DataError(f"input file {p} does not exist")
        outcome = COMMANDS[args.command](args)
        _check_no_clobber(argv, outcome)
        files = dict(outcome.files)
        files[manifest_path(args)] = _manifest(argv, args, outcome).encode("utf-8")
        write_outputs(files)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dnstiming: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, LogFormatError, ModelError, EvaluationError, ValueError, KeyError,
            OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"dnstiming: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    for line in outcome.messages:
        print(line)
    return EXIT_OK


# -- manifest re-runs -----------------------------------------------------------------


def reroot(argv: list[str], dest: str | Path) -> tuple[list[str], dict[str, str]]:
    """Point a recorded argv's outputs into ``dest``.

    Returns the new argv and a map from recorded output prefixes to their
    new locations.
    """
    dest = Path(dest)
    out, moves = list(argv), {}
    for i, a in enumerate(argv[:-1]):
        if a not in OUTPUT_FLAGS:
            continue
        old = argv[i + 1]
        new = dest if a == "--out-dir" else dest / Path(old).name
        out[i + 1] = str(new)
        moves[old] = str(new)
    return out, moves


def _moved(path: str, moves: dict[str, str]) -> str:
    for old, new in moves.items():
        if path == old or path == old + ".manifest.json":
            return new + path[len(old):]
        if path.startswith(old.rstrip("/") + "/"):
            return str(Path(new) / Path(path).relative_to(old))
    return path


def rerun(manifest: str, out_dir: str | None) -> int:
    """Re-execute a manifest's command and compare outputs byte for byte."""
    try:
        doc = json.loads(Path(manifest).read_text(encoding="utf-8"))
        if doc.get("format") != MANIFEST_FORMAT:
            raise DataError(f"{manifest} is not a {MANIFEST_FORMAT} manifest")
        argv = list(doc["argv"])
        for p, digest in doc["inputs"].items():
            if not Path(p).is_file() or _sha256(Path(p).read_bytes()) != digest:
                raise DataError(f"input {p} is missing or changed since the recorded run")
    except (OSError, ValueError, KeyError, DataError) as exc:
        print(f"dnstiming: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    moves = {}
    if out_dir:
        argv, moves = reroot(argv, out_dir)
    code = execute(argv)
    if code != EXIT_OK:
        return code
    bad = [p for p, digest in doc["outputs"].items()
           if _sha256(Path(_moved(p, moves)).read_bytes()) != digest]
    if bad:
        print(f"dnstiming: error: {len(bad)} outputs differ from the manifest: {', '.join(bad)}", file=sys.stderr)
        return EXIT_DATA
    print(f"reproduced {len(doc['outputs'])} outputs byte-identically")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    return execute(list(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    sys.exit(main())
