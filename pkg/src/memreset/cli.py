"""Command-line entry point: ``memreset <stage> ...``.

Every stage writes its artifacts plus ``<stage>.manifest.json`` into
``--out-dir``. Exit codes: 0 success, 1 data error, 2 usage error. Option
defaults can be supplied through a JSON file named by ``MEMRESET_CONFIG``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence

from . import __version__
from .impact import ConfigError, estimate_impact, load_energy_models, load_pricing
from .ingest import FORMATS, IngestError, parse_log, sort_records, write_log
from .memory_model import ModelLimits, accumulate, parse_policy, policy_to_dict
from .report import (
    RunManifest,
    impact_table,
    pause_histogram,
    summary_markdown,
    token_distribution,
)
from .simulate import (
    DEFAULT_THRESHOLDS,
    RESET_RULES,
    format_threshold,
    infer_turns,
    parse_thresholds,
    results_from_json,
    results_to_csv,
    results_to_json,
    sweep,
)
from .threads import (
    MONOTONIC_MODES,
    ReconstructionError,
    dump_threads,
    load_threads,
    reconstruct,
)
from .workload import PRESETS, generate, perturb, preset

CONFIG_ENV = "MEMRESET_CONFIG"
STAGES = ("generate", "ingest", "reconstruct", "simulate", "impact", "report", "all")

#: Options that change run time but never the artifacts; kept out of manifests.
_EXECUTION_ONLY = {"jobs", "out_dir", "func", "stage"}


class DataError(Exception):
    pass


class _Stage:
    """Collects a stage's outputs; removes them again if the stage fails."""

    def __init__(self, name: str, out_dir: Path, config: dict):
        self.out_dir = out_dir
        self.written: list[Path] = []
        self.manifest = RunManifest(name, __version__, config)

    def write(self, name: str, data: bytes) -> Path:
        path = self.out_dir / name
        tmp = path.with_name(path.name + ".partial")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self.written.append(path)
        self.manifest.add_output(path)
        return path


@contextmanager
def _stage(name: str, out_dir: Path, config: dict) -> Iterator[_Stage]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = _Stage(name, out_dir, config)
    try:
        yield stage
    except BaseException:
        for path in stage.written:
            path.unlink(missing_ok=True)
        raise
    stage.manifest.finish()
    (out_dir / f"{name}.manifest.json").write_bytes(stage.manifest.to_json())


def _config_of(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in _EXECUTION_ONLY:
            continue
        if isinstance(v, list):
            v = [_plain(x) for x in v]
        else:
            v = _plain(v)
        out[k] = v
    return out


def _plain(value):
    if hasattr(value, "describe"):
        return value.describe()
    if isinstance(value, float):
        return format_threshold(value)
    return value


def _read_input(path: str) -> bytes:
    try:
        if path == "-":
            return sys.stdin.buffer.read()
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _column_map(text: str | None) -> dict[str, str] | None:
    if not text:
        return None
    mapping = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise DataError(f"malformed --column-map entry {item!r}; expected field=column")
        mapping[key.strip()] = value.strip()
    return mapping


# stages ---------------------------------------------------------------------


def _load_records(args, stage: _Stage):
    data = _read_input(args.input)
    if args.input != "-":
        stage.manifest.add_input(args.input)
    records, report = parse_log(data, args.format, _column_map(args.column_map))
    return sort_records(records), report


def cmd_generate(args) -> int:
    overrides = {
        k: getattr(args, k)
        for k in ("seed", "n_users", "n_threads", "irregular_rate", "collision_rate")
        if getattr(args, k) is not None
    }
    config = preset(args.preset, **overrides)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else None
    with _stage("generate", out.parent, {"preset": args.preset, **config.to_dict()}) as st:
        records, truth = generate(config)
        records, truth = perturb(records, truth, config)
        st.write(out.name, write_log(records, args.format))
        if truth_path is not None:
            if truth_path.parent != out.parent:
                raise DataError("--truth must be written next to --out")
            st.write(truth_path.name, truth.to_jsonl())
    print(f"wrote {len(records):,} records to {out}", file=sys.stderr)
    return 0


def cmd_ingest(args) -> int:
    with _stage("ingest", Path(args.out_dir), _config_of(args)) as st:
        records, report = _load_records(args, st)
        st.write("records.csv", write_log(records, "csv"))
        st.write("validation.json", (json.dumps(report.to_dict(), indent=2) + "\n").encode())
    print(
        f"accepted {report.row_count:,} rows from {report.user_count:,} users, "
        f"rejected {len(report.rejected_rows):,}",
        file=sys.stderr,
    )
    return 0


def _reconstruct(args, st: _Stage):
    records, report = _load_records(args, st)
    try:
        rec = reconstruct(records, args.title_delta, args.monotonic, args.keep_orphans)
    except ReconstructionError as exc:
        raise DataError(str(exc)) from exc
    return rec, report


def cmd_reconstruct(args) -> int:
    with _stage("reconstruct", Path(args.out_dir), _config_of(args)) as st:
        rec, _ = _reconstruct(args, st)
        st.write("threads.jsonl", dump_threads(rec.threads))
        st.write("reconstruction.json", (json.dumps(rec.summary(), indent=2) + "\n").encode())
    print(f"reconstructed {len(rec.threads):,} threads", file=sys.stderr)
    return 0


def _load_thread_file(path: str, st: _Stage, keep_orphans: bool):
    data = _read_input(path)
    if path != "-":
        st.manifest.add_input(path)
    try:
        threads = load_threads(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid thread file {path}: {exc}") from exc
    return threads if keep_orphans else [t for t in threads if not t.orphan]


def _policy_rows(threads, policies, limits) -> list[dict]:
    """Totals of alternative memory policies replayed on the inferred turns."""
    turns_per_thread = [infer_turns(t, limits.template_tokens) for t in threads]
    rows = []
    for policy in policies:
        total = 0
        for turns in turns_per_thread:
            prompts, overhead = accumulate(turns, limits, policy)
            total += sum(prompts) + overhead
        rows.append({"policy": policy.describe(), **policy_to_dict(policy), "total_tokens": total})
    return rows


def cmd_simulate(args) -> int:
    with _stage("simulate", Path(args.out_dir), _config_of(args)) as st:
        threads = _load_thread_file(args.threads, st, args.keep_orphans)
        results = sweep(threads, args.thresholds, args.rule, args.jobs)
        st.write("results.json", results_to_json(results))
        st.write("results.csv", results_to_csv(results))
    sys.stdout.write(results_to_csv(results).decode())
    return 0


def _impact_config(args):
    try:
        return load_pricing(args.pricing, args.price_model), load_energy_models(args.energy)
    except ConfigError as exc:
        raise DataError(str(exc)) from exc


def _impact(results, args) -> dict:
    pricing, energy = _impact_config(args)
    estimates = [estimate_impact(r.tokens_saved, pricing, energy) for r in results]
    return impact_table(results, estimates)


def cmd_impact(args) -> int:
    with _stage("impact", Path(args.out_dir), _config_of(args)) as st:
        if args.tokens_saved is not None:
            pricing, energy = _impact_config(args)
            table = estimate_impact(args.tokens_saved, pricing, energy).to_dict()
        else:
            data = _read_input(args.results)
            if args.results != "-":
                st.manifest.add_input(args.results)
            try:
                results = results_from_json(data)
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"invalid results file: {exc}") from exc
            table = _impact(results, args)
        payload = (json.dumps(table, indent=2) + "\n").encode()
        st.write("impact.json", payload)
    sys.stdout.write(payload.decode())
    return 0


def _write_report(st: _Stage, threads, results, bins, reconstruction=None, impact=None):
    st.write("token_distribution.csv", token_distribution(threads).to_csv())
    st.write("pause_histogram.csv", pause_histogram(threads, bins).to_csv())
    summary = summary_markdown(
        results,
        n_threads=len(threads),
        n_messages=sum(len(t.messages) for t in threads),
        reconstruction=reconstruction,
        impact=impact,
    )
    st.write("summary.md", summary)
    return summary


def cmd_report(args) -> int:
    with _stage("report", Path(args.out_dir), _config_of(args)) as st:
        threads = _load_thread_file(args.threads, st, args.keep_orphans)
        results = results_from_json(_read_input(args.results))
        st.manifest.add_input(args.results)
        impact = None
        if args.impact:
            impact = json.loads(_read_input(args.impact))
            st.manifest.add_input(args.impact)
        summary = _write_report(st, threads, results, args.bins_per_decade, impact=impact)
    sys.stdout.write(summary.decode())
    return 0


def cmd_all(args) -> int:
    out = Path(args.out_dir)
    config = _config_of(args)
    with _stage("all", out, config) as st:
        records, report = _load_records(args, st)
        st.write("records.csv", write_log(records, "csv"))
        st.write("validation.json", (json.dumps(report.to_dict(), indent=2) + "\n").encode())
        try:
            rec = reconstruct(records, args.title_delta, args.monotonic, args.keep_orphans)
        except ReconstructionError as exc:
            raise DataError(str(exc)) from exc
        st.write("threads.jsonl", dump_threads(rec.threads))
        st.write("reconstruction.json", (json.dumps(rec.summary(), indent=2) + "\n").encode())
        threads = rec.threads if args.keep_orphans else [t for t in rec.threads if not t.orphan]
        results = sweep(threads, args.thresholds, args.rule, args.jobs)
        st.write("results.json", results_to_json(results))
        st.write("results.csv", results_to_csv(results))
        impact = _impact(results, args)
        if args.policy:
            limits = _limits(args)
            impact["policies"] = _policy_rows(threads, args.policy, limits)
        st.write("impact.json", (json.dumps(impact, indent=2) + "\n").encode())
        summary = _write_report(
            st, threads, results, args.bins_per_decade, reconstruction=rec.summary(), impact=impact
        )
    sys.stdout.write(summary.decode())
    return 0


def _limits(args):
    return ModelLimits(args.template_tokens, args.token_limit or None)


# parser ----------------------------------------------------------------------


def _add_input_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="token log file, or - for stdin")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument(
        "--column-map",
        metavar="FIELD=COLUMN,...",
        help="map datetime_UTC/user_id/prompt_tokens/completion_tokens to foreign column names",
    )


def _add_reconstruct_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--title-delta", type=int, metavar="N", help="title-request offset (inferred if omitted)")
    p.add_argument("--monotonic", choices=MONOTONIC_MODES, default="nondecreasing")
    p.add_argument("--keep-orphans", action="store_true", help="keep records seen before a user's first thread start")


def _add_simulate_options(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--thresholds",
        type=parse_thresholds,
        default=list(DEFAULT_THRESHOLDS),
        help="comma-separated pause thresholds (seconds, or with s/m/h/d suffix; inf for no reset)",
    )
    p.add_argument("--rule", choices=RESET_RULES, default="previous-prompt")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the sweep")


def _add_impact_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pricing", help="pricing table JSON (bundled table if omitted)")
    p.add_argument("--price-model", help="entry of the pricing table to use")
    p.add_argument("--energy", help="energy model JSON (bundled low/high presets if omitted)")


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memreset",
        description="Reconstruct chat threads from token logs and simulate pause-triggered memory resets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", metavar="{" + ",".join(STAGES) + "}")
    sub.required = True

    p = sub.add_parser("generate", help="write a synthetic token log with ground truth")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-like")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-threads", type=_nonneg_int)
    p.add_argument("--n-users", type=_nonneg_int)
    p.add_argument("--irregular-rate", type=float)
    p.add_argument("--collision-rate", type=float)
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--out", default="logs.csv")
    p.add_argument("--truth", help="ground-truth JSONL written next to --out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="validate and sort a token log")
    _add_input_options(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("reconstruct", help="rebuild conversation threads")
    _add_input_options(p)
    _add_reconstruct_options(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simulate", help="sweep reset thresholds over a thread file")
    p.add_argument("threads", help="threads.jsonl from reconstruct")
    _add_simulate_options(p)
    p.add_argument("--keep-orphans", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("impact", help="convert saved tokens to cost and CO2e")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--tokens-saved", type=_nonneg_int, metavar="N")
    src.add_argument("--results", help="results.json from simulate, or - for stdin")
    _add_impact_options(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_impact)

    p = sub.add_parser("report", help="distribution tables and markdown summary")
    p.add_argument("--threads", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--impact")
    p.add_argument("--bins-per-decade", type=int, default=1)
    p.add_argument("--keep-orphans", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", help="ingest, reconstruct, simulate, impact and report in one go")
    _add_input_options(p)
    _add_reconstruct_options(p)
    _add_simulate_options(p)
    _add_impact_options(p)
    p.add_argument("--bins-per-decade", type=int, default=1)
    p.add_argument(
        "--policy",
        type=parse_policy,
        action="append",
        help="also total an alternative memory policy, e.g. window:k=5 (repeatable)",
    )
    p.add_argument("--template-tokens", type=_nonneg_int, default=0)
    p.add_argument("--token-limit", type=_nonneg_int, default=8192, help="0 disables clamping")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_all)

    _apply_config_defaults(sub)
    return parser


def _apply_config_defaults(sub) -> None:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return
    try:
        config = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise SystemExit(f"memreset: cannot read {CONFIG_ENV}={path}: {exc}")
    shared = {k.replace("-", "_"): v for k, v in config.items() if not isinstance(v, dict)}
    for name, p in sub.choices.items():
        known = {a.dest for a in p._actions}
        values = {k: v for k, v in shared.items() if k in known}
        values.update(
            {k.replace("-", "_"): v for k, v in config.get(name, {}).items() if k.replace("-", "_") in known}
        )
        if "thresholds" in values and isinstance(values["thresholds"], str):
            values["thresholds"] = parse_thresholds(values["thresholds"])
        p.set_defaults(**values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, IngestError, ConfigError, ValueError) as exc:
        print(f"memreset {args.stage}: error: {exc}", file=sys.stderr)
        return 1


run_pipeline = main


if __name__ == "__main__":
    sys.exit(main())
