"""Command-line interface: translate, evaluate, and sweep.

Experiments are described by a JSON config document; every field can be
overridden by a command-line flag, and the command line wins. Translation
runs write the output text plus a manifest recording the resolved config,
its hash, the per-segment contrastive source assignments, and per-segment
scores, so any run can be audited and reproduced byte-for-byte.

Exit codes: 0 success, 2 config error, 3 scorer/protocol error, 4 data
error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Sequence

from .contrast import ContrastConfig, assign_contrastive_sources, build_objective
from .core import (ConditioningContext, ConfigError, DataError, Document,
                   EngineError, Rng, ScorerError)
from .decoder import DecodeParams, beam_search
from .metrics import (ChrfParams, EvalRecord, NaiveBayesLanguageIdentifier,
                      TngParams, chrf2, corpus_bleu, hallucination_rate,
                      off_target_counts, tng_flag)
from .protocol import ProtocolError, connect
from .scoring import Scorer, TableScorer
from .synthetic import lid_training_samples, toy_world


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved translate/sweep configuration (config file + flag overrides)."""

    scorer: str = "builtin:synthetic"
    src_lang: str = "aa"
    tgt_lang: str = "bb"
    lambda_src: float = 0.7
    lambda_lang: float = 0.1
    num_src_contrastive: int = 1
    beam_size: int = 5
    max_len: int = 256
    seed: int = 1
    mode: str = "mt"
    english_code: str = "en"
    length_normalization: bool = False
    workers: int = 1
    input: str | None = None
    output: str | None = None
    reference: str | None = None
    manifest: str | None = None

    def contrast_config(self) -> ContrastConfig:
        return ContrastConfig(lambda_src=self.lambda_src,
                              lambda_lang=self.lambda_lang,
                              num_src_contrastive=self.num_src_contrastive,
                              english_code=self.english_code)

    def decode_params(self) -> DecodeParams:
        return DecodeParams(beam_size=self.beam_size, max_len=self.max_len,
                            length_normalization=self.length_normalization)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        doc = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    """Config file values overlaid with non-None CLI overrides."""
    values: dict = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path!r} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path!r} must be a JSON object")
        unknown = sorted(set(doc) - _CONFIG_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(doc)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}")
    config.contrast_config()
    config.decode_params()
    if config.workers < 1:
        raise ConfigError("workers must be >= 1")
    return config


# -- scorer construction -----------------------------------------------------


def _parse_synthetic_params(spec: str) -> dict:
    out = {"h": 0.3, "c": 0.0, "english_mix_weak": 0.5, "seed": 2024}
    aliases = {"mix": "english_mix_weak", "english_mix": "english_mix_weak",
               "world_seed": "seed"}
    if not spec:
        return out
    for part in spec.split(","):
        key, sep, value = part.partition("=")
        key = aliases.get(key.strip(), key.strip())
        if not sep or key not in out:
            raise ConfigError(f"bad synthetic scorer parameter {part!r}")
        try:
            out[key] = int(value) if key == "seed" else float(value)
        except ValueError:
            raise ConfigError(f"bad synthetic scorer parameter {part!r}")
    return out


def make_scorer(spec: str) -> Scorer:
    """Build a scorer from its spec string.

    ``builtin:synthetic[:k=v,...]``, ``builtin:table:<path>``,
    ``proto:stdio:<command>``, or ``proto:tcp:<host>:<port>``.
    """
    head, _, rest = spec.partition(":")
    if head == "builtin":
        kind, _, params = rest.partition(":")
        if kind == "synthetic":
            return toy_world(**_parse_synthetic_params(params))
        if kind == "table" and params:
            return TableScorer.from_json(params)
        raise ConfigError(f"bad builtin scorer spec {spec!r}")
    if head == "proto" and rest:
        return connect(rest)
    raise ConfigError(f"bad scorer spec {spec!r}")


class _ScorerPool:
    """Scorer per worker thread: builtins are shared (immutable), protocol
    sessions are opened one per thread (sessions are single-streamed)."""

    def __init__(self, spec: str):
        self._spec = spec
        self._remote = spec.startswith("proto:")
        self._shared = None if self._remote else make_scorer(spec)
        self._local = threading.local()
        self._opened: list[Scorer] = []
        self._lock = threading.Lock()

    def get(self) -> Scorer:
        if self._shared is not None:
            return self._shared
        scorer = getattr(self._local, "scorer", None)
        if scorer is None:
            scorer = make_scorer(self._spec)
            self._local.scorer = scorer
            with self._lock:
                self._opened.append(scorer)
        return scorer

    def close(self) -> None:
        for scorer in self._opened:
            try:
                scorer.close()
            except EngineError:
                pass


# -- translate ---------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    outputs: tuple[str, ...]
    scores: tuple[float, ...]
    truncated: tuple[bool, ...]
    assignments: tuple[tuple[int, ...], ...]


def _read_lines(path: str, what: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except OSError as exc:
        raise DataError(f"cannot read {what} file {path!r}: {exc}")


def _map_indexed(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    out = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, i, item): i for i, item in enumerate(items)}
        for future in as_completed(futures):
            out[futures[future]] = future.result()
    return out


def run_translate(config: ExperimentConfig, segments: Sequence[str]) -> RunResult:
    """Decode every segment under the configured contrastive objective."""
    if not segments:
        return RunResult((), (), (), ())
    doc = Document(tuple(segments), config.src_lang)
    contrast = config.contrast_config()
    params = config.decode_params()
    if config.lambda_src > 0.0 and segments:
        rng = Rng(config.seed)
        assignments = [tuple(a) for a in assign_contrastive_sources(
            doc, config.num_src_contrastive, rng)]
    else:
        assignments = [()] * len(segments)

    pool = _ScorerPool(config.scorer)

    def decode_one(i: int, segment: str) -> tuple[str, float, bool]:
        scorer = pool.get()
        ctx = ConditioningContext(source_text=segment,
                                  source_lang=config.src_lang,
                                  target_lang=config.tgt_lang,
                                  mode=config.mode)
        objective = build_objective(
            ctx, [segments[j] for j in assignments[i]], contrast)
        best = beam_search(scorer, objective, params)[0]
        return scorer.detokenize(best.tokens), best.score, best.truncated

    try:
        rows = _map_indexed(decode_one, list(segments), config.workers)
    finally:
        pool.close()
    outputs, scores, truncated = zip(*rows) if rows else ((), (), ())
    return RunResult(tuple(outputs), tuple(scores), tuple(truncated),
                     tuple(assignments))


def build_manifest(config: ExperimentConfig, result: RunResult) -> dict:
    return {
        "config": config.as_dict(),
        "config_hash": config.digest(),
        "seed": config.seed,
        "segments": len(result.outputs),
        "contrastive_assignments": [list(a) for a in result.assignments],
        "scores": [round(s, 10) for s in result.scores],
        "truncated": list(result.truncated),
    }


def cmd_translate(args: argparse.Namespace) -> int:
    overrides = {k: v for k, v in _config_overrides(args).items()
                 if v is not None}
    if args.from_manifest:
        with open(args.from_manifest, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        config = load_config(None, {**manifest["config"], **overrides})
    else:
        config = load_config(args.config, overrides)
    if not config.input:
        raise ConfigError("translate needs an input file (--input)")
    segments = _read_lines(config.input, "input")
    result = run_translate(config, segments)
    body = "".join(line + "\n" for line in result.outputs)
    if config.output:
        with open(config.output, "w", encoding="utf-8") as f:
            f.write(body)
    else:
        sys.stdout.write(body)
    if config.manifest:
        with open(config.manifest, "w", encoding="utf-8") as f:
            json.dump(build_manifest(config, result), f, indent=2,
                      sort_keys=True)
            f.write("\n")
    return 0


# -- evaluate ----------------------------------------------------------------


def _aligned_lines(paths: dict[str, str]) -> dict[str, list[str]]:
    texts = {name: _read_lines(path, name) for name, path in paths.items()}
    counts = {name: len(lines) for name, lines in texts.items()}
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{paths[n]} has {c} lines" for n, c in counts.items())
        raise DataError(f"line count mismatch: {detail}")
    if next(iter(counts.values())) == 0:
        detail = ", ".join(sorted(paths.values()))
        raise DataError(f"empty input: {detail}")
    return texts


def _builtin_lid(samples_path: str | None) -> NaiveBayesLanguageIdentifier:
    if samples_path:
        with open(samples_path, "r", encoding="utf-8") as f:
            samples = json.load(f)
        if (not isinstance(samples, dict) or
                not all(isinstance(v, str) for v in samples.values())):
            raise ConfigError(
                f"LID samples {samples_path!r} must map language code to text")
        return NaiveBayesLanguageIdentifier.train(samples)
    return NaiveBayesLanguageIdentifier.train(lid_training_samples(toy_world()))


def evaluate_records(records: Sequence[EvalRecord], *,
                     threshold: float = 10.0,
                     tng_params: TngParams = TngParams(),
                     with_bleu: bool = False,
                     with_tng: bool = True,
                     tgt_lang: str | None = None,
                     src_lang: str | None = None,
                     lid=None, english: str = "en") -> dict:
    """Metric battery over scored records; returns the report document."""
    chrf_params = ChrfParams()
    for r in records:
        r.chrf2 = chrf2(r.hypothesis, r.reference, chrf_params)
        if with_tng:
            r.tng_flag = tng_flag(r.source, r.hypothesis, tng_params)
    report = {
        "segments": len(records),
        "chrf2_mean": sum(r.chrf2 for r in records) / len(records),
        "halluc_rate": hallucination_rate(records, threshold),
        "halluc_threshold": threshold,
    }
    if with_tng:
        report["tng_rate"] = sum(1 for r in records if r.tng_flag) / len(records)
        report["tng_params"] = {"n": tng_params.n, "t": tng_params.t}
    if with_bleu:
        report["bleu"] = corpus_bleu(
            [(r.hypothesis.split(), r.reference.split()) for r in records])
    if tgt_lang and src_lang and lid is not None:
        for r in records:
            if r.predicted_lang is None:
                r.predicted_lang = lid.classify(r.hypothesis)[0]
        counts = off_target_counts(records, tgt_lang, src_lang, lid, english)
        report["off_target"] = counts.as_dict()
    return report


def cmd_evaluate(args: argparse.Namespace) -> int:
    paths = {"hypothesis": args.hyp, "reference": args.ref}
    if args.src:
        paths["source"] = args.src
    texts = _aligned_lines(paths)
    sources = texts.get("source", [""] * len(texts["hypothesis"]))
    records = [EvalRecord(source=s, hypothesis=h, reference=r)
               for s, h, r in zip(sources, texts["hypothesis"],
                                  texts["reference"])]
    lid = None
    if args.tgt_lang and args.src_lang:
        lid = _builtin_lid(args.lid_samples)
    report = evaluate_records(
        records, threshold=args.threshold,
        tng_params=TngParams(n=args.tng_n, t=args.tng_t),
        with_bleu=args.bleu, with_tng=bool(args.src),
        tgt_lang=args.tgt_lang, src_lang=args.src_lang, lid=lid,
        english=args.english_code)
    if args.per_segment:
        with open(args.per_segment, "w", encoding="utf-8") as f:
            for i, r in enumerate(records):
                row = {"segment": i, "chrf2": r.chrf2}
                if r.tng_flag is not None:
                    row["tng_flag"] = r.tng_flag
                if r.predicted_lang is not None:
                    row["predicted_lang"] = r.predicted_lang
                f.write(json.dumps(row, sort_keys=True) + "\n")
    body = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(body)
    else:
        sys.stdout.write(body)
    return 0


# -- sweep -------------------------------------------------------------------


def _parse_grid(raw: str) -> list[dict]:
    if raw.startswith("@"):
        with open(raw[1:], "r", encoding="utf-8") as f:
            doc = json.load(f)
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"grid is not valid JSON: {exc}")
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("grid must be a non-empty JSON object of lists")
    names = sorted(doc)
    for name in names:
        if name not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown grid parameter {name!r}")
        if not isinstance(doc[name], list) or not doc[name]:
            raise ConfigError(f"grid parameter {name!r} must be a non-empty list")
    return [dict(zip(names, combo))
            for combo in itertools.product(*(doc[n] for n in names))]


def run_sweep(config: ExperimentConfig, grid: list[dict],
              segments: list[str], references: list[str],
              sources_for_tng: list[str] | None = None,
              lid=None) -> list[dict]:
    rows = []
    for point in grid:
        run_config = load_config(None, {**config.as_dict(), **point})
        result = run_translate(run_config, segments)
        records = [EvalRecord(source=src, hypothesis=hyp, reference=ref)
                   for src, hyp, ref in zip(sources_for_tng or segments,
                                            result.outputs, references)]
        report = evaluate_records(
            records, tgt_lang=run_config.tgt_lang,
            src_lang=run_config.src_lang, lid=lid,
            english=run_config.english_code)
        row = dict(point)
        row["segments"] = report["segments"]
        row["chrf2_mean"] = report["chrf2_mean"]
        row["halluc_rate"] = report["halluc_rate"]
        row["tng_rate"] = report["tng_rate"]
        if "off_target" in report:
            for bucket, count in report["off_target"].items():
                row[f"off_target_{bucket}"] = count
        rows.append(row)
    return rows


def _write_rows(rows: list[dict], path: str | None) -> None:
    as_csv = bool(path) and path.endswith(".csv")
    if as_csv:
        columns: list[str] = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(rows)
        body = buffer.getvalue()
    else:
        body = json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(body)
    else:
        sys.stdout.write(body)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, _config_overrides(args))
    if not config.input or not config.reference:
        raise ConfigError("sweep needs input and reference files")
    grid = _parse_grid(args.grid)
    texts = _aligned_lines({"input": config.input,
                            "reference": config.reference})
    lid = None
    if not args.no_lid:
        lid = _builtin_lid(args.lid_samples)
    rows = run_sweep(config, grid, texts["input"], texts["reference"],
                     lid=lid)
    _write_rows(rows, args.output)
    return 0


# -- argument parsing ---------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--scorer", help="scorer spec (builtin:synthetic, "
                        "builtin:table:<path>, proto:stdio:<cmd>, "
                        "proto:tcp:<host>:<port>)")
    parser.add_argument("--src-lang", dest="src_lang")
    parser.add_argument("--tgt-lang", dest="tgt_lang")
    parser.add_argument("--lambda-src", dest="lambda_src", type=float)
    parser.add_argument("--lambda-lang", dest="lambda_lang", type=float)
    parser.add_argument("--num-contrastive-sources", dest="num_src_contrastive",
                        type=int)
    parser.add_argument("--beam-size", dest="beam_size", type=int)
    parser.add_argument("--max-len", dest="max_len", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=("mt", "llm"))
    parser.add_argument("--workers", type=int)
    parser.add_argument("--input")
    parser.add_argument("--output")
    parser.add_argument("--reference")


_OVERRIDE_KEYS = ("scorer", "src_lang", "tgt_lang", "lambda_src", "lambda_lang",
                  "num_src_contrastive", "beam_size", "max_len", "seed",
                  "mode", "workers", "input", "output", "reference",
                  "manifest")


def _config_overrides(args: argparse.Namespace) -> dict:
    return {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contrabeam",
        description="Contrastive beam-search decoding and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tr = sub.add_parser("translate", help="decode a file of segments")
    _add_config_flags(p_tr)
    p_tr.add_argument("--manifest", help="write the run manifest here")
    p_tr.add_argument("--from-manifest", dest="from_manifest",
                      help="rerun the config recorded in a manifest")
    p_tr.set_defaults(fn=cmd_translate)

    p_ev = sub.add_parser("evaluate", help="score hypotheses against references")
    p_ev.add_argument("--hyp", required=True)
    p_ev.add_argument("--ref", required=True)
    p_ev.add_argument("--src", help="source file (enables the TNG detector)")
    p_ev.add_argument("--bleu", action="store_true")
    p_ev.add_argument("--threshold", type=float, default=10.0,
                      help="chrF2 hallucination threshold")
    p_ev.add_argument("--tng-n", dest="tng_n", type=int, default=4)
    p_ev.add_argument("--tng-t", dest="tng_t", type=int, default=2)
    p_ev.add_argument("--src-lang", dest="src_lang")
    p_ev.add_argument("--tgt-lang", dest="tgt_lang")
    p_ev.add_argument("--english-code", dest="english_code", default="en")
    p_ev.add_argument("--lid-samples",
                      help="JSON {lang: sample text} to train the built-in LID")
    p_ev.add_argument("--per-segment", dest="per_segment",
                      help="write per-segment scores here as JSON lines")
    p_ev.add_argument("--output", help="write the JSON report here")
    p_ev.set_defaults(fn=cmd_evaluate)

    p_sw = sub.add_parser("sweep", help="grid of translate+evaluate runs")
    _add_config_flags(p_sw)
    p_sw.add_argument("--grid", required=True,
                      help='JSON object of lists, e.g. \'{"lambda_lang": [0, 0.1]}\''
                           " (or @path)")
    p_sw.add_argument("--lid-samples")
    p_sw.add_argument("--no-lid", action="store_true",
                      help="skip language identification columns")
    p_sw.set_defaults(fn=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ScorerError, ProtocolError) as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
