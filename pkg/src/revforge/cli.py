"""``revforge`` command line entry point.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import difflib
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .decode import DecodeParams, iterative_decode, tune_params
from .errors import ConfigError, DataError, DumpStreamError, RevforgeError
from .forge import ExtractConfig, ExtractStats, ForgeConfig, NoiseSpec, forge_pairs
from .ingest import IngestConfig, IngestStats, SnapshotPair, ingest
from .metrics import GoldAnnotation, gleu, gold_from_target, load_m2, m2_score
from .scorers import load_scorer
from .tokenize import apply_fixups, detokenize, load_fixups, load_vocab, tokenize

log = logging.getLogger("revforge")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# flag name -> built-in default; anything here may also come from --config
DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "max_page_bytes": 64 << 20,
    "downsample_base": 1.5,
    "max_len": 256,
    "identity_keep_prob": 0.01,
    "min_anchor_tokens": 2,
    "context_tokens": 8,
    "noise_rate": 0.003,
    "noise_after_extract": False,
    "beam": 4,
    "threshold": None,
    "max_iter": 4,
    "model": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    all_options: set = set()

    def error(self, message):
        hint = ""
        if "unrecognized arguments" in message or "invalid choice" in message:
            words = [w.strip("',") for w in message.split(":", 1)[-1].split()]
            pool = sorted(_Parser.all_options | set(_SUBCOMMANDS))
            for w in words:
                close = difflib.get_close_matches(w, pool, n=1)
                if close:
                    hint = f" (did you mean {close[0]}?)"
                    break
        raise UsageError(f"{self.prog}: error: {message}{hint}")


_SUBCOMMANDS = ("ingest", "forge", "decode", "tune", "score-m2", "score-gleu", "fixup")


def _add(parser, *names, **kwargs):
    _Parser.all_options.update(n for n in names if n.startswith("--"))
    return parser.add_argument(*names, **kwargs)


def _csv(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="revforge",
        description="Forge error-correction bitext from revision dumps, decode "
        "iteratively with a cost-ratio rewrite rule, and score with F0.5 and GLEU.",
    )
    _add(parser, "--version", action="version", version=f"revforge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(p):
        _add(p, "--config", help="flat JSON config; flags override its values")
        _add(p, "--seed", type=int, help="PRNG seed (fallback: $REVFORGE_SEED, then 0)")
        _add(p, "-o", "--output", help="output file (default: stdout)")

    p = sub.add_parser("ingest", help="revision dump XML -> snapshot pairs (JSON lines)")
    _add(p, "input", nargs="?", default="-", help="uncompressed XML dump (default: stdin)")
    common(p)
    _add(p, "--max-page-bytes", type=int, help="drop pages whose XML exceeds this many bytes")
    _add(p, "--downsample-base", type=float, help="keep floor(log_base X) pairs of X snapshots")

    p = sub.add_parser("forge", help="snapshot pairs -> example pairs")
    _add(p, "input", nargs="?", default="-", help="snapshot-pair JSON lines (default: stdin)")
    common(p)
    _add(p, "--noise-rate", type=float, help="spelling-noise rate per source character")
    _add(p, "--identity-keep-prob", type=float, help="keep probability for identical pairs")
    _add(p, "--max-len", type=int, help="maximum tokens per side")
    _add(p, "--min-anchor-tokens", type=int, help="shortest equal run used as an alignment anchor")
    _add(p, "--context-tokens", type=int, help="match context kept on each side of an edit")
    _add(p, "--noise-after-extract", action="store_true", default=None,
         help="noise extracted examples instead of whole snapshots")
    _add(p, "--vocab", help="word-piece vocab file (default: whitespace tokens)")
    _add(p, "--format", choices=("jsonl", "tsv"), default="jsonl")
    _add(p, "--workers", type=int, help="worker processes")

    p = sub.add_parser("decode", help="iteratively correct sentences")
    _add(p, "input", nargs="?", default="-", help="plain text or JSON lines with 'src' (default: stdin)")
    common(p)
    _add(p, "--model", help="toy:<rules> or ensemble:<manifest>")
    _add(p, "--beam", type=int, help="beam width")
    _add(p, "--threshold", type=float, help="rewrite only if cost < threshold * identity cost")
    _add(p, "--max-iter", type=int, help="maximum decoding passes")
    _add(p, "--single-shot", action="store_true", help="one pass (same as --max-iter 1)")
    _add(p, "--no-early-stop", action="store_true", help="run every pass even at a fixed point")
    _add(p, "--pretokenized", action="store_true", help="split plain-text input on whitespace only")
    _add(p, "--emit-trace", metavar="PATH", help="write per-iteration trace JSON lines")
    _add(p, "--gold", help="M2 gold for per-iteration F0.5 in the trace")
    _add(p, "--fixups", nargs="?", const="default", help="apply regex fixups to output text")
    _add(p, "--format", choices=("jsonl", "text"), default="jsonl")
    _add(p, "--workers", type=int, help="worker processes")

    p = sub.add_parser("tune", help="grid-search threshold and iterations on a dev set")
    common(p)
    _add(p, "--dev", required=True, help="dev set in M2 format")
    _add(p, "--model", help="toy:<rules> or ensemble:<manifest>")
    _add(p, "--beam", type=int, help="beam width")
    _add(p, "--thresholds", type=_csv(float), required=True, help="comma-separated thresholds")
    _add(p, "--max-iters", type=_csv(int), required=True, help="comma-separated iteration counts")

    p = sub.add_parser("score-m2", help="edit-level precision, recall and F0.5")
    common(p)
    _add(p, "--gold", help="M2 gold file; without it gold comes from 'tgt' fields of the input")
    _add(p, "--hyp", default="-", help="hypotheses: tokenized text lines or decode JSON lines")
    _add(p, "--report", help="write the JSON score report here")

    p = sub.add_parser("score-gleu", help="GLEU against one or more references")
    common(p)
    _add(p, "--src", required=True, help="tokenized source lines")
    _add(p, "--hyp", required=True, help="tokenized hypothesis lines")
    _add(p, "--ref", required=True, action="append", help="tokenized reference lines (repeatable)")
    _add(p, "--n-max", type=int, default=4, help="largest n-gram order")
    _add(p, "--iterations", type=int, default=500, help="reference sampling rounds")

    p = sub.add_parser("fixup", help="apply regex fixup rules line by line")
    _add(p, "input", nargs="?", default="-", help="text lines (default: stdin)")
    common(p)
    _add(p, "--rules", help="rule file (default: shipped CoNLL stand-in set)")
    return parser


# -- config ------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def get(self, key):
        return self.values.get(key, DEFAULTS.get(key))

    def validate(self) -> None:
        problems = []
        v = self.values

        def check(key, ok, msg):
            if key in v and v[key] is not None and not ok(v[key]):
                problems.append(f"{key}: {msg} (got {v[key]!r})")

        check("seed", lambda x: isinstance(x, int) and 0 <= x < 2**64, "must be a 64-bit unsigned integer")
        check("workers", lambda x: isinstance(x, int) and x >= 1, "must be >= 1")
        check("max_page_bytes", lambda x: isinstance(x, int) and x > 0, "must be > 0")
        check("downsample_base", lambda x: x > 1, "must be > 1")
        check("max_len", lambda x: isinstance(x, int) and x >= 1, "must be >= 1")
        check("identity_keep_prob", lambda x: 0 <= x <= 1, "must lie in [0, 1]")
        check("noise_rate", lambda x: 0 <= x <= 1, "must lie in [0, 1]")
        check("min_anchor_tokens", lambda x: isinstance(x, int) and x >= 1, "must be >= 1")
        check("context_tokens", lambda x: isinstance(x, int) and x >= 0, "must be >= 0")
        check("beam", lambda x: isinstance(x, int) and x >= 1, "must be >= 1")
        check("threshold", lambda x: x > 0, "must be > 0")
        check("max_iter", lambda x: isinstance(x, int) and x >= 1, "must be >= 1")
        for key in ("input", "gold", "dev", "vocab", "rules", "src"):
            path = v.get(key)
            if isinstance(path, str) and path != "-" and not Path(path).exists():
                problems.append(f"{key}: no such file {path!r}")
        for path in v.get("ref") or []:
            if not Path(path).exists():
                problems.append(f"ref: no such file {path!r}")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))

    def digest(self) -> str:
        blob = json.dumps({"command": self.command, **self.values}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config must be a flat JSON object")
        values.update(doc)
    for key, val in vars(args).items():
        if key in ("config", "command", "func") or val is None:
            continue
        values[key] = val
    if "seed" not in values:
        env = os.environ.get("REVFORGE_SEED")
        if env is not None:
            try:
                values["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"REVFORGE_SEED must be an integer, got {env!r}") from None
    values.setdefault("seed", DEFAULTS["seed"])
    cfg = RunConfig(args.command, values)
    cfg.validate()
    return cfg


# -- io helpers --------------------------------------------------------------

def _open_in_text(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdin)
    return open(path, encoding="utf-8")


def _open_in_bytes(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdin.buffer)
    return open(path, "rb")


class _Out:
    def __init__(self, path):
        self.path = path
        self.fh = None

    def __enter__(self):
        self.fh = sys.stdout if self.path in (None, "-") else open(self.path, "w", encoding="utf-8")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _jsonl(fh, record):
    fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _read_records(fh):
    """Yield dicts from JSON lines or ``{"src": line}`` for plain text."""
    for lineno, line in enumerate(fh, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            try:
                yield json.loads(line)
                continue
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON: {exc}") from None
        yield {"src": line}


# -- subcommands -------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> int:
    icfg = IngestConfig(cfg.get("max_page_bytes"), cfg.get("downsample_base"), cfg.get("seed"))
    stats = IngestStats()
    code = EXIT_OK
    with _open_in_bytes(cfg.get("input")) as src, _Out(cfg.get("output")) as out:
        try:
            for pair in ingest(src, icfg, stats):
                _jsonl(out, pair.to_dict())
        except DumpStreamError as exc:
            log.error("%s", exc)
            code = EXIT_DATA
    print(json.dumps({"summary": stats.to_dict()}), file=sys.stderr)
    return code


def _snapshot_pairs(fh):
    for lineno, rec in enumerate(_read_records(fh), 1):
        try:
            yield SnapshotPair(rec["source_raw"], rec["target_raw"], int(rec["page_id"]), int(rec["pair_index"]))
        except (KeyError, TypeError, ValueError):
            raise DataError(f"record {lineno} is not a snapshot pair") from None


def cmd_forge(cfg: RunConfig) -> int:
    seed = cfg.get("seed")
    vocab = load_vocab(cfg.get("vocab")) if cfg.get("vocab") else None
    fcfg = ForgeConfig(
        extract=ExtractConfig(
            max_len=cfg.get("max_len"),
            identity_keep_prob=cfg.get("identity_keep_prob"),
            min_anchor_tokens=cfg.get("min_anchor_tokens"),
            context_tokens=cfg.get("context_tokens"),
            seed=seed,
        ),
        noise=NoiseSpec(rate=cfg.get("noise_rate"), seed=seed),
        noise_first=not cfg.get("noise_after_extract"),
        vocab=vocab,
    )
    marker = vocab.continuation_marker if vocab else None
    stats = ExtractStats()
    fmt = cfg.get("format") or "jsonl"
    with _open_in_text(cfg.get("input")) as src, _Out(cfg.get("output")) as out:
        for ex in forge_pairs(_snapshot_pairs(src), fcfg, cfg.get("workers"), stats):
            if fmt == "tsv":
                s = detokenize(ex.source_tokens, marker)
                t = detokenize(ex.target_tokens, marker)
                out.write(_tsv_escape(s) + "\t" + _tsv_escape(t) + "\n")
            else:
                _jsonl(out, ex.to_dict(marker))
    print(json.dumps({"summary": stats.to_dict()}), file=sys.stderr)
    return EXIT_OK


def _tsv_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _decode_params(cfg: RunConfig) -> DecodeParams:
    if cfg.get("threshold") is None:
        raise ConfigError("--threshold is required (tune it on a dev set with `revforge tune`)")
    max_iter = 1 if cfg.get("single_shot") else cfg.get("max_iter")
    return DecodeParams(
        threshold=cfg.get("threshold"),
        beam=cfg.get("beam"),
        max_iter=max_iter,
        early_stop_on_fixed_point=not cfg.get("no_early_stop"),
    )


def _model(cfg: RunConfig):
    spec = cfg.get("model")
    if not spec:
        raise ConfigError("--model is required (toy:<rules> or ensemble:<manifest>)")
    return load_scorer(spec)


_WORKER_STATE: dict = {}


def _init_worker(scorer, params):
    _WORKER_STATE["scorer"] = scorer
    _WORKER_STATE["params"] = params


def _decode_worker(tokens):
    return iterative_decode(tokens, _WORKER_STATE["scorer"], _WORKER_STATE["params"])


def _decode_all(sentences, scorer, params, workers):
    if workers <= 1:
        return [iterative_decode(s, scorer, params) for s in sentences]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(scorer, params)) as pool:
        return list(pool.map(_decode_worker, sentences, chunksize=8))


def _source_tokens(rec, pretokenized):
    if "src_tokens" in rec:
        return tuple(rec["src_tokens"])
    if "src" not in rec:
        raise DataError("decode input records need a 'src' field")
    return tuple(rec["src"].split()) if pretokenized else tuple(tokenize(rec["src"]))


def cmd_decode(cfg: RunConfig) -> int:
    params = _decode_params(cfg)
    scorer = _model(cfg)
    pretok = bool(cfg.get("pretokenized"))
    fixups = None
    if cfg.get("fixups"):
        fixups = load_fixups(None if cfg.get("fixups") == "default" else cfg.get("fixups"))
    with _open_in_text(cfg.get("input")) as fh:
        records = list(_read_records(fh))
    sources = [_source_tokens(r, pretok) for r in records]
    traces = _decode_all(sources, scorer, params, cfg.get("workers"))
    fmt = cfg.get("format") or "jsonl"
    with _Out(cfg.get("output")) as out:
        for rec, src, tr in zip(records, sources, traces):
            text = " ".join(tr.final) if pretok else detokenize(tr.final)
            if fixups is not None:
                text = apply_fixups(text, fixups)
            if fmt == "text":
                out.write(text + "\n")
                continue
            row = {
                "src": rec.get("src", " ".join(src)),
                "hyp": text,
                "src_tokens": list(src),
                "hyp_tokens": list(tr.final),
                "iterations": len(tr.iterations),
                "cycled": tr.cycled,
            }
            if "tgt" in rec:
                row["tgt"] = rec["tgt"]
            _jsonl(out, row)
    if cfg.get("emit_trace"):
        _write_trace(cfg, records, sources, traces, params, pretok)
    return EXIT_OK


def _gold_for(records, sources, cfg, pretok) -> list[GoldAnnotation] | None:
    if cfg.get("gold"):
        gold = load_m2(cfg.get("gold"))
        if len(gold) != len(sources):
            raise DataError(f"gold has {len(gold)} cases but input has {len(sources)} sentences")
        return gold
    if records and all("tgt" in r for r in records):
        out = []
        for rec, src in zip(records, sources):
            tgt = rec["tgt"].split() if pretok else tokenize(rec["tgt"])
            out.append(gold_from_target(src, tgt))
        return out
    return None


def _write_trace(cfg, records, sources, traces, params, pretok):
    gold = _gold_for(records, sources, cfg, pretok)
    with open(cfg.get("emit_trace"), "w", encoding="utf-8") as fh:
        for idx, tr in enumerate(traces):
            for k, it in enumerate(tr.iterations, 1):
                _jsonl(fh, {"type": "iteration", "sentence": idx, "iteration": k, **it.to_dict()})
        if gold is None:
            return
        for k in range(1, params.max_iter + 1):
            cases = [(src, tr.output_after(k), g) for src, tr, g in zip(sources, traces, gold)]
            rep = m2_score(cases)
            _jsonl(fh, {"type": "corpus", "iteration": k, "single_shot": k == 1, **rep.to_dict()})


def cmd_tune(cfg: RunConfig) -> int:
    scorer = _model(cfg)
    dev = [(g.source_tokens, g) for g in load_m2(cfg.get("dev"))]
    result = tune_params(dev, scorer, cfg.get("thresholds"), cfg.get("max_iters"), cfg.get("beam"))
    cols = ("threshold", "max_iter", "precision", "recall", "f_half", "tp", "fp", "fn")
    with _Out(cfg.get("output")) as out:
        out.write("\t".join(cols) + "\n")
        for row in result.table:
            out.write("\t".join(_fmt(row[c]) for c in cols) + "\n")
        best = result.params
        out.write(f"# best threshold={best.threshold} max_iter={best.max_iter}\n")
    return EXIT_OK


def _fmt(x):
    return f"{x:.4f}" if isinstance(x, float) else str(x)


def _num(x: float) -> str:
    return repr(round(x, 4))


def _hyp_records(path):
    with _open_in_text(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.lstrip().startswith("{"):
                yield json.loads(line)
            else:
                yield {"hyp_tokens": line.split()}


def cmd_score_m2(cfg: RunConfig) -> int:
    hyps = list(_hyp_records(cfg.get("hyp")))
    if cfg.get("gold"):
        gold = load_m2(cfg.get("gold"))
        if len(gold) != len(hyps):
            raise DataError(f"gold has {len(gold)} cases but there are {len(hyps)} hypotheses")
        cases = []
        for g, rec in zip(gold, hyps):
            toks = rec.get("hyp_tokens") or tokenize(rec.get("hyp", ""))
            cases.append((g.source_tokens, tuple(toks), g))
    else:
        cases = []
        for idx, rec in enumerate(hyps):
            if "tgt" not in rec:
                raise DataError(f"record {idx}: no --gold given and no 'tgt' field to derive gold from")
            src = tuple(rec.get("src_tokens") or tokenize(rec["src"]))
            hyp = tuple(rec.get("hyp_tokens") or tokenize(rec["hyp"]))
            cases.append((src, hyp, gold_from_target(src, tokenize(rec["tgt"]))))
    report = m2_score(cases)
    with _Out(cfg.get("output")) as out:
        out.write(f"P={_num(report.precision)} R={_num(report.recall)} F0.5={_num(report.f_half)}\n")
    if cfg.get("report"):
        Path(cfg.get("report")).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def cmd_score_gleu(cfg: RunConfig) -> int:
    src = _lines(cfg.get("src"))
    hyp = _lines(cfg.get("hyp"))
    refs = [_lines(p) for p in cfg.get("ref")]
    if any(len(r) != len(src) for r in refs) or len(hyp) != len(src):
        raise DataError("source, hypothesis and reference files must have the same number of lines")
    cases = [(s, h, [r[i] for r in refs]) for i, (s, h) in enumerate(zip(src, hyp))]
    score = gleu(cases, cfg.get("n_max"), cfg.get("iterations"), cfg.get("seed"))
    with _Out(cfg.get("output")) as out:
        out.write(f"GLEU={_num(score)}\n")
    return EXIT_OK


def cmd_fixup(cfg: RunConfig) -> int:
    rules = load_fixups(cfg.get("rules"))
    with _open_in_text(cfg.get("input")) as fh, _Out(cfg.get("output")) as out:
        for line in fh:
            out.write(apply_fixups(line.rstrip("\n"), rules) + "\n")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "forge": cmd_forge,
    "decode": cmd_decode,
    "tune": cmd_tune,
    "score-m2": cmd_score_m2,
    "score-gleu": cmd_score_gleu,
    "fixup": cmd_fixup,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="revforge: %(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        print(f"# revforge {__version__} command={cfg.command} seed={cfg.get('seed')} config={cfg.digest()}",
              file=sys.stderr)
        return COMMANDS[args.command](cfg)
    except (RevforgeError, OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"revforge: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.exception("internal error")
        print(f"revforge: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
