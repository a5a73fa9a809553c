"""Command-line entry point wiring every module into one tool.

Subcommands: vocab, train, punctuate, infer, eval, human-eval, sense-drift.
Exit codes: 0 success, 2 schema error, 3 IO error, 4 numeric failure.

Thread environment variables are set from --threads (or TAIYAN_THREADS)
before numpy is first imported, so the heavy modules are imported lazily
inside the handlers, never at module scope.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .errors import NumericError, SchemaError

_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_EVAL_FIELDS = (
    "text_error_rate",
    "seg_p",
    "seg_r",
    "seg_f1",
    "punct_p",
    "punct_r",
    "punct_f1",
    "detection_acc",
    "ident_f1",
    "bleu",
    "chrf",
)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _configure_threads(threads: Optional[int]) -> int:
    """Resolve the thread cap (flag > TAIYAN_THREADS > 1) and export it."""
    if threads is None:
        env = os.environ.get("TAIYAN_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise SchemaError(f"TAIYAN_THREADS must be an integer, got {env!r}") from exc
        else:
            threads = 1
    if threads < 1:
        raise SchemaError(f"thread count must be >= 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)
    return threads


def _write_manifest(
    path: str,
    command: str,
    config: dict,
    seed: Optional[int],
    inputs: Sequence[str],
    outputs: Sequence[str],
    checkpoint: Optional[str] = None,
) -> None:
    """Record what produced a set of outputs; no timestamps, so a repeated
    run writes the identical manifest."""
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": list(inputs),
        "outputs": list(outputs),
        "version": __version__,
        "checkpoint_sha256": None,
    }
    if checkpoint is not None:
        from .checkpoint import checkpoint_sha256

        manifest["checkpoint_sha256"] = checkpoint_sha256(checkpoint)
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                raise SchemaError(f"{path}:{line_no}: blank line")
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise SchemaError(f"{path}:{line_no}: expected a JSON object")
            records.append(record)
    if not records:
        raise SchemaError(f"{path}: empty file")
    return records


def _load_json_config(path: str):
    with open(path, encoding="utf-8") as f:
        content = f.read()
    try:
        return json.loads(content)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc


def _require_keys(section, required: set[str], name: str) -> dict:
    if not isinstance(section, dict):
        raise SchemaError(f"{name} section must be a JSON object")
    missing = required - set(section)
    if missing:
        raise SchemaError(f"{name} section missing {sorted(missing)}")
    unknown = set(section) - required
    if unknown:
        raise SchemaError(f"{name} section has unknown keys {sorted(unknown)}")
    for key in required:
        if not isinstance(section[key], str):
            raise SchemaError(f"{name}.{key} must be a path string")
    return section


# ---------------------------------------------------------------------------
# vocab
# ---------------------------------------------------------------------------

def _cmd_vocab(args) -> int:
    from .train.trainer import load_text_dir
    from .vocab import build_vocab, save_vocab

    docs = load_text_dir(args.corpus)

    def stream():
        for doc in docs:
            yield doc
            yield "\n"  # separator; keeps the prompt newline in-vocabulary

    vocabulary = build_vocab(stream(), min_count=args.min_count)
    save_vocab(vocabulary, args.out)
    _write_manifest(
        args.out + ".manifest.json",
        "vocab",
        {"min_count": args.min_count},
        None,
        [args.corpus],
        [args.out],
    )
    print(f"vocabulary of {vocabulary.size} tokens -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"preset", "n_layers", "d_model", "n_heads", "d_ff", "max_seq_len"}
_TRAIN_KEYS = {"max_lr", "total_steps", "batch_size", "seq_len", "warmup_steps", "repeat_factor"}


def _model_from_section(section, vocab_size: int):
    from .model.config import ModelConfig, default_d_ff, desk_config, full_scale_config

    if not isinstance(section, dict):
        raise SchemaError("model section must be a JSON object")
    unknown = set(section) - _MODEL_KEYS
    if unknown:
        raise SchemaError(
            f"model section has unknown keys {sorted(unknown)}"
            " (vocab_size is derived from --vocab)"
        )
    preset = section.get("preset")
    if preset is not None:
        extras = set(section) - {"preset", "max_seq_len"}
        if extras:
            raise SchemaError(f"preset model config cannot also set {sorted(extras)}")
        max_seq_len = section.get("max_seq_len", 1024)
        if preset == "desk":
            return desk_config(vocab_size, max_seq_len=max_seq_len)
        if preset == "full-scale":
            return full_scale_config(vocab_size, max_seq_len=max_seq_len)
        raise SchemaError(f"unknown preset {preset!r} (choose desk or full-scale)")
    required = {"n_layers", "d_model", "n_heads", "max_seq_len"}
    missing = required - set(section)
    if missing:
        raise SchemaError(f"model section missing {sorted(missing)}")
    d_model = section["d_model"]
    if not isinstance(d_model, int):
        raise SchemaError(f"d_model must be an integer, got {d_model!r}")
    return ModelConfig(
        n_layers=section["n_layers"],
        d_model=d_model,
        n_heads=section["n_heads"],
        d_ff=section.get("d_ff", default_d_ff(d_model)),
        vocab_size=vocab_size,
        max_seq_len=section["max_seq_len"],
    )


def _train_cfg_from_section(section, mode: str, seed: int):
    from .train.config import PRETRAIN_MAX_LR, SFT_MAX_LR, TrainConfig

    if not isinstance(section, dict):
        raise SchemaError("train section must be a JSON object")
    unknown = set(section) - _TRAIN_KEYS
    if unknown:
        raise SchemaError(
            f"train section has unknown keys {sorted(unknown)} (the seed comes from --seed)"
        )
    missing = {"total_steps", "batch_size", "seq_len"} - set(section)
    if missing:
        raise SchemaError(f"train section missing {sorted(missing)}")
    return TrainConfig(
        max_lr=section.get("max_lr", PRETRAIN_MAX_LR if mode == "pretrain" else SFT_MAX_LR),
        total_steps=section["total_steps"],
        batch_size=section["batch_size"],
        seq_len=section["seq_len"],
        warmup_steps=section.get("warmup_steps"),
        repeat_factor=section.get("repeat_factor", 1),
        seed=seed,
    )


def _cmd_train(args) -> int:
    from dataclasses import asdict

    from .checkpoint import load_checkpoint, save_checkpoint
    from .model.params import init_parameters
    from .sft import serialize_for_training, validate_task_jsonl, write_rejection_report
    from .train.trainer import load_text_dir, pack_documents, sft_row, train
    from .vocab import load_vocab

    config = _load_json_config(args.config)
    if not isinstance(config, dict):
        raise SchemaError("train config must be a JSON object")
    unknown = set(config) - {"model", "train"}
    if unknown:
        raise SchemaError(f"train config has unknown sections {sorted(unknown)}")
    if "train" not in config:
        raise SchemaError("train config missing the train section")

    vocab = load_vocab(args.vocab)
    inputs = [args.config, args.vocab]
    if args.init is not None:
        if "model" in config:
            raise SchemaError(
                "with --init the model config comes from the checkpoint; drop the model section"
            )
        params, model_cfg = load_checkpoint(args.init)
        inputs.append(args.init)
        if model_cfg.vocab_size != vocab.size:
            raise SchemaError(
                f"checkpoint vocab_size {model_cfg.vocab_size} != vocabulary size {vocab.size}"
            )
    else:
        if "model" not in config:
            raise SchemaError("train config missing the model section (or pass --init)")
        model_cfg = _model_from_section(config["model"], vocab.size)
        params = init_parameters(model_cfg, seed=args.seed)

    train_cfg = _train_cfg_from_section(config["train"], args.mode, args.seed)

    rejects_path = None
    if args.mode == "pretrain":
        if args.corpus is None or args.data is not None:
            raise SchemaError("pretrain mode takes --corpus, not --data")
        docs = load_text_dir(args.corpus)
        inputs.append(args.corpus)
        rows = pack_documents(docs, vocab, train_cfg.seq_len)
    else:
        if args.data is None or args.corpus is not None:
            raise SchemaError("sft mode takes --data, not --corpus")
        examples, report = validate_task_jsonl(args.data)
        inputs.append(args.data)
        if report.rejections:
            rejects_path = args.rejects or args.out + ".rejects.csv"
            write_rejection_report(report.rejections, rejects_path)
            print(f"rejected {len(report.rejections)} of {report.total_lines} lines -> {rejects_path}")
        if not examples:
            raise SchemaError("no valid examples in the task file")
        rows = []
        dropped = 0
        for example in examples:
            prompt, target = serialize_for_training(example, vocab)
            row = sft_row(prompt, target, train_cfg.seq_len)
            if row is None:
                dropped += 1
            else:
                rows.append(row)
        if dropped:
            print(f"dropped {dropped} examples longer than seq_len {train_cfg.seq_len}")
        if not rows:
            raise SchemaError("every example exceeds seq_len")

    log = train(params, model_cfg, rows, train_cfg)
    save_checkpoint(args.out, params, model_cfg)
    loss_path = args.loss_csv or args.out + ".loss.csv"
    with open(loss_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "lr", "loss"])
        for record in log:
            writer.writerow([record.step, repr(record.lr), repr(record.loss)])

    outputs = [args.out, loss_path] + ([rejects_path] if rejects_path else [])
    resolved = {"mode": args.mode, "model": asdict(model_cfg), "train": asdict(train_cfg)}
    _write_manifest(
        args.out + ".manifest.json", "train", resolved, args.seed, inputs, outputs,
        checkpoint=args.out,
    )
    print(f"{len(log)} steps; final loss {log[-1].loss:.4f}; checkpoint -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# punctuate
# ---------------------------------------------------------------------------

def _cmd_punctuate(args) -> int:
    from .checkpoint import load_checkpoint
    from .decode import punctuate_batch
    from .textcore import strip_marks
    from .vocab import load_vocab

    params, cfg = load_checkpoint(args.ckpt)
    vocab = load_vocab(args.vocab)
    lines = _read_lines(args.infile)
    if not lines:
        raise SchemaError(f"{args.infile}: no input lines")
    texts = []
    for line_no, line in enumerate(lines, start=1):
        text = strip_marks(line)
        if not text:
            raise SchemaError(f"{args.infile}:{line_no}: empty text after stripping marks")
        texts.append(text)

    golds = None
    if args.flags is not None:
        golds = _read_lines(args.flags)
        if len(golds) != len(texts):
            raise SchemaError(f"{len(golds)} gold lines vs {len(texts)} input lines")
        for line_no, (gold, text) in enumerate(zip(golds, texts), start=1):
            if strip_marks(gold) != text:
                raise SchemaError(f"{args.flags}:{line_no}: gold text does not match the input")

    results = punctuate_batch(params, cfg, vocab, texts)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        for line in results:
            f.write(line + "\n")

    inputs = [args.ckpt, args.vocab, args.infile]
    outputs = [args.out]
    if golds is not None:
        flags_path = args.flags_out or args.out + ".flags.csv"
        spans = _write_flags_csv(flags_path, golds, results)
        inputs.append(args.flags)
        outputs.append(flags_path)
        print(f"{spans} disagreement spans -> {flags_path}")
    _write_manifest(
        args.out + ".manifest.json", "punctuate", {}, None, inputs, outputs,
        checkpoint=args.ckpt,
    )
    print(f"punctuated {len(results)} lines -> {args.out}")
    return 0


def _write_flags_csv(path: str, golds: Sequence[str], preds: Sequence[str]) -> int:
    from .decode import post_edit_flags

    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["line", "boundary", "kind", "gold_mark", "model_mark", "before", "after"])
        for line_no, (gold, pred) in enumerate(zip(golds, preds), start=1):
            for span in post_edit_flags(gold, pred):
                writer.writerow(
                    [line_no, span.boundary, span.kind, span.gold_mark, span.model_mark,
                     span.before, span.after]
                )
                count += 1
    return count


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _cmd_infer(args) -> int:
    from .checkpoint import load_checkpoint
    from .infer import infer_task
    from .sft import TaskKind
    from .textcore import strip_marks
    from .vocab import load_vocab

    if (args.text is None) == (args.infile is None):
        raise SchemaError("provide exactly one of --text or --in")
    params, cfg = load_checkpoint(args.ckpt)
    vocab = load_vocab(args.vocab)
    inputs = [args.ckpt, args.vocab]
    if args.text is not None:
        text = args.text
    else:
        with open(args.infile, encoding="utf-8") as f:
            text = f.read().strip()
        inputs.append(args.infile)

    task = TaskKind(args.task)
    if task is TaskKind.PUNCTUATION:
        text = strip_marks(text)
    kwargs = {} if args.max_new is None else {"max_new": args.max_new}
    answer = infer_task(params, cfg, vocab, task, text, word=args.word, **kwargs)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(answer + "\n")
        _write_manifest(
            args.out + ".manifest.json",
            "infer",
            {"task": args.task, "word": args.word, "max_new": args.max_new},
            None,
            inputs,
            [args.out],
            checkpoint=args.ckpt,
        )
    print(answer)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _seg_punct_core(gold_path: str, pred_path: str):
    from .metrics import corpus_seg_punct, text_error

    golds = _read_lines(gold_path)
    preds = _read_lines(pred_path)
    if len(golds) != len(preds):
        raise SchemaError(f"{len(golds)} gold lines vs {len(preds)} prediction lines")
    if not golds:
        raise SchemaError("empty evaluation files")
    flags = [text_error(g, p) for g, p in zip(golds, preds)]
    rate = sum(flags) / len(flags)
    kept = [(g, p) for (g, p), bad in zip(zip(golds, preds), flags) if not bad]
    values = {"text_error_rate": rate}
    lines = [
        "seg-punct evaluation",
        f"  samples: {len(golds)}",
        f"  text errors: {sum(flags)} ({100.0 * rate:.2f}%)",
        f"  scored samples: {len(kept)}",
    ]
    if kept:
        report = corpus_seg_punct([g for g, _ in kept], [p for _, p in kept])
        values.update(
            seg_p=report.seg.precision,
            seg_r=report.seg.recall,
            seg_f1=report.seg.f1,
            punct_p=report.punct.precision,
            punct_r=report.punct.recall,
            punct_f1=report.punct.f1,
        )
        lines += [
            f"  segmentation: P={report.seg.precision:.4f} R={report.seg.recall:.4f}"
            f" F1={report.seg.f1:.4f}",
            f"  punctuation:  P={report.punct.precision:.4f} R={report.punct.recall:.4f}"
            f" F1={report.punct.f1:.4f}",
            f"  macro seg F1: {report.macro_seg_f1:.4f}",
            f"  macro punct F1: {report.macro_punct_f1:.4f}",
        ]
    else:
        lines.append("  every sample failed the text-match precondition; boundary scores omitted")
    return values, lines


def _parse_allusion_gold(path: str):
    from .metrics import AllusionGold

    golds = []
    for line_no, record in enumerate(_read_jsonl(path), start=1):
        text = record.get("text")
        if not isinstance(text, str) or not text:
            raise SchemaError(f"{path}:{line_no}: missing text")
        has, ids = _allusion_fields(record, path, line_no)
        try:
            golds.append(AllusionGold(text=text, has_allusion=has, allusion_ids=ids))
        except SchemaError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from exc
    return golds


def _parse_allusion_pred(path: str):
    return [
        _allusion_fields(record, path, line_no)
        for line_no, record in enumerate(_read_jsonl(path), start=1)
    ]


def _allusion_fields(record: dict, path: str, line_no: int) -> tuple[bool, frozenset]:
    has = record.get("has_allusion")
    if not isinstance(has, bool):
        raise SchemaError(f"{path}:{line_no}: has_allusion must be a boolean")
    ids = record.get("allusion_ids", [])
    if not isinstance(ids, list) or not all(isinstance(i, str) and i for i in ids):
        raise SchemaError(f"{path}:{line_no}: allusion_ids must be a list of nonempty strings")
    return has, frozenset(ids)


def _allusion_core(gold_path: str, pred_path: str):
    from .metrics import allusion_scores

    golds = _parse_allusion_gold(gold_path)
    preds = _parse_allusion_pred(pred_path)
    report = allusion_scores(golds, preds)
    ident = report.identification
    values = {"detection_acc": report.detection_acc, "ident_f1": ident.f1}
    lines = [
        "allusion evaluation",
        f"  samples: {len(golds)}",
        f"  detection accuracy: {report.detection_acc:.4f}",
        f"  identification: P={ident.precision:.4f} R={ident.recall:.4f} F1={ident.f1:.4f}"
        f" (tp={ident.tp} fp={ident.fp} fn={ident.fn})",
    ]
    if report.no_positives:
        lines.append("  note: no positive labels on either side; identification F1 is 0 by convention")
    return values, lines


def _translate_core(refs_path: str, hyps_path: str, smooth: bool):
    from .metrics import bleu, chrf

    refs = _read_lines(refs_path)
    hyps = _read_lines(hyps_path)
    bleu_score = bleu(refs, hyps, smoothing=smooth)
    chrf_score = chrf(refs, hyps)
    values = {"bleu": bleu_score, "chrf": chrf_score}
    lines = [
        "translation evaluation",
        f"  samples: {len(refs)}",
        f"  BLEU: {bleu_score:.2f}" + (" (smoothed)" if smooth else ""),
        f"  CHRF: {chrf_score:.2f}",
    ]
    return values, lines


def _write_eval_report(prefix: str, values: dict, lines: Sequence[str]) -> list[str]:
    """One CSV row under the fixed 11-column schema plus a text report."""
    csv_path = prefix + ".csv"
    txt_path = prefix + ".txt"
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_EVAL_FIELDS)
        writer.writerow(
            ["" if values.get(k) is None else repr(float(values[k])) for k in _EVAL_FIELDS]
        )
    with open(txt_path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return [csv_path, txt_path]


def _cmd_eval_seg_punct(args) -> int:
    values, lines = _seg_punct_core(args.gold, args.pred)
    outputs = _write_eval_report(args.out, values, lines)
    _write_manifest(
        args.out + ".manifest.json", "eval seg-punct", {}, None,
        [args.gold, args.pred], outputs,
    )
    print("\n".join(lines))
    return 0


def _cmd_eval_allusion(args) -> int:
    values, lines = _allusion_core(args.gold, args.pred)
    outputs = _write_eval_report(args.out, values, lines)
    _write_manifest(
        args.out + ".manifest.json", "eval allusion", {}, None,
        [args.gold, args.pred], outputs,
    )
    print("\n".join(lines))
    return 0


def _cmd_eval_translate(args) -> int:
    values, lines = _translate_core(args.refs, args.hyps, args.smooth)
    outputs = _write_eval_report(args.out, values, lines)
    _write_manifest(
        args.out + ".manifest.json", "eval translate", {"smooth": args.smooth}, None,
        [args.refs, args.hyps], outputs,
    )
    print("\n".join(lines))
    return 0


def _cmd_eval_suite(args) -> int:
    """Validate and score every configured task before writing anything, so
    a failure in any one of them leaves no partial report behind."""
    config = _load_json_config(args.config)
    if not isinstance(config, dict) or not config:
        raise SchemaError("suite config must be a nonempty JSON object")
    unknown = set(config) - {"seg_punct", "allusion", "translate"}
    if unknown:
        raise SchemaError(f"suite config has unknown sections {sorted(unknown)}")

    results = {}
    inputs = [args.config]
    if "seg_punct" in config:
        section = _require_keys(config["seg_punct"], {"gold", "pred"}, "seg_punct")
        results["seg_punct"] = _seg_punct_core(section["gold"], section["pred"])
        inputs += [section["gold"], section["pred"]]
    if "allusion" in config:
        section = _require_keys(config["allusion"], {"gold", "pred"}, "allusion")
        results["allusion"] = _allusion_core(section["gold"], section["pred"])
        inputs += [section["gold"], section["pred"]]
    if "translate" in config:
        section = _require_keys(config["translate"], {"refs", "hyps"}, "translate")
        results["translate"] = _translate_core(section["refs"], section["hyps"], False)
        inputs += [section["refs"], section["hyps"]]

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    merged: dict = {}
    summary_lines = ["evaluation suite"]
    for task in ("seg_punct", "allusion", "translate"):
        if task not in results:
            continue
        values, lines = results[task]
        outputs += _write_eval_report(os.path.join(args.out, task), values, lines)
        merged.update(values)
        summary_lines.append("")
        summary_lines += lines
    outputs += _write_eval_report(os.path.join(args.out, "summary"), merged, summary_lines)
    _write_manifest(
        os.path.join(args.out, "manifest.json"), "eval suite", config, None, inputs, outputs,
    )
    print(f"suite reports ({', '.join(sorted(results))}) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# human-eval
# ---------------------------------------------------------------------------

def _cmd_he_bundle(args) -> int:
    from .humaneval import make_bundles

    answers: dict[str, dict[str, str]] = {}
    for line_no, record in enumerate(_read_jsonl(args.answers), start=1):
        item = record.get("item")
        if not isinstance(item, str) or not item:
            raise SchemaError(f"{args.answers}:{line_no}: missing item id")
        if item in answers:
            raise SchemaError(f"{args.answers}:{line_no}: duplicate item {item!r}")
        per_item = record.get("answers")
        if not isinstance(per_item, dict) or not per_item:
            raise SchemaError(f"{args.answers}:{line_no}: missing answers object")
        for system, answer in per_item.items():
            if not isinstance(answer, str):
                raise SchemaError(f"{args.answers}:{line_no}: answer for {system!r} is not a string")
        answers[item] = dict(per_item)

    bundles, key = make_bundles(answers, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    bundles_path = os.path.join(args.out_dir, "bundles.txt")
    key_path = os.path.join(args.out_dir, "key.json")
    with open(bundles_path, "w", encoding="utf-8", newline="") as f:
        for bundle in bundles:
            f.write(f"item {bundle.item}\n")
            for slot, answer in enumerate(bundle.answers):
                f.write(f"  [{slot}] {json.dumps(answer, ensure_ascii=False)}\n")
            f.write("\n")
    with open(key_path, "w", encoding="utf-8", newline="") as f:
        sealed = {
            item: {str(slot): system for slot, system in slots.items()}
            for item, slots in key.items()
        }
        json.dump(sealed, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(
        os.path.join(args.out_dir, "manifest.json"), "human-eval bundle", {}, args.seed,
        [args.answers], [bundles_path, key_path],
    )
    print(f"{len(bundles)} bundles -> {bundles_path}; sealed key -> {key_path}")
    return 0


def _cmd_he_aggregate(args) -> int:
    from .humaneval import (
        DegenerateInput,
        RatingMatrix,
        inter_rater_consistency,
        mean_scores,
        win_rate,
    )

    matrix = RatingMatrix.from_csv(args.ratings, scale=args.scale)
    means = mean_scores(matrix)
    wins = win_rate(matrix)
    lines = [
        "human evaluation aggregate",
        f"  items: {len(matrix.items)}  systems: {len(matrix.systems)}"
        f"  evaluators: {len(matrix.evaluators)}",
    ]
    for system in matrix.systems:
        lines.append(f"  {system}: mean={means[system]:.4f} win_rate={wins[system]:.4f}")
    if len(matrix.evaluators) >= 2:
        try:
            consistency = inter_rater_consistency(matrix)
        except DegenerateInput as exc:
            lines.append(f"  inter-rater consistency: undefined ({exc})")
        else:
            lines.append(
                f"  inter-rater consistency: {consistency.value:.4f}"
                f" (mean pairwise rank correlation, {consistency.pairs_used} evaluator pairs)"
            )
            for pair in consistency.skipped:
                lines.append(f"  skipped pair (constant ratings): {pair[0]}, {pair[1]}")
    else:
        lines.append("  inter-rater consistency: n/a (single evaluator)")

    csv_path = args.out + ".csv"
    txt_path = args.out + ".txt"
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["system", "mean_score", "win_rate"])
        for system in matrix.systems:
            writer.writerow([system, repr(means[system]), repr(wins[system])])
    with open(txt_path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")
    _write_manifest(
        args.out + ".manifest.json", "human-eval aggregate", {"scale": args.scale}, None,
        [args.ratings], [csv_path, txt_path],
    )
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# sense-drift
# ---------------------------------------------------------------------------

def _cmd_sense_drift(args) -> int:
    from .sense import (
        DEFAULT_THETA,
        DEFAULT_WINDOW,
        cluster_glosses,
        concordance,
        emit_chart,
        load_period_corpus,
        sense_trajectory,
    )

    if (args.glosses is None) == (args.ckpt is None):
        raise SchemaError("provide exactly one gloss source: --glosses or --ckpt with --vocab")
    if args.ckpt is not None and args.vocab is None:
        raise SchemaError("--ckpt requires --vocab")
    theta = DEFAULT_THETA if args.theta is None else args.theta
    window = DEFAULT_WINDOW if args.window is None else args.window

    corpus = load_period_corpus(args.corpus)
    hits = concordance(corpus, args.keyword, window=window)
    if not hits:
        raise SchemaError(f"keyword {args.keyword!r} not found in the corpus")

    inputs = [args.corpus]
    if args.glosses is not None:
        glosses = _read_lines(args.glosses)
        if len(glosses) != len(hits):
            raise SchemaError(
                f"{len(glosses)} glosses for {len(hits)} concordance hits;"
                " provide one per hit in hit order"
            )
        inputs.append(args.glosses)
    else:
        from .checkpoint import load_checkpoint
        from .infer import infer_task
        from .sft import TaskKind
        from .vocab import load_vocab

        params, cfg = load_checkpoint(args.ckpt)
        vocab = load_vocab(args.vocab)
        glosses = [
            infer_task(params, cfg, vocab, TaskKind.WORD_EXPLANATION, hit.snippet,
                       word=args.keyword)
            for hit in hits
        ]
        inputs += [args.ckpt, args.vocab]

    entries = []
    empty = 0
    for hit, gloss in zip(hits, glosses):
        if gloss:
            entries.append((gloss, hit.period, hit.snippet))
        else:
            empty += 1
    if empty:
        print(f"skipped {empty} hits with empty glosses")
    if not entries:
        raise SchemaError("no nonempty glosses to cluster")

    clusters = cluster_glosses(entries, theta=theta)
    trajectory = sense_trajectory(clusters, top_k=args.top_k)
    csv_path, svg_path = emit_chart(trajectory, args.out)
    config = {"keyword": args.keyword, "theta": theta, "top_k": args.top_k, "window": window}
    _write_manifest(
        args.out + ".manifest.json", "sense-drift", config, None, inputs,
        [csv_path, svg_path], checkpoint=args.ckpt,
    )
    print(
        f"{len(hits)} hits, {len(clusters)} sense clusters;"
        f" top {len(trajectory.representatives)} charted -> {csv_path}, {svg_path}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads", type=int, default=None,
        help="thread cap for numeric libraries (default: TAIYAN_THREADS or 1)",
    )

    parser = argparse.ArgumentParser(
        prog="taiyan",
        description="Classical-Chinese language model toolkit: train, punctuate, "
        "explain, translate, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("vocab", parents=[common], help="build a character vocabulary")
    p.add_argument("--corpus", required=True, help="directory of UTF-8 .txt documents")
    p.add_argument("--out", required=True, help="vocabulary file to write")
    p.add_argument("--min-count", type=int, default=1, help="frequency floor for non-marks")
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("train", parents=[common], help="pretrain or fine-tune a model")
    p.add_argument("--config", required=True, help="JSON file with model and train sections")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--mode", required=True, choices=["pretrain", "sft"])
    p.add_argument("--corpus", help="text directory (pretrain mode)")
    p.add_argument("--data", help="task JSONL file (sft mode)")
    p.add_argument("--init", help="checkpoint to continue from instead of a fresh init")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--loss-csv", help="loss log path (default: OUT.loss.csv)")
    p.add_argument("--rejects", help="rejection report path (default: OUT.rejects.csv)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("punctuate", parents=[common], help="punctuate unmarked text")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="infile", required=True, help="one document per line")
    p.add_argument("--out", required=True)
    p.add_argument("--flags", help="gold punctuated file; emit disagreement spans")
    p.add_argument("--flags-out", help="flags CSV path (default: OUT.flags.csv)")
    p.set_defaults(func=_cmd_punctuate)

    p = sub.add_parser("infer", parents=[common], help="run one task on one input")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument(
        "--task", required=True,
        choices=["punctuation", "allusion", "word_explanation", "translation"],
    )
    p.add_argument("--text", help="input text on the command line")
    p.add_argument("--in", dest="infile", help="file whose whole content is the input")
    p.add_argument("--word", help="the word to explain (word_explanation only)")
    p.add_argument("--out", help="write the answer here as well as stdout")
    p.add_argument("--max-new", type=int, default=None, help="generation length cap")
    p.set_defaults(func=_cmd_infer)

    pe = sub.add_parser("eval", help="scored evaluations")
    se = pe.add_subparsers(dest="eval_command", required=True, metavar="TASK")

    p = se.add_parser("seg-punct", parents=[common], help="segmentation and punctuation F1")
    p.add_argument("--gold", required=True, help="gold punctuated text, one sample per line")
    p.add_argument("--pred", required=True, help="predicted punctuated text, aligned by line")
    p.add_argument("--out", required=True, help="report prefix (writes .csv and .txt)")
    p.set_defaults(func=_cmd_eval_seg_punct)

    p = se.add_parser("allusion", parents=[common], help="allusion detection and identification")
    p.add_argument("--gold", required=True, help="gold JSONL")
    p.add_argument("--pred", required=True, help="prediction JSONL, aligned by line")
    p.add_argument("--out", required=True, help="report prefix (writes .csv and .txt)")
    p.set_defaults(func=_cmd_eval_allusion)

    p = se.add_parser("translate", parents=[common], help="character BLEU and CHRF")
    p.add_argument("--refs", required=True, help="reference translations, one per line")
    p.add_argument("--hyps", required=True, help="hypotheses, aligned by line")
    p.add_argument("--out", required=True, help="report prefix (writes .csv and .txt)")
    p.add_argument("--smooth", action="store_true", help="add-one BLEU smoothing")
    p.set_defaults(func=_cmd_eval_translate)

    p = se.add_parser("suite", parents=[common], help="every configured evaluation at once")
    p.add_argument("--config", required=True, help="JSON naming the per-task input files")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_eval_suite)

    ph = sub.add_parser("human-eval", help="rating experiment tooling")
    sh = ph.add_subparsers(dest="human_eval_command", required=True, metavar="STEP")

    p = sh.add_parser("bundle", parents=[common], help="anonymize and shuffle answers")
    p.add_argument("--answers", required=True, help="JSONL: item id plus per-system answers")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_he_bundle)

    p = sh.add_parser("aggregate", parents=[common], help="means, win rates, consistency")
    p.add_argument("--ratings", required=True, help="CSV: item,system,evaluator,score")
    p.add_argument("--out", required=True, help="report prefix (writes .csv and .txt)")
    p.add_argument("--scale", choices=["word", "translation"], help="enforce a rating scale")
    p.set_defaults(func=_cmd_he_aggregate)

    p = sub.add_parser("sense-drift", parents=[common], help="diachronic sense trajectory chart")
    p.add_argument("--corpus", required=True, help="directory with one subdirectory per period")
    p.add_argument("--keyword", required=True)
    p.add_argument("--out", required=True, help="output prefix (writes .csv and .svg)")
    p.add_argument("--theta", type=float, default=None, help="cluster similarity threshold")
    p.add_argument("--top-k", type=int, default=5, help="clusters to chart")
    p.add_argument("--window", type=int, default=None, help="context chars each side")
    p.add_argument("--glosses", help="file with one gloss per concordance hit")
    p.add_argument("--ckpt", help="gloss every hit with this model instead")
    p.add_argument("--vocab", help="vocabulary for --ckpt")
    p.set_defaults(func=_cmd_sense_drift)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_threads(args.threads)
        return int(args.func(args) or 0)
    except SchemaError as exc:
        print(f"taiyan: error: {exc}", file=sys.stderr)
        return 2
    except UnicodeDecodeError as exc:
        print(f"taiyan: error: undecodable input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"taiyan: io error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"taiyan: numeric error: {exc}", file=sys.stderr)
        return 4
