"""The four fine-tuning task formats.

Punctuation pairs are synthesized from punctuated text by stripping marks;
allusion, word explanation, and translation arrive as curated JSONL and only
get validated here.  Serialization for training is shared by all four:

    BOS  input  "\\n"  instruction  SEP  |  output  EOS
                 prompt                  |   target (loss lives here)
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import SchemaError
from .textcore import MalformedPunctuation, PunctuationAlignment, align, render, strip_marks
from .vocab import BOS, EOS, SEP, Vocabulary


class TaskKind(Enum):
    PUNCTUATION = "punctuation"
    ALLUSION = "allusion"
    WORD_EXPLANATION = "word_explanation"
    TRANSLATION = "translation"


_WORD_SLOT = "{w}"

INSTRUCTIONS: dict[TaskKind, str] = {
    TaskKind.PUNCTUATION: "給上述文本添加標點。",
    TaskKind.ALLUSION: "識別文本中的典故。",
    TaskKind.WORD_EXPLANATION: "文本中的「" + _WORD_SLOT + "」是什麼意思？",
    TaskKind.TRANSLATION: "將上文翻譯成白話文。",
}


def instruction_for(task: TaskKind, word: Optional[str] = None) -> str:
    """The fixed instruction string; word fills the explanation slot."""
    template = INSTRUCTIONS[task]
    if task is TaskKind.WORD_EXPLANATION:
        if not word:
            raise SchemaError("word explanation requires a word")
        return template.replace(_WORD_SLOT, word)
    return template


class BadTaskExample(SchemaError):
    """A task record violates its invariants."""


@dataclass(frozen=True)
class TaskExample:
    """One supervised example; instruction is always the canonical template."""

    task: TaskKind
    input: str
    instruction: str
    output: str
    word: Optional[str] = None

    def __post_init__(self) -> None:
        for name in ("input", "instruction", "output"):
            if not getattr(self, name):
                raise BadTaskExample(f"empty {name}")
        if self.task is TaskKind.WORD_EXPLANATION:
            if not self.word:
                raise BadTaskExample("word explanation requires a word")
            if self.word not in self.input:
                raise BadTaskExample("query not in text")
        if self.instruction != instruction_for(self.task, self.word):
            raise BadTaskExample("instruction does not match the task template")
        if self.task is TaskKind.PUNCTUATION:
            try:
                align(self.output)
            except MalformedPunctuation as exc:
                raise BadTaskExample(f"output is not well-punctuated: {exc}") from exc
            if strip_marks(self.output) != self.input:
                raise BadTaskExample("stripping the output does not recover the input")


def make_example(task: TaskKind, input_text: str, output: str, word: Optional[str] = None) -> TaskExample:
    return TaskExample(
        task=task,
        input=input_text,
        instruction=instruction_for(task, word),
        output=output,
        word=word,
    )


# ---------------------------------------------------------------------------
# punctuation pair synthesis
# ---------------------------------------------------------------------------

def make_punctuation_pairs(
    docs: Iterable[str], max_chars: int = 256
) -> tuple[list[TaskExample], int]:
    """Strip-and-supervise pairs from punctuated documents.

    Documents are cut into windows of at most max_chars punctuated characters,
    cutting only at mark boundaries.  Documents that fail alignment, carry no
    marks, or contain a single sentence longer than the window are skipped and
    counted; a trailing unterminated run of characters is likewise dropped.
    Returns (examples, skipped_count).
    """
    examples: list[TaskExample] = []
    skipped = 0
    for doc in docs:
        try:
            alignment = align(doc)
        except MalformedPunctuation:
            skipped += 1
            continue
        marks = alignment.boundary_marks
        if not marks:
            skipped += 1
            continue
        cuts = sorted(marks)
        chars = alignment.chars
        start = 0
        feasible = None
        i = 0
        while i < len(cuts):
            b = cuts[i]
            length = (b - start) + sum(1 for c in cuts if start < c <= b)
            if length <= max_chars:
                feasible = b
                i += 1
                continue
            if feasible is None:
                # single sentence wider than the window: drop it whole
                skipped += 1
                start = b
                i += 1
                continue
            examples.append(_window_example(chars, marks, start, feasible))
            start = feasible
            feasible = None
        if feasible is not None and feasible > start:
            examples.append(_window_example(chars, marks, start, feasible))
        if cuts and cuts[-1] < len(chars):
            skipped += 1
    return examples, skipped


def _window_example(chars: str, marks: dict[int, str], start: int, end: int) -> TaskExample:
    span = chars[start:end]
    local = {b - start: m for b, m in marks.items() if start < b <= end}
    rendered = render(PunctuationAlignment(chars=span, boundary_marks=local))
    return make_example(TaskKind.PUNCTUATION, span, rendered)


# ---------------------------------------------------------------------------
# JSONL ingestion
# ---------------------------------------------------------------------------

_TASK_NAMES = {kind.value: kind for kind in TaskKind}


@dataclass
class ValidationReport:
    """Line-accounted outcome of reading one JSONL file."""

    accepted: int = 0
    rejections: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total_lines(self) -> int:
        return self.accepted + len(self.rejections)


def validate_task_jsonl(path: str) -> tuple[list[TaskExample], ValidationReport]:
    """Parse and validate a task JSONL file.

    Every line is either accepted or lands in the report with its 1-based
    line number and a reason; nothing is silently dropped.
    """
    examples: list[TaskExample] = []
    report = ValidationReport()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                report.rejections.append((line_no, "blank line"))
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                report.rejections.append((line_no, f"bad JSON: {exc.msg}"))
                continue
            if not isinstance(record, dict):
                report.rejections.append((line_no, "record is not an object"))
                continue
            try:
                examples.append(_example_from_record(record))
            except SchemaError as exc:
                report.rejections.append((line_no, str(exc)))
                continue
            report.accepted += 1
    return examples, report


def _example_from_record(record: dict) -> TaskExample:
    task_name = record.get("task")
    if task_name not in _TASK_NAMES:
        raise BadTaskExample(f"unknown task {task_name!r}")
    task = _TASK_NAMES[task_name]
    input_text = _text_field(record, "input")
    output = _text_field(record, "output")
    word = record.get("word")
    if word is not None and not isinstance(word, str):
        raise BadTaskExample("word must be a string")
    instruction = record.get("instruction")
    if instruction is None:
        instruction = instruction_for(task, word)
    elif not isinstance(instruction, str):
        raise BadTaskExample("instruction must be a string")
    return TaskExample(task=task, input=input_text, instruction=instruction, output=output, word=word)


def _text_field(record: dict, name: str) -> str:
    value = record.get(name)
    if not isinstance(value, str) or not value:
        raise BadTaskExample(f"empty {name}")
    return value


def write_rejection_report(rejections: Sequence[tuple[int, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["line", "reason"])
        for line_no, reason in rejections:
            writer.writerow([line_no, reason])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def prompt_ids(
    vocab: Vocabulary, task: TaskKind, input_text: str, word: Optional[str] = None
) -> list[int]:
    """BOS + input + newline + instruction + SEP, as token ids."""
    return (
        [BOS]
        + vocab.encode(input_text)
        + vocab.encode("\n")
        + vocab.encode(instruction_for(task, word))
        + [SEP]
    )


def serialize_for_training(example: TaskExample, vocab: Vocabulary) -> tuple[list[int], list[int]]:
    """(prompt ids, target ids); the loss mask covers exactly the target."""
    prompt = prompt_ids(vocab, example.task, example.input, example.word)
    target = vocab.encode(example.output) + [EOS]
    return prompt, target
