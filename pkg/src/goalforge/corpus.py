"""Interview transcripts: loading, moving windows, and positional partitions.

A transcript is an ordered list of speaker turns.  Everything in this module
is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import TranscriptError


class Speaker(str, Enum):
    INTERVIEWER = "interviewer"
    STAKEHOLDER = "stakeholder"


_SPEAKER_PREFIX = {Speaker.INTERVIEWER: "I", Speaker.STAKEHOLDER: "S"}


@dataclass(frozen=True)
class SpeakerTurn:
    """One contiguous utterance by a single speaker."""

    index: int
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class Transcript:
    """An interview as an ordered sequence of speaker turns.

    Turn indices must be contiguous from 0 and every turn must carry
    non-blank text; an interview needs at least two turns to be one.
    """

    id: str
    topic: str
    turns: tuple[SpeakerTurn, ...]

    def __post_init__(self):
        if len(self.turns) < 2:
            raise TranscriptError(
                f"transcript {self.id!r}: has {len(self.turns)} turn(s), need at least 2"
            )
        for position, turn in enumerate(self.turns):
            if turn.index != position:
                raise TranscriptError(
                    f"transcript {self.id!r}: turns[{position}] carries index {turn.index}"
                )
            if not turn.text.strip():
                raise TranscriptError(
                    f"transcript {self.id!r}: turns[{position}].text is empty"
                )


@dataclass(frozen=True)
class Window:
    """A half-open slice [start_turn, end_turn) of a transcript."""

    start_turn: int
    end_turn: int
    turns: tuple[SpeakerTurn, ...]


def load_transcript(path: str | Path) -> Transcript:
    """Load and validate a transcript JSON file.

    The file must be an object with string fields ``id`` and ``topic`` and a
    non-empty ``turns`` list of ``{"speaker": ..., "text": ...}`` objects.
    Speaker labels are matched case-insensitively against "interviewer" and
    "stakeholder"; anything else is an error, never a guess.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TranscriptError(f"{path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TranscriptError(f"{path}: malformed JSON: {exc}") from exc

    if not isinstance(data, dict):
        raise TranscriptError(f"{path}: top-level value must be an object")
    for field in ("id", "topic"):
        if not isinstance(data.get(field), str):
            raise TranscriptError(f"{path}: field {field!r} must be a string")
    raw_turns = data.get("turns")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise TranscriptError(f"{path}: field 'turns' must be a non-empty list")

    turns = []
    for i, entry in enumerate(raw_turns):
        if not isinstance(entry, dict):
            raise TranscriptError(f"{path}: turns[{i}] must be an object")
        label = entry.get("speaker")
        if not isinstance(label, str):
            raise TranscriptError(f"{path}: turns[{i}].speaker must be a string")
        try:
            speaker = Speaker(label.strip().lower())
        except ValueError:
            raise TranscriptError(
                f"{path}: turns[{i}].speaker: unknown speaker {label!r}"
            ) from None
        text = entry.get("text")
        if not isinstance(text, str) or not text.strip():
            raise TranscriptError(f"{path}: turns[{i}].text must be a non-empty string")
        turns.append(SpeakerTurn(index=i, speaker=speaker, text=text))

    return Transcript(id=data["id"], topic=data["topic"], turns=tuple(turns))


def transcript_to_dict(t: Transcript) -> dict:
    return {
        "id": t.id,
        "topic": t.topic,
        "turns": [{"speaker": turn.speaker.value, "text": turn.text} for turn in t.turns],
    }


def windows(t: Transcript, length: int, step: int) -> list[Window]:
    """Slice a transcript into moving windows of ``length`` turns every ``step``.

    Starts run 0, step, 2*step, ... while a full window fits.  If trailing
    turns would be left uncovered, one final window clamped to end at the
    last turn is appended (skipped when it would duplicate the previous
    start).  With ``length`` at or above the turn count this yields exactly
    one whole-transcript window.  Full coverage of every turn is guaranteed
    when ``step <= length``.
    """
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    if step < 1:
        raise ValueError(f"window step must be >= 1, got {step}")
    n = len(t.turns)
    starts = []
    s = 0
    while s + length <= n:
        starts.append(s)
        s += step
    covered = starts[-1] + length if starts else 0
    if covered < n:
        tail = max(0, n - length)
        if not starts or starts[-1] != tail:
            starts.append(tail)
    return [
        Window(start_turn=s, end_turn=min(s + length, n), turns=t.turns[s : min(s + length, n)])
        for s in starts
    ]


def partition_of(turn_index: int, turn_count: int, partitions: int) -> int:
    """Map a turn position to a 1-based partition id.

    Computed as floor(turn_index / turn_count * partitions) + 1 using exact
    integer arithmetic, clamped to [1, partitions].
    """
    if turn_count < 1:
        raise ValueError(f"turn_count must be >= 1, got {turn_count}")
    if not 0 <= turn_index < turn_count:
        raise ValueError(f"turn_index {turn_index} out of range [0, {turn_count})")
    if partitions < 1:
        raise ValueError(f"partitions must be >= 1, got {partitions}")
    bin_id = (turn_index * partitions) // turn_count + 1
    return min(max(bin_id, 1), partitions)


def excerpt_text(window: Window) -> str:
    """Render a window as prompt-ready text, one ``I:``/``S:`` line per turn."""
    return "\n".join(
        f"{_SPEAKER_PREFIX[turn.speaker]}: {turn.text}" for turn in window.turns
    )
