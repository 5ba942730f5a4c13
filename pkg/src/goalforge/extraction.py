"""From raw model responses to traced, attributed goals and summary statistics.

Phrase matching is normalization-based: case is folded, whitespace runs
collapse to single spaces, and surrounding quotes/ellipses are stripped from
the candidate phrase.  Matches are located back in the original turn text so
character offsets always refer to the transcript as written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .corpus import Speaker, Transcript, partition_of
from .errors import ResponseFormatError

_QUOTE_CHARS = "\"'“”‘’`"


@dataclass(frozen=True)
class PhraseTrace:
    """One candidate source phrase for a goal, located in the transcript if found.

    ``char_offset``/``char_end`` delimit the matched span in the original
    turn text (half-open).  All location fields are present exactly when
    ``matched`` is true.
    """

    phrase: str
    matched: bool
    turn_index: int | None = None
    char_offset: int | None = None
    char_end: int | None = None
    speaker: Speaker | None = None

    def __post_init__(self):
        located = (self.turn_index, self.char_offset, self.char_end, self.speaker)
        if self.matched and any(v is None for v in located):
            raise ValueError("matched trace must carry turn, offsets and speaker")
        if not self.matched and any(v is not None for v in located):
            raise ValueError("unmatched trace must not carry location fields")


@dataclass(frozen=True)
class ExtractedGoal:
    """A goal statement extracted from one window of one sample pass."""

    goal_id: str
    text: str
    sample_index: int
    window: tuple[int, int]
    traces: tuple[PhraseTrace, ...]

    def matched_traces(self) -> tuple[PhraseTrace, ...]:
        return tuple(t for t in self.traces if t.matched)


@dataclass(frozen=True)
class ExtractionStats:
    """Aggregate extraction statistics for one goal set.

    Fields are numeric rather than integral so per-run averages can be
    aggregated into the same shape.  ``total_goals`` counts goals with at
    least one matched trace (only those can be attributed to a speaker);
    their split across speakers must add up exactly.
    """

    total_phrases: float
    unmatched_phrases: float
    interviewer_goals: float
    stakeholder_goals: float
    multi_turn_goals: float
    total_goals: float

    def __post_init__(self):
        if not math.isclose(
            self.interviewer_goals + self.stakeholder_goals,
            self.total_goals,
            rel_tol=0.0,
            abs_tol=1e-9,
        ):
            raise ValueError(
                "interviewer_goals + stakeholder_goals must equal total_goals"
            )

    @property
    def trace_correctness(self) -> float:
        """Share of phrases that matched the transcript; 1.0 when there are none."""
        if self.total_phrases == 0:
            return 1.0
        return (self.total_phrases - self.unmatched_phrases) / self.total_phrases


def _iter_json_candidates(text: str):
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(text):
        if ch not in "[{":
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except ValueError:
            continue
        yield value


def parse_goal_response(text: str) -> list[str]:
    """Pull the first JSON list of strings out of a goal-extraction response.

    Surrounding prose and code fences are tolerated; an empty list is valid.
    """
    for value in _iter_json_candidates(text):
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return value
    raise ResponseFormatError("no JSON list of strings in response", raw_text=text)


def _trace_pair(value) -> tuple[str, list[str]] | None:
    if not isinstance(value, dict):
        return None
    goal = value.get("goal")
    phrases = value.get("phrases")
    if not isinstance(goal, str):
        return None
    if not isinstance(phrases, list) or not all(isinstance(p, str) for p in phrases):
        return None
    return goal, phrases


def parse_trace_response(text: str) -> list[tuple[str, list[str]]]:
    """Pull goal/phrase pairs out of a tracing response.

    Accepts a single ``{"goal": ..., "phrases": [...]}`` object or a JSON
    list of them.
    """
    for value in _iter_json_candidates(text):
        if isinstance(value, dict):
            pair = _trace_pair(value)
            if pair is not None:
                return [pair]
        elif isinstance(value, list):
            pairs = [_trace_pair(v) for v in value]
            if all(p is not None for p in pairs):
                return pairs  # type: ignore[return-value]
    raise ResponseFormatError("no goal/phrases objects in response", raw_text=text)


def _normalize_indexed(text: str) -> tuple[str, list[int]]:
    # Lowercased, whitespace-collapsed copy plus a map from each normalized
    # character back to its source index in the original text.
    out: list[str] = []
    index_map: list[int] = []
    pending_space = False
    for i, ch in enumerate(text):
        if ch.isspace():
            pending_space = bool(out)
            continue
        if pending_space:
            out.append(" ")
            index_map.append(i - 1)
            pending_space = False
        for low in ch.lower():
            out.append(low)
            index_map.append(i)
    return "".join(out), index_map


def normalize_phrase(phrase: str) -> str:
    """Canonical form used for matching: trimmed of quotes/ellipses, collapsed."""
    s = phrase.strip()
    changed = True
    while changed and s:
        changed = False
        if s[0] in _QUOTE_CHARS:
            s = s[1:].lstrip()
            changed = True
        if s and s[-1] in _QUOTE_CHARS:
            s = s[:-1].rstrip()
            changed = True
        for ell in ("...", "…"):
            if s.startswith(ell):
                s = s[len(ell) :].lstrip()
                changed = True
            if s.endswith(ell):
                s = s[: -len(ell)].rstrip()
                changed = True
    normalized, _ = _normalize_indexed(s)
    return normalized


def match_phrase(t: Transcript, phrase: str) -> PhraseTrace:
    """Locate a phrase in the transcript; the first occurrence in turn order wins."""
    if not phrase.strip():
        raise ValueError("phrase must be non-empty")
    needle = normalize_phrase(phrase)
    if needle:
        for turn in t.turns:
            haystack, index_map = _normalize_indexed(turn.text)
            pos = haystack.find(needle)
            if pos < 0:
                continue
            start = index_map[pos]
            end = index_map[pos + len(needle) - 1] + 1
            return PhraseTrace(
                phrase=phrase,
                matched=True,
                turn_index=turn.index,
                char_offset=start,
                char_end=end,
                speaker=turn.speaker,
            )
    return PhraseTrace(phrase=phrase, matched=False)


def attribute_goal(g: ExtractedGoal) -> tuple[Speaker, bool]:
    """Attribute a goal to a speaker and flag whether it spans multiple turns.

    A goal belongs to the interviewer only when every matched trace lies in
    interviewer turns; any stakeholder evidence attributes it to the
    stakeholder.
    """
    matched = g.matched_traces()
    if not matched:
        raise ValueError(f"goal {g.goal_id} has no matched traces; attribution undefined")
    speakers = {tr.speaker for tr in matched}
    turns = {tr.turn_index for tr in matched}
    attribution = (
        Speaker.INTERVIEWER if speakers == {Speaker.INTERVIEWER} else Speaker.STAKEHOLDER
    )
    return attribution, len(turns) >= 2


def compute_stats(goals: list[ExtractedGoal]) -> ExtractionStats:
    """Aggregate phrase and attribution counts over a goal set.

    Goals without any matched trace contribute their phrases to the phrase
    totals but cannot be attributed, so they are excluded from the goal
    counts.
    """
    total_phrases = 0
    unmatched = 0
    interviewer = 0
    stakeholder = 0
    multi_turn = 0
    attributable = 0
    for g in goals:
        total_phrases += len(g.traces)
        unmatched += sum(1 for tr in g.traces if not tr.matched)
        if not g.matched_traces():
            continue
        attributable += 1
        speaker, spans = attribute_goal(g)
        if speaker is Speaker.INTERVIEWER:
            interviewer += 1
        else:
            stakeholder += 1
        if spans:
            multi_turn += 1
    return ExtractionStats(
        total_phrases=total_phrases,
        unmatched_phrases=unmatched,
        interviewer_goals=interviewer,
        stakeholder_goals=stakeholder,
        multi_turn_goals=multi_turn,
        total_goals=attributable,
    )


def distribution(
    goals: list[ExtractedGoal], t: Transcript, partitions: int
) -> list[int]:
    """Count goals per transcript partition, placing each at its earliest match."""
    bins = [0] * partitions
    n = len(t.turns)
    for g in goals:
        matched = g.matched_traces()
        if not matched:
            raise ValueError(f"goal {g.goal_id} has no matched traces")
        earliest = min(tr.turn_index for tr in matched)  # type: ignore[type-var]
        bins[partition_of(earliest, n, partitions) - 1] += 1
    return bins


def goal_to_dict(g: ExtractedGoal) -> dict:
    return {
        "goal_id": g.goal_id,
        "text": g.text,
        "sample_index": g.sample_index,
        "window": list(g.window),
        "traces": [
            {
                "phrase": tr.phrase,
                "matched": tr.matched,
                "turn_index": tr.turn_index,
                "char_offset": tr.char_offset,
                "char_end": tr.char_end,
                "speaker": tr.speaker.value if tr.speaker else None,
            }
            for tr in g.traces
        ],
    }


def goal_from_dict(data: dict) -> ExtractedGoal:
    traces = tuple(
        PhraseTrace(
            phrase=tr["phrase"],
            matched=tr["matched"],
            turn_index=tr["turn_index"],
            char_offset=tr["char_offset"],
            char_end=tr["char_end"],
            speaker=Speaker(tr["speaker"]) if tr["speaker"] else None,
        )
        for tr in data["traces"]
    )
    return ExtractedGoal(
        goal_id=data["goal_id"],
        text=data["text"],
        sample_index=data["sample_index"],
        window=(data["window"][0], data["window"][1]),
        traces=traces,
    )
