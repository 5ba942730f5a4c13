"""Agreement and accuracy metrics over human refinement labels.

Also provides human-to-machine goal matching support: overlap detection via
shared source-text spans and a mapping report.  Judging whether a refinement
is true remains human work; this module only aggregates the judgments.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .extraction import ExtractedGoal


class RefinementTruth(str, Enum):
    TRUE_REFINEMENT = "true"
    FALSE_REFINEMENT = "false"
    EQUIVALENT = "equivalent"


class GoalCategory(str, Enum):
    HIGH_LEVEL = "high-level"
    LOW_LEVEL = "low-level"
    SOFT_GOAL = "soft-goal"
    GOAL_REGRESS = "goal-regress"


@dataclass(frozen=True)
class RefinementLabel:
    """One annotator's verdict on one (parent, child) pair."""

    pair: tuple[str, str]
    declared: bool
    truth: RefinementTruth
    annotator: str
    pair_id: str = ""
    transcript_id: str = ""
    parent_text: str = ""
    child_text: str = ""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        """(TP + TN) / (TP + TN + FP + FN)."""
        if self.total == 0:
            raise ValueError("accuracy undefined for empty counts")
        return (self.tp + self.tn) / self.total


def cohen_kappa(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement between two equally long label lists.

    kappa = (p_o - p_e) / (1 - p_e) with p_o the observed agreement fraction
    and p_e the product-of-marginals expectation.  When both annotators use
    a single shared category (p_e = 1) agreement is perfect by convention.
    """
    if len(a) != len(b):
        raise ValueError(f"label lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("label lists must be non-empty")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    p_e = sum(
        (counts_a[c] / n) * (counts_b[c] / n) for c in set(counts_a) | set(counts_b)
    )
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


_BANDS = [
    (0.20, "slight"),
    (0.40, "fair"),
    (0.60, "moderate"),
    (0.80, "substantial"),
    (1.00, "almost perfect"),
]


def kappa_band(kappa: float) -> str:
    """Descriptive agreement band for a kappa value (Landis-Koch scale)."""
    if not -1.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [-1, 1], got {kappa}")
    if kappa < 0.0:
        return "poor"
    for upper, name in _BANDS:
        if kappa <= upper:
            return name
    return "almost perfect"


def confusion(
    labels: Sequence[RefinementLabel], equivalent_as_true: bool = True
) -> ConfusionCounts:
    """Aggregate labels into confusion counts.

    A declared pair judged a true refinement is a TP, declared-but-false an
    FP, undeclared-but-true an FN, undeclared-and-false a TN.  Equivalent
    verdicts fold into the true side by default; pass
    ``equivalent_as_true=False`` to fold them into the false side.  Count
    equivalents separately with :func:`count_equivalents` when reporting.
    """
    if not labels:
        raise ValueError("no labels to aggregate")
    tp = tn = fp = fn = 0
    for label in labels:
        if label.truth is RefinementTruth.EQUIVALENT:
            is_true = equivalent_as_true
        else:
            is_true = label.truth is RefinementTruth.TRUE_REFINEMENT
        if label.declared and is_true:
            tp += 1
        elif label.declared:
            fp += 1
        elif is_true:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def count_equivalents(labels: Sequence[RefinementLabel]) -> int:
    return sum(1 for label in labels if label.truth is RefinementTruth.EQUIVALENT)


def trace_overlap(machine: ExtractedGoal, human: ExtractedGoal) -> bool:
    """True when any matched phrase spans of the two goals intersect."""
    for a in machine.matched_traces():
        for b in human.matched_traces():
            if a.turn_index != b.turn_index:
                continue
            if max(a.char_offset, b.char_offset) < min(a.char_end, b.char_end):
                return True
    return False


@dataclass(frozen=True)
class MatchReport:
    """How a machine goal set lines up against human-authored goals.

    ``ratio`` is mapped human goals over total human goals; the paper-style
    headline number, labeled as such.  ``suggestions`` lists machine-goal
    candidates (by shared source spans) for every human goal the manual map
    leaves unmapped.
    """

    mapped: int
    unmapped: int
    machine_only: int
    total_human: int
    ratio: float
    suggestions: dict[str, tuple[str, ...]]


def match_report(
    machine_goals: Sequence[ExtractedGoal],
    human_goals: Sequence[ExtractedGoal],
    manual_map: dict[str, str] | None = None,
) -> MatchReport:
    """Summarize a manual human-to-machine goal mapping.

    ``manual_map`` maps human goal ids to machine goal ids.  Entries whose
    target id does not exist are ignored.  The report never invents
    mappings; it only proposes candidates via trace overlap.
    """
    manual_map = manual_map or {}
    machine_by_id = {g.goal_id: g for g in machine_goals}
    mapped_targets = set()
    mapped = 0
    suggestions: dict[str, tuple[str, ...]] = {}
    for human in human_goals:
        target = manual_map.get(human.goal_id)
        if target and target in machine_by_id:
            mapped += 1
            mapped_targets.add(target)
            continue
        candidates = tuple(
            m.goal_id
            for m in machine_goals
            if human.matched_traces() and m.matched_traces() and trace_overlap(m, human)
        )
        suggestions[human.goal_id] = candidates
    total_human = len(human_goals)
    return MatchReport(
        mapped=mapped,
        unmapped=total_human - mapped,
        machine_only=len([g for g in machine_goals if g.goal_id not in mapped_targets]),
        total_human=total_human,
        ratio=mapped / total_human if total_human else 0.0,
        suggestions=suggestions,
    )


LABELS_CSV_COLUMNS = [
    "pair_id",
    "transcript_id",
    "parent_id",
    "parent_text",
    "child_id",
    "child_text",
    "declared",
    "truth",
    "annotator",
]

# Annotator guidance shipped at the top of every labels file.
LABELS_CSV_GUIDANCE = [
    "# Label each row's truth column as: true, false, or equivalent.",
    "# 1. If the parent describes an activity in broader terms than the child, the parent is refined by the child (true).",
    "# 2. If the child is a step in a process described by the parent, the parent is refined by the child (true).",
    "# 3. If the parent describes an environmental action by an agent that the system supports through the child, the parent is refined by the child (true).",
    "# 4. If the two goals describe the same action, with or without an added action or pre-/post-condition, label the pair equivalent.",
]


def write_labels_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """Write a labeling CSV; rows may leave ``truth``/``annotator`` empty."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in LABELS_CSV_GUIDANCE:
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=LABELS_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row.get(col, "") for col in LABELS_CSV_COLUMNS})


def read_labels_csv(path: str | Path) -> list[RefinementLabel]:
    """Read a filled labels CSV, skipping guidance comment lines."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        content_lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(content_lines)
    labels = []
    for i, row in enumerate(reader):
        truth_raw = (row.get("truth") or "").strip().lower()
        if not truth_raw:
            raise ValueError(f"{path}: row {i + 1} has an empty truth column")
        try:
            truth = RefinementTruth(truth_raw)
        except ValueError:
            raise ValueError(f"{path}: row {i + 1}: unknown truth {truth_raw!r}") from None
        declared_raw = (row.get("declared") or "").strip().lower()
        if declared_raw not in ("true", "false"):
            raise ValueError(f"{path}: row {i + 1}: declared must be true or false")
        labels.append(
            RefinementLabel(
                pair=(row.get("parent_id", ""), row.get("child_id", "")),
                declared=declared_raw == "true",
                truth=truth,
                annotator=(row.get("annotator") or "").strip(),
                pair_id=row.get("pair_id", ""),
                transcript_id=row.get("transcript_id", ""),
                parent_text=row.get("parent_text", ""),
                child_text=row.get("child_text", ""),
            )
        )
    return labels
