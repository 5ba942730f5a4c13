"""The restricted goal-declaration code language.

Extracts fenced code from model responses and parses it into statements,
then folds statements into a `GoalGraph`.  The parser recognizes exactly:
goal declarations, the two refinement call forms, implied-goal collection,
comments, blank lines, and re-emissions of the prompt scaffold.  Anything
else is a compile failure.  Nothing is ever executed.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum

from .errors import DslCompileError
from .goal_graph import GoalGraph, GoalNode

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```python[ \t]*\r?\n(.*?)(?:\r?\n)?[ \t]*```", re.DOTALL)

_DECLARE_OPEN_RE = re.compile(r"(g\d+)\s*=\s*Goal\(\s*")
_REFINED_BY_RE = re.compile(r"(g\d+)\s*\.\s*is_refined_by\s*\.\s*append\(\s*(g\d+)\s*\)\s*\Z")
_REFINEMENT_OF_RE = re.compile(r"(g\d+)\s*\.\s*is_refinement_of\(\s*(g\d+)\s*\)\s*\Z")
_IMPLIED_APPEND_RE = re.compile(r"implied_goals\s*\.\s*append\(\s*(g\d+)\s*\)\s*\Z")
_IMPLIED_INIT_RE = re.compile(r"implied_goals\s*=\s*\[\s*\]\s*\Z")
_CLASS_STUB_RE = re.compile(r"class\s+Goal\b.*\Z")

_ESCAPES = {"\\": "\\", '"': '"', "'": "'", "n": "\n", "t": "\t", "r": "\r"}


class StatementKind(Enum):
    DECLARE = "declare"
    REFINED_BY_APPEND = "refined_by_append"
    REFINEMENT_OF = "refinement_of"
    IMPLIED_APPEND = "implied_append"
    SCAFFOLD_IGNORED = "scaffold_ignored"
    COMMENT = "comment"


@dataclass(frozen=True)
class DslStatement:
    kind: StatementKind
    line: int
    subject: str | None = None
    target: str | None = None
    text: str | None = None


def extract_code(response: str) -> str:
    """Return the code inside ```python fences, concatenating multiple blocks."""
    blocks = _FENCE_RE.findall(response)
    if not blocks:
        raise DslCompileError("no ```python fenced code block in response")
    return "\n".join(blocks)


def _split_comment(line: str) -> tuple[str, bool]:
    # Find the first # that is not inside a string literal.
    quote = None
    i = 0
    while i < len(line):
        ch = line[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i], True
        i += 1
    return line, False


def _read_string_literal(s: str, pos: int, line_no: int) -> tuple[str, int]:
    if pos >= len(s) or s[pos] not in "\"'":
        raise DslCompileError("expected a quoted goal text", line_no, s)
    quote = s[pos]
    out = []
    i = pos + 1
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise DslCompileError("unterminated string literal", line_no, s)


def parse(code: str) -> list[DslStatement]:
    """Parse goal-model code line by line into statements.

    Raises `DslCompileError` with the line number and offending text for any
    statement outside the restricted grammar.
    """
    statements: list[DslStatement] = []
    in_class_stub = False
    for line_no, raw_line in enumerate(code.splitlines(), start=1):
        code_part, has_comment = _split_comment(raw_line)
        stripped = code_part.strip()
        if not stripped:
            if has_comment:
                statements.append(DslStatement(StatementKind.COMMENT, line_no))
            continue
        if in_class_stub:
            if code_part[0] in " \t":
                statements.append(DslStatement(StatementKind.SCAFFOLD_IGNORED, line_no))
                continue
            in_class_stub = False
        if _CLASS_STUB_RE.fullmatch(stripped):
            in_class_stub = True
            statements.append(DslStatement(StatementKind.SCAFFOLD_IGNORED, line_no))
            continue
        if _IMPLIED_INIT_RE.fullmatch(stripped):
            statements.append(DslStatement(StatementKind.SCAFFOLD_IGNORED, line_no))
            continue
        m = _DECLARE_OPEN_RE.match(stripped)
        if m:
            text, end = _read_string_literal(stripped, m.end(), line_no)
            if not re.fullmatch(r"\s*\)\s*", stripped[end:]):
                raise DslCompileError("malformed goal declaration", line_no, raw_line)
            statements.append(
                DslStatement(StatementKind.DECLARE, line_no, subject=m.group(1), text=text)
            )
            continue
        m = _REFINED_BY_RE.fullmatch(stripped)
        if m:
            statements.append(
                DslStatement(
                    StatementKind.REFINED_BY_APPEND, line_no, subject=m.group(1), target=m.group(2)
                )
            )
            continue
        m = _REFINEMENT_OF_RE.fullmatch(stripped)
        if m:
            statements.append(
                DslStatement(
                    StatementKind.REFINEMENT_OF, line_no, subject=m.group(1), target=m.group(2)
                )
            )
            continue
        m = _IMPLIED_APPEND_RE.fullmatch(stripped)
        if m:
            statements.append(
                DslStatement(StatementKind.IMPLIED_APPEND, line_no, subject=m.group(1))
            )
            continue
        raise DslCompileError(f"statement not in goal language: {stripped!r}", line_no, raw_line)
    return statements


def build_graph(
    statements: list[DslStatement],
    predeclared: list[tuple[str, str]],
    model_index: int = 0,
) -> GoalGraph:
    """Fold parsed statements into a goal graph.

    Both refinement call forms normalize to a directed parent -> child edge.
    Goals declared in code but absent from ``predeclared`` are treated as
    implied even without an explicit implied-goals append; edges referencing
    undeclared ids and re-declarations that change a goal's text are compile
    failures.
    """
    seen = set()
    for goal_id, _ in predeclared:
        if goal_id in seen:
            raise DslCompileError(f"duplicate predeclared goal id {goal_id}")
        seen.add(goal_id)

    texts: dict[str, str] = {goal_id: text for goal_id, text in predeclared}
    predeclared_ids = set(texts)
    implied: set[str] = set()
    edges: set[tuple[str, str]] = set()

    for st in statements:
        if st.kind is StatementKind.DECLARE:
            assert st.subject is not None and st.text is not None
            if st.subject in texts:
                if texts[st.subject] != st.text:
                    raise DslCompileError(
                        f"goal {st.subject} re-declared with different text", st.line
                    )
            else:
                texts[st.subject] = st.text
                if st.subject not in predeclared_ids:
                    implied.add(st.subject)
                    logger.debug(
                        "goal %s declared in code but not predeclared; marking implied",
                        st.subject,
                    )
        elif st.kind in (StatementKind.REFINED_BY_APPEND, StatementKind.REFINEMENT_OF):
            assert st.subject is not None and st.target is not None
            for goal_id in (st.subject, st.target):
                if goal_id not in texts:
                    raise DslCompileError(f"undeclared goal {goal_id}", st.line)
            if st.kind is StatementKind.REFINED_BY_APPEND:
                edges.add((st.subject, st.target))
            else:
                edges.add((st.target, st.subject))
        elif st.kind is StatementKind.IMPLIED_APPEND:
            assert st.subject is not None
            if st.subject not in texts:
                raise DslCompileError(f"undeclared goal {st.subject}", st.line)
            implied.add(st.subject)

    nodes = {
        goal_id: GoalNode(text=text, implied=goal_id in implied)
        for goal_id, text in texts.items()
    }
    return GoalGraph(nodes=nodes, edges=edges, model_index=model_index)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_code(g: GoalGraph) -> str:
    """Render a graph back to goal-model code.

    Re-parsing the result with the graph's explicit goals predeclared yields
    an identical graph (node set, edge set, implied set).
    """
    lines = []
    implied_ids = []
    for node_id in g.sorted_nodes():
        node = g.nodes[node_id]
        lines.append(f"{node_id} = Goal({_quote(node.text)})")
        if node.implied:
            implied_ids.append(node_id)
    for node_id in implied_ids:
        lines.append(f"implied_goals.append({node_id})")
    for parent, child in g.sorted_edges():
        lines.append(f"{parent}.is_refined_by.append({child})")
    return "\n".join(lines) + "\n"
