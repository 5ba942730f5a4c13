"""Prompt rendering, chat-completion backends, and embedding backends.

The three prompt templates and two system messages are stored as immutable
module constants; rendering only substitutes slot contents, so rendered
prompts stay byte-identical to the templates everywhere else (pinned by
golden-file tests).  Backends share one ``complete`` entry point: a live
HTTP endpoint speaking the common chat-completions JSON schema, a replay
cassette, a recording wrapper, and deterministic offline mocks.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx
import numpy as np

from .errors import BackendError, CassetteMissError
from .goal_graph import goal_id_key

API_KEY_ENV_VAR = "GOALFORGE_API_KEY"

SYSTEM_MESSAGE_EXTRACTION = (
    "You are a business analyst collecting requirements for a software "
    "application. Your job is to review interview transcripts between an "
    "interviewer who is a business analyst and a stakeholder who is a "
    "prospective user of the application. The interviewer will ask the "
    "stakeholder questions to identify their requirements for the "
    "application."
)

SYSTEM_MESSAGE_MODELING = (
    "You are a business analyst building a goal model of stakeholder goals "
    "for a software application. Goal models are directed, acyclic graphs "
    "in which edges trace from high-level goals to low-level goals through "
    "refinement relationships. High-level goals describe what states "
    "stakeholders want to achieve, maintain or avoid in the system. "
    "Low-level goals describe *how* the system will satisfy high-level "
    "goals, tend to be more specific and describe how the system will "
    "operate. High-level goals describe *why* the system aims to satisfy "
    "low-level goals, tend to be more generic and describe what the "
    "stakeholder aims to accomplish independent of a specific software "
    "application."
)

GENERAL_TERMS_SENTENCE = (
    "Write goals in general terms and do not include references to "
    "applications, products or services in the goal statement."
)

SPECIFIC_TERMS_SENTENCE = (
    "Do not include references to applications, products or services in "
    "the goal statement."
)

PROMPT1_TEMPLATE = (
    "Read the following interview transcript excerpt and respond with any "
    "goals that the speaker expresses. A goal describes a prescriptive "
    "statement of intent that the system should satisfy through the "
    "cooperating of its agents. {generalization_sentence} Only write goals "
    "that can be traced to specific phrases in the speech. Respond with "
    "the goals in a JSON list of strings.\n"
    "{transcript_excerpt}\n"
    "Response:"
)

PROMPT2_TEMPLATE = (
    "Read the following the goals in JSON format and identify the "
    "substrings in the interview transcript excerpt from which the goals "
    'were generated. Respond in JSON using the format {"goal": "goal '
    'statement", "phrases": ["phrase1", "phrase2"]}\n'
    "{transcript_excerpt}\n"
    "{generated_goals}\n"
    "Response: "
)

PROMPT3_TEMPLATE = (
    "Read the following Python code that describes an initial goal model "
    "and complete the code using the following function calls. Before "
    "completing the code, perform the following steps: 1) read all of the "
    "goals and describe what the software application is and does; 2) for "
    "each goal, describe what the goal means in the context of the "
    "application description, including what is and is not intended by the "
    "goal description; 3) identify up to two or three *implied* goals that "
    "were not included in the original goal list and that add missing "
    "context to the original goals; 4) extend the code by adding your "
    "implied goals; and 5) complete the code by reviewing all of the goals "
    "and deciding which goals are refined by other goals. Implied goals "
    "include high-level goals that group related refinements together, and "
    "explain what actions the low-level goals seek to achieve. For each "
    "implied goal that you create, add the goal to the list of implied "
    "goals. Include your justification for each function call in comments. "
    "Do not write code to print the goals. When responding, include the "
    "python code between the start ```python and end ``` tags.\n"
    "1. X.is_refined_by.append(Y) - when the goal X is satisfied by the "
    "goal Y and has the refinement goal Y\n"
    "2. Y.is_refinement_of(X) - when the goal Y satisfies the goal X and "
    "is a refinement of goal X\n"
    "3. implied_goals.append(X) - to collect the implied goals that you "
    "created\n"
    "class Goal: \n"
    "    def __init__(self, text):\n"
    "        self.text = text\n"
    "        self.is_refined_by = []\n"
    "        def is_refinement_of(self, goal):\n"
    "            goal.is_refined_by.append(self)\n"
    "implied_goals = []\n"
    "{goal declarations}"
)

_GOAL_ID_RE = re.compile(r"g\d+\Z")


def render_prompt1(excerpt: str, general_terms: bool = True) -> str:
    """Fill the goal-extraction template with a transcript excerpt."""
    if not excerpt:
        raise ValueError("excerpt must be non-empty")
    sentence = GENERAL_TERMS_SENTENCE if general_terms else SPECIFIC_TERMS_SENTENCE
    return PROMPT1_TEMPLATE.replace("{generalization_sentence}", sentence).replace(
        "{transcript_excerpt}", excerpt
    )


def render_prompt2(excerpt: str, goals_json: str) -> str:
    """Fill the tracing template with an excerpt and a JSON list of goals."""
    if not excerpt:
        raise ValueError("excerpt must be non-empty")
    try:
        goals = json.loads(goals_json)
    except json.JSONDecodeError as exc:
        raise ValueError(f"goals_json is not valid JSON: {exc}") from exc
    if not isinstance(goals, list) or not all(isinstance(g, str) for g in goals):
        raise ValueError("goals_json must be a JSON list of strings")
    return PROMPT2_TEMPLATE.replace("{transcript_excerpt}", excerpt).replace(
        "{generated_goals}", goals_json
    )


def render_prompt3(goal_declarations: Sequence[tuple[str, str]]) -> str:
    """Fill the model-generation template with goal declaration lines.

    Ids must be unique and of the form g<N>; declarations are emitted in
    ascending numeric order, one ``gN = Goal("...")`` per line.
    """
    seen = set()
    for goal_id, _ in goal_declarations:
        if not _GOAL_ID_RE.match(goal_id):
            raise ValueError(f"goal id {goal_id!r} is not of the form g<N>")
        if goal_id in seen:
            raise ValueError(f"duplicate goal id {goal_id}")
        seen.add(goal_id)
    ordered = sorted(goal_declarations, key=lambda d: goal_id_key(d[0]))
    lines = []
    for goal_id, text in ordered:
        escaped = text.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'{goal_id} = Goal("{escaped}")')
    return PROMPT3_TEMPLATE.replace("{goal declarations}", "\n".join(lines))


@dataclass(frozen=True)
class PromptRequest:
    system_message: str
    user_message: str
    temperature: float = 1.0
    sample_index: int = 0

    def __post_init__(self):
        if not self.system_message or not self.user_message:
            raise ValueError("system and user messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


@dataclass(frozen=True)
class CompletionRecord:
    request_digest: str
    response_text: str
    backend_id: str


def request_digest(req: PromptRequest) -> str:
    """Stable hash of (system, user, temperature, sample_index)."""
    payload = json.dumps(
        {
            "system": req.system_message,
            "user": req.user_message,
            "temperature": req.temperature,
            "sample_index": req.sample_index,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class HttpChatBackend:
    """Live chat-completions backend with bounded, jittered retries.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff starting at ``backoff_base`` seconds; other HTTP
    errors fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend_id = f"http:{model}"
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = model
        self._api_key = api_key
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._sleep = sleep
        self._jitter = random.Random(0x5EED)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, req: PromptRequest) -> str:
        key = self._api_key or os.environ.get(API_KEY_ENV_VAR)
        if not key:
            raise BackendError(f"no API key: set {API_KEY_ENV_VAR} or pass api_key")
        body = {
            "model": self._model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system_message},
                {"role": "user", "content": req.user_message},
            ],
        }
        headers = {"Authorization": f"Bearer {key}"}
        last_error = "no attempt made"
        for attempt in range(self._max_attempts):
            try:
                resp = self._client.post(self._url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise BackendError(f"malformed completion response: {exc}") from exc
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                else:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if attempt + 1 < self._max_attempts:
                delay = self._backoff_base * (2**attempt)
                self._sleep(delay + self._jitter.uniform(0, delay / 4))
        raise BackendError(
            f"exhausted {self._max_attempts} attempts against {self._url}: {last_error}"
        )


class ScriptedBackend:
    """Returns canned responses in order; for tests and dry runs."""

    def __init__(self, responses: Sequence[str], repeat_last: bool = False):
        self.backend_id = "scripted"
        self._responses = list(responses)
        self._repeat_last = repeat_last
        self._cursor = 0
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: PromptRequest) -> str:
        with self._lock:
            self.calls += 1
            if self._cursor >= len(self._responses):
                if self._repeat_last and self._responses:
                    return self._responses[-1]
                raise BackendError("scripted backend ran out of responses")
            text = self._responses[self._cursor]
            self._cursor += 1
            return text


class ReplayBackend:
    """Serves responses recorded in a cassette, keyed by request digest."""

    def __init__(self, cassette_path: str | Path):
        self.backend_id = "replay"
        self._responses: dict[str, str] = {}
        path = Path(cassette_path)
        if not path.exists():
            raise BackendError(f"cassette not found: {path}")
        for record in json.loads(path.read_text(encoding="utf-8")):
            self._responses[record["request_digest"]] = record["response_text"]

    def complete(self, req: PromptRequest) -> str:
        digest = request_digest(req)
        if digest not in self._responses:
            raise CassetteMissError(digest)
        return self._responses[digest]


class RecordingBackend:
    """Wraps another backend and appends every exchange to a cassette file."""

    def __init__(self, inner, cassette_path: str | Path):
        self.backend_id = f"recording:{inner.backend_id}"
        self._inner = inner
        self._path = Path(cassette_path)
        self._lock = threading.Lock()
        self._records: list[CompletionRecord] = []
        if self._path.exists():
            self._records = [
                CompletionRecord(**entry)
                for entry in json.loads(self._path.read_text(encoding="utf-8"))
            ]

    def complete(self, req: PromptRequest) -> str:
        text = self._inner.complete(req)
        record = CompletionRecord(
            request_digest=request_digest(req),
            response_text=text,
            backend_id=self._inner.backend_id,
        )
        with self._lock:
            self._records.append(record)
            payload = [
                {
                    "request_digest": r.request_digest,
                    "response_text": r.response_text,
                    "backend_id": r.backend_id,
                }
                for r in self._records
            ]
            self._path.write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return text


_P1_PREFIX = "Read the following interview transcript excerpt"
_P2_PREFIX = "Read the following the goals in JSON format"
_P3_PREFIX = "Read the following Python code"

_SENTENCE_RE = re.compile(r"(.+?[.!?])(?:\s|$)")
_DECLARATION_RE = re.compile(r'^g(\d+) = Goal\("((?:[^"\\]|\\.)*)"\)$', re.MULTILINE)

_GOAL_LEAD_INS = (
    "yes, ",
    "no, ",
    "i want to ",
    "i need to ",
    "i would like to ",
    "i like to ",
    "the app should ",
    "the system should ",
    "i want ",
    "i need ",
    "i ",
)


def _first_sentence(text: str) -> str:
    m = _SENTENCE_RE.match(text.strip())
    return m.group(1) if m else text.strip()


def _goal_from_sentence(sentence: str) -> str:
    # Rewrite stakeholder speech into an imperative goal-like statement.
    statement = sentence
    changed = True
    while changed:
        changed = False
        for lead in _GOAL_LEAD_INS:
            if statement.lower().startswith(lead):
                statement = statement[len(lead) :]
                changed = True
    statement = statement.rstrip(".!?")
    return statement[:1].upper() + statement[1:] if statement else sentence


class DeterministicMockBackend:
    """Offline stand-in for the chat model.

    Recognizes the three prompt templates and fabricates plausible,
    fully reproducible responses: goal lists quoting stakeholder speech,
    trace objects whose phrases are verbatim excerpt substrings, and fenced
    goal-model code that is always a valid DAG.  All variation is derived
    from the request digest, never from global randomness.
    """

    backend_id = "mock"

    def complete(self, req: PromptRequest) -> str:
        digest = request_digest(req)
        salt = int(digest[:16], 16)
        if req.user_message.startswith(_P1_PREFIX):
            return self._extraction_response(req.user_message)
        if req.user_message.startswith(_P2_PREFIX):
            return self._tracing_response(req.user_message, salt)
        if req.user_message.startswith(_P3_PREFIX):
            return self._model_response(req.user_message, salt)
        return f"mock:{digest[:12]}"

    @staticmethod
    def _excerpt_lines(user_message: str, trailing: int) -> list[str]:
        # Template shape: one instruction line, excerpt lines, then the
        # trailing slot/response lines.
        lines = user_message.split("\n")
        return lines[1 : len(lines) - trailing]

    def _extraction_response(self, user_message: str) -> str:
        goals = []
        for line in self._excerpt_lines(user_message, trailing=1):
            if line.startswith("S: "):
                goals.append(_goal_from_sentence(_first_sentence(line[3:])))
        return "Here are the goals.\n```json\n" + json.dumps(goals) + "\n```"

    def _tracing_response(self, user_message: str, salt: int) -> str:
        lines = self._excerpt_lines(user_message, trailing=2)
        goals_json = user_message.split("\n")[-2]
        goals = json.loads(goals_json)
        payloads = [line[3:] for line in lines if len(line) > 3]
        sources = {}
        for payload in payloads:
            sentence = _first_sentence(payload)
            sources.setdefault(_goal_from_sentence(sentence), sentence)
        results = []
        for i, goal in enumerate(goals):
            phrase = sources.get(goal)
            if phrase is None:
                for payload in payloads:
                    if goal in payload:
                        phrase = goal
                        break
            if phrase is None and payloads:
                phrase = _first_sentence(payloads[0])
            phrases = [phrase] if phrase else []
            if i == 0 and salt % 5 == 0:
                phrases.append("a recollection that appears nowhere in the conversation")
            results.append({"goal": goal, "phrases": phrases})
        return json.dumps(results)

    def _model_response(self, user_message: str, salt: int) -> str:
        declared = [
            (int(num), text) for num, text in _DECLARATION_RE.findall(user_message)
        ]
        declared.sort()
        code = [f'g{num} = Goal("{text}")' for num, text in declared]
        next_id = (declared[-1][0] + 1) if declared else 0
        implied = f"g{next_id}"
        code.append("# Implied Goals")
        code.append(f'{implied} = Goal("Make everyday tasks quicker to finish")')
        code.append(f"implied_goals.append({implied})")
        code.append("# Refinements")
        ids = [f"g{num}" for num, _ in declared]
        for i in range(len(ids) - 1):
            if not (salt >> i) & 1:
                continue
            a, b = ids[i], ids[i + 1]
            if (salt >> (i + 16)) & 1:
                code.append(f"{a}.is_refined_by.append({b})  # the broader aim comes first")
            else:
                code.append(f"{a}.is_refinement_of({b})  # reading the pair the other way")
        for i, goal_id in enumerate(ids):
            if i == 0 or (salt >> (i + 32)) & 1:
                code.append(f"{implied}.is_refined_by.append({goal_id})")
        plan = (
            "**1. Application description:** The stakeholder wants routine "
            "tasks to take less effort.\n\n"
        )
        return plan + "```python\n" + "\n".join(code) + "\n```\n"


def complete_many(backend, requests: Sequence[PromptRequest], parallelism: int = 1) -> list[str]:
    """Resolve requests through a backend, preserving input order.

    With ``parallelism`` above 1 the calls fan out over a thread pool; the
    result order still matches the request order, so downstream processing
    is independent of scheduling.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism == 1 or len(requests) <= 1:
        return [backend.complete(req) for req in requests]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(backend.complete, requests))


class HashEmbedder:
    """Deterministic bag-of-tokens embedding for offline runs.

    Tokens are hashed into signed buckets, the vector is L2-normalized and
    then scaled; equal strings always map to equal vectors and the scale
    keeps token-disjoint texts farther apart than the default clustering
    threshold.  ``calls`` counts batch requests for test inspection.
    """

    def __init__(self, dim: int = 384, scale: float = 1.25, batch_size: int = 64):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.scale = scale
        self.batch_size = batch_size
        self.calls = 0

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in re.findall(r"[a-z0-9']+", text.lower()):
            h = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(h[:4], "big") % self.dim
            sign = 1.0 if h[4] & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm * self.scale

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls += 1
        return [self._embed_one(t) for t in texts]


class SentenceTransformerEmbedder:
    """Real sentence-transformer embeddings; requires the optional extra."""

    def __init__(self, model_name: str = "paraphrase-MiniLM-L6-v2", batch_size: int = 64):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise BackendError(
                "sentence-transformers is not installed; "
                "install goalforge[embeddings] or use the hash embedder"
            ) from exc
        self._model = SentenceTransformer(model_name)
        self.batch_size = batch_size
        self.calls = 0

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:  # pragma: no cover
        self.calls += 1
        return [np.asarray(v, dtype=np.float64) for v in self._model.encode(list(texts))]


def embed(embedder, texts: Sequence[str]) -> list[np.ndarray]:
    """Embed texts in backend-sized batches; one equal-length vector per text."""
    if any(not t for t in texts):
        raise ValueError("texts must be non-empty")
    batch_size = getattr(embedder, "batch_size", 64)
    vectors: list[np.ndarray] = []
    for start in range(0, len(texts), batch_size):
        vectors.extend(embedder.embed_batch(texts[start : start + batch_size]))
    if len(vectors) != len(texts):
        raise BackendError(
            f"embedder returned {len(vectors)} vectors for {len(texts)} texts"
        )
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise BackendError(f"embedding dimension mismatch across batch: {sorted(dims)}")
    return vectors
