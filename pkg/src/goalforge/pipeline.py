"""End-to-end pipeline orchestration.

Each stage reads its inputs from the run directory, writes plain JSON/CSV
artifacts back into it, and records paths plus content digests in the run
manifest.  Re-running a stage whose inputs, config, and outputs are
unchanged is a no-op.  All ordering is derived from sorted collections and
seeded RNGs, so a fixed seed plus a deterministic backend reproduces every
artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import clustering, evaluation, extraction, goal_dsl, goal_graph, llm_gateway
from .corpus import Transcript, excerpt_text, load_transcript, transcript_to_dict, windows
from .errors import DslCompileError, GoalforgeError, ResponseFormatError
from .llm_gateway import PromptRequest

logger = logging.getLogger(__name__)


@dataclass
class BackendSettings:
    kind: str = "mock"  # mock | http | replay
    model: str = "gpt-4o-2024-08-06"
    base_url: str = "https://api.openai.com/v1"
    cassette: str | None = None
    record: bool = False
    parallelism: int = 1
    max_attempts: int = 5
    backoff_base: float = 1.0


@dataclass
class EmbeddingSettings:
    kind: str = "hash"  # hash | sentence-transformer
    dim: int = 384
    scale: float = 1.25
    batch_size: int = 64


@dataclass
class RunConfig:
    """Pipeline parameters; defaults follow the evaluated configuration."""

    window_length: int | None = 4  # None means whole-transcript windows
    window_step: int = 2
    samples: int = 10
    models_per_goalset: int = 10
    temperature: float = 1.0
    clustering_threshold: float = 1.5
    general_terms: bool = True
    max_generation_attempts: int = 5
    seed: int = 0
    partitions: int = 10
    cosine_floor: float = 0.6
    resample_mixed_clusters: bool = False
    embedding_model: str = "paraphrase-MiniLM-L6-v2"
    backend: BackendSettings = field(default_factory=BackendSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)

    def __post_init__(self):
        counts = {
            "window_step": self.window_step,
            "samples": self.samples,
            "models_per_goalset": self.models_per_goalset,
            "max_generation_attempts": self.max_generation_attempts,
            "partitions": self.partitions,
        }
        if self.window_length is not None:
            counts["window_length"] = self.window_length
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.clustering_threshold <= 0:
            raise ValueError("clustering_threshold must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "window_length" in data:
            data["window_length"] = _parse_window_length(data["window_length"])
        if "backend" in data:
            data["backend"] = BackendSettings(**data["backend"])
        if "embedding" in data:
            data["embedding"] = EmbeddingSettings(**data["embedding"])
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _parse_window_length(value) -> int | None:
    if value is None or value == "whole":
        return None
    if isinstance(value, float):
        if value == float("inf"):
            return None
        if value.is_integer():
            return int(value)
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    raise ValueError(f"window_length must be a positive int, null, or \"whole\"; got {value!r}")


def make_backend(cfg: RunConfig, run_dir: Path):
    settings = cfg.backend
    cassette = None
    if settings.cassette:
        cassette = Path(settings.cassette)
        if not cassette.is_absolute():
            cassette = run_dir / cassette
    if settings.kind == "mock":
        backend = llm_gateway.DeterministicMockBackend()
    elif settings.kind == "http":
        backend = llm_gateway.HttpChatBackend(
            base_url=settings.base_url,
            model=settings.model,
            max_attempts=settings.max_attempts,
            backoff_base=settings.backoff_base,
        )
    elif settings.kind == "replay":
        if cassette is None:
            raise GoalforgeError("replay backend requires backend.cassette in config")
        return llm_gateway.ReplayBackend(cassette)
    else:
        raise GoalforgeError(f"unknown backend kind {settings.kind!r}")
    if settings.record:
        if cassette is None:
            raise GoalforgeError("recording requires backend.cassette in config")
        backend = llm_gateway.RecordingBackend(backend, cassette)
    return backend


def make_embedder(cfg: RunConfig):
    settings = cfg.embedding
    if settings.kind == "hash":
        return llm_gateway.HashEmbedder(
            dim=settings.dim, scale=settings.scale, batch_size=settings.batch_size
        )
    if settings.kind == "sentence-transformer":
        return llm_gateway.SentenceTransformerEmbedder(
            model_name=cfg.embedding_model, batch_size=settings.batch_size
        )
    raise GoalforgeError(f"unknown embedding kind {settings.kind!r}")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


class PipelineRun:
    """A pipeline execution rooted at one run directory."""

    MANIFEST_NAME = "manifest.json"

    def __init__(self, run_dir: str | Path, config: RunConfig, backend=None, embedder=None):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._backend = backend
        self._embedder = embedder
        self.manifest = self._load_manifest()

    # -- manifest & stage bookkeeping ------------------------------------

    def _load_manifest(self) -> dict:
        path = self.run_dir / self.MANIFEST_NAME
        if path.exists():
            return _read_json(path)
        return {"run_id": "", "transcript_id": "", "config": self.config.to_dict(), "stages": {}}

    def _save_manifest(self) -> None:
        _write_json(self.run_dir / self.MANIFEST_NAME, self.manifest)

    @property
    def backend(self):
        if self._backend is None:
            self._backend = make_backend(self.config, self.run_dir)
        return self._backend

    @property
    def embedder(self):
        if self._embedder is None:
            self._embedder = make_embedder(self.config)
        return self._embedder

    def artifact(self, rel_path: str) -> Path:
        return self.run_dir / rel_path

    def _input_digest(self, stage: str, input_paths: list[Path]) -> str:
        payload = {
            "stage": stage,
            "config": self.config.to_dict(),
            "inputs": {p.name: _sha256_file(p) for p in input_paths},
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")
        ).hexdigest()

    def _stage_is_current(self, stage: str, input_digest: str) -> bool:
        record = self.manifest["stages"].get(stage)
        if not record or record["input_digest"] != input_digest:
            return False
        for entry in record["artifacts"].values():
            path = self.run_dir / entry["path"]
            if not path.exists() or _sha256_file(path) != entry["sha256"]:
                return False
        return True

    def _record_stage(self, stage: str, input_digest: str, artifacts: dict[str, Path]) -> None:
        self.manifest["stages"][stage] = {
            "input_digest": input_digest,
            "artifacts": {
                name: {
                    "path": str(path.relative_to(self.run_dir)),
                    "sha256": _sha256_file(path),
                }
                for name, path in sorted(artifacts.items())
            },
            "completed_at": datetime.now(timezone.utc).isoformat(),
        }
        self._save_manifest()

    def _require(self, rel_path: str, produced_by: str) -> Path:
        path = self.artifact(rel_path)
        if not path.exists():
            raise GoalforgeError(
                f"missing artifact {rel_path}; run the {produced_by!r} stage first"
            )
        return path

    # -- prompt plumbing ---------------------------------------------------

    def _ask_with_retry(self, build_request, parse):
        """Issue a request; on a malformed response re-ask once, then fail."""
        first = self.backend.complete(build_request(0))
        try:
            return parse(first)
        except ResponseFormatError:
            logger.warning("malformed response; re-asking once")
        second = self.backend.complete(build_request(1))
        return parse(second)

    # -- stages ------------------------------------------------------------

    def ingest(self, transcript_path: str | Path) -> Transcript:
        """Validate and normalize a transcript into the run directory."""
        transcript = load_transcript(transcript_path)
        stage_digest = self._input_digest("ingest", [Path(transcript_path)])
        out = self.artifact("transcript.json")
        if self._stage_is_current("ingest", stage_digest):
            return transcript
        _write_json(out, transcript_to_dict(transcript))
        config_digest = hashlib.sha256(
            json.dumps(self.config.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()
        self.manifest["run_id"] = hashlib.sha256(
            f"{transcript.id}:{config_digest}".encode("utf-8")
        ).hexdigest()[:12]
        self.manifest["transcript_id"] = transcript.id
        self._record_stage("ingest", stage_digest, {"transcript": out})
        return transcript

    def _load_transcript(self) -> Transcript:
        return load_transcript(self._require("transcript.json", "ingest"))

    def _windows(self, transcript: Transcript):
        length = self.config.window_length
        if length is None:
            length = len(transcript.turns)
        return windows(transcript, length, self.config.window_step)

    def extract(self) -> Path:
        """Run the goal-extraction prompt for every sample x window."""
        transcript_path = self._require("transcript.json", "ingest")
        stage_digest = self._input_digest("extract", [transcript_path])
        out = self.artifact("extract_raw.json")
        if self._stage_is_current("extract", stage_digest):
            return out
        transcript = self._load_transcript()
        wins = self._windows(transcript)
        tasks = [(s, w) for s in range(self.config.samples) for w in wins]

        requests = [
            PromptRequest(
                system_message=llm_gateway.SYSTEM_MESSAGE_EXTRACTION,
                user_message=llm_gateway.render_prompt1(
                    excerpt_text(w), self.config.general_terms
                ),
                temperature=self.config.temperature,
                sample_index=s * 2,
            )
            for s, w in tasks
        ]
        responses = llm_gateway.complete_many(
            self.backend, requests, self.config.backend.parallelism
        )

        entries = []
        for i, ((s, w), response) in enumerate(zip(tasks, responses)):
            try:
                goals = extraction.parse_goal_response(response)
            except ResponseFormatError:
                logger.warning(
                    "sample %d window [%d,%d): malformed goal list; re-asking once",
                    s,
                    w.start_turn,
                    w.end_turn,
                )
                retry = dataclasses.replace(requests[i], sample_index=s * 2 + 1)
                goals = extraction.parse_goal_response(self.backend.complete(retry))
            entries.append(
                {
                    "sample_index": s,
                    "window": [w.start_turn, w.end_turn],
                    "goals": goals,
                }
            )
        _write_json(out, entries)
        self._record_stage("extract", stage_digest, {"extract_raw": out})
        return out

    def trace(self) -> Path:
        """Trace extracted goals to source phrases and match them in the turns."""
        transcript_path = self._require("transcript.json", "ingest")
        raw_path = self._require("extract_raw.json", "extract")
        stage_digest = self._input_digest("trace", [transcript_path, raw_path])
        goals_out = self.artifact("goals.json")
        stats_out = self.artifact("stats.json")
        if self._stage_is_current("trace", stage_digest):
            return goals_out
        transcript = self._load_transcript()
        entries = _read_json(raw_path)

        goals: list[extraction.ExtractedGoal] = []
        counter = 0
        for entry in entries:
            if not entry["goals"]:
                continue
            start, end = entry["window"]
            window = [w for w in self._windows(transcript) if w.start_turn == start][0]
            goals_json = json.dumps(entry["goals"])
            sample = entry["sample_index"]

            def build(attempt: int, _excerpt=excerpt_text(window), _json=goals_json, _s=sample):
                return PromptRequest(
                    system_message=llm_gateway.SYSTEM_MESSAGE_EXTRACTION,
                    user_message=llm_gateway.render_prompt2(_excerpt, _json),
                    temperature=self.config.temperature,
                    sample_index=_s * 2 + attempt,
                )

            pairs = self._ask_with_retry(build, extraction.parse_trace_response)
            for goal_text, phrases in pairs:
                traces = tuple(
                    extraction.match_phrase(transcript, p) for p in phrases if p.strip()
                )
                goals.append(
                    extraction.ExtractedGoal(
                        goal_id=f"g{counter}",
                        text=goal_text,
                        sample_index=sample,
                        window=(start, end),
                        traces=traces,
                    )
                )
                counter += 1

        _write_json(goals_out, [extraction.goal_to_dict(g) for g in goals])
        stats = extraction.compute_stats(goals)
        traced = [g for g in goals if g.matched_traces()]
        bins = extraction.distribution(traced, transcript, self.config.partitions)
        _write_json(
            stats_out,
            {
                "extraction": {
                    "total_phrases": stats.total_phrases,
                    "unmatched_phrases": stats.unmatched_phrases,
                    "trace_correctness": stats.trace_correctness,
                    "interviewer_goals": stats.interviewer_goals,
                    "stakeholder_goals": stats.stakeholder_goals,
                    "multi_turn_goals": stats.multi_turn_goals,
                    "total_goals": stats.total_goals,
                },
                "distribution": {
                    "partitions": self.config.partitions,
                    "bins": bins,
                    "counted_goals": len(traced),
                    "untraced_goals": len(goals) - len(traced),
                },
            },
        )
        self._record_stage("trace", stage_digest, {"goals": goals_out, "stats": stats_out})
        return goals_out

    def cluster(self) -> Path:
        """Group duplicate goals and sample representatives with final ids."""
        goals_path = self._require("goals.json", "trace")
        stage_digest = self._input_digest("cluster", [goals_path])
        clusters_out = self.artifact("clusters.json")
        reps_out = self.artifact("representatives.json")
        if self._stage_is_current("cluster", stage_digest):
            return reps_out
        goals = [extraction.goal_from_dict(d) for d in _read_json(goals_path)]
        if not goals:
            raise GoalforgeError("no goals to cluster; extraction produced nothing")
        vectors = llm_gateway.embed(self.embedder, [g.text for g in goals])
        items = [
            clustering.EmbeddedGoal(goal=g, vector=v) for g, v in zip(goals, vectors)
        ]
        clusters = clustering.cluster(items, self.config.clustering_threshold)
        clustering.sample_representatives(
            clusters, seed=f"{self.config.seed}/representatives"
        )
        chosen: list[extraction.ExtractedGoal] = []
        for i, c in enumerate(clusters):
            if self.config.resample_mixed_clusters and len(c.members) >= 2:
                chosen.extend(
                    clustering.resample_mixed(
                        c, self.config.cosine_floor, seed=f"{self.config.seed}/resample/{i}"
                    )
                )
            else:
                chosen.append(c.representative.goal)

        extraction_order = lambda g: int(g.goal_id[1:])
        chosen.sort(key=extraction_order)
        representatives = [
            {"id": f"g{i}", "text": g.text, "source_goal_id": g.goal_id}
            for i, g in enumerate(chosen)
        ]
        _write_json(reps_out, representatives)
        _write_json(
            clusters_out,
            {
                "threshold": self.config.clustering_threshold,
                "clusters": [
                    {
                        "cluster_id": i,
                        "member_goal_ids": [m.goal.goal_id for m in c.members],
                        "representative_goal_id": c.representative.goal.goal_id,
                        "merge_height": c.merge_height,
                    }
                    for i, c in enumerate(clusters)
                ],
            },
        )
        self._record_stage(
            "cluster", stage_digest, {"clusters": clusters_out, "representatives": reps_out}
        )
        return reps_out

    def generate(self) -> Path:
        """Generate goal models, re-asking on compile failures and cycles."""
        reps_path = self._require("representatives.json", "cluster")
        stage_digest = self._input_digest("generate", [reps_path])
        out = self.artifact("generation.json")
        if self._stage_is_current("generate", stage_digest):
            return out
        declarations = [(r["id"], r["text"]) for r in _read_json(reps_path)]
        if not declarations:
            raise GoalforgeError("no representatives to model; run cluster first")
        prompt = llm_gateway.render_prompt3(declarations)
        max_attempts = self.config.max_generation_attempts

        artifacts: dict[str, Path] = {}
        slots = []
        for m in range(self.config.models_per_goalset):
            attempts = []
            graph = None
            for attempt in range(max_attempts):
                req = PromptRequest(
                    system_message=llm_gateway.SYSTEM_MESSAGE_MODELING,
                    user_message=prompt,
                    temperature=self.config.temperature,
                    sample_index=m * max_attempts + attempt,
                )
                response = self.backend.complete(req)
                response_path = self.artifact(
                    f"responses/model_{m:02d}_attempt_{attempt + 1}.txt"
                )
                response_path.parent.mkdir(parents=True, exist_ok=True)
                response_path.write_text(response, encoding="utf-8")
                artifacts[f"response:{m:02d}:{attempt + 1}"] = response_path
                try:
                    statements = goal_dsl.parse(goal_dsl.extract_code(response))
                    candidate = goal_dsl.build_graph(statements, declarations, model_index=m)
                except DslCompileError as exc:
                    attempts.append(
                        {"attempt": attempt + 1, "outcome": "compile-failure", "detail": str(exc)}
                    )
                    logger.info("model %d attempt %d: compile failure: %s", m, attempt + 1, exc)
                    continue
                cycle = goal_graph.find_cycle(candidate)
                if cycle is not None:
                    attempts.append(
                        {
                            "attempt": attempt + 1,
                            "outcome": "cycle",
                            "detail": " -> ".join(cycle),
                        }
                    )
                    logger.info("model %d attempt %d: cycle %s", m, attempt + 1, cycle)
                    continue
                attempts.append({"attempt": attempt + 1, "outcome": "ok", "detail": ""})
                graph = candidate
                break
            if graph is not None:
                graph_path = self.artifact(f"graphs/model_{m:02d}.json")
                _write_json(graph_path, goal_graph.graph_to_dict(graph))
                artifacts[f"graph:{m:02d}"] = graph_path
                slots.append(
                    {
                        "model_index": m,
                        "status": "ok",
                        "attempts": attempts,
                        "graph": f"graphs/model_{m:02d}.json",
                    }
                )
            else:
                slots.append(
                    {"model_index": m, "status": "failed", "attempts": attempts, "graph": None}
                )
        _write_json(out, slots)
        artifacts["generation"] = out
        self._record_stage("generate", stage_digest, artifacts)
        return out

    def load_graphs(self) -> list[goal_graph.GoalGraph]:
        """Load the successfully generated graphs recorded by the generate stage."""
        gen_path = self._require("generation.json", "generate")
        graphs = []
        for slot in _read_json(gen_path):
            if slot["status"] != "ok":
                continue
            graphs.append(goal_graph.graph_from_dict(_read_json(self.artifact(slot["graph"]))))
        return graphs

    def analyze(self, edges_per_class: int | None = None) -> Path:
        """Closure/pair accounting, symmetry detection, edge sampling, DOT export."""
        gen_path = self._require("generation.json", "generate")
        inputs = [gen_path] + [
            self.artifact(slot["graph"])
            for slot in _read_json(gen_path)
            if slot["status"] == "ok"
        ]
        stage_digest = self._input_digest(f"analyze:{edges_per_class}", inputs)
        out = self.artifact("analysis.json")
        if self._stage_is_current("analyze", stage_digest):
            return out
        graphs = self.load_graphs()
        if not graphs:
            raise GoalforgeError("no valid graphs to analyze")

        artifacts: dict[str, Path] = {}
        per_model = []
        for g in graphs:
            closure_edges = goal_graph.closure(g)
            undeclared_pairs = goal_graph.undeclared(g)
            n = len(g.nodes)
            per_model.append(
                {
                    "model_index": g.model_index,
                    "nodes": n,
                    "declared_edges": len(g.edges),
                    "closure_edges": len(closure_edges),
                    "undeclared_pairs": len(undeclared_pairs),
                    "pair_count": goal_graph.pair_count(n),
                    "identity_ok": len(closure_edges) + len(undeclared_pairs)
                    == goal_graph.pair_count(n),
                }
            )
            dot_path = self.artifact(f"dot/model_{g.model_index:02d}.dot")
            dot_path.parent.mkdir(parents=True, exist_ok=True)
            dot_path.write_text(
                goal_graph.export_dot(g, name=f"model_{g.model_index}"), encoding="utf-8"
            )
            artifacts[f"dot:{g.model_index:02d}"] = dot_path

        unified = goal_graph.unify_implied_ids(graphs)
        symmetric = goal_graph.symmetric_relations(unified)

        declared_pool = set()
        undeclared_pool = set()
        for g in unified:
            declared_pool |= goal_graph.closure(g)
            undeclared_pool |= goal_graph.undeclared(g)
        k = edges_per_class
        if k is None:
            k = min(len(declared_pool), len(undeclared_pool))
        edge_sample_info = None
        if k and k >= 1:
            sample = goal_graph.sample_edges(unified, k, seed=self.config.seed)
            texts = {}
            for g in unified:
                for node_id, node in g.nodes.items():
                    texts.setdefault(node_id, node.text)
            rows = []
            for i, (parent, child, declared) in enumerate(sample.pairs):
                rows.append(
                    {
                        "pair_id": f"{self.manifest.get('run_id') or 'run'}-{i:04d}",
                        "transcript_id": self.manifest.get("transcript_id", ""),
                        "parent_id": parent,
                        "parent_text": texts.get(parent, ""),
                        "child_id": child,
                        "child_text": texts.get(child, ""),
                        "declared": "true" if declared else "false",
                        "truth": "",
                        "annotator": "",
                    }
                )
            sample_path = self.artifact("edge_sample.csv")
            evaluation.write_labels_csv(sample_path, rows)
            artifacts["edge_sample"] = sample_path
            edge_sample_info = {"per_class": k, "path": "edge_sample.csv"}

        _write_json(
            out,
            {
                "models_analyzed": len(graphs),
                "per_model": per_model,
                "symmetric_relations": [
                    {
                        "pair": list(rel.pair),
                        "forward_models": list(rel.forward_models),
                        "reverse_models": list(rel.reverse_models),
                    }
                    for rel in symmetric
                ],
                "symmetric_count": len(symmetric),
                "edge_sample": edge_sample_info,
            },
        )
        artifacts["analysis"] = out
        self._record_stage("analyze", stage_digest, artifacts)
        return out

    def export_dot(self, out_dir: str | Path | None = None) -> list[Path]:
        """Write DOT files for every valid generated graph."""
        graphs = self.load_graphs()
        target = Path(out_dir) if out_dir else self.artifact("dot")
        target.mkdir(parents=True, exist_ok=True)
        paths = []
        for g in graphs:
            path = target / f"model_{g.model_index:02d}.dot"
            path.write_text(goal_graph.export_dot(g, name=f"model_{g.model_index}"), encoding="utf-8")
            paths.append(path)
        return paths

    def evaluate(
        self,
        labels_path: str | Path,
        annotator: str | None = None,
        human_goals_path: str | Path | None = None,
        goal_map_path: str | Path | None = None,
    ) -> Path:
        """Score filled refinement labels; optionally report human-goal overlap."""
        labels = evaluation.read_labels_csv(labels_path)
        if not labels:
            raise GoalforgeError(f"no labels in {labels_path}")
        annotators = sorted({label.annotator for label in labels})

        kappa_info = None
        if len(annotators) >= 2:
            first, second = annotators[0], annotators[1]
            by_pair: dict[str, dict[str, evaluation.RefinementLabel]] = {}
            for label in labels:
                by_pair.setdefault(label.pair_id, {})[label.annotator] = label
            shared = sorted(
                pid for pid, per in by_pair.items() if first in per and second in per
            )
            if shared:
                a = [by_pair[pid][first].truth for pid in shared]
                b = [by_pair[pid][second].truth for pid in shared]
                value = evaluation.cohen_kappa(a, b)
                kappa_info = {
                    "annotators": [first, second],
                    "pairs": len(shared),
                    "value": value,
                    "band": evaluation.kappa_band(value),
                }

        if annotator is None:
            if len(annotators) > 1:
                raise GoalforgeError(
                    f"labels carry multiple annotators {annotators}; pass --annotator "
                    "to choose whose labels form the ground truth"
                )
            annotator = annotators[0]
        ground_truth = [label for label in labels if label.annotator == annotator]
        if not ground_truth:
            raise GoalforgeError(f"no labels by annotator {annotator!r}")
        counts = evaluation.confusion(ground_truth)

        match_info = None
        if human_goals_path:
            machine_goals = [
                extraction.goal_from_dict(d)
                for d in _read_json(self._require("goals.json", "trace"))
            ]
            human_goals = [
                extraction.goal_from_dict(d) for d in _read_json(Path(human_goals_path))
            ]
            manual_map = _read_json(Path(goal_map_path)) if goal_map_path else {}
            report = evaluation.match_report(machine_goals, human_goals, manual_map)
            match_info = {
                "mapped": report.mapped,
                "unmapped": report.unmapped,
                "machine_only": report.machine_only,
                "total_human": report.total_human,
                "mapped_over_total_human": report.ratio,
                "suggestions": {k: list(v) for k, v in sorted(report.suggestions.items())},
            }

        out = self.artifact("evaluation.json")
        _write_json(
            out,
            {
                "annotator": annotator,
                "confusion": {
                    "tp": counts.tp,
                    "tn": counts.tn,
                    "fp": counts.fp,
                    "fn": counts.fn,
                },
                "accuracy": counts.accuracy,
                "accuracy_pct": f"{counts.accuracy * 100:.1f}%",
                "equivalent_labels": evaluation.count_equivalents(ground_truth),
                "kappa": kappa_info,
                "match_report": match_info,
            },
        )
        return out
