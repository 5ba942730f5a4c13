"""Command-line interface for the goal-modeling pipeline.

Each subcommand runs one pipeline stage against a run directory.  Exit code
0 means success; stage failures exit with code 2 and a message on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import GoalforgeError
from .pipeline import PipelineRun, RunConfig


def _common_options(f):
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="JSON config file with run parameters."),
        click.option("--run-dir", "run_dir", type=click.Path(), default="run",
                     show_default=True, help="Directory holding run artifacts."),
        click.option("--seed", "seed", type=int, default=None,
                     help="Override the config seed."),
        click.option("--transcript", "transcript_path", type=click.Path(), default=None,
                     help="Transcript JSON file (ingested when given)."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _build_run(config_path, run_dir, seed, transcript_path) -> PipelineRun:
    config = RunConfig.from_file(config_path) if config_path else RunConfig()
    if seed is not None:
        config.seed = seed
    run = PipelineRun(run_dir, config)
    if transcript_path:
        run.ingest(transcript_path)
    return run


def _stage(fn):
    try:
        fn()
    except GoalforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Extract goals from interview transcripts and build goal models."""


@main.command()
@_common_options
def ingest(config_path, run_dir, seed, transcript_path):
    """Validate a transcript and copy it into the run directory."""
    if not transcript_path:
        click.echo("error: ingest requires --transcript", err=True)
        sys.exit(2)

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        click.echo(f"ingested {run.manifest['transcript_id']} into {run.run_dir}")

    _stage(go)


@main.command()
@_common_options
def extract(config_path, run_dir, seed, transcript_path):
    """Run the goal-extraction prompt over every sample and window."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.extract()
        click.echo(f"wrote {path}")

    _stage(go)


@main.command()
@_common_options
def trace(config_path, run_dir, seed, transcript_path):
    """Trace extracted goals to source phrases and match them to turns."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.trace()
        click.echo(f"wrote {path}")

    _stage(go)


@main.command()
@_common_options
def cluster(config_path, run_dir, seed, transcript_path):
    """Group duplicate goals and sample one representative per cluster."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.cluster()
        click.echo(f"wrote {path}")

    _stage(go)


@main.command()
@_common_options
def generate(config_path, run_dir, seed, transcript_path):
    """Generate goal models from representatives, retrying bad generations."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.generate()
        slots = json.loads(path.read_text(encoding="utf-8"))
        ok = sum(1 for s in slots if s["status"] == "ok")
        click.echo(f"generated {ok}/{len(slots)} valid goal models")

    _stage(go)


@main.command()
@_common_options
@click.option("--edges-per-class", type=int, default=None,
              help="Pairs to sample per declared/undeclared class (default: max balanced).")
def analyze(config_path, run_dir, seed, transcript_path, edges_per_class):
    """Closure math, symmetry detection, edge sampling, and DOT export."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.analyze(edges_per_class=edges_per_class)
        click.echo(f"wrote {path}")

    _stage(go)


@main.command()
@_common_options
@click.option("--labels", "labels_path", type=click.Path(), required=True,
              help="Filled refinement-labels CSV.")
@click.option("--annotator", default=None,
              help="Annotator whose labels form the ground truth.")
@click.option("--human-goals", "human_goals_path", type=click.Path(), default=None,
              help="Human-authored goals JSON for the match report.")
@click.option("--goal-map", "goal_map_path", type=click.Path(), default=None,
              help="Manual human-to-machine goal id map (JSON object).")
def evaluate(config_path, run_dir, seed, transcript_path, labels_path, annotator,
             human_goals_path, goal_map_path):
    """Score filled refinement labels: confusion counts, accuracy, kappa."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        path = run.evaluate(
            labels_path,
            annotator=annotator,
            human_goals_path=human_goals_path,
            goal_map_path=goal_map_path,
        )
        report = json.loads(path.read_text(encoding="utf-8"))
        click.echo(f"accuracy: {report['accuracy_pct']}")
        if report["kappa"]:
            click.echo(
                f"kappa: {report['kappa']['value']:.3f} ({report['kappa']['band']})"
            )
        click.echo(f"wrote {path}")

    _stage(go)


@main.command("export-dot")
@_common_options
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Target directory (default: <run-dir>/dot).")
def export_dot(config_path, run_dir, seed, transcript_path, out_dir):
    """Write DOT files for the generated goal models."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        paths = run.export_dot(out_dir)
        for path in paths:
            click.echo(str(path))

    _stage(go)


@main.command()
@_common_options
def stats(config_path, run_dir, seed, transcript_path):
    """Print extraction statistics and the partition distribution."""

    def go():
        run = _build_run(config_path, run_dir, seed, transcript_path)
        stats_path = run.artifact("stats.json")
        if not stats_path.exists():
            raise GoalforgeError("missing stats.json; run the 'trace' stage first")
        data = json.loads(stats_path.read_text(encoding="utf-8"))
        ext = data["extraction"]
        click.echo(f"total phrases:      {ext['total_phrases']}")
        click.echo(f"unmatched phrases:  {ext['unmatched_phrases']}")
        click.echo(f"trace correctness:  {ext['trace_correctness'] * 100:.1f}%")
        click.echo(f"interviewer goals:  {ext['interviewer_goals']}")
        click.echo(f"stakeholder goals:  {ext['stakeholder_goals']}")
        click.echo(f"multi-turn goals:   {ext['multi_turn_goals']}")
        click.echo(f"total goals:        {ext['total_goals']}")
        dist = data["distribution"]
        click.echo(f"distribution over {dist['partitions']} partitions: {dist['bins']}")

    _stage(go)


if __name__ == "__main__":
    main()
