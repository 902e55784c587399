"""Command-line interface: interactive ask, batch runs, the API server, and
controlled grounding-noise experiments.

All commands default to the bundled demo knowledge base and dataset, so
`kbalign ask "Which team does Yoshi Mura play for?"` works out of the box.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import fixtures
from .aliases import AliasMap, load_aliases
from .errors import AmbiguousReply, KbAlignError
from .evaluation import load_manifest, run_experiment, run_overall
from .gateway import (
    DecodingParams,
    GatewayConfig,
    LmGateway,
    build_backend,
    load_gateway_config,
)
from .kb import KbStore, ingest_table, load_schema
from .orchestrator import PIPELINE_MODES, Engine, EngineConfig


def _build_engine(
    kb: str | None,
    schema: str | None,
    aliases: str | None,
    config: str | None,
    max_rounds: int,
    k: int,
    dataset: str | None = None,
):
    """Assemble store + gateway + engine from CLI options."""
    if dataset:
        bundle = load_manifest(dataset)
        store, alias_map, records = bundle.store, bundle.aliases, bundle.records
    elif kb:
        if not schema:
            raise click.UsageError("--schema is required with --kb")
        fmt = "jsonl" if kb.endswith(".jsonl") else "csv"
        store = KbStore([ingest_table(kb, fmt, load_schema(schema))])
        alias_map = load_aliases(aliases) if aliases else AliasMap()
        records = []
    else:
        bundle = fixtures.load_bundle()
        store, alias_map, records = bundle.store, bundle.aliases, bundle.records
    gateway_config = load_gateway_config(config) if config else GatewayConfig()
    backend = build_backend(gateway_config, store=store, aliases=alias_map)
    gateway = LmGateway(
        backend,
        DecodingParams(
            max_tokens=gateway_config.max_tokens,
            temperature=gateway_config.temperature,
        ),
    )
    engine = Engine(
        store=store,
        gateway=gateway,
        aliases=alias_map,
        config=EngineConfig(default_k=k, max_rounds=max_rounds),
    )
    return engine, records


kb_options = [
    click.option("--kb", default=None, help="Table data file (.csv or .jsonl)."),
    click.option("--schema", default=None, help="Sidecar schema JSON for --kb."),
    click.option("--aliases", default=None, help="Alias pairs JSON."),
    click.option("--config", default=None, help="Gateway config JSON."),
    click.option("--k", default=5, show_default=True, help="Retrieval cap."),
    click.option(
        "--max-rounds", default=1, show_default=True, help="Clarification rounds."
    ),
]


def _apply(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
def main():
    """Grounded question answering over tabular knowledge bases."""


@main.command()
@click.argument("question")
@click.option(
    "--mode",
    default="mixalign",
    show_default=True,
    type=click.Choice(PIPELINE_MODES),
)
@_apply(kb_options)
def ask(question, mode, kb, schema, aliases, config, k, max_rounds):
    """Answer one question, prompting on stdin for clarifications."""
    engine, _ = _build_engine(kb, schema, aliases, config, max_rounds, k)
    try:
        session = engine.start_session(question, mode)
    except KbAlignError as exc:
        raise click.ClickException(str(exc))
    while session.state == "awaiting_clarification":
        turn = session.turns[-1]
        click.echo(f"\n{turn.question_text}")
        if turn.options:
            click.echo(f"  options: {', '.join(turn.options)}")
        reply = click.prompt("your reply")
        try:
            session = engine.submit_clarification(session.session_id, reply)
        except AmbiguousReply as exc:
            click.echo(f"  ({exc}; please pick one)")
    if session.state == "failed":
        raise click.ClickException(session.failure or "session failed")
    result = session.result
    click.echo(f"\nanswer: {result.answer_text}")
    if result.abstained:
        click.echo("  (the model abstained)")
    for grounding in session.candidates.groundings:
        click.echo(f"  evidence: {grounding.text}")


@main.command()
@click.option("--dataset", default=None, help="Dataset manifest JSON.")
@click.option(
    "--mode",
    default="mixalign",
    show_default=True,
    type=click.Choice(PIPELINE_MODES),
)
@click.option(
    "--simulator",
    default="deterministic",
    show_default=True,
    type=click.Choice(["deterministic", "oracle_lm"]),
)
@click.option("--out", default="batch_results.jsonl", show_default=True)
@_apply(kb_options)
def batch(dataset, mode, simulator, out, kb, schema, aliases, config, k, max_rounds):
    """Run a dataset non-interactively with the user simulator."""
    engine, records = _build_engine(kb, schema, aliases, config, max_rounds, k, dataset)
    if not records:
        raise click.UsageError("no records; pass --dataset with a records file")
    summary = engine.run_batch(records, mode, k=k, out_path=out, simulator=simulator)
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--dataset", default=None, help="Dataset manifest JSON.")
@click.option(
    "--modes",
    default="ralm,mixalign",
    show_default=True,
    help="Comma-separated pipeline modes.",
)
@click.option(
    "--counts",
    default="0,2,4",
    show_default=True,
    help="Comma-separated irrelevant-grounding counts.",
)
@click.option("--seed", default=13, show_default=True)
@click.option("--out", "out_dir", default="experiment_out", show_default=True)
@click.option(
    "--simulator",
    default="deterministic",
    show_default=True,
    type=click.Choice(["deterministic", "oracle_lm"]),
)
@click.option(
    "--buckets/--no-buckets",
    default=True,
    help="Emit alignment-degree-bucketed aggregates.",
)
@click.option(
    "--overall/--no-overall",
    default=False,
    help="Also emit overall.csv: one natural-retrieval row per mode.",
)
@_apply(kb_options)
def experiment(
    dataset,
    modes,
    counts,
    seed,
    out_dir,
    simulator,
    buckets,
    overall,
    kb,
    schema,
    aliases,
    config,
    k,
    max_rounds,
):
    """Cross modes with injected distractor counts; write report files."""
    engine, records = _build_engine(kb, schema, aliases, config, max_rounds, k, dataset)
    if not records:
        raise click.UsageError("no records; pass --dataset with a records file")
    mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    count_list = [int(c) for c in counts.split(",") if c.strip()]
    paths = run_experiment(
        engine,
        records,
        mode_list,
        count_list,
        seed,
        out_dir,
        simulator=simulator,
        emit_buckets=buckets,
    )
    if overall:
        paths["overall"] = run_overall(
            engine, records, mode_list, Path(out_dir) / "overall.csv", simulator=simulator
        )
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@_apply(kb_options)
def serve(host, port, kb, schema, aliases, config, k, max_rounds):
    """Start the HTTP JSON API."""
    import uvicorn

    from .service import create_app

    engine, _ = _build_engine(kb, schema, aliases, config, max_rounds, k)
    uvicorn.run(create_app(engine), host=host, port=port)


if __name__ == "__main__":
    main()
