"""Command line entry point: ingest, datagen, train, simulate, eval, serve, chat."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import datagen as dg
from .corpus import AnnotatedCorpus, import_dstc2
from .evaluation import corpus_eval, run_simulation
from .manager import Session
from .ontology import (
    SchemaError,
    load_default_domain,
    load_ontology,
    load_venues,
)
from .scorer import (
    ModelFormatError,
    ModelScorer,
    OracleScorer,
    RelevanceModel,
    TrainConfig,
    train,
)

DEFAULTS = {"t1": 0.99, "t2": 0.5, "m": 2, "dialogues": 5000, "negatives": 5}


def _domain(ontology_path: str | None, venues_path: str | None):
    if ontology_path is None and venues_path is None:
        return load_default_domain()
    if ontology_path is None or venues_path is None:
        raise click.UsageError("--ontology and --venues must be given together")
    ontology = load_ontology(ontology_path)
    return ontology, load_venues(venues_path, ontology)


def _emit(summary: dict) -> None:
    click.echo(json.dumps(summary))


def _write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    tmp.replace(path)


domain_options = [
    click.option("--ontology", "ontology_path", default=None, help="ontology JSON (defaults to the bundled domain)"),
    click.option("--venues", "venues_path", default=None, help="venue DB JSON (defaults to the bundled domain)"),
]


def with_domain(fn):
    for option in reversed(domain_options):
        fn = option(fn)
    return fn


@click.group()
def cli() -> None:
    """Action-scoring dialogue state tracker toolkit."""


@cli.command("ingest-dstc2")
@click.option("--log-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@with_domain
def ingest_dstc2_cmd(log_dir, out, ontology_path, venues_path):
    """Import log/label JSON pairs into the canonical corpus format."""
    ontology, _db = _domain(ontology_path, venues_path)
    corpus = import_dstc2(log_dir, ontology)
    corpus.save(out)
    _emit(
        {
            "command": "ingest-dstc2",
            "turns": len(corpus.turns),
            "dialogues": len(corpus.dialogues()),
            "skipped_turns": corpus.skipped_turns,
            "out": str(out),
        }
    )


@cli.command("datagen")
@click.argument("kind", type=click.Choice(["baseline", "ext-h", "ext-a"]))
@click.option("--corpus", "corpus_path", default=None, type=click.Path(exists=True))
@click.option("--sim-dialogues", default=None, type=int,
              help="simulate a generic-request corpus of this size instead of --corpus")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--negatives", default=DEFAULTS["negatives"], type=int, show_default=True)
@click.option("--n-train", default=10000, type=int, show_default=True, help="referring positives (ext-h)")
@click.option("--n-dev", default=3000, type=int, show_default=True, help="referring positives (ext-h)")
@click.option("--model", "model_path", default=None, type=click.Path(exists=True),
              help="frozen baseline model (ext-a)")
@click.option("--baseline-data", default=None, type=click.Path(exists=True),
              help="baseline dataset directory to merge (ext-a)")
@click.option("--dialogues", default=DEFAULTS["dialogues"], type=int, show_default=True)
@click.option("--t1", default=DEFAULTS["t1"], type=float, show_default=True)
@click.option("--t2", default=DEFAULTS["t2"], type=float, show_default=True)
@click.option("--m", default=DEFAULTS["m"], type=int, show_default=True)
@with_domain
def datagen_cmd(kind, corpus_path, sim_dialogues, out, seed, negatives, n_train, n_dev,
                model_path, baseline_data, dialogues, t1, t2, m, ontology_path, venues_path):
    """Build a training dataset (train.jsonl, dev.jsonl, stats.json)."""
    ontology, db = _domain(ontology_path, venues_path)
    rng = np.random.Generator(np.random.PCG64(seed))

    corpus = None
    if corpus_path is not None:
        corpus = AnnotatedCorpus.load(corpus_path)
    elif sim_dialogues is not None:
        corpus = dg.simulate_corpus(ontology, db, sim_dialogues, seed=seed)

    if kind == "baseline":
        if corpus is None:
            raise click.UsageError("baseline needs --corpus or --sim-dialogues")
        dataset = dg.gen_baseline(corpus, ontology, rng, negatives_per_positive=negatives)
    elif kind == "ext-h":
        if corpus is None:
            raise click.UsageError("ext-h needs --corpus or --sim-dialogues")
        dataset = dg.gen_ext_h(corpus, ontology, db, rng, n_train=n_train, n_dev=n_dev,
                               negatives_per_positive=negatives)
    else:
        if model_path is None or baseline_data is None:
            raise click.UsageError("ext-a needs --model and --baseline-data")
        model = RelevanceModel.load(model_path)
        baseline_dataset = dg.Dataset.load(baseline_data)
        cfg = dg.ActiveLearningConfig(t1=t1, t2=t2, m=m, n_dialogues=dialogues)
        dataset = dg.gen_ext_a(model, baseline_dataset, ontology, db, cfg, rng)

    dataset.save(out)
    _emit({"command": "datagen", "kind": kind, "out": str(out), **dataset.stats()})


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=4, type=int, show_default=True)
@click.option("--lr", default=0.25, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--l2", default=0.0, type=float, show_default=True)
@click.option("--hash-bits", default=18, type=int, show_default=True)
@click.option("--positive-weight", default=1.0, type=float, show_default=True)
@with_domain
def train_cmd(data_dir, out, epochs, lr, seed, l2, hash_bits, positive_weight,
              ontology_path, venues_path):
    """Train the relevance classifier on a dataset directory."""
    ontology, _db = _domain(ontology_path, venues_path)
    dataset = dg.Dataset.load(data_dir)
    config = TrainConfig(epochs=epochs, learning_rate=lr, seed=seed, l2=l2,
                         hash_bits=hash_bits, positive_weight=positive_weight)
    model = train(dataset.train, config, domain_values=ontology.all_values)
    correct = sum(
        1 for ex in dataset.dev if (model.score(ex.input) > 0.5) == bool(ex.label)
    )
    dev_acc = correct / len(dataset.dev) if dataset.dev else None
    model.meta["dev_accuracy"] = dev_acc
    model.save(out)
    _emit(
        {
            "command": "train",
            "out": str(out),
            "n_train": len(dataset.train),
            "n_dev": len(dataset.dev),
            "dev_accuracy": dev_acc,
            "final_loss": model.meta["final_loss"],
        }
    )


def _make_scorer(scorer_kind: str, model_path: str | None):
    if scorer_kind == "oracle":
        return OracleScorer()
    if model_path is None:
        raise click.UsageError("--model is required unless --scorer oracle")
    return ModelScorer(RelevanceModel.load(model_path))


@cli.command("simulate")
@click.option("--scorer", "scorer_kind", type=click.Choice(["oracle", "model"]), default="model",
              show_default=True)
@click.option("--model", "model_path", default=None, type=click.Path(exists=True))
@click.option("--dialogues", default=1000, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--generic-requests", is_flag=True, help="no referring expressions (corpus-style users)")
@click.option("--turn-cap", default=30, type=int, show_default=True)
@click.option("--dump", "dump_path", default=None, type=click.Path(),
              help="write per-turn records (JSONL)")
@click.option("--out", default=None, type=click.Path(), help="write metrics JSON here")
@with_domain
def simulate_cmd(scorer_kind, model_path, dialogues, seed, generic_requests, turn_cap,
                 dump_path, out, ontology_path, venues_path):
    """Run simulated dialogues and report metrics."""
    ontology, db = _domain(ontology_path, venues_path)
    scorer = _make_scorer(scorer_kind, model_path)
    metrics = run_simulation(
        scorer, ontology, db, n=dialogues, seed=seed, turn_cap=turn_cap,
        generic_only=generic_requests, dump_path=dump_path,
    )
    if out is not None:
        _write_json(out, metrics.to_json())
    _emit({"command": "simulate", "scorer": scorer_kind, **metrics.to_json()})


@cli.command("eval-corpus")
@click.option("--scorer", "scorer_kind", type=click.Choice(["oracle", "model"]), default="model",
              show_default=True)
@click.option("--model", "model_path", default=None, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--live-state", is_flag=True, help="apply model updates instead of gold replay")
@click.option("--include-dontcare", is_flag=True)
@with_domain
def eval_corpus_cmd(scorer_kind, model_path, corpus_path, live_state, include_dontcare,
                    ontology_path, venues_path):
    """Replay an annotated corpus and score per-turn selections."""
    ontology, _db = _domain(ontology_path, venues_path)
    scorer = _make_scorer(scorer_kind, model_path)
    corpus = AnnotatedCorpus.load(corpus_path)
    goal_acc, request_acc = corpus_eval(
        scorer, corpus, ontology,
        include_dontcare=include_dontcare, teacher_forcing=not live_state,
    )
    _emit(
        {
            "command": "eval-corpus",
            "goal_accuracy": goal_acc,
            "request_accuracy": request_acc,
            "turns": len(corpus.turns),
        }
    )


@cli.command("serve")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data-dir", default="./data", type=click.Path(), show_default=True,
              envvar="ACTIONDST_DATA_DIR")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8090, type=int, show_default=True)
@click.option("--debug-scores", is_flag=True)
@click.option("--ui", "ui_dir", default=None, type=click.Path(), help="static chat UI directory")
@with_domain
def serve_cmd(model_path, data_dir, host, port, debug_scores, ui_dir,
              ontology_path, venues_path):
    """Serve the session API (and optionally the chat UI)."""
    import uvicorn

    from .service import create_app

    ontology, db = _domain(ontology_path, venues_path)
    scorers = {"default": ModelScorer(RelevanceModel.load(model_path))}
    app = create_app(scorers, ontology, db, data_dir, debug_scores=debug_scores, ui_dir=ui_dir)
    click.echo(f"serving on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command("chat")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@with_domain
def chat_cmd(model_path, ontology_path, venues_path):
    """Terminal chat against a trained model (developer convenience)."""
    ontology, db = _domain(ontology_path, venues_path)
    session = Session(ModelScorer(RelevanceModel.load(model_path)), ontology, db)
    click.echo(f"system: {session.greeting}")
    click.echo("(type /quit to exit, /state to inspect, <error> to flag)", err=True)
    turns = 0
    while True:
        try:
            line = input("you: ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line == "/quit":
            break
        if line == "/state":
            click.echo(json.dumps(session.state.to_dict(), indent=2))
            continue
        result = session.step(line)
        turns += 1
        click.echo(f"system: {result.text}")
    _emit({"command": "chat", "turns": turns})


def main(argv=None) -> int:
    """Entry point with config/runtime exit-code separation."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except (FileNotFoundError, SchemaError, ModelFormatError, dg.DatagenError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
