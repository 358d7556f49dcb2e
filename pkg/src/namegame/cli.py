"""Command-line entry points: gen-data, simulate, serve, analyze, replay."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .analysis import (
    acceptance_rate_bins,
    group_by_participant,
    infer_decisions,
    pairwise_model_tests,
    fit_report_rows,
)
from .engine import AffineMH, Binary, Constant, GameConfig, MH, Numerator, Subtraction
from .model import default_hyperparams
from .session.driver import ModelParticipant, play_session
from .session.eventlog import replay_log, session_data
from .session.protocol import state_hash
from .stimulus import dataset_specs, manifest_dict, sample_stimuli, write_manifest, write_patch_images


@click.group()
def main():
    """Naming-game laboratory."""


def _dataset_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _build_manifests(datasets: tuple[str, ...], n: int, seed: int) -> dict:
    manifests = {}
    for i, name in enumerate(datasets):
        sset = sample_stimuli(dataset_specs(name), n, _dataset_seed(seed, i), dataset_id=name)
        manifests[name] = manifest_dict(sset, dataset_specs(name))
    return manifests


@main.command("gen-data")
@click.option("--dataset", type=click.Choice(["hard", "easy"]), required=True)
@click.option("--n", type=int, default=15, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--size", type=int, default=128, show_default=True, help="patch size in pixels")
def gen_data(dataset, n, seed, out, size):
    """Generate a stimulus dataset: manifest JSON plus one PNG patch per stimulus."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = dataset_specs(dataset)
    sset = sample_stimuli(spec, n, seed, dataset_id=dataset)
    write_manifest(sset, spec, out_dir / f"{dataset}_manifest.json")
    write_patch_images(sset, out_dir, size_px=size)
    click.echo(f"wrote {n} stimuli and manifest to {out_dir}")


_MODEL_CHOICES = ["mh", "constant", "numerator", "subtraction", "binary", "affine"]


def _parse_model(model: str, rate: float, a: float | None, b: float | None):
    if model == "mh":
        return MH()
    if model == "constant":
        return Constant(rate)
    if model == "numerator":
        return Numerator()
    if model == "subtraction":
        return Subtraction()
    if model == "binary":
        return Binary()
    if model == "affine":
        if a is None or b is None:
            raise click.UsageError("--model affine requires --a and --b")
        return AffineMH(a, b)
    raise click.UsageError(f"unknown model {model!r}")


@main.command("simulate")
@click.option("--model", type=click.Choice(_MODEL_CHOICES), default="mh", show_default=True)
@click.option("--rate", type=float, default=0.5, show_default=True, help="constant-model rate")
@click.option("--a", type=float, default=None, help="affine-model slope")
@click.option("--b", type=float, default=None, help="affine-model intercept")
@click.option(
    "--dataset",
    type=click.Choice(["hard", "easy", "both"]),
    default="both",
    show_default=True,
)
@click.option("--stimuli", type=int, default=15, show_default=True)
@click.option("--rounds", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def simulate(model, rate, a, b, dataset, stimuli, rounds, seed, out):
    """Play a full two-participant session with model-driven synthetic participants."""
    kind = _parse_model(model, rate, a, b)
    datasets = ("hard", "easy") if dataset == "both" else (dataset,)
    config = GameConfig(stimuli_per_dataset=stimuli, rounds=rounds, datasets=datasets, seed=seed)
    manifests = _build_manifests(datasets, stimuli, seed)
    hyper = default_hyperparams()
    children = np.random.SeedSequence(seed).spawn(2)
    players = [
        ModelParticipant("A", kind, hyper, seed=children[0]),
        ModelParticipant("B", kind, hyper, seed=children[1]),
    ]
    state, trials = play_session(players, f"sim-{seed}", config, manifests, log_path=out)
    click.echo(f"session complete: {len(trials)} trials logged to {out}")


@main.command("serve")
@click.option("--port", type=int, default=8600, show_default=True, envvar="NAMEGAME_PORT")
@click.option("--bind", default="127.0.0.1", show_default=True)
@click.option("--session-config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--log-dir", type=click.Path(file_okay=False), default="logs", show_default=True,
    envvar="NAMEGAME_LOG_DIR",
)
@click.option("--tcp", is_flag=True, help="serve the raw TCP line protocol instead of WebSocket")
@click.option("--static", type=click.Path(file_okay=False), default=None, help="static assets dir")
def serve(port, bind, session_config, log_dir, tcp, static):
    """Host live sessions described by a session-config file."""
    from .session.server import SessionHost, build_app, serve_tcp

    doc = json.loads(Path(session_config).read_text())
    host = SessionHost(log_dir=log_dir)
    for entry in doc.get("sessions", []):
        datasets = []
        manifests = {}
        for i, ds in enumerate(entry["datasets"]):
            if isinstance(ds, str):
                name = ds
                n = entry.get("stimuli_per_dataset", 15)
                sset = sample_stimuli(
                    dataset_specs(name), n, _dataset_seed(entry.get("seed", 0), i), dataset_id=name
                )
                manifests[name] = manifest_dict(sset, dataset_specs(name))
            else:
                name = ds["id"]
                manifests[name] = json.loads(Path(ds["manifest"]).read_text())
            datasets.append(name)
        config = GameConfig(
            stimuli_per_dataset=entry.get("stimuli_per_dataset", 15),
            rounds=entry.get("rounds", 3),
            datasets=tuple(datasets),
            seed=entry.get("seed", 0),
        )
        host.create(entry["session_id"], config, manifests)
        click.echo(f"session {entry['session_id']} ready")
    if tcp:
        import asyncio

        click.echo(f"TCP line protocol on {bind}:{port}")
        asyncio.run(serve_tcp(host, bind, port))
    else:
        import uvicorn

        app = build_app(host, static_dir=static)
        click.echo(f"WebSocket endpoint ws://{bind}:{port}/ws/<session_id>")
        uvicorn.run(app, host=bind, port=port, log_level="warning")


@main.command("analyze")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test1", is_flag=True, help="affine-Bernoulli fit and randomization test")
@click.option("--test2", is_flag=True, help="model-precision pairwise U-tests")
@click.option("--replicates", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bins", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def analyze(log_path, test1, test2, replicates, seed, bins, out):
    """Infer per-trial acceptance probabilities from a session log and run the tests."""
    result = replay_log(log_path)
    data = session_data(result)
    hyper = default_hyperparams()
    inferred = infer_decisions(data, hyper)
    if not inferred.records:
        raise click.ClickException("no decisions found in the log")
    report = {
        "log": str(log_path),
        "participants": list(data.participants),
        "n_records": len(inferred.records),
        "skipped": inferred.skipped,
        "acceptance_rate_bins": acceptance_rate_bins(inferred.records, n_bins=bins),
    }
    if not test1 and not test2:
        test1 = True
    if test1:
        report["test1"] = {"rows": fit_report_rows(inferred.records, replicates=replicates, seed=seed)}
    if test2:
        t2 = pairwise_model_tests(group_by_participant(inferred.records), seed=seed)
        report["test2"] = {
            "models": list(t2.model_names),
            "pooled_p": [[None if np.isnan(v) else v for v in row] for row in t2.pooled_p],
            "per_participant_p": {
                pid: [[None if np.isnan(v) else v for v in row] for row in mat]
                for pid, mat in t2.per_participant_p.items()
            },
        }
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"report written to {out}")
    else:
        click.echo(text)


@main.command("replay")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
def replay(log_path):
    """Replay a session log and print the reconstructed final state summary."""
    from .session.eventlog import ReplayError

    try:
        result = replay_log(log_path)
    except ReplayError as exc:
        raise click.ClickException(str(exc))
    state = result.state
    decisions = {
        pid: {ds: count for ds, count in per.items()}
        for pid, per in state.decision_counts.items()
    }
    click.echo(
        json.dumps(
            {
                "session_id": state.session_id,
                "phase": state.phase,
                "state_hash": state_hash(state),
                "trials": len(result.trials),
                "decisions": decisions,
            },
            indent=2,
        )
    )


if __name__ == "__main__":
    main()
