"""Command-line entry point.

Subcommands mirror the pipeline stages: ``build-basis`` constructs sector
bases, ``extract-models`` runs the Lindblad extractions and writes a model
set, ``simulate`` samples a surface-code memory experiment, ``decode``
re-decodes stored records, ``compare-models`` runs the three-backend
comparison, and ``report`` renders figures and tables from saved results.
All commands accept a YAML config file; individual flags override it.
Set ``BPPLUS_WORKERS`` to cap numerical thread parallelism.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import config as config_mod
from . import circuits, decoding, experiments, report, sbs_basis, store, surface


def _apply_worker_limit() -> None:
    workers = config_mod.worker_count()
    if workers is None:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(workers)
    except ImportError:
        click.echo(
            "BPPLUS_WORKERS set but threadpoolctl unavailable; "
            "export OMP_NUM_THREADS before launching instead",
            err=True,
        )


def _load_config(path, **overrides) -> config_mod.ExperimentConfig:
    cfg = config_mod.load_config(path) if path else config_mod.ExperimentConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


@click.group()
def main() -> None:
    """Bosonic Pauli+ simulation pipeline."""
    _apply_worker_limit()


@main.command("build-basis")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--delta", type=float, default=None)
@click.option("--cutoff", type=int, default=None)
@click.option("--rank", type=int, default=None)
@click.option("--seed", "basis_seed", type=int, default=None)
@click.option("--gauge", type=(int, int), default=None)
@click.option("--out", type=click.Path(), required=True)
def build_basis_cmd(config_path, delta, cutoff, rank, basis_seed, gauge, out):
    """Construct one sector basis and write the binary artifact."""
    cfg = _load_config(
        config_path, delta=delta, cutoff=cutoff, rank=rank, basis_seed=basis_seed,
        gauge=tuple(gauge) if gauge else None,
    )
    params = cfg.gkp_params()
    basis = sbs_basis.build_basis(
        params, cfg.rank, seed=cfg.basis_seed, norm_loss_tol=cfg.norm_loss_tol
    )
    basis.save(out)
    click.echo(
        f"basis written to {out}: dim={basis.dim} rank={basis.rank} "
        f"gauge={basis.gauge} sectors={basis.n_sectors} "
        f"(hash {sbs_basis.basis_hash(basis)})"
    )


@main.command("extract-models")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--delta", type=float, default=None)
@click.option("--cutoff", type=int, default=None)
@click.option("--rank", type=int, default=None)
@click.option("--noise-scale", type=float, default=None)
@click.option("--per-gauge/--single-gauge", "per_gauge", default=None)
@click.option("--out", type=click.Path(), default=None, help="defaults to models_dir")
def extract_models_cmd(config_path, delta, cutoff, rank, noise_scale, per_gauge, out):
    """Extract PTM+/BP+ models for all gate classes and write a model set."""
    cfg = _load_config(
        config_path, delta=delta, cutoff=cutoff, rank=rank,
        noise_scale=noise_scale, per_gauge_models=per_gauge,
    )
    out = Path(out or cfg.models_dir)
    mset = store.extract_model_set(
        cfg.gkp_params(),
        cfg.noise_params(),
        cfg.rank,
        seed=cfg.basis_seed,
        per_gauge=cfg.per_gauge_models,
        norm_loss_tol=cfg.norm_loss_tol,
        progress=lambda msg: click.echo(f"  {msg}"),
    )
    store.save_model_set(mset, out)
    click.echo(f"model set written to {out} ({len(mset.bp)} BP+ models)")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--models", "models_dir", type=click.Path(exists=True), default=None)
@click.option("--distance", type=int, default=None)
@click.option("--rounds", type=int, default=None)
@click.option("--shots", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="defaults to output_dir")
def simulate_cmd(config_path, models_dir, distance, rounds, shots, seed, out):
    """Sample a surface-code memory experiment and decode it."""
    cfg = _load_config(
        config_path, distance=distance, rounds=rounds, shots=shots, seed=seed
    )
    models_dir = models_dir or cfg.models_dir
    config_mod.check_model_artifacts(cfg, models_dir)
    mset = store.load_model_set(models_dir)
    run = experiments.run_surface_memory(
        mset,
        cfg.distance,
        cfg.rounds,
        cfg.shots,
        seed=cfg.seed,
        decoders=cfg.decoders,
        sbs_schedule=cfg.sbs_schedule,
        init_basis=cfg.init_basis,
    )
    out = Path(out or cfg.output_dir)
    experiments.save_surface_run(run, out)
    click.echo((out / "summary.txt").read_text().rstrip())
    click.echo(f"results written to {out}")


@main.command("decode")
@click.option("--records", "records_dir", type=click.Path(exists=True), required=True)
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True)
@click.option("--decoder", "decoders", multiple=True,
              type=click.Choice(decoding.REGIMES), default=decoding.REGIMES)
@click.option("--out", type=click.Path(), default=None)
def decode_cmd(records_dir, models_dir, decoders, out):
    """Re-decode stored shot records under selected regimes."""
    records_dir = Path(records_dir)
    bits, roles, meta = circuits.read_records(records_dir / "records.bprc")
    mset = store.load_model_set(models_dir)
    circuit = surface.build_memory_circuit(
        meta["distance"],
        meta["rounds"],
        n_sectors=mset.n_sectors,
        sbs_schedule=tuple(meta["sbs_schedule"]),
        init_basis=meta["init_basis"],
        per_gauge_models=meta["per_gauge_models"],
    )
    models = mset.models_for_circuit()
    data = np.load(records_dir / "error_paths.npz")
    paths = circuits.ErrorPathBatch(
        site_ops=circuit.bp_sites,
        e_in=list(data["e_in"].T),
        e_out=list(data["e_out"].T),
        outcome=list(data["site_outcome"].T),
        outcomes=data["outcomes"],
        shots=bits.shape[0],
    )
    topology = decoding.DecodingTopology(circuit)
    lines = []
    for regime in decoders:
        res = decoding.decode_records(
            circuit, models, bits, regime,
            outcomes=paths.outcomes, paths=paths, topology=topology,
        )
        lo, hi = res.wilson_interval()
        lines.append(
            f"{regime}: {res.failures}/{res.shots} failures, P_L = {res.error_rate:.5f}, "
            f"95% Wilson [{lo:.5f}, {hi:.5f}]"
        )
    text = "\n".join(lines)
    click.echo(text)
    if out:
        Path(out).write_text(text + "\n")


@main.command("compare-models")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--models", "models_dir", type=click.Path(exists=True), default=None)
@click.option("--experiment", "kind",
              type=click.Choice(sorted(experiments.EXPERIMENT_EVENTS)), default=None)
@click.option("--rounds", "repetitions", type=int, default=None)
@click.option("--shots", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def compare_models_cmd(config_path, models_dir, kind, repetitions, shots, seed, out):
    """Run the trajectory / PTM+ / BP+ comparison on one circuit family."""
    cfg = _load_config(config_path, shots=shots, seed=seed)
    if kind is not None:
        cfg.kind = kind
    if repetitions is not None:
        cfg.repetitions = repetitions
    if cfg.kind not in experiments.EXPERIMENT_EVENTS:
        raise click.UsageError(f"kind {cfg.kind!r} is not a comparison experiment")
    models_dir = models_dir or cfg.models_dir
    config_mod.check_model_artifacts(cfg, models_dir)
    mset = store.load_model_set(models_dir)
    results = experiments.run_model_comparison(
        mset, cfg.kind, cfg.repetitions, cfg.shots, seed=cfg.seed, backends=cfg.backends
    )
    summary = experiments.summarize_comparison(results, seed=cfg.seed)
    out = Path(out or cfg.output_dir)
    experiments.save_comparison(results, summary, out)
    for backend, s in summary.items():
        labels = s["labels"]
        headline = "XX" if "XX" in labels else "X"
        final = np.asarray(s["mean_expectations"])[-1, labels.index(headline)]
        click.echo(f"{backend}: final <{headline}> = {final:+.4f}")
    click.echo(f"results written to {out}")


@main.command("report")
@click.option("--results", "results_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None)
def report_cmd(results_dir, out):
    """Render figures (PNG) next to the delimited outputs of a result set."""
    written = report.render_report(results_dir, out)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
