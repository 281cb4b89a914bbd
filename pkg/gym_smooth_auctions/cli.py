"""
Command-line experiment runner.

Subcommands write UTF-8 CSV artifacts with a header row into --out. Values
come from command-line flags, then from the flat YAML file given by --config
(keys are the flag names without dashes), then from the built-in defaults.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np
import yaml
from click.core import ParameterSource

from gym_smooth_auctions import __version__
from gym_smooth_auctions.agents.estimators import (
    EstimatorConfig,
    EstimatorKind,
    estimate_es,
    estimate_reinforce,
    estimate_sm,
    gradient_variance,
)
from gym_smooth_auctions.agents.learner import (
    ExperimentConfig,
    lambda_sweep,
    run_training,
)
from gym_smooth_auctions.agents.policy import PolicyNet, pretrain
from gym_smooth_auctions.errors import AuctionError
from gym_smooth_auctions.evaluation.metrics import METRIC_COLUMNS, EvaluationConfig
from gym_smooth_auctions.evaluation.oracle import ORACLE_COLUMNS, oracle_table
from gym_smooth_auctions.utils.mechanisms import MechanismSpec

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
SWEEP_COLUMNS = ["lambda", "seed", "final_l2"]
VARIANCE_COLUMNS = ["estimator", "lambda", "grad_variance"]

# Config-file keys that differ from the Python parameter name.
CONFIG_KEY_ALIASES = {"lambda": "temperature", "v1": "v1_values"}


@dataclass
class RunManifest:
    """Snapshot of every resolved value behind one set of CSV artifacts."""

    command: str
    config: dict
    seed: object
    version: str = f"{__version__}+csv{CSV_SCHEMA_VERSION}"
    outputs: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        with path.open("w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("wrote %s", path)
    return path


def load_config_file(ctx, param, value):
    """Eager callback: loads the YAML file into the context's default map."""
    if value is None:
        return value
    try:
        with open(value, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise click.BadParameter(f"cannot read config file: {exc}") from exc
    if not isinstance(data, dict):
        raise click.BadParameter("config file must be a flat key-value mapping")

    known = {p.name for p in ctx.command.params}
    defaults = dict(ctx.default_map or {})
    for key, item in data.items():
        name = CONFIG_KEY_ALIASES.get(key, str(key).replace("-", "_"))
        if name not in known or name == "config":
            raise click.BadParameter(f"unknown config key {key!r}")
        defaults[name] = item
    ctx.default_map = defaults
    return value


def _config_option(f):
    return click.option(
        "--config",
        type=click.Path(exists=True, dir_okay=False),
        callback=load_config_file,
        is_eager=True,
        expose_value=False,
        help="Flat YAML file with flag names as keys.",
    )(f)


def _mechanism_options(f):
    options = [
        click.option("--mechanism", type=click.Choice(["fpsb", "spsb"]), default="fpsb"),
        click.option("--bidders", type=click.IntRange(min=2), default=2),
        click.option("--items", type=click.IntRange(1, 8), default=1),
        click.option("--batch", type=click.IntRange(min=1), default=2**14),
        click.option("--out", type=click.Path(file_okay=False), default="runs/default"),
    ]
    for option in reversed(options):
        f = option(f)
    return _config_option(f)


def _training_options(f):
    options = [
        click.option(
            "--estimator", type=click.Choice([k.value for k in EstimatorKind]), default="sm"
        ),
        click.option("--pop", type=click.IntRange(min=2), default=64),
        click.option("--sigma", type=float, default=1.0),
        click.option("--iters", type=click.IntRange(min=0), default=2000),
        click.option("--eval-every", type=click.IntRange(min=1), default=50),
        click.option("--utility-loss/--no-utility-loss", default=True),
        click.option("--variance-repeats", type=click.IntRange(min=0), default=0),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _explicit(ctx, name) -> bool:
    """True if the user set the option, on the command line or in --config."""
    return ctx.get_parameter_source(name) in (
        ParameterSource.COMMANDLINE,
        ParameterSource.DEFAULT_MAP,
    )


def _check_combination(ctx, estimator: str) -> None:
    if estimator != EstimatorKind.ES.value:
        for name in ("pop", "sigma"):
            if _explicit(ctx, name):
                raise click.UsageError(f"--{name} only applies to --estimator es")
    if estimator != EstimatorKind.SM.value and _explicit(ctx, "temperature"):
        raise click.UsageError("--lambda only applies to --estimator sm")


def build_config(params: dict, temperature: float, seed: int) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            mechanism=MechanismSpec(params["mechanism"], params["bidders"], params["items"]),
            estimator=EstimatorConfig(
                kind=params["estimator"],
                temperature=temperature,
                population_size=params["pop"],
                sigma=params["sigma"],
            ),
            iterations=params["iters"],
            batch_size=params["batch"],
            seed=seed,
            eval_every=params["eval_every"],
            evaluation=EvaluationConfig(utility_loss=params["utility_loss"]),
            variance_repeats=params["variance_repeats"],
        )
    except AuctionError as exc:
        raise click.UsageError(str(exc)) from exc


def _prepare_out(out) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug.")
def cli(verbose):
    """Learn Bayes-Nash equilibria of sealed-bid auctions in smoothed games."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


@cli.command()
@_mechanism_options
@_training_options
@click.option("--lambda", "temperature", type=float, default=0.01)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=1)
@click.option(
    "--timing/--no-timing",
    default=True,
    help="Record seconds per iteration. --no-timing makes metrics.csv byte-identical across reruns.",
)
@click.pass_context
def train(ctx, temperature, seed, timing, **params):
    """Train a shared bid strategy and write metrics.csv."""
    _check_combination(ctx, params["estimator"])
    config = build_config(params, temperature, seed)
    out_dir = _prepare_out(params["out"])

    result = run_training(config)

    metrics = write_csv(
        out_dir / "metrics.csv",
        METRIC_COLUMNS,
        (record.as_row(timing=timing) for record in result.records),
    )
    policy = result.net.save(out_dir / "policy.npz")
    manifest = RunManifest(
        "train",
        asdict(config),
        seed,
        outputs={"metrics": str(metrics), "policy": str(policy)},
    ).write(out_dir)
    click.echo(f"final l2={result.final_l2} utility_loss={result.final_utility_loss}")
    click.echo(f"wrote {metrics} and {manifest}")


@cli.command()
@_mechanism_options
@_training_options
@click.option("--lambda", "temperature", type=float, multiple=True, required=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), multiple=True, default=[1])
@click.pass_context
def sweep(ctx, temperature, seed, **params):
    """Train once per (lambda, seed) and write sweep.csv with final L2."""
    if params["estimator"] != EstimatorKind.SM.value:
        raise click.UsageError("sweep needs --estimator sm")
    if not temperature:
        raise click.UsageError("give at least one --lambda")
    config = build_config(params, temperature[0], seed[0])
    out_dir = _prepare_out(params["out"])

    try:
        rows = lambda_sweep(config, temperature, seed)
    except AuctionError as exc:
        raise click.UsageError(str(exc)) from exc

    path = write_csv(
        out_dir / "sweep.csv",
        SWEEP_COLUMNS,
        ([repr(r.temperature), str(r.seed), "" if r.final_l2 is None else repr(r.final_l2)]
         for r in rows),
    )
    RunManifest(
        "sweep",
        dict(asdict(config), temperatures=list(temperature)),
        list(seed),
        outputs={"sweep": str(path)},
    ).write(out_dir)
    click.echo(f"wrote {path}")


@cli.command()
@click.option("--v1", "v1_values", type=float, multiple=True, default=[0.25, 0.5, 0.75, 1.0])
@click.option("--lambda", "temperature", type=float, multiple=True,
              default=[0.1, 0.03, 0.01, 0.003, 0.001])
@click.option("--slope", type=click.FloatRange(0.0, 1.0, min_open=True), default=0.5)
@click.option("--nodes", type=click.IntRange(min=16), default=32)
@click.option("--empty-grid", is_flag=True, help="Write the header only.")
@click.option("--out", type=click.Path(file_okay=False), default="runs/oracle")
@_config_option
def oracle(v1_values, temperature, slope, nodes, empty_grid, out):
    """Compare exact and quadrature interim errors with the linear bound."""
    out_dir = _prepare_out(out)
    try:
        rows = [] if empty_grid else oracle_table(v1_values, temperature, slope, nodes)
    except AuctionError as exc:
        raise click.UsageError(str(exc)) from exc
    path = write_csv(out_dir / "oracle.csv", ORACLE_COLUMNS, (r.as_row() for r in rows))
    RunManifest(
        "oracle",
        {"v1": list(v1_values), "lambda": list(temperature), "slope": slope,
         "nodes": nodes, "empty_grid": empty_grid},
        None,
        outputs={"oracle": str(path)},
    ).write(out_dir)
    click.echo(f"wrote {path}")


@cli.command()
@_mechanism_options
@click.option("--lambda", "temperature", type=float, multiple=True,
              default=[0.05, 0.02, 0.01, 0.005, 0.002])
@click.option("--pop", type=click.IntRange(min=2), default=64)
@click.option("--sigma", type=float, default=1.0)
@click.option("--repeats", type=click.IntRange(min=2), default=10)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=1)
def variance(mechanism, bidders, items, batch, out, temperature, pop, sigma, repeats, seed):
    """Empirical gradient variance of SM per lambda, ES and REINFORCE."""
    try:
        spec = MechanismSpec(mechanism, bidders, items)
        es_config = EstimatorConfig(EstimatorKind.ES, population_size=pop, sigma=sigma)
    except AuctionError as exc:
        raise click.UsageError(str(exc)) from exc
    out_dir = _prepare_out(out)
    rng = np.random.default_rng(seed)

    def sample_prior(size):
        return rng.uniform(0.0, spec.v_max, size=(size, spec.n_items))

    def sampler(size):
        return lambda: rng.uniform(0.0, spec.v_max, size=(size, *spec.profile_shape))

    net = pretrain(PolicyNet.for_items(spec.n_items, rng=rng), sample_prior)
    mixed = pretrain(PolicyNet.for_items(spec.n_items, mixed=True, rng=rng), sample_prior)

    rows = []
    for lam in temperature:
        value = gradient_variance(
            net, sampler(batch), lambda n_, v: estimate_sm(n_, v, spec, lam), repeats
        )
        rows.append(["sm", repr(lam), repr(value)])
    # Equal sample budget: each ES member sees batch / pop profiles.
    es_batch = max(batch // pop, 1)
    value = gradient_variance(
        net, sampler(es_batch), lambda n_, v: estimate_es(n_, v, spec, es_config, rng), repeats
    )
    rows.append(["es", "", repr(value)])
    value = gradient_variance(
        mixed, sampler(batch), lambda n_, v: estimate_reinforce(n_, v, spec, rng), repeats
    )
    rows.append(["reinforce", "", repr(value)])

    path = write_csv(out_dir / "variance.csv", VARIANCE_COLUMNS, rows)
    RunManifest(
        "variance",
        {"mechanism": asdict(spec), "batch": batch, "lambda": list(temperature),
         "pop": pop, "sigma": sigma, "repeats": repeats},
        seed,
        outputs={"variance": str(path)},
    ).write(out_dir)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    cli()
