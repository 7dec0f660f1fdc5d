"""Command-line front end: ``conedflow <subcommand> --config run.yaml``."""
from __future__ import annotations

import json
import logging
import sys
from functools import wraps
from pathlib import Path

import click

from . import harness
from .flow import Uncertified, mask_record
from .graph import GroupVertex


def _apply_flags(cfg: harness.ExperimentConfig, profile, p, seed, out, max_vertices):
    if profile:
        if profile not in ("desk", "paper"):
            raise harness.ConfigError(f"unknown profile {profile!r}")
        cfg.profile = profile
    if p:
        try:
            values = [float(x) for x in p.split(",") if x.strip()]
        except ValueError as exc:
            raise harness.ConfigError(f"--p must be a comma-separated list of numbers: {exc}") from exc
        if not values or any(x <= 1 for x in values):
            raise harness.ConfigError("every p must exceed 1")
        cfg.p = values
    if seed is not None:
        cfg.seed = seed
    if out:
        cfg.out = out
    if max_vertices is not None:
        cfg.max_vertices = max_vertices
    return cfg


def common(f):
    """Shared flags; loads and validates the configuration before the command runs."""

    @click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
                  help="YAML or JSON experiment configuration.")
    @click.option("--profile", default=None, help="Constants profile: desk or paper.")
    @click.option("--p", "p", default=None, help="Comma-separated exponents, e.g. 2,4.")
    @click.option("--seed", type=int, default=None)
    @click.option("--out", default=None, type=click.Path(file_okay=False), help="Report directory.")
    @click.option("--max-vertices", type=int, default=None, help="Vertex budget for ball construction.")
    @wraps(f)
    def wrapper(config_path, profile, p, seed, out, max_vertices, **kw):
        try:
            cfg = harness.load_config(config_path)
            cfg = _apply_flags(cfg, profile, p, seed, out, max_vertices)
        except harness.ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(harness.EXIT_CONFIG)
        return f(cfg, **kw)

    return wrapper


def _run(cfg, suites):
    status = harness.run(cfg, suites=suites)
    summary = json.loads((Path(cfg.out) / "summary.json").read_text())
    for name, res in summary["suites"].items():
        line = f"{name}: {'pass' if res['passed'] else 'FAIL'}"
        if not res["passed"] and res.get("witness"):
            line += f" ({res['witness']})"
        click.echo(line)
    if "error" in summary:
        click.echo(f"error: {summary['error']}", err=True)
    sys.exit(status)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log suite progress.")
def main(verbose):
    """Geodesic flows, cocycles and induced cocycles on coned-off Cayley graph balls."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


def _suite_command(name: str, suites: list[str], help_text: str):
    @main.command(name, help=help_text)
    @common
    def cmd(cfg):
        _run(cfg, suites)

    return cmd


_suite_command("build-ball", ["ball"], "Build the ball and dump it with boundary flags.")
_suite_command("estimate-delta", ["delta"], "Estimate the thin-triangle constant of the ball.")
_suite_command("cocycle", ["cocycle"], "Cocycle identity and l^p norms with shell tables.")
_suite_command("confluence", ["confluence"], "Non-confluence values and the decay bound.")
_suite_command("checkpoint", ["checkpoint"], "Checkpoint equalities (optionally on the wheel).")
_suite_command("coset-reps", ["coset-reps"], "Random coset representatives from masks.")
_suite_command("induce", ["induce"], "Induced-cocycle identities and the properness probe.")
_suite_command("dichotomy", ["dichotomy"], "Properness dichotomy rows for element families.")


@main.command("suite")
@common
def suite_cmd(cfg):
    """Run every suite listed in the configuration."""
    _run(cfg, cfg.suites)


@main.command("mask")
@common
@click.option("--target", default=None, help="Target vertex a as a word (group vertex).")
@click.option("--source", default=None, help="Source vertex x as a word (group vertex).")
def mask_cmd(cfg, target, source):
    """Print one mask, or run the sampled mask suite when no pair is given."""
    if target is None and source is None:
        _run(cfg, ["masks"])
    if target is None or source is None:
        click.echo("--target and --source go together", err=True)
        sys.exit(harness.EXIT_CONFIG)
    ctx = harness.Context(cfg)
    g = ctx.graph
    try:
        a = g.index[GroupVertex(ctx.model.parse(target))]
        x = g.index[GroupVertex(ctx.model.parse(source))]
    except KeyError:
        click.echo("target or source lies outside the ball", err=True)
        sys.exit(harness.EXIT_CONFIG)
    try:
        m = ctx.flow.mask(a, x)
    except Uncertified as exc:
        click.echo(f"uncertified: {exc}", err=True)
        sys.exit(harness.EXIT_VIOLATION)
    rec = mask_record(g, m)
    rec["a"], rec["x"] = ctx.label(a), ctx.label(x)
    for row in rec["support"]:
        row["vertex"] = ctx.label(row["vertex"])
    click.echo(json.dumps(rec, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
