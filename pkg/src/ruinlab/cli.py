"""Batch front end: ``ruinlab {simulate,asymptotic,optimal,check,converge}``.

Exit codes: 0 success, 1 runtime error, 2 config or usage error, 3 a
required condition check failed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from functools import wraps
from pathlib import Path

import click

from .asymptotics import asymptotic_ruin_approx, family_infimum, levy_constant
from .config import ConfigError, ExperimentConfig, list_presets, load_config, load_preset, strategy_label
from .market_models import DiffusionSV, ExpLevy, GBM
from .mc_engine import (
    RuinEstimate,
    RuinProblem,
    asymptotic_constant,
    convergence_study,
    estimate_ruin_probability,
    estimate_ruin_probability_is,
)
from .strategies import (
    AsymptoticallyOptimal,
    ConstantStrategy,
    FeedbackStrategy,
    Verdict,
    asymptotically_optimal_pi,
    check_exponential_moment_conditions,
    check_levy_moment_condition,
    check_no_short_selling,
)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3

SIMULATE_COLUMNS = (
    "eps", "x", "n_paths", "p_hat", "ci_low", "ci_high", "ci_halfwidth",
    "normalized_ratio", "ruin_count", "tilt", "mean_weight", "seed",
)
ASYMPTOTIC_COLUMNS = ("eps", "x", "alpha", "K", "method", "std_error", "exponent", "tail", "approximation")
OPTIMAL_COLUMNS = ("candidate", "pi", "K", "ratio_to_no_investment", "sharpe", "is_argmin")
CHECK_COLUMNS = ("condition", "target", "verdict", "method", "value", "detail", "params")
CONVERGE_COLUMNS = (
    "strategy", "eps", "n_paths", "p_hat", "ci_low", "ci_high", "normalized_ratio",
    "ratio_halfwidth", "limit", "abs_error", "approximation", "K", "K_method", "seed",
)


class CheckFailed(Exception):
    pass


# -- output ------------------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_cell(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def render(rows: list[dict], columns, fmt: str) -> str:
    if fmt == "json":
        data = [{c: _json_cell(r.get(c)) for c in columns} for r in rows]
        return json.dumps(data, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_csv_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _emit(rows, columns, cfg: ExperimentConfig):
    text = render(rows, columns, cfg.run.format)
    if cfg.run.out:
        Path(cfg.run.out).write_text(text)
    else:
        click.echo(text, nl=False)


def _f(v) -> float:
    return float(v) if v is not None else math.nan


# -- shared options ---------------------------------------------------------------


def _parse_eps(value: str | None):
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


def _common(fn):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML experiment config.")
    @click.option("--preset", help=f"Packaged preset name ({', '.join(list_presets())}).")
    @click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Master seed.")
    @click.option("--paths", type=click.IntRange(min=1), help="Paths per estimate.")
    @click.option("--eps", "eps", help="Comma-separated eps values.")
    @click.option("--mesh", type=float, help="Uniform mesh width h.")
    @click.option("--out", type=click.Path(dir_okay=False), help="Output file (default stdout).")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json"]), help="Output format.")
    @click.option("--workers", type=click.IntRange(min=1), help="Worker processes.")
    @wraps(fn)
    def wrapper(config_path, preset, seed, paths, eps, mesh, out, fmt, workers, **kwargs):
        if (config_path is None) == (preset is None):
            raise ConfigError("give exactly one of --config or --preset")
        cfg = load_config(config_path) if config_path else load_preset(preset)
        try:
            cfg = cfg.with_run(
                seed=seed, n_paths=paths, eps=_parse_eps(eps), mesh=mesh, out=out, format=fmt, workers=workers
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return fn(cfg, **kwargs)

    return wrapper


def _problem(cfg: ExperimentConfig, block=None) -> RuinProblem:
    try:
        return RuinProblem(cfg.claims_spec(), cfg.market_model(), cfg.build_strategy(block))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


# -- commands -----------------------------------------------------------------------


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Ruin probabilities of an insurer investing in risky assets."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr)


def _estimate_row(e: RuinEstimate) -> dict:
    return {
        "eps": e.eps, "x": e.x, "n_paths": e.n_paths, "p_hat": e.p_hat, "ci_low": e.ci_low,
        "ci_high": e.ci_high, "ci_halfwidth": e.ci_halfwidth, "normalized_ratio": e.normalized_ratio,
        "ruin_count": e.ruin_count, "tilt": e.tilt, "mean_weight": e.mean_weight, "seed": e.seed,
    }


@cli.command()
@_common
def simulate(cfg: ExperimentConfig):
    """Estimate ruin probabilities for each eps."""
    p = _problem(cfg)
    run = cfg.run
    rows = []
    for eps in run.eps:
        opts = dict(mesh=run.mesh, workers=run.workers, block_size=run.block_size)
        if run.tilt > 0:
            est = estimate_ruin_probability_is(
                p.claims, p.market, p.strategy, run.x, eps, run.n_paths, run.seed, run.tilt, **opts
            )
        else:
            est = estimate_ruin_probability(p.claims, p.market, p.strategy, run.x, eps, run.n_paths, run.seed, **opts)
        rows.append(_estimate_row(est))
    _emit(rows, SIMULATE_COLUMNS, cfg)


def _alpha(cfg: ExperimentConfig) -> float:
    if cfg.claims.law != "pareto":
        raise ConfigError("this command needs Pareto claims")
    return cfg.claims.alpha


@cli.command()
@_common
def asymptotic(cfg: ExperimentConfig):
    """Asymptotic constant K and the resulting ruin approximation."""
    p = _problem(cfg)
    run = cfg.run
    alpha = _alpha(cfg)
    first = run.eps[0] if isinstance(p.strategy, FeedbackStrategy) else None
    K = asymptotic_constant(
        p, alpha, n_paths=run.constant_paths, seed=run.seed, mesh=run.mesh,
        x=run.x, eps=first, block_size=run.block_size,
    )
    rows = []
    for eps in run.eps:
        tail = p.claims.levy_tail(1.0 / eps) if eps > 0 else math.nan
        approx = asymptotic_ruin_approx(run.x, eps, alpha, p.claims.levy_tail, K) if eps > 0 else math.nan
        rows.append({
            "eps": eps, "x": run.x, "alpha": alpha, "K": K.value, "method": K.method,
            "std_error": _f(K.std_error), "exponent": _f(K.exponent), "tail": tail, "approximation": approx,
        })
    _emit(rows, ASYMPTOTIC_COLUMNS, cfg)


@cli.command()
@_common
def optimal(cfg: ExperimentConfig):
    """pi*, K(pi*), K(0), and K for every family member."""
    alpha = _alpha(cfg)
    market = cfg.market_model()
    if market.n_assets != 1 or not isinstance(market.assets[0], GBM) or not market.rate.is_constant:
        raise ConfigError("optimal needs one GBM asset and a constant rate")
    asset = market.assets[0]
    r = float(market.rate.at(0.0))
    try:
        pi_star = asymptotically_optimal_pi(asset.mu, r, asset.sigma, alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sharpe = (asset.mu - r) / asset.sigma
    candidates = [("pi*", pi_star), ("no-investment", 0.0)]
    for block in cfg.family:
        strategy = cfg.build_strategy(block)
        if isinstance(strategy, AsymptoticallyOptimal):
            w = pi_star
        elif isinstance(strategy, ConstantStrategy):
            w = strategy.weights[0]
        else:
            raise ConfigError("optimal compares constant strategies only")
        candidates.append((strategy_label(block), w))
    ks = [(label, w, levy_constant(market, (w,), alpha)) for label, w in candidates]
    k0 = ks[1][2].value
    fam = ks[2:] or ks
    best, _ = family_infimum([((label, w), k) for label, w, k in fam])
    rows = [
        {
            "candidate": label, "pi": w, "K": k.value, "ratio_to_no_investment": k.value / k0,
            "sharpe": sharpe, "is_argmin": (label, w) == best,
        }
        for label, w, k in ks
    ]
    _emit(rows, OPTIMAL_COLUMNS, cfg)


def _check_reports(cfg: ExperimentConfig) -> list[tuple[str, object]]:
    alpha = _alpha(cfg)
    market = cfg.market_model()
    strategy = cfg.build_strategy()
    checks = cfg.checks
    out = []
    jump_assets = [(k, a) for k, a in enumerate(market.assets) if isinstance(a, ExpLevy) and a.jump_rate > 0]
    for k, a in jump_assets:
        rep = check_levy_moment_condition(a.jump_law, a.jump_rate, alpha, checks.delta, market.n_assets, checks.a)
        out.append((f"asset{k}", rep))
    if jump_assets:
        out.append(("strategy", check_no_short_selling(strategy)))
    for k, a in enumerate(market.assets):
        if isinstance(a, (GBM, DiffusionSV)):
            for rep in check_exponential_moment_conditions(strategy, a, alpha, checks.gamma, market.rate.bound):
                out.append((f"asset{k}", rep))
    return out


@cli.command()
@_common
def check(cfg: ExperimentConfig):
    """Run every applicable sufficient-condition checker."""
    try:
        reports = _check_reports(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    rows = [
        {
            "condition": r.condition, "target": target, "verdict": r.verdict.value, "method": r.method,
            "value": float(r.value), "detail": r.detail, "params": json.dumps(r.params, sort_keys=True),
        }
        for target, r in reports
    ]
    _emit(rows, CHECK_COLUMNS, cfg)
    failed = [r.condition for _, r in reports if r.verdict is Verdict.FAILS]
    if failed:
        raise CheckFailed(f"failed conditions: {', '.join(failed)}")


@cli.command()
@_common
def converge(cfg: ExperimentConfig):
    """Normalized ratios down the eps ladder, per family member."""
    run = cfg.run
    blocks = cfg.family or [cfg.strategy]
    rows = []
    for block in blocks:
        p = _problem(cfg, block)
        try:
            table = convergence_study(
                p, run.x, run.eps, run.n_paths, run.seed, tilt=run.tilt, mesh=run.mesh,
                workers=run.workers, block_size=run.block_size, label=strategy_label(block),
            )
        except ValueError as exc:
            if "ladder" in str(exc):
                raise ConfigError(str(exc)) from exc
            raise
        for row in table.rows:
            e = row.estimate
            rows.append({
                "strategy": table.label, "eps": row.eps, "n_paths": e.n_paths, "p_hat": e.p_hat,
                "ci_low": e.ci_low, "ci_high": e.ci_high, "normalized_ratio": e.normalized_ratio,
                "ratio_halfwidth": row.ratio_halfwidth, "limit": row.limit, "abs_error": row.abs_error,
                "approximation": row.approximation, "K": row.limit * run.x**table.alpha,
                "K_method": table.K.method, "seed": e.seed,
            })
    _emit(rows, CONVERGE_COLUMNS, cfg)


def main(argv=None) -> int:
    """Console entry point; returns the process exit code."""
    try:
        cli.main(args=argv, prog_name="ruinlab", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except CheckFailed as exc:
        click.echo(str(exc), err=True)
        return EXIT_CHECK_FAILED
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
