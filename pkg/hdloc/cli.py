# stdlib imports
import contextlib
import dataclasses
import logging
from typing import List, Optional

# third party imports
import pandas as pd
import typer
from rich import print_json
from rich.console import Console
from rich.logging import RichHandler

# local imports
from .are import DEFAULT_LAWS, are_frame, are_over_m, are_table
from .combine import joint_independence_diagnostic
from .exceptions import DegenerateSampleError, InvalidInputError, NumericalFailureError
from .methods import NINE_METHODS, parse_method, run_method
from .models import RadialLaw, Sample, ScaleMode, SolverOptions
from .simulation import SimConfig, run_bahadur_diagnostic, run_experiment, run_gumbel_qq
from .timeseries import DEFAULT_LAGS, SeriesPanel, prefilter_panel, run_subsample_experiment, synthetic_return_panel


app = typer.Typer(help="Weighted spatial-sign tests for high-dimensional location.")

diagnose_app = typer.Typer(help="Monte Carlo diagnostics of the asymptotic theory.")

EXIT_INVALID_INPUT = 1
EXIT_DEGENERATE = 2
EXIT_NUMERICAL = 3


def configure_logging(verbose: bool) -> None:
    if not verbose:
        return
    logging.basicConfig(
        level=logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@contextlib.contextmanager
def exit_on_error():
    """Print library errors in red on stderr and exit with the matching code."""
    try:
        yield
    except InvalidInputError as e:
        typer.secho(f"Invalid input: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=EXIT_INVALID_INPUT)
    except DegenerateSampleError as e:
        typer.secho(f"Degenerate data: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=EXIT_DEGENERATE)
    except NumericalFailureError as e:
        typer.secho(f"Numerical failure: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=EXIT_NUMERICAL)


def check_format(format: str) -> None:
    if format not in ("text", "json"):
        typer.secho("--format must be 'text' or 'json'", fg=typer.colors.RED, err=True)
        raise typer.Exit(code=EXIT_INVALID_INPUT)


def echo_frame(frame, format: str) -> None:
    if format == "json":
        print_json(data=frame.to_dict(orient="records"))
    else:
        typer.echo(frame.to_string(index=False))


@app.command()
def test(
    input: str = typer.Option(..., help="CSV file: first row variable names, then one observation per row"),
    method: str = typer.Option("in-cc", help=f"Test to run: one of {', '.join(t.lower() for t in NINE_METHODS)}"),
    alpha: float = typer.Option(0.05, help="Significance level"),
    weight_m: Optional[float] = typer.Option(None, help="Weight exponent m <= 1; overrides the IN/SS prefix of --method"),
    exact: bool = typer.Option(True, "--exact/--shared-scale", help="Leave-two-out scales (exact) or one shared scale for the sum statistic"),
    tol: float = typer.Option(1e-8, help="Solver tolerance on both estimating equations"),
    max_iter: int = typer.Option(200, help="Maximum solver iterations"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Test H0: theta = 0 on a data file.
    """
    check_format(format)
    configure_logging(verbose)
    scale_mode = ScaleMode.EXACT if exact else ScaleMode.SHARED
    with exit_on_error():
        spec = parse_method(method, weight_m)
        sample = Sample.read_csv(input)
        if verbose:
            typer.secho(f"Running {spec.tag} on n={sample.n}, p={sample.p} ({scale_mode.value}) ...", fg=typer.colors.YELLOW, err=True)
        result = run_method(sample, spec, alpha, scale_mode, SolverOptions(tol, max_iter))
    if format == "json":
        print_json(data=result.to_dict())
        return
    data = result.to_dict()
    typer.echo(f"method:     {data['method']}")
    typer.echo(f"statistic:  {data['statistic']:.6f}")
    typer.echo(f"p-value:    {data['p_value']:.6g}")
    if "p_max" in data:
        typer.echo(f"p-max:      {data['p_max']:.6g}")
        typer.echo(f"p-sum:      {data['p_sum']:.6g}")
    typer.echo(f"alpha:      {data['alpha']:g}")
    typer.echo(f"reject:     {'yes' if data['reject'] else 'no'}")
    if data["scale_mode"]:
        typer.echo(f"scale mode: {data['scale_mode']}")
    for warning in data["warnings"]:
        typer.secho(f"[warn] {warning}", fg=typer.colors.YELLOW, err=True)


@app.command()
def simulate(
    config: str = typer.Option(..., help="JSON experiment config"),
    out: Optional[str] = typer.Option(None, help="Write the report CSV here instead of stdout"),
    exact: bool = typer.Option(False, "--exact", help="Use exact leave-two-out scales instead of the config's scale_mode"),
    workers: Optional[int] = typer.Option(None, help="Override the config's parallelism"),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Run a size experiment, or a power experiment when the config has a sweep.
    """
    configure_logging(verbose)
    with exit_on_error():
        sim_config = load_config(config, exact, workers)
        report = run_experiment(sim_config)
    if out:
        report.write_csv(out)
        typer.echo(f"Wrote {len(report.rows)} rows to {out}")
    else:
        typer.echo(report.to_csv_text(), nl=False)
    for tag in report.flagged:
        typer.secho(f"[warn] {tag} failed in more than 1% of replications", fg=typer.colors.YELLOW, err=True)


def load_config(path: str, exact: bool = False, workers: Optional[int] = None) -> SimConfig:
    sim_config = SimConfig.load(path)
    if exact:
        sim_config = dataclasses.replace(sim_config, scale_mode=ScaleMode.EXACT.value)
    if workers is not None:
        sim_config = dataclasses.replace(sim_config, parallelism=workers)
    return sim_config


@app.command()
def are(
    dist: Optional[str] = typer.Option(None, help="Radial law: 'normal', 't' or 'mixture'; omit for the full table"),
    df: Optional[float] = typer.Option(None, help="Degrees of freedom for --dist t"),
    gamma: Optional[float] = typer.Option(None, help="Contamination weight for --dist mixture"),
    sigma: Optional[float] = typer.Option(None, help="Inflation factor for --dist mixture"),
    mc_draws: Optional[int] = typer.Option(None, help="Estimate by Monte Carlo with this many draws instead of closed form"),
    seed: int = typer.Option(0, help="Seed for Monte Carlo mode"),
    weight_m: Optional[List[float]] = typer.Option(None, help="Report ARE(IN-MAX, W(m)-MAX) for these m (repeatable)"),
    out: Optional[str] = typer.Option(None, help="Also write the table as CSV"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
):
    """
    Asymptotic relative efficiencies of IN-MAX, SS-MAX and MAX.
    """
    check_format(format)
    with exit_on_error():
        laws = DEFAULT_LAWS if dist is None else [law_from_options(dist, df, gamma, sigma)]
        if weight_m:
            frame = pd.concat([are_over_m(law, weight_m) for law in laws], ignore_index=True)
        else:
            mode = "closed-form" if mc_draws is None else "mc"
            reports = are_table(laws, mode, mc_draws or 0, seed)
            frame = are_frame(reports)
    if out:
        frame.to_csv(out, index=False, float_format="%.6f")
    echo_frame(frame, format)


def law_from_options(dist: str, df: Optional[float], gamma: Optional[float], sigma: Optional[float]) -> RadialLaw:
    if dist == "normal":
        return RadialLaw.normal()
    if dist == "t":
        if df is None:
            raise InvalidInputError("--dist t needs --df")
        return RadialLaw.t(df)
    if dist == "mixture":
        if gamma is None or sigma is None:
            raise InvalidInputError("--dist mixture needs --gamma and --sigma")
        return RadialLaw.mixture(gamma, sigma)
    raise InvalidInputError(f"--dist must be 'normal', 't' or 'mixture', got {dist!r}")


@app.command()
def prefilter(
    input: str = typer.Option(..., help="CSV return panel: first row asset labels, one period per row"),
    lags: int = typer.Option(DEFAULT_LAGS, help="Ljung-Box lag count"),
    alpha: float = typer.Option(0.05, help="Drop columns whose Ljung-Box p-value is below this level"),
    risk_free: Optional[float] = typer.Option(None, help="Subtract a constant risk-free rate first"),
    out: Optional[str] = typer.Option(None, help="Write the retained columns here"),
    report: Optional[str] = typer.Option(None, help="Write the per-column Ljung-Box report here"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Remove autocorrelated series with a Ljung-Box test.
    """
    check_format(format)
    configure_logging(verbose)
    with exit_on_error():
        panel = SeriesPanel.read_csv(input)
        if risk_free is not None:
            panel = panel.excess_returns(risk_free)
        retained, prefilter_report = prefilter_panel(panel, lags, alpha)
    if out:
        retained.write_csv(out)
    if report:
        prefilter_report.to_frame().to_csv(report, index=False, float_format="%.6g")
    if format == "json":
        print_json(data={"retained": prefilter_report.retained, "dropped": prefilter_report.dropped})
    else:
        typer.echo(f"Retained {retained.width} of {panel.width} columns")
        for label in prefilter_report.dropped:
            typer.echo(f"dropped: {label}")


@app.command()
def subsample(
    input: Optional[str] = typer.Option(None, help="CSV return panel; omit to use a synthetic 716 x 424 panel"),
    lags: int = typer.Option(DEFAULT_LAGS, help="Ljung-Box lag count for the prefilter"),
    prefilter_alpha: float = typer.Option(0.05, help="Ljung-Box level of the prefilter"),
    risk_free: Optional[float] = typer.Option(None, help="Subtract a constant risk-free rate first"),
    k_min: int = typer.Option(3, help="Smallest K; subsamples have n = 52K rows"),
    k_max: int = typer.Option(8, help="Largest K"),
    reps: int = typer.Option(100, help="Subsamples per K"),
    alpha: float = typer.Option(0.05, help="Significance level of the tests"),
    method: Optional[List[str]] = typer.Option(None, help="Method tags (repeatable); default all nine"),
    seed: int = typer.Option(0, help="Seed for subsampling and the synthetic panel"),
    exact: bool = typer.Option(False, "--exact", help="Use exact leave-two-out scales"),
    workers: int = typer.Option(1, help="Worker processes"),
    out: Optional[str] = typer.Option(None, help="Write the rejection-rate CSV here instead of stdout"),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Prefilter a return panel, then report rejection rates on random subsamples.
    """
    configure_logging(verbose)
    with exit_on_error():
        panel = SeriesPanel.read_csv(input) if input else synthetic_return_panel(seed=seed)
        if risk_free is not None:
            panel = panel.excess_returns(risk_free)
        retained, prefilter_report = prefilter_panel(panel, lags, prefilter_alpha)
        if verbose:
            typer.secho(f"Prefilter kept {retained.width} of {panel.width} columns", fg=typer.colors.YELLOW, err=True)
        report = run_subsample_experiment(
            retained,
            methods=method or NINE_METHODS,
            k_values=range(k_min, k_max + 1),
            reps=reps,
            alpha=alpha,
            seed=seed,
            scale_mode=ScaleMode.EXACT if exact else ScaleMode.SHARED,
            parallelism=workers,
        )
    if out:
        report.write_csv(out)
        typer.echo(f"Wrote {len(report.rows)} rows to {out}")
    else:
        typer.echo(report.to_csv_text(), nl=False)


@diagnose_app.command()
def bahadur(
    config: str = typer.Option(..., help="JSON experiment config; n_grid sets the sample sizes"),
    out: Optional[str] = typer.Option(None, help="Also write the table as CSV"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Size of the Bahadur remainder of the location estimate over an n-grid.
    """
    check_format(format)
    configure_logging(verbose)
    with exit_on_error():
        frame = run_bahadur_diagnostic(load_config(config))
    if out:
        frame.to_csv(out, index=False, float_format="%.6f")
    echo_frame(frame, format)


@diagnose_app.command("gumbel-qq")
def gumbel_qq(
    config: str = typer.Option(..., help="JSON experiment config (null signal)"),
    out: Optional[str] = typer.Option(None, help="Also write the QQ table as CSV"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Null quantiles of the max-type statistic against its Gumbel limit.
    """
    check_format(format)
    configure_logging(verbose)
    with exit_on_error():
        qq = run_gumbel_qq(load_config(config))
    if out:
        qq.table.to_csv(out, index=False, float_format="%.6f")
    if format == "json":
        print_json(data={"max_cdf_gap": qq.max_cdf_gap, "reps": qq.reps, "errors": qq.errors,
                         "table": qq.table.to_dict(orient="records")})
    else:
        typer.echo(qq.table.to_string(index=False))
        typer.echo(f"max CDF gap: {qq.max_cdf_gap:.4f} ({qq.reps - qq.errors} of {qq.reps} replications)")


@diagnose_app.command()
def independence(
    config: str = typer.Option(..., help="JSON experiment config; signal sets the alternative"),
    format: str = typer.Option("text", help="Output format: 'text' (default) or 'json'."),
    verbose: bool = typer.Option(False, help="Print status messages to stderr."),
):
    """
    Correlation of the max and sum statistics and uniformity of the combined p-value.
    """
    check_format(format)
    configure_logging(verbose)
    with exit_on_error():
        sim_config = load_config(config)
        result = joint_independence_diagnostic(
            sim_config.setting_like,
            sim_config.n,
            sim_config.p,
            sim_config.weight,
            sim_config.reps,
            sim_config.seed,
            signal=sim_config.signal,
            scale_mode=sim_config.scale_mode,
            parallelism=sim_config.parallelism,
        )
    if format == "json":
        print_json(data=result.to_dict())
    else:
        typer.echo(f"correlation: {result.correlation:.4f}")
        typer.echo(f"KS distance: {result.ks_distance:.4f}")
        typer.echo(f"errors:      {result.errors} of {result.reps}")


app.add_typer(diagnose_app, name="diagnose")


if __name__ == "__main__":
    app()
