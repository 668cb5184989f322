"""
Command-line front end.

    nrdr generate --manifold strip --n 2000 --out strip.csv
    nrdr embed --in strip.csv --method nonredundant --d 3 --out proj.csv
    nrdr diagnose --in strip.csv --embedding proj.csv --json report.json

Exit codes: 0 ok, 1 runtime error, 2 usage error. A JSON file passed with
--config supplies defaults, keyed by command name ({"embed": {"d": 3}});
flags given on the command line win.
"""
import functools
import json
import logging
from typing import Any, Callable, Dict, List, Optional

import click
import numpy as np

from nrdr.config import get_settings
from nrdr.core.errors import NRDRError
from nrdr.schemas.report import (
    ClassifyReport,
    CompareReport,
    DiagnoseReport,
    EmbedReport,
    PlotDataReport,
    StripOracleSchema,
)
from nrdr.services import datasets, diagnostics
from nrdr.services.classify import classify as run_classification
from nrdr.services.embedding import EmbeddingEngine, MethodType
from nrdr.services.kernels import KernelKind, KernelSpec

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

MANIFOLDS = ["strip", "swissroll", "ring", "patches"]
METHODS = [m.value for m in MethodType]
KERNELS = [k.value for k in KernelKind]

REPORT_MODELS = {
    "diagnose": DiagnoseReport,
    "embed": EmbedReport,
    "classify": ClassifyReport,
    "compare": CompareReport,
    "plot": PlotDataReport,
}


def _load_config(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> None:
    if value is None:
        return
    try:
        with open(value, encoding="utf-8") as fh:
            defaults = json.load(fh)
    except (OSError, ValueError) as e:
        raise click.BadParameter(f"cannot read config file: {e}", ctx=ctx, param=param)
    if not isinstance(defaults, dict):
        raise click.BadParameter("config file must hold a JSON object", ctx=ctx, param=param)
    ctx.default_map = {**(ctx.default_map or {}), **defaults}


def _parse_list(value: Optional[str], cast: Callable[[str], Any], name: str) -> List[Any]:
    if value is None or value.strip() == "":
        return []
    try:
        return [cast(v.strip()) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a comma-separated list", param_hint=name)


def handle_errors(func):
    """Turn library and I/O errors into exit status 1 with a one-line message."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (NRDRError, OSError) as e:
            logger.debug("Command failed", exc_info=True)
            raise click.ClickException(str(e))
    return wrapper


def _kernel_spec(kernel: str, k: Optional[int], sigma: Optional[float], reg: Optional[float]) -> KernelSpec:
    return KernelSpec(kind=kernel, k=k, sigma=sigma, reg=reg)


def _method_config(**values: Any) -> Dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def _angular(value: Optional[str]) -> List[int]:
    return _parse_list(value, int, "--angular")


def kernel_options(func):
    func = click.option("--reg", type=float, default=None, help="LLE ridge, relative to the local Gram trace.")(func)
    func = click.option("--sigma", type=float, default=None, help="LEM heat bandwidth (default: mean edge length).")(func)
    func = click.option("--k", type=int, default=None, help="Neighbours in the kNN graph.")(func)
    func = click.option("--kernel", type=click.Choice(KERNELS), default="lem", show_default=True)(func)
    return func


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="JSON file with default option values.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Overrides NRDR_LOG_LEVEL.")
@click.option("--threads", type=int, default=None, help="Worker threads for neighbour search (default: all cores).")
def cli(log_level: Optional[str], threads: Optional[int]):
    """Non-redundant spectral dimensionality reduction."""
    settings = get_settings()
    logging.basicConfig(level=(log_level or settings.log_level).upper(), format=LOG_FORMAT)
    if threads is not None:
        if threads < 1:
            raise click.BadParameter("must be >= 1", param_hint="--threads")
        settings.n_jobs = threads


@cli.command()
@click.option("--manifold", type=click.Choice(MANIFOLDS), required=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--L1", "L1", type=float, default=2.5, show_default=True, help="Strip length.")
@click.option("--L2", "L2", type=float, default=1.0, show_default=True, help="Strip width.")
@click.option("--t-min", type=float, default=datasets.DEFAULT_SWISS_ROLL_TURNS[0], help="Swiss roll start angle.")
@click.option("--t-max", type=float, default=datasets.DEFAULT_SWISS_ROLL_TURNS[1], help="Swiss roll end angle.")
@click.option("--height", type=float, default=10.0, show_default=True, help="Swiss roll height.")
@click.option("--outer-radius", type=float, default=5.0, show_default=True, help="Ring radius R.")
@click.option("--tube-radius", type=float, default=1.0, show_default=True, help="Ring tube radius r.")
@click.option("--image", type=click.Path(dir_okay=False), default=None, help="Headerless CSV image (patches).")
@click.option("--patch", type=int, default=7, show_default=True)
@click.option("--stride", type=int, default=4, show_default=True)
@click.option("--cover-edges", is_flag=True, help="Also take the border-aligned last window.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@handle_errors
def generate(manifold, n, seed, L1, L2, t_min, t_max, height, outer_radius, tube_radius,
             image, patch, stride, cover_edges, out):
    """Write a synthetic point cloud as CSV."""
    if manifold == "strip":
        cloud = datasets.gen_strip(n, L1, L2, seed)
    elif manifold == "swissroll":
        cloud = datasets.gen_swiss_roll(n, (t_min, t_max), height, seed)
    elif manifold == "ring":
        cloud = datasets.gen_ring(n, outer_radius, tube_radius, seed)
    else:
        if image is None:
            raise click.UsageError("--image is required for --manifold patches")
        cloud = datasets.extract_patches(datasets.load_image_csv(image), patch, stride, cover_edges)

    datasets.save_csv(cloud, out)
    click.echo(f"Wrote {cloud.n} points ({cloud.dim}-D) to {out}")


@cli.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Projections CSV.")
@click.option("--method", type=click.Choice(METHODS), default="nonredundant", show_default=True)
@kernel_options
@click.option("--d", type=int, default=2, show_default=True)
@click.option("--d-large", type=int, default=None, help="Candidate columns for dsilva (default 2d).")
@click.option("--alpha", type=float, default=None, help="Smoother bandwidth factor.")
@click.option("--sv-threshold", type=float, default=None, help="Relative singular-value cutoff (default 0.03).")
@click.option("--smoother-cap", type=int, default=None, help="Neighbours per smoother row.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None, help="Also write a JSON run report.")
@click.option("--plot-data", type=click.Path(dir_okay=False), default=None,
              help="Stem for <stem>.csv / <stem>.json plotting files.")
@handle_errors
def embed(in_path, out, method, kernel, k, sigma, reg, d, d_large, alpha, sv_threshold,
          smoother_cap, seed, report, plot_data):
    """Embed a point cloud."""
    cloud = datasets.load_csv(in_path)
    spec = _kernel_spec(kernel, k, sigma, reg)
    engine = EmbeddingEngine(_method_config(
        alpha=alpha, sv_threshold=sv_threshold, neighbor_cap=smoother_cap, seed=seed, d_large=d_large,
    ))
    embedding = engine.get_method(method).embed(cloud, spec, d)

    datasets.save_embedding_csv(embedding.projections, out)
    if report:
        payload = EmbedReport(version=get_settings().report_version, **embedding.to_dict())
        _write_text(report, payload.model_dump_json(indent=2))
    if plot_data:
        diagnostics.emit_plot_data(embedding, cloud, plot_data)

    for notice in embedding.notices:
        click.echo(f"notice: {notice}", err=True)
    click.echo(f"Wrote {embedding.d} projections of {embedding.n} points to {out}")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _is_strip(cloud: datasets.PointCloud) -> bool:
    return (
        cloud.intrinsic is not None
        and cloud.intrinsic.shape == cloud.points.shape == (cloud.n, 2)
        and np.array_equal(cloud.intrinsic, cloud.points)
    )


def build_diagnose_report(
    cloud: datasets.PointCloud,
    projections: np.ndarray,
    alpha: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
    strip_lengths: Optional[tuple] = None,
) -> DiagnoseReport:
    settings = get_settings()
    alpha = settings.alpha if alpha is None else alpha
    scores = diagnostics.redundancy_scores(projections, alpha, neighbor_cap)

    report = DiagnoseReport(
        version=settings.report_version,
        n=projections.shape[0],
        d=projections.shape[1],
        alpha=alpha,
        redundancy_scores=scores.tolist(),
    )
    if cloud.intrinsic is not None:
        report.spearman = diagnostics.intrinsic_correlation(projections, cloud, "spearman").tolist()
        report.pearson = diagnostics.intrinsic_correlation(projections, cloud, "pearson").tolist()
    if strip_lengths or _is_strip(cloud):
        L1, L2 = strip_lengths if strip_lengths else (None, None)
        oracle = diagnostics.strip_oracle(projections, cloud, L1, L2)
        report.strip_oracle = StripOracleSchema(**oracle.to_dict())
    return report


@cli.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True, help="Point cloud CSV.")
@click.option("--embedding", "embedding_path", type=click.Path(dir_okay=False), required=True,
              help="Projections CSV written by embed.")
@click.option("--alpha", type=float, default=None)
@click.option("--smoother-cap", type=int, default=None)
@click.option("--angular", type=str, default=None, help="Comma-separated circular intrinsic columns.")
@click.option("--strip-lengths", type=float, nargs=2, default=None,
              help="L1 L2 of a strip (detected automatically for generated strips).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@handle_errors
def diagnose(in_path, embedding_path, alpha, smoother_cap, angular, strip_lengths, json_path):
    """Redundancy scores, intrinsic correlations and the strip oracle."""
    cloud = datasets.load_csv(in_path, angular=_angular(angular))
    projections = datasets.load_embedding_csv(embedding_path)
    if projections.shape[0] != cloud.n:
        raise click.ClickException(
            f"embedding has {projections.shape[0]} rows but the cloud has {cloud.n} points"
        )

    report = build_diagnose_report(cloud, projections, alpha, smoother_cap, strip_lengths or None)
    if json_path:
        _write_text(json_path, report.model_dump_json(indent=2))

    for i, score in enumerate(report.redundancy_scores, start=1):
        line = f"projection {i}: redundancy score {score:.3f}"
        if report.spearman is not None:
            line += "  |spearman| " + " ".join(f"{c:.3f}" for c in report.spearman[i - 1])
        click.echo(line)
    if report.strip_oracle is not None:
        oracle = report.strip_oracle
        modes = ", ".join(f"({m.k1},{m.k2}){'' if m.confident else '?'}" for m in oracle.matches)
        click.echo(f"strip modes: {modes}; leading x1 modes: {oracle.leading_x1_modes}")
        if oracle.quadratic_residual is not None:
            click.echo(f"quadratic identity residual: {oracle.quadratic_residual:.4f}")


@cli.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True,
              help="Point cloud CSV with a label column.")
@click.option("--methods", type=str, default="baseline,nonredundant", show_default=True)
@kernel_options
@click.option("--d-list", type=str, default="1,2,3", show_default=True)
@click.option("--alpha-grid", type=str, default="0.1,0.3,0.5", show_default=True)
@click.option("--sv-threshold", type=float, default=None)
@click.option("--smoother-cap", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@handle_errors
def classify(in_path, methods, kernel, k, sigma, reg, d_list, alpha_grid, sv_threshold,
             smoother_cap, seed, json_path):
    """Nearest-neighbour test error on embeddings of a labeled cloud."""
    method_names = _parse_list(methods, str, "--methods")
    unknown = [m for m in method_names if m not in METHODS]
    if unknown:
        raise click.BadParameter(f"unknown methods {unknown}", param_hint="--methods")
    dims = _parse_list(d_list, int, "--d-list")
    alphas = _parse_list(alpha_grid, float, "--alpha-grid")

    cloud = datasets.load_csv(in_path)
    if cloud.labels is None:
        raise click.UsageError(f"{in_path} has no 'label' column")

    rows = run_classification(
        cloud, _kernel_spec(kernel, k, sigma, reg),
        methods=method_names, d_list=dims, alpha_grid=alphas, seed=seed,
        config=_method_config(sv_threshold=sv_threshold, neighbor_cap=smoother_cap),
    )
    report = ClassifyReport(
        version=get_settings().report_version, n=cloud.n, rows=[r.to_dict() for r in rows]
    )
    if json_path:
        _write_text(json_path, report.model_dump_json(indent=2))

    click.echo(f"{'method':<14}{'d':>3}{'alpha':>8}{'tune':>9}{'test':>9}")
    for r in rows:
        alpha = "-" if r.alpha is None else f"{r.alpha:g}"
        click.echo(f"{r.method:<14}{r.d:>3}{alpha:>8}{r.tune_error:>9.2%}{r.test_error:>9.2%}")


@cli.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@click.option("--methods", type=str, default=",".join(METHODS), show_default=True)
@kernel_options
@click.option("--d", type=int, default=3, show_default=True)
@click.option("--alpha", type=float, default=None)
@click.option("--sv-threshold", type=float, default=None)
@click.option("--smoother-cap", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--angular", type=str, default=None, help="Comma-separated circular intrinsic columns.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@handle_errors
def compare(in_path, methods, kernel, k, sigma, reg, d, alpha, sv_threshold, smoother_cap,
            seed, angular, json_path):
    """Run several methods on one cloud and compare their redundancy."""
    method_names = _parse_list(methods, str, "--methods")
    unknown = [m for m in method_names if m not in METHODS]
    if unknown:
        raise click.BadParameter(f"unknown methods {unknown}", param_hint="--methods")

    cloud = datasets.load_csv(in_path, angular=_angular(angular))
    engine = EmbeddingEngine(_method_config(
        alpha=alpha, sv_threshold=sv_threshold, neighbor_cap=smoother_cap, seed=seed,
    ))
    rows = engine.compare(cloud, _kernel_spec(kernel, k, sigma, reg), d, method_names)
    if json_path:
        report = CompareReport(version=get_settings().report_version, n=cloud.n, rows=rows)
        _write_text(json_path, report.model_dump_json(indent=2))

    for row in rows:
        if "error" in row:
            click.echo(f"{row['method']:<14}{row['error']}")
            continue
        scores = " ".join(f"{s:.3f}" for s in row["redundancy_scores"])
        click.echo(f"{row['method']:<14}scores {scores}")
        for i, corr in enumerate(row.get("intrinsic_correlation", []), start=1):
            click.echo(f"{'':<14}projection {i} |spearman| " + " ".join(f"{c:.3f}" for c in corr))

    if all("error" in row for row in rows):
        raise click.ClickException("every method failed")


@cli.command()
@click.option("--report", type=click.Choice(sorted(REPORT_MODELS)), default="diagnose", show_default=True)
def schema(report):
    """Print the JSON schema of a report."""
    click.echo(json.dumps(REPORT_MODELS[report].model_json_schema(), indent=2))

