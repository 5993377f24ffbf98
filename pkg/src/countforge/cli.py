"""countforge command line: corpus generation, inference, evaluation.

Exit codes: 0 on success, 1 when some per-image inferences failed, 2 on
configuration or usage errors.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .client import EndpointConfig, HttpVisionClient
from .core import (
    AnnotationFormat,
    AnnotationSet,
    CountRange,
    Split,
    load_annotations,
)
from .corpus import (
    build_baseline_corpus,
    build_crco_corpus,
    build_d3t_corpus,
    build_single_round_corpus,
    write_corpus,
)
from .dialogue import D3TConfig, SingleRoundConfig
from .errors import CountforgeError, EmptyResults
from .figures import save_report_figures
from .inference import (
    FusionMode,
    GlceConfig,
    read_results_jsonl,
    run_benchmark,
    write_results_jsonl,
)
from .metrics import evaluate, render_table, report_to_dict
from .mockmodel import MockBehaviorProfile, MockModel, generate_scene, write_scene_image
from .ranking import CrcoConfig, CrcoMode, rng_stream
from .runconfig import OptionResolver, load_config_file

logger = logging.getLogger(__name__)

_FORMAT_CHOICES = click.Choice(["native-json", "points-json"])
_SPLIT_CHOICES = click.Choice(["train", "val", "test"])


def annotation_options(fn):
    fn = click.option(
        "--annotations",
        "annotations_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Annotation JSON file.",
    )(fn)
    fn = click.option(
        "--annotation-format",
        type=_FORMAT_CHOICES,
        default="native-json",
        show_default=True,
    )(fn)
    fn = click.option("--split", type=_SPLIT_CHOICES, default="train", show_default=True)(fn)
    return fn


def _load(annotations_path: str, annotation_format: str, split: str) -> AnnotationSet:
    return load_annotations(
        annotations_path,
        format=AnnotationFormat(annotation_format.replace("-", "_")),
        split=Split(split),
    )


def _usage(exc: Exception) -> click.UsageError:
    return click.UsageError(str(exc))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="TOML config file; COUNTFORGE_* env vars and flags override it.",
)
@click.option("--verbose", is_flag=True, help="Debug-level logging.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Corpus synthesis, tiled counting inference, and evaluation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        ctx.obj = load_config_file(config_path) if config_path else {}
    except Exception as exc:
        raise _usage(exc) from exc


@main.command("gen-baseline")
@annotation_options
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def gen_baseline(ctx, annotations_path, annotation_format, split, out) -> None:
    """Emit one count question/answer sample per annotated image."""
    resolver = OptionResolver("gen-baseline", ctx.obj)
    resolver.record("annotations", annotations_path)
    resolver.record("annotation_format", annotation_format)
    resolver.record("split", split)
    try:
        annotations = _load(annotations_path, annotation_format, split)
        samples = build_baseline_corpus(annotations, resolver.run_config().fingerprint())
    except CountforgeError as exc:
        raise _usage(exc) from exc
    write_corpus(samples, out)
    if not samples:
        click.echo("warning: annotation file had no records; wrote an empty corpus", err=True)
    click.echo(f"wrote {len(samples)} samples to {out}")


@main.command("gen-d3t")
@annotation_options
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option(
    "--mode",
    "d3t_mode",
    type=click.Choice(["multi-round", "single-round"]),
    default="multi-round",
    show_default=True,
)
@click.option("--lower", type=int, default=None, help="Initial range lower bound [default: 1].")
@click.option("--upper", type=int, default=None, help="Initial range upper bound [default: 2000].")
@click.option("--delta-ratio", type=float, default=None, help="Stopping ratio [default: 0.2].")
@click.option("--min-delta", type=float, default=None, help="Stopping floor in counts [default: 1.0].")
@click.option("--per-category-range", is_flag=True, default=None,
              help="Use each category's count extrema as the initial range.")
@click.option("--clamp", is_flag=True, default=None,
              help="Widen the initial range instead of erroring on out-of-range counts.")
@click.option("--delta", "--interval", "interval", type=int, default=None,
              help="Sub-range width for single-round mode [default: 300].")
@click.pass_context
def gen_d3t(ctx, annotations_path, annotation_format, split, out, d3t_mode,
            lower, upper, delta_ratio, min_delta, per_category_range, clamp, interval) -> None:
    """Emit range-dialogue samples (multi-round or single-round)."""
    resolver = OptionResolver("gen-d3t", ctx.obj)
    resolver.record("annotations", annotations_path)
    resolver.record("annotation_format", annotation_format)
    resolver.record("split", split)
    resolver.record("mode", d3t_mode)
    lower = resolver.resolve("lower", lower, 1)
    upper = resolver.resolve("upper", upper, 2000)
    delta_ratio = resolver.resolve("delta_ratio", delta_ratio, 0.2)
    min_delta = resolver.resolve("min_delta", min_delta, 1.0)
    per_category_range = bool(resolver.resolve("per_category_range", per_category_range, False))
    clamp = bool(resolver.resolve("clamp", clamp, False))
    interval = resolver.resolve("interval", interval, 300)
    fingerprint = resolver.run_config().fingerprint()
    try:
        annotations = _load(annotations_path, annotation_format, split)
        if d3t_mode == "single-round":
            cfg = SingleRoundConfig(interval=interval, initial_range=CountRange(lower, upper))
            samples = build_single_round_corpus(annotations, cfg, fingerprint)
        else:
            cfg = D3TConfig(
                initial_range=CountRange(lower, upper),
                delta_ratio=delta_ratio,
                min_delta=min_delta,
                per_category_range=per_category_range,
                clamp=clamp,
            )
            samples = build_d3t_corpus(annotations, cfg, fingerprint)
    except (CountforgeError, ValueError) as exc:
        raise _usage(exc) from exc
    write_corpus(samples, out)
    if not samples:
        click.echo("warning: annotation file had no records; wrote an empty corpus", err=True)
    click.echo(f"wrote {len(samples)} samples to {out}")


@main.command("gen-crco")
@annotation_options
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option(
    "--mode",
    "crco_mode",
    type=click.Choice(["stratified", "random", "cross-category", "semi-cross", "scrco"]),
    default="stratified",
    show_default=True,
)
@click.option("--k", type=int, default=None, help="Images per ranking set [default: 4].")
@click.option("--sets-per-category", type=int, default=None, help="[default: 1]")
@click.option("--seed", type=int, default=None, help="[default: 0]")
@click.option("--grouping-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Semantic grouping JSON (required for semi-cross).")
@click.option("--fractions", default=None,
              help="Comma-separated crop fractions for scrco mode [default: 1,0.75,0.5,0.25].")
@click.pass_context
def gen_crco(ctx, annotations_path, annotation_format, split, out, crco_mode,
             k, sets_per_category, seed, grouping_file, fractions) -> None:
    """Emit compare-and-rank samples under the chosen sampling mode."""
    resolver = OptionResolver("gen-crco", ctx.obj)
    resolver.record("annotations", annotations_path)
    resolver.record("annotation_format", annotation_format)
    resolver.record("split", split)
    resolver.record("mode", crco_mode)
    k = resolver.resolve("k", k, 4)
    sets_per_category = resolver.resolve("sets_per_category", sets_per_category, 1)
    seed = resolver.resolve("seed", seed, 0)
    resolver.record("grouping_file", grouping_file)
    fractions_raw = resolver.resolve("fractions", fractions, "1,0.75,0.5,0.25")
    fingerprint = resolver.run_config().fingerprint()
    try:
        scrco_fractions = tuple(float(f) for f in str(fractions_raw).split(","))
    except ValueError as exc:
        raise _usage(f"bad --fractions value {fractions_raw!r}") from exc
    try:
        cfg = CrcoConfig(
            k=k,
            mode=CrcoMode(crco_mode.replace("-", "_")),
            grouping_file=grouping_file,
            sets_per_category=sets_per_category,
            seed=seed,
        )
        annotations = _load(annotations_path, annotation_format, split)
        samples = build_crco_corpus(
            annotations, cfg, fingerprint, scrco_fractions=scrco_fractions
        )
    except (CountforgeError, ValueError) as exc:
        raise _usage(exc) from exc
    write_corpus(samples, out)
    if not samples:
        click.echo("warning: no ranking sets could be built; wrote an empty corpus", err=True)
    click.echo(f"wrote {len(samples)} samples to {out}")


def _parse_tiers(raw: str) -> tuple[tuple[int, int], ...]:
    tiers = []
    for part in raw.split(","):
        bound, grid = part.split(":")
        tiers.append((int(bound), int(grid)))
    return tuple(tiers)


@main.command("infer")
@annotation_options
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--image-root", type=click.Path(file_okay=False), default=None,
              help="Directory image paths are relative to [default: .].")
@click.option("--base-url", default=None, help="Chat-completions endpoint base URL.")
@click.option("--model", "model_name", default=None, help="Model name sent to the endpoint.")
@click.option("--api-key-env", default=None,
              help="Environment variable holding the API key [default: COUNTFORGE_API_KEY].")
@click.option("--timeout", type=float, default=None, help="Per-request timeout seconds [default: 60].")
@click.option("--max-retries", type=int, default=None, help="[default: 1]")
@click.option("--concurrency", type=int, default=None,
              help="Max in-flight requests [default: 4].")
@click.option("--dense-threshold", type=int, default=None,
              help="Global count at which tiling kicks in [default: 100].")
@click.option("--grid", type=int, default=None, help="Tile grid size L [default: 2].")
@click.option("--adaptive-tiers", default=None,
              help="Count-tiered grids, e.g. '0:1,100:2,300:3' (overrides --grid).")
@click.option("--fusion", type=click.Choice(["mean", "global-only", "local-only"]),
              default=None, help="[default: mean]")
@click.option("--max-tokens", type=int, default=None,
              help="Reply token budget per query [default: 64].")
@click.option("--temperature", type=float, default=None,
              help="Sampling temperature; 0 is greedy decoding [default: 0].")
@click.option("--jobs", type=int, default=None, help="Images processed in parallel [default: 1].")
@click.option("--seed", type=int, default=None, help="Seed for mock scenes [default: 0].")
@click.option("--mock", is_flag=True, default=None,
              help="Use the built-in simulated counter over synthetic scenes.")
@click.option("--mock-radius", type=float, default=None,
              help="Object radius of synthetic scenes in pixels [default: 5].")
@click.option("--mock-exact", is_flag=True, default=None,
              help="Mock replies use exact counts (no bias profile).")
@click.option("--mock-scene-dir", type=click.Path(file_okay=False), default=None,
              help="Where synthetic scene images are written [default: <out dir>/mock_scenes].")
@click.pass_context
def infer(ctx, annotations_path, annotation_format, split, out, image_root,
          base_url, model_name, api_key_env, timeout, max_retries, concurrency,
          dense_threshold, grid, adaptive_tiers, fusion, max_tokens, temperature,
          jobs, seed, mock, mock_radius, mock_exact, mock_scene_dir) -> None:
    """Run counting inference over a dataset, writing JSONL results."""
    resolver = OptionResolver("infer", ctx.obj)
    resolver.record("annotations", annotations_path)
    resolver.record("annotation_format", annotation_format)
    resolver.record("split", split)
    image_root = resolver.resolve("image_root", image_root, ".")
    base_url = resolver.resolve("base_url", base_url, "")
    model_name = resolver.resolve("model_name", model_name, "")
    api_key_env = resolver.resolve("api_key_env", api_key_env, "COUNTFORGE_API_KEY")
    timeout = resolver.resolve("timeout", timeout, 60.0)
    max_retries = resolver.resolve("max_retries", max_retries, 1)
    concurrency = resolver.resolve("concurrency", concurrency, 4)
    dense_threshold = resolver.resolve("dense_threshold", dense_threshold, 100)
    grid = resolver.resolve("grid", grid, 2)
    adaptive_tiers = resolver.resolve("adaptive_tiers", adaptive_tiers, "")
    fusion = resolver.resolve("fusion", fusion, "mean")
    max_tokens = resolver.resolve("max_tokens", max_tokens, 64)
    temperature = resolver.resolve("temperature", temperature, 0.0)
    seed = resolver.resolve("seed", seed, 0)
    # Parallelism never changes results, so it stays out of the fingerprint.
    jobs = jobs if jobs is not None else 1
    mock = bool(resolver.resolve("mock", mock, False))
    mock_radius = resolver.resolve("mock_radius", mock_radius, 5.0)
    mock_exact = bool(resolver.resolve("mock_exact", mock_exact, False))
    resolver.record("mock_scene_dir", mock_scene_dir)
    run_config = resolver.run_config()
    fingerprint = run_config.fingerprint()

    try:
        tiers = _parse_tiers(adaptive_tiers) if adaptive_tiers else None
    except ValueError as exc:
        raise _usage(f"bad --adaptive-tiers value {adaptive_tiers!r}") from exc
    try:
        cfg = GlceConfig(
            dense_threshold=dense_threshold,
            grid_l=grid,
            adaptive_tiers=tiers,
            fusion=FusionMode(fusion.replace("-", "_")),
        )
        annotations = _load(annotations_path, annotation_format, split)
    except (CountforgeError, ValueError) as exc:
        raise _usage(exc) from exc

    if mock:
        scene_dir = Path(mock_scene_dir or Path(out).parent / "mock_scenes")
        scene_dir.mkdir(parents=True, exist_ok=True)
        model = MockModel(MockBehaviorProfile(seed=seed), exact=mock_exact)
        records = []
        for rec in annotations.records:
            rng = rng_stream(seed, "mock-scene", rec.image_id)
            scene = generate_scene(
                rec.count, rec.width, rec.height, mock_radius, rng, category=rec.category
            )
            model.register(rec.image_id, scene)
            filename = rec.image_id.replace("/", "_") + ".png"
            write_scene_image(scene, rec.image_id, scene_dir / filename)
            records.append(replace(rec, image_path=filename))
        annotations = AnnotationSet(tuple(records), annotations.split, annotations.dataset_name)
        client = model
        image_root = str(scene_dir)
    else:
        if not base_url or not model_name:
            raise click.UsageError("--base-url and --model are required without --mock")
        try:
            client = HttpVisionClient(
                EndpointConfig(
                    base_url=base_url,
                    model_name=model_name,
                    api_key_env_var=api_key_env,
                    timeout_s=timeout,
                    max_retries=max_retries,
                    concurrent_request_limit=concurrency,
                )
            )
        except ValueError as exc:
            raise _usage(exc) from exc

    results = run_benchmark(
        annotations,
        client,
        cfg,
        image_root=image_root,
        jobs=jobs,
        max_tokens=max_tokens,
        temperature=temperature,
    )
    write_results_jsonl(results, out, fingerprint=fingerprint, version=__version__)
    failed = sum(1 for r in results if r.error)
    flagged = sum(r.parse_failures for r in results)
    click.echo(
        f"wrote {len(results)} results to {out} "
        f"({failed} images failed, {flagged} parse failures)"
    )
    if failed:
        sys.exit(1)


@main.command("eval")
@annotation_options
@click.option("--results", "results_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="JSONL from `infer`.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report JSON path; a parse-failure-excluded twin is written alongside.")
@click.option("--format", "table_format", type=click.Choice(["markdown", "csv", "json"]),
              default="markdown", show_default=True)
@click.option("--figures/--no-figures", "render_figures", default=True, show_default=True,
              help="Render figures next to the report.")
@click.option("--figures-dir", type=click.Path(file_okay=False), default=None,
              help="Figure output directory [default: report directory].")
@click.pass_context
def eval_cmd(ctx, annotations_path, annotation_format, split, results_path, out,
             table_format, render_figures, figures_dir) -> None:
    """Score inference results and render the report table and figures."""
    resolver = OptionResolver("eval", ctx.obj)
    resolver.record("annotations", annotations_path)
    resolver.record("annotation_format", annotation_format)
    resolver.record("split", split)
    resolver.record("results", results_path)
    fingerprint = resolver.run_config().fingerprint()

    try:
        truth = _load(annotations_path, annotation_format, split)
        results = read_results_jsonl(results_path)
        report = evaluate(results, truth, config_fingerprint=fingerprint)
    except CountforgeError as exc:
        raise _usage(exc) from exc

    out_path = Path(out)
    payload = report_to_dict(report)
    payload["version"] = __version__
    out_path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n",
                        encoding="utf-8")
    try:
        strict = evaluate(results, truth, exclude_parse_failures=True,
                          config_fingerprint=fingerprint)
        strict_payload = report_to_dict(strict)
        strict_payload["version"] = __version__
        twin = out_path.with_name(out_path.stem + "_excluding_failures.json")
        twin.write_text(json.dumps(strict_payload, ensure_ascii=False, indent=2) + "\n",
                        encoding="utf-8")
    except EmptyResults:
        logger.warning("every result carried a parse failure; no excluded-failures report")

    click.echo(render_table(report, table_format))
    if render_figures:
        paths = save_report_figures(
            report, results, truth, figures_dir or out_path.parent, stem=out_path.stem
        )
        for path in paths:
            click.echo(f"figure: {path}")


if __name__ == "__main__":
    main()
