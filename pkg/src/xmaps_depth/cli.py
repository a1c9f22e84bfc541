"""Command-line interface for xmaps-depth."""

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import typer
from pydantic import BaseModel, ValidationError

from . import __version__
from .bench import bench as bench_frame
from .bench import bench_simulated
from .config import Settings, get_settings, load_settings
from .dashboard import (
    console,
    create_frames_table,
    create_latency_table,
    create_map_panel,
    create_simulation_panel,
    display_depth_report,
    display_eval_report,
)
from .errors import XMapsError
from .formats import (
    export_ply as write_ply,
    read_depth_records,
    read_ground_truth,
    read_ground_truth_events,
    write_calibration,
    write_depth_records,
    write_events,
    write_frames,
    write_ground_truth,
    write_map,
)
from .geometry import compute_rectification
from .metrics import evaluate, median_quantization_bound
from .models import (
    EventOrigin,
    ScanProfile,
    Scene,
    SceneKind,
    SimulationSummary,
    TimeMapVariant,
)
from .oracle import compare_disparities, oracle_depth_frame, oracle_disparity_map
from .pipeline import DepthPipeline, Timer, reference_depth_image, summarize
from .simulator import default_calibration, default_profile, ideal_xmap_for, simulate
from .timemap import ideal_projector_time_map, rectify_time_map
from .trigger import split_frames
from .xmap import DepthFrame, depth_frame, render_depth_image

# Configure logging
logging.basicConfig(level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

app = typer.Typer(
    name="xmaps",
    help="🔦 Event camera + laser projector depth via direct X-map lookup",
    add_completion=False,
    rich_markup_mode="rich",
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"xmaps-depth v{__version__}")
        raise typer.Exit()


@contextmanager
def handle_errors() -> Iterator[None]:
    """Turn pipeline errors into a red message and exit code 1."""
    try:
        yield
    except (XMapsError, ValidationError) as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(1)


def _settings(**overrides: object) -> Settings:
    """Current settings with the non-None command-line overrides applied."""
    settings = get_settings()
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return settings
    return Settings.model_validate({**settings.model_dump(), **updates})


def _save_json(path: Path, model: BaseModel) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(model.model_dump(mode="json"), f, indent=2, default=str)
    console.print(f"\n💾 Results saved to [cyan]{path}[/cyan]")


def _record_image(records: dict[int, DepthFrame], number: int, width: int, height: int) -> np.ndarray:
    """Depth image of one record frame; a frame without records is all undefined."""
    if number not in records:
        return np.full((height, width), np.nan)
    return render_depth_image(records[number], width, height)


MaxGapOption = typer.Option(None, "--max-gap-us", help="Largest gap inside a frame (default 40)")
MinSpanOption = typer.Option(None, "--min-span-us", help="Shortest accepted frame (default 8000)")
CalibrationOption = typer.Option(None, "--calibration", "-c", help="Calibration key = value file")


@app.callback()
def main(
    version: bool | None = typer.Option(
        None,
        "--version",
        "-v",
        help="Show version and exit.",
        callback=version_callback,
        is_eager=True,
    ),
    config: Path | None = typer.Option(None, "--config", help="Env-style settings file (XMAPS_* keys)."),
    seed: int | None = typer.Option(None, "--seed", help="Seed for simulated data."),
    verbose: bool = typer.Option(False, "--verbose", "-V", help="Enable verbose logging."),
) -> None:
    """xmaps - structured light depth from event timestamps."""
    with handle_errors():
        settings = load_settings(config, **({"seed": seed} if seed is not None else {}))
    logging.getLogger().setLevel(logging.DEBUG if verbose else settings.log_level)


@app.command(name="simulate")
def simulate_cmd(
    output: Path = typer.Argument(..., help="Event file to write (.bin or .csv)"),
    scene: SceneKind = typer.Option(SceneKind.PLANE, "--scene", help="Scene to render"),
    frames: int = typer.Option(3, "--frames", "-n", min=1, help="Projected frames"),
    plane_depth: float = typer.Option(1.0, "--plane-depth", help="Plane / background depth (m)"),
    quadratic: bool = typer.Option(False, "--quadratic", help="Quadratic scan speed instead of linear"),
    x_jitter: float = typer.Option(0.0, "--x-jitter", help="Camera x jitter sigma (px)"),
    t_jitter: float = typer.Option(0.0, "--t-jitter", help="Timestamp jitter sigma (us)"),
    refractory: int = typer.Option(0, "--refractory", help="Per-pixel dead time (us)"),
    negative_rate: float = typer.Option(0.0, "--negative-rate", help="Share of injected negative events"),
    duplicate_rate: float = typer.Option(0.0, "--duplicate-rate", help="Share of injected duplicates"),
    calibration: Path | None = CalibrationOption,
    truth: Path | None = typer.Option(None, "--truth", help="Ground truth CSV (default: <output>.truth.csv)"),
    write_calib: Path | None = typer.Option(None, "--write-calibration", help="Also write the rig calibration"),
) -> None:
    """
    🔦 Simulate a laser scan of a scene and write events plus ground truth.

    Example:

        xmaps simulate events.bin --scene sphere --frames 5
    """
    settings = get_settings()
    with handle_errors():
        calib = DepthPipeline(settings).load_calibration(calibration) if calibration else default_calibration()
        noise = {
            "x_jitter_sigma": x_jitter,
            "t_jitter_sigma": t_jitter,
            "refractory": refractory,
            "negative_event_rate": negative_rate,
            "duplicate_rate": duplicate_rate,
            "rows": calib.projector.width,
        }
        profile = ScanProfile.quadratic(**noise) if quadratic else default_profile(**noise)
        scene_model = Scene(kind=scene, plane_depth=plane_depth)
        stream, ground_truth = simulate(scene_model, calib, profile, frames, settings.seed)

        write_events(output, stream)
        truth_path = truth or output.with_suffix(".truth.csv")
        write_ground_truth(truth_path, stream, ground_truth)
        if write_calib:
            write_calibration(write_calib, calib)

    origins = ground_truth.origin
    summary = SimulationSummary(
        scene=scene,
        frames=frames,
        n_events=len(stream),
        sensor=(calib.camera.width, calib.camera.height),
        projector=(calib.projector.width, calib.projector.height),
        n_duplicates=int(np.count_nonzero(origins == EventOrigin.DUPLICATE.value)),
        n_negative=int(np.count_nonzero(origins == EventOrigin.NEGATIVE.value)),
        refractory_dropped=ground_truth.refractory_dropped,
        mean_true_depth_m=float(ground_truth.depth.mean()),
        seed=settings.seed,
    )
    console.print(create_simulation_panel(summary))
    console.print(f"📂 Events: [cyan]{output}[/cyan]  Ground truth: [cyan]{truth_path}[/cyan]")


@app.command(name="split-frames")
def split_frames_cmd(
    events: Path = typer.Argument(..., help="Event file", exists=True, readable=True),
    output: Path | None = typer.Option(None, "--output", "-o", help="Frames CSV to write"),
    max_gap_us: int | None = MaxGapOption,
    min_span_us: int | None = MinSpanOption,
) -> None:
    """
    🎞️ Find projected frames in an event stream from timestamp gaps.
    """
    with handle_errors():
        settings = _settings(max_gap_us=max_gap_us, min_span_us=min_span_us)
        stream = DepthPipeline(settings).load_events(events)
        frames = split_frames(stream, settings.to_trigger_config())
        if output:
            write_frames(output, frames)
    console.print(create_frames_table(frames))
    if output:
        console.print(f"\n💾 Frames saved to [cyan]{output}[/cyan]")


@app.command(name="calibrate-timemap")
def calibrate_timemap(
    events: Path = typer.Argument(..., help="Recording of a white frame on a plane", exists=True, readable=True),
    output: Path = typer.Option(..., "--output", "-o", help="Projector time map to write"),
    calibration: Path | None = CalibrationOption,
    max_gap_us: int | None = MaxGapOption,
    min_span_us: int | None = MinSpanOption,
) -> None:
    """
    🎯 Calibrate the projector time map from a planar recording.
    """
    with handle_errors():
        settings = _settings(max_gap_us=max_gap_us, min_span_us=min_span_us)
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration)
        stream = pipeline.load_events(events, calib)
        frames = pipeline.frames(stream)
        time_map = pipeline.calibrate(stream, frames, calib)
        write_map(output, time_map)
    console.print(create_map_panel("🎯 Calibrated Time Map", time_map.width, time_map.height, time_map.defined_fraction))
    console.print(f"💾 Time map saved to [cyan]{output}[/cyan]")


@app.command(name="build-xmap")
def build_xmap(
    output: Path = typer.Option(..., "--output", "-o", help="X-map to write"),
    time_map: Path | None = typer.Option(None, "--time-map", "-t", help="Raw projector time map (default: ideal)"),
    variant: TimeMapVariant = typer.Option(TimeMapVariant.SIMPLE, "--variant", help="Ideal time map variant"),
    time_columns: int | None = typer.Option(None, "--time-columns", help="Time columns (default: projector width)"),
    calibration: Path | None = CalibrationOption,
) -> None:
    """
    🗺️ Build the rectified projector X-map from a time map.
    """
    with handle_errors():
        settings = _settings(time_columns=time_columns)
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration)
        if time_map or settings.time_map_path:
            raw = pipeline.load_time_map(time_map)
        else:
            raw = ideal_projector_time_map(calib.projector.width, calib.projector.height, variant=variant)
        xmap = pipeline.build_xmap(raw, calib)
        write_map(output, xmap)
    console.print(create_map_panel("🗺️ X-map", xmap.time_columns, xmap.height, float(xmap.defined.mean())))
    console.print(f"💾 X-map saved to [cyan]{output}[/cyan]")


@app.command()
def depth(
    events: Path = typer.Argument(..., help="Event file", exists=True, readable=True),
    xmap_path: Path | None = typer.Option(None, "--xmap", "-x", help="X-map file"),
    calibration: Path | None = CalibrationOption,
    rect_map: Path | None = typer.Option(None, "--rect-map", help="Precomputed camera rectification map"),
    output: Path | None = typer.Option(None, "--output", "-o", help="Depth record CSV to write"),
    json_output: Path | None = typer.Option(None, "--json", help="Save the run summary to JSON"),
    workers: int | None = typer.Option(None, "--workers", "-w", help="Threads for per-frame depth"),
    max_gap_us: int | None = MaxGapOption,
    min_span_us: int | None = MinSpanOption,
) -> None:
    """
    📡 Compute per-event depth by X-map lookup.

    Example:

        xmaps depth events.bin -c rig.calib -x projector.xmap -o depth.csv
    """
    with handle_errors():
        settings = _settings(max_gap_us=max_gap_us, min_span_us=min_span_us, workers=workers)
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration)
        stream = pipeline.load_events(events, calib)
        xmap = pipeline.load_xmap(calib, xmap_path)
        rect = pipeline.rectification(calib, rect_map)
        frames = pipeline.frames(stream)
        with Timer() as timer:
            results = pipeline.run_with_progress(stream, frames, xmap, rect, calib)
        if output:
            write_depth_records(output, results)

    summary = summarize(results, [stream.slice(f) for f in frames], timer.elapsed_ms)
    console.print()
    display_depth_report(summary)
    if output:
        console.print(f"\n💾 Depth records saved to [cyan]{output}[/cyan]")
    if json_output:
        _save_json(json_output, summary)


@app.command(name="oracle-depth")
def oracle_depth(
    events: Path = typer.Argument(..., help="Event file", exists=True, readable=True),
    output: Path = typer.Option(..., "--output", "-o", help="Depth record CSV to write"),
    time_map: Path | None = typer.Option(None, "--time-map", "-t", help="Raw projector time map (default: ideal)"),
    calibration: Path | None = CalibrationOption,
    max_disparity: int | None = typer.Option(None, "--max-disparity", help="Search range (default 128)"),
    max_gap_us: int | None = MaxGapOption,
    min_span_us: int | None = MinSpanOption,
) -> None:
    """
    🐢 Compute depth with the brute-force row search (reference path).
    """
    with handle_errors():
        settings = _settings(max_gap_us=max_gap_us, min_span_us=min_span_us, max_disparity=max_disparity)
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration)
        stream = pipeline.load_events(events, calib)
        if time_map or settings.time_map_path:
            raw = pipeline.load_time_map(time_map)
        else:
            raw = ideal_projector_time_map(calib.projector.width, calib.projector.height)
        proj_map = rectify_time_map(raw, calib)
        rect = pipeline.rectification(calib)
        frames = pipeline.frames(stream)
        with Timer() as timer:
            results = [
                oracle_depth_frame(
                    stream.slice(f), f, proj_map, rect, calib, settings.max_disparity, settings.dedup_mode
                )
                for f in frames
            ]
        write_depth_records(output, results)

    display_depth_report(summarize(results, [stream.slice(f) for f in frames], timer.elapsed_ms))
    console.print(f"\n💾 Depth records saved to [cyan]{output}[/cyan]")


@app.command(name="eval")
def eval_cmd(
    estimate: Path = typer.Argument(..., help="Depth record CSV to evaluate", exists=True, readable=True),
    truth: Path | None = typer.Option(None, "--truth", help="Simulator ground truth CSV"),
    reference: Path | None = typer.Option(None, "--reference", help="Depth record CSV used as reference"),
    calibration: Path | None = CalibrationOption,
    plane_fit: bool = typer.Option(False, "--plane-fit", help="Report the plane fit residual"),
    json_output: Path | None = typer.Option(None, "--output", "-o", help="Save the report to JSON"),
    max_gap_us: int | None = MaxGapOption,
    min_span_us: int | None = MinSpanOption,
) -> None:
    """
    📊 Evaluate depth records against ground truth or another record file.
    """
    with handle_errors():
        if (truth is None) == (reference is None):
            raise XMapsError("pass exactly one of --truth or --reference")
        settings = _settings(max_gap_us=max_gap_us, min_span_us=min_span_us)
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration)
        width, height = calib.camera.width, calib.camera.height
        estimated = read_depth_records(estimate)

        if truth is not None:
            ground_truth = read_ground_truth(truth)
            table = read_ground_truth_events(truth, width, height)
            rect = pipeline.rectification(calib)
            frames = pipeline.frames(table)
            numbers = range(max(estimated, default=-1) + 1)
            if len(frames) < len(numbers):
                raise XMapsError(f"ground truth holds {len(frames)} frames, estimate reaches frame {len(numbers) - 1}")
            ref_images = [reference_depth_image(table, ground_truth, frames[n], rect, width, height) for n in numbers]
        else:
            assert reference is not None
            referenced = read_depth_records(reference)
            numbers = range(max([*estimated, *referenced], default=-1) + 1)
            ref_images = [_record_image(referenced, n, width, height) for n in numbers]
        if not numbers:
            raise XMapsError(f"{estimate} holds no depth records")
        est_images = [_record_image(estimated, n, width, height) for n in numbers]

        points = np.concatenate([f.points(calib) for f in estimated.values()]) if plane_fit and estimated else None
        disparities = np.concatenate([f.disparity for f in estimated.values()]) if estimated else np.empty(0)
        report = evaluate(
            np.stack(est_images),
            np.stack(ref_images),
            points,
            quantization_bound_cm=median_quantization_bound(disparities, calib),
        )

    display_eval_report(report)
    if json_output:
        _save_json(json_output, report)


@app.command(name="export-ply")
def export_ply(
    records: Path = typer.Argument(..., help="Depth record CSV", exists=True, readable=True),
    output: Path = typer.Option(..., "--output", "-o", help="PLY file to write"),
    frame: int = typer.Option(0, "--frame", "-f", help="Frame number to export"),
    calibration: Path | None = CalibrationOption,
) -> None:
    """
    ☁️ Export one depth frame as an ASCII PLY point cloud.
    """
    with handle_errors():
        calib = DepthPipeline(get_settings()).load_calibration(calibration)
        frames = read_depth_records(records)
        if frame not in frames:
            raise XMapsError(f"frame {frame} has no depth records in {records}")
        write_ply(frames[frame], calib, output)
    console.print(f"☁️ Wrote [green]{len(frames[frame]):,}[/green] points to [cyan]{output}[/cyan]")


@app.command()
def bench(
    events: Path | None = typer.Argument(None, help="Event file (default: simulate one frame)"),
    xmap_path: Path | None = typer.Option(None, "--xmap", "-x", help="X-map file (default: ideal)"),
    calibration: Path | None = CalibrationOption,
    repetitions: int = typer.Option(20, "--repetitions", "-r", min=1, help="Timed runs"),
    frame_index: int = typer.Option(0, "--frame", "-f", help="Frame to time"),
    json_output: Path | None = typer.Option(None, "--output", "-o", help="Save the statistics to JSON"),
) -> None:
    """
    ⏱️ Measure per-frame depth latency (I/O and X-map build excluded).
    """
    settings = get_settings()
    with handle_errors():
        pipeline = DepthPipeline(settings)
        calib = pipeline.load_calibration(calibration) if calibration or settings.calibration_path else None
        calib = calib or default_calibration()
        profile = default_profile(rows=calib.projector.width)
        xmap = pipeline.load_xmap(calib, xmap_path) if xmap_path or settings.xmap_path else None
        if events is None:
            stats = bench_simulated(
                Scene(),
                calib,
                profile,
                repetitions,
                settings.seed,
                settings.dedup_mode,
                xmap=xmap,
                trigger=settings.to_trigger_config(),
            )
        else:
            stream = pipeline.load_events(events, calib)
            frames = pipeline.frames(stream)
            if not frames:
                raise XMapsError("no complete frame found to time")
            if not 0 <= frame_index < len(frames):
                raise XMapsError(f"frame {frame_index} not found ({len(frames)} frames)")
            rect = pipeline.rectification(calib)
            chosen = frames[frame_index]
            stats = bench_frame(
                stream.slice(chosen),
                chosen,
                xmap if xmap is not None else ideal_xmap_for(profile, calib),
                rect,
                calib,
                repetitions,
                settings.dedup_mode,
            )

    console.print(create_latency_table(stats))
    if json_output:
        _save_json(json_output, stats)


@app.command()
def demo(
    scene: SceneKind = typer.Option(SceneKind.SPHERE, "--scene", help="Scene to render"),
) -> None:
    """
    🎮 Run the whole chain on a simulated scene with the default rig.
    """
    settings = get_settings()
    console.print("[bold cyan]🎮 Running xmaps-depth demo[/bold cyan]\n")
    with handle_errors():
        calib = default_calibration()
        profile = default_profile()
        stream, truth = simulate(Scene(kind=scene), calib, profile, frames=1, seed=settings.seed)
        console.print(f"🔦 Simulated [green]{len(stream):,}[/green] events of a {scene.value} scene")

        frames = split_frames(stream, settings.to_trigger_config())
        console.print(create_frames_table(frames))
        if not frames:
            raise XMapsError("the simulated stream holds no complete frame")
        frame = frames[0]
        rect, _ = compute_rectification(calib)
        xmap = ideal_xmap_for(profile, calib)

        with Timer() as timer:
            result = depth_frame(stream.slice(frame), frame, xmap, rect, calib, settings.dedup_mode)
        console.print()
        display_depth_report(summarize([result], [stream.slice(frame)], timer.elapsed_ms))

        width, height = calib.camera.width, calib.camera.height
        reference = reference_depth_image(stream, truth, frame, rect, width, height)
        report = evaluate(
            render_depth_image(result, width, height),
            reference,
            discard_counts=result.discard_counts,
            quantization_bound_cm=median_quantization_bound(result.disparity, calib),
        )
        proj_map = rectify_time_map(ideal_projector_time_map(calib.projector.width, calib.projector.height), calib)
        oracle = oracle_disparity_map(
            stream.slice(frame), frame, proj_map, rect, calib, settings.max_disparity, settings.dedup_mode
        )
        agreement = compare_disparities(result, oracle, tol=1.0)

    console.print()
    display_eval_report(report, agreement)


def cli_entrypoint() -> None:
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    cli_entrypoint()
