"""Rich terminal reports for the depth pipeline."""

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table
from rich.text import Text

from .models import (
    AgreementStats,
    DepthSummary,
    DiscardReason,
    EvalReport,
    FrameSlice,
    LatencyStats,
    SimulationSummary,
)

console = Console()


def format_optional(value: float | None, fmt: str = ".3f", unit: str = "") -> str:
    """Format a number, N/A when missing."""
    if value is None:
        return "N/A"
    return f"{value:{fmt}}{unit}"


def get_fraction_style(value: float | None) -> str:
    """Style for a fraction that should be close to one."""
    if value is None:
        return "dim"
    if value >= 0.99:
        return "bold green"
    elif value >= 0.9:
        return "green"
    elif value >= 0.5:
        return "yellow"
    return "red"


def create_frames_table(frames: list[FrameSlice], limit: int = 20) -> Table:
    """Table of detected frames."""
    table = Table(title=f"🎞️ Frames ({len(frames)})", box=box.ROUNDED, header_style="bold cyan")

    table.add_column("#", justify="right")
    table.add_column("Start (us)", justify="right")
    table.add_column("End (us)", justify="right")
    table.add_column("Span (us)", justify="right")
    table.add_column("Events", justify="right")

    for i, frame in enumerate(frames[:limit]):
        table.add_row(str(i), f"{frame.start_t:,}", f"{frame.end_t:,}", f"{frame.span:,}", f"{frame.event_count:,}")
    if len(frames) > limit:
        table.add_row("…", "", "", "", "")

    return table


def create_discard_table(discard_counts: dict[DiscardReason, int], total: int) -> Table:
    """Table of discarded events per reason."""
    table = Table(title="🗑️ Discarded Events", box=box.ROUNDED, header_style="bold yellow")

    table.add_column("Reason", style="bold")
    table.add_column("Events", justify="right")
    table.add_column("Share", justify="right")
    table.add_column("", width=27)

    for reason in DiscardReason:
        count = discard_counts.get(reason, 0)
        share = count / total if total else 0.0
        bar_width = int(share * 25)
        bar = "█" * bar_width + "░" * (25 - bar_width)
        table.add_row(reason.label, f"{count:,}", f"{share:.1%}", Text(bar, style="yellow"))

    return table


def create_depth_panel(summary: DepthSummary) -> Panel:
    """Summary panel of a depth run."""
    content = Text()

    content.append("🎞️ Frames: ", style="bold")
    content.append(f"{summary.n_frames}\n")

    content.append("⚡ Events: ", style="bold")
    content.append(f"{summary.n_events:,}\n")

    content.append("✅ With depth: ", style="bold")
    content.append(f"{summary.n_retained:,}", style=get_fraction_style(summary.retained_fraction))
    content.append(f" ({summary.retained_fraction:.1%})\n")

    content.append("🔁 Coordinate filter drops: ", style="bold")
    content.append(f"{summary.dedup_drop_fraction:.1%} of positive events\n")

    content.append("📏 Mean / median depth: ", style="bold")
    content.append(
        f"{format_optional(summary.mean_depth_m, '.4f', ' m')} / {format_optional(summary.median_depth_m, '.4f', ' m')}\n"
    )

    content.append("⏱️ Elapsed: ", style="bold")
    content.append(f"{summary.elapsed_ms:.1f} ms")

    return Panel(content, title="📡 Depth", border_style="cyan")


def create_eval_table(report: EvalReport) -> Table:
    """Table of an evaluation report."""
    table = Table(title="📊 Evaluation", box=box.ROUNDED, header_style="bold magenta")

    table.add_column("Metric", style="bold")
    table.add_column("Value", justify="right")

    table.add_row("RMSE", f"{report.rmse_cm:.3f} cm")
    table.add_row("Fill rate", Text(f"{report.fill_rate:.1%}", style=get_fraction_style(report.fill_rate)))
    table.add_row("Cells compared", f"{report.n_compared:,}")
    table.add_row("Mean scene depth", f"{report.mean_scene_depth:.4f} m")
    table.add_row("Plane fit RMSE", format_optional(report.plane_fit_rmse_cm, ".3f", " cm"))
    table.add_row("Quantization bound", format_optional(report.quantization_bound_cm, ".3f", " cm"))

    return table


def create_agreement_table(stats: AgreementStats) -> Table:
    """Table of per-event agreement between two disparity paths."""
    table = Table(title="🔍 Disparity Agreement", box=box.ROUNDED, header_style="bold magenta")

    table.add_column("Difference (px)", justify="right")
    table.add_column("Events", justify="right")
    table.add_column("", width=27)

    total = max(stats.n_compared, 1)
    for lo, count in zip(stats.histogram_edges[:-1], stats.histogram_counts, strict=False):
        bar_width = int(count / total * 25)
        table.add_row(f"{lo + 0.5:+.0f}", f"{count:,}", Text("█" * bar_width, style="cyan"))

    table.caption = (
        f"{format_optional(stats.fraction_within, '.2%')} of {stats.n_compared:,} events within "
        f"{stats.tolerance_px:g} px"
    )
    return table


def create_latency_table(stats: LatencyStats) -> Table:
    """Table of per-frame latency statistics."""
    table = Table(title="⏱️ Per-frame Latency", box=box.ROUNDED, header_style="bold green")

    table.add_column("Statistic", style="bold")
    table.add_column("Value", justify="right")

    table.add_row("Events / frame", f"{stats.n_events:,}")
    table.add_row("Repetitions", str(stats.repetitions))
    table.add_row("Mean ± std", f"{stats.mean_ms:.3f} ± {stats.std_ms:.3f} ms")
    table.add_row("Median", f"{stats.median_ms:.3f} ms")
    table.add_row("p90", f"{stats.p90_ms:.3f} ms")
    table.add_row("Min / max", f"{stats.min_ms:.3f} / {stats.max_ms:.3f} ms")
    verdict = Text("✅ within", style="green") if stats.within_reference else Text("❌ above", style="red")
    verdict.append(f" {stats.reference_ms} ms reference", style="")
    table.add_row("Reference", verdict)

    return table


def create_simulation_panel(summary: SimulationSummary) -> Panel:
    """Summary of a simulator run."""
    content = Text()
    content.append("🧊 Scene: ", style="bold")
    content.append(f"{summary.scene.value}\n")
    content.append("🎞️ Frames: ", style="bold")
    content.append(f"{summary.frames}\n")
    content.append("⚡ Events: ", style="bold")
    content.append(f"{summary.n_events:,}", style="bold green")
    content.append(
        f" ({summary.n_duplicates:,} duplicates, {summary.n_negative:,} negative, "
        f"{summary.refractory_dropped:,} refractory drops)\n"
    )
    content.append("📷 Sensor / projector: ", style="bold")
    content.append(f"{summary.sensor[0]}x{summary.sensor[1]} / {summary.projector[0]}x{summary.projector[1]}\n")
    content.append("📏 Mean true depth: ", style="bold")
    content.append(f"{summary.mean_true_depth_m:.4f} m\n")
    content.append("🎲 Seed: ", style="bold")
    content.append(str(summary.seed))
    return Panel(content, title="🔦 Simulation", border_style="cyan")


def create_map_panel(title: str, width: int, height: int, defined_fraction: float) -> Panel:
    """Size and coverage of a time map or X-map."""
    content = Text()
    content.append("📐 Size: ", style="bold")
    content.append(f"{width} x {height}\n")
    content.append("🟩 Defined: ", style="bold")
    content.append(f"{defined_fraction:.1%}", style=get_fraction_style(defined_fraction))
    return Panel(content, title=title, border_style="magenta")


def display_depth_report(summary: DepthSummary) -> None:
    """Print the depth summary and discard breakdown."""
    console.print(create_depth_panel(summary))
    console.print()
    console.print(create_discard_table(summary.discard_counts, summary.n_events))


def display_eval_report(report: EvalReport, agreement: AgreementStats | None = None) -> None:
    console.print(create_eval_table(report))
    if report.discard_counts:
        console.print()
        console.print(create_discard_table(report.discard_counts, sum(report.discard_counts.values())))
    if agreement is not None:
        console.print()
        console.print(create_agreement_table(agreement))


def create_progress_bar() -> Progress:
    """Create a progress bar for long-running stages."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        console=console,
    )
