"""
Command-line entry point: fuse, eval, replay, serve, analyze, render and synth.

Settings resolve as flag > --config JSON file > environment > defaults. Exit code
0 on success, 1 on usage errors, 2 on data errors.
"""

import argparse
import asyncio
import json
import signal
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from panoptic_nav.config import DEFAULT_AP_THRESHOLDS, Settings, get_settings, use_settings
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.analytics import aggregate, count_instances, distribution_csv, distribution_summary
from panoptic_nav.services.fusion import fuse_frame
from panoptic_nav.services.label_schema import active_schema
from panoptic_nav.services.pipeline import STAGES, FrameProcessor, config_from_settings, format_timing, run_replay
from panoptic_nav.services.renderer import render_sequence
from panoptic_nav.services.reporting import TYPICAL_CLASSES, eval_report_json, evaluate_frames, format_eval_table
from panoptic_nav.services.synthetic import (
    DEFAULT_FRAMES, DEFAULT_HEIGHT, DEFAULT_WIDTH, synthetic_sequence
)
from panoptic_nav.storage.sequence_store import read_sequence, write_sequence
from panoptic_nav.utils.exceptions import BasePanopticException, MissingPlaneException, UsageException
from panoptic_nav.utils.logger import configure_logging, get_logger, log_event

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# flag dest -> Settings field
FLAG_FIELDS: Dict[str, str] = {
    "schema": "schema_path",
    "confidence_threshold": "fusion_confidence_threshold",
    "overlap_keep_fraction": "fusion_overlap_keep_fraction",
    "min_stuff_area": "fusion_min_stuff_area",
    "min_instance_area": "fusion_min_instance_area",
    "d_floor": "feedback_d_floor_m",
    "max_events": "feedback_max_events_per_frame",
    "suppression_us": "feedback_repeat_suppression_us",
    "reapproach_fraction": "feedback_reapproach_fraction",
    "d_ceiling": "feedback_d_ceiling_m",
    "mode": "pipeline_mode",
    "rate": "pipeline_target_rate_fps",
    "window": "analytics_window",
    "thresholds": "eval_ap_thresholds",
    "resample": "eval_resample",
    "host": "server_host",
    "port": "server_port",
    "http_port": "server_http_port",
    "heartbeat_interval": "heartbeat_interval_s",
    "max_payload": "max_payload_bytes",
}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1 instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default(field: str) -> Any:
    if field == "eval_ap_thresholds":
        return ",".join(f"{t:.2f}" for t in DEFAULT_AP_THRESHOLDS)
    return Settings.model_fields[field].default


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _stall(text: str) -> Dict[str, int]:
    stage, _, value = text.partition("=")
    if stage not in STAGES or not value:
        raise argparse.ArgumentTypeError(f"expected STAGE=MICROSECONDS with STAGE in {', '.join(STAGES)}")
    try:
        return {stage: int(value)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"stall must be an integer number of microseconds, got {value!r}")


def _add_fusion_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("fusion")
    group.add_argument("--confidence-threshold", type=float,
                       help=f"Minimum instance confidence (default: {_default('fusion_confidence_threshold')})")
    group.add_argument("--overlap-keep-fraction", type=float,
                       help=f"Minimum unclaimed share of an instance mask (default: {_default('fusion_overlap_keep_fraction')})")
    group.add_argument("--min-stuff-area", type=int,
                       help="Minimum stuff segment area in px (default: 4096 scaled by frame area / 480x640)")
    group.add_argument("--min-instance-area", type=int,
                       help=f"Minimum kept instance area in px (default: {_default('fusion_min_instance_area')})")


def _add_feedback_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("feedback")
    group.add_argument("--d-floor", type=float,
                       help=f"Distance floor in meters (default: {_default('feedback_d_floor_m')})")
    group.add_argument("--max-events", type=int,
                       help=f"Events emitted per frame (default: {_default('feedback_max_events_per_frame')})")
    group.add_argument("--suppression-us", type=int,
                       help=f"Repeat suppression window in us (default: {_default('feedback_repeat_suppression_us')})")
    group.add_argument("--reapproach-fraction", type=float,
                       help=f"Closer-by fraction that overrides suppression (default: {_default('feedback_reapproach_fraction')})")
    group.add_argument("--d-ceiling", type=float,
                       help=f"Assumed distance for segments without valid depth, meters (default: {_default('feedback_d_ceiling_m')})")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline")
    group.add_argument("--mode", choices=["lossless", "latest-wins"],
                       help=f"Frame hand-off policy (default: {_default('pipeline_mode')})")
    group.add_argument("--rate", type=float,
                       help=f"Replay input rate in frames per second (default: {_default('pipeline_target_rate_fps')})")
    group.add_argument("--window", type=int,
                       help=f"Analytics window in frames (default: {_default('analytics_window')})")
    group.add_argument("--sinks", type=lambda s: [p for p in s.split(",") if p],
                       help="Comma-separated outputs among fused,events,analytics,timing (default: all)")
    group.add_argument("--stall", type=_stall, action="append", metavar="STAGE=US",
                       help="Inject a per-frame delay into a stage; repeatable (default: none)")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="panoptic-nav", description="Panoptic perception toolkit for assistive navigation")
    parser.add_argument("--schema", help="Label schema JSON file (default: bundled schema)")
    parser.add_argument("--config", help="JSON config file; keys are flag or settings names (default: none)")
    parser.add_argument("--verbose", action="store_true", help="Debug logging (default: off)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    fuse = sub.add_parser("fuse", help="Fuse semantic and instance planes into panoptic planes")
    fuse.add_argument("sequence", help="Input sequence directory")
    fuse.add_argument("--out", required=True, help="Output sequence directory")
    _add_fusion_flags(fuse)

    evaluate = sub.add_parser("eval", help="PQ, mIoU and AP of predictions against ground truth")
    evaluate.add_argument("pred", help="Prediction sequence directory")
    evaluate.add_argument("gt", help="Ground-truth sequence directory (panoptic planes)")
    evaluate.add_argument("--thresholds", type=_float_list,
                          help=f"AP IoU thresholds (default: {_default('eval_ap_thresholds')})")
    evaluate.add_argument("--resample", choices=["nearest", "bilinear"],
                          help=f"Prediction resampling to ground-truth size (default: {_default('eval_resample')})")
    evaluate.add_argument("--classes", type=lambda s: [p for p in s.split(",") if p],
                          help=f"Per-class IoU columns (default: {','.join(TYPICAL_CLASSES)})")
    evaluate.add_argument("--json", dest="json_out", help="Also write the report as JSON (default: none)")
    evaluate.add_argument("--no-detail", action="store_true", help="Omit the per-class PQ block (default: off)")
    _add_fusion_flags(evaluate)

    replay = sub.add_parser("replay", help="Replay a sequence through the staged pipeline")
    replay.add_argument("sequence", help="Input sequence directory")
    replay.add_argument("--out", required=True, help="Run output directory")
    _add_pipeline_flags(replay)
    _add_fusion_flags(replay)
    _add_feedback_flags(replay)

    serve = sub.add_parser("serve", help="Run the live TCP server")
    serve.add_argument("--host", help=f"Listen address (default: {_default('server_host')})")
    serve.add_argument("--port", type=int, help=f"Listen port (default: {_default('server_port')})")
    serve.add_argument("--http-port", type=int, help="Also serve the HTTP status app on this port (default: off)")
    serve.add_argument("--heartbeat-interval", type=float,
                       help=f"Idle seconds before a heartbeat (default: {_default('heartbeat_interval_s')})")
    serve.add_argument("--max-payload", type=int,
                       help=f"Maximum message payload in bytes (default: {_default('max_payload_bytes')})")
    _add_fusion_flags(serve)
    _add_feedback_flags(serve)

    analyze = sub.add_parser("analyze", help="Per-frame instance counts and windowed distribution")
    analyze.add_argument("sequence", help="Input sequence directory")
    analyze.add_argument("--out", help="Write analytics.csv and analytics_summary.json here (default: stdout)")
    analyze.add_argument("--window", type=int, help=f"Window in frames (default: {_default('analytics_window')})")
    _add_fusion_flags(analyze)

    render = sub.add_parser("render", help="PNG overlays of a sequence")
    render.add_argument("sequence", help="Input sequence directory")
    render.add_argument("--out", required=True, help="PNG output directory")
    render.add_argument("--alpha", type=float, default=0.5, help="Class color opacity over RGB (default: 0.5)")
    render.add_argument("--no-labels", action="store_true", help="Skip distance labels (default: off)")
    _add_fusion_flags(render)

    synth = sub.add_parser("synth", help="Write the synthetic walking sequence")
    synth.add_argument("--out", required=True, help="Output sequence directory")
    synth.add_argument("--frames", type=int, default=DEFAULT_FRAMES, help=f"Frame count (default: {DEFAULT_FRAMES})")
    synth.add_argument("--width", type=int, default=DEFAULT_WIDTH, help=f"Frame width (default: {DEFAULT_WIDTH})")
    synth.add_argument("--height", type=int, default=DEFAULT_HEIGHT, help=f"Frame height (default: {DEFAULT_HEIGHT})")
    synth.add_argument("--seed", type=int, default=0, help="Generator seed (default: 0)")
    synth.add_argument("--ground-truth", action="store_true", help="Add ground-truth panoptic planes (default: off)")
    return parser


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Merge environment, config file and flags into one validated Settings."""
    values = get_settings().model_dump()
    if args.config:
        values.update(_read_config(args.config))
    for dest, field_name in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field_name] = value
    try:
        return Settings(**values)
    except ValidationError as e:
        first = e.errors()[0]
        raise UsageException(f"Invalid setting {'.'.join(str(p) for p in first['loc'])}: {first['msg']}")


def _read_config(path: str) -> Dict[str, Any]:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageException(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise UsageException(f"Config file {path} is not valid JSON: {e.msg}")
    if not isinstance(document, dict):
        raise UsageException(f"Config file {path} must hold a JSON object")

    values: Dict[str, Any] = {}
    for key, value in document.items():
        name = key.replace("-", "_")
        if name in FLAG_FIELDS:
            values[FLAG_FIELDS[name]] = value
        elif name in Settings.model_fields:
            values[name] = value
        else:
            raise UsageException(f"Unknown config key: {key}")
    return values


def _pipeline_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "sinks", None) is not None:
        overrides["sinks"] = args.sinks
    if getattr(args, "stall", None):
        stalls: Dict[str, int] = {}
        for item in args.stall:
            stalls.update(item)
        overrides["stage_stall_us"] = stalls
    return overrides


def cmd_fuse(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    processor = FrameProcessor(config_from_settings(settings), schema)
    fused = []
    for frame in read_sequence(args.sequence):
        for plane in ("semantic", "instances"):
            if getattr(frame, plane) is None:
                raise MissingPlaneException(frame.frame_id, plane)
        panoptic = fuse_frame(frame.semantic, frame.instances, schema, processor.fusion_config(frame))
        fused.append(frame.with_planes(panoptic=panoptic))
    write_sequence(fused, args.out)
    log_event("cli", "info", f"Fused {len(fused)} frames into {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    processor = FrameProcessor(config_from_settings(settings), schema)
    preds = read_sequence(args.pred)
    gts = read_sequence(args.gt)
    fusion = processor.fusion_config(preds[0]) if preds else None
    report = evaluate_frames(
        preds, gts, schema,
        thresholds=settings.eval_ap_thresholds,
        resample=settings.eval_resample,
        fusion=fusion,
        typical_classes=args.classes or TYPICAL_CLASSES,
    )
    print(format_eval_table([report], detail=not args.no_detail))
    if args.json_out:
        Path(args.json_out).write_text(eval_report_json([report]) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    config = config_from_settings(settings, **_pipeline_overrides(args))
    artifacts = run_replay(args.sequence, args.out, config, schema)
    print(format_timing(artifacts.timing), end="")
    if artifacts.frame_errors:
        for frame_id, detail in sorted(artifacts.frame_errors.items()):
            print(f"frame {frame_id}: {detail}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    processor = FrameProcessor(config_from_settings(settings), schema)
    counts = []
    for frame in read_sequence(args.sequence):
        work = processor.describe_frame(frame)
        counts.append(count_instances(work.panoptic, schema, frame.frame_id, frame.timestamp_us))
    distribution = aggregate(counts, settings.analytics_window)
    table = distribution_csv(distribution, schema)
    summary = distribution_summary(distribution, schema)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analytics.csv").write_text(table, encoding="utf-8", newline="")
        (out / "analytics_summary.json").write_text(summary + "\n", encoding="utf-8")
    else:
        print(table, end="")
        print(summary)
    return EXIT_OK


def cmd_render(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    processor = FrameProcessor(config_from_settings(settings), schema)
    frames = []
    for frame in read_sequence(args.sequence):
        if frame.panoptic is None and frame.semantic is not None and frame.instances is not None:
            frame = frame.with_planes(panoptic=processor.describe_frame(frame).panoptic)
        frames.append(frame)
    written = render_sequence(frames, args.out, schema, alpha=args.alpha, labels=not args.no_labels)
    log_event("cli", "info", f"Rendered {len(written)} overlays into {args.out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    if args.frames < 0 or args.width < 1 or args.height < 1:
        raise UsageException("frames must be >= 0 and width/height >= 1")
    frames = synthetic_sequence(schema, args.frames, args.width, args.height,
                                seed=args.seed, with_ground_truth=args.ground_truth)
    write_sequence(frames, args.out)
    log_event("cli", "info", f"Wrote {len(frames)} synthetic frames to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, settings: Settings, schema: LabelSchema) -> int:
    asyncio.run(_serve(settings, schema))
    return EXIT_OK


async def _serve(settings: Settings, schema: LabelSchema) -> None:
    # imported here so the offline subcommands never load the HTTP stack
    from panoptic_nav.main import create_app, serve_http
    from panoptic_nav.services.live_server import LiveServer

    config = config_from_settings(settings, mode="latest-wins")
    server = LiveServer(config, schema, host=settings.server_host, port=settings.server_port,
                        heartbeat_interval_s=settings.heartbeat_interval_s,
                        max_payload=settings.max_payload_bytes)
    await server.start()

    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            pass

    tasks = [asyncio.create_task(server.serve_forever())]
    if settings.server_http_port is not None:
        app = create_app(schema=schema, config=config, live_server=server)
        tasks.append(asyncio.create_task(serve_http(app, settings.server_host, settings.server_http_port)))
    try:
        await stop.wait()
    finally:
        await server.stop()
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        if server.latest_timing is not None:
            print(format_timing(server.latest_timing), end="")


COMMANDS = {
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "replay": cmd_replay,
    "serve": cmd_serve,
    "analyze": cmd_analyze,
    "render": cmd_render,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        use_settings(settings)
        configure_logging(verbose=args.verbose, level=settings.log_level)
        schema = active_schema(settings.schema_path)
        return COMMANDS[args.command](args, settings, schema)
    except BasePanopticException as e:
        log_event("cli", "error", f"{args.command} failed: {e.detail}")
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        log_event("cli", "error", f"{args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    finally:
        use_settings(None)


if __name__ == "__main__":
    sys.exit(main())
