"""Command-line front end for the extraction jobs.

Subcommands map one-to-one onto the job functions::

    stepmine-adapters transcribe   --input clip.wav  [--video-id ID]
    stepmine-adapters embed-frames --input frames/   [--video-id ID]
    stepmine-adapters embed-texts  --input prompts.json [--name NAME]
    stepmine-adapters embed-scene  --input frames/   [--video-id ID]

Configuration uses the same key names as the downstream pipeline where the
two overlap (``transcripts_dir``, ``stores_dir``), so one JSON file can serve
both tools.  Exit codes: 0 success, 1 usage error, 2 input/config problem.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AdapterError
from .jobs import ExtractorJob, embed_frames, embed_scene, embed_texts, transcribe

DEFAULT_CONFIG: dict = {
    "transcripts_dir": "transcripts",
    "stores_dir": "stores",
    "frame_rate_hz": 1.0,
    "dim": 16,
    "device": "cpu",
    "models": {"asr": "hashed", "frames": "hashed", "texts": "hashed", "scene": "hashed"},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        elif value is not None:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        p = Path(path)
        if not p.is_file():
            raise AdapterError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise AdapterError(f"config is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise AdapterError("config root must be a JSON object")
        cfg = _merge(cfg, user)
    return _merge(cfg, overrides)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepmine-adapters", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("transcribe", "embed-frames", "embed-texts", "embed-scene"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--input", required=True,
                       help="media file / frame directory / text JSON")
        p.add_argument("--out", help="output path (defaults under the config dirs)")
        p.add_argument("--transcripts-dir", dest="transcripts_dir")
        p.add_argument("--stores-dir", dest="stores_dir")
        p.add_argument("--frame-rate-hz", dest="frame_rate_hz", type=float)
        p.add_argument("--dim", type=int)
        p.add_argument("--device")
        p.add_argument("--model", help="override the model for this one job")
        if name == "embed-texts":
            p.add_argument("--name", help="store filename stem (default: input stem)")
        else:
            p.add_argument("--video-id", dest="video_id")
    return parser


_MODEL_SLOT = {
    "transcribe": "asr",
    "embed-frames": "frames",
    "embed-texts": "texts",
    "embed-scene": "scene",
}

_RUNNERS = {
    "transcribe": transcribe,
    "embed-frames": embed_frames,
    "embed-texts": embed_texts,
    "embed-scene": embed_scene,
}


def _default_out(cfg: dict, command: str, args: argparse.Namespace, stem: str) -> Path:
    if command == "transcribe":
        return Path(cfg["transcripts_dir"]) / f"{stem}.json"
    subdir = {"embed-frames": "frames", "embed-texts": "texts", "embed-scene": "scenes"}[command]
    return Path(cfg["stores_dir"]) / subdir / f"{stem}.shte"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k)
        for k in ("transcripts_dir", "stores_dir", "frame_rate_hz", "dim", "device")
        if getattr(args, k, None) is not None
    }
    try:
        cfg = load_config(args.config, overrides)
        input_path = Path(args.input)
        if args.command == "embed-texts":
            stem = args.name or input_path.stem
            video_id = stem
        else:
            video_id = args.video_id or input_path.stem
            stem = video_id
        out = Path(args.out) if args.out else _default_out(cfg, args.command, args, stem)
        job = ExtractorJob(
            input_path=input_path,
            out_path=out,
            model=args.model or cfg["models"][_MODEL_SLOT[args.command]],
            frame_rate_hz=float(cfg["frame_rate_hz"]),
            device=str(cfg["device"]),
            video_id=video_id,
            dim=int(cfg["dim"]),
        )
        written = _RUNNERS[args.command](job)
    except (AdapterError, ValueError, TypeError, KeyError) as e:
        # ValueError/TypeError/KeyError here mean malformed config values
        # (unknown model name, non-numeric rate, clobbered "models" table).
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
