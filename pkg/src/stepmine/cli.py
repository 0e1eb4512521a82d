"""Command-line pipeline driver.

Subcommands mirror the pipeline stages::

    parse     transcripts dir -> canonical sentence JSON per video
    filter    screen parsed videos for instructional content (LLM gateway)
    extract   pull time-bounded steps for instructional videos (LLM gateway)
    align     choose one frame per step against the embedding stores
    assemble  join steps + alignments + task metadata into a manifest
    stats     corpus statistics for a manifest
    split     carve a test split of whole tasks out of a manifest
    sample    preview seeded training windows and batch lengths
    eval      score generated sequences against the test split

Each stage writes under ``<out>/<stage>/`` and keeps a content-hash cache so
re-runs with unchanged inputs are no-ops.  One bad video never aborts a
stage: failures land in ``<out>/<stage>/errors.jsonl`` (sorted, deterministic)
and the exit code is 3.  Exit codes: 0 success, 1 usage, 2 input problem,
3 stage failure.  All randomness flows from the single configured seed; with
a scripted mock gateway two runs of the whole pipeline are byte-identical.

The gateway credential is never read from the config file: set the
``STEPMINE_API_KEY`` environment variable when the endpoint needs one.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import alignment as alignment_mod
from . import dataset as dataset_mod
from . import filtering as filtering_mod
from . import metrics as metrics_mod
from . import step_extraction as extraction_mod
from .embeddings import EmbeddingStore, FrameId, StoreKind, load_store
from .errors import PipelineError
from .llm_gateway import GatewayConfig, HttpGateway, MockGateway
from .transcript import Transcript, TranscriptFormat, parse_transcript, serialize_transcript

API_KEY_ENV = "STEPMINE_API_KEY"

DEFAULT_CONFIG: dict = {
    "transcripts_dir": "transcripts",
    "metadata_path": "videos.json",
    "stores_dir": "stores",
    "out_dir": "out",
    "seed": 0,
    "workers": 1,
    "epsilon_s": 15.0,
    "gateway": {
        "endpoint": "http://localhost:8000/v1/chat/completions",
        "model_id": "llama-3.1-8b-instruct",
        "timeout_s": 30.0,
        "max_retries": 2,
        "mock_responses": None,
    },
    "filter": {"excerpt_max_chars": 6000, "max_tokens": 256, "temperature": 0.0},
    "extract": {"max_tokens": 2048, "temperature": 0.0, "max_steps": 40},
    "split": {"n_test_tasks": 2, "per_task_quota": 2},
    "sample": {"k": None, "k_max": 8, "count": 16},
    "eval": {"manifest": None, "task_store": None, "row_name": "generated",
             "with_random_baseline": False},
}

_SUFFIX_FORMATS = {
    ".srt": TranscriptFormat.SRT,
    ".vtt": TranscriptFormat.WEBVTT,
    ".json": TranscriptFormat.SENTENCE_JSON,
}


class InputProblem(Exception):
    """Bad paths/config discovered before a stage can start (exit code 2)."""


# --------------------------------------------------------------------------
# config plumbing
# --------------------------------------------------------------------------

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
            raise InputProblem(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputProblem(f"config is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise InputProblem("config root must be a JSON object")
        cfg = _merge(cfg, user)
    return _merge(cfg, overrides)


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def _file_digest(path: Path) -> str:
    return _digest(path.read_bytes())


# --------------------------------------------------------------------------
# stage scaffolding: output dirs, caches, error ledgers
# --------------------------------------------------------------------------

class Stage:
    def __init__(self, cfg: dict, name: str):
        self.name = name
        self.dir = Path(cfg["out_dir"]) / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self._cache_path = self.dir / "_cache.json"
        try:
            self.cache = json.loads(self._cache_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            self.cache = {}
        self.errors: dict[str, Exception] = {}

    def fresh(self, key: str, digest: str, *outputs: Path) -> bool:
        """True when the cached digest matches and every output exists."""
        return self.cache.get(key) == digest and all(p.is_file() for p in outputs)

    def record(self, key: str, digest: str) -> None:
        self.cache[key] = digest

    def fail(self, video_id: str, error: Exception) -> None:
        self.errors[video_id] = error

    def finish(self) -> int:
        pruned = {k: self.cache[k] for k in sorted(self.cache) if k not in self.errors}
        self._cache_path.write_text(
            json.dumps(pruned, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        ledger = self.dir / "errors.jsonl"
        if self.errors:
            lines = [
                json.dumps(
                    {
                        "video_id": vid,
                        "error": type(err).__name__,
                        "message": str(err),
                    },
                    ensure_ascii=False,
                )
                for vid, err in sorted(self.errors.items())
            ]
            ledger.write_text("\n".join(lines) + "\n", encoding="utf-8")
            return 3
        if ledger.exists():
            ledger.unlink()
        return 0


def _run_units(units: list, worker, workers: int) -> None:
    """Apply ``worker`` to every unit; order of completion never matters
    because each worker writes only its own per-video output."""
    if workers <= 1:
        for unit in units:
            worker(unit)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(worker, units))


# --------------------------------------------------------------------------
# shared input loading
# --------------------------------------------------------------------------

def _load_metadata(cfg: dict) -> dict:
    path = Path(cfg["metadata_path"])
    if not path.is_file():
        raise InputProblem(f"metadata file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise InputProblem("metadata root must map video_id -> fields")
    return data


def _discover_transcripts(cfg: dict) -> list[tuple[str, Path, TranscriptFormat]]:
    root = Path(cfg["transcripts_dir"])
    if not root.is_dir():
        raise InputProblem(f"transcripts dir not found: {root}")
    found = []
    for path in sorted(root.iterdir()):
        fmt = _SUFFIX_FORMATS.get(path.suffix.lower())
        if fmt is not None and path.is_file():
            found.append((path.stem, path, fmt))
    if not found:
        raise InputProblem(f"no .srt/.vtt/.json transcripts under {root}")
    return found


def _parsed_transcript(cfg: dict, meta: dict, video_id: str) -> Transcript:
    parsed = Path(cfg["out_dir"]) / "parse" / f"{video_id}.json"
    if not parsed.is_file():
        raise InputProblem(f"no parsed transcript for {video_id}; run `parse` first")
    info = meta.get(video_id, {})
    return parse_transcript(
        parsed.read_bytes(),
        TranscriptFormat.SENTENCE_JSON,
        video_id=video_id,
        title=info.get("title", ""),
        duration_s=info.get("duration_s"),
    )


def _gateway(cfg: dict):
    gw = cfg["gateway"]
    if gw.get("mock_responses"):
        path = Path(gw["mock_responses"])
        if not path.is_file():
            raise InputProblem(f"mock responses file not found: {path}")
        return MockGateway.from_file(path)
    return HttpGateway(
        GatewayConfig(
            endpoint=gw["endpoint"],
            model_id=gw["model_id"],
            timeout_s=float(gw["timeout_s"]),
            max_retries=int(gw["max_retries"]),
            api_key=os.environ.get(API_KEY_ENV),
        )
    )


def _stage_artifacts(stage_dir: Path) -> list[str]:
    """Video ids with a JSON artifact in a stage directory.

    Underscore-prefixed files are stage bookkeeping, not per-video output.
    """
    return sorted(
        p.stem for p in stage_dir.glob("*.json") if not p.stem.startswith("_")
    )


def _store_path(cfg: dict, group: str, video_id: str) -> Path:
    return Path(cfg["stores_dir"]) / group / f"{video_id}.shte"


def _load_normalized(path: Path) -> EmbeddingStore:
    if not path.is_file():
        raise InputProblem(f"embedding store not found: {path}")
    return load_store(path)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def cmd_parse(cfg: dict) -> int:
    meta = _load_metadata(cfg)
    stage = Stage(cfg, "parse")
    units = _discover_transcripts(cfg)

    def worker(unit):
        video_id, path, fmt = unit
        out = stage.dir / f"{video_id}.json"
        info = meta.get(video_id, {})
        digest = _digest(path.read_bytes(), info.get("title", ""), info.get("duration_s"))
        if stage.fresh(video_id, digest, out):
            return
        try:
            t = parse_transcript(
                path.read_bytes(),
                fmt,
                video_id=video_id,
                title=info.get("title", ""),
                duration_s=info.get("duration_s"),
            )
            out.write_bytes(serialize_transcript(t, TranscriptFormat.SENTENCE_JSON))
            stage.record(video_id, digest)
        except (PipelineError, ValueError) as e:
            stage.fail(video_id, e)

    _run_units(units, worker, int(cfg["workers"]))
    return stage.finish()


def cmd_filter(cfg: dict) -> int:
    meta = _load_metadata(cfg)
    stage = Stage(cfg, "filter")
    gateway = _gateway(cfg)
    fcfg = filtering_mod.FilterConfig(
        excerpt_max_chars=int(cfg["filter"]["excerpt_max_chars"]),
        max_tokens=int(cfg["filter"]["max_tokens"]),
        temperature=float(cfg["filter"]["temperature"]),
    )
    parse_dir = Path(cfg["out_dir"]) / "parse"
    if not parse_dir.is_dir():
        raise InputProblem("no parse output; run `parse` first")
    video_ids = _stage_artifacts(parse_dir)
    if not video_ids:
        raise InputProblem("parse stage produced no transcripts")
    verdicts: dict[str, filtering_mod.FilterVerdict] = {}
    out_path = stage.dir / "verdicts.jsonl"
    stage_digest = _digest(
        *[(parse_dir / f"{v}.json").read_bytes() for v in video_ids],
        json.dumps(cfg["filter"], sort_keys=True),
        json.dumps(meta, sort_keys=True),
    )
    if stage.fresh("__stage__", stage_digest, out_path):
        return stage.finish()

    def worker(video_id):
        try:
            t = _parsed_transcript(cfg, meta, video_id)
            verdicts[video_id] = filtering_mod.classify_video(t, gateway, fcfg)
        except (PipelineError, ValueError) as e:
            stage.fail(video_id, e)

    _run_units(video_ids, worker, int(cfg["workers"]))
    filtering_mod.write_verdicts(
        [verdicts[v] for v in sorted(verdicts)], out_path
    )
    stage.record("__stage__", stage_digest)
    return stage.finish()


def cmd_extract(cfg: dict) -> int:
    meta = _load_metadata(cfg)
    stage = Stage(cfg, "extract")
    gateway = _gateway(cfg)
    ecfg = extraction_mod.ExtractionConfig(
        max_tokens=int(cfg["extract"]["max_tokens"]),
        temperature=float(cfg["extract"]["temperature"]),
        max_steps=int(cfg["extract"]["max_steps"]),
    )
    verdicts_path = Path(cfg["out_dir"]) / "filter" / "verdicts.jsonl"
    if not verdicts_path.is_file():
        raise InputProblem("no filter verdicts; run `filter` first")
    keep = [v.video_id for v in filtering_mod.read_verdicts(verdicts_path) if v.is_instructional]

    def worker(video_id):
        out = stage.dir / f"{video_id}.json"
        parsed = Path(cfg["out_dir"]) / "parse" / f"{video_id}.json"
        info = meta.get(video_id, {})
        digest = _digest(
            parsed.read_bytes() if parsed.is_file() else b"",
            info.get("title", ""),
            info.get("duration_s"),
            json.dumps(cfg["extract"], sort_keys=True),
        )
        if stage.fresh(video_id, digest, out):
            return
        try:
            t = _parsed_transcript(cfg, meta, video_id)
            steps = extraction_mod.extract_steps(t, gateway, ecfg)
            extraction_mod.write_steps(steps, out)
            stage.record(video_id, digest)
        except (PipelineError, ValueError) as e:
            stage.fail(video_id, e)

    _run_units(sorted(keep), worker, int(cfg["workers"]))
    return stage.finish()


def cmd_align(cfg: dict) -> int:
    stage = Stage(cfg, "align")
    extract_dir = Path(cfg["out_dir"]) / "extract"
    if not extract_dir.is_dir():
        raise InputProblem("no extract output; run `extract` first")
    video_ids = _stage_artifacts(extract_dir)
    epsilon = float(cfg["epsilon_s"])

    def worker(video_id):
        out = stage.dir / f"{video_id}.json"
        steps_path = extract_dir / f"{video_id}.json"
        frame_path = _store_path(cfg, "frames", video_id)
        text_path = _store_path(cfg, "texts", video_id)
        try:
            digest = _digest(
                steps_path.read_bytes(),
                _file_digest(frame_path) if frame_path.is_file() else "missing",
                _file_digest(text_path) if text_path.is_file() else "missing",
                epsilon,
            )
            if stage.fresh(video_id, digest, out):
                return
            steps = extraction_mod.read_steps(steps_path)
            frames = _load_normalized(frame_path)
            texts = _load_normalized(text_path)
            a = alignment_mod.align_video(steps, frames, texts, epsilon_s=epsilon)
            alignment_mod.write_alignment(video_id, a, out)
            stage.record(video_id, digest)
        except (PipelineError, InputProblem, ValueError) as e:
            stage.fail(video_id, e)

    _run_units(video_ids, worker, int(cfg["workers"]))
    return stage.finish()


def cmd_assemble(cfg: dict) -> int:
    meta = _load_metadata(cfg)
    stage = Stage(cfg, "assemble")
    align_dir = Path(cfg["out_dir"]) / "align"
    extract_dir = Path(cfg["out_dir"]) / "extract"
    if not align_dir.is_dir():
        raise InputProblem("no align output; run `align` first")
    video_ids = _stage_artifacts(align_dir)
    out_path = stage.dir / "manifest.jsonl"
    records = []
    for video_id in video_ids:
        try:
            info = meta.get(video_id)
            if not info or "task_id" not in info:
                raise InputProblem(f"no task metadata for {video_id}")
            steps = extraction_mod.read_steps(extract_dir / f"{video_id}.json")
            payload = alignment_mod.read_alignment(align_dir / f"{video_id}.json")
            assignments = tuple(
                alignment_mod.AlignedStep(
                    step_index=s["index"],
                    frame_index=-1,  # not persisted; timestamps identify frames
                    timestamp=s["frame_timestamp"],
                    score=s["score"],
                )
                for s in payload["steps"]
            )
            a = alignment_mod.Alignment(assignments, payload["total_score"])
            records.append(
                dataset_mod.assemble_sequence(
                    steps,
                    a,
                    dataset_mod.SequenceMeta(
                        task_id=int(info["task_id"]),
                        task_name=info.get("task_name", ""),
                        category=info.get("category", ""),
                    ),
                )
            )
        except (PipelineError, InputProblem, ValueError) as e:
            stage.fail(video_id, e)
    records.sort(key=lambda r: r.video_id)
    dataset_mod.write_manifest(dataset_mod.DatasetManifest(tuple(records)), out_path)
    return stage.finish()


def _manifest_arg(cfg: dict, key: str, default_stage: str, default_name: str):
    explicit = cfg.get(key)
    path = Path(explicit) if explicit else Path(cfg["out_dir"]) / default_stage / default_name
    if not path.is_file():
        raise InputProblem(f"manifest not found: {path}")
    return path


def cmd_stats(cfg: dict) -> int:
    stage = Stage(cfg, "stats")
    manifest_path = _manifest_arg(cfg, "manifest", "assemble", "manifest.jsonl")
    manifest = dataset_mod.read_manifest(manifest_path)
    stats = dataset_mod.compute_stats(manifest)
    report = {
        "n_sequences": stats.n_sequences,
        "steps_per_seq": {"mean": stats.steps_per_seq_mean, "std": stats.steps_per_seq_std},
        "words_per_step": {"mean": stats.words_per_step_mean, "std": stats.words_per_step_std},
        "length_histogram": {str(k): v for k, v in stats.length_histogram.items()},
        "pct_len_2_to_16": stats.pct_len_2_to_16,
        "category_distribution": stats.category_distribution,
    }
    (stage.dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = [
        f"{'sequences':<16}{stats.n_sequences}",
        f"{'steps/sequence':<16}{stats.steps_per_seq_mean:.3f} ± {stats.steps_per_seq_std:.3f}",
        f"{'words/step':<16}{stats.words_per_step_mean:.3f} ± {stats.words_per_step_std:.3f}",
        f"{'len 2..16':<16}{stats.pct_len_2_to_16:.1f}%",
        "",
        f"{'length':<8}count",
    ]
    lines += [f"{k:<8}{v}" for k, v in stats.length_histogram.items()]
    lines += ["", f"{'category':<20}count"]
    lines += [f"{k:<20}{v}" for k, v in stats.category_distribution.items()]
    (stage.dir / "table.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return stage.finish()


def cmd_split(cfg: dict) -> int:
    stage = Stage(cfg, "split")
    manifest_path = _manifest_arg(cfg, "manifest", "assemble", "manifest.jsonl")
    manifest = dataset_mod.read_manifest(manifest_path)
    train, test = dataset_mod.split_dataset(
        manifest,
        n_test_tasks=int(cfg["split"]["n_test_tasks"]),
        per_task_quota=int(cfg["split"]["per_task_quota"]),
        seed=int(cfg["seed"]),
    )
    dataset_mod.write_manifest(train, stage.dir / "train.jsonl")
    dataset_mod.write_manifest(test, stage.dir / "test.jsonl")
    return stage.finish()


def cmd_sample(cfg: dict) -> int:
    stage = Stage(cfg, "sample")
    manifest_path = _manifest_arg(cfg, "manifest", "split", "train.jsonl")
    manifest = dataset_mod.read_manifest(manifest_path)
    if not manifest.records:
        raise InputProblem("manifest has no records to sample")
    rng = random.Random(int(cfg["seed"]))
    fixed_k = cfg["sample"]["k"]
    schedule = dataset_mod.batch_length_schedule(int(cfg["sample"]["k_max"]), rng)
    count = int(cfg["sample"]["count"])
    lines = []
    for batch in range(count):
        k = int(fixed_k) if fixed_k else next(schedule)
        record = manifest.records[rng.randrange(len(manifest.records))]
        window = dataset_mod.sample_training_window(record, k, rng)
        lines.append(
            json.dumps(
                {"batch": batch, "k": k, "record": dataset_mod.record_to_json(window)},
                ensure_ascii=False,
            )
        )
    (stage.dir / "windows.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return stage.finish()


def _merged_text_store(cfg: dict, video_ids: list[str]) -> EmbeddingStore:
    ids: list[str] = []
    blocks = []
    dim = None
    all_normalized = True
    for video_id in video_ids:
        store = _load_normalized(_store_path(cfg, "texts", video_id))
        if dim is None:
            dim = store.dim
        elif store.dim != dim:
            raise InputProblem(f"text store dim mismatch for {video_id}")
        ids.extend(store.ids)
        blocks.append(store.vectors)
        all_normalized = all_normalized and store.normalized
    return EmbeddingStore(
        kind=StoreKind.TEXT,
        dim=dim or 0,
        ids=tuple(ids),
        vectors=np.vstack(blocks),
        normalized=all_normalized,
    )


def cmd_eval(cfg: dict) -> int:
    stage = Stage(cfg, "eval")

    def _missing_ok(path: Path) -> Path:
        if not path.is_file():
            raise InputProblem(f"store not found: {path}")
        return path

    explicit = cfg["eval"].get("manifest")
    manifest_path = (
        Path(explicit) if explicit else Path(cfg["out_dir"]) / "split" / "test.jsonl"
    )
    if not manifest_path.is_file():
        raise InputProblem(f"manifest not found: {manifest_path}")
    manifest = dataset_mod.read_manifest(manifest_path, split="test")

    task_store_path = cfg["eval"].get("task_store") or str(
        Path(cfg["stores_dir"]) / "tasks.shte"
    )
    task_store = load_store(_missing_ok(Path(task_store_path)))

    scene_rows: list[np.ndarray] = []
    scene_ids: list[FrameId] = []
    sequences: list[metrics_mod.GeneratedSequence] = []
    exclusions: set[FrameId] = set()
    usable_records = []
    for record in manifest.records:
        video_id = record.video_id
        try:
            if len(record.items) < 2:
                raise InputProblem("record has a single item; nothing to generate")
            scene_store = _load_normalized(_store_path(cfg, "scenes", video_id))
            index = scene_store.row_index()
            for item in record.items[1:]:
                rid = FrameId(video_id, item.frame_timestamp)
                if rid not in index:
                    raise InputProblem(f"scene store misses frame {rid}")
                scene_ids.append(rid)
                scene_rows.append(scene_store.vectors[index[rid]])
            gen_clip = load_store(_store_path(cfg, "gen_clip", video_id))
            gen_scene = load_store(_store_path(cfg, "gen_scene", video_id))
            n = len(record.items) - 1
            if len(gen_clip) != n or len(gen_scene) != n:
                raise InputProblem(
                    f"expected {n} generated rows, found {len(gen_clip)}/{len(gen_scene)}"
                )
            input_id = FrameId(video_id, record.items[0].frame_timestamp)
            exclusions.add(input_id)
            sequences.append(
                metrics_mod.GeneratedSequence(
                    video_id=video_id,
                    task_id=record.task_id,
                    prompts=tuple(
                        f"{video_id}#{i}" for i in range(1, len(record.items) + 1)
                    ),
                    gen_clip=gen_clip.vectors,
                    gen_scene=gen_scene.vectors,
                    input_image_id=input_id,
                )
            )
            usable_records.append(record)
        except (PipelineError, InputProblem, ValueError) as e:
            stage.fail(video_id, e)

    if not sequences:
        raise InputProblem("no evaluable sequences (see eval/errors.jsonl)")
    text_store = _merged_text_store(cfg, [r.video_id for r in usable_records])
    gallery = EmbeddingStore(
        kind=StoreKind.SCENE,
        dim=scene_rows[0].shape[0],
        ids=tuple(scene_ids),
        vectors=np.vstack(scene_rows),
        normalized=False,  # gallery rows are used via raw dot products
    )
    report = metrics_mod.evaluate(
        sequences, text_store, gallery, task_store, exclusions=exclusions
    )
    metrics_mod.write_report(report, stage.dir / "report.json")
    rows = [(str(cfg["eval"].get("row_name") or "generated"), report)]
    if cfg["eval"].get("with_random_baseline"):
        rows.append(
            (
                "random (expected)",
                metrics_mod.random_baseline(
                    dataset_mod.DatasetManifest(tuple(usable_records), "test"),
                    n_tasks=len(task_store),
                ),
            )
        )
    (stage.dir / "table.txt").write_text(
        metrics_mod.render_table(rows), encoding="utf-8"
    )
    return stage.finish()


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepmine", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--transcripts-dir", dest="transcripts_dir")
        p.add_argument("--stores-dir", dest="stores_dir")
        p.add_argument("--metadata", dest="metadata_path")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--mock-responses", dest="mock_responses",
                       help="scripted gateway responses (JSON: prompt digest -> text)")

    for name in ("parse", "filter", "extract", "align", "assemble",
                 "stats", "split", "sample", "eval"):
        p = sub.add_parser(name)
        common(p)
        if name == "align":
            p.add_argument("--epsilon-s", dest="epsilon_s", type=float)
        if name == "split":
            p.add_argument("--n-test-tasks", dest="n_test_tasks", type=int)
            p.add_argument("--per-task-quota", dest="per_task_quota", type=int)
        if name in ("stats", "split", "sample"):
            p.add_argument("--manifest")
        if name == "sample":
            p.add_argument("--k", type=int)
            p.add_argument("--k-max", dest="k_max", type=int)
            p.add_argument("--count", type=int)
        if name == "eval":
            p.add_argument("--manifest")
            p.add_argument("--task-store", dest="task_store")
            p.add_argument("--row-name", dest="row_name")
            p.add_argument("--with-random-baseline", action="store_true", default=None,
                           dest="with_random_baseline")
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    top_keys = ("out_dir", "transcripts_dir", "stores_dir", "metadata_path",
                "seed", "workers", "epsilon_s", "manifest")
    overrides: dict = {k: getattr(args, k) for k in top_keys if getattr(args, k, None) is not None}
    if getattr(args, "mock_responses", None) is not None:
        overrides["gateway"] = {"mock_responses": args.mock_responses}
    split_over = {k: getattr(args, k) for k in ("n_test_tasks", "per_task_quota")
                  if getattr(args, k, None) is not None}
    if split_over:
        overrides["split"] = split_over
    sample_over = {k: getattr(args, k) for k in ("k", "k_max", "count")
                   if getattr(args, k, None) is not None}
    if sample_over:
        overrides["sample"] = sample_over
    eval_over = {k: getattr(args, k) for k in ("task_store", "row_name", "with_random_baseline")
                 if getattr(args, k, None) is not None}
    if getattr(args, "command", "") == "eval" and getattr(args, "manifest", None):
        eval_over["manifest"] = args.manifest
        overrides.pop("manifest", None)
    if eval_over:
        overrides["eval"] = eval_over
    return overrides


_COMMANDS = {
    "parse": cmd_parse,
    "filter": cmd_filter,
    "extract": cmd_extract,
    "align": cmd_align,
    "assemble": cmd_assemble,
    "stats": cmd_stats,
    "split": cmd_split,
    "sample": cmd_sample,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        return _COMMANDS[args.command](cfg)
    except InputProblem as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
