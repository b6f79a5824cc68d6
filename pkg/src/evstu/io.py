"""Serialization and external services.

Covers the EVF1 binary event-frame container, frame loading from image
directories, JSON score sidecars, the HTTP scoring client and the JSON
run-config file.  All on-disk formats are byte-stable: writing, reading
and writing again reproduces identical bytes.

EVF1 layout (little-endian):

    offset 0   magic   4 bytes  "EVF1"
    offset 4   width   u32
    offset 8   height  u32
    offset 12  count   u32      number of event frames
    offset 16  payload count * height * width u16 values, row-major,
               frames in temporal order
"""

import glob
import json
import os
import struct
import time
from dataclasses import dataclass

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from evstu.errors import (
    ConfigError,
    FormatError,
    InputError,
    ProtocolError,
    ServiceError,
)
from evstu.events import EventFrame, Frame, SimConfig, to_intensity
from evstu.pipeline import RunConfig
from evstu.pruning import PruningConfig
from evstu.sampling import SamplingConfig

EVF_MAGIC = b"EVF1"
EVF_HEADER = struct.Struct("<4sIII")

SCORER_URL_ENV = "EVSTU_SCORER_URL"

_FRAME_EXTENSIONS = (".pgm", ".png", ".ppm")


def write_event_file(path, events):
    """Write a sequence of event frames to an EVF1 file."""
    if not events:
        raise InputError("cannot write an EVF1 file with no event frames")
    height, width = events[0].counts.shape
    for ev in events:
        if ev.counts.shape != (height, width):
            raise InputError(
                f"event frame {ev.index} shape {ev.counts.shape} differs from "
                f"({height}, {width})"
            )
    with open(path, "wb") as fh:
        fh.write(EVF_HEADER.pack(EVF_MAGIC, width, height, len(events)))
        for ev in events:
            fh.write(np.ascontiguousarray(ev.counts, dtype="<u2").tobytes())


def decode_event_bytes(data):
    """Decode EVF1 bytes into event frames (1-based temporal indices).

    Rejects anything malformed with a FormatError carrying the byte
    offset of the problem; never raises anything else on bad bytes.
    """
    if len(data) < 4 or data[:4] != EVF_MAGIC:
        raise FormatError("bad magic, expected b'EVF1'", offset=0)
    if len(data) < EVF_HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    _, width, height, count = EVF_HEADER.unpack_from(data, 0)
    if width == 0:
        raise FormatError("width must be positive", offset=4)
    if height == 0:
        raise FormatError("height must be positive", offset=8)
    expected = 2 * width * height * count
    actual = len(data) - EVF_HEADER.size
    if actual < expected:
        raise FormatError(
            f"truncated payload, expected {expected} bytes got {actual}",
            offset=len(data),
        )
    if actual > expected:
        raise FormatError("trailing bytes after payload", offset=EVF_HEADER.size + expected)
    grids = np.frombuffer(data, dtype="<u2", offset=EVF_HEADER.size).reshape(
        count, height, width
    )
    return [EventFrame(index=i + 1, counts=grids[i].copy()) for i in range(count)]


def read_event_file(path):
    """Read an EVF1 file written by ``write_event_file``."""
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_event_bytes(data)


def _load_image(path):
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "L":
                return np.asarray(img, dtype=np.float64) / 255.0
            if img.mode != "RGB":
                img = img.convert("RGB")
            rgb = np.asarray(img, dtype=np.float64) / 255.0
            return rgb
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot read frame image {path}: {exc}") from exc


def list_frame_files(path):
    """Frame image files under a directory or matching a glob pattern.

    Files are ordered lexicographically by name, so zero-padded frame
    numbers (frame_000.pgm, frame_001.pgm, ...) sort temporally.
    """
    if os.path.isdir(path):
        files = [
            os.path.join(path, name)
            for name in sorted(os.listdir(path))
            if name.lower().endswith(_FRAME_EXTENSIONS)
        ]
    else:
        files = sorted(glob.glob(path))
    if not files:
        raise InputError(f"no frame images found at {path}")
    return files


def read_frames(path):
    """Load a frame sequence from 8-bit grayscale or RGB images.

    Accepts a directory (all .pgm/.png/.ppm files inside) or a glob
    pattern.  Pixel values are scaled by 1/255; RGB images are collapsed
    to intensity with BT.601 luma weights.  All files must share one
    resolution.
    """
    files = list_frame_files(path)
    frames = []
    shape = None
    for index, file in enumerate(files):
        data = _load_image(file)
        if shape is None:
            shape = data.shape[:2]
        elif data.shape[:2] != shape:
            raise InputError(
                f"frame image {file} has size {data.shape[1]}x{data.shape[0]}, "
                f"expected {shape[1]}x{shape[0]}"
            )
        if data.ndim == 2:
            frames.append(Frame(index=index, pixels=data))
        else:
            frames.append(
                to_intensity(data[:, :, 0], data[:, :, 1], data[:, :, 2], index=index)
            )
    return frames


@dataclass(frozen=True)
class ScoreSidecar:
    """Question-to-frame similarity scores for a set of frame indices."""

    question: str
    frame_indices: tuple
    scores: tuple

    def as_lookup(self):
        return dict(zip(self.frame_indices, self.scores))


def load_score_sidecar(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read score sidecar {path}: {exc}") from exc
    return _sidecar_from_doc(doc, origin=path)


def _sidecar_from_doc(doc, origin):
    if not isinstance(doc, dict):
        raise InputError(f"score sidecar {origin} must be a JSON object")
    question = doc.get("question", "")
    indices = doc.get("frame_indices")
    scores = doc.get("scores")
    if not isinstance(indices, list) or not isinstance(scores, list):
        raise InputError(f"score sidecar {origin} needs frame_indices and scores arrays")
    if len(indices) != len(scores):
        raise InputError(
            f"score sidecar {origin} arrays differ in length: "
            f"{len(indices)} indices vs {len(scores)} scores"
        )
    values = [float(s) for s in scores]
    if not all(np.isfinite(values)):
        raise InputError(f"score sidecar {origin} contains non-finite scores")
    return ScoreSidecar(
        question=str(question),
        frame_indices=tuple(int(i) for i in indices),
        scores=tuple(values),
    )


def write_score_sidecar(path, sidecar):
    doc = {
        "question": sidecar.question,
        "frame_indices": list(sidecar.frame_indices),
        "scores": list(sidecar.scores),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_scorer_url(config_url=None):
    """Scorer endpoint: the EVSTU_SCORER_URL env var wins over the config."""
    url = os.environ.get(SCORER_URL_ENV) or config_url
    if not url:
        return None
    if not url.endswith("/score"):
        url = url.rstrip("/") + "/score"
    return url


def fetch_scores(url, question, frame_indices, timeout=10.0, retries=3, backoff=0.5):
    """POST {"question", "frames"} to the scorer and collect its scores.

    Any failure (connection, timeout, non-2xx, malformed body, wrong
    score count) is retried with exponential backoff; after the last
    attempt the final failure is raised as ServiceError, or
    ProtocolError when the service answered with the wrong shape.
    Requesting zero frames returns an empty sidecar without any call.
    """
    frame_indices = [int(i) for i in frame_indices]
    if not frame_indices:
        return ScoreSidecar(question=question, frame_indices=(), scores=())
    payload = {"question": question, "frames": frame_indices}
    last_error = None
    attempts = retries + 1
    for attempt in range(attempts):
        if attempt > 0:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            resp = requests.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = ServiceError(f"scorer request to {url} failed: {exc}")
            continue
        if not 200 <= resp.status_code < 300:
            last_error = ServiceError(
                f"scorer at {url} returned HTTP {resp.status_code}"
            )
            continue
        try:
            body = resp.json()
        except ValueError as exc:
            last_error = ProtocolError(f"scorer at {url} returned invalid JSON: {exc}")
            continue
        scores = body.get("scores") if isinstance(body, dict) else None
        if not isinstance(scores, list) or len(scores) != len(frame_indices):
            got = len(scores) if isinstance(scores, list) else "no"
            last_error = ProtocolError(
                f"scorer at {url} returned {got} scores for "
                f"{len(frame_indices)} frames"
            )
            continue
        try:
            values = [float(s) for s in scores]
        except (TypeError, ValueError):
            last_error = ProtocolError(f"scorer at {url} returned non-numeric scores")
            continue
        if not all(np.isfinite(values)):
            last_error = ProtocolError(f"scorer at {url} returned non-finite scores")
            continue
        return ScoreSidecar(
            question=question,
            frame_indices=tuple(frame_indices),
            scores=tuple(values),
        )
    raise last_error


def _section(doc, key, cls, path, **renames):
    raw = doc.pop(key, None)
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: {key} must be an object")
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for name, value in raw.items():
        target = renames.get(name, name)
        if target not in known:
            raise ConfigError(f"config {path}: unknown key {key}.{name}")
        kwargs[target] = value
    return cls(**kwargs)


def load_run_config(path):
    """Load a RunConfig from its JSON file.

    Sections sim/sampling/pruning mirror the SimConfig, SamplingConfig
    and PruningConfig fields; missing sections and fields fall back to
    the defaults.  Unknown keys are rejected.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    doc = dict(doc)
    try:
        sim = _section(doc, "sim", SimConfig, path)
        sampling = _section(doc, "sampling", SamplingConfig, path)
        pruning = _section(doc, "pruning", PruningConfig, path)
        flops = doc.pop("flops_model", None) or {}
        if not isinstance(flops, dict):
            raise ConfigError(f"config {path}: flops_model must be an object")
        unknown_flops = set(flops) - {"linear", "quadratic"}
        if unknown_flops:
            raise ConfigError(
                f"config {path}: unknown flops_model keys {sorted(unknown_flops)}"
            )
        cfg = RunConfig(
            sim=sim,
            sampling=sampling,
            pruning=pruning,
            event_source=doc.pop("event_source", "simulate"),
            scorer=doc.pop("scorer", "sidecar"),
            scorer_url=doc.pop("scorer_url", None),
            grid_rows=doc.pop("grid_rows", None),
            grid_cols=doc.pop("grid_cols", None),
            flops_linear=flops.get("linear", 1.0),
            flops_quadratic=flops.get("quadratic", 0.0),
        )
    except TypeError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    if doc:
        raise ConfigError(f"config {path}: unknown keys {sorted(doc)}")
    return cfg


def load_attention_sidecar(path, num_tokens=None):
    """Load per-frame attention matrices from a JSON sidecar.

    Layout: {"frame_indices": [t, ...], "matrices": [[[...]], ...]}
    where each matrix is queries x tokens for the matching frame.
    Returns a dict mapping frame index to a float array.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read attention sidecar {path}: {exc}") from exc
    if (
        not isinstance(doc, dict)
        or not isinstance(doc.get("frame_indices"), list)
        or not isinstance(doc.get("matrices"), list)
        or len(doc["frame_indices"]) != len(doc["matrices"])
    ):
        raise InputError(
            f"attention sidecar {path} needs aligned frame_indices and matrices arrays"
        )
    out = {}
    for index, matrix in zip(doc["frame_indices"], doc["matrices"]):
        arr = np.asarray(matrix, dtype=np.float64)
        if arr.ndim != 2:
            raise InputError(
                f"attention sidecar {path}: matrix for frame {index} is not 2-D"
            )
        out[int(index)] = arr
    return out
