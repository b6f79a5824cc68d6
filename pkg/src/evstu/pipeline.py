"""End-to-end orchestration: events -> sampling -> budgets -> masks.

``run`` executes the whole preprocessing chain over an in-memory frame
sequence and returns a manifest dict that is byte-identical across
reruns on identical inputs (serialize it with ``manifest_to_json``).
The CLI wires files and services to this function; the stages are the
same public operations exposed by the events/sampling/pruning modules,
so composing them by hand gives identical results.
"""

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from evstu._version import __version__
from evstu.errors import ConfigError, DimensionError, EmptySelectionError, InputError, ServiceError
from evstu.events import (
    EventFrame,
    SimConfig,
    event_density,
    log_intensity,
    patch_density,
    simulate_sequence,
    _counts_from_delta,
)
from evstu.pruning import PruningConfig, allocate_budgets, attention_summarize, prune_frame
from evstu.sampling import (
    KeyframeSelection,
    SamplingConfig,
    bin_sample,
    coarse_target,
    cumulative_sample,
    normalize_scores,
    top_density_sample,
    top_similarity_sample,
    uniform_sample,
)

MANIFEST_SCHEMA = "evstu-manifest/1"

EVENT_SOURCES = ("simulate", "real")
SCORER_MODES = ("sidecar", "service", "none")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs besides the inputs themselves."""

    sim: SimConfig = SimConfig()
    sampling: SamplingConfig = SamplingConfig()
    pruning: PruningConfig = PruningConfig()
    event_source: str = "simulate"
    scorer: str = "sidecar"
    scorer_url: str | None = None
    grid_rows: int | None = None
    grid_cols: int | None = None
    flops_linear: float = 1.0
    flops_quadratic: float = 0.0

    def __post_init__(self):
        if self.event_source not in EVENT_SOURCES:
            raise ConfigError(f"event_source must be one of {EVENT_SOURCES}, got {self.event_source!r}")
        if self.scorer not in SCORER_MODES:
            raise ConfigError(f"scorer must be one of {SCORER_MODES}, got {self.scorer!r}")
        if (self.grid_rows is None) != (self.grid_cols is None):
            raise ConfigError("grid_rows and grid_cols must be given together")
        if self.flops_linear < 0 or self.flops_quadratic < 0:
            raise ConfigError("flops model coefficients must be non-negative")
        if self.flops_linear == 0 and self.flops_quadratic == 0:
            raise ConfigError("flops model coefficients must not both be zero")
        rows, cols = self.token_grid()
        if rows * cols != self.pruning.tokens_per_frame:
            raise ConfigError(
                f"token grid {rows}x{cols} does not produce "
                f"{self.pruning.tokens_per_frame} tokens per frame"
            )

    def token_grid(self):
        """Patch grid shape; defaults to the square root of tokens_per_frame."""
        if self.grid_rows is not None:
            return int(self.grid_rows), int(self.grid_cols)
        side = math.isqrt(self.pruning.tokens_per_frame)
        if side * side != self.pruning.tokens_per_frame:
            raise ConfigError(
                f"tokens_per_frame {self.pruning.tokens_per_frame} is not square; "
                f"set grid_rows and grid_cols explicitly"
            )
        return side, side

    def to_dict(self):
        rows, cols = self.token_grid()
        return {
            "sim": {
                "gamma": self.sim.gamma,
                "pos_threshold": self.sim.pos_threshold,
                "neg_threshold": self.sim.neg_threshold,
                "eps": self.sim.eps,
            },
            "sampling": {
                "rate": self.sampling.rate,
                "num_keyframes": self.sampling.num_keyframes,
                "coarse_strategy": self.sampling.coarse_strategy,
                "fine_strategy": self.sampling.fine_strategy,
            },
            "pruning": {
                "prune_ratio": self.pruning.prune_ratio,
                "physics_cap": self.pruning.physics_cap,
                "base_keep": self.pruning.base_keep,
                "tokens_per_frame": self.pruning.tokens_per_frame,
            },
            "event_source": self.event_source,
            "scorer": self.scorer,
            "scorer_url": self.scorer_url,
            "grid_rows": rows,
            "grid_cols": cols,
            "flops_model": {"linear": self.flops_linear, "quadratic": self.flops_quadratic},
        }


def flops_ratio(tokens_out, tokens_full, linear, quadratic):
    """Compute-cost ratio under a two-coefficient FLOPs model.

    The model charges ``linear`` per token and ``quadratic`` per token
    squared (attention-style growth); the coefficients come from the
    config and must not both be zero.
    """
    if tokens_full <= 0:
        raise InputError(f"tokens_full must be positive, got {tokens_full}")
    if linear < 0 or quadratic < 0 or (linear == 0 and quadratic == 0):
        raise ConfigError("flops model coefficients must be non-negative and not both zero")
    cost = linear * tokens_out + quadratic * tokens_out**2
    full = linear * tokens_full + quadratic * tokens_full**2
    return cost / full


class _Timer:
    def __init__(self, sink):
        self.sink = sink

    def stage(self, name):
        return _Stage(self.sink, name)


class _Stage:
    def __init__(self, sink, name):
        self.sink = sink
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if self.sink is not None:
            self.sink[self.name] = self.sink.get(self.name, 0.0) + (
                time.perf_counter() - self.start
            )
        return False


def _simulate_parallel(frames, cfg, workers):
    shape = frames[0].pixels.shape
    for frame in frames[1:]:
        if frame.pixels.shape != shape:
            raise DimensionError(
                f"frame {frame.index} shape {frame.pixels.shape} differs from {shape}"
            )
    with ThreadPoolExecutor(max_workers=workers) as pool:
        logs = list(pool.map(lambda f: log_intensity(f, cfg), frames))
        counts = list(
            pool.map(lambda i: _counts_from_delta(logs[i + 1] - logs[i], cfg), range(len(frames) - 1))
        )
    return [EventFrame(index=frames[i + 1].index, counts=c) for i, c in enumerate(counts)]


def _check_real_events(frames, events):
    if len(events) != len(frames) - 1:
        raise InputError(
            f"expected {len(frames) - 1} event frames for {len(frames)} frames, "
            f"got {len(events)}"
        )
    shape = frames[0].pixels.shape
    for ev in events:
        if ev.counts.shape != shape:
            raise DimensionError(
                f"event frame {ev.index} shape {ev.counts.shape} does not match "
                f"frame shape {shape}"
            )


def _coarse_stage(densities, sampling, num_frames):
    target = coarse_target(len(densities), sampling.rate)
    if sampling.coarse_strategy == "uni":
        return uniform_sample(num_frames, target)
    if sampling.coarse_strategy == "top":
        return top_density_sample(densities, target)
    try:
        return cumulative_sample(densities, sampling.rate)
    except EmptySelectionError:
        return uniform_sample(num_frames, target)


def _resolve_scores(config, question, coarse, score_lookup, fetch, warn):
    """Raw similarity scores aligned with the coarse indices, or None."""
    if config.scorer == "none":
        return None
    if config.scorer == "service":
        if fetch is not None:
            try:
                sidecar = fetch(question, [int(i) for i in coarse])
                return np.asarray(sidecar.scores, dtype=np.float64)
            except ServiceError as exc:
                if score_lookup is None:
                    raise
                warn(f"scorer service failed ({exc}); falling back to sidecar scores")
        elif score_lookup is None:
            raise ConfigError("scorer mode 'service' needs a fetch callable or sidecar fallback")
    if score_lookup is None:
        raise ConfigError("scorer mode 'sidecar' needs per-frame scores")
    missing = [int(i) for i in coarse if int(i) not in score_lookup]
    if missing:
        raise InputError(f"score sidecar is missing frames {missing}")
    return np.asarray([score_lookup[int(i)] for i in coarse], dtype=np.float64)


def _fine_stage(coarse, raw_scores, sampling):
    """Fine selection plus normalized relevance; returns a KeyframeSelection."""
    num_keyframes = sampling.num_keyframes
    if raw_scores is None:
        if coarse.size <= num_keyframes:
            fine = np.sort(coarse)
        else:
            positions = uniform_sample(coarse.size, num_keyframes)
            fine = np.sort(coarse[positions])
        norm = np.full(fine.size, 1.0 / fine.size)
        return KeyframeSelection(
            coarse_indices=coarse, fine_indices=fine, raw_scores=None, norm_scores=norm
        )
    if sampling.fine_strategy == "top":
        fine = top_similarity_sample(coarse, raw_scores, num_keyframes)
    else:
        fine = bin_sample(coarse, raw_scores, num_keyframes)
    lookup = dict(zip(coarse.tolist(), raw_scores.tolist()))
    fine_raw = np.asarray([lookup[int(i)] for i in fine], dtype=np.float64)
    return KeyframeSelection(
        coarse_indices=coarse,
        fine_indices=fine,
        raw_scores=fine_raw,
        norm_scores=normalize_scores(fine_raw),
    )


def _input_digest(config, question, frames, events):
    digest = hashlib.sha256()
    digest.update(b"evstu-digest/1")
    digest.update(question.encode("utf-8"))
    digest.update(json.dumps(config.to_dict(), sort_keys=True).encode("utf-8"))
    for frame in frames:
        digest.update(np.int64(frame.index).tobytes())
        digest.update(np.ascontiguousarray(frame.pixels, dtype=np.float64).tobytes())
    if events is not None:
        for ev in events:
            digest.update(np.ascontiguousarray(ev.counts, dtype="<u2").tobytes())
    return digest.hexdigest()


def run(
    config,
    frames,
    question="",
    events=None,
    score_lookup=None,
    fetch=None,
    attention=None,
    workers=1,
    stage_timings=None,
    warn=None,
):
    """Run the full preprocessing pipeline and build its manifest.

    frames:        ordered Frame sequence (at least 2)
    events:        aligned real event frames (M-1 of them), or None when
                   config.event_source is "simulate"
    score_lookup:  dict of frame index -> similarity score (sidecar mode,
                   and the fallback for service mode)
    fetch:         callable (question, indices) -> ScoreSidecar for
                   service mode
    attention:     dict of frame index -> queries x tokens matrix; frames
                   without attention are pruned by event saliency alone
    workers:       worker threads for the per-frame stages; any value
                   produces identical output
    stage_timings: optional dict collecting per-stage seconds
    warn:          callable receiving degradation warnings

    Returns the manifest as a JSON-ready dict.
    """
    warn = warn or (lambda message: None)
    timer = _Timer(stage_timings)
    if len(frames) < 2:
        raise InputError(f"need at least 2 frames, got {len(frames)}")
    digest_events = events if config.event_source == "real" else None

    with timer.stage("events"):
        if config.event_source == "real":
            if events is None:
                raise InputError("event_source is 'real' but no event frames were given")
            _check_real_events(frames, events)
        elif workers > 1:
            events = _simulate_parallel(frames, config.sim, workers)
        else:
            events = simulate_sequence(frames, config.sim)

    with timer.stage("density"):
        densities = np.asarray([event_density(ev) for ev in events])

    with timer.stage("coarse_sampling"):
        coarse = _coarse_stage(densities, config.sampling, len(frames))

    with timer.stage("scoring"):
        raw_scores = _resolve_scores(config, question, coarse, score_lookup, fetch, warn)

    with timer.stage("fine_sampling"):
        selection = _fine_stage(coarse, raw_scores, config.sampling)

    with timer.stage("allocation"):
        budgets = allocate_budgets(
            selection.norm_scores, config.pruning, frame_indices=selection.fine_indices
        )

    with timer.stage("pruning"):
        rows, cols = config.token_grid()
        attention = attention or {}

        def frame_mask(budget):
            t = budget.frame_index
            ev = events[t - 1] if t >= 1 else events[0]
            saliency = patch_density(ev, rows, cols)
            attn = attention.get(t)
            scores = None
            if attn is not None:
                scores = attention_summarize(attn, num_tokens=config.pruning.tokens_per_frame)
            return prune_frame(saliency, scores, budget)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                masks = list(pool.map(frame_mask, budgets))
        else:
            masks = [frame_mask(b) for b in budgets]

    with timer.stage("manifest"):
        n = config.pruning.tokens_per_frame
        tokens_in = len(selection.fine_indices) * n
        tokens_out = int(sum(b.keep_final for b in budgets))
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "toolkit_version": __version__,
            "question": question,
            "config": config.to_dict(),
            "input_digest": _input_digest(config, question, frames, digest_events),
            "coarse_indices": [int(i) for i in selection.coarse_indices],
            "keyframes": [
                {
                    "frame_index": int(t),
                    "raw_score": None
                    if selection.raw_scores is None
                    else float(selection.raw_scores[k]),
                    "norm_score": float(selection.norm_scores[k]),
                }
                for k, t in enumerate(selection.fine_indices)
            ],
            "budgets": [
                {
                    "frame_index": b.frame_index,
                    "relevance": b.relevance,
                    "keep_physics": b.keep_physics,
                    "keep_final": b.keep_final,
                    "prune_ratio": b.prune_ratio,
                    "physics_ratio": b.physics_ratio,
                    "semantic_ratio": b.semantic_ratio,
                }
                for b in budgets
            ],
            "masks": [
                {"frame_index": m.frame_index, "keep": m.keep.astype(int).tolist()}
                for m in masks
            ],
            "attention_frames": sorted(
                int(t) for t in attention if int(t) in {b.frame_index for b in budgets}
            ),
            "totals": {
                "frames_in": len(frames),
                "frames_coarse": int(selection.coarse_indices.size),
                "frames_out": int(selection.fine_indices.size),
                "tokens_in": tokens_in,
                "tokens_out": tokens_out,
            },
            "token_ratio": tokens_out / tokens_in,
            "flops_ratio": flops_ratio(
                tokens_out, tokens_in, config.flops_linear, config.flops_quadratic
            ),
        }
    return manifest


def manifest_to_json(manifest):
    """Canonical manifest serialization: sorted keys, fixed layout."""
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"
