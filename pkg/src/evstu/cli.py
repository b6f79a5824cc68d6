"""Command-line surface for the toolkit.

Subcommands expose the individual stages (simulate, density, sample,
prune) as well as the full pipeline (run, stats) and mask overlay
rendering (viz).  Stage subcommands read small JSON payloads from a
file or stdin ('-') and print JSON to stdout, which keeps them easy to
drive from other languages and scripts.

Exit codes: 0 success, 2 usage, 3 input data, 4 configuration,
5 scoring service.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from evstu._version import __version__
from evstu import io as evio
from evstu import viz
from evstu.errors import (
    ConfigError,
    EvstuError,
    InputError,
    ServiceError,
)
from evstu.events import SimConfig, event_density, simulate_sequence
from evstu.pipeline import RunConfig, manifest_to_json, run
from evstu.pruning import (
    PruningConfig,
    allocate_budgets,
    attention_summarize,
    prune_frame,
    FrameBudget,
)
from evstu.sampling import (
    bin_sample,
    coarse_target,
    cumulative_sample,
    top_density_sample,
    top_similarity_sample,
    uniform_sample,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_SERVICE = 5


def _read_payload(path):
    """JSON payload from a file or stdin when path is '-'."""
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON payload in {path}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read payload {path}: {exc}") from exc


def _emit(args, doc, text):
    if getattr(args, "format", "json") == "json":
        print(json.dumps(doc, sort_keys=True))
    else:
        print(text)


def cmd_simulate(args):
    frames = evio.read_frames(args.frames)
    if len(frames) < 2:
        raise InputError(f"need at least 2 frames to simulate events, got {len(frames)}")
    cfg = SimConfig(
        gamma=args.gamma, pos_threshold=args.cp, neg_threshold=args.cn, eps=args.eps
    )
    events = simulate_sequence(frames, cfg)
    evio.write_event_file(args.out, events)
    h, w = events[0].counts.shape
    _emit(
        args,
        {"event_frames": len(events), "width": w, "height": h, "out": args.out},
        f"wrote {len(events)} event frames ({w}x{h}) to {args.out}",
    )
    return EXIT_OK


def cmd_density(args):
    events = evio.read_event_file(args.events)
    densities = [event_density(ev) for ev in events]
    _emit(
        args,
        {"densities": densities},
        "\n".join(f"{i + 1}\t{d}" for i, d in enumerate(densities)),
    )
    return EXIT_OK


def cmd_sample(args):
    if args.stage == "coarse":
        if args.events:
            events = evio.read_event_file(args.events)
            densities = [event_density(ev) for ev in events]
        elif args.input:
            payload = _read_payload(args.input)
            densities = payload.get("densities") if isinstance(payload, dict) else None
            if densities is None:
                raise InputError("coarse payload needs a 'densities' array")
        else:
            raise InputError("coarse sampling needs --events or --input")
        num_frames = args.frame_count or len(densities) + 1
        strategy = args.strategy or "cs"
        if strategy not in ("cs", "uni", "top"):
            raise InputError(f"coarse strategy must be cs, uni or top, got {strategy!r}")
        if strategy == "uni":
            indices = uniform_sample(num_frames, coarse_target(len(densities), args.rate))
        elif strategy == "top":
            indices = top_density_sample(densities, coarse_target(len(densities), args.rate))
        else:
            indices = cumulative_sample(densities, args.rate)
    else:
        payload = _read_payload(args.input or "-")
        if not isinstance(payload, dict) or "candidates" not in payload or "scores" not in payload:
            raise InputError("fine payload needs 'candidates' and 'scores' arrays")
        if args.count is None:
            raise InputError("fine sampling needs --count")
        strategy = args.strategy or "bin"
        if strategy not in ("bin", "top"):
            raise InputError(f"fine strategy must be bin or top, got {strategy!r}")
        if strategy == "top":
            indices = top_similarity_sample(payload["candidates"], payload["scores"], args.count)
        else:
            indices = bin_sample(payload["candidates"], payload["scores"], args.count)
    out = [int(i) for i in indices]
    _emit(args, {"indices": out}, " ".join(str(i) for i in out))
    return EXIT_OK


def _budget_doc(budget):
    return {
        "frame_index": budget.frame_index,
        "relevance": budget.relevance,
        "keep_physics": budget.keep_physics,
        "keep_final": budget.keep_final,
        "prune_ratio": budget.prune_ratio,
        "physics_ratio": budget.physics_ratio,
        "semantic_ratio": budget.semantic_ratio,
    }


def cmd_prune(args):
    if args.relevance:
        payload = _read_payload(args.relevance)
        if not isinstance(payload, dict) or "scores" not in payload:
            raise InputError("relevance payload needs a 'scores' array")
        cfg = PruningConfig(
            prune_ratio=args.prune_ratio,
            physics_cap=args.physics_cap,
            base_keep=args.base_keep,
            tokens_per_frame=args.tokens,
        )
        budgets = allocate_budgets(
            payload["scores"], cfg, frame_indices=payload.get("frame_indices")
        )
        doc = {"budgets": [_budget_doc(b) for b in budgets]}
        text = "\n".join(
            f"{b.frame_index}\tkeep={b.keep_final}\tphysics={b.keep_physics}" for b in budgets
        )
        _emit(args, doc, text)
        return EXIT_OK

    payload = _read_payload(args.saliency)
    if not isinstance(payload, dict) or "saliency" not in payload:
        raise InputError("saliency payload needs a 'saliency' array")
    saliency = np.asarray(payload["saliency"], dtype=np.float64)
    if saliency.size == 0:
        raise InputError("saliency array is empty")
    if args.keep is None:
        raise InputError("mask pruning needs --keep")
    attn = payload.get("attention")
    n = saliency.size
    if attn is None:
        scores = None
        keep_physics = args.keep
    else:
        scores = attention_summarize(np.asarray(attn, dtype=np.float64), num_tokens=n)
        keep_physics = args.keep_physics if args.keep_physics is not None else n
    budget = FrameBudget(
        frame_index=payload.get("frame_index", 0),
        relevance=0.0,
        keep_final=args.keep,
        keep_physics=max(keep_physics, args.keep),
        prune_ratio=1.0 - args.keep / n,
        physics_ratio=0.0,
        semantic_ratio=0.0,
    )
    mask = prune_frame(saliency, scores, budget)
    keep = mask.keep.astype(int).tolist()
    _emit(args, {"keep": keep}, "".join(str(v) for v in keep))
    return EXIT_OK


def _load_run_inputs(args):
    cfg = evio.load_run_config(args.config) if args.config else RunConfig()
    frames = evio.read_frames(args.frames)
    events = None
    if args.events:
        events = evio.read_event_file(args.events)
        if cfg.event_source != "real":
            cfg = dataclasses.replace(cfg, event_source="real")
    elif cfg.event_source == "real":
        raise InputError("config selects real events but no --events file was given")
    score_lookup = None
    if args.scores:
        score_lookup = evio.load_score_sidecar(args.scores).as_lookup()
    attention = None
    if args.attention:
        attention = evio.load_attention_sidecar(args.attention)
    fetch = None
    if cfg.scorer == "service":
        url = evio.resolve_scorer_url(cfg.scorer_url)
        if url is None:
            if score_lookup is None:
                raise ConfigError(
                    "scorer mode 'service' needs scorer_url in the config or "
                    f"the {evio.SCORER_URL_ENV} environment variable"
                )
        else:
            timeout = float(os.environ.get("EVSTU_SCORER_TIMEOUT", "10"))
            retries = int(os.environ.get("EVSTU_SCORER_RETRIES", "3"))
            backoff = float(os.environ.get("EVSTU_SCORER_BACKOFF", "0.5"))

            def fetch(question, indices, _url=url):
                return evio.fetch_scores(
                    _url, question, indices, timeout=timeout, retries=retries, backoff=backoff
                )
    return cfg, frames, events, score_lookup, attention, fetch


def _run_pipeline(args, stage_timings=None):
    cfg, frames, events, score_lookup, attention, fetch = _load_run_inputs(args)
    manifest = run(
        cfg,
        frames,
        question=args.question,
        events=events,
        score_lookup=score_lookup,
        fetch=fetch,
        attention=attention,
        workers=args.workers,
        stage_timings=stage_timings,
        warn=lambda message: print(f"warning: {message}", file=sys.stderr),
    )
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(manifest_to_json(manifest))
    if args.masks_out:
        os.makedirs(args.masks_out, exist_ok=True)
        for mask in manifest["masks"]:
            path = os.path.join(args.masks_out, f"mask_{mask['frame_index']:06d}.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(mask, fh, sort_keys=True)
                fh.write("\n")
    totals = manifest["totals"]
    _emit(
        args,
        {
            "frames_in": totals["frames_in"],
            "frames_out": totals["frames_out"],
            "tokens_out": totals["tokens_out"],
            "token_ratio": manifest["token_ratio"],
            "flops_ratio": manifest["flops_ratio"],
        },
        f"kept {totals['frames_out']}/{totals['frames_in']} frames, "
        f"tokens_out {totals['tokens_out']}, "
        f"token_ratio {manifest['token_ratio']:.4f}, "
        f"flops_ratio {manifest['flops_ratio']:.4f}",
    )
    return EXIT_OK


def cmd_run(args):
    return _run_pipeline(args)


def cmd_stats(args):
    timings = {}
    code = _run_pipeline(args, stage_timings=timings)
    width = max(len(name) for name in timings)
    for name, seconds in timings.items():
        print(f"{name:<{width}}  {seconds * 1000.0:9.3f} ms", file=sys.stderr)
    return code


def cmd_viz(args):
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {args.manifest}: {exc}") from exc
    config = manifest.get("config", {})
    rows = config.get("grid_rows")
    cols = config.get("grid_cols")
    if not rows or not cols:
        raise InputError(f"manifest {args.manifest} is missing the token grid shape")
    frames = evio.read_frames(args.frames)
    os.makedirs(args.out, exist_ok=True)
    written = []
    for entry in manifest.get("masks", []):
        index = entry["frame_index"]
        if not 0 <= index < len(frames):
            raise InputError(
                f"manifest references frame {index} but only {len(frames)} frames exist"
            )
        image = viz.render_overlay(
            frames[index].pixels, np.asarray(entry["keep"], dtype=bool), rows, cols, dim=args.dim
        )
        path = os.path.join(args.out, f"overlay_{index:06d}.png")
        viz.save_overlay(path, image)
        written.append(path)
    _emit(
        args,
        {"overlays": written},
        "\n".join(written),
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evstu",
        description="Event-guided keyframe selection and visual token budgeting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate event frames from a frame directory")
    p.add_argument("--frames", required=True, help="directory of .pgm/.png/.ppm frames")
    p.add_argument("--out", required=True, help="output EVF1 file")
    p.add_argument("--gamma", type=float, default=2.2)
    p.add_argument("--cp", type=float, default=0.2, help="positive contrast threshold")
    p.add_argument("--cn", type=float, default=0.2, help="negative contrast threshold")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("density", help="per-frame mean event density of an EVF1 file")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("sample", help="coarse or fine keyframe sampling")
    p.add_argument("--stage", choices=("coarse", "fine"), required=True)
    p.add_argument("--input", help="JSON payload file, or '-' for stdin")
    p.add_argument("--events", help="EVF1 file (coarse stage alternative to --input)")
    p.add_argument("--rate", type=float, default=0.25, help="coarse sampling rate")
    p.add_argument("--strategy", default=None, help="coarse: cs|uni|top, fine: bin|top")
    p.add_argument("--count", type=int, help="fine stage keyframe count")
    p.add_argument("--frame-count", type=int, help="total video frames (coarse uni strategy)")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("prune", help="allocate budgets or build one frame's token mask")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--relevance", help="JSON payload with normalized 'scores'")
    group.add_argument("--saliency", help="JSON payload with 'saliency' and optional 'attention'")
    p.add_argument("--prune-ratio", type=float, default=0.5)
    p.add_argument("--physics-cap", type=float, default=0.25)
    p.add_argument("--base-keep", type=float, default=0.05)
    p.add_argument("--tokens", type=int, default=196)
    p.add_argument("--keep", type=int, help="final kept token count (mask mode)")
    p.add_argument("--keep-physics", type=int, help="saliency-stage kept count (mask mode)")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_prune)

    for name, func in (("run", cmd_run), ("stats", cmd_stats)):
        p = sub.add_parser(
            name,
            help="run the full pipeline" if name == "run" else "run with per-stage timing on stderr",
        )
        p.add_argument("--frames", required=True)
        p.add_argument("--events", help="EVF1 file with real event frames")
        p.add_argument("--question", default="")
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--manifest", required=(name == "run"), help="output manifest path")
        p.add_argument("--scores", help="score sidecar JSON")
        p.add_argument("--attention", help="attention sidecar JSON")
        p.add_argument("--masks-out", help="directory for per-frame mask sidecars")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("json", "text"), default="text")
        p.set_defaults(func=func)

    p = sub.add_parser("viz", help="render keep/drop overlays for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=float, default=0.25, help="brightness factor for dropped patches")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_viz)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except (EvstuError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
