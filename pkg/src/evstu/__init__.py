"""evstu: event-guided keyframe selection and visual token budgeting.

The toolkit turns a video (plus real or simulated event frames) and a
question into a small set of non-redundant, question-relevant keyframes
and a per-frame keep/drop mask over the visual token grid, under a
global token budget.  See ``evstu.pipeline.run`` for the end-to-end
flow and ``evstu.cli`` for the command-line surface.
"""

from evstu._version import __version__
from evstu.errors import (
    ConfigError,
    DimensionError,
    EmptySelectionError,
    EvstuError,
    FormatError,
    InputError,
    ProtocolError,
    ServiceError,
)
from evstu.events import (
    EventFrame,
    Frame,
    PatchGrid,
    SimConfig,
    event_density,
    patch_density,
    simulate_event_frame,
    simulate_sequence,
    to_intensity,
)
from evstu.pipeline import RunConfig, flops_ratio, manifest_to_json, run
from evstu.pruning import (
    FrameBudget,
    PruningConfig,
    TokenMask,
    allocate_budgets,
    attention_summarize,
    physics_prune,
    prune_frame,
    semantic_prune,
    split_ratios,
)
from evstu.sampling import (
    KeyframeSelection,
    SamplingConfig,
    bin_sample,
    cumulative_sample,
    normalize_scores,
    top_density_sample,
    top_similarity_sample,
    uniform_sample,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DimensionError",
    "EmptySelectionError",
    "EvstuError",
    "FormatError",
    "InputError",
    "ProtocolError",
    "ServiceError",
    "EventFrame",
    "Frame",
    "PatchGrid",
    "SimConfig",
    "event_density",
    "patch_density",
    "simulate_event_frame",
    "simulate_sequence",
    "to_intensity",
    "RunConfig",
    "flops_ratio",
    "manifest_to_json",
    "run",
    "FrameBudget",
    "PruningConfig",
    "TokenMask",
    "allocate_budgets",
    "attention_summarize",
    "physics_prune",
    "prune_frame",
    "semantic_prune",
    "split_ratios",
    "KeyframeSelection",
    "SamplingConfig",
    "bin_sample",
    "cumulative_sample",
    "normalize_scores",
    "top_density_sample",
    "top_similarity_sample",
    "uniform_sample",
]
