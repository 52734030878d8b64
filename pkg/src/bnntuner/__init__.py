"""Binarized neural network inference with a profiling-driven per-layer autotuner.

Networks with {-1,+1} weights and activations are executed with
xnor/popcount arithmetic under eight interchangeable per-layer backends
(sequential CPU plus seven data/window/neuron work-partitioning
strategies).  A profiler measures every (layer, backend, batch-size) cell
and a greedy mapper emits the execution plan minimizing predicted per-image
latency, together with comparison reports against CPU-only, data-parallel,
and fully-parallel baselines.
"""

from .backends import (
    CoverageViolation,
    ExecutionEngine,
    RunReport,
    TimedResult,
    WorkItem,
    applicable_configs,
    coverage_check,
    output_space,
    partition_work,
)
from .errors import (
    BadRange,
    BnnTunerError,
    ConfigNotApplicable,
    IncompleteTable,
    LabelOutOfRange,
    LengthMismatch,
    ModelHashMismatch,
    NonBinaryValue,
    OddSpatialDim,
    ParseError,
    ShapeMismatch,
    UnsupportedVersion,
    ValidationFailed,
)
from .layers import (
    Activation,
    conv_bin_forward,
    conv_int_forward,
    fc_forward,
    flatten_forward,
    layer_forward,
    maxpool_forward,
    reference_infer,
    step_forward,
)
from .mapper import (
    BASELINE_STRATEGIES,
    ExecPlan,
    baseline_assignments,
    baseline_plans,
    batch_sweep,
    per_batch_assignments,
    predicted_total,
    select_plan,
)
from .model import (
    InputSpec,
    LayerKind,
    LayerSpec,
    ModelSpec,
    ParallelConfig,
    StepDirection,
    layer_display_name,
    model_digest,
    validate_model,
)
from .modelio import (
    export_synthetic_model,
    load_dataset,
    load_model,
    load_plan,
    load_profile,
    save_dataset,
    save_model,
    save_plan,
    save_profile,
)
from .profiler import (
    ProfileEntry,
    ProfileMeta,
    ProfileTable,
    UnstableMeasurement,
    profile_layer,
    profile_model,
)
from .tensors import BinaryTensor, IntTensor, pack_bits, xnor_popcount_dot

__version__ = "0.1.0"
