"""Continual learning on frozen-extractor feature streams.

Train a small softmax head on pre-extracted feature vectors, fight
catastrophic forgetting with a bounded latent replay buffer, and measure the
difference with a streaming benchmark harness and an interactive session
service.
"""

from .benchmark import (
    EvalRecord,
    GridResult,
    RunConfig,
    export_grid,
    export_metrics,
    run_grid,
    run_stream,
)
from .buffer import BufferConfig, EvictionReport, FeaturePattern, ReplayBuffer
from .data import (
    Dataset,
    StreamManifest,
    SynthSpec,
    build_scenario_manifest,
    generate_synthetic,
    load_fpb,
    load_manifest,
    project_image,
    save_fpb,
    save_manifest,
)
from .errors import FormatError, NumericError
from .head import (
    HeadParams,
    LabeledBatch,
    TrainConfig,
    forward,
    forward_batch,
    init_head,
    load_head,
    loss_and_grads,
    predict,
    save_head,
    sgd_step,
    train_epochs,
)
from .mathcore import Rng, cross_entropy, finite_diff_grad, relu, rng_choose_k, softmax
from .trainer import (
    EvalResult,
    Session,
    TrainEvent,
    create_session,
    evaluate,
    load_session,
    reset,
    save_session,
    train_cumulative,
    train_on_batch,
)

__version__ = "0.1.0"
