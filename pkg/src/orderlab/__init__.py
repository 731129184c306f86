"""orderlab: a deterministic lab for data-ordering attacks on SGD.

Batching is the last untrusted step between a dataset and an optimizer.
This package trains small models under bit-reproducible arithmetic and
lets an adversary who controls only the *order* (or selection) of
delivered batches attack the run: reordering and reshuffling to stall or
destabilize convergence, single-class replacement to crater accuracy on
demand, and gradient-matched natural batches that implant backdoors or
flip individual predictions without ever modifying an example. The
theory module checks the order-statistics machinery that predicts when
such attacks can work.
"""

from .batching import BatchPlan, GaussianJitter, PlannedSource, chunk, random_plan
from .brrr import (
    POLICIES,
    AttackSpec,
    BrrrController,
    apply_policy,
    plan_reorder,
    plan_replace_single_class,
    plan_reshuffle,
    rank_items,
)
from .bopbob import (
    BobSchedule,
    PoisonObjective,
    TriggerPattern,
    apply_trigger,
    compose_bop_batch,
    custom_trigger,
    find_matching_batch,
    flag_like,
    poison_gradient,
    run_bob,
    run_bop_single_point,
    trigger_metrics,
    white_lines,
    write_ppm,
)
from .datasets import (
    Dataset,
    generate_blobs,
    generate_digits,
    generate_linreg_data,
    load_idx,
    save_idx,
)
from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    LayoutError,
    NumericError,
    PlanError,
)
from .harness import (
    compare_arms,
    run_bob_experiment,
    run_bop_experiment,
    run_experiment,
    run_sweep,
    theory_battery,
    validate_config,
)
from .metrics import COLUMNS, MetricsLog
from .models import MLP, LinReg2, ModelPair, SmallCNN, SoftmaxRegression, build_model
from .optim import OptimizerState, make_optimizer, step
from .rng import Rng, stream_gen
from .tensor import (
    GradientVector,
    as_tensor,
    dot,
    finite_diff_gradient,
    grad_norm,
    lmean,
    lsum,
    matmul,
)
from .theory import (
    K_INF_NORMAL,
    attack_success_condition,
    bias_term,
    bias_term_trace,
    estimate_Kn,
    k_infinity,
    sample_size_bound,
    xi_order_gap,
    xi_term,
)
from .training import Trainer, evaluate, run_training

__version__ = "0.1.0"
