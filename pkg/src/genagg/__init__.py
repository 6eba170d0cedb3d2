"""Learnable generalised-mean aggregation.

A minimal float64 autodiff engine (tensor), the thirteen classic multiset
reductions plus learnable baselines (aggregators), the augmented f-mean in
closed and MLP form (afm), the distributive-property catalog (distributive),
random graphs with a GraphConv stack (graph), and the regression experiment
harness (experiments).
"""

from .afm import (
    AfmParams,
    CheckpointError,
    GenAgg,
    LimitCase,
    MlpPair,
    NonFiniteError,
    SymbolicF,
    afm_forward,
    inv_loss,
    symbolic_params_for,
)
from .aggregators import (
    FixedAggregator,
    PnaAggregator,
    PowerAggregator,
    SegmentedSet,
    SoftmaxAggregator,
    StandardAggregator,
    aggregate_standard,
)
from .distributive import (
    DistOperator,
    DistributiveError,
    check_gdp,
    check_gdp_limit,
    distributive_catalog,
    psi_apply,
    verify_distributive,
)
from .experiments import (
    DegenerateTargetError,
    ExperimentConfig,
    ExperimentError,
    ResultRecord,
    pearson,
    run_experiment,
    run_trial,
    verify_parametrisations,
    write_csv,
    write_json,
)
from .graph import Gnn, Graph, GraphConvLayer, GraphError, build_gnn, load_graph, random_graph, save_graph
from .nn import BatchNorm1d, Linear, Mlp, batch_norm
from .optim import Adam
from .tensor import (
    AutodiffError,
    EmptySegmentError,
    ShapeError,
    Tensor,
    backward,
    finite_diff_check,
    no_grad,
    rng_stream,
    segment_reduce,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
