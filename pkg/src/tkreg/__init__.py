"""Sparse regression with tensor kernels.

l^p-norm regularized least squares (p = q/(q-1), q even) solved through
its kernelized dual, with a packed layout for the symmetric order-q Gram
tensor and Nystrom-style training-set subsampling.
"""

from .data import (
    Dataset,
    GroundTruth,
    SplitSpec,
    SyntheticSpec,
    gen_synthetic,
    load_dense_csv,
    load_sparse,
    save_dense_csv,
    split,
)
from .errors import (
    CapacityError,
    DataFormatError,
    InvalidOrderError,
    NumericError,
    RangeError,
    ShapeError,
    SubsampleError,
    TkregError,
    UnsupportedKernelError,
)
from .kernels import (
    DenseGramMatrix,
    TensorKernelSpec,
    build_dense_gram_matrix,
    build_packed_gram,
    kernel_eval,
    memory_report,
)
from .metrics import EvalReport, GridRow, best_cell, grid_search, mse
from .model import (
    Model,
    NystromPlan,
    SelectionReport,
    Standardizer,
    fit,
    load_model,
    nystrom_sample,
    predict,
    predict_generic,
    predict_linear_fast,
    save_model,
    select_features,
)
from .solver import (
    DualSolution,
    TrainConfig,
    conjugate_exponent,
    dual_gradient,
    dual_objective,
    duality_map,
    krr_closed_form,
    solve_dual,
)
from .symtensor import (
    IndexScheme,
    PackedSymTensor,
    TupleMultiplicity,
    canonicalize,
    contract_gradient,
    contract_objective,
    iter_canonical,
    multiplicity,
    read_psyt,
    unique_count,
    write_psyt,
)

__version__ = "0.1.0"
