"""Static friction identification with Kolmogorov-Arnold networks.

Typical use::

    from kanfriction import generate_axis_dataset, ArchSpec, workflow
    data = generate_axis_dataset(axis=1)
    result = workflow.run_pipeline(data, ArchSpec.parse("[1,[5,2],1]"))
    print(result.model.rendered)
"""

__version__ = "0.1.0"

from .errors import DivergedError, DomainError, FormatError, InvalidArgument, OverPrunedError
from .splines import SplineGrid, basis_all, basis_all_derivative, basis_matrix, make_uniform_grid
from .network import ArchSpec, KanLayer, KanNetwork, count_parameters, init_network, layer_forward, \
    network_forward, predict
from .autodiff import gradient_check, loss_and_gradients
from .optim import FitConfig, FitTrace, adam, fit, fit_known_form, lbfgs
from .friction import (FrictionDataset, NoiseSpec, StribeckParams, add_noise, axis_params, classical_model,
                       generate_axis_dataset, read_csv, stribeck, subsample, write_csv)
from .metrics import FitReport, pearson_correlation, r_squared, relative_error
from .pruning import PruneConfig, attribution_scores, prune, prune_inputs
from .library import FunctionLibrary, default_library
from .symbolic import SymbolicModel, eval_symbolic, parse_expression, render, suggest_symbolic, symbolify
from .checkpoint import load_checkpoint, save_checkpoint
from . import workflow
