"""Deep Memory Update recurrent module, baselines, synthetic tasks and experiment runner."""

from .autodiff import Parameter, Tape, Tensor, backward, read_adjoint
from .cells import (
    DMU, GRU, LSTM, RNN, CellSpec, DmuSpec, SequenceModel, build_model, count_weights, dmu_init,
)
from .experiment import ExperimentSpec, emit_reports, run_experiment
from .scaling import ScaleController, capture_norms, interpolation_chain_check, update_scale
from .tasks import make_split, make_task
from .training import TrainConfig, run_until_stop

__version__ = "0.1.0"
