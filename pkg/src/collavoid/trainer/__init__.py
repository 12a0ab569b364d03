from ..policy import select_action
from .losses import (
    Experience, LossStats, ReturnTarget, a3c_loss_and_grads, discounted_returns, effective_gamma,
    supervised_loss_and_grads,
)
from .pipeline import (
    LOG_COLUMNS, ParameterStore, PredictionService, TrainingConfig, TrainingDiverged,
    TrainingResult, collect_episode, run_training, sample_episode,
)
from .supervised import (
    ExpertPolicy, SupervisedExample, dataset_arrays, generate_supervised_dataset,
    single_agent_success, supervised_init,
)
