"""Trainable recommenders: SID encoder-decoder, SASRec, and embedding adapters."""

from .adapter import Adapter, AdapterConfig, adapter_param_count
from .sasrec import SasrecConfig, SasrecModel, build_sasrec, sasrec_embedding_count, sasrec_param_count
from .tiger import ModelError, Seq2SeqConfig, TigerModel, TigerScorer, attach_adapter, build_tiger, tiger_param_count

__all__ = [name for name in dir() if not name.startswith("_")]
from .training import (
    LR_GRID,
    TrainConfig,
    TrainingDivergence,
    TrainResult,
    load_model_params,
    save_model,
    select_lr,
    train_sasrec,
    train_tiger,
)

__all__ = [name for name in dir() if not name.startswith("_")]
