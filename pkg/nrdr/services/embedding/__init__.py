from .base import Embedding, EmbeddingMethod, MethodType, StepRecord
from .baseline import BaselineEmbedding, spectral_embed
from .nonredundant import NonRedundantEmbedding, nonredundant_embed
from .sequential import SequentialRegressionEmbedding, sequential_regression_embed
from .dsilva import DsilvaEmbedding, dsilva_select
from .engine import EmbeddingEngine

__all__ = [
    "Embedding",
    "EmbeddingMethod",
    "MethodType",
    "StepRecord",
    "BaselineEmbedding",
    "NonRedundantEmbedding",
    "SequentialRegressionEmbedding",
    "DsilvaEmbedding",
    "EmbeddingEngine",
    "spectral_embed",
    "nonredundant_embed",
    "sequential_regression_embed",
    "dsilva_select",
]
