"""seqlab: recurrent sequence labeling from first principles.

Four small recurrent taggers (elman, jordan, irnn, iplus) sharing one
sigmoid-softmax skeleton, trained online with hand-derived gradients and
momentum SGD, with explicit label/hidden histories instead of
backpropagation through time. Includes corpus ingestion, chunk metrics,
embedding pre-training, a synthetic benchmark generator, bit-exact model
files, and a CLI (``seqlab --help``).
"""

from .data import (Corpus, SequenceExample, SyntheticTask, Vocabulary,
                   bio_chunk_f1, generate_synthetic, read_conll,
                   token_accuracy, write_conll)
from .diagnostics import ConcentrationStats, prob_concentration
from .embeddings import EmbeddingTable, pretrain_embeddings
from .errors import (DimensionError, FormatError, ModelFileError, SeqlabError)
from .models import (Architecture, BidirectionalModel, RnnParameters,
                     StepContext, build_params, param_count, tag_bidirectional,
                     tag_sequence)
from .serialization import load_model, save_model
from .training import (TrainConfig, TrainReport, grad_check, train,
                       train_bidirectional)

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BidirectionalModel", "ConcentrationStats", "Corpus",
    "DimensionError", "EmbeddingTable", "FormatError", "ModelFileError",
    "RnnParameters", "SeqlabError", "SequenceExample", "StepContext",
    "SyntheticTask", "TrainConfig", "TrainReport", "Vocabulary",
    "bio_chunk_f1", "build_params", "generate_synthetic", "grad_check",
    "load_model", "param_count", "pretrain_embeddings", "prob_concentration",
    "read_conll", "save_model", "tag_bidirectional", "tag_sequence",
    "token_accuracy", "train", "train_bidirectional", "write_conll",
]
