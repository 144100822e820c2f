"""Few-shot embedding-space alignment, inversion by decoding, and embedding defenses."""

__version__ = "0.1.0"

from .alignment import AlignmentMap, alignment_quality, apply_alignment, fit_alignment
from .defense import DefenseSpec, apply_defense, gaussian_apply, ldp_apply, shuffle_apply, wet_apply, wet_generate
from .errors import ConfigError, ConvergenceError, DataError, EmbalignError, NetworkError, TrainingError
from .generator import NearestNeighborDecoder, ToyDecoder, greedy_decode, nn_decode, train_toy_decoder
from .io import Corpus, Record, read_corpus, read_emb1, write_emb1
from .linalg import SvdFactors, l2_normalize, mean_pool, pinv, svd
from .metrics import bleu_n, cosine, entity_f1, rouge_1, rouge_l
from .pipeline import AttackReport, ExperimentConfig, emit_density, run_attack, sweep
from .utility import LabeledEmbeddings, MlpClassifier, evaluate_classifier, train_classifier
