"""DuoLens: dual-encoder detection of machine-generated text and source code.

Two frozen transformer encoders feed a learned gated fusion head; documents
are chunked to the encoder window, chunk logits are aggregated, and the
result is calibrated into a probability that the input is machine-generated
(label 1) rather than human-written (label 0).
"""

from .bundle import TensorBundle, load_bundle, save_bundle
from .corpus import PoolCensus, Sample, balance, ingest, perturb_reformat, perturb_rename, split
from .encoder import EncoderConfig, EncoderModel, forward, pool, random_encoder_bundle, tiny_config
from .fusion import (
    ClassWeights,
    FusionHead,
    TrainConfig,
    cb_bce,
    classify_logit,
    fuse_forward,
    head_gradients,
    linear_probe_fit,
    train_head,
)
from .metrics import EvalReport, accuracy_report, auroc, bench, cross_language_matrix, f1_macro
from .pipeline import Calibration, Detection, Detector, aggregate, chunk, detect, fit_temperature
from .tensor import METER, AllocationMeter, Tensor, gelu, layer_norm, matmul, softmax
from .tokenizers import Encoding, Vocab, bpe_decode, bpe_encode, unigram_encode, wordpiece_encode

__version__ = "0.1.0"
