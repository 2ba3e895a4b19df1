"""Time-domain monaural speech separation with gated dilated temporal
convolutional networks.

A strided-conv encoder lifts the mixture waveform into a latent
representation, a TCN-based separator predicts one softmax mask per source,
and a shared linear decoder overlap-adds each masked latent back to a
waveform. Training minimizes the negated permutation-invariant
scale-invariant SDR on whole utterances. Five separator bodies are
provided (serial, pyramid, tap-averaged, dual-branch, difference-gate),
plus an STFT ideal-ratio-mask oracle for an upper bound.
"""

from .audio import (
    MixtureSample,
    Waveform,
    load_wav,
    save_wav,
    scale_to_snr,
    segment_utterance,
    reassemble,
    synth_mixture,
)
from .blocks import (
    ConvBlockConfig,
    TcnConfig,
    dilated_depthwise_conv,
    gradient_support_size,
    receptive_field,
)
# train() and evaluate() are deliberately not re-exported here: binding them
# at package level would shadow the tcnsep.train / tcnsep.evaluate modules.
from .checkpoint import load_checkpoint, restore_model, restore_optimizer, save_checkpoint
from .evaluate import evaluate_checkpoint, separate_utterance, write_report
from .frontend import Decoder, Encoder, FrontendConfig
from .manifest import Manifest, ManifestEntry, build_manifest, make_synthetic_corpus
from .metrics import (
    SdrReport,
    UtteranceScore,
    WSJ0_2MIX_PUBLISHED_SDRI,
    mixture_baseline_sdr,
    pit_best_sdr,
    score_utterance,
    sdri,
    si_sdr,
    si_sdr_db,
    usdr_pit_loss,
)
from .model import SeparationModel
from .separators import SeparatorConfig, VARIANTS, build_separator, count_parameters
from .stft import StftGrid, irm_oracle, istft, stft
from .train import OptimizerConfig, RunConfig, TrainResult, substream_seed

__version__ = "0.1.0"

__all__ = [
    "MixtureSample",
    "Waveform",
    "load_wav",
    "save_wav",
    "scale_to_snr",
    "segment_utterance",
    "reassemble",
    "synth_mixture",
    "ConvBlockConfig",
    "TcnConfig",
    "dilated_depthwise_conv",
    "gradient_support_size",
    "receptive_field",
    "load_checkpoint",
    "restore_model",
    "restore_optimizer",
    "save_checkpoint",
    "evaluate_checkpoint",
    "separate_utterance",
    "write_report",
    "Decoder",
    "Encoder",
    "FrontendConfig",
    "Manifest",
    "ManifestEntry",
    "build_manifest",
    "make_synthetic_corpus",
    "SdrReport",
    "UtteranceScore",
    "WSJ0_2MIX_PUBLISHED_SDRI",
    "mixture_baseline_sdr",
    "pit_best_sdr",
    "score_utterance",
    "sdri",
    "si_sdr",
    "si_sdr_db",
    "usdr_pit_loss",
    "SeparationModel",
    "SeparatorConfig",
    "VARIANTS",
    "build_separator",
    "count_parameters",
    "StftGrid",
    "irm_oracle",
    "istft",
    "stft",
    "OptimizerConfig",
    "RunConfig",
    "TrainResult",
    "substream_seed",
]
