"""Vector quantization and sign-split vector quantization of weight matrices.

The package covers the whole path from a dense weight matrix to a bit-exact
container and a cycle estimate for streaming it through an accelerator:

* :mod:`ssvq.core` partitions matrices into subvectors and back.
* :mod:`ssvq.clustering` holds k-means (plain and weighted).
* :mod:`ssvq.vq` is the conventional codebook baseline.
* :mod:`ssvq.signsplit` clusters magnitudes and learns signs separately.
* :mod:`ssvq.freeze` freezes latent signs that keep oscillating.
* :mod:`ssvq.train` runs desk-scale quantization-aware fine-tuning.
* :mod:`ssvq.storage` computes bit budgets and reads/writes ``.ssvq`` files.
* :mod:`ssvq.hwsim` estimates cycles and DRAM traffic per layer.
"""

from .clustering import clustering_mse, kmeans, kmeans_pp_init, weighted_kmeans
from .core import partition, reassemble
from .errors import SSVQError
from .freeze import FreezeConfig, FreezeState, cosine_threshold, freeze_step, majority_vote
from .signsplit import (
    SSVQModel,
    project_codebook,
    ssvq_codebook_grads,
    ssvq_decode,
    ssvq_encode,
    ste_sign_grad,
)
from .storage import bit_budget, cr_ssvq, cr_vq, deserialize, serialize
from .vq import VQModel, accumulate_codeword_grads, gradient_dominance_report, vq_decode, vq_encode

__version__ = "0.1.0"

__all__ = [
    "SSVQError",
    "partition",
    "reassemble",
    "kmeans",
    "kmeans_pp_init",
    "weighted_kmeans",
    "clustering_mse",
    "VQModel",
    "vq_encode",
    "vq_decode",
    "accumulate_codeword_grads",
    "gradient_dominance_report",
    "SSVQModel",
    "ssvq_encode",
    "ssvq_decode",
    "ste_sign_grad",
    "ssvq_codebook_grads",
    "project_codebook",
    "FreezeConfig",
    "FreezeState",
    "freeze_step",
    "cosine_threshold",
    "majority_vote",
    "bit_budget",
    "cr_vq",
    "cr_ssvq",
    "serialize",
    "deserialize",
]
