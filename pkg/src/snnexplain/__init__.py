"""Explaining Siamese-network decisions with class prototypes, an
embedding-aligned autoencoder, and prototype-directed perturbations."""

from .autoencoder import (AEModel, AutoencoderLossWeights, autoencoder_loss,
                          decode, encode, finetune_decoder, train_autoencoder)
from .checkpoint import (load_checkpoint, load_prototypes, save_checkpoint,
                         save_prototypes)
from .data import Dataset, gen_synthetic, load_idx_dataset, parse_idx, \
    serialize_idx, write_mask_images
from .explain import (ExplanationResult, PerturbationConfig, PrototypeSet,
                      compute_prototypes, explain, mean_feature_change,
                      nearest_prototype, perturbation_sigma,
                      sample_perturbations, select_important_features,
                      top_q_mask)
from .estimators import (AlignedAutoencoder, NearestPrototypeClassifier,
                         SiameseEmbedder, SiameseExplainer)
from .layers import LayerSpec
from .network import (NetworkState, backward, build_network, forward,
                      grad_check, l2_regularizer)
from .optim import Optimizer, OptimizerConfig, optimizer_step
from .siamese import (ContrastiveParams, PairSet, SNNModel, build_pair_set,
                      contrastive_loss, embed, train_snn)

__version__ = "0.1.0"
