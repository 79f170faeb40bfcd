"""Named layer stacks: desk-scale dense networks and the 28x28 convolutional
autoencoder (3x3 same-padding convs, 2x2 ceil-mode pooling, 2x nearest
upsampling; one valid 2x2 conv in the decoder to step 8x8 down to 7x7)."""

from __future__ import annotations

from typing import List, Sequence, Tuple

from .layers import LayerSpec


def dense_subnet(embedding_dim: int, hidden: Sequence[int] = (64,)) -> List[LayerSpec]:
    """Siamese subnet R^m -> R^D."""
    specs = []
    for units in hidden:
        specs += [LayerSpec("Dense", units=units), LayerSpec("ReLU")]
    specs.append(LayerSpec("Dense", units=embedding_dim))
    return specs


def dense_encoder(embedding_dim: int, hidden: Sequence[int] = (64,)) -> List[LayerSpec]:
    return dense_subnet(embedding_dim, hidden)


def dense_decoder(n_features: int, hidden: Sequence[int] = (64,)) -> List[LayerSpec]:
    """Mirror decoder with a sigmoid output (inputs live in [0, 1])."""
    specs = []
    for units in reversed(list(hidden)):
        specs += [LayerSpec("Dense", units=units), LayerSpec("ReLU")]
    specs += [LayerSpec("Dense", units=n_features), LayerSpec("Sigmoid")]
    return specs


def conv_subnet(embedding_dim: int, side: int = 28) -> List[LayerSpec]:
    """Small convolutional Siamese subnet for side x side images."""
    return [
        LayerSpec("Reshape", target_shape=(side, side, 1)),
        LayerSpec("Conv2D", filters=8), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),
        LayerSpec("Conv2D", filters=8), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),
        LayerSpec("Flatten"),
        LayerSpec("Dense", units=64), LayerSpec("ReLU"),
        LayerSpec("Dense", units=embedding_dim),
    ]


def conv_encoder(embedding_dim: int) -> List[LayerSpec]:
    """28x28x1 -> 16 -> 8 -> 8 conv/pool stack, then Dense 40 -> D."""
    return [
        LayerSpec("Reshape", target_shape=(28, 28, 1)),
        LayerSpec("Conv2D", filters=16), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),                       # 14x14x16
        LayerSpec("Conv2D", filters=8), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),                       # 7x7x8
        LayerSpec("Conv2D", filters=8), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),                       # 4x4x8
        LayerSpec("Flatten"),                         # 128
        LayerSpec("Dense", units=40), LayerSpec("ReLU"),
        LayerSpec("Dense", units=embedding_dim),
    ]


def conv_decoder(embedding_dim: int) -> List[LayerSpec]:
    """D -> Dense 40 -> 128 -> 4x4x8, upsample/conv back to 28x28x1."""
    return [
        LayerSpec("Dense", units=40), LayerSpec("ReLU"),
        LayerSpec("Dense", units=128), LayerSpec("ReLU"),
        LayerSpec("Reshape", target_shape=(4, 4, 8)),
        LayerSpec("UpSample2D"),                      # 8x8x8
        LayerSpec("Conv2D", filters=8, kernel=(2, 2), padding="valid"),
        LayerSpec("ReLU"),                            # 7x7x8
        LayerSpec("UpSample2D"),                      # 14x14x8
        LayerSpec("Conv2D", filters=16), LayerSpec("ReLU"),
        LayerSpec("UpSample2D"),                      # 28x28x16
        LayerSpec("Conv2D", filters=1),
        LayerSpec("Sigmoid"),                         # 28x28x1
        LayerSpec("Flatten"),                         # 784
    ]


def build_snn_specs(architecture: str, embedding_dim: int,
                    hidden: Sequence[int] = (64,), side: int = 28):
    if architecture == "dense":
        return dense_subnet(embedding_dim, hidden)
    if architecture == "conv":
        return conv_subnet(embedding_dim, side)
    raise ValueError(f"unknown subnet architecture {architecture!r}")


def build_ae_specs(architecture: str, n_features: int, embedding_dim: int,
                   hidden: Sequence[int] = (64,)) -> Tuple[list, list]:
    if architecture == "dense":
        return (dense_encoder(embedding_dim, hidden),
                dense_decoder(n_features, hidden))
    if architecture == "conv28":
        if n_features != 28 * 28:
            raise ValueError("conv28 autoencoder expects 784 input features")
        return conv_encoder(embedding_dim), conv_decoder(embedding_dim)
    raise ValueError(f"unknown autoencoder architecture {architecture!r}")
