"""Backbone + head wrapper used by the trainer, the CLI and Grad-CAM."""

from __future__ import annotations

import numpy as np

from .backbone import FeatureExtractor
from .layers import LayerParams, softmax


class Classifier:
    """Images -> backbone features -> head logits.

    When ``freeze_backbone`` is set (the default) only head parameters are
    reported as trainable and no gradient flows into the backbone.
    """

    def __init__(self, backbone: FeatureExtractor, head, freeze_backbone: bool = True):
        self.backbone = backbone
        self.head = head
        self.freeze_backbone = freeze_backbone or not backbone.trainable

    def named_params(self) -> dict[str, LayerParams]:
        return {**self.backbone.named_params(), **self.head.named_params()}

    def trainable_params(self) -> dict[str, LayerParams]:
        if self.freeze_backbone:
            return self.head.named_params()
        return self.named_params()

    def zero_grads(self) -> None:
        for lp in self.named_params().values():
            lp.zero_grads()

    def features(self, images: np.ndarray) -> np.ndarray:
        return self.backbone.extract(images)

    def predict_proba(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, images.shape[0], batch_size):
            logits, _ = self.head.forward(self.features(images[i:i + batch_size]), "infer")
            out.append(softmax(logits.astype(np.float64)))
        return np.concatenate(out, axis=0)

    def predict_proba_features(self, features: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, features.shape[0], batch_size):
            logits, _ = self.head.forward(features[i:i + batch_size], "infer")
            out.append(softmax(logits.astype(np.float64)))
        return np.concatenate(out, axis=0)

    # Grad-CAM hooks: target maps live in the head
    def feature_maps(self, images):
        return self.head.feature_maps(self.features(images))

    def scores_from_maps(self, maps):
        return self.head.scores_from_maps(maps)

    def score_grad(self, maps, target_class):
        return self.head.score_grad(maps, target_class)
