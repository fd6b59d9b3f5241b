"""Scikit-learn style regressor wrapping the training engine.

    reg = GazeRegressor(arch="minires", first_stride=1, resolution=64)
    reg.fit(images, angles).predict(images)

X is a float array of images (N, H, W) or (N, C, H, W) in [0, 1] (uint8
accepted and rescaled); for the multi-region architecture X is a dict with
"face", "left" and "right" arrays. y is (N, 2) pitch/yaw in radians.
``score`` returns the negative mean angular error in degrees so that
larger is better, as model-selection utilities expect.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import arch
from . import geometry as geo
from . import training


class GazeRegressor(BaseEstimator, RegressorMixin):
    def __init__(self, arch="minires", resolution=64, in_channels=1,
                 first_stride=2, width=16, blocks_per_stage=(1, 1),
                 patch_stride=4, stages=4, attention_stages=(),
                 share_eye_weights=False, eye_resolution=48,
                 schedule="cnn", epochs=0, base_lr=0.0, batch_size=32, seed=0):
        self.arch = arch
        self.resolution = resolution
        self.in_channels = in_channels
        self.first_stride = first_stride
        self.width = width
        self.blocks_per_stage = blocks_per_stage
        self.patch_stride = patch_stride
        self.stages = stages
        self.attention_stages = attention_stages
        self.share_eye_weights = share_eye_weights
        self.eye_resolution = eye_resolution
        self.schedule = schedule
        self.epochs = epochs
        self.base_lr = base_lr
        self.batch_size = batch_size
        self.seed = seed

    def _model_config(self):
        return arch.ModelConfig(
            arch=self.arch, resolution=self.resolution, in_channels=self.in_channels,
            first_stride=self.first_stride, width=self.width,
            blocks_per_stage=tuple(self.blocks_per_stage),
            patch_stride=self.patch_stride, stages=self.stages,
            attention_stages=tuple(self.attention_stages),
            share_eye_weights=self.share_eye_weights,
            eye_resolution=self.eye_resolution)

    def _check_images(self, X, resolution, name="X"):
        arr = np.asarray(X)
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / np.float32(255.0)
        arr = arr.astype(np.float32, copy=False)
        if arr.ndim == 3:
            arr = arr[:, None, :, :]
        if arr.ndim != 4:
            raise ValueError(f"{name} must be (N, H, W) or (N, C, H, W), got shape {arr.shape}")
        n, c, h, w = arr.shape
        if c != self.in_channels:
            raise ValueError(f"{name} has {c} channels, estimator expects {self.in_channels}")
        if h != resolution or w != resolution:
            raise ValueError(f"{name} is {h}x{w}, estimator expects "
                             f"{resolution}x{resolution}")
        if not np.isfinite(arr).all():
            raise ValueError(f"{name} contains non-finite values")
        return arr

    def _check_X(self, X):
        if self.arch == "multiregion":
            if isinstance(X, dict):
                parts = (X.get("face"), X.get("left"), X.get("right"))
            elif isinstance(X, (tuple, list)) and len(X) == 3:
                parts = tuple(X)
            else:
                raise ValueError(
                    "multi-region input must be a dict with 'face'/'left'/'right' "
                    "or a (face, left, right) tuple")
            if any(p is None for p in parts):
                raise ValueError("multi-region input is missing a region array")
            face = self._check_images(parts[0], self.resolution, "face")
            left = self._check_images(parts[1], self.eye_resolution, "left")
            right = self._check_images(parts[2], self.eye_resolution, "right")
            if not (face.shape[0] == left.shape[0] == right.shape[0]):
                raise ValueError("region arrays disagree on the number of samples")
            return (face, left, right)
        return self._check_images(X, self.resolution)

    @staticmethod
    def _num_samples(X):
        return X[0].shape[0] if isinstance(X, tuple) else X.shape[0]

    def _check_y(self, y, n):
        arr = np.asarray(y, dtype=np.float32)
        if arr.shape != (n, 2):
            raise ValueError(f"y must be (N, 2) pitch/yaw radians, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("y contains non-finite values")
        if np.any(np.abs(arr[:, 0]) >= np.pi / 2):
            raise ValueError("pitch labels must lie strictly inside (-pi/2, pi/2)")
        return arr

    def fit(self, X, y):
        inputs = self._check_X(X)
        labels = self._check_y(y, self._num_samples(inputs))
        cfg = training.TrainConfig(
            model=self._model_config(), schedule=self.schedule, epochs=self.epochs,
            base_lr=self.base_lr, batch_size=self.batch_size, seed=self.seed)
        self.model_ = arch.build_from_model_config(cfg.model, seed=self.seed)
        self.history_, self.wall_seconds_ = training.run_training(
            self.model_, inputs, labels, cfg)
        self.n_parameters_ = arch.parameter_count(self.model_)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("this GazeRegressor is not fitted yet; call fit first")
        inputs = self._check_X(X)
        return training.predict(self.model_, inputs, batch_size=self.batch_size)

    def score(self, X, y):
        """Negative mean angular error in degrees (higher is better)."""
        preds = self.predict(X)
        labels = self._check_y(y, preds.shape[0])
        return -float(np.mean(geo.angular_error_deg(preds, labels.astype(np.float64))))
