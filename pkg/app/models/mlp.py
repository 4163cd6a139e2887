"""
Small tanh multilayer perceptron trained by full-batch Adam on standardized targets
"""
import logging
from typing import Any, Dict, List, Tuple

import numpy as np

from app.models.base import TRAINING_SEED, DynamicsModel

logger = logging.getLogger(__name__)

Params = List[Tuple[np.ndarray, np.ndarray]]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def init_params(sizes: List[int], seed: int = TRAINING_SEED) -> Params:
    rng = np.random.default_rng(seed)
    return [
        (rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)), np.zeros(fan_out))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]


def forward(params: Params, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Output and the list of layer activations (inputs included)"""
    activations = [x]
    h = x
    for i, (w, b) in enumerate(params):
        h = h @ w + b
        if i < len(params) - 1:
            h = np.tanh(h)
        activations.append(h)
    return h, activations


def loss_and_grads(params: Params, x: np.ndarray, y: np.ndarray) -> Tuple[float, Params]:
    """Mean squared error over all entries and its analytic gradient"""
    out, activations = forward(params, x)
    diff = out - y
    loss = float(np.mean(diff ** 2))
    delta = 2.0 * diff / diff.size
    grads: Params = []
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        a_prev = activations[i]
        grads.append((a_prev.T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - activations[i] ** 2)
    grads.reverse()
    return loss, grads


class MLPModel(DynamicsModel):
    model_class = "mlp"

    def __init__(self, config, state_dim: int, control_dim: int):
        super().__init__(config, state_dim, control_dim)
        if config is not None:
            self.hidden_units = int(config["mlp.hidden_units"])
            self.layers = int(config["mlp.layers"])
            self.learning_rate = float(config["mlp.learning_rate"])
            self.epochs = int(config["mlp.epochs"])
        else:
            self.hidden_units, self.layers, self.learning_rate, self.epochs = 32, 1, 1e-2, 50
        sizes = [self.input_dim] + [self.hidden_units] * self.layers + [state_dim]
        self.params: Params = init_params(sizes)
        self.target_mean = np.zeros(state_dim)
        self.target_std = np.ones(state_dim)

    def _fit(self, z: np.ndarray, deltas: np.ndarray) -> None:
        self.target_mean = deltas.mean(axis=0)
        std = deltas.std(axis=0)
        self.target_std = np.where(std > 1e-12, std, 1.0)
        y = (deltas - self.target_mean) / self.target_std

        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.params]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.params]
        last_good = self.params
        for epoch in range(1, self.epochs + 1):
            loss, grads = loss_and_grads(self.params, z, y)
            if not np.isfinite(loss):
                logger.warning(f"MLP loss became non-finite at epoch {epoch}; keeping previous weights")
                self.params = last_good
                break
            last_good = self.params
            updated: Params = []
            for i, ((w, b), (gw, gb)) in enumerate(zip(self.params, grads)):
                mw = ADAM_BETA1 * m[i][0] + (1 - ADAM_BETA1) * gw
                mb = ADAM_BETA1 * m[i][1] + (1 - ADAM_BETA1) * gb
                vw = ADAM_BETA2 * v[i][0] + (1 - ADAM_BETA2) * gw ** 2
                vb = ADAM_BETA2 * v[i][1] + (1 - ADAM_BETA2) * gb ** 2
                m[i], v[i] = (mw, mb), (vw, vb)
                c1, c2 = 1 - ADAM_BETA1 ** epoch, 1 - ADAM_BETA2 ** epoch
                w = w - self.learning_rate * (mw / c1) / (np.sqrt(vw / c2) + ADAM_EPS)
                b = b - self.learning_rate * (mb / c1) / (np.sqrt(vb / c2) + ADAM_EPS)
                updated.append((w, b))
            self.params = updated

    def _predict(self, z: np.ndarray) -> np.ndarray:
        out, _ = forward(self.params, z)
        return out * self.target_std + self.target_mean

    def get_params(self) -> Dict[str, Any]:
        return {
            "weights": [w.tolist() for w, _ in self.params],
            "biases": [b.tolist() for _, b in self.params],
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
        }

    def set_params(self, params: Dict[str, Any]) -> None:
        self.params = [
            (np.asarray(w, dtype=float), np.asarray(b, dtype=float))
            for w, b in zip(params["weights"], params["biases"])
        ]
        self.target_mean = np.asarray(params["target_mean"], dtype=float)
        self.target_std = np.asarray(params["target_std"], dtype=float)
