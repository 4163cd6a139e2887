"""
Closed-form regularized least-squares models (linear and polynomial features)
"""
from typing import Any, Dict, Tuple

import numpy as np
from sklearn.linear_model import Ridge
from sklearn.preprocessing import PolynomialFeatures

from app.models.base import DynamicsModel


class LinearModel(DynamicsModel):
    model_class = "linear"
    lambda_key = "linear.ridge_lambda"

    def __init__(self, config, state_dim: int, control_dim: int):
        super().__init__(config, state_dim, control_dim)
        self.ridge_lambda = float(config[self.lambda_key]) if config is not None else 1e-8
        self.coef = np.zeros((state_dim, self.n_features))
        self.intercept = np.zeros(state_dim)

    @property
    def n_features(self) -> int:
        return self.input_dim

    def _features(self, z: np.ndarray) -> np.ndarray:
        return z

    def _fit(self, z: np.ndarray, deltas: np.ndarray) -> None:
        # intercept is left unpenalized
        ridge = Ridge(alpha=self.ridge_lambda, fit_intercept=True, solver="auto")
        ridge.fit(self._features(z), deltas)
        self.coef = np.atleast_2d(ridge.coef_)
        self.intercept = np.atleast_1d(ridge.intercept_)

    def _predict(self, z: np.ndarray) -> np.ndarray:
        return self._features(z) @ self.coef.T + self.intercept

    def transition_matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        """(A, B) of the fitted affine map x' ~ A x + B u + c in raw units"""
        n = self.state_dim
        scaled = self.coef / self.input_std
        return np.eye(n) + scaled[:, :n], scaled[:, n:]

    def get_params(self) -> Dict[str, Any]:
        return {"coef": self.coef.tolist(), "intercept": self.intercept.tolist()}

    def set_params(self, params: Dict[str, Any]) -> None:
        self.coef = np.asarray(params["coef"], dtype=float)
        self.intercept = np.asarray(params["intercept"], dtype=float)


class PolyRidgeModel(LinearModel):
    model_class = "poly_ridge"
    lambda_key = "poly_ridge.ridge_lambda"

    def __init__(self, config, state_dim: int, control_dim: int):
        self.degree = int(config["poly_ridge.degree"]) if config is not None else 2
        self._poly = PolynomialFeatures(degree=self.degree, include_bias=False)
        self._poly.fit(np.zeros((1, state_dim + control_dim)))
        super().__init__(config, state_dim, control_dim)

    @property
    def n_features(self) -> int:
        return int(self._poly.n_output_features_)

    def _features(self, z: np.ndarray) -> np.ndarray:
        return self._poly.transform(z)

    def transition_matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError("polynomial models have no single transition matrix")

    def get_params(self) -> Dict[str, Any]:
        return {**super().get_params(), "degree": self.degree}
