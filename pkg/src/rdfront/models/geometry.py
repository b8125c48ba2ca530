from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PolytopeSpec:
    """Directions e_i with e_i . e0 > 0 and an orthonormal frame.

    A point z splits as z = P x + y e0; ``a[i] = P^T e_i`` equals
    nu_i cos(theta_i) and ``s[i] = e_i . e0`` equals sin(theta_i).
    """

    e0: np.ndarray
    directions: np.ndarray
    frame: np.ndarray
    a: np.ndarray
    s: np.ndarray

    @property
    def dim(self) -> int:
        return self.e0.shape[0]

    @property
    def n(self) -> int:
        return self.directions.shape[0]


@dataclass
class SurfaceEval:
    """Surface y = phi(alpha x)/alpha and derived fields at a batch of x."""

    x: np.ndarray
    alpha: float
    height: np.ndarray
    phi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    q_hat: np.ndarray
    h: np.ndarray
    normal: np.ndarray
    tau: np.ndarray

    @property
    def slope_factor(self) -> np.ndarray:
        return np.sqrt(1.0 + np.sum(self.grad**2, axis=1))


@dataclass(frozen=True, eq=False)
class ShiftedPolytope:
    index: int
    lam: float
    polytope: PolytopeSpec
    spread: float
