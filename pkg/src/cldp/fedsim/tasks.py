"""Convex per-point losses for the federated simulator.

Each task is convex and L-Lipschitz in the l2 norm for features with
||x||_2 <= 1, so gradients land in the span of the clip ball without actual
clipping:

* ``logistic`` — loss ln(1 + exp(-y theta.x)), gradient -y sigma(-y theta.x) x,
  for labels y in {-1, +1}; L = 1.
* ``linear_abs`` — loss |theta.x - y|, subgradient sgn(theta.x - y) x; L = 1.
* ``zero`` — identically zero loss and gradient, for plumbing tests.

Per-point functions return (loss, gradient); batch helpers return the mean
loss and mean gradient over a (n, d) feature matrix and (n,) label vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ValidationError


def sigmoid(z):
    """1/(1 + e^{-z}), computed stably for large |z|."""
    return np.exp(-np.logaddexp(0.0, -z))


def task_logistic(theta: np.ndarray, x: np.ndarray, y: float) -> tuple[float, np.ndarray]:
    """Logistic loss and gradient at one labeled point, y in {-1, +1}."""
    z = -y * float(x @ theta)
    loss = float(np.logaddexp(0.0, z))
    return loss, (-y * sigmoid(z)) * x


def logistic_batch_loss(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, -Y * (X @ theta))))


def logistic_batch_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    coeff = -Y * sigmoid(-Y * (X @ theta))
    return coeff @ X / X.shape[0]


def task_linear_abs(theta: np.ndarray, x: np.ndarray, y: float) -> tuple[float, np.ndarray]:
    """Absolute-deviation loss |theta.x - y| and its subgradient sgn(.) x."""
    resid = float(x @ theta) - y
    return abs(resid), float(np.sign(resid)) * x


def linear_abs_batch_loss(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean(np.abs(X @ theta - Y)))


def linear_abs_batch_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.sign(X @ theta - Y) @ X / X.shape[0]


def task_zero(theta: np.ndarray, x: np.ndarray, y: float) -> tuple[float, np.ndarray]:
    """Zero loss, zero gradient: the optimizer must leave theta unchanged."""
    return 0.0, np.zeros_like(theta)


def zero_batch_loss(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> float:
    return 0.0


def zero_batch_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.zeros_like(theta)


@dataclass(frozen=True)
class Task:
    """A convex per-point loss with its Lipschitz constant and batch forms."""

    name: str
    lipschitz: float
    point_loss_grad: Callable[[np.ndarray, np.ndarray, float], tuple[float, np.ndarray]]
    batch_loss: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    batch_grad: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


TASKS: dict[str, Task] = {
    "logistic": Task(
        name="logistic",
        lipschitz=1.0,
        point_loss_grad=task_logistic,
        batch_loss=logistic_batch_loss,
        batch_grad=logistic_batch_grad,
    ),
    "linear_abs": Task(
        name="linear_abs",
        lipschitz=1.0,
        point_loss_grad=task_linear_abs,
        batch_loss=linear_abs_batch_loss,
        batch_grad=linear_abs_batch_grad,
    ),
    "zero": Task(
        name="zero",
        lipschitz=1.0,
        point_loss_grad=task_zero,
        batch_loss=zero_batch_loss,
        batch_grad=zero_batch_grad,
    ),
}


def get_task(tag: str) -> Task:
    """Look up a task by name; the error lists what exists."""
    try:
        return TASKS[tag]
    except KeyError:
        raise ValidationError(
            f"unknown task {tag!r}; available: {', '.join(sorted(TASKS))}"
        ) from None
