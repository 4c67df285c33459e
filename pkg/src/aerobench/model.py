"""Linearized beam model and its zero-order-hold discretization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .plant import PlantParams


@dataclass
class LinearModel:
    """Continuous state space dx/dt = a x + b u, y = c x with x = (theta, omega)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass
class DiscreteModel:
    """ZOH-sampled counterpart x[k+1] = ad x[k] + bd u[k], y = cd x."""

    ad: np.ndarray
    bd: np.ndarray
    cd: np.ndarray
    ts: float


def linearize(params: PlantParams) -> LinearModel:
    """Analytic Jacobian of the nonlinear dynamics at theta = 0, u = 0."""
    a = np.array([[0.0, 1.0], [-params.c_theta, -params.c_omega]])
    b = np.array([0.0, params.c_u])
    c = np.array([1.0, 0.0])
    return LinearModel(a=a, b=b, c=c)


def discretize(model: LinearModel, ts: float) -> DiscreteModel:
    ad, bd = numerics.zoh_discretize(model.a, model.b, ts)
    return DiscreteModel(ad=ad, bd=bd, cd=model.c.copy(), ts=ts)
