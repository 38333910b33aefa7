"""
Scenario presets: predators (hyperbolic density ``u``) moving along the
averaged prey gradient, prey (parabolic density ``w``) diffusing.

``chase`` and ``escape`` differ only in the sign of the drift. In both,
predators grow at a rate that saturates with the total prey mass, and prey
are consumed at a rate that saturates with the locally averaged predator
density. ``decoupled`` switches every interaction off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import DriftSchedule, normalize_kernel, omega_convolve
from .coupling import ModelSpec
from .geometry import Field, Grid, l1_norm

PRESET_NAMES = ("chase", "escape", "decoupled", "custom")

DESCRIPTIONS = {
    "chase": "predators climb the averaged prey gradient (k > 0)",
    "escape": "predators descend the averaged prey gradient (k < 0)",
    "decoupled": "no drift and no interaction terms; both equations independent",
    "custom": "tabulated initial data and coefficients from the config file",
}


@dataclass(frozen=True)
class Bump:
    """``amplitude * cos^2(pi r / (2 radius))`` inside ``radius`` of ``center``.

    ``center`` is given as fractions of the domain extents.
    """

    center: tuple[float, ...]
    radius: float
    amplitude: float

    def __call__(self, x: np.ndarray, extents) -> np.ndarray:
        dim = x.shape[-1]
        c = np.array(self.center[:dim]) * np.array(extents)
        r = np.sqrt(np.sum((x - c) ** 2, axis=-1)) / self.radius
        return np.where(r < 1, self.amplitude * np.cos(0.5 * np.pi * np.minimum(r, 1)) ** 2, 0.0)


def bump_mixture(grid: Grid, bumps, background: float = 0.0) -> Field:
    x = grid.cell_centers()
    values = np.full(grid.shape, float(background))
    for bump in bumps:
        values = values + bump(x, grid.extents)
    return Field(grid, values)


PREDATOR_BUMPS = (Bump((0.25, 0.3), 0.15, 1.0), Bump((0.3, 0.75), 0.12, 0.8))
PREY_BUMPS = (Bump((0.7, 0.55), 0.2, 1.0),)


@dataclass
class ScenarioPreset:
    name: str
    model: ModelSpec
    u0: Field
    w0: Field
    parameters: dict = field(default_factory=dict)


def predator_growth(death: float, conversion: float) -> Callable:
    """Uniform rate ``-death + conversion * m / (1 + m)``, ``m`` the prey mass."""
    def alpha(t, x, w):
        m = l1_norm(w.values, w.grid)
        return -death + conversion * m / (1.0 + m)
    return alpha


def prey_reaction(growth: float, predation: float, kernel) -> Callable:
    """``growth - predation * s / (1 + |s|)`` with ``s`` the averaged predator density."""
    def beta(t, x, u, w):
        s = omega_convolve(u, kernel).values
        return growth - predation * s / (1.0 + np.abs(s))
    return beta


def interacting(name: str, grid: Grid, drift: float, horizon: float = 0.2,
                mu: float = 0.02, death: float = 0.2, conversion: float = 0.5,
                prey_growth: float = 0.1, predation: float = 1.0,
                drift_table: tuple | None = None) -> ScenarioPreset:
    kernel = normalize_kernel(horizon, grid.dimension)
    schedule = (DriftSchedule.table(*drift_table) if drift_table is not None
                else DriftSchedule.constant(drift))
    model = ModelSpec(
        mu=mu, kernel=kernel, drift=schedule,
        alpha=predator_growth(death, conversion),
        beta=prey_reaction(prey_growth, predation, kernel),
        K_alpha=conversion, k_alpha=death + conversion,
        K_beta=predation, k_beta=prey_growth + predation,
        name=name)
    params = dict(drift=drift, horizon=horizon, mu=mu, death=death, conversion=conversion,
                  prey_growth=prey_growth, predation=predation)
    return ScenarioPreset(name, model, bump_mixture(grid, PREDATOR_BUMPS),
                          bump_mixture(grid, PREY_BUMPS, background=0.1), params)


def chase(grid: Grid, drift: float = 0.5, **kw) -> ScenarioPreset:
    return interacting("chase", grid, drift, **kw)


def escape(grid: Grid, drift: float = -0.5, **kw) -> ScenarioPreset:
    return interacting("escape", grid, drift, **kw)


def decoupled(grid: Grid, horizon: float = 0.2, mu: float = 0.02) -> ScenarioPreset:
    model = ModelSpec(mu=mu, kernel=normalize_kernel(horizon, grid.dimension),
                      drift=DriftSchedule.constant(0.0), k_beta=0.0, name="decoupled")
    return ScenarioPreset("decoupled", model, bump_mixture(grid, PREDATOR_BUMPS),
                          bump_mixture(grid, PREY_BUMPS, background=0.1),
                          dict(horizon=horizon, mu=mu))


BUILDERS = {"chase": chase, "escape": escape, "decoupled": decoupled}
