"""Layered spherical medium: geometry and transport parameters.

Units throughout the package: micrometres, seconds, um^2/s.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CM2_PER_S_TO_UM2_PER_S = 1e8


class ValidationError(ValueError):
    """Physically or geometrically invalid input."""


def effective_diffusion(porosity: float, free_diffusion: float) -> float:
    """D_eff = (eps / tau) D with tortuosity tau = eps^(-1/2), i.e. D eps^(3/2)."""
    if not (0.0 < porosity <= 1.0):
        raise ValidationError(f"porosity must lie in (0, 1], got {porosity}")
    if not free_diffusion > 0:
        raise ValidationError(f"free diffusion must be positive, got {free_diffusion}")
    return free_diffusion * porosity**1.5


def tortuosity(porosity: float) -> float:
    if not (0.0 < porosity <= 1.0):
        raise ValidationError(f"porosity must lie in (0, 1], got {porosity}")
    return porosity**-0.5


def jump_constant(d_inner: float, d_outer: float) -> float:
    """Partition ratio kappa = sqrt(D_outer / D_inner); c_inner = kappa c_outer."""
    if not (d_inner > 0 and d_outer > 0):
        raise ValidationError("diffusion coefficients must be positive")
    return math.sqrt(d_outer / d_inner)


def to_um2_per_s(value: float, unit: str) -> float:
    unit = unit.strip().replace("µ", "u").replace("μ", "u")
    if unit in ("um2/s", "um^2/s"):
        return float(value)
    if unit in ("cm2/s", "cm^2/s"):
        return float(value) * CM2_PER_S_TO_UM2_PER_S
    raise ValidationError(f"unknown diffusion unit {unit!r} (use 'um2/s' or 'cm2/s')")


@dataclass(frozen=True)
class Layer:
    width: float
    porosity: float
    degradation_rate: float = 0.0

    def __post_init__(self):
        if not (self.width > 0):
            raise ValidationError(f"layer width must be positive, got {self.width}")
        if not (0.0 < self.porosity <= 1.0):
            raise ValidationError(f"porosity must lie in (0, 1], got {self.porosity}")
        if not (self.degradation_rate >= 0):
            raise ValidationError(
                f"degradation rate must be non-negative, got {self.degradation_rate}"
            )

    @property
    def infinite(self) -> bool:
        return math.isinf(self.width)


@dataclass(frozen=True)
class LayerStack:
    """N finite spherical layers (innermost first) plus an unbounded exterior.

    ``layers`` holds every layer including the exterior, whose width must be
    ``inf``.  Indices used by ``locate_layer`` and the solvers are 0-based:
    layer 0 is the core, layer ``n_finite`` the exterior.
    """

    layers: tuple[Layer, ...]
    free_diffusion: float = 0.1
    diffusion: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 1:
            raise ValidationError("a stack needs at least the exterior layer")
        if not layers[-1].infinite:
            raise ValidationError("the outermost layer must have infinite width")
        if any(l.infinite for l in layers[:-1]):
            raise ValidationError("only the outermost layer may have infinite width")
        if not self.free_diffusion > 0:
            raise ValidationError("free diffusion coefficient must be positive")
        d = np.array([effective_diffusion(l.porosity, self.free_diffusion) for l in layers])
        r = np.concatenate([[0.0], np.cumsum([l.width for l in layers[:-1]])])
        d.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "diffusion", d)
        object.__setattr__(self, "radii", r)

    @classmethod
    def from_widths(
        cls,
        widths: Sequence[float],
        porosities: Sequence[float],
        free_diffusion: float = 0.1,
        degradation: Sequence[float] | None = None,
        exterior_porosity: float = 1.0,
        exterior_degradation: float = 0.0,
    ) -> "LayerStack":
        if len(widths) != len(porosities):
            raise ValidationError("widths and porosities differ in length")
        degradation = [0.0] * len(widths) if degradation is None else list(degradation)
        layers = [Layer(w, e, k) for w, e, k in zip(widths, porosities, degradation)]
        layers.append(Layer(math.inf, exterior_porosity, exterior_degradation))
        return cls(tuple(layers), free_diffusion)

    @property
    def n_finite(self) -> int:
        return len(self.layers) - 1

    @property
    def outer_radius(self) -> float:
        return float(self.radii[-1])

    @property
    def interfaces(self) -> np.ndarray:
        """Radii R_1..R_N of the finite interfaces."""
        return self.radii[1:]

    @property
    def degradation(self) -> np.ndarray:
        return np.array([l.degradation_rate for l in self.layers])

    @property
    def porosity(self) -> np.ndarray:
        return np.array([l.porosity for l in self.layers])

    @property
    def tortuosity(self) -> np.ndarray:
        return self.porosity**-0.5

    @property
    def jump_constants(self) -> np.ndarray:
        """kappa_i for each finite interface, c_i = kappa_i c_{i+1}."""
        d = self.diffusion
        return np.sqrt(d[1:] / d[:-1])

    def locate_layer(self, r: float) -> int:
        """0-based layer containing radius r; r = R_i belongs to the outer layer."""
        return locate_layer(self, r)

    def with_porosity(self, index: int, porosity: float) -> "LayerStack":
        layers = list(self.layers)
        old = layers[index]
        layers[index] = Layer(old.width, porosity, old.degradation_rate)
        return LayerStack(tuple(layers), self.free_diffusion)

    def scaled(self, length_factor: float) -> "LayerStack":
        """Same stack with every width multiplied by ``length_factor``."""
        layers = [
            Layer(l.width * length_factor, l.porosity, l.degradation_rate) for l in self.layers
        ]
        return LayerStack(tuple(layers), self.free_diffusion)

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"width": l.width, "porosity": l.porosity, "degradation_rate": l.degradation_rate}
                for l in self.layers[:-1]
            ],
            "exterior": {
                "porosity": self.layers[-1].porosity,
                "degradation_rate": self.layers[-1].degradation_rate,
            },
            "free_diffusion": {"value": self.free_diffusion, "unit": "um2/s"},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def locate_layer(stack: LayerStack, r: float) -> int:
    if r < 0:
        raise ValidationError("radius must be non-negative")
    # side="right": a point exactly on R_i goes to layer i (the outer one)
    return int(np.searchsorted(stack.interfaces, r, side="right"))


@dataclass(frozen=True)
class SourceSpec:
    r: float
    theta: float = math.pi / 2
    phi: float = math.pi / 2
    t0: float = 0.0
    molecules: int = 1

    def __post_init__(self):
        if not self.r >= 0:
            raise ValidationError("source radius must be non-negative")
        if not (0.0 <= self.theta <= math.pi):
            raise ValidationError("source theta must lie in [0, pi]")
        if not (0.0 <= self.phi < 2 * math.pi):
            raise ValidationError("source phi must lie in [0, 2 pi)")
        if self.molecules < 1:
            raise ValidationError("molecule count must be positive")

    @property
    def cartesian(self) -> np.ndarray:
        return spherical_to_cartesian(self.r, self.theta, self.phi)

    def check_against(self, stack: LayerStack) -> None:
        """Reject a source sitting exactly on an interface."""
        hits = np.isclose(stack.interfaces, self.r, rtol=0, atol=1e-12 * max(1.0, self.r))
        if np.any(hits):
            i = int(np.argmax(hits)) + 1
            raise ValidationError(
                f"source radius {self.r} lies on interface R_{i}; "
                "the source must be strictly inside a layer"
            )


def spherical_to_cartesian(r, theta, phi) -> np.ndarray:
    st = math.sin(theta)
    return np.array([r * st * math.cos(phi), r * st * math.sin(phi), r * math.cos(theta)])


def cos_angle_between(theta1, phi1, theta2, phi2):
    """cos of the angle between two directions given in spherical angles."""
    c = np.cos(theta1) * np.cos(theta2) + np.sin(theta1) * np.sin(theta2) * np.cos(phi1 - phi2)
    return np.clip(c, -1.0, 1.0)


def spheroid_stack(length_factor: float = 1.0, eps3: float = 0.1697) -> LayerStack:
    """Three equal layers of a 275 um spheroid in free fluid (D = 1e-9 cm^2/s)."""
    w = 275.0 / 3.0 * length_factor
    return LayerStack.from_widths(
        [w, w, w], [0.2964, 0.1196, eps3], free_diffusion=to_um2_per_s(1e-9, "cm2/s")
    )
