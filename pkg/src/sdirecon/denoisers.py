"""Prox operators plugged into the solver's denoising step.

``apply(I, chi)`` approximates argmin_u (chi/2)||I - u||^2 + R(u).  ``chi`` is
the inverse squared noise level, so larger ``chi`` means weaker smoothing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .cube import HsiCube

TV_ITERATIONS = 30
TV_STEP = 0.248


class DenoiserKind(str, enum.Enum):
    IDENTITY = "identity"
    GAUSSIAN = "gaussian"
    TV = "tv"
    SFAT = "sfat"


def _grad(u):
    g = np.zeros((2,) + u.shape)
    g[0, :-1] = u[1:] - u[:-1]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    return g


def _div(p):
    # negative adjoint of _grad
    d = np.zeros(p.shape[1:])
    d[0] = p[0, 0]
    d[1:-1] += p[0, 1:-1] - p[0, :-2]
    d[-1] -= p[0, -2]
    d[:, 0] += p[1, :, 0]
    d[:, 1:-1] += p[1, :, 1:-1] - p[1, :, :-2]
    d[:, -1] -= p[1, :, -2]
    return d


def tv_chambolle(image, weight, iterations=TV_ITERATIONS, step=TV_STEP):
    """Isotropic ROF denoising of a 2-D plane by Chambolle's dual projection.

    Solves min_u 1/2 ||u - f||^2 + weight * TV(u) with a fixed number of
    iterations; Neumann boundary.
    """
    f = np.asarray(image, dtype=np.float64)
    if weight == 0:
        return f.copy()
    if f.shape[0] < 2 or f.shape[1] < 2:
        return f.copy()
    p = np.zeros((2,) + f.shape)
    for _ in range(iterations):
        g = _grad(_div(p) - f / weight)
        norm = np.sqrt(g[0] ** 2 + g[1] ** 2)
        p = (p + step * g) / (1.0 + step * norm)
    return f - weight * _div(p)


@dataclass(frozen=True)
class Denoiser:
    """Denoiser selection plus kind-specific parameters.

    ``gaussian``: ``width`` scales the blur, sigma = width / sqrt(chi).
    ``tv``: ``iterations`` and ``step`` of the dual projection; weight 1/chi.
    ``sfat``: ``seed``, ``levels``, ``heads``, ``beta`` for the toy transformer.
    """

    kind: DenoiserKind = DenoiserKind.IDENTITY
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = DenoiserKind(self.kind)
        object.__setattr__(self, "kind", kind)
        p = self.params
        if kind is DenoiserKind.GAUSSIAN and not p.get("width", 1.0) > 0:
            raise ValueError("gaussian denoiser: width must be > 0")
        if kind is DenoiserKind.TV:
            if int(p.get("iterations", TV_ITERATIONS)) < 1:
                raise ValueError("tv denoiser: iterations must be >= 1")
            if not 0 < p.get("step", TV_STEP) <= 0.25:
                raise ValueError("tv denoiser: step must lie in (0, 0.25]")

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg or {})
        return cls(cfg.pop("kind", "identity"), dict(cfg.pop("params", {})))

    def to_config(self):
        return {"kind": self.kind.value, "params": dict(self.params)}

    def apply(self, cube: HsiCube, chi: float, otf=None) -> HsiCube:
        if not chi > 0:
            raise ValueError(f"chi must be > 0, got {chi}")
        kind = self.kind
        if kind is DenoiserKind.IDENTITY:
            return cube
        if kind is DenoiserKind.GAUSSIAN:
            sigma = self.params.get("width", 1.0) / np.sqrt(chi)
            return HsiCube(ndimage.gaussian_filter(cube.data, sigma=(0, sigma, sigma), mode="wrap"))
        if kind is DenoiserKind.TV:
            it = int(self.params.get("iterations", TV_ITERATIONS))
            step = self.params.get("step", TV_STEP)
            return HsiCube(np.stack([tv_chambolle(b, 1.0 / chi, it, step) for b in cube.data]))
        from .sfat import SfatConfig, build_weights, sfat_forward

        config = SfatConfig(
            channels=cube.bands,
            levels=int(self.params.get("levels", 3)),
            heads=tuple(self.params.get("heads", (1, 2, 4))),
            beta=float(self.params.get("beta", 1.0)),
            seed=int(self.params.get("seed", 0)),
        )
        return sfat_forward(cube, chi, config, build_weights(config), otf=otf)
