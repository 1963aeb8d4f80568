"""Named desk-scale exemplar systems used by the CLI, tests, and docs."""

from __future__ import annotations

import numpy as np

from .semigroup import GeneratorModel, discretize


def exemplar(name: str, **overrides) -> tuple[GeneratorModel, np.ndarray]:
    """Return (generator, input matrix B) for a named exemplar.

    scalar_stable: x' = -x + u.  heat16: 16-mode Dirichlet heat rod with
    B = I.  jordan2: nonnormal 2x2 block with transient growth, B = I.
    scalar_unstable: x' = +x + u (the negative control).  transport32:
    damped upwind advection.
    """
    if name == "scalar_stable":
        G = discretize("scalar", 1, a=overrides.get("a", -1.0))
        return G, np.array([[1.0]])
    if name == "scalar_unstable":
        G = discretize("scalar", 1, a=overrides.get("a", 1.0))
        return G, np.array([[1.0]])
    if name == "heat16":
        N = overrides.get("N", 16)
        G = discretize("heat_dirichlet", N, length=overrides.get("length", 1.0))
        return G, np.eye(N)
    if name == "jordan2":
        G = discretize("jordan2", 2, eig=overrides.get("eig", -1.0),
                       coupling=overrides.get("coupling", 10.0))
        return G, np.eye(2)
    if name == "transport32":
        N = overrides.get("N", 32)
        G = discretize("transport", N, speed=overrides.get("speed", 1.0),
                       damping=overrides.get("damping", 0.5))
        return G, np.eye(N)
    raise ValueError(f"unknown exemplar {name!r}")


EXEMPLAR_NAMES = ("scalar_stable", "scalar_unstable", "heat16", "jordan2", "transport32")
