"""
Wave state model
Snapshot of the first-order damped wave system on a sector grid
"""
from dataclasses import dataclass

import numpy as np

from app.models.sector import SectorGrid


@dataclass(frozen=True, eq=False)
class WaveState:
    """
    (u, v) at time t

    For the damped system v = w * du/dt; for free waves (w = 1) v is du/dt itself.
    """

    t: float
    u: np.ndarray
    v: np.ndarray
    grid: SectorGrid

    def local_norm(self, radius: float) -> float:
        """||u(t)||_{L^2(B(radius))}"""
        return self.grid.ball_norm(self.u, radius)

    def weighted_norm(self, delta: float) -> float:
        """||<r>^{-delta} u(t)||_{L^2}"""
        return self.grid.norm((1.0 + self.grid.nodes ** 2) ** (-delta / 2) * self.u)

    def __repr__(self):
        return f"<WaveState t={self.t:.6g} |u|={self.grid.norm(self.u):.6g}>"
