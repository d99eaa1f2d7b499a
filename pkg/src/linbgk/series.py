from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NormSeries:
    """Sampled time series of one run.

    ``norms`` maps sensitivity order to the L2(M dx dv) norm trajectory,
    ``moments`` holds the x-integrated weighted (mass, momentum, energy) of
    order 0, ``envelopes`` the registered bound curves and ``diagnostics``
    any extra scalar observables (e.g. the norm of the discrete x-derivative).
    """

    times: np.ndarray
    norms: dict[int, np.ndarray]
    moments: np.ndarray
    envelopes: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def max_order(self) -> int:
        return max(self.norms) if self.norms else -1

    def columns(self) -> dict[str, np.ndarray]:
        """Flat column mapping in the fixed CSV order."""
        cols: dict[str, np.ndarray] = {"time": self.times}
        for k in sorted(self.norms):
            cols[f"norm_order{k}"] = self.norms[k]
        for j, name in enumerate(("mass", "momentum", "energy")):
            cols[name] = self.moments[:, j]
        for name in sorted(self.diagnostics):
            cols[name] = self.diagnostics[name]
        for name in sorted(self.envelopes):
            cols[f"envelope_{name}"] = self.envelopes[name]
        return cols


class SeriesRecorder:
    """Accumulates samples; converted to a NormSeries at the end of a run."""

    def __init__(self) -> None:
        self.times: list[float] = []
        self.norms: dict[int, list[float]] = {}
        self.moments: list[np.ndarray] = []
        self.envelopes: dict[str, list[float]] = {}
        self.diagnostics: dict[str, list[float]] = {}

    def add(self, t: float, norms: dict[int, float], moments: np.ndarray,
            envelopes: dict[str, float] | None = None,
            diagnostics: dict[str, float] | None = None) -> None:
        self.times.append(t)
        for k, val in norms.items():
            self.norms.setdefault(k, []).append(val)
        self.moments.append(np.asarray(moments, dtype=float))
        for k, val in (envelopes or {}).items():
            self.envelopes.setdefault(k, []).append(val)
        for k, val in (diagnostics or {}).items():
            self.diagnostics.setdefault(k, []).append(val)

    def finish(self) -> NormSeries:
        return NormSeries(
            np.array(self.times),
            {k: np.array(v) for k, v in self.norms.items()},
            np.array(self.moments).reshape(-1, 3),
            {k: np.array(v) for k, v in self.envelopes.items()},
            {k: np.array(v) for k, v in self.diagnostics.items()},
        )
