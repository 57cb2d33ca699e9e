"""Containers for sampler output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class WaicAccumulator:
    """Running per-cell log-mean-exp and variance of pointwise log densities.

    Welford updates keep the variance stable; accumulators from separate
    chains merge exactly (up to floating-point reassociation).
    """

    n: int
    lse: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, shape) -> "WaicAccumulator":
        return cls(0, np.full(shape, -np.inf), np.zeros(shape), np.zeros(shape))

    def update(self, ll: np.ndarray) -> None:
        self.n += 1
        np.logaddexp(self.lse, ll, out=self.lse)
        with np.errstate(invalid="ignore"):
            d = ll - self.mean
            self.mean += d / self.n
            self.m2 += d * (ll - self.mean)

    def merge(self, other: "WaicAccumulator") -> "WaicAccumulator":
        n = self.n + other.n
        if n == 0:
            return WaicAccumulator.empty(self.mean.shape)
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return WaicAccumulator(n, np.logaddexp(self.lse, other.lse), mean, m2)

    def pointwise(self):
        """(lpd, pwaic) per cell."""
        if self.n < 2:
            raise ValueError("WAIC needs at least two draws")
        return self.lse - np.log(self.n), self.m2 / (self.n - 1)


@dataclass
class PosteriorDraws:
    """Kept draws from one or more chains.

    ``params[c]`` is (kept iterations x parameters); ``states[c]`` holds the
    thinned expanded-state matrices (labels 1..K) and ``last_states[c]`` the
    final-week states of every kept iteration.
    """

    param_names: tuple
    params: list
    states: list
    last_states: list
    thin: int
    config: dict = field(default_factory=dict)
    waic: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)

    @property
    def n_chains(self) -> int:
        return len(self.params)

    @property
    def n_kept(self) -> int:
        return self.params[0].shape[0] if self.params else 0

    def stacked_params(self) -> np.ndarray:
        return np.concatenate(self.params, axis=0)

    def stacked_states(self) -> np.ndarray:
        return np.concatenate(self.states, axis=0)

    def stacked_last_states(self) -> np.ndarray:
        return np.concatenate(self.last_states, axis=0)

    def column(self, name: str) -> np.ndarray:
        """(chains x kept) draws of one parameter."""
        j = self.param_names.index(name)
        return np.stack([p[:, j] for p in self.params])

    def merged_waic(self) -> WaicAccumulator | None:
        if not self.waic:
            return None
        acc = self.waic[0]
        for other in self.waic[1:]:
            acc = acc.merge(other)
        return acc

    def __eq__(self, other) -> bool:
        if not isinstance(other, PosteriorDraws):
            return NotImplemented
        same = (self.param_names == other.param_names and self.thin == other.thin
                and self.config == other.config and self.n_chains == other.n_chains)
        if not same:
            return False
        for a, b in zip(self.params + self.states + self.last_states,
                        other.params + other.states + other.last_states):
            if a.shape != b.shape or a.dtype != b.dtype or not np.array_equal(a, b):
                return False
        return True
