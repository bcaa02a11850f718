"""Recursive Bayes filter over place labels.

The belief is multiplied by each frame's likelihood and renormalized.  An
optional deployment prior multiplies in as well, and an optional forgetting
factor mixes the belief back toward the prior before every step so the
filter can follow the robot from one room into the next.  With
``forgetting=0`` and ``prior_mode="at_init_only"`` the filter is the plain
product of prior and likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .catalog import ClassCatalog, as_distribution

PriorMode = Literal["at_init_only", "every_step"]


class InconsistentEvidence(ValueError):
    def __init__(self, msg, frame=None):
        super().__init__(msg if frame is None else f"frame {frame}: {msg}")
        self.frame = frame


@dataclass(frozen=True)
class FilterConfig:
    forgetting: float = 0.02
    epsilon_floor: float = 1e-12
    prior_mode: PriorMode = "every_step"

    def __post_init__(self):
        if not 0.0 <= self.forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in [0, 1]")
        if not 0.0 < self.epsilon_floor <= 1e-6:
            raise ValueError("epsilon_floor must lie in (0, 1e-6]")
        if self.prior_mode not in ("at_init_only", "every_step"):
            raise ValueError(f"unknown prior_mode {self.prior_mode!r}")


# pure product filter: no forgetting, prior applied once
EXACT = FilterConfig(forgetting=0.0, prior_mode="at_init_only")


class PlaceFilter:
    """Filter state for one stream of frames."""

    def __init__(self, catalog: ClassCatalog, prior, config: FilterConfig | None = None):
        self.catalog = catalog
        self.config = config or FilterConfig()
        self.prior = as_distribution(prior, len(catalog), "prior")
        self.belief = self.prior.copy()
        self.step_count = 0

    @property
    def size(self) -> int:
        return self.belief.shape[0]

    def update(self, likelihood, frame=None) -> np.ndarray:
        """Fold one likelihood vector into the belief and return the new belief.

        Raises :class:`InconsistentEvidence` (state untouched) when the
        likelihood has no support where the belief does.
        """
        lik = np.asarray(likelihood, dtype=float)
        if lik.shape != (self.size,):
            raise ValueError(f"likelihood has shape {lik.shape}, expected ({self.size},)")
        if np.any(~np.isfinite(lik)) or np.any(lik < 0):
            raise ValueError("likelihood entries must be finite and non-negative")
        cfg = self.config
        belief = self.belief
        if cfg.forgetting > 0:
            belief = (1.0 - cfg.forgetting) * belief + cfg.forgetting * self.prior
        post = lik * belief
        if cfg.prior_mode == "every_step":
            post = post * self.prior
        # normalize by the max first so long products cannot underflow
        peak = post.max()
        if not peak > 0:
            raise InconsistentEvidence("likelihood and belief have disjoint support", frame)
        post = post / peak
        post /= post.sum()

        live = self.prior > 0
        low = live & (post < cfg.epsilon_floor)
        if low.any():
            post[low] = cfg.epsilon_floor
            post /= post.sum()
        post[~live] = 0.0

        self.belief = post
        self.step_count += 1
        return post.copy()

    def map_label(self) -> tuple[int, float]:
        i = int(np.argmax(self.belief))
        return i, float(self.belief[i])

    def reset(self) -> None:
        self.belief = self.prior.copy()
        self.step_count = 0

    def grow(self, prior) -> None:
        """Adopt a longer prior after expansion labels were appended.

        New labels start at their prior share of the belief.
        """
        prior = as_distribution(prior, len(self.catalog), "prior")
        n_old = self.size
        if prior.shape[0] < n_old:
            raise ValueError("prior cannot shrink")
        extra = prior[n_old:]
        belief = np.concatenate([self.belief * (1.0 - extra.sum()), extra])
        self.prior = prior
        self.belief = belief / belief.sum()


def init_filter(catalog: ClassCatalog, prior, config: FilterConfig | None = None) -> PlaceFilter:
    return PlaceFilter(catalog, prior, config)


def map_label(belief) -> tuple[int, float]:
    b = np.asarray(belief, dtype=float)
    i = int(np.argmax(b))
    return i, float(b[i])


def ml_label(likelihood) -> int:
    """Per-frame maximum-likelihood label (ties go to the lowest index)."""
    return int(np.argmax(np.asarray(likelihood, dtype=float)))


def count_switches(labels) -> int:
    a = np.asarray(labels)
    return int(np.count_nonzero(a[1:] != a[:-1])) if a.size > 1 else 0
