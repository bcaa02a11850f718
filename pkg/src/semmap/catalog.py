"""Label vocabulary and prior vectors.

A :class:`ClassCatalog` holds the ordered base labels reported by the place
classifier followed by any expansion labels added later.  Every belief,
likelihood and prior vector in the package is indexed through it.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

PROB_TOL = 1e-9
RENORM_TOL = 1e-6


class CatalogError(ValueError):
    pass


class ClassCatalog:
    """Ordered, append-only set of place labels."""

    def __init__(self, base_labels: Iterable[str]):
        base = list(base_labels)
        if not base:
            raise CatalogError("catalog needs at least one base label")
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for name in base:
            self._add(name)
        self._n_base = len(base)

    def _add(self, name: str) -> int:
        if not isinstance(name, str) or not name:
            raise CatalogError(f"invalid label name {name!r}")
        if name in self._index:
            raise CatalogError(f"duplicate label {name!r}")
        self._index[name] = len(self._labels)
        self._labels.append(name)
        return self._index[name]

    def append_label(self, name: str) -> int:
        """Append an expansion label and return its index."""
        return self._add(name)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    @property
    def base_labels(self) -> tuple[str, ...]:
        return tuple(self._labels[: self._n_base])

    @property
    def expansion_labels(self) -> tuple[str, ...]:
        return tuple(self._labels[self._n_base:])

    @property
    def n_base(self) -> int:
        return self._n_base

    def is_expansion(self, index: int) -> bool:
        return self._n_base <= index < len(self._labels)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CatalogError(f"unknown label {name!r}") from None

    def name(self, index: int) -> str:
        return self._labels[index]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __repr__(self) -> str:
        return (f"ClassCatalog(base={list(self.base_labels)!r}, "
                f"expansion={list(self.expansion_labels)!r})")

    def to_dict(self) -> dict:
        return {"base": list(self.base_labels),
                "expansion": list(self.expansion_labels)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassCatalog":
        cat = cls(d["base"])
        for name in d.get("expansion", ()):
            cat.append_label(name)
        return cat


def new_catalog(base_labels: Iterable[str]) -> ClassCatalog:
    return ClassCatalog(base_labels)


def as_distribution(values, size: int | None = None, what: str = "distribution") -> np.ndarray:
    """Validate a probability vector, renormalizing small float drift.

    Sums within ``RENORM_TOL`` of one are rescaled; anything further off is
    rejected rather than silently fixed.
    """
    p = np.array(values, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{what} must be one-dimensional")
    if size is not None and p.shape[0] != size:
        raise ValueError(f"{what} has length {p.shape[0]}, expected {size}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{what} must be finite and non-negative")
    total = p.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise ValueError(f"{what} sums to {total!r}, not 1")
    return p / total


def whitelist_prior(catalog: ClassCatalog, allowed: Iterable[str] | None = None,
                    weights: Mapping[str, float] | None = None) -> np.ndarray:
    """Prior over the catalog that is zero outside ``allowed``.

    Inside the whitelist the prior is proportional to ``weights`` (uniform
    when omitted).  ``allowed=None`` means every label.
    """
    names = list(catalog) if allowed is None else list(allowed)
    if not names:
        raise CatalogError("whitelist is empty")
    idx = [catalog.index(n) for n in names]
    if weights is not None:
        for n in weights:
            if n not in catalog:
                raise CatalogError(f"unknown label {n!r} in prior weights")
    prior = np.zeros(len(catalog))
    for n, i in zip(names, idx):
        w = 1.0 if weights is None else float(weights.get(n, 1.0))
        if not np.isfinite(w) or w < 0:
            raise CatalogError(f"invalid prior weight {w!r} for {n!r}")
        prior[i] = w
    total = prior.sum()
    if total <= 0:
        raise CatalogError("whitelist weights sum to zero")
    return prior / total


def extend_prior(prior, n_new: int = 1, weight: float | None = None) -> np.ndarray:
    """Grow a prior for freshly appended expansion labels.

    New labels get ``weight`` (default: the mean of the non-zero entries)
    before renormalization, so they are never masked by accident.
    """
    p = np.asarray(prior, dtype=float)
    if weight is None:
        nz = p[p > 0]
        weight = float(nz.mean()) if nz.size else 1.0
    out = np.concatenate([p, np.full(n_new, weight)])
    return out / out.sum()
