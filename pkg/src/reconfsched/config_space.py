"""Configuration space of reconfigurable cores and partitionable LLC ways.

A core exposes three independently sizeable pipeline sections (front end,
back end, load/store). A homogeneous space also carries a small set of
LLC way allocations; a composite index addresses one (core config, ways)
pair. The heterogeneous space is two width-only spaces glued together,
small cores first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True, order=True)
class CoreConfig:
    """Issue widths of one core: front end, back end, load/store."""

    fe_width: int
    be_width: int
    ls_width: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.fe_width, self.be_width, self.ls_width)

    def __str__(self) -> str:
        return "{%d,%d,%d}" % self.as_tuple()


def _enumerate_configs(levels: Sequence[int]) -> list[CoreConfig]:
    # Widest first; load/store varies slowest, then front end, then back end.
    desc = sorted(levels, reverse=True)
    out = []
    for ls in desc:
        for fe in desc:
            for be in desc:
                out.append(CoreConfig(fe, be, ls))
    return out


class ConfigSpace:
    """Homogeneous space: every core offers the same width levels and the
    LLC is split in way units drawn from ``cache_options``.

    The composite index is core-config-major:
    ``index = config_index * len(cache_options) + cache_index``.
    """

    def __init__(
        self,
        levels: Sequence[int] = (2, 4, 6),
        cache_options: Sequence[float] = (0.5, 1.0, 2.0, 4.0),
        total_ways: int = 32,
    ):
        if len(levels) != len(set(levels)) or not levels:
            raise ValueError("width levels must be non-empty and distinct")
        if any(w <= 0 for w in levels):
            raise ValueError("width levels must be positive")
        if not cache_options or any(c <= 0 for c in cache_options):
            raise ValueError("cache options must be positive")
        self.levels = tuple(sorted(levels))
        self.cache_options = tuple(float(c) for c in cache_options)
        self.total_ways = int(total_ways)
        self.core_configs = _enumerate_configs(self.levels)
        self._config_index = {c: i for i, c in enumerate(self.core_configs)}

    hetero = False

    @property
    def n_core_configs(self) -> int:
        return len(self.core_configs)

    @property
    def n_cache_options(self) -> int:
        return len(self.cache_options)

    @property
    def size(self) -> int:
        return self.n_core_configs * self.n_cache_options

    @property
    def widest(self) -> CoreConfig:
        return self.core_configs[0]

    @property
    def narrowest(self) -> CoreConfig:
        return self.core_configs[-1]

    def config_index_of(self, config: CoreConfig) -> int:
        try:
            return self._config_index[config]
        except KeyError:
            raise ValueError(f"config {config} not in space") from None

    def encode(self, config: CoreConfig, cache_index: int) -> int:
        if not 0 <= cache_index < self.n_cache_options:
            raise ValueError(f"cache index {cache_index} out of range")
        return self.config_index_of(config) * self.n_cache_options + cache_index

    def decode(self, index: int) -> tuple[CoreConfig, float]:
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range 0..{self.size - 1}")
        cfg, cache = divmod(index, self.n_cache_options)
        return self.core_configs[cfg], self.cache_options[cache]

    def cache_ways_of(self, index: int) -> float:
        return self.decode(index)[1]

    def widths_of(self, index: int) -> tuple[int, int, int]:
        return self.decode(index)[0].as_tuple()

    def cache_index_of(self, ways: float) -> int:
        for i, c in enumerate(self.cache_options):
            if c == ways:
                return i
        raise ValueError(f"{ways} ways is not an allocation option")

    def index_of(self, config: CoreConfig, ways: float) -> int:
        return self.encode(config, self.cache_index_of(ways))

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "cache_options": list(self.cache_options),
            "total_ways": self.total_ways,
            "hetero": False,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfigSpace) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"ConfigSpace(levels={self.levels}, cache_options={self.cache_options})"


class HeteroSpace:
    """Heterogeneous space: small cores (few lanes) and big cores glued into
    one index range, small configs first, each class widest-first. There is
    no cache dimension; every core holds one equal way share.
    """

    def __init__(
        self,
        small_levels: Sequence[int] = (1, 2),
        big_levels: Sequence[int] = (2, 3, 4),
        total_ways: int = 32,
    ):
        self.small_levels = tuple(sorted(small_levels))
        self.big_levels = tuple(sorted(big_levels))
        self.total_ways = int(total_ways)
        self.small_configs = _enumerate_configs(self.small_levels)
        self.big_configs = _enumerate_configs(self.big_levels)

    hetero = True
    n_cache_options = 1

    @property
    def n_small(self) -> int:
        return len(self.small_configs)

    @property
    def n_big(self) -> int:
        return len(self.big_configs)

    @property
    def size(self) -> int:
        return self.n_small + self.n_big

    @property
    def small_range(self) -> range:
        return range(0, self.n_small)

    @property
    def big_range(self) -> range:
        return range(self.n_small, self.size)

    def is_big(self, index: int) -> bool:
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range 0..{self.size - 1}")
        return index >= self.n_small

    def decode(self, index: int) -> tuple[str, CoreConfig]:
        if self.is_big(index):
            return "big", self.big_configs[index - self.n_small]
        return "small", self.small_configs[index]

    def encode(self, core_class: str, config: CoreConfig) -> int:
        if core_class == "small":
            return self.small_configs.index(config)
        if core_class == "big":
            return self.n_small + self.big_configs.index(config)
        raise ValueError(f"unknown core class {core_class!r}")

    def widths_of(self, index: int) -> tuple[int, int, int]:
        return self.decode(index)[1].as_tuple()

    def cache_ways_of(self, index: int) -> float:
        # Equal static share, one way per core on the reference 32-way LLC.
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range 0..{self.size - 1}")
        return 1.0

    def to_dict(self) -> dict:
        return {
            "levels": list(self.big_levels),
            "small_levels": list(self.small_levels),
            "cache_options": [1.0],
            "total_ways": self.total_ways,
            "hetero": True,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, HeteroSpace) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"HeteroSpace(small_levels={self.small_levels}, "
            f"big_levels={self.big_levels})"
        )


Space = ConfigSpace | HeteroSpace


def space_from_dict(d: dict) -> Space:
    if d.get("hetero"):
        return HeteroSpace(
            small_levels=d.get("small_levels", (1, 2)),
            big_levels=d.get("levels", (2, 3, 4)),
            total_ways=d.get("total_ways", 32),
        )
    return ConfigSpace(
        levels=d.get("levels", (2, 4, 6)),
        cache_options=d.get("cache_options", (0.5, 1.0, 2.0, 4.0)),
        total_ways=d.get("total_ways", 32),
    )


def save_space(space: Space, path: str | Path) -> None:
    Path(path).write_text(json.dumps(space.to_dict(), indent=2) + "\n")


def load_space(path: str | Path) -> Space:
    return space_from_dict(json.loads(Path(path).read_text()))


def space_hash(space: Space) -> str:
    """Short stable digest of the space definition, for output headers."""
    blob = json.dumps(space.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
