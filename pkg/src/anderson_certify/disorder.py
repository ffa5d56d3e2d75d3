"""Models of the i.i.d. random site potential and reproducible sampling.

The potential value at a site is a pure function of (seed, site
coordinates, realization index): sampling uses a counter-based generator
(SplitMix64-style avalanche applied to the coordinates), so restricting a
realization to a sub-region reproduces exactly the same values as sampling
the sub-region directly.  No generator state is carried between draws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .lattice import Region

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_CTR = np.uint64(0xD1B54A32D192ED03)
_INV53 = 1.0 / (1 << 53)


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; uint64 wraparound arithmetic is intended."""
    x = np.asarray(x, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= _M1
        x ^= x >> np.uint64(27)
        x *= _M2
        x ^= x >> np.uint64(31)
    return x


def site_keys(seed: int, coords: np.ndarray) -> np.ndarray:
    """Per-site hash keys for an (n, d) array of integer coordinates."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    keys = np.full(coords.shape[0], np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(coords.shape[1]):
            c = coords[:, j].astype(np.uint64) + _GOLD * np.uint64(j + 1)
            keys = _mix64(keys ^ _mix64(c))
    return keys


def uniform01(keys: np.ndarray, index) -> np.ndarray:
    """Uniform [0,1) draws keyed by site hash and realization index.

    ``keys`` and ``index`` broadcast against each other; every value is a
    pure function of (key, index).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(keys ^ _mix64(idx + _CTR))
    return (h >> np.uint64(11)) * _INV53


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts (ints, floats, strings).

    Uses blake2b on a canonical text encoding, so derived seeds are
    reproducible across runs and platforms (unlike builtin ``hash``).
    """
    text = "\x1f".join(
        repr(float(p)) if isinstance(p, float) else repr(p) for p in parts
    )
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class DisorderModel:
    """i.i.d. site-potential distribution with regularity metadata.

    ``kind`` is "uniform" or "tabulated".  The potential entering the
    Hamiltonian is ``coupling * V`` with V drawn from this distribution;
    ``support`` is the (compact) support of V and ``density_bound`` the
    supremum of its density.  Tabulated densities are piecewise linear
    between the given knots.
    """

    kind: str
    support: tuple
    coupling: float = 1.0
    knots: tuple = field(default=(), repr=False)
    weights: tuple = field(default=(), repr=False)

    def __post_init__(self):
        a, b = float(self.support[0]), float(self.support[1])
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"support must be a finite interval, got ({a}, {b})")
        if self.coupling <= 0:
            raise ValueError("coupling must be positive")
        object.__setattr__(self, "support", (a, b))
        if self.kind == "uniform":
            pass
        elif self.kind == "tabulated":
            v = np.asarray(self.knots, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if v.ndim != 1 or len(v) < 2 or len(v) != len(w):
                raise ValueError("tabulated model needs matching knot/density arrays")
            if np.any(np.diff(v) <= 0):
                raise ValueError("knots must be strictly increasing")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("density values must be finite and nonnegative")
            total = np.trapezoid(w, v)
            if not np.isfinite(total) or total <= 0:
                raise ValueError("tabulated density not normalizable")
            if abs(total - 1.0) > 1e-9:
                raise ValueError(
                    f"density must integrate to 1 within 1e-9 (got {total!r}); "
                    "rescale with DisorderModel.tabulated(..., normalize=True)"
                )
            object.__setattr__(self, "knots", tuple(v))
            object.__setattr__(self, "weights", tuple(w))
        else:
            raise ValueError(f"unknown disorder kind {self.kind!r}")

    @classmethod
    def uniform(cls, a: float = -0.5, b: float = 0.5, coupling: float = 1.0) -> "DisorderModel":
        return cls(kind="uniform", support=(a, b), coupling=coupling)

    @classmethod
    def tabulated(cls, knots, density, coupling: float = 1.0, normalize: bool = False) -> "DisorderModel":
        v = np.asarray(knots, dtype=float)
        w = np.asarray(density, dtype=float)
        if normalize:
            total = np.trapezoid(w, v)
            if not np.isfinite(total) or total <= 0:
                raise ValueError("tabulated density not normalizable")
            w = w / total
        return cls(kind="tabulated", support=(v[0], v[-1]),
                   coupling=coupling, knots=tuple(v), weights=tuple(w))

    @property
    def density_bound(self) -> float:
        """Supremum of the density (exact for both supported kinds)."""
        if self.kind == "uniform":
            a, b = self.support
            return 1.0 / (b - a)
        return float(np.max(self.weights))

    def density(self, v) -> np.ndarray:
        """Density evaluated pointwise (0 outside the support)."""
        v = np.asarray(v, dtype=float)
        a, b = self.support
        if self.kind == "uniform":
            return np.where((v >= a) & (v <= b), 1.0 / (b - a), 0.0)
        out = np.interp(v, self.knots, self.weights, left=0.0, right=0.0)
        return np.where((v >= a) & (v <= b), out, 0.0)

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniform [0,1) draws to potential values (inverse CDF)."""
        u = np.asarray(u, dtype=float)
        a, b = self.support
        if self.kind == "uniform":
            return a + (b - a) * u
        return self._tabulated_ppf(u)

    def _cdf_knots(self):
        v = np.asarray(self.knots)
        w = np.asarray(self.weights)
        seg = 0.5 * (w[1:] + w[:-1]) * np.diff(v)
        cdf = np.concatenate([[0.0], np.cumsum(seg)])
        cdf[-1] = 1.0  # guard rounding; normalization already enforced
        return v, w, cdf

    def _tabulated_ppf(self, u):
        # Piecewise-linear density => piecewise-quadratic CDF, inverted
        # segment by segment.
        v, w, cdf = self._cdf_knots()
        seg = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(v) - 2)
        v0, v1 = v[seg], v[seg + 1]
        w0, w1 = w[seg], w[seg + 1]
        du = u - cdf[seg]
        h = v1 - v0
        slope = (w1 - w0) / h
        # Solve w0*t + slope*t^2/2 = du for t in [0, h].
        lin = np.abs(slope) * h < 1e-12 * np.maximum(w0, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.maximum(w0 * w0 + 2.0 * slope * du, 0.0)
            t_quad = (np.sqrt(disc) - w0) / slope
            t_lin = du / np.where(w0 > 0, w0, np.inf)
        t = np.where(lin, t_lin, t_quad)
        return v0 + np.clip(t, 0.0, h)

    def mean(self) -> float:
        if self.kind == "uniform":
            a, b = self.support
            return 0.5 * (a + b)
        v, w = np.asarray(self.knots), np.asarray(self.weights)
        return float(np.trapezoid(v * w, v))

    def describe(self) -> dict:
        out = {"kind": self.kind, "support": list(self.support),
               "coupling": self.coupling, "density_bound": self.density_bound}
        if self.kind == "tabulated":
            out["n_knots"] = len(self.knots)
        return out

    @property
    def model_id(self) -> str:
        a, b = self.support
        if self.kind == "uniform":
            return f"uniform({a!r},{b!r})*{self.coupling!r}"
        tag = derive_seed(*self.knots, *self.weights) & 0xFFFFFFFF
        return f"tabulated[{len(self.knots)}]({a!r},{b!r})*{self.coupling!r}#{tag:08x}"


def density_bound(model: DisorderModel) -> float:
    """Supremum of the model's density."""
    return model.density_bound


class Realization:
    """One sample of the potential field on a region.

    ``values`` are in potential units (the coupling is applied at operator
    assembly).  Regenerating with the same (model, region, seed, index) is
    bit-identical, and values agree site-by-site with any realization of a
    super-region at the same seed and index.
    """

    __slots__ = ("region", "model", "seed", "index", "_values")

    def __init__(self, region: Region, model: DisorderModel, seed: int,
                 index: int, values: np.ndarray):
        self.region = region
        self.model = model
        self.seed = int(seed)
        self.index = int(index)
        self._values = np.asarray(values, dtype=float)
        self._values.setflags(write=False)

    @property
    def values(self) -> np.ndarray:
        """Values aligned with ``region.index`` order (read-only)."""
        return self._values

    def value(self, site) -> float:
        return float(self._values[self.region.site_index(site)])

    def as_dict(self) -> dict:
        return {s: float(v) for s, v in zip(self.region.sites, self._values)}

    def array_for(self, sub: Region) -> np.ndarray:
        """Values restricted to a sub-region, in the sub-region's order."""
        idx = np.fromiter((self.region.site_index(s) for s in sub.sites),
                          dtype=np.intp, count=len(sub))
        return self._values[idx]

    def __repr__(self) -> str:
        return (f"Realization(<{len(self.region)} sites>, seed={self.seed}, "
                f"index={self.index}, model={self.model.model_id})")


def sample_realization(model: DisorderModel, region: Region, seed: int,
                       index: int = 0) -> Realization:
    """Draw one i.i.d. potential realization on a region.

    Values depend only on (model, seed, site coordinates, index) -- not on
    the region shape or site iteration order.
    """
    if len(region) < 1:
        raise ValueError("region must be nonempty")
    keys = site_keys(seed, region.coords_array())
    values = model.transform(uniform01(keys, index))
    return Realization(region, model, seed, index, values)
