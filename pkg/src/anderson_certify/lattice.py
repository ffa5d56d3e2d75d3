"""Finite regions of the integer lattice Z^d.

Sites are plain tuples of ints.  A :class:`Region` is an immutable finite
set of sites with a canonical lexicographic ordering; the ordering defines
the row/column indexing of every matrix assembled on the region.  All
distances are 1-norm (taxicab).
"""

from __future__ import annotations

import itertools
from types import MappingProxyType

import numpy as np

Site = tuple


def norm1(x: Site) -> int:
    """1-norm of a site, sum_j |x_j|."""
    return sum(abs(int(c)) for c in x)


def dist1(x: Site, y: Site) -> int:
    """1-norm distance between two sites of equal dimension."""
    if len(x) != len(y):
        raise ValueError(f"dimension mismatch: {x} vs {y}")
    return sum(abs(int(a) - int(b)) for a, b in zip(x, y))


def neighbors(site: Site):
    """The 2d nearest neighbors of a site, in a fixed order."""
    site = tuple(site)
    for j in range(len(site)):
        for step in (-1, +1):
            yield site[:j] + (site[j] + step,) + site[j + 1:]


class Region:
    """Finite subset of Z^d with a fixed site <-> index bijection.

    Sites are stored sorted lexicographically, deduplicated.  ``index``
    maps each site to its row in any matrix assembled on the region.
    Instances are immutable after construction and safe for concurrent
    reads.
    """

    __slots__ = ("_sites", "_dim", "_index", "_coords")

    def __init__(self, sites):
        cleaned = [tuple(int(c) for c in s) for s in sites]
        if not cleaned:
            raise ValueError("region must contain at least one site")
        d = len(cleaned[0])
        if d < 1:
            raise ValueError("site dimension must be >= 1")
        if any(len(s) != d for s in cleaned):
            raise ValueError("all sites must have the same dimension")
        ordered = tuple(sorted(set(cleaned)))
        object.__setattr__(self, "_sites", ordered)
        object.__setattr__(self, "_dim", d)
        object.__setattr__(
            self, "_index", MappingProxyType({s: i for i, s in enumerate(ordered)})
        )
        object.__setattr__(self, "_coords", None)

    def __setattr__(self, name, value):
        raise AttributeError("Region is immutable")

    @classmethod
    def box(cls, d: int, L: int) -> "Region":
        """The centered box [-L, L]^d (L = 0 gives the origin alone)."""
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if L < 0:
            raise ValueError("box half-side must be >= 0")
        return cls(itertools.product(range(-L, L + 1), repeat=d))

    @property
    def sites(self) -> tuple:
        return self._sites

    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def index(self):
        """Read-only mapping site -> row index."""
        return self._index

    def site_index(self, site: Site) -> int:
        try:
            return self._index[tuple(site)]
        except KeyError:
            raise ValueError(f"site {tuple(site)} not in region") from None

    def coords_array(self) -> np.ndarray:
        """Sites as an (n, d) int64 array in index order (cached)."""
        if self._coords is None:
            arr = np.asarray(self._sites, dtype=np.int64).reshape(len(self), self._dim)
            object.__setattr__(self, "_coords", arr)
        return self._coords

    def is_subset_of(self, other: "Region") -> bool:
        return all(s in other._index for s in self._sites)

    def __contains__(self, site) -> bool:
        try:
            return tuple(site) in self._index
        except TypeError:
            return False

    def __len__(self) -> int:
        return len(self._sites)

    def __iter__(self):
        return iter(self._sites)

    def __eq__(self, other) -> bool:
        return isinstance(other, Region) and self._sites == other._sites

    def __hash__(self) -> int:
        return hash(self._sites)

    def __repr__(self) -> str:
        if len(self) <= 4:
            return f"Region({list(self._sites)})"
        return f"Region(<{len(self)} sites, d={self._dim}>)"


class BondSet:
    """Ordered, deduplicated set of (inside, outside) nearest-neighbor pairs."""

    __slots__ = ("_bonds",)

    def __init__(self, bonds):
        pairs = sorted({(tuple(a), tuple(b)) for a, b in bonds})
        for a, b in pairs:
            if dist1(a, b) != 1:
                raise ValueError(f"bond {a}-{b} is not nearest-neighbor")
        self._bonds = tuple(pairs)

    @property
    def bonds(self) -> tuple:
        return self._bonds

    def inside_sites(self) -> tuple:
        """Inside endpoints in bond order (with repetition)."""
        return tuple(a for a, _ in self._bonds)

    def __len__(self) -> int:
        return len(self._bonds)

    def __iter__(self):
        return iter(self._bonds)

    def __contains__(self, pair) -> bool:
        return (tuple(pair[0]), tuple(pair[1])) in set(self._bonds)

    def __eq__(self, other) -> bool:
        return isinstance(other, BondSet) and self._bonds == other._bonds

    def __repr__(self) -> str:
        return f"BondSet(<{len(self)} bonds>)"


def boundary_bonds(region: Region) -> BondSet:
    """All nearest-neighbor pairs joining the region to its complement.

    Each pair is oriented (inside, outside).
    """
    bonds = []
    for site in region:
        for nb in neighbors(site):
            if nb not in region:
                bonds.append((site, nb))
    return BondSet(bonds)


def extend_plus(region: Region) -> Region:
    """The region together with all of its nearest neighbors."""
    sites = set(region.sites)
    for site in region:
        sites.update(neighbors(site))
    return Region(sites)


def boundary_sites(region: Region) -> tuple:
    """Exterior vertex boundary: sites outside the region adjacent to it."""
    shell = set()
    for site in region:
        for nb in neighbors(site):
            if nb not in region:
                shell.add(nb)
    return tuple(sorted(shell))


def dist_to_boundary(region: Region, x: Site) -> int:
    """1-norm distance from x to the exterior vertex boundary (>= 1 inside)."""
    x = tuple(x)
    if x not in region:
        raise ValueError(f"site {x} not in region")
    return min(dist1(x, b) for b in boundary_sites(region))


def dist_region(region: Region, x: Site, y: Site) -> int:
    """Distance in which the whole region boundary counts as a single point.

    Returns min(|x - y|_1, dist(x, boundary) + dist(y, boundary)).  Zero
    if and only if x == y, since interior sites sit at distance >= 1 from
    the exterior boundary.
    """
    x, y = tuple(x), tuple(y)
    if x not in region or y not in region:
        raise ValueError("both sites must lie in the region")
    shell = boundary_sites(region)
    dx = min(dist1(x, b) for b in shell)
    dy = min(dist1(y, b) for b in shell)
    return min(dist1(x, y), dx + dy)
