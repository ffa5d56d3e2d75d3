"""Shared test utilities: tiny constructors and independent oracles."""

import numpy as np

from anderson_certify.disorder import DisorderModel, Realization
from anderson_certify.lattice import Region, dist1


def zero_potential_model() -> DisorderModel:
    """Model whose draws are zero to double precision (pure kinetic tests)."""
    return DisorderModel.uniform(-1e-300, 1e-300, coupling=1.0)


def fixed_realization(region: Region, values, coupling: float = 1.0) -> Realization:
    """Realization with hand-picked potential values (for exact examples)."""
    model = DisorderModel.uniform(-1e6, 1e6, coupling=coupling)
    return Realization(region, model, seed=0, index=0,
                       values=np.asarray(values, dtype=float))


def random_subregion(rng, box_d: int, box_L: int, keep: float,
                     must_contain=None) -> Region:
    """Random subset of a box, by independent keep decisions."""
    base = Region.box(box_d, box_L)
    sites = [s for s in base.sites if rng.random() < keep]
    if must_contain is not None:
        sites.append(tuple(must_contain))
    if not sites:
        sites = [tuple(must_contain) if must_contain else (0,) * box_d]
    return Region(sites)


def bfs_distance(start, targets, dim: int, radius_cap: int = 10_000) -> int:
    """Breadth-first search distance in the full lattice graph Z^d.

    Independent oracle for 1-norm distances: expands unit steps in all
    2d directions until any target site is reached.
    """
    targets = {tuple(t) for t in targets}
    start = tuple(start)
    if start in targets:
        return 0
    frontier = {start}
    seen = {start}
    dist = 0
    while frontier and dist < radius_cap:
        dist += 1
        nxt = set()
        for site in frontier:
            for j in range(dim):
                for step in (-1, 1):
                    nb = site[:j] + (site[j] + step,) + site[j + 1:]
                    if nb in targets:
                        return dist
                    if nb not in seen:
                        seen.add(nb)
                        nxt.add(nb)
        frontier = nxt
    raise RuntimeError("BFS radius cap exceeded")


def brute_force_boundary_pairs(region: Region):
    """Enumerate boundary bonds by scanning all (site, offset) pairs."""
    pairs = set()
    for site in region.sites:
        for j in range(region.dimension):
            for step in (-1, 1):
                nb = site[:j] + (site[j] + step,) + site[j + 1:]
                if nb not in region:
                    pairs.add((site, nb))
    return pairs


def neighbor_closure(region: Region):
    """Brute-force site set of the region plus all nearest neighbors."""
    out = set(region.sites)
    for site in region.sites:
        for j in range(region.dimension):
            for step in (-1, 1):
                out.add(site[:j] + (site[j] + step,) + site[j + 1:])
    return out


def exact_neighbors(x, y) -> bool:
    return dist1(x, y) == 1
