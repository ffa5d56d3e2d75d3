"""Assembly of the finite-volume lattice Hamiltonian H = -Laplacian + coupling*V.

The kinetic part couples nearest neighbors inside the region with matrix
element -1; sites outside the region are simply dropped (truncation /
Dirichlet-type restriction).  Two diagonal conventions are supported:

* ``hopping_only``   -- zero kinetic diagonal, H = -adjacency + coupling*V
* ``with_diagonal``  -- adds +2d to every diagonal entry

The default is ``hopping_only``, which makes the one-site operator equal
to coupling*V alone; the alternative shifts the whole spectrum by +2d.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp

from .disorder import Realization
from .lattice import Region, neighbors


class LaplacianConvention(enum.Enum):
    HOPPING_ONLY = "hopping_only"
    WITH_DIAGONAL = "with_diagonal"

    @classmethod
    def parse(cls, text) -> "LaplacianConvention":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text))
        except ValueError:
            raise ValueError(
                f"unknown convention {text!r}; "
                f"expected one of {[c.value for c in cls]}"
            ) from None


def adjacency_pairs(region: Region):
    """Index pairs (i, j), i < j, of nearest-neighbor sites inside the region."""
    pairs = []
    index = region.index
    for site, i in index.items():
        for nb in neighbors(site):
            j = index.get(nb)
            if j is not None and j > i:
                pairs.append((i, j))
    return pairs


def kinetic_dense(region: Region, convention=LaplacianConvention.HOPPING_ONLY) -> np.ndarray:
    """Dense kinetic matrix (no potential) under the given convention."""
    convention = LaplacianConvention.parse(convention)
    n = len(region)
    k = np.zeros((n, n))
    for i, j in adjacency_pairs(region):
        k[i, j] = -1.0
        k[j, i] = -1.0
    if convention is LaplacianConvention.WITH_DIAGONAL:
        k[np.diag_indices(n)] += 2.0 * region.dimension
    return k


class OperatorSample:
    """One realization of the finite-volume Hamiltonian.

    ``matrix`` is a real symmetric CSR matrix in the region's canonical
    site order.  Immutable after assembly; shareable across solves.
    """

    __slots__ = ("region", "matrix", "realization", "convention")

    def __init__(self, region: Region, matrix: sp.csr_matrix,
                 realization: Realization, convention: LaplacianConvention):
        self.region = region
        self.matrix = matrix
        self.realization = realization
        self.convention = convention

    @property
    def n_sites(self) -> int:
        return len(self.region)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def is_chain(self) -> bool:
        """True when the region is a contiguous 1-d interval.

        In that case the canonical ordering makes the matrix tridiagonal.
        """
        if self.region.dimension != 1:
            return False
        xs = self.region.coords_array()[:, 0]
        return bool(np.all(np.diff(xs) == 1))

    def to_coo_text(self) -> str:
        """Coordinate-triplet text dump (row col value per line), for debugging."""
        coo = self.matrix.tocoo()
        lines = [f"# {self.n_sites} x {self.n_sites} symmetric, "
                 f"convention={self.convention.value}"]
        order = np.lexsort((coo.col, coo.row))
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            lines.append(f"{r} {c} {float(v)!r}")
        return "\n".join(lines) + "\n"

    def __repr__(self) -> str:
        return (f"OperatorSample(<{self.n_sites} sites>, "
                f"convention={self.convention.value})")


def assemble(region: Region, realization: Realization,
             convention=LaplacianConvention.HOPPING_ONLY) -> OperatorSample:
    """Build H on the region from a potential realization.

    The realization may cover a super-region; values are looked up per
    site.  Raises if any site of the region is not covered.
    """
    convention = LaplacianConvention.parse(convention)
    n = len(region)
    if realization.region is region or realization.region == region:
        values = realization.values
    else:
        values = realization.array_for(region)

    diag = realization.model.coupling * values
    if convention is LaplacianConvention.WITH_DIAGONAL:
        diag = diag + 2.0 * region.dimension

    pairs = adjacency_pairs(region)
    m = len(pairs)
    rows = np.empty(n + 2 * m, dtype=np.int32)
    cols = np.empty(n + 2 * m, dtype=np.int32)
    data = np.empty(n + 2 * m, dtype=float)
    rows[:n] = np.arange(n)
    cols[:n] = np.arange(n)
    data[:n] = diag
    for k, (i, j) in enumerate(pairs):
        rows[n + 2 * k], cols[n + 2 * k], data[n + 2 * k] = i, j, -1.0
        rows[n + 2 * k + 1], cols[n + 2 * k + 1], data[n + 2 * k + 1] = j, i, -1.0
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return OperatorSample(region, matrix, realization, convention)


def restrict(sample: OperatorSample, sub: Region) -> OperatorSample:
    """Restrict an assembled operator to a sub-region.

    Equivalent (entrywise) to assembling the sub-region from the same
    realization: off-region couplings are dropped, potential values kept.
    """
    if not sub.is_subset_of(sample.region):
        raise ValueError("restriction target is not a subset of the sample region")
    idx = np.fromiter((sample.region.site_index(s) for s in sub.sites),
                      dtype=np.intp, count=len(sub))
    matrix = sample.matrix[idx][:, idx].tocsr()
    return OperatorSample(sub, matrix, sample.realization, sample.convention)
