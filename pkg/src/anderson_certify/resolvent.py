"""Green-function entries G(x, y; z) = <x|(H - z)^{-1}|y>.

Solves are direct (banded for 1-d chains, dense LU for small regions,
sparse LU up to a configurable size) with an iterative fallback above
that.  The contract is the residual bound, not the method: every solve is
verified to satisfy ||(H - z) g - e||_inf < 1e-10 * (1 + ||g||_inf), with
one step of iterative refinement before giving up.  Real energies
(eta = 0) are solved on the real matrix directly; finite-volume spectra
almost surely avoid any fixed E under continuous disorder.

Near-singular systems (condition estimate above 1e14) still return their
computed value; callers count them.  Unresolvable systems raise
:class:`SolverError` carrying the condition estimate, which callers must
treat as a resample event, never silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .disorder import _mix64
from .hamiltonian import OperatorSample
from .lattice import Site

RESIDUAL_RTOL = 1e-10
NEAR_SINGULAR_COND = 1e14
DEFAULT_DIRECT_MAX_SITES = 20_000
DENSE_MAX_SITES = 400


@dataclass(frozen=True)
class SpectralPoint:
    """Complex spectral parameter z = E + i*eta.

    eta may be zero (on-axis solve) or negative (lower half plane).
    """

    E: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.E) and np.isfinite(self.eta)):
            raise ValueError("spectral point must be finite")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @property
    def is_real(self) -> bool:
        return self.eta == 0.0


class SolverError(RuntimeError):
    """Linear system could not be solved to the residual contract."""

    def __init__(self, message: str, condition_estimate: float = np.inf):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


def _probe_vector(n: int) -> np.ndarray:
    """Deterministic +-1 probe used for cheap smallest-singular-value probes."""
    bits = _mix64(np.arange(n, dtype=np.uint64) + np.uint64(0xC0FFEE)) & np.uint64(1)
    return 1.0 - 2.0 * bits.astype(float)


def _shifted_dense(sample: OperatorSample, z: complex, real: bool) -> np.ndarray:
    a = sample.matrix.toarray().astype(float if real else complex)
    idx = np.diag_indices(sample.n_sites)
    a[idx] -= z.real if real else z
    return a


def _check_residual(apply_a, g, b_index, refine=None):
    """Residual test against the solver contract; optionally refine once.

    ``apply_a`` maps vectors through (H - z); ``refine`` solves one more
    system for the correction.  Returns the (possibly refined) solution or
    None when the contract cannot be met.
    """
    r = apply_a(g)
    r[b_index] -= 1.0
    bound = RESIDUAL_RTOL * (1.0 + np.max(np.abs(g)))
    if np.max(np.abs(r)) < bound:
        return g
    if refine is not None:
        g = g - refine(r)
        r = apply_a(g)
        r[b_index] -= 1.0
        if np.max(np.abs(r)) < RESIDUAL_RTOL * (1.0 + np.max(np.abs(g))):
            return g
    return None


def solve_green_column(sample: OperatorSample, x: Site, z: complex,
                       direct_max_sites: int | None = None):
    """Full column <.|(H-z)^{-1}|x> plus a condition estimate.

    By complex symmetry of H - z the column equals the row at x.  Raises
    :class:`SolverError` when the system is singular or the residual
    contract cannot be met.
    """
    n = sample.n_sites
    ix = sample.region.site_index(x)
    real = z.imag == 0.0
    limit = DEFAULT_DIRECT_MAX_SITES if direct_max_sites is None else direct_max_sites

    if sample.is_chain():
        return _solve_banded_column(sample, z, ix, real)
    if n <= DENSE_MAX_SITES:
        return _solve_dense_column(sample, z, ix, real)
    if n <= limit:
        return _solve_splu_column(sample, z, ix, real)
    return _solve_iterative_column(sample, z, ix, real)


def _solve_banded_column(sample, z, ix, real):
    dtype = float if real else complex
    n = sample.n_sites
    diag = sample.matrix.diagonal().astype(dtype) - (z.real if real else z)
    ab = np.zeros((3, n), dtype=dtype)
    ab[0, 1:] = -1.0
    ab[1, :] = diag
    ab[2, :-1] = -1.0

    def solve(rhs):
        return sla.solve_banded((1, 1), ab, rhs)

    def apply_a(v):
        out = diag * v
        out[:-1] -= v[1:]
        out[1:] -= v[:-1]
        return out

    b = np.zeros(n, dtype=dtype)
    b[ix] = 1.0
    try:
        g = solve(b)
    except np.linalg.LinAlgError:
        raise SolverError("singular tridiagonal system") from None
    anorm = float(np.max(np.abs(diag)) + 2.0)
    cond = _probe_condition(n, solve, real, anorm)
    if not np.all(np.isfinite(g)):
        raise SolverError("non-finite banded solve", cond)
    g = _check_residual(apply_a, g, ix, refine=solve)
    if g is None:
        raise SolverError("banded solve missed residual target", cond)
    return g, cond


def _solve_dense_column(sample, z, ix, real):
    a = _shifted_dense(sample, z, real)
    anorm = np.max(np.abs(a).sum(axis=0))
    try:
        lu, piv = sla.lu_factor(a)
    except (np.linalg.LinAlgError, ValueError):
        raise SolverError("singular dense system") from None
    gecon = sla.get_lapack_funcs("gecon", (a,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if (info != 0 or rcond == 0) else 1.0 / rcond

    def solve(rhs):
        return sla.lu_solve((lu, piv), rhs)

    b = np.zeros(sample.n_sites, dtype=a.dtype)
    b[ix] = 1.0
    g = solve(b)
    if not np.all(np.isfinite(g)):
        raise SolverError("non-finite dense solve", cond)
    g = _check_residual(lambda v: a @ v, g, ix, refine=solve)
    if g is None:
        raise SolverError("dense solve missed residual target", cond)
    return g, cond


def _solve_splu_column(sample, z, ix, real):
    n = sample.n_sites
    dtype = float if real else complex
    a = sample.matrix.astype(dtype) - (z.real if real else z) * sp.identity(n, dtype=dtype)
    a = a.tocsc()
    try:
        factor = spla.splu(a)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from None
    b = np.zeros(n, dtype=dtype)
    b[ix] = 1.0
    g = factor.solve(b)
    cond = _probe_condition(n, factor.solve, real, _one_norm(a))
    if not np.all(np.isfinite(g)):
        raise SolverError("non-finite sparse solve", cond)
    g = _check_residual(lambda v: a @ v, g, ix, refine=factor.solve)
    if g is None:
        raise SolverError("sparse solve missed residual target", cond)
    return g, cond


def _solve_iterative_column(sample, z, ix, real):
    n = sample.n_sites
    dtype = float if real else complex
    a = sample.matrix.astype(dtype) - (z.real if real else z) * sp.identity(n, dtype=dtype)
    a = a.tocsc()
    try:
        prec = spla.spilu(a, drop_tol=1e-5, fill_factor=10.0)
        m = spla.LinearOperator(a.shape, prec.solve, dtype=dtype)
    except RuntimeError:
        m = None
    b = np.zeros(n, dtype=dtype)
    b[ix] = 1.0
    g = np.zeros_like(b)
    for _ in range(3):
        r = b - a @ g
        dg, _info = spla.lgmres(a, r, M=m, rtol=1e-13, atol=0.0, maxiter=2000)
        g = g + dg
        resid = a @ g
        resid[ix] -= 1.0
        if np.max(np.abs(resid)) < RESIDUAL_RTOL * (1.0 + np.max(np.abs(g))):
            solve = (lambda v: spla.lgmres(a, v, M=m, rtol=1e-10, atol=0.0)[0])
            cond = _probe_condition(n, solve, real, _one_norm(a))
            return g, cond
    raise SolverError("iterative solve missed residual target")


def _one_norm(a) -> float:
    if sp.issparse(a):
        return float(np.max(np.abs(a).sum(axis=0)))
    return float(np.max(np.abs(a).sum(axis=0)))


def _probe_condition(n, solve, real, anorm):
    """Order-of-magnitude condition estimate from one probe solve.

    cond ~ ||A||_1 * ||A^{-1} p||_2 / ||p||_2 with a fixed +-1 probe p.
    Underestimates by a modest factor; adequate against the 1e14
    near-singular threshold.
    """
    p = _probe_vector(n)
    q = solve(p.astype(float if real else complex))
    if not np.all(np.isfinite(q)):
        return np.inf
    return anorm * float(np.linalg.norm(q) / np.linalg.norm(p))


def green_entry(sample: OperatorSample, x: Site, y: Site, z: SpectralPoint,
                direct_max_sites: int | None = None) -> complex:
    """Single Green-function entry <x|(H - z)^{-1}|y>."""
    col, _ = solve_green_column(sample, x, z.z, direct_max_sites)
    return complex(col[sample.region.site_index(y)])


def green_row(sample: OperatorSample, x: Site, z: SpectralPoint,
              direct_max_sites: int | None = None) -> dict:
    """All entries <x|(H - z)^{-1}|u> for u in the region, from one solve."""
    col, _ = solve_green_column(sample, x, z.z, direct_max_sites)
    return {site: complex(col[i]) for i, site in enumerate(sample.region.sites)}


def _scaled_minors(diag, record: set):
    """Leading principal minors of tridiag(-1, diag, -1), log-rescaled.

    Returns {k: (mantissa, log_scale)} with minor_k = mantissa*exp(log_scale)
    for each requested k in [0, n].  Rescaling every step avoids overflow on
    long chains.
    """
    n = len(diag)
    out = {}
    prev = diag.dtype.type(0.0)   # minor_{-1}
    cur = diag.dtype.type(1.0)    # minor_0
    scale = 0.0
    if 0 in record:
        out[0] = (cur, scale)
    for k in range(1, n + 1):
        nxt = diag[k - 1] * cur - prev
        prev, cur = cur, nxt
        m = max(abs(prev), abs(cur))
        if m > 0.0 and (m > 1e50 or m < 1e-50):
            prev = prev / m
            cur = cur / m
            scale += np.log(m)
        if k in record:
            out[k] = (cur, scale)
    return out


def green_1d_transfer(sample: OperatorSample, x: Site, y: Site,
                      z: SpectralPoint) -> complex:
    """Green entry on a contiguous 1-d chain via the minor recurrence.

    Independent of the linear-solver path: uses the second-order
    recurrence for leading/trailing principal minors of the tridiagonal
    matrix, with log rescaling against overflow on long chains.
    """
    if not sample.is_chain():
        raise ValueError("transfer-matrix evaluation needs a contiguous 1-d chain")
    n = sample.n_sites
    real = z.eta == 0.0
    dtype = np.float64 if real else np.complex128
    diag = sample.matrix.diagonal().astype(dtype) - (z.E if real else z.z)

    i = sample.region.site_index(x) + 1
    j = sample.region.site_index(y) + 1
    if i > j:
        i, j = j, i

    lead = _scaled_minors(diag, {i - 1, n})
    trail = _scaled_minors(diag[::-1], {n - j})
    (m_lead, l_lead) = lead[i - 1]
    (m_det, l_det) = lead[n]
    (m_trail, l_trail) = trail[n - j]
    if m_det == 0.0:
        raise SolverError("chain determinant vanished (singular at this z)")
    log_mag = l_lead + l_trail - l_det
    value = (m_lead * m_trail / m_det) * np.exp(log_mag)
    return complex(value)


def batched_green_rows(kinetic: np.ndarray, diagonals: np.ndarray, z: complex,
                       x_index: int):
    """Rows of (H_r - z)^{-1} at one site for a stack of diagonal realizations.

    ``kinetic`` is the shared dense kinetic matrix, ``diagonals`` holds the
    per-realization diagonal potentials (already scaled by the coupling,
    including any +2d shift), shape (batch, n).  Returns (rows, cond, failed)
    where failed marks realizations whose solve was singular or missed the
    residual contract even after refinement; their rows are not usable.
    """
    real = z.imag == 0.0
    dtype = float if real else complex
    batch, n = diagonals.shape
    a = np.broadcast_to(kinetic.astype(dtype), (batch, n, n)).copy()
    step = np.arange(n)
    a[:, step, step] += diagonals - (z.real if real else z)

    b = np.zeros((n, 2), dtype=dtype)
    b[x_index, 0] = 1.0
    b[:, 1] = _probe_vector(n)

    failed = np.zeros(batch, dtype=bool)
    sol = np.empty((batch, n, 2), dtype=dtype)
    try:
        sol[:] = np.linalg.solve(a, np.broadcast_to(b, (batch, n, 2)))
    except np.linalg.LinAlgError:
        for r in range(batch):
            try:
                sol[r] = np.linalg.solve(a[r], b)
            except np.linalg.LinAlgError:
                failed[r] = True
                sol[r] = 0.0

    rows = sol[:, :, 0]
    anorm = np.abs(a).sum(axis=1).max(axis=1)
    cond = anorm * np.linalg.norm(sol[:, :, 1], axis=1) / np.sqrt(n)
    cond[failed] = np.inf

    # Residual contract, vectorized, with one refinement pass for the misses.
    resid = np.einsum("bij,bj->bi", a, rows)
    resid[:, x_index] -= 1.0
    miss = np.max(np.abs(resid), axis=1) >= RESIDUAL_RTOL * (
        1.0 + np.max(np.abs(rows), axis=1)
    )
    miss &= ~failed
    if np.any(miss):
        try:
            corr = np.linalg.solve(a[miss], resid[miss])
            rows[miss] -= corr
        except np.linalg.LinAlgError:
            failed |= miss
            miss = np.zeros_like(miss)
        if np.any(miss):
            resid2 = np.einsum("bij,bj->bi", a[miss], rows[miss])
            resid2[:, x_index] -= 1.0
            still = np.max(np.abs(resid2), axis=1) >= RESIDUAL_RTOL * (
                1.0 + np.max(np.abs(rows[miss]), axis=1)
            )
            idx = np.flatnonzero(miss)
            failed[idx[still]] = True
    return rows, cond, failed
