"""Server-side per-resource recovery of the transmitted vector.

Three estimators of x from y = H x + z with H real 2MxK:

* iterative compressive-sensing LMMSE (``cs_recover``): greedily grows a
  support by residual correlation, estimates each selected device's signal
  power from the same correlation, folds it into a rank-one update of the
  regularized inverse, and stops via an analytical residual-energy
  threshold;
* maximal ratio combining (``mrc_recover``): per-device matched filter;
* one-shot LMMSE (``lmmse_recover``) under a zero-mean, identity-covariance
  prior.

``cs_recover_batch`` / ``mrc_recover_batch`` / ``lmmse_recover_batch`` are
the vectorized twins used by the round loop; they must agree with the
scalar implementations to float accuracy (tested), the scalar versions
being the readable reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# scalar building blocks
# ---------------------------------------------------------------------------

def select_index(channels: np.ndarray, residual_vec: np.ndarray, excluded) -> int:
    """Index of the normalized channel column most correlated with the residual.

    Ties break toward the smaller index; zero-norm columns can never win and
    are logged once per call. Raises if nothing is selectable.
    """
    norms = np.linalg.norm(channels, axis=0)
    corr = channels.T @ residual_vec
    metric = np.where(norms > 0, (corr / np.where(norms > 0, norms, 1.0)) ** 2, -np.inf)
    excluded = set(excluded)
    if len(excluded) >= channels.shape[1]:
        raise ValueError("all devices excluded from selection")
    for k in excluded:
        metric[k] = -np.inf
    if np.any(norms == 0):
        logger.warning("skipping %d zero-norm channel columns", int(np.sum(norms == 0)))
    best = int(np.argmax(metric))
    if not np.isfinite(metric[best]):
        raise ValueError("no selectable device: all candidates excluded or zero-norm")
    return best


def alpha_estimate(h: np.ndarray, residual_vec: np.ndarray) -> float:
    """Estimated signal power of a device: squared normalized correlation over ||h||^2."""
    norm_sq = float(h @ h)
    if norm_sq == 0.0:
        raise ValueError("zero channel column has no power estimate")
    return float((h @ residual_vec) ** 2) / norm_sq**2


def omega_update(omega: np.ndarray, h: np.ndarray, alpha: float) -> np.ndarray:
    """Rank-one refresh of the inverse: (omega^-1 + alpha h h^T)^-1."""
    oh = omega @ h
    denom = 1.0 + alpha * float(h @ oh)
    return omega - (alpha / denom) * np.outer(oh, oh)


def residual(omega: np.ndarray, y: np.ndarray, noise_var: float) -> np.ndarray:
    """Residual shortcut: sigma^2 * omega @ y equals y - H x_hat for the running estimate."""
    return noise_var * (omega @ y)


def stopping_threshold(omega_prev: np.ndarray, omega_curr: np.ndarray,
                       alpha_last: float, h_last: np.ndarray, noise_var: float) -> float:
    """Residual-energy level halfway between the exact-support and overshoot expectations."""
    tr_prev = float(np.trace(omega_prev))
    tr_curr = float(np.trace(omega_curr))
    denom = 1.0 + alpha_last * float(h_last @ (omega_prev @ h_last))
    return noise_var**2 * (tr_curr - (tr_prev - tr_curr) / (2.0 * denom))


# ---------------------------------------------------------------------------
# full per-resource recoveries
# ---------------------------------------------------------------------------

@dataclass
class RecoveryState:
    """Running state of one compressive-sensing recovery (diagnostic surface)."""

    support: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    omega: np.ndarray | None = None
    residual_vec: np.ndarray | None = None
    iteration: int = 0
    stop_index: int | None = None


@dataclass
class RecoveryResult:
    """Outcome of one per-resource recovery."""

    x_hat: np.ndarray
    support: tuple[int, ...]
    istar: int
    mult_count: int
    residual_norms: list[float]
    thresholds: list[float]


def cs_recover(y: np.ndarray, channels: np.ndarray, noise_var: float,
               force_support=None, use_stopping: bool = True) -> RecoveryResult:
    """Iterative LMMSE recovery of a sparse transmit vector from one resource.

    Runs at most K iterations of select / power-estimate / rank-one update /
    residual refresh. The first iteration whose residual energy falls below
    the analytical threshold marks overshoot, so the estimate is taken from
    the previous iteration's support. ``force_support`` replaces selection
    with a fixed index order (power estimates and updates still run), and
    ``use_stopping=False`` runs the schedule to completion; together they
    give the oracle mode used in verification.
    """
    y = np.asarray(y, dtype=np.float64)
    channels = np.asarray(channels, dtype=np.float64)
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    two_m, n_devices = channels.shape
    state = RecoveryState(
        omega=np.eye(two_m) / noise_var,
        residual_vec=y.copy(),
    )
    residual_norms: list[float] = []
    thresholds: list[float] = []
    schedule = list(force_support) if force_support is not None else None
    n_iters = len(schedule) if schedule is not None else n_devices

    istar = None
    for i in range(1, n_iters + 1):
        if schedule is not None:
            k_star = int(schedule[i - 1])
        else:
            try:
                k_star = select_index(channels, state.residual_vec, state.support)
            except ValueError:
                istar = i - 1  # nothing selectable; estimate over what we have
                break
        h = channels[:, k_star]
        alpha = alpha_estimate(h, state.residual_vec)
        omega_next = omega_update(state.omega, h, alpha)
        r_next = residual(omega_next, y, noise_var)
        e_th = stopping_threshold(state.omega, omega_next, alpha, h, noise_var)
        rn2 = float(r_next @ r_next)
        residual_norms.append(rn2)
        thresholds.append(e_th)
        if use_stopping and rn2 < e_th:
            istar = i - 1  # previous support was the exact one
            break
        state.support.append(k_star)
        state.alphas.append(alpha)
        state.omega = omega_next
        if i % 32 == 0:  # damp asymmetry drift on deep runs
            state.omega = 0.5 * (state.omega + state.omega.T)
        state.residual_vec = r_next
        state.iteration = i
    if istar is None:
        istar = state.iteration  # schedule exhausted without a stop
    state.stop_index = istar

    x_hat = np.zeros(n_devices)
    if state.support:
        omega_y = state.omega @ y
        proj = channels[:, state.support].T @ omega_y
        x_hat[state.support] = np.asarray(state.alphas) * proj
    return RecoveryResult(
        x_hat=x_hat,
        support=tuple(state.support),
        istar=istar,
        mult_count=complexity_count("proposed", n_devices, two_m // 2, istar),
        residual_norms=residual_norms,
        thresholds=thresholds,
    )


def mrc_recover(y: np.ndarray, channels: np.ndarray) -> np.ndarray:
    """Matched-filter estimate per device: h_k^T y / ||h_k||^2."""
    channels = np.asarray(channels, dtype=np.float64)
    norms_sq = np.einsum("mk,mk->k", channels, channels)
    dead = norms_sq == 0
    if dead.any():
        logger.warning("MRC: %d zero-norm channel columns estimated as 0", int(dead.sum()))
    corr = channels.T @ np.asarray(y, dtype=np.float64)
    return np.where(dead, 0.0, corr / np.where(dead, 1.0, norms_sq))


def lmmse_recover(y: np.ndarray, channels: np.ndarray, noise_var: float) -> np.ndarray:
    """One-shot LMMSE estimate under the zero-mean identity-covariance prior."""
    channels = np.asarray(channels, dtype=np.float64)
    two_m = channels.shape[0]
    gram = channels @ channels.T + noise_var * np.eye(two_m)
    return channels.T @ np.linalg.solve(gram, np.asarray(y, dtype=np.float64))


# ---------------------------------------------------------------------------
# vectorized twins (the round-loop workhorses)
# ---------------------------------------------------------------------------

def _group_by_bin(bins: np.ndarray, n_resources: int):
    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    ubins, starts, counts = np.unique(sorted_bins, return_index=True, return_counts=True)
    group_of = np.repeat(np.arange(len(ubins)), counts)
    slot = np.arange(n_resources) - np.repeat(starts, counts)
    return order, ubins, group_of, slot, int(counts.max())


def lmmse_recover_batch(y_block: np.ndarray, h_stack: np.ndarray, bins: np.ndarray,
                        noise_var: float) -> np.ndarray:
    """LMMSE over many resources; one Gram factorization per distinct subcarrier."""
    n_res, two_m = y_block.shape
    order, ubins, group_of, slot, cmax = _group_by_bin(np.asarray(bins), n_res)
    h_used = h_stack[ubins]  # (U, 2M, K)
    gram = h_used @ h_used.transpose(0, 2, 1)
    diag = np.arange(two_m)
    gram[:, diag, diag] += noise_var
    padded = np.zeros((len(ubins), two_m, cmax))
    padded[group_of, :, slot] = y_block[order]
    solved = np.linalg.solve(gram, padded)  # (U, 2M, cmax)
    estimates = h_used.transpose(0, 2, 1) @ solved  # (U, K, cmax)
    x_hat = np.empty((n_res, h_stack.shape[2]))
    x_hat[order] = estimates[group_of, :, slot]
    return x_hat


def mrc_recover_batch(y_block: np.ndarray, h_stack: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """MRC over many resources, grouped by subcarrier."""
    n_res, two_m = y_block.shape
    order, ubins, group_of, slot, cmax = _group_by_bin(np.asarray(bins), n_res)
    h_used = h_stack[ubins]
    norms_sq = np.einsum("umk,umk->uk", h_used, h_used)
    dead = norms_sq == 0
    safe = np.where(dead, 1.0, norms_sq)
    padded = np.zeros((len(ubins), two_m, cmax))
    padded[group_of, :, slot] = y_block[order]
    corr = h_used.transpose(0, 2, 1) @ padded  # (U, K, cmax)
    scaled = np.where(dead[:, :, None], 0.0, corr / safe[:, :, None])
    x_hat = np.empty((n_res, h_stack.shape[2]))
    x_hat[order] = scaled[group_of, :, slot]
    return x_hat


def cs_recover_batch(y_block: np.ndarray, h_stack: np.ndarray, bins: np.ndarray,
                     noise_var: float, max_state_bytes: float = 3.0e8,
                     diagnostics: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Compressive-sensing recovery of many resources at once.

    Identical mathematics to ``cs_recover`` with stopping enabled, run over
    chunks of resources. The running inverse is kept in rank-one factor form
    (it is only ever applied to vectors), which is what makes per-round
    recovery of all 15910 resources affordable.
    Returns (x_hat of shape (R, K), istar of shape (R,)). When `diagnostics`
    is a list, appends (resource_rows, iteration, residual_norms_sq,
    thresholds) arrays for every iteration (debug dumps only; costs memory).
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    y_block = np.asarray(y_block, dtype=np.float64)
    bins = np.asarray(bins)
    n_res, two_m = y_block.shape
    n_devices = h_stack.shape[2]
    x_hat = np.zeros((n_res, n_devices))
    istar = np.zeros(n_res, dtype=np.int64)
    per_res = 8 * two_m * max(two_m, n_devices)
    chunk = int(max(64, min(n_res, max_state_bytes // per_res)))
    for start in range(0, n_res, chunk):
        stop = min(start + chunk, n_res)
        _cs_chunk(y_block[start:stop], h_stack, bins[start:stop], noise_var,
                  x_hat, istar, start, diagnostics)
    return x_hat, istar


def _cs_chunk(y_chunk, h_stack, bins_chunk, noise_var, x_hat, istar, base,
              diagnostics=None):
    """One chunk of the batch recovery; writes into x_hat / istar at `base`.

    State per active resource: the residual r = sigma^2 Omega y, tr(Omega),
    and the rank-one history (u_j, c_j) with Omega_i = I/sigma^2 -
    sum_j c_j u_j u_j^T, where u_j = Omega_{j-1} h_j. Applying Omega to a
    vector then costs O(i * 2M) instead of O((2M)^2).
    """
    n_active, two_m = y_chunk.shape
    n_devices = h_stack.shape[2]
    h_act = h_stack[bins_chunk]  # (A, 2M, K) private copy per chunk
    norms = np.sqrt(np.einsum("amk,amk->ak", h_act, h_act))
    selectable = norms > 0
    safe_norms = np.where(selectable, norms, 1.0)

    r = y_chunk.copy()
    trace = np.full(n_active, two_m / noise_var)
    alpha_full = np.zeros((n_active, n_devices))
    selected = np.zeros((n_active, n_devices), dtype=bool)
    out_rows = np.arange(base, base + n_active)
    cap = min(16, n_devices)
    factors = np.empty((n_active, cap, two_m))  # u_j vectors, row-major in j
    coefs = np.empty((n_active, cap))  # c_j

    for i in range(1, n_devices + 1):
        rows = np.arange(len(out_rows))
        corr = (r[:, None, :] @ h_act)[:, 0, :]  # h_k^T r for every k
        metric = np.where(selectable & ~selected, (corr / safe_norms) ** 2, -np.inf)
        k_star = np.argmax(metric, axis=1)
        best = metric[rows, k_star]
        valid = np.isfinite(best)
        alpha_new = np.where(valid, best / safe_norms[rows, k_star] ** 2, 0.0)
        h = h_act[rows, :, k_star]
        # u = Omega_{i-1} h from the factor history
        if i == 1:
            u = h / noise_var
        else:
            past_u = factors[:, : i - 1]
            proj = (past_u @ h[:, :, None])[:, :, 0]  # u_j^T h
            u = h / noise_var - ((coefs[:, : i - 1] * proj)[:, None, :] @ past_u)[:, 0, :]
        h_u = np.einsum("am,am->a", h, u)
        denom = 1.0 + alpha_new * h_u
        coef = alpha_new / denom
        trace_next = trace - coef * np.einsum("am,am->a", u, u)
        # r = sigma^2 Omega y throughout, so h^T Omega y = corr[k*] / sigma^2
        r_next = r - (coef * corr[rows, k_star])[:, None] * u
        e_th = noise_var**2 * (trace_next - (trace - trace_next) / (2.0 * denom))
        rn2 = np.einsum("am,am->a", r_next, r_next)
        if diagnostics is not None:
            diagnostics.append((out_rows, i, rn2, e_th))
        stopped = (rn2 < e_th) | ~valid
        if stopped.any():
            hit = np.flatnonzero(stopped)
            x_hat[out_rows[hit]] = alpha_full[hit] * corr[hit] / noise_var
            istar[out_rows[hit]] = i - 1
            keep = np.flatnonzero(~stopped)
            if keep.size == 0:
                return
            h_act = h_act[keep]
            norms, safe_norms = norms[keep], safe_norms[keep]
            selectable, selected = selectable[keep], selected[keep]
            alpha_full = alpha_full[keep]
            out_rows = out_rows[keep]
            factors, coefs = factors[keep], coefs[keep]
            u, coef = u[keep], coef[keep]
            k_star, alpha_new = k_star[keep], alpha_new[keep]
            r_next, trace_next = r_next[keep], trace_next[keep]
        if i > cap:
            grow = min(max(2 * cap, i), n_devices)
            factors = np.concatenate(
                [factors, np.empty((len(factors), grow - cap, two_m))], axis=1)
            coefs = np.concatenate(
                [coefs, np.empty((len(coefs), grow - cap))], axis=1)
            cap = grow
        factors[:, i - 1] = u
        coefs[:, i - 1] = coef
        r, trace = r_next, trace_next
        rows = np.arange(len(out_rows))
        alpha_full[rows, k_star] = alpha_new
        selected[rows, k_star] = True

    corr = (r[:, None, :] @ h_act)[:, 0, :]
    x_hat[out_rows] = alpha_full * corr / noise_var
    istar[out_rows] = n_devices


def recover_all(method: str, y_block: np.ndarray, h_stack: np.ndarray, bins: np.ndarray,
                noise_var: float, diagnostics: list | None = None):
    """Dispatch one round's recoveries; returns (x_hat (R, K), istar or None)."""
    if method == "proposed":
        return cs_recover_batch(y_block, h_stack, bins, noise_var,
                                diagnostics=diagnostics)
    if method == "lmmse":
        return lmmse_recover_batch(y_block, h_stack, bins, noise_var), None
    if method == "mrc":
        return mrc_recover_batch(y_block, h_stack, bins), None
    raise ValueError(f"unknown recovery method {method!r}")


# ---------------------------------------------------------------------------
# expected residual energies (the stopping rule's analytical backbone)
# ---------------------------------------------------------------------------

def expected_residual_norms(case: int, omega: np.ndarray, noise_var: float, *,
                            leftover_alphas=None, leftover_channels=None,
                            omega_prev=None, alpha_last=None, h_last=None) -> float:
    """Closed-form E[||r_i||^2] for the three support configurations.

    Case 1 (support strictly inside the true one) needs the unselected true
    devices' powers and channels; case 2 (exact) needs only omega; case 3
    (one overshoot) needs the previous inverse and the overshoot pick.
    """
    if case == 1:
        if leftover_alphas is None or leftover_channels is None:
            raise ValueError("case 1 needs the unselected true-support powers and channels")
        alphas = np.asarray(leftover_alphas, dtype=np.float64)
        chans = np.asarray(leftover_channels, dtype=np.float64)
        if chans.shape[1] != len(alphas):
            raise ValueError("leftover channels/powers disagree on the device count")
        extra = 0.0
        for j in range(len(alphas)):
            oh = omega @ chans[:, j]
            extra += alphas[j] * float(oh @ oh)
        return noise_var**2 * (float(np.trace(omega)) + extra)
    if case == 2:
        return noise_var**2 * float(np.trace(omega))
    if case == 3:
        if omega_prev is None or alpha_last is None or h_last is None:
            raise ValueError("case 3 needs the pre-overshoot inverse and the overshoot pick")
        tr_prev = float(np.trace(omega_prev))
        tr_curr = float(np.trace(omega))
        denom = 1.0 + alpha_last * float(h_last @ (omega_prev @ h_last))
        return noise_var**2 * (tr_curr - (tr_prev - tr_curr) / denom)
    raise ValueError(f"case must be 1, 2, or 3, got {case}")


# ---------------------------------------------------------------------------
# real-multiplication budgets
# ---------------------------------------------------------------------------

_METHODS = ("proposed", "mrc", "lmmse")


@dataclass
class ComplexityLedger:
    """Closed-form multiplication budgets for one (K, M, istar) operating point."""

    n_devices: int
    n_antennas: int
    istar: float
    proposed: float
    mrc: int
    lmmse: int
    proposed_large: float
    mrc_large: int
    lmmse_large: int
    measured: dict | None = None  # optional instrumented counts, informational

    @property
    def ratio_general(self) -> float:
        return self.proposed / self.lmmse

    @property
    def ratio_large_scale(self) -> float:
        return complexity_ratio_large_scale(self.n_devices, self.n_antennas, self.istar)


def complexity_ledger(n_devices: int, n_antennas: int, istar: float,
                      measured: dict | None = None) -> ComplexityLedger:
    """Evaluate every budget form at one operating point (istar may be a mean)."""
    i_int = int(round(istar))
    exact = float(istar) == float(i_int)
    return ComplexityLedger(
        n_devices=n_devices, n_antennas=n_antennas, istar=istar,
        proposed=(complexity_count("proposed", n_devices, n_antennas, i_int) if exact
                  else complexity_value("proposed", n_devices, n_antennas, istar)),
        mrc=complexity_count("mrc", n_devices, n_antennas),
        lmmse=complexity_count("lmmse", n_devices, n_antennas),
        proposed_large=(complexity_count_large_scale("proposed", n_devices, n_antennas, i_int)
                        if exact else
                        istar**2 * n_antennas
                        + istar * (12 * n_antennas**2 + 2 * n_devices * n_antennas)
                        + 12 * n_antennas**2 + 4 * n_devices * n_antennas),
        mrc_large=complexity_count_large_scale("mrc", n_devices, n_antennas),
        lmmse_large=complexity_count_large_scale("lmmse", n_devices, n_antennas),
        measured=measured,
    )


def complexity_count(method: str, n_devices: int, n_antennas: int, istar: int | None = None) -> int:
    """Exact real-multiplication count per recovery (general-case formulas)."""
    k, m = int(n_devices), int(n_antennas)
    if k < 1 or m < 1:
        raise ValueError("K and M must be at least 1")
    if method == "mrc":
        return 4 * k * m + k
    if method == "lmmse":
        return 8 * k * m * m - 4 * m * m + 6 * k * m + 2 * m
    if method == "proposed":
        if istar is None or istar < 0:
            raise ValueError("proposed method needs istar >= 0")
        i = int(istar)
        doubled = (i * i * (2 * m + 1)
                   + i * (24 * m * m + 4 * k * m + 22 * m + 2 * k + 17)
                   + 2 * (12 * m * m + 4 * k * m + 10 * m + 2 * k + 7))
        if doubled % 2:
            raise AssertionError("multiplication count must be integral")
        return doubled // 2
    raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")


def complexity_count_large_scale(method: str, n_devices: int, n_antennas: int,
                                 istar: int | None = None) -> int:
    """Leading-order multiplication count for M >> 1, K >> 1."""
    k, m = int(n_devices), int(n_antennas)
    if k < 1 or m < 1:
        raise ValueError("K and M must be at least 1")
    if method == "mrc":
        return 4 * k * m
    if method == "lmmse":
        return 8 * k * m * m
    if method == "proposed":
        if istar is None or istar < 0:
            raise ValueError("proposed method needs istar >= 0")
        i = int(istar)
        return i * i * m + i * (12 * m * m + 2 * k * m) + 12 * m * m + 4 * k * m
    raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")


def complexity_value(method: str, n_devices: int, n_antennas: int,
                     istar: float | None = None) -> float:
    """General-case multiplication count with a possibly fractional istar.

    Same polynomials as ``complexity_count``; used when istar is an average
    measured over a run rather than an integer.
    """
    k, m = n_devices, n_antennas
    if method == "mrc" or method == "lmmse":
        return float(complexity_count(method, k, m))
    if method == "proposed":
        if istar is None or istar < 0:
            raise ValueError("proposed method needs istar >= 0")
        i = float(istar)
        return (i * i * (m + 0.5)
                + i * (12 * m * m + 2 * k * m + 11 * m + k + 8.5)
                + 12 * m * m + 4 * k * m + 10 * m + 2 * k + 7)
    raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")


def complexity_ratio_large_scale(n_devices: int, n_antennas: int, istar: float) -> float:
    """Proposed-over-LMMSE cost ratio in the large-scale regime."""
    k, m = n_devices, n_antennas
    return istar**2 / (8 * k * m) + 3 * istar / (2 * k) + istar / (4 * m)


def complexity_ratio_limit(support_size: float, n_antennas: int) -> float:
    """Limit of the cost ratio as the support fraction vanishes at fixed M."""
    return support_size / (4 * n_antennas)
