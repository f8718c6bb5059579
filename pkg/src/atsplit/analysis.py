"""Lorentzian peak fitting, dressed states, and dark-state metrics.

The fitter is a small damped least-squares (Levenberg-Marquardt) loop
with the analytic Jacobian of the n-peak Lorentzian-plus-shared-offset
model.  It is deliberately self-contained: the convergence flag has a
precise meaning (relative parameter change below 1e-10 with the residual
non-increasing over the final three accepted steps) that a black-box
optimizer does not expose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateData, NonPhysicalResult
from .model import TWO_PI, check_density_matrix

_MAX_ITERATIONS = 500
_REL_STEP_TOL = 1e-10


# ---------------------------------------------------------------------------
# Lineshape models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LorentzianModel:
    """Single Lorentzian peak: offset + amplitude*(w/2)^2/((x-c)^2+(w/2)^2).

    Evaluation at the center equals offset + amplitude and the
    half-amplitude points sit exactly at center +- fwhm/2.
    """

    center: float
    fwhm: float
    amplitude: float
    offset: float = 0.0

    def __post_init__(self):
        if self.fwhm <= 0.0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        half_sq = (self.fwhm / 2.0) ** 2
        return self.offset + self.amplitude * half_sq / ((x - self.center) ** 2 + half_sq)


@dataclass(frozen=True)
class SingletFit:
    """Result of a single-peak fit, with convergence diagnostics."""

    peak: LorentzianModel
    residual_rms: float
    converged: bool

    def __post_init__(self):
        if self.residual_rms < 0.0:
            raise ValueError("residual_rms must be >= 0")


@dataclass(frozen=True)
class DoubletFit:
    """Result of a two-peak fit with a shared offset.

    ``midpoint`` of the two centers is the probe-detuning shift
    diagnostic: a symmetric three-level doublet has midpoint zero, so a
    significant shift signals physics beyond the three-level model.
    """

    left: LorentzianModel
    right: LorentzianModel
    residual_rms: float
    converged: bool

    def __post_init__(self):
        if not self.left.center < self.right.center:
            raise ValueError(
                f"left center {self.left.center} must be below right center "
                f"{self.right.center}"
            )
        if self.left.offset != self.right.offset:
            raise ValueError("doublet components must share one offset")
        if self.residual_rms < 0.0:
            raise ValueError("residual_rms must be >= 0")

    def __call__(self, x):
        return self.left(x) + self.right(x) - self.left.offset


class SeparationMetrics(NamedTuple):
    separation: float      # right center - left center, MHz
    mean_fwhm: float       # average of the two widths, MHz
    ratio: float           # separation in units of mean_fwhm
    midpoint_shift: float  # doublet midpoint, MHz


class DarkStateOverlap(NamedTuple):
    overlap: float   # <D|rho|D>
    fidelity: float  # sqrt(overlap)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt machinery
# ---------------------------------------------------------------------------

def _model_and_jacobian(x: np.ndarray, params: np.ndarray, n_peaks: int):
    """Evaluate the n-peak model and its Jacobian at packed parameters.

    Packing is (c, w, a) per peak followed by one shared offset.  The
    model is even in each w, so widths may wander negative during the
    iteration and are normalized to |w| at the end.
    """
    y = np.full_like(x, params[-1])
    jac = np.zeros((x.size, params.size))
    jac[:, -1] = 1.0
    for k in range(n_peaks):
        c, w, a = params[3 * k : 3 * k + 3]
        u = x - c
        half_sq = (w / 2.0) ** 2
        denom = u * u + half_sq
        shape = half_sq / denom
        y += a * shape
        jac[:, 3 * k] = 2.0 * a * half_sq * u / (denom * denom)
        jac[:, 3 * k + 1] = a * (w / 2.0) * u * u / (denom * denom)
        jac[:, 3 * k + 2] = shape
    return y, jac


def _levenberg_marquardt(x, y, p0, n_peaks):
    """Damped least squares from one start; returns (params, cost, converged)."""
    p = np.asarray(p0, dtype=float).copy()
    fit, jac = _model_and_jacobian(x, p, n_peaks)
    residual = fit - y
    cost = 0.5 * float(residual @ residual)
    lam = 1e-3
    accepted_costs = [cost]
    converged = False

    for _ in range(_MAX_ITERATIONS):
        grad = jac.T @ residual
        normal = jac.T @ jac
        damped = normal + lam * np.diag(np.maximum(np.diag(normal), 1e-30))
        try:
            step = np.linalg.solve(damped, -grad)
        except np.linalg.LinAlgError:
            lam = min(lam * 10.0, 1e14)
            continue

        trial = p + step
        fit_t, jac_t = _model_and_jacobian(x, trial, n_peaks)
        residual_t = fit_t - y
        cost_t = 0.5 * float(residual_t @ residual_t)

        if cost_t <= cost:
            rel_change = np.linalg.norm(step) / max(np.linalg.norm(p), 1e-300)
            p, fit, jac, residual, cost = trial, fit_t, jac_t, residual_t, cost_t
            accepted_costs.append(cost)
            lam = max(lam / 3.0, 1e-14)
            recent = accepted_costs[-3:]
            monotone = all(b <= a for a, b in zip(recent, recent[1:]))
            if rel_change < _REL_STEP_TOL and monotone:
                converged = True
                break
        else:
            lam = min(lam * 2.0, 1e14)

    return p, cost, converged


def _local_maxima(y: np.ndarray) -> list[int]:
    """Interior indices that top both neighbors, tallest first."""
    idx = [
        j
        for j in range(1, y.size - 1)
        if y[j] >= y[j - 1] and y[j] >= y[j + 1] and (y[j] > y[j - 1] or y[j] > y[j + 1])
    ]
    return sorted(idx, key=lambda j: y[j], reverse=True)


def _halfmax_width(x, y, j, offset) -> float:
    """Full width of the bump at index j at half its height above offset."""
    half = offset + 0.5 * (y[j] - offset)
    lo = j
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = j
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    width = x[hi] - x[lo]
    if width <= 0.0:
        width = (x[-1] - x[0]) / 6.0
    return float(width)


def _initial_guess(x, y, n_peaks) -> np.ndarray:
    offset = float(np.min(y))
    maxima = _local_maxima(y)
    if not maxima:
        maxima = [int(np.argmax(y))]

    peaks = [maxima[0]]
    if n_peaks == 2:
        first_width = _halfmax_width(x, y, maxima[0], offset)
        for j in maxima[1:]:
            if abs(x[j] - x[peaks[0]]) > first_width / 2.0:
                peaks.append(j)
                break
        if len(peaks) == 1:
            # Merged doublet: split the single bump symmetrically.
            j = peaks[0]
            width = _halfmax_width(x, y, j, offset)
            params = [
                x[j] - width / 4.0, width / 2.0, y[j] - offset,
                x[j] + width / 4.0, width / 2.0, y[j] - offset,
                offset,
            ]
            return np.array(params)

    params = []
    for j in sorted(peaks, key=lambda j: x[j]):
        params.extend([x[j], _halfmax_width(x, y, j, offset), y[j] - offset])
    params.append(offset)
    return np.array(params)


def _perturbed_starts(p0: np.ndarray, n_peaks: int) -> list[np.ndarray]:
    """The detected start plus two deterministic +-10% variations."""
    starts = [p0]
    for sign in (+1.0, -1.0):
        p = p0.copy()
        for k in range(n_peaks):
            width = abs(p0[3 * k + 1])
            p[3 * k] += sign * 0.1 * width
            p[3 * k + 1] *= 1.0 + sign * 0.1
            p[3 * k + 2] *= 1.0 - sign * 0.1
        starts.append(p)
    return starts


def fit_peaks(
    points: Sequence[tuple[float, float]] | np.ndarray,
    n_peaks: int,
    init: Sequence[float] | None = None,
) -> SingletFit | DoubletFit:
    """Nonlinear least-squares fit of one or two Lorentzians to (x, y) data.

    The model is a shared constant offset plus ``n_peaks`` Lorentzians.
    When ``init`` is omitted, starting values come from the tallest local
    maxima and their half-max widths; three deterministic starts are run
    and the best kept.  ``init`` is a flat sequence (center, fwhm,
    amplitude) per peak plus the offset.

    The returned object carries a ``converged`` flag; when the iteration
    cap is reached the best parameters so far are returned with
    ``converged=False``.  Flat input raises DegenerateData.
    """
    if n_peaks not in (1, 2):
        raise ValueError(f"n_peaks must be 1 or 2, got {n_peaks}")
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    x, y = data[:, 0], data[:, 1]

    n_params = 3 * n_peaks + 1
    if x.size < 5 * n_params:
        raise ValueError(
            f"need at least {5 * n_params} points for a {n_peaks}-peak fit, got {x.size}"
        )
    if not np.all(np.diff(x) > 0.0):
        raise ValueError("x values must be strictly increasing")
    if float(np.max(y) - np.min(y)) < 1e-12:
        raise DegenerateData("y range below 1e-12; nothing to fit")

    if init is not None:
        p0 = np.asarray(init, dtype=float)
        if p0.size != n_params:
            raise ValueError(f"init must have {n_params} entries, got {p0.size}")
        starts = _perturbed_starts(p0, n_peaks)
    else:
        starts = _perturbed_starts(_initial_guess(x, y, n_peaks), n_peaks)

    best = None
    for start in starts:
        params, cost, converged = _levenberg_marquardt(x, y, start, n_peaks)
        key = (not converged, cost)
        if best is None or key < best[0]:
            best = (key, params, cost, converged)
    _, params, cost, converged = best

    rms = math.sqrt(2.0 * cost / x.size)
    offset = float(params[-1])
    peaks = [
        LorentzianModel(
            center=float(params[3 * k]),
            fwhm=abs(float(params[3 * k + 1])),
            amplitude=float(params[3 * k + 2]),
            offset=offset,
        )
        for k in range(n_peaks)
    ]
    if n_peaks == 1:
        return SingletFit(peak=peaks[0], residual_rms=rms, converged=converged)
    peaks.sort(key=lambda m: m.center)
    return DoubletFit(left=peaks[0], right=peaks[1], residual_rms=rms, converged=converged)


def separation_metrics(fit: DoubletFit) -> SeparationMetrics:
    """Doublet separation, width, and centering diagnostics in MHz."""
    if not fit.converged:
        raise ValueError("separation metrics require a converged doublet fit")
    separation = fit.right.center - fit.left.center
    mean_fwhm = 0.5 * (fit.left.fwhm + fit.right.fwhm)
    return SeparationMetrics(
        separation=separation,
        mean_fwhm=mean_fwhm,
        ratio=separation / mean_fwhm,
        midpoint_shift=0.5 * (fit.left.center + fit.right.center),
    )


# ---------------------------------------------------------------------------
# Dressed states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DressedStates:
    """Eigensystem of the doubly driven system at zero detunings.

    ``theta`` is the mixing angle atan(omega_p/omega_c).  The dark state
    has no |1> component and eigenvalue zero; the bright pair sits at
    +-(generalized Rabi frequency)/2 in angular units.  ``eigenvalues``
    is ordered (dark, plus, minus) in rad/us.
    """

    theta: float
    dark: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    eigenvalues: np.ndarray


def dressed_eigenstates(omega_p: float, omega_c: float) -> DressedStates:
    """Dark and bright dressed states for given Rabi amplitudes (cyclic MHz).

    Requires at least one nonzero amplitude.  The splitting between the
    bright states equals the generalized Rabi frequency
    sqrt(omega_p^2 + omega_c^2), which is the observed doublet
    separation in probe detuning.
    """
    if omega_p < 0.0 or omega_c < 0.0:
        raise ValueError("Rabi amplitudes must be >= 0")
    if omega_p == 0.0 and omega_c == 0.0:
        raise ValueError("at least one Rabi amplitude must be nonzero")
    theta = math.atan2(omega_p, omega_c)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    dark = np.array([cos_t, 0.0, -sin_t], dtype=complex)
    plus = np.array([sin_t, 1.0, cos_t], dtype=complex) / math.sqrt(2.0)
    minus = np.array([sin_t, -1.0, cos_t], dtype=complex) / math.sqrt(2.0)
    half_rabi = TWO_PI * math.hypot(omega_p, omega_c) / 2.0
    return DressedStates(
        theta=theta,
        dark=dark,
        plus=plus,
        minus=minus,
        eigenvalues=np.array([0.0, half_rabi, -half_rabi]),
    )


def dark_state_fidelity(rho: np.ndarray, theta: float) -> DarkStateOverlap:
    """Dark-state occupation of a density matrix and its square root.

    The overlap <D|rho|D> is computed twice, directly and through its
    expansion in density-matrix elements,
    (cos 2T/2)(rho00 - rho22) - (sin 2T/2)(rho20 + rho02) + (1 - rho11)/2,
    and the two must agree to 1e-12; a disagreement means the input was
    not a valid density matrix.  The reported fidelity is the square
    root of the overlap.
    """
    rho = check_density_matrix(rho)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    dark = np.array([cos_t, 0.0, -sin_t], dtype=complex)
    direct = float((dark.conj() @ rho @ dark).real)
    expansion = float(
        0.5 * math.cos(2.0 * theta) * (rho[0, 0].real - rho[2, 2].real)
        - 0.5 * math.sin(2.0 * theta) * (rho[2, 0] + rho[0, 2]).real
        + 0.5 * (1.0 - rho[1, 1].real)
    )
    if abs(direct - expansion) > 1e-12:
        raise NonPhysicalResult(
            f"dark-state overlap computed two ways disagrees: "
            f"{direct!r} vs {expansion!r}"
        )
    overlap = min(max(direct, 0.0), 1.0)
    return DarkStateOverlap(overlap=overlap, fidelity=math.sqrt(overlap))
