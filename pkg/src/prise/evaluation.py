"""Success-rate benchmarking, loss-landscape probes and near-optimality reports."""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, PriseError
from .featnet import forward
from .homography import pe_metric, translation
from .imaging import ImageBuffer, warp_plan
from .lk import LkOptions, lk_residual, pyramid_solve
from .starconvex import NegativeGapWarning, near_optimality_bound

DEFAULT_THRESHOLDS = (0.1, 0.5, 1.0, 3.0, 5.0, 10.0, 20.0)


@dataclass
class SrTable:
    thresholds: list
    success_rates: list
    n_pairs: int
    mean_pe: float
    std_pe: float
    pes: list = field(default_factory=list)

    def rate_at(self, threshold):
        return self.success_rates[list(self.thresholds).index(threshold)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "success_rate"])
            for t, r in zip(self.thresholds, self.success_rates):
                writer.writerow([repr(float(t)), repr(float(r))])
            writer.writerow(["n_pairs", self.n_pairs])
            writer.writerow(["mean_pe", repr(self.mean_pe)])
            writer.writerow(["std_pe", repr(self.std_pe)])


def sr_table(pes, thresholds=DEFAULT_THRESHOLDS):
    """Percentage of PEs strictly below each threshold; infinite PEs count as failures."""
    pes = np.asarray(pes, dtype=np.float64)
    thresholds = sorted(float(t) for t in thresholds)
    rates = [float(100.0 * np.mean(pes < t)) if pes.size else 0.0 for t in thresholds]
    finite = pes[np.isfinite(pes)]
    return SrTable(
        thresholds=thresholds,
        success_rates=rates,
        n_pairs=int(pes.size),
        mean_pe=float(finite.mean()) if finite.size else math.inf,
        std_pe=float(finite.std()) if finite.size else math.inf,
        pes=[float(p) for p in pes],
    )


def estimate(model, pair, opts=None):
    """Identity-initialised coarse-to-fine estimate for one pair."""
    omega, _ = pyramid_solve(model, pair.source, pair.target, np.zeros(8), opts, pair.frame)
    return omega


def evaluate(model, solver_opts, test_pairs, thresholds=DEFAULT_THRESHOLDS):
    pes = []
    for pair in test_pairs:
        try:
            omega = estimate(model, pair, solver_opts)
            pe = pe_metric(omega, pair.omega_star)
        except (PriseError, np.linalg.LinAlgError, FloatingPointError):
            pe = math.inf
        pes.append(pe if np.isfinite(pe) else math.inf)
    return sr_table(pes, thresholds)


class StageLandscape:
    """h(omega): LK residual of a model's stage features (or raw images) at image-pixel omega."""

    def __init__(self, model, pair, stage=1):
        self.pair = pair
        if model is None:
            self.ft = pair.target
            self.fs = pair.source
            self.scale = 1.0
        else:
            self.ft = forward(model, pair.target, stage)[-1]
            self.fs = forward(model, pair.source, stage)[-1]
            self.scale = 0.5 ** stage
        self.frame = pair.frame.scaled(self.scale)

    def __call__(self, omega):
        return lk_residual(self.ft, self.fs, np.asarray(omega) * self.scale, self.frame)

    def at_local_homography(self, local_h):
        m = translation(*self.frame.origin) @ local_h
        t, s = self.ft, self.fs
        plan = warp_plan(m, t.shape[1], t.shape[2], s.shape[1], s.shape[2])
        diff = t.astype(np.float64) - plan.apply(s)
        return float((diff ** 2).sum() / (t.shape[1] * t.shape[2]))


@dataclass
class LandscapeGrid:
    axis_i: int
    axis_j: int
    offsets: np.ndarray
    values: np.ndarray
    marker: tuple = None
    mode: str = "corner"

    @property
    def center(self):
        c = len(self.offsets) // 2
        return float(self.values[c, c])

    def to_image(self):
        return ImageBuffer(self.values)


def probe_landscape(model, pair, axis_i, axis_j, half_range, steps, stage=1, mode="corner",
                    solver_opts=None, with_marker=True):
    """Loss on a steps x steps grid around the truth, sweeping two parameters.

    ``mode="corner"`` sweeps two corner-displacement coordinates (pixels);
    ``mode="matrix"`` sweeps two entries of the ground-truth local homography
    (row-major index 0..7) by raw additive offsets. ``values[a, b]`` holds the
    loss at offsets ``(offsets[a], offsets[b])`` along ``(axis_i, axis_j)``.
    """
    if axis_i == axis_j:
        raise InvalidConfig("probe axes must differ")
    if steps < 3 or steps % 2 == 0:
        raise InvalidConfig("steps must be odd and >= 3")
    if not (0 <= axis_i < 8 and 0 <= axis_j < 8):
        raise InvalidConfig("axes index the 8 free parameters")
    land = StageLandscape(model, pair, stage)
    offsets = np.linspace(-half_range, half_range, steps)
    values = np.empty((steps, steps))
    if mode == "corner":
        for a, da in enumerate(offsets):
            for b, db in enumerate(offsets):
                omega = pair.omega_star.copy()
                omega[axis_i] += da
                omega[axis_j] += db
                values[a, b] = land(omega)
    elif mode == "matrix":
        h0 = land.frame.local(pair.omega_star * land.scale)
        for a, da in enumerate(offsets):
            for b, db in enumerate(offsets):
                h = h0.copy()
                h.flat[axis_i] += da
                h.flat[axis_j] += db
                values[a, b] = land.at_local_homography(h)
    else:
        raise InvalidConfig(f"unknown probe mode {mode!r}")
    marker = None
    if with_marker:
        est = estimate(model, pair, solver_opts)
        if mode == "corner":
            marker = (float(est[axis_i] - pair.omega_star[axis_i]), float(est[axis_j] - pair.omega_star[axis_j]))
        else:
            he = land.frame.local(est * land.scale)
            marker = (float(he.flat[axis_i] - h0.flat[axis_i]), float(he.flat[axis_j] - h0.flat[axis_j]))
    return LandscapeGrid(axis_i, axis_j, offsets, values, marker, mode)


@dataclass
class BoundReport:
    h_estimate: float
    h_star: float
    bound: float
    actual: float
    bound_satisfied: bool
    estimate: list

    def as_dict(self):
        return {
            "h_estimate": self.h_estimate,
            "h_star": self.h_star,
            "bound": self.bound,
            "actual_sq_dist": self.actual,
            "bound_satisfied": self.bound_satisfied,
            "estimate": list(self.estimate),
        }


def bound_report(model, pair, mu, solver_opts=None, estimate_omega=None, stage=1, tol=1e-6):
    """Check |w_hat - w*|^2 <= (2/mu)(h(w_hat) - h(w*)) at the solver's estimate."""
    land = StageLandscape(model, pair, stage)
    if estimate_omega is None:
        estimate_omega = estimate(model, pair, solver_opts)
    estimate_omega = np.asarray(estimate_omega, dtype=np.float64)
    h_est = land(estimate_omega)
    h_star = land(pair.omega_star)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeGapWarning)
        bound = near_optimality_bound(h_est, h_star, mu)
    actual = float(((estimate_omega - pair.omega_star) ** 2).sum())
    return BoundReport(h_est, h_star, bound, actual, bool(actual <= bound + tol), estimate_omega.tolist())


__all__ = [
    "DEFAULT_THRESHOLDS", "BoundReport", "LandscapeGrid", "LkOptions", "SrTable", "StageLandscape",
    "bound_report", "estimate", "evaluate", "probe_landscape", "sr_table",
]
