"""Strong star-convexity gap conditions, their DeepLK counterparts, and verifiers.

Every gap is exposed twice: a signed ``*_signed`` value (positive means the
inequality is violated) and the hinged ``max(0, .)`` slack used as a loss.
Distances are Euclidean in corner-displacement space.
"""

import json
import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import InvalidConfig, LambdaOutOfRange, MuTooSmall, NonpositiveMu

CERTIFY_TOL = 1e-6


class LambdaMode(str, Enum):
    FIXED = "fixed"
    SAMPLED_MAX = "sampled_max"


@dataclass
class StarConvexConfig:
    mu: float = 2.0
    lam: float = 0.9
    rho: float = 0.1
    n_samples: int = 2
    radius: float = 8.0
    lambda_mode: LambdaMode = LambdaMode.FIXED
    n_lambda: int = 9

    def __post_init__(self):
        self.lambda_mode = LambdaMode(self.lambda_mode)
        if not 0.0 <= self.lam <= 1.0:
            raise LambdaOutOfRange(f"lambda={self.lam} outside [0, 1]")
        if self.mu < 0 or self.rho < 0:
            raise InvalidConfig("mu and rho must be >= 0")
        if self.n_samples < 1 or self.n_lambda < 1:
            raise InvalidConfig("n_samples and n_lambda must be >= 1")
        if self.radius <= 0:
            raise InvalidConfig("radius must be > 0")

    def lambdas(self):
        """Lambda values probed per neighbour: the fixed one, plus an interior grid when sampling."""
        if self.lambda_mode is LambdaMode.FIXED:
            return (self.lam,)
        grid = np.linspace(0.0, 1.0, self.n_lambda + 2)[1:-1]
        return tuple(sorted({float(self.lam), *np.round(grid, 12).tolist()}))

    @classmethod
    def preset(cls, name, **overrides):
        """Dataset defaults (mu, lambda, rho, #samples) reported for the three benchmarks."""
        params = dict(PAPER_PRESETS[name.lower()])
        params.update(overrides)
        return cls(**params)


PAPER_PRESETS = {
    "mscoco": dict(mu=2.0, lam=0.9, rho=0.1, n_samples=2),
    "googleearth": dict(mu=4.0, lam=0.5, rho=0.2, n_samples=4),
    "googlemap": dict(mu=2.0, lam=0.5, rho=0.2, n_samples=4),
}


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda={lam} outside [0, 1]")


def _sqdist(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.dot(d.ravel(), d.ravel()))


def interpolate_omega(omega_star, omega, lam):
    """(1 - lam) * omega_star + lam * omega."""
    _check_lambda(lam)
    return (1.0 - lam) * np.asarray(omega_star, dtype=np.float64) + lam * np.asarray(omega, dtype=np.float64)


def gap_condition1_signed(h_star, h_tilde, omega_star, omega_tilde, mu):
    return h_star - h_tilde + 0.5 * mu * _sqdist(omega_star, omega_tilde)


def gap_condition1(h_star, h_tilde, omega_star, omega_tilde, mu):
    """Slack of f(w*) <= f(w~) - mu/2 |w* - w~|^2."""
    return max(0.0, gap_condition1_signed(h_star, h_tilde, omega_star, omega_tilde, mu))


def gap_condition2_signed(h_star, h_tilde, h_omega, omega_star, omega, lam, mu):
    _check_lambda(lam)
    return (h_tilde - (1.0 - lam) * h_star - lam * h_omega
            + 0.5 * lam * (1.0 - lam) * mu * _sqdist(omega_star, omega))


def gap_condition2(h_star, h_tilde, h_omega, omega_star, omega, lam, mu):
    """Slack of f(w~) <= (1-lam) f(w*) + lam f(w) - lam(1-lam) mu/2 |w* - w|^2."""
    return max(0.0, gap_condition2_signed(h_star, h_tilde, h_omega, omega_star, omega, lam, mu))


def deeplk_gaps_signed(h_star, h_tilde, h_omega, omega_star, omega, lam):
    _check_lambda(lam)
    d = _sqdist(omega_star, omega)
    return h_star - h_omega + d, h_tilde - h_omega + (1.0 - lam ** 2) * d


def deeplk_gaps(h_star, h_tilde, h_omega, omega_star, omega, lam):
    """Hinged slacks (upper, lower) of the two DeepLK training conditions."""
    upper, lower = deeplk_gaps_signed(h_star, h_tilde, h_omega, omega_star, omega, lam)
    return max(0.0, upper), max(0.0, lower)


@dataclass(frozen=True)
class Lemma2Result:
    lhs: float
    rhs: float
    holds: bool


def lemma2_check(h_star, h_omega, dist_sq, lam, mu, certified=True):
    """Compare the right-hand sides of the second strong and DeepLK conditions.

    lhs = (1-lam) h* + lam h(w) - lam(1-lam) mu/2 d,  rhs = h(w) - (1-lam^2) d.
    With ``certified`` the claim lhs <= rhs needs mu >= 2 (and h* <= h(w) - d).
    """
    _check_lambda(lam)
    if certified and mu < 2.0:
        raise MuTooSmall(f"the ordering is only claimed for mu >= 2, got {mu}")
    lhs = (1.0 - lam) * h_star + lam * h_omega - 0.5 * lam * (1.0 - lam) * mu * dist_sq
    rhs = h_omega - (1.0 - lam ** 2) * dist_sq
    return Lemma2Result(lhs, rhs, lhs <= rhs + 1e-12)


class NegativeGapWarning(UserWarning):
    """h at the prediction is below h at the truth; the bound carries no information."""


def near_optimality_bound(h_pred, h_star, mu):
    """Upper bound (2/mu)(h_pred - h_star) on |w_pred - w*|^2 under mu-strong star-convexity."""
    if mu <= 0:
        raise NonpositiveMu(f"mu must be > 0, got {mu}")
    gap = h_pred - h_star
    if gap < 0:
        warnings.warn(NegativeGapWarning(f"h_pred - h_star = {gap:.3g} < 0"), stacklevel=2)
    return 2.0 / mu * gap


@dataclass
class CertificationReport:
    mu: float
    lam: float
    n_samples: int
    max_eps: float
    mean_eps: float
    max_xi: float
    mean_xi: float
    violated_fraction: float
    certified: bool

    @property
    def max_gap(self):
        return max(self.max_eps, self.max_xi)

    def as_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in ("mu", "lambda", "n_samples", "max_eps", "mean_eps",
                                  "max_xi", "mean_xi", "violated_fraction", "certified")}

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def sample_linf_ball(center, radius, n, rng):
    center = np.asarray(center, dtype=np.float64)
    return center + rng.uniform(-radius, radius, size=(n,) + center.shape)


def certify_star_convexity(loss, omega_star, config, n_rays=64, rng=None, tol=CERTIFY_TOL):
    """Empirically test both strong star-convexity conditions of ``loss`` around ``omega_star``.

    ``loss`` maps an 8-vector to a float. Points are drawn uniformly from the
    l-inf ball of ``config.radius``; each is probed at ``config.lambdas()``
    and the largest slack per point is kept.
    """
    rng = np.random.default_rng(rng)
    omega_star = np.asarray(omega_star, dtype=np.float64)
    h_star = float(loss(omega_star))
    eps_all, xi_all = [], []
    for omega in sample_linf_ball(omega_star, config.radius, n_rays, rng):
        h_omega = float(loss(omega))
        eps = xi = 0.0
        for lam in config.lambdas():
            tilde = interpolate_omega(omega_star, omega, lam)
            h_tilde = float(loss(tilde))
            eps = max(eps, gap_condition1(h_star, h_tilde, omega_star, tilde, config.mu))
            xi = max(xi, gap_condition2(h_star, h_tilde, h_omega, omega_star, omega, lam, config.mu))
        eps_all.append(eps)
        xi_all.append(xi)
    eps_all = np.array(eps_all)
    xi_all = np.array(xi_all)
    violated = (eps_all > tol) | (xi_all > tol)
    return CertificationReport(
        mu=float(config.mu),
        lam=float(config.lam),
        n_samples=int(n_rays),
        max_eps=float(eps_all.max()),
        mean_eps=float(eps_all.mean()),
        max_xi=float(xi_all.max()),
        mean_xi=float(xi_all.mean()),
        violated_fraction=float(violated.mean()),
        certified=bool(max(eps_all.max(), xi_all.max()) < tol),
    )
