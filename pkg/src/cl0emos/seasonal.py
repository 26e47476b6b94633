"""Annual / semi-annual harmonic regressions fitted by least squares."""
from dataclasses import dataclass

import numpy as np

PERIOD_DAYS = 365.0
COND_LIMIT = 1e12


def day_index(times):
    """Fractional day-of-year (0-based) of UTC datetime64 values.

    The 365-day period is kept in leap years, so 29 February takes the phase
    of 1 March in a common year.
    """
    times = np.asarray(times, dtype="datetime64[m]")
    year_start = times.astype("datetime64[Y]").astype("datetime64[m]")
    return (times - year_start) / np.timedelta64(1, "D")


def design(t, order):
    t = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * t / PERIOD_DAYS
    cols = [np.ones_like(w), np.sin(w), np.cos(w)]
    if order == 2:
        cols += [np.sin(2 * w), np.cos(2 * w)]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class HarmonicFit:
    order: int
    coefficients: np.ndarray
    period_days: float = PERIOD_DAYS

    def __call__(self, t):
        return predict_harmonic(self, t)

    def to_dict(self):
        return {"order": self.order, "coefficients": [float(c) for c in self.coefficients]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["order"]), np.array(d["coefficients"], dtype=float))


def fit_harmonic(t, values, order=1):
    """Least-squares fit of ``c0 + c1 sin(wt) + c2 cos(wt) [+ c3 sin(2wt) + c4 cos(2wt)]``.

    Parameters
    ----------
    t : array_like
        Day indices (fractional days allowed).
    values : array_like
        Observations or ensemble group means, same length as ``t``.
    order : {1, 2}
        Number of frequencies.

    Raises
    ------
    ValueError
        For an unsupported order, too few points or a rank-deficient design.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    X = design(t, order)
    p = X.shape[1]
    if len(y) < 2 * order + 2:
        raise ValueError(f"need at least {2 * order + 2} points for an order-{order} fit")
    # SVD least squares; normal equations square the conditioning of short windows
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < p or sv[0] > COND_LIMIT * sv[-1]:
        raise ValueError("rank-deficient harmonic design (too few distinct day indices)")
    return HarmonicFit(order, coef)


def predict_harmonic(fit, t):
    return design(t, fit.order) @ fit.coefficients
