from dataclasses import dataclass

import numpy as np


@dataclass
class ConcentrationReport:
    m: int
    top_mass: np.ndarray  # (K,) share of |alpha| held by the m largest entries
    gini: np.ndarray  # (K,)


def top_m_mass(row, m):
    a = np.sort(np.abs(np.asarray(row, dtype=np.float64)))[::-1]
    total = a.sum()
    return float(a[:m].sum() / total) if total > 0 else float("nan")


def gini(row):
    a = np.sort(np.abs(np.asarray(row, dtype=np.float64)))
    n, total = len(a), a.sum()
    if total == 0:
        return float("nan")
    # mean absolute difference form, using the sorted cumulative sum
    i = np.arange(1, n + 1)
    return float((2 * (i * a).sum() / (n * total)) - (n + 1) / n)


def concentration(matrix, m):
    values = getattr(matrix, "values", matrix)
    values = np.atleast_2d(np.asarray(values))
    if m <= 0:
        raise ValueError("m must be positive")
    if m > values.shape[1]:
        raise ValueError(f"m={m} exceeds the {values.shape[1]} neurons")
    return ConcentrationReport(m, np.array([top_m_mass(r, m) for r in values]), np.array([gini(r) for r in values]))
