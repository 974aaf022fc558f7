import numpy as np


def count_tv(a, b) -> float:
    """Total variation distance between two empirical count distributions."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    m = int(max(a.max(initial=0), b.max(initial=0))) + 1
    pa = np.bincount(a, minlength=m) / len(a)
    pb = np.bincount(b, minlength=m) / len(b)
    return float(0.5 * np.abs(pa - pb).sum())


def tv_to_law(samples, probs) -> float:
    samples = np.asarray(samples, dtype=np.int64)
    m = max(int(samples.max(initial=0)) + 1, len(probs))
    emp = np.bincount(samples, minlength=m) / len(samples)
    law = np.zeros(m)
    law[: len(probs)] = probs
    return float(0.5 * np.abs(emp - law).sum())
