import numpy as np


def assert_ll1_invariants(result):
    """Invariants every block-term run must satisfy: non-increasing fit,
    elementwise nonnegative mixing vectors, unit-norm factor columns."""
    hist = result.fit_history
    for i in range(len(hist) - 1):
        assert hist[i + 1] <= hist[i] + 1e-9, (
            f"fit increased at sweep {i + 1}: {hist[i]} -> {hist[i + 1]}"
        )
    for k, term in enumerate(result.terms):
        assert np.all(term.c >= 0.0), f"term {k} mixing has negative entries"
        assert abs(np.linalg.norm(term.c) - 1.0) <= 1e-10, f"term {k} c not unit"
        for name, m in (("a", term.a), ("b", term.b)):
            norms = np.linalg.norm(m, axis=0)
            assert np.max(np.abs(norms - 1.0)) <= 1e-10, (
                f"term {k} factor {name} columns not unit: {norms}"
            )
        assert np.all(term.weights >= 0.0), f"term {k} has negative weights"


def nnls_bruteforce(a, y):
    """Reference objective by enumerating every support set: solve the
    unconstrained problem on each support, keep feasible candidates."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = a.shape[1]
    best = float(y @ y)  # empty support
    for mask in range(1, 2**n):
        cols = [j for j in range(n) if mask >> j & 1]
        sol, *_ = np.linalg.lstsq(a[:, cols], y, rcond=None)
        if np.all(sol >= -1e-12):
            r = y - a[:, cols] @ sol
            best = min(best, float(r @ r))
    return best
