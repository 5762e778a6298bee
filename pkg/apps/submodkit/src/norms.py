"""
Submodular Norms

||x||_f = f̂(|x|), the Lovász extension evaluated at the absolute value of x.
It is a norm whenever f is a polymatroid with f(v) > 0 for every element.
"""

import numpy as np

from .analysis import CheckReport, Violation
from .config import resolve_tolerance
from .core import DimensionError, SetFunctionHandle, SubmodError, warn_unless
from .minimize import lovasz_extension


class NormError(SubmodError):
    """Set function does not induce a norm."""
    pass


class NormHandle:
    """
    A polymatroid with strictly positive singletons, used as a norm.

    Raises:
        NormError: If some f(v) - f(∅) is at most the tolerance
    """

    def __init__(self, f: SetFunctionHandle, tolerance: float | None = None):
        tol = resolve_tolerance(tolerance)
        empty = f.evaluate(f.empty())
        flat = [v for v in range(f.size_n) if f.evaluate(f.subset([v])) - empty <= tol]
        if flat:
            raise NormError(
                f"'{f.name}' has f(v) = 0 for elements {flat}; ||.||_f would not be definite"
            )
        warn_unless(f.flags.polymatroid, f"'{f.name}' does not claim to be a polymatroid")
        self.f = f

    @classmethod
    def unchecked(cls, f: SetFunctionHandle) -> "NormHandle":
        """Wrap f without the positivity check (for probing the axioms)."""
        handle = cls.__new__(cls)
        handle.f = f
        return handle

    @property
    def size_n(self) -> int:
        return self.f.size_n

    def __call__(self, x: np.ndarray | list[float]) -> float:
        return norm_eval(self, x)


def norm_eval(h: NormHandle, x: np.ndarray | list[float]) -> float:
    """
    ||x||_f = f̂(|x|).

    Raises:
        DimensionError: If len(x) != n
    """
    x = np.abs(np.asarray(x, dtype=float))
    if x.shape != (h.size_n,):
        raise DimensionError(f"x has shape {x.shape}, expected ({h.size_n},)")
    value, _, _ = lovasz_extension(h.f, x)
    return value


def check_norm_axioms(
    h: NormHandle, trials: int = 1000, seed: int = 0, tolerance: float | None = None
) -> CheckReport:
    """
    Seeded probes of the norm axioms.

    Each trial draws Gaussian x, y and a scalar c and tests the triangle
    inequality and absolute homogeneity; definiteness is tested on the zero
    vector and every basis vector.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tol = resolve_tolerance(tolerance)
    n = h.size_n
    report = CheckReport(check="norm-axioms", mode="sampled")
    rng = np.random.default_rng(seed)

    zero = norm_eval(h, np.zeros(n))
    report.pairs_checked += 1
    if abs(zero) > tol:
        report.record(
            Violation(witness={"x": [0.0] * n}, lhs=zero, rhs=0.0, deficit=abs(zero))
        )
    for v in range(n):
        basis = np.zeros(n)
        basis[v] = 1.0
        value = norm_eval(h, basis)
        report.pairs_checked += 1
        if value <= tol:
            report.record(
                Violation(
                    witness={"x": basis.tolist(), "element": [v]},
                    lhs=value,
                    rhs=0.0,
                    deficit=tol - value,
                )
            )

    for trial in range(trials):
        x, y = rng.normal(size=n), rng.normal(size=n)
        c = float(rng.uniform(-3.0, 3.0))
        nx, ny, nxy = norm_eval(h, x), norm_eval(h, y), norm_eval(h, x + y)
        report.pairs_checked += 2
        if nxy > nx + ny + tol * max(1.0, nx + ny):
            report.record(
                Violation(
                    witness={"trial": [trial], "x": x.tolist(), "y": y.tolist()},
                    lhs=nxy,
                    rhs=nx + ny,
                    deficit=nxy - nx - ny,
                )
            )
        scaled = norm_eval(h, c * x)
        if abs(scaled - abs(c) * nx) > tol * max(1.0, abs(c) * nx):
            report.record(
                Violation(
                    witness={"trial": [trial], "x": x.tolist(), "c": [c]},
                    lhs=scaled,
                    rhs=abs(c) * nx,
                    deficit=abs(scaled - abs(c) * nx),
                )
            )
    return report
