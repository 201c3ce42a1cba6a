"""Single-step gradient-sign attacks and the epsilon-sweep evaluation.

The attack perturbs each input by ``epsilon * sign(d loss / d input)``
using the true labels, then clamps back to the valid input range. The
sweep measures top-1 accuracy on the full validation split at each
epsilon; epsilon 0 reproduces the clean accuracy by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import ToyModel, backward, forward
from .trainer import Split

DEFAULT_EPSILONS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)


@dataclass(frozen=True)
class AttackSpec:
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    clamp_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if not eps:
            raise ConfigError("epsilons must be nonempty")
        if any(e < 0 for e in eps):
            raise ConfigError(f"epsilons must be nonnegative, got {eps}")
        if list(eps) != sorted(eps):
            raise ConfigError(f"epsilons must be sorted ascending, got {eps}")
        lo, hi = (float(v) for v in self.clamp_range)
        object.__setattr__(self, "clamp_range", (lo, hi))
        if not lo < hi:
            raise ConfigError(f"clamp_range must satisfy lo < hi, got {self.clamp_range}")


def fgsm_perturb(
    model: ToyModel,
    batch: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    clamp_range: tuple[float, float] = (0.0, 1.0),
) -> np.ndarray:
    """x + epsilon * sign(input gradient), clamped to the input domain.

    sign(0) = 0, so coordinates with zero gradient are left untouched.
    """
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    x = np.asarray(batch, dtype=np.float64)
    forward(model, x)
    _, dx = backward(model, x, labels, return_input_grad=True)
    lo, hi = clamp_range
    return np.clip(x + epsilon * np.sign(dx), lo, hi)


def robustness_sweep(
    model: ToyModel, val: Split, spec: AttackSpec, batch_size: int = 256
) -> list[tuple[float, float]]:
    """Top-1 accuracy on the attacked validation split at each epsilon."""
    results = []
    n = len(val.y)
    for eps in spec.epsilons:
        correct = 0
        for start in range(0, n, batch_size):
            xb = val.x[start : start + batch_size]
            yb = val.y[start : start + batch_size]
            adv = fgsm_perturb(model, xb, yb, eps, spec.clamp_range)
            logits = forward(model, adv)
            correct += int((logits.argmax(axis=1) == yb).sum())
        results.append((eps, correct / n))
    return results


def write_robustness_csv(path, results: list[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as f:
        f.write("epsilon,top1\n")
        for eps, top1 in results:
            f.write(f"{eps!r},{top1!r}\n")


def read_robustness_csv(path) -> list[tuple[float, float]]:
    out = []
    with open(path, newline="") as f:
        header = f.readline().strip()
        if header != "epsilon,top1":
            raise ConfigError(f"unexpected robustness header {header!r} in {path}")
        for line in f:
            eps, top1 = line.strip().split(",")
            out.append((float(eps), float(top1)))
    return out
