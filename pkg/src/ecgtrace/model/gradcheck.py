"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MaxPool, ModelSpec, ReLU, backward, cast_params, forward
from .training import loss_ce


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    probed: int
    skipped: int        # entries whose +/-eps stencil crossed a ReLU or max-pool kink


def _pattern(spec: ModelSpec, res) -> list[np.ndarray]:
    """ReLU on/off flags and max-pool winners: the piecewise-linear region of the input."""
    out = []
    for (_, inp, _, aux), layer in zip(res.cache, spec.layers):
        if isinstance(layer, ReLU):
            out.append(inp > 0)
        elif isinstance(layer, MaxPool):
            out.append(aux)
    return out


def _same(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def grad_check_report(spec: ModelSpec, params, x, y, eps: float = 1e-5, max_params: int = 1000,
                      train_mode: bool = False, seed: int = 0, skip_kinks: bool = True) -> GradCheckReport:
    """Max relative error between backprop and central differences.

    Runs in float64. With ``train_mode`` the dropout masks are frozen by
    ``seed`` so every perturbed evaluation sees the same masks. At most
    ``max_params`` scalar entries are probed, sampled uniformly without
    replacement. With ``skip_kinks`` an entry is left out when either
    perturbed evaluation lands in a different ReLU/max-pool region than the
    unperturbed one, since the loss is not differentiable across that step.
    """
    params = cast_params(params, np.float64)
    x = np.asarray(x, dtype=np.float64)

    def run(p):
        return forward(spec, p, x, train_mode=train_mode, seed=seed)

    res = run(params)
    base = _pattern(spec, res)
    _, dlogits = loss_ce(res.probabilities, y)
    analytic = backward(spec, params, res.cache, dlogits)

    slots = [(name, key, i) for name, p in params.items() for key, arr in p.items() for i in range(arr.size)]
    rng = np.random.default_rng(seed)
    if len(slots) > max_params:
        chosen = rng.choice(len(slots), size=max_params, replace=False)
        slots = [slots[i] for i in sorted(chosen)]

    worst, skipped = 0.0, 0
    for name, key, i in slots:
        flat = params[name][key].reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        r_up = run(params)
        flat[i] = orig - eps
        r_down = run(params)
        flat[i] = orig
        if skip_kinks and not (_same(base, _pattern(spec, r_up)) and _same(base, _pattern(spec, r_down))):
            skipped += 1
            continue
        numeric = (loss_ce(r_up.probabilities, y)[0] - loss_ce(r_down.probabilities, y)[0]) / (2 * eps)
        a = analytic[name][key].reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return GradCheckReport(float(worst), len(slots) - skipped, skipped)


def grad_check(spec: ModelSpec, params, x, y, eps: float = 1e-5, max_params: int = 1000,
               train_mode: bool = False, seed: int = 0, skip_kinks: bool = True) -> float:
    return grad_check_report(spec, params, x, y, eps, max_params, train_mode, seed, skip_kinks).max_rel_error
