"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence, Tuple

import numpy as np

from . import ops
from .tensor import Tensor

__all__ = ["finite_diff_check"]


def _traced_eval(f: Callable[[], Tensor]) -> Tuple[float, bytes]:
    """Evaluate f once, returning its value and the relu/maxpool branch trace."""
    ops._BRANCH_TRACE = []
    try:
        val = float(f().data)
        sig = b"".join(ops._BRANCH_TRACE)
    finally:
        ops._BRANCH_TRACE = None
    return val, sig


def finite_diff_check(
    f: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    n_coords: int = 50,
    h: float = 1e-3,
    seed: int = 0,
    select: str = "random",
    exclude_kinks: bool = False,
) -> float:
    """Compare analytic gradients of scalar f() against central differences.

    Samples at least `n_coords` coordinates spread across the `wrt` tensors
    (every tensor gets at least one). The perturbed values are float32, so
    the difference quotient divides by the realized step (x+ minus x- after
    rounding), not the nominal 2h. Returns the worst relative error
      |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).

    select="random" draws coordinates uniformly; select="top" probes each
    tensor's largest-|gradient| coordinates instead. The top mode exists for
    deep composites, where most single coordinates move a float32 loss by
    less than its own rounding and the difference quotient reads pure noise;
    probing where the claimed gradient is largest keeps the check meaningful
    while still exposing wrong or disconnected tensors (their best claimed
    coordinates disagree with the measured slope just the same).

    The check is only valid where f is differentiable, so a coordinate whose
    +-h interval straddles a relu/maxpool branch boundary must not count:
    there the two-sided quotient averages two different true slopes and
    matches neither. With exclude_kinks=True every relu and maxpool records
    the branch it took (sign pattern / argmax indices), and a coordinate is
    skipped exactly when the x+h and x-h passes disagree on any branch; the
    next coordinate in the tensor's order replaces it. Branch traces read
    only the forward computation, never the claimed gradient, so a wrong or
    missing backward cannot trigger an exclusion: at same-branch points the
    function is locally smooth and a bad gradient still fails the check.
    Every tensor must yield at least one same-branch probe, else the check
    aborts rather than certify an unmeasured tensor.
    """
    if select not in ("random", "top"):
        raise ValueError(f"select must be 'random' or 'top', got {select!r}")
    rng = np.random.default_rng(seed)

    out = f()
    out.backward()
    grads = []
    for t in wrt:
        if t.grad is None:
            raise AssertionError("finite_diff_check: a wrt tensor received no gradient")
        grads.append(t.grad.copy())

    sizes = np.array([t.size for t in wrt])
    per = np.maximum(1, (n_coords * sizes / sizes.sum()).astype(int))

    worst = 0.0
    for ti, (t, g, k) in enumerate(zip(wrt, grads, per)):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        k = min(int(k), t.size)
        if select == "top":
            order = np.argsort(np.abs(gflat))[::-1]
        else:
            order = rng.permutation(t.size)
        valid = 0
        budget = max(6 * k, 48)
        for c in order[:budget]:
            if valid >= k:
                break
            orig = flat[c]
            flat[c] = np.float32(orig + h)
            xp = float(flat[c])
            if exclude_kinks:
                fp, sig_p = _traced_eval(f)
            else:
                fp = float(f().data)
            flat[c] = np.float32(orig - h)
            xm = float(flat[c])
            if exclude_kinks:
                fm, sig_m = _traced_eval(f)
            else:
                fm = float(f().data)
            flat[c] = orig
            if exclude_kinks and sig_p != sig_m:
                continue
            numeric = (fp - fm) / (xp - xm)
            analytic = float(gflat[c])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
            valid += 1
        if valid == 0:
            raise AssertionError(
                f"finite_diff_check: no kink-free probe found for wrt[{ti}] "
                f"(shape {t.shape}); choose a different evaluation point"
            )
    for t in wrt:
        t.grad = None
    return worst
