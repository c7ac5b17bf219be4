"""Analytic scalar fields used as fixtures by the inequality checkers.

A field bundles a vectorized evaluator with an optional analytic gradient and
a power-decay exponent for tail bounds. Grids cannot witness growth at
infinity, so the admissibility and quadrature machinery work from these
callables directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .extgrid import EpigraphDomain
from .quadrature import QuadSpec, integrate_epigraph
from .transforms import NormSpec, power_cost_conjugate

__all__ = [
    "ScalarField",
    "power_cost_field",
    "shifted_field",
    "quadratic_field",
    "bump_field",
    "multiply_bump",
    "normalize_neg_power",
]


@dataclass
class ScalarField:
    """fn: (..., n) -> (...); grad falls back to central differences."""

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    decay: float | None = None
    name: str = "field"
    conjugate: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        out = np.zeros_like(x)
        step = 1e-6 * (1.0 + np.linalg.norm(x, axis=-1))
        for d in range(x.shape[-1]):
            ed = np.zeros(x.shape[-1])
            ed[d] = 1.0
            out[..., d] = (
                self(x + step[..., None] * ed) - self(x - step[..., None] * ed)
            ) / (2.0 * step)
        return out

    def scaled(self, c: float) -> "ScalarField":
        if not c > 0:
            raise ValueError("scale must be positive")
        fn = self.fn
        gr = self.grad
        new = replace(
            self,
            fn=lambda x: c * np.asarray(fn(x), dtype=float),
            grad=(None if gr is None else (lambda x: c * np.asarray(gr(x), dtype=float))),
            name=f"{c:g}*{self.name}",
        )
        return new


def power_cost_field(C: float, q: float, norm: NormSpec) -> ScalarField:
    """W(x) = C ||x||^q / q with analytic gradient and conjugate."""
    if not (C > 0 and q > 1):
        raise ValueError("need C > 0 and q > 1")

    def fn(x):
        return C * norm(x) ** q / q

    def grad(x):
        x = np.asarray(x, dtype=float)
        r = norm(x)
        g = norm.grad(x)
        return C * r[..., None] ** (q - 1.0) * g

    def conj(y):
        return power_cost_conjugate(C, q, norm, y)

    f = ScalarField(fn, grad, decay=None, name=f"powercost(C={C:g},q={q:g})", conjugate=conj)
    f.C = C
    f.q = q
    f.norm = norm
    return f


def shifted_field(field: ScalarField, shift: np.ndarray) -> ScalarField:
    """x -> field(x + shift); the usual way to turn a cost on Omega_1 into a
    test function on Omega."""
    shift = np.asarray(shift, dtype=float)
    base_fn, base_grad = field.fn, field.grad
    out = replace(
        field,
        fn=lambda x: np.asarray(base_fn(np.asarray(x, dtype=float) + shift), dtype=float),
        grad=(
            None
            if base_grad is None
            else (lambda x: np.asarray(base_grad(np.asarray(x, dtype=float) + shift), dtype=float))
        ),
        name=f"{field.name}(.+e)",
    )
    return out


def quadratic_field(offset: float = 1.0, curvature: float = 1.0, center=None) -> ScalarField:
    """offset + curvature * ||x - center||^2 / 2, everywhere finite and convex."""

    def fn(x):
        x = np.asarray(x, dtype=float)
        c = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
        return offset + 0.5 * curvature * np.sum((x - c) ** 2, axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        c = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
        return curvature * (x - c)

    def conj(y):
        y = np.asarray(y, dtype=float)
        c = np.zeros(y.shape[-1]) if center is None else np.asarray(center, dtype=float)
        return np.sum(y * y, axis=-1) / (2.0 * curvature) + y @ c - offset

    return ScalarField(fn, grad, name="quadratic", conjugate=conj)


def bump_field(center, radius: float = 1.0, amplitude: float = 1.0) -> ScalarField:
    """Compactly supported C^2 bump amplitude * (1 - ||(x-c)/r||^2)^3 on its ball."""
    c = np.asarray(center, dtype=float)

    def fn(x):
        x = np.asarray(x, dtype=float)
        u = 1.0 - np.sum(((x - c) / radius) ** 2, axis=-1)
        return amplitude * np.clip(u, 0.0, None) ** 3

    def grad(x):
        x = np.asarray(x, dtype=float)
        u = 1.0 - np.sum(((x - c) / radius) ** 2, axis=-1)
        upos = np.clip(u, 0.0, None)
        return amplitude * 3.0 * upos[..., None] ** 2 * (-2.0 * (x - c) / radius**2)

    return ScalarField(fn, grad, decay=None, name="bump")


def multiply_bump(field: ScalarField, center, radius: float, amplitude: float) -> ScalarField:
    """field * (1 + bump); keeps positivity for amplitude > -1."""
    b = bump_field(center, radius, amplitude)
    base_fn, base_grad = field.fn, field.grad

    def fn(x):
        return np.asarray(base_fn(x), dtype=float) * (1.0 + b(x))

    def grad(x):
        f = np.asarray(base_fn(x), dtype=float)
        gf = field.gradient(x) if base_grad is None else np.asarray(base_grad(x), dtype=float)
        return gf * (1.0 + b(x))[..., None] + f[..., None] * b.gradient(x)

    return replace(field, fn=fn, grad=grad, name=f"{field.name}*(1+bump)")


def normalize_neg_power(
    field: ScalarField,
    a: float,
    domain: EpigraphDomain,
    spec: QuadSpec,
    shift: float = 0.0,
    decay: float | None = None,
):
    """Scale c*field so the integral of (c*field)^(-a) over the shifted domain is 1.

    (c f)^(-a) integrates to c^(-a) times the integral of f^(-a), so
    c = S^(1/a) with S the computed integral. Returns (scaled field, S).
    """
    if not a > 0:
        raise ValueError("a must be positive")
    dec = decay if decay is not None else (None if field.decay is None else field.decay * a)
    S, _tail = integrate_epigraph(
        lambda p: np.asarray(field(p), dtype=float) ** (-a), domain, spec, shift=shift, decay=dec
    )
    if not np.isfinite(S) or S <= 0:
        raise ValueError(f"cannot normalize: integral of field^-a is {S}")
    return field.scaled(S ** (1.0 / a)), S
