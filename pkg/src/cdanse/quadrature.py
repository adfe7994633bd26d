"""Symmetric quadrature rules on the reference triangle (0,0), (1,0), (0,1)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

REFERENCE_AREA = 0.5


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights ``(n,)`` summing to 1/2."""

    barycentric: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def points(self) -> np.ndarray:
        """Reference coordinates ``(xi, eta) = (lambda_1, lambda_2)``."""
        return self.barycentric[:, 1:]

    def __len__(self):
        return len(self.weights)


def _orbit(a, b, c):
    return sorted({(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)})


def _build(groups, degree):
    bary, w = [], []
    for weight, coords in groups:
        for p in _orbit(*coords):
            bary.append(p)
            w.append(weight)
    bary = np.array(bary, dtype=float)
    w = REFERENCE_AREA * np.array(w, dtype=float)
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(bary, w, degree)


# Strang-Fix / Dunavant degree-4, 6 points. Weights normalised to 1.
_A4 = 0.44594849091596488631832925388305
_B4 = 0.09157621350977074345957146340220
_W4A = 0.22338158967801146569500700843312
_W4B = 0.10995174365532186763832632490021

# Dunavant degree-6, 12 points.
_D6 = [
    (0.116786275726379366030690338225, (0.249286745170910421291638553107,) * 2),
    (0.050844906370206816920936809106, (0.063089014491502228340331602870,) * 2),
    (0.082851075618373575193553456421, (0.053145049844816947353249671631, 0.310352451033784405416607733956)),
]


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 4) -> QuadratureRule:
    """Return a symmetric rule exact for polynomials up to ``degree``.

    Supported degrees are 1, 2, 4 and 6; other requests up to 6 round up.
    """
    if degree <= 1:
        return _build([(1.0, (1 / 3, 1 / 3, 1 / 3))], 1)
    if degree == 2:
        return _build([(1 / 3, (2 / 3, 1 / 6, 1 / 6))], 2)
    if degree <= 4:
        return _build(
            [
                (_W4A, (_A4, _A4, 1 - 2 * _A4)),
                (_W4B, (_B4, _B4, 1 - 2 * _B4)),
            ],
            4,
        )
    if degree <= 6:
        groups = []
        for w, coords in _D6:
            if len(coords) == 2 and coords[0] == coords[1]:
                a = coords[0]
                groups.append((w, (a, a, 1 - 2 * a)))
            else:
                a, b = coords
                groups.append((w, (a, b, 1 - a - b)))
        return _build(groups, 6)
    raise ValueError(f"no triangle rule of degree {degree}")
