"""Axis-aligned rectangles and small planar helpers shared by the world and media grids."""

from dataclasses import dataclass
import math


class GeometryError(ValueError):
    """A region does not fit where it is required to."""


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError(f"degenerate rectangle {self}")

    @classmethod
    def from_size(cls, x0, y0, width, height):
        return cls(x0, y0, x0 + width, y0 + height)

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains_point(self, x, y, tol=0.0):
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.y0 - tol <= y <= self.y1 + tol)

    def contains(self, other: "Rect", tol=1e-9):
        return (other.x0 >= self.x0 - tol and other.y0 >= self.y0 - tol
                and other.x1 <= self.x1 + tol and other.y1 <= self.y1 + tol)

    def intersects(self, other: "Rect"):
        return not (other.x1 <= self.x0 or other.x0 >= self.x1
                    or other.y1 <= self.y0 or other.y0 >= self.y1)

    def clamp(self, x, y):
        """Clamp a point into the rectangle; returns ``(x, y, clamped)``."""
        cx = min(max(x, self.x0), self.x1)
        cy = min(max(y, self.y0), self.y1)
        return cx, cy, (cx != x or cy != y)


def wrap_angle(a):
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi
