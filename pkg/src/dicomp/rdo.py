"""Pareto-front construction over (rate, quality) points and model selection.

A family of trained models gives a cloud of operating points; the front keeps
the ones no other point beats on both axes, and selection picks the best
front point under a bit budget.
"""

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union


@dataclass(frozen=True)
class RatePoint:
    bpp: float
    quality: float
    model_id: int

    def __post_init__(self):
        if self.bpp < 0:
            raise ValueError(f"bpp must be non-negative, got {self.bpp}")
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"quality must lie in [0, 1], got {self.quality}")

    def dominates(self, other: "RatePoint") -> bool:
        """True if this point is at least as good on both axes and better on one."""
        return (self.bpp <= other.bpp and self.quality >= other.quality
                and (self.bpp < other.bpp or self.quality > other.quality))


def pareto_front(points: Sequence[RatePoint]) -> list[RatePoint]:
    """Non-dominated subset, sorted by bpp ascending with quality strictly rising.

    Exact (bpp, quality) ties keep the lowest model id.
    """
    if not points:
        raise ValueError("cannot build a front from zero points")
    ordered = sorted(points, key=lambda p: (p.bpp, -p.quality, p.model_id))
    front: list[RatePoint] = []
    best_quality = -1.0
    for p in ordered:
        if p.quality > best_quality:
            front.append(p)
            best_quality = p.quality
    return front


def select_model(front: Sequence[RatePoint], target_bpp: float) -> int:
    """Model id of the highest-quality front point within the bpp budget.

    Falls back to the cheapest point (with a warning) when even it exceeds
    the budget.
    """
    if not front:
        raise ValueError("empty front")
    ordered = sorted(front, key=lambda p: p.bpp)
    affordable = [p for p in ordered if p.bpp <= target_bpp]
    if not affordable:
        cheapest = ordered[0]
        warnings.warn(
            f"target {target_bpp} bpp below the cheapest model "
            f"({cheapest.bpp:.4f} bpp); using model {cheapest.model_id}",
            stacklevel=2)
        return cheapest.model_id
    return max(affordable, key=lambda p: (p.quality, -p.model_id)).model_id


def write_rate_points(points: Iterable[RatePoint], path: Union[str, Path]) -> None:
    """CSV with columns model_id,bpp,quality."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "bpp", "quality"])
        for p in points:
            writer.writerow([p.model_id, repr(p.bpp), repr(p.quality)])


def read_rate_points(path: Union[str, Path]) -> list[RatePoint]:
    """Read a model_id,bpp,quality CSV, tolerating a header row."""
    points = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "model_id":
                continue
            points.append(RatePoint(bpp=float(row[1]), quality=float(row[2]),
                                    model_id=int(row[0])))
    return points
