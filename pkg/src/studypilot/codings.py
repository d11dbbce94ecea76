"""Clinical grading scales: GCS, the extended six-level WFNS, and GOS.

The grading here is the one used throughout the toolkit's study designs:
WFNS grade 2 covers GCS 13-14 with focal neurological deficits and grade 3
the same range without them, and grade 6 extends the classic five-level
scale to mark grade-5 patients whose pupils do not react.
"""
from __future__ import annotations

from dataclasses import dataclass

__all__ = ["GcsAssessment", "WfnsGrade", "GosCategory", "wfns_from_gcs",
           "GOS_LABELS"]

GOS_LABELS = {
    1: "Good Recovery",
    2: "Moderate Disability",
    3: "Severe Disability",
    4: "Persistent Vegetative State",
    5: "Death",
}


@dataclass(frozen=True)
class GcsAssessment:
    """Glasgow Coma Scale component scores.

    Eye opening runs 1-4, verbal response 1-5, motor response 1-6; the
    total therefore lies in [3, 15], with 15 normal consciousness and 3 a
    profound unconscious state.
    """

    eye: int
    verbal: int
    motor: int

    def __post_init__(self):
        for name, value, hi in (("eye", self.eye, 4), ("verbal", self.verbal, 5),
                                ("motor", self.motor, 6)):
            if not isinstance(value, int) or not 1 <= value <= hi:
                raise ValueError(f"GCS {name} score must be an integer in "
                                 f"[1, {hi}], got {value!r}")

    @property
    def total(self) -> int:
        return self.eye + self.verbal + self.motor


@dataclass(frozen=True)
class WfnsGrade:
    """Extended WFNS grade (ordered, 1-6).

    ``pupils_reactive`` records the pupil assessment when one was made;
    grade 6 is by definition a grade-5 state without pupil reaction, so it
    cannot be combined with reactive pupils.
    """

    grade: int
    pupils_reactive: bool | None = None

    def __post_init__(self):
        if not isinstance(self.grade, int) or not 1 <= self.grade <= 6:
            raise ValueError(f"WFNS grade must be an integer in [1, 6], "
                             f"got {self.grade!r}")
        if self.grade == 6 and self.pupils_reactive:
            raise ValueError("WFNS grade 6 requires absent pupil reaction")

    @property
    def as_continuous(self) -> float:
        """The grade as a float, for analyses that treat WFNS numerically."""
        return float(self.grade)


@dataclass(frozen=True)
class GosCategory:
    """Glasgow Outcome Scale category, 1 = Good Recovery ... 5 = Death."""

    category: int

    def __post_init__(self):
        if self.category not in GOS_LABELS:
            raise ValueError(f"GOS category must be in [1, 5], "
                             f"got {self.category!r}")

    @property
    def label(self) -> str:
        return GOS_LABELS[self.category]


def wfns_from_gcs(gcs: GcsAssessment, focal_deficit: bool,
                  pupils_reactive: bool) -> WfnsGrade:
    """Map a GCS assessment to the extended WFNS grade.

    Total 15 is grade 1; totals 13-14 are grade 2 with a focal neurological
    deficit and grade 3 without; totals 7-12 are grade 4; totals 3-6 are
    grade 5 with reactive pupils and grade 6 without.
    """
    total = gcs.total
    if total == 15:
        grade = 1
    elif total >= 13:
        grade = 2 if focal_deficit else 3
    elif total >= 7:
        grade = 4
    else:
        grade = 5 if pupils_reactive else 6
    return WfnsGrade(grade, pupils_reactive=bool(pupils_reactive))
