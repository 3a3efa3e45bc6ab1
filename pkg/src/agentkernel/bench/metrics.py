"""
Throughput and latency metrics computed from model-time stamps
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ..core.errors import FitError
from ..core.syscall import LifecycleState, SysCall


@dataclass(frozen=True)
class CallRecord:
    """Model-time record of one finished syscall"""
    agent_id: int
    seq: int
    kind: str
    created: Fraction
    start: Fraction
    end: Fraction
    status: str
    text: str = ""

    @property
    def wait(self) -> Fraction:
        return self.end - self.created

    @classmethod
    def from_call(cls, call: SysCall) -> "CallRecord":
        response = call.response
        return cls(
            agent_id=call.agent_id,
            seq=call.seq,
            kind=call.kind.value,
            created=call.created_time,
            start=call.start_time,
            end=call.end_time,
            status=call.status.value,
            text=(response.response_message or "") if response is not None else "",
        )


def percentile(values: Sequence[float], q: float) -> float:
    """q-th percentile with linear interpolation (0.0 for no values)"""
    if not values:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=np.float64), q, method="linear"))


@dataclass
class Metrics:
    """
    Attributes:
        overall_time: Last completion minus first submission
        throughput: Completed syscalls per model-time unit
        wait_avg: Mean submission-to-completion delay
        wait_p90: 90th percentile of that delay
        records: Per-call records ordered by (agent_id, seq)
    """
    overall_time: Fraction = Fraction(0)
    throughput: Fraction = Fraction(0)
    wait_avg: Fraction = Fraction(0)
    wait_p90: float = 0.0
    records: list[CallRecord] = field(default_factory=list)

    @property
    def num_calls(self) -> int:
        return len(self.records)

    @property
    def completed(self) -> int:
        return sum(1 for r in self.records if r.status == LifecycleState.DONE.value)

    @classmethod
    def from_records(cls, records: Iterable[CallRecord]) -> "Metrics":
        records = sorted(records, key=lambda r: (r.agent_id, r.seq))
        if not records:
            return cls()

        overall = max(r.end for r in records) - min(r.created for r in records)
        waits = [r.wait for r in records]
        done = sum(1 for r in records if r.status == LifecycleState.DONE.value)
        return cls(
            overall_time=overall,
            throughput=Fraction(done) / overall if overall > 0 else Fraction(0),
            wait_avg=sum(waits, Fraction(0)) / len(waits),
            wait_p90=percentile([float(w) for w in waits], 90),
            records=records,
        )

    @classmethod
    def from_calls(cls, calls: Iterable[SysCall]) -> "Metrics":
        return cls.from_records(CallRecord.from_call(c) for c in calls)

    def texts(self, kind: str = "llm") -> dict[tuple[int, int], str]:
        """Response text of every call of a kind, keyed by (agent_id, seq)"""
        return {(r.agent_id, r.seq): r.text for r in self.records if r.kind == kind}


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def fit_linear(points: Sequence[tuple[float, float]]) -> LinearFit:
    """
    Least-squares line through (x, y) points

    Raises:
        FitError: fewer than two distinct x values
    """
    if len({x for x, _ in points}) < 2:
        raise FitError(f"a linear fit needs at least two distinct points, got {len(points)}")

    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)

    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r_squared)
