"""Run metrics extracted from recorded trajectories, and run comparison.

All metrics are pure functions of the trajectory and the voltage-target
series, so re-extracting from a saved CSV reproduces the report exactly.
Settling is the first time after which the output voltage stays inside a
+/-2 % band around its target for the remainder of the run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .sim import Trajectory

__all__ = ["RunReport", "extract_report", "compare", "Comparison"]

SETTLING_BAND = 0.02
HD_FIT_FLOOR = 1e-12


@dataclass
class RunReport:
    """Per-converter endpoint and transient metrics for one run."""

    name: str
    m: int
    final_vc: list
    final_il: list
    final_it: list
    settling_time: list       # seconds, None where the band is never held
    peak_vc: list
    final_hd_total: float
    hd_decay_rate: float | None
    duty_saturation_count: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "final_vc": self.final_vc,
            "final_il": self.final_il,
            "final_it": self.final_it,
            "settling_time": self.settling_time,
            "peak_vc": self.peak_vc,
            "final_hd_total": self.final_hd_total,
            "hd_decay_rate": self.hd_decay_rate,
            "duty_saturation_count": self.duty_saturation_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    @property
    def max_settling_time(self) -> float:
        vals = [math.inf if s is None else s for s in self.settling_time]
        return max(vals)

    @property
    def max_peak_vc(self) -> float:
        return max(self.peak_vc)

    def to_text(self) -> str:
        lines = [f"run report: {self.name}", f"converters: {self.m}", ""]
        lines.append(f"{'n':>3} {'final vC [V]':>14} {'final iL [A]':>14} "
                     f"{'final iT [A]':>14} {'settling [s]':>13} {'peak vC [V]':>12}")
        for n in range(self.m):
            st = self.settling_time[n]
            st_s = f"{st:.6g}" if st is not None else "never"
            lines.append(f"{n:>3} {self.final_vc[n]:>14.6f} {self.final_il[n]:>14.6f} "
                         f"{self.final_it[n]:>14.6e} {st_s:>13} {self.peak_vc[n]:>12.4f}")
        lines.append("")
        lines.append(f"final Hd total [J]:    {self.final_hd_total:.6e}")
        rate = f"{self.hd_decay_rate:.4f}" if self.hd_decay_rate is not None else "n/a"
        lines.append(f"Hd decay rate [1/s]:   {rate}")
        lines.append(f"duty saturation count: {self.duty_saturation_count}")
        return "\n".join(lines) + "\n"


def _settling_time(times: np.ndarray, vc: np.ndarray, target: np.ndarray) -> float | None:
    inside = np.abs(vc - target) <= SETTLING_BAND * np.abs(target)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    if outside.size == 0:
        return float(times[0])
    return float(times[outside[-1] + 1])


def _hd_decay_rate(times: np.ndarray, hd_total: np.ndarray) -> float | None:
    peak = int(np.argmax(hd_total))
    mask = hd_total > HD_FIT_FLOOR
    mask[:peak] = False
    if mask.sum() < 10:
        return None
    slope = np.polyfit(times[mask], np.log(hd_total[mask]), 1)[0]
    return float(-slope)


def extract_report(name: str, traj: Trajectory, vc_target: np.ndarray) -> RunReport:
    """Compute the report for a run against its per-sample voltage targets.

    ``vc_target`` has one row per sample and one column per converter.  The
    saturation count tallies (sample, converter) pairs whose recorded duty
    sits exactly on a clamp bound.
    """
    vc_target = np.asarray(vc_target, dtype=float)
    if vc_target.shape != (traj.times.size, traj.m):
        raise ValueError(
            f"vc_target must have shape {(traj.times.size, traj.m)}, got {vc_target.shape}"
        )
    vc = traj.vC()
    settling = [_settling_time(traj.times, vc[:, n], vc_target[:, n]) for n in range(traj.m)]
    saturated = (traj.duties == 0.0) | (traj.duties == 1.0)
    return RunReport(
        name=name,
        m=traj.m,
        final_vc=[float(v) for v in vc[-1]],
        final_il=[float(v) for v in traj.iL()[-1]],
        final_it=[float(v) for v in traj.iT()[-1]],
        settling_time=settling,
        peak_vc=[float(v) for v in vc.max(axis=0)],
        final_hd_total=float(traj.hd_total[-1]),
        hd_decay_rate=_hd_decay_rate(traj.times, traj.hd_total),
        duty_saturation_count=int(saturated.sum()),
    )


@dataclass
class Comparison:
    """Side-by-side metrics with deltas and improvement verdicts for b vs a."""

    a: RunReport
    b: RunReport
    settling_improved: bool
    peak_not_worse: bool

    def to_text(self) -> str:
        a, b = self.a, self.b
        rows = [
            ("max settling time [s]", a.max_settling_time, b.max_settling_time),
            ("max peak vC [V]", a.max_peak_vc, b.max_peak_vc),
            ("final Hd total [J]", a.final_hd_total, b.final_hd_total),
            ("duty saturations", a.duty_saturation_count, b.duty_saturation_count),
        ]
        lines = [f"comparison: {a.name}  vs  {b.name}", ""]
        lines.append(f"{'metric':<24} {'a':>14} {'b':>14} {'delta (b-a)':>14}")
        for label, va, vb in rows:
            lines.append(f"{label:<24} {va:>14.6g} {vb:>14.6g} {vb - va:>14.6g}")
        lines.append("")
        lines.append(f"settling time improved (b < a): "
                     f"{'PASS' if self.settling_improved else 'FAIL'}")
        lines.append(f"peak voltage not worse (b <= a): "
                     f"{'PASS' if self.peak_not_worse else 'FAIL'}")
        return "\n".join(lines) + "\n"


def compare(report_a: RunReport, report_b: RunReport) -> Comparison:
    """Compare two runs of the same ring topology; b is the candidate."""
    if report_a.m != report_b.m:
        raise ValueError(f"topology mismatch: {report_a.m} vs {report_b.m} converters")
    return Comparison(
        a=report_a,
        b=report_b,
        settling_improved=report_b.max_settling_time < report_a.max_settling_time,
        peak_not_worse=report_b.max_peak_vc <= report_a.max_peak_vc,
    )
