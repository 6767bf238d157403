"""Weighted scale-indexed slope energies on the space and on the subset.

For a measure carried by the subset, the energy of a function at radius ``r``
is the mass-weighted sum of p-th powers of its Lipschitz constants on the open
``r``-balls around the support points.  Two mechanisms are verified at the
integrand level: restricting a function to the subset never increases the
per-point constants (so never the energy), and the penalized extension's
constants at the scheduled radii exceed the subset constants by at most a
chosen ``xi``.  The relaxed functionals themselves (infima over approximating
sequences) are out of scope; reports are labeled accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstanceValidationError, ParameterError
from .metric import MetricInstance, ball_members, lip_constant
from .schedule import locality_radius
from .verification import INEQ_RTOL, CheckResult
from .extension import extend, schedule_with_locality


@dataclass
class MeasureData:
    """Nonnegative masses concentrated on the subset, with exponent p >= 1."""

    masses: np.ndarray
    p: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.masses > 0)


def validate_measure(instance: MetricInstance, masses=None, p: float = 1.0) -> MeasureData:
    """Check concentration on the subset and positive total mass.

    ``masses=None`` gives unit mass to every subset point.
    """
    if not (isinstance(p, (int, float)) and math.isfinite(p) and p >= 1):
        raise ParameterError(f"exponent p must be a finite real >= 1, got {p!r}")
    if masses is None:
        masses = np.zeros(instance.n)
        masses[instance.subset] = 1.0
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (instance.n,):
        raise InstanceValidationError("masses length does not match point count",
                                      "masses", {"n_masses": len(masses),
                                                 "n": instance.n})
    if np.any(~np.isfinite(masses)) or np.any(masses < 0):
        bad = int(np.flatnonzero(~np.isfinite(masses) | (masses < 0))[0])
        raise InstanceValidationError("masses must be finite and nonnegative",
                                      "masses", {"index": bad})
    off = np.ones(instance.n, dtype=bool)
    off[instance.subset] = False
    if np.any(masses[off] != 0.0):
        bad = int(np.flatnonzero(masses * off)[0])
        raise InstanceValidationError("mass off the subset", "masses", {"index": bad})
    if masses.sum() <= 0.0:
        raise InstanceValidationError("total mass must be positive", "masses", {})
    return MeasureData(masses=masses, p=float(p))


@dataclass
class EnergySide:
    """One energy sum: per-support-point contributions m_i * Lip(., ball)^p."""

    radius: float
    total: float
    support: np.ndarray
    lips: np.ndarray
    contributions: np.ndarray

    def to_json(self) -> dict:
        return {"radius": self.radius, "total": self.total,
                "support": self.support.tolist(), "lip": self.lips.tolist(),
                "contributions": self.contributions.tolist()}


@dataclass
class EnergyReport:
    """Energies of a function on the whole space versus its restriction."""

    radius: float
    on_space: EnergySide
    on_subset: EnergySide

    def to_json(self) -> dict:
        return {"radius": self.radius, "E_X": self.on_space.total,
                "E_C": self.on_subset.total,
                "on_space": self.on_space.to_json(),
                "on_subset": self.on_subset.to_json()}


def energy(instance: MetricInstance, domain, values, measure: MeasureData,
           r: float) -> EnergySide:
    """Sum over support of m_i * Lip(values, domain within open B_r(x_i))^p."""
    if not (isinstance(r, (int, float)) and r > 0 and math.isfinite(r)):
        raise ParameterError("radius must be a positive finite real")
    domain = np.asarray(domain, dtype=np.intp)
    values = np.asarray(values, dtype=float)
    if values.shape != domain.shape:
        raise ParameterError("values must align with the domain index list")
    if len(np.unique(domain)) != len(domain):
        raise ParameterError("domain indices must be distinct")
    support = measure.support
    dset = set(domain.tolist())
    if not all(int(i) in dset for i in support):
        raise ParameterError("domain must contain the measure support")
    order = np.argsort(domain, kind="stable")
    sorted_dom, sorted_vals = domain[order], values[order]
    lips = np.empty(len(support))
    for j, x in enumerate(support):
        ball = ball_members(instance, int(x), r, domain)
        sel = np.searchsorted(sorted_dom, ball)
        lips[j] = lip_constant(instance, sorted_vals[sel], ball)
    contrib = measure.masses[support] * lips ** measure.p
    return EnergySide(radius=float(r), total=float(contrib.sum()), support=support,
                      lips=lips, contributions=contrib)


def restriction_report(instance: MetricInstance, h_values, measure: MeasureData,
                       r: float) -> EnergyReport:
    """Energies of ``h`` on the whole space and of its restriction on the subset."""
    h_values = np.asarray(h_values, dtype=float)
    if h_values.shape != (instance.n,):
        raise ParameterError("h must be defined on every point")
    allpts = np.arange(instance.n, dtype=np.intp)
    on_space = energy(instance, allpts, h_values, measure, r)
    on_subset = energy(instance, instance.subset, h_values[instance.subset],
                       measure, r)
    return EnergyReport(radius=float(r), on_space=on_space, on_subset=on_subset)


def check_restriction_monotonicity(instance: MetricInstance, h_values,
                                   measure: MeasureData,
                                   radii) -> tuple[CheckResult, list[EnergyReport]]:
    """E_C(h restricted, r) <= E_X(h, r) at every radius (balls only shrink)."""
    reports = [restriction_report(instance, h_values, measure, float(r))
               for r in np.asarray(radii, dtype=float)]
    worst = None
    gap_worst = -math.inf
    for rep in reports:
        gap = rep.on_subset.total - rep.on_space.total
        if gap > gap_worst:
            gap_worst, worst = gap, rep
    tol = INEQ_RTOL * max(1.0, *(rep.on_space.total for rep in reports))
    status = "pass" if gap_worst <= tol else "fail"
    check = CheckResult("restriction_monotonicity", status, measured=gap_worst,
                        allowed=tol, tolerance=tol,
                        witness={"radius": worst.radius, "E_C": worst.on_subset.total,
                                 "E_X": worst.on_space.total},
                        note="integrand-level verification")
    return check, reports


def check_extension_energy(instance: MetricInstance, measure: MeasureData,
                           radii_bar, xi: float, epsilon: float | None = None,
                           ) -> tuple[CheckResult, dict]:
    """Per-point and aggregated energy bounds for the penalized extension.

    For each requested radius the scheduled radius ``r`` is obtained from the
    locality conditions; then ``Lip(f, B_r(x_i)) <= Lip(g, C within
    B_rbar(x_i)) + xi`` per support point, and in aggregate ``E_X(f, r) <= sum
    m_i (Lip(g, .) + xi)^p``.  ``epsilon`` defaults to the instance constant.
    """
    radii_bar = np.asarray(radii_bar, dtype=float)
    if radii_bar.ndim != 1 or len(radii_bar) == 0 or np.any(radii_bar <= 0):
        raise ParameterError("radii must be positive")
    if not xi > 0:
        raise ParameterError("xi must be positive")
    L = instance.lipschitz_L
    if epsilon is None:
        epsilon = L if L > 0 else 1.0
    allpts = np.arange(instance.n, dtype=np.intp)

    if instance.lipschitz_computed == 0.0:
        field = extend(instance, None, allpts)
        schedule = None
    else:
        schedule, _, _ = schedule_with_locality(
            instance, epsilon, float(radii_bar.min()), xi, allpts)
        field = extend(instance, schedule, allpts)

    slack = INEQ_RTOL * max(1.0, L)
    support = measure.support
    rows = []
    worst_gap = -math.inf
    worst_wit: dict = {}
    for rb in radii_bar:
        r = float(rb) if schedule is None else locality_radius(
            schedule, float(rb), xi, L)[1]
        e_f = energy(instance, allpts, _field_on_all(field, instance.n), measure, r)
        lips_g = np.empty(len(support))
        for j, x in enumerate(support):
            cball = ball_members(instance, int(x), float(rb), instance.subset)
            lips_g[j] = lip_constant(instance, instance.g_at(cball), cball)
        point_gap = e_f.lips - (lips_g + xi)
        bound_total = float((measure.masses[support] * (lips_g + xi) ** measure.p).sum())
        agg_gap = e_f.total - bound_total
        j_bad = int(np.argmax(point_gap))
        gap = max(float(point_gap[j_bad]), agg_gap / max(1.0, bound_total))
        if gap > worst_gap:
            worst_gap = gap
            worst_wit = {"r_bar": float(rb), "r": r,
                         "point": int(support[j_bad]),
                         "lip_f": float(e_f.lips[j_bad]),
                         "lip_g_plus_xi": float(lips_g[j_bad] + xi),
                         "E_X": e_f.total, "bound": bound_total}
        rows.append({"r_bar": float(rb), "r": r, "E_X": e_f.total,
                     "bound": bound_total, "lip_f": e_f.lips.tolist(),
                     "lip_g": lips_g.tolist()})
    status = "pass" if worst_gap <= slack else "fail"
    check = CheckResult("extension_energy", status, measured=worst_gap,
                        allowed=slack, tolerance=slack, witness=worst_wit,
                        note="integrand-level verification")
    return check, {"xi": float(xi), "epsilon": float(epsilon),
                   "p": measure.p, "rows": rows}


def _field_on_all(field, n: int) -> np.ndarray:
    vals = np.empty(n)
    vals[field.queries] = field.values
    return vals
