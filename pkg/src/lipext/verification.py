"""Executable checks for every quantitative property of the construction.

Each check returns a :class:`CheckResult`; a failing result always carries a
concrete witness (indices plus measured-versus-allowed values).  Tolerances
are relative to the instance's value and distance scales: 1e-9 for
inequalities, 1e-12 for identities.  Pair scans are exhaustive up to
``MAX_PAIRS`` pairs and fall back to seeded uniform subsampling beyond that;
sampled passes are labeled as statistical in the result note.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError
from .metric import MetricInstance, ball_members, lip_constant, lipa_profile
from .schedule import ScaleSchedule, locality_radius
from .extension import (ExtensionField, PenalizationProfile, _pen_matrix,
                        _stack_profiles, build_profiles, eval_pen, extend,
                        extend_localized, mcshane_upper_many,
                        mcshane_lower_many, schedule_with_locality)

IDENTITY_RTOL = 1e-12
INEQ_RTOL = 1e-9
MAX_PAIRS = 500_000


@dataclass
class CheckResult:
    name: str
    status: str                 # "pass" | "fail" | "info" | "skipped"
    measured: float | None = None
    allowed: float | None = None
    tolerance: float | None = None
    witness: dict | None = None
    note: str = ""

    def __post_init__(self):
        if self.status == "fail" and not self.witness:
            raise ParameterError(f"check {self.name}: fail status requires a witness")

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status,
                "measured": self.measured, "allowed": self.allowed,
                "tolerance": self.tolerance, "witness": self.witness,
                "note": self.note}


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    params: dict
    schedule_triples: list | None = None
    fragments: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"schema_version": "1", "kind": "verification_report",
                "passed": self.passed, "params": self.params,
                "checks": [c.to_json() for c in self.checks],
                "schedule": self.schedule_triples,
                "fragments": self.fragments}


def _ineq_tol(instance: MetricInstance) -> float:
    return INEQ_RTOL * instance.check_scale()


def _pair_sample(n: int, seed: int, max_pairs: int = MAX_PAIRS):
    """(i, j, note) index arrays over distinct position pairs."""
    total = n * (n - 1) // 2
    if total <= max_pairs:
        iu = np.triu_indices(n, k=1)
        return iu[0], iu[1], "exhaustive"
    rng = np.random.default_rng(seed)
    ii = rng.integers(0, n, size=max_pairs)
    jj = rng.integers(0, n, size=max_pairs)
    keep = ii != jj
    note = (f"statistical: sampled {int(keep.sum())} of {total} pairs "
            f"(coverage {keep.sum() / total:.3g}, seed {seed})")
    return ii[keep], jj[keep], note


def check_restriction(field: ExtensionField, instance: MetricInstance) -> CheckResult:
    """f(x) == g(x) on every evaluated subset point, tolerance 1e-12 (1 + max |g|)."""
    pos = instance.subset_positions()[field.queries]
    onc = np.flatnonzero(pos >= 0)
    tol = IDENTITY_RTOL * (1.0 + float(np.max(np.abs(instance.values))))
    if len(onc) == 0:
        return CheckResult("restriction", "skipped", tolerance=tol,
                           note="no evaluated point lies in the subset")
    gaps = np.abs(field.values[onc] - instance.values[pos[onc]])
    worst = int(np.argmax(gaps))
    measured = float(gaps[worst])
    witness = {"index": int(field.queries[onc[worst]]),
               "f": float(field.values[onc[worst]]),
               "g": float(instance.values[pos[onc[worst]]])}
    status = "pass" if measured <= tol else "fail"
    return CheckResult("restriction", status, measured=measured, allowed=tol,
                       tolerance=tol, witness=witness)


def check_global_lipschitz(field: ExtensionField, instance: MetricInstance,
                           budget: float, seed: int = 0,
                           max_pairs: int = MAX_PAIRS) -> CheckResult:
    """Pairwise slope of f over the evaluated points stays within ``budget``."""
    q = field.queries
    ii, jj, note = _pair_sample(len(q), seed, max_pairs)
    d = instance.distance_matrix()[q[ii], q[jj]]
    ok = d > 0
    ratios = np.abs(field.values[ii[ok]] - field.values[jj[ok]]) / d[ok]
    if len(ratios) == 0:
        return CheckResult("global_lipschitz", "skipped", note="no distinct pairs")
    slack = INEQ_RTOL * max(1.0, budget)
    worst = int(np.argmax(ratios))
    measured = float(ratios[worst])
    witness = {"i": int(q[ii[ok][worst]]), "j": int(q[jj[ok][worst]]),
               "ratio": measured}
    status = "pass" if measured <= budget + slack else "fail"
    return CheckResult("global_lipschitz", status, measured=measured,
                       allowed=budget + slack, tolerance=slack,
                       witness=witness, note=note)


def check_envelope_sandwich(field: ExtensionField, instance: MetricInstance,
                            l_budget: float) -> CheckResult:
    """lower envelope <= f <= upper envelope at the budget constant, pointwise."""
    upper = mcshane_upper_many(instance, l_budget, field.queries)
    lower = mcshane_lower_many(instance, l_budget, field.queries)
    tol = IDENTITY_RTOL * instance.check_scale()
    over = field.values - upper
    under = lower - field.values
    viol = np.maximum(over, under)
    worst = int(np.argmax(viol))
    measured = float(viol[worst])
    witness = {"index": int(field.queries[worst]), "f": float(field.values[worst]),
               "lower": float(lower[worst]), "upper": float(upper[worst])}
    status = "pass" if measured <= tol else "fail"
    return CheckResult("envelope_sandwich", status, measured=measured, allowed=tol,
                       tolerance=tol, witness=witness)


def check_step2(instance: MetricInstance, profiles: list[PenalizationProfile],
                schedule: ScaleSchedule) -> CheckResult:
    """phi_x(y) >= g(y) + eps_{k-2} L for subset pairs with d(x, y) in the k-bracket."""
    g = instance.values
    L = instance.lipschitz_L
    T = instance.distances(instance.subset, instance.subset)
    phi = g[:, None] + _pen_matrix(_stack_profiles(profiles), T)
    J = np.searchsorted(schedule.eps, T, side="right")
    valid = (J >= 2) & (J <= len(schedule.eps) - 1) & (T > 0)
    if not np.any(valid):
        return CheckResult("step2_lower_bound", "skipped",
                           note="no subset pair falls in a stored bracket")
    eps_km2 = schedule.eps[np.clip(J, 2, None) - 2]
    margin = phi - (g[None, :] + L * eps_km2)
    margin = np.where(valid, margin, np.inf)
    tol = _ineq_tol(instance)
    xi_pos, y_pos = np.unravel_index(np.argmin(margin), margin.shape)
    measured = float(margin[xi_pos, y_pos])
    witness = {"x": int(instance.subset[xi_pos]), "y": int(instance.subset[y_pos]),
               "k": int(schedule.k_min + J[xi_pos, y_pos]),
               "phi": float(phi[xi_pos, y_pos]),
               "bound": float(g[y_pos] + L * eps_km2[xi_pos, y_pos])}
    skipped = int(np.sum((T > 0) & ~valid))
    note = f"{skipped} pairs outside stored brackets" if skipped else ""
    status = "pass" if measured >= -tol else "fail"
    return CheckResult("step2_lower_bound", status, measured=measured,
                       allowed=-tol, tolerance=tol, witness=witness, note=note)


def check_profile_legality(profiles: list[PenalizationProfile],
                           schedule: ScaleSchedule) -> CheckResult:
    """Convexity, slope bounds, pen(0) = 0 and exact breakpoint continuity."""
    cap = schedule.L_eff + schedule.eps_eff
    for p in profiles:
        ok = (np.all(np.diff(p.slopes) >= 0)
              and p.base_slope <= p.slopes[0]
              and p.slopes[-1] <= p.tail_slope
              and np.all(p.slopes >= 0) and np.all(p.slopes <= cap)
              and 0.0 <= p.base_slope and p.tail_slope <= cap
              and eval_pen(p, 0.0) == 0.0
              and p.cumulative[0] == p.base_slope * p.breakpoints[0]
              and all(eval_pen(p, float(b)) == float(c)
                      for b, c in zip(p.breakpoints, p.cumulative)))
        if not ok:
            return CheckResult(
                "profile_legality", "fail", measured=float(np.max(p.slopes)),
                allowed=cap, witness={"anchor": int(p.anchor)})
    return CheckResult("profile_legality", "pass", allowed=cap,
                       note=f"{len(profiles)} profiles, cap L+eps = {cap!r}")


def check_schedule_laws(schedule: ScaleSchedule, epsilon: float) -> CheckResult:
    """Ratio bound, monotone ratios, 3 eps_{k-2} <= eps_{k-1}, exact reconstruction."""
    s = schedule
    bound = epsilon / (3.0 * (s.L_eff + epsilon))
    law = [math.ldexp(s.r_star, min(k - s.k_ref, 0))
           for k in range(s.k_min + 1, s.k_max + 1)]
    checks = {
        "ratio_bound": bool(np.all(s.ratio <= bound) and np.all(s.ratio <= s.r_star)),
        "ratio_monotone": bool(np.all(np.diff(s.ratio) >= 0)),
        "triple_gap": bool(np.all(3.0 * s.eps[:-2] <= s.eps[1:-1])),
        "reconstruction": bool(np.all(s.eps[:-1] == s.ratio * s.eps[1:])),
        "generation_law": bool(np.array_equal(s.ratio, np.array(law))),
        "r_star_sixth": s.r_star <= 1.0 / 6.0,
    }
    bad = [k for k, v in checks.items() if not v]
    if bad:
        return CheckResult("schedule_laws", "fail",
                           witness={"violated": bad, "k_min": s.k_min, "k_max": s.k_max})
    return CheckResult("schedule_laws", "pass",
                       note=f"{len(s.eps)} scales, r_star={s.r_star!r}")


def check_localization(instance: MetricInstance, schedule: ScaleSchedule,
                       field: ExtensionField,
                       profiles: list[PenalizationProfile]) -> CheckResult:
    """Localized evaluation equals the full infimum bitwise on every query.

    Also verifies the exclusion margin: anchors outside the localization ball
    sit at least eps_{k-1} L / 3 above the minimum.
    """
    L = instance.lipschitz_L
    tol = _ineq_tol(instance)
    T = instance.distances(instance.subset, field.queries)
    phi = instance.values[:, None] + _pen_matrix(_stack_profiles(profiles), T)
    d_xbar = instance.distance_matrix()[np.ix_(instance.subset, instance.subset)]
    worst_margin = math.inf
    worst_wit = None
    fallbacks = 0
    for qi, y in enumerate(field.queries):
        drow = instance.distance_matrix()[instance.subset, y]
        near = int(np.argmin(drow))
        cand = np.flatnonzero(drow == drow[near])
        near = int(cand[np.argmin(instance.subset[cand])])
        xbar = int(instance.subset[near])
        got, info = extend_localized(instance, schedule, int(y), xbar,
                                     profiles=profiles, detail=True)
        if got != float(field.values[qi]):
            return CheckResult(
                "localization", "fail", measured=got,
                allowed=float(field.values[qi]),
                witness={"query": int(y), "xbar": xbar,
                         "localized": got, "full": float(field.values[qi])})
        if info["fallback"]:
            fallbacks += 1
            continue
        k = info["localization"]["k"]
        excluded = np.flatnonzero(d_xbar[:, near] >= schedule.eps_at(k))
        if len(excluded):
            margins = phi[excluded, qi] - (field.values[qi]
                                           + schedule.eps_at(k - 1) * L / 3.0)
            m = float(margins.min())
            if m < worst_margin:
                worst_margin = m
                worst_wit = {"query": int(y), "xbar": xbar, "k": int(k),
                             "anchor": int(instance.subset[excluded[np.argmin(margins)]])}
    note = f"{fallbacks} fallback evaluations" if fallbacks else ""
    if worst_wit is not None and worst_margin < -tol:
        return CheckResult("localization", "fail", measured=worst_margin,
                           allowed=-tol, tolerance=tol, witness=worst_wit,
                           note="exclusion margin violated; " + note)
    measured = None if worst_wit is None else worst_margin
    return CheckResult("localization", "pass", measured=measured,
                       tolerance=tol, note=note)


def check_locality_preservation(instance: MetricInstance, field: ExtensionField,
                                x_bar: int, r_bar: float, xi: float) -> CheckResult:
    """Lip(f, B_r(x_bar)) <= Lip(g, C within B_rbar(x_bar)) + xi at the scheduled r."""
    if field.schedule is None:
        return CheckResult("locality_preservation", "skipped",
                           note="constant extension: local constants are zero")
    k, r = locality_radius(field.schedule, r_bar, xi, instance.lipschitz_L)
    ball_q = np.flatnonzero(instance.distance_matrix()[x_bar, field.queries] < r)
    members, first = np.unique(field.queries[ball_q], return_index=True)
    lhs = lip_constant(instance, field.values[ball_q[first]], members)
    cball = ball_members(instance, x_bar, r_bar, instance.subset)
    rhs = lip_constant(instance, instance.g_at(cball), cball) + xi
    slack = INEQ_RTOL * max(1.0, instance.lipschitz_L)
    status = "pass" if lhs <= rhs + slack else "fail"
    witness = {"x_bar": int(x_bar), "k": int(k), "r": float(r),
               "lip_f": float(lhs), "lip_g_plus_xi": float(rhs),
               "ball_points": int(len(members))}
    return CheckResult("locality_preservation", status, measured=float(lhs),
                       allowed=float(rhs + slack), tolerance=slack, witness=witness)


def check_inf_family(instance: MetricInstance, family: np.ndarray, members,
                     L: float) -> CheckResult:
    """A pointwise min of L-Lipschitz arrays on ``members`` is L-Lipschitz."""
    members = np.asarray(members, dtype=np.intp)
    family = np.asarray(family, dtype=float)
    if family.ndim != 2 or family.shape[1] != len(members):
        raise ParameterError("family must be (n_functions, len(members))")
    slack = INEQ_RTOL * max(1.0, L)
    for row in range(family.shape[0]):
        got = lip_constant(instance, family[row], members)
        if got > L + slack:
            return CheckResult(
                "inf_family", "skipped", measured=float(got), allowed=L + slack,
                witness={"member": row},
                note="precondition violated: family member exceeds the constant")
    got = lip_constant(instance, family.min(axis=0), members)
    status = "pass" if got <= L + slack else "fail"
    return CheckResult("inf_family", status, measured=float(got),
                       allowed=L + slack, tolerance=slack,
                       witness={"n_functions": int(family.shape[0])})


def mcshane_comparison(instance: MetricInstance, r_list, epsilon: float,
                       field: ExtensionField | None = None,
                       centers=None) -> dict:
    """Side-by-side radius profiles of the McShane extension and the paper field.

    Returns a report fragment: per center, the local-constant profile of the
    plain L-cone envelope against the penalized extension's profile.
    """
    r_list = np.asarray(r_list, dtype=float)
    if field is None:
        from .extension import schedule_for_instance
        allpts = np.arange(instance.n, dtype=np.intp)
        if instance.lipschitz_computed == 0.0:
            field = extend(instance, None, allpts)
        else:
            sch = schedule_for_instance(instance, epsilon)
            field = extend(instance, sch, allpts)
    domain, first = np.unique(field.queries, return_index=True)
    fvals = field.values[first]
    ms = mcshane_upper_many(instance, instance.lipschitz_L, domain)
    if centers is None:
        centers = [c for c in instance.subset if c in set(domain.tolist())]
    rows = []
    for c in np.asarray(centers, dtype=np.intp):
        p_ms = lipa_profile(instance, domain, ms, int(c), r_list)
        p_f = lipa_profile(instance, domain, fvals, int(c), r_list)
        rows.append({"center": int(c), "radii": r_list.tolist(),
                     "mcshane": p_ms.constants.tolist(),
                     "extension": p_f.constants.tolist(),
                     "gap": (p_ms.constants - p_f.constants).tolist()})
    return {"epsilon": float(epsilon), "centers": rows}


def run_suite(instance: MetricInstance, epsilon: float, *, xi: float = 0.1,
              r_bar: float | None = None, mcshane_radii=None, seed: int = 0,
              threads: int = 1, _corrupt_field: bool = False) -> VerificationReport:
    """Full check battery over one instance.

    Builds the schedule (deep enough for the locality conditions), extends to
    every point, and runs each check; the cone-versus-penalized profile
    comparison is attached as an informational fragment.  ``_corrupt_field``
    is a test hook that perturbs one extension value so the failure path can
    be exercised end to end.
    """
    if not (isinstance(epsilon, (int, float)) and epsilon > 0 and math.isfinite(epsilon)):
        raise ParameterError("epsilon must be a positive finite real")
    if not xi > 0:
        raise ParameterError("xi must be positive")
    queries = np.arange(instance.n, dtype=np.intp)
    dd = instance.distance_matrix()
    pos = dd[dd > 0]
    if r_bar is None:
        r_bar = float(np.quantile(pos, 0.25)) if len(pos) else 1.0
    if mcshane_radii is None:
        qs = [float(np.quantile(pos, q)) for q in (0.25, 0.5, 0.75)] if len(pos) else [1.0]
        mcshane_radii = sorted(set(qs))
    params = {"epsilon": float(epsilon), "xi": float(xi), "r_bar": float(r_bar),
              "seed": int(seed)}

    def _maybe_corrupt(fld: ExtensionField) -> ExtensionField:
        if not _corrupt_field:
            return fld
        vals = fld.values.copy()
        vals[0] += 0.5 * instance.check_scale() + 1.0
        from dataclasses import replace
        return replace(fld, values=vals)

    L = instance.lipschitz_L
    if instance.lipschitz_computed == 0.0:
        field = _maybe_corrupt(extend(instance, None, queries, threads=threads))
        checks = [
            check_restriction(field, instance),
            check_global_lipschitz(field, instance, L + epsilon, seed=seed),
            check_envelope_sandwich(field, instance, L + epsilon),
            CheckResult("schedule_laws", "skipped", note="constant data: no schedule"),
            CheckResult("profile_legality", "skipped", note="constant data: no profiles"),
            CheckResult("step2_lower_bound", "skipped", note="constant data"),
            CheckResult("localization", "skipped", note="constant data"),
            check_locality_preservation(instance, field, int(instance.subset[0]),
                                        r_bar, xi),
            CheckResult("inf_family", "skipped", note="constant data"),
        ]
        frag = mcshane_comparison(instance, mcshane_radii, epsilon, field=field)
        return VerificationReport(checks=checks, params=params,
                                  schedule_triples=None,
                                  fragments={"mcshane_comparison": frag})

    schedule, _, _ = schedule_with_locality(instance, epsilon, r_bar, xi, queries)
    profiles = build_profiles(instance, schedule)
    field = _maybe_corrupt(
        extend(instance, schedule, queries, profiles=profiles, threads=threads))
    budget = L + schedule.eps_eff

    phi_family = (instance.values[:, None]
                  + _pen_matrix(_stack_profiles(profiles),
                                instance.distances(instance.subset, queries)))

    locality_results = [
        check_locality_preservation(instance, field, int(xb), r_bar, xi)
        for xb in instance.subset
    ]
    loc_worst = min(locality_results,
                    key=lambda c: (c.passed, -(c.measured or 0.0)))
    loc = CheckResult("locality_preservation", loc_worst.status,
                      measured=loc_worst.measured, allowed=loc_worst.allowed,
                      tolerance=loc_worst.tolerance, witness=loc_worst.witness,
                      note=f"worst of {len(locality_results)} centers")

    checks = [
        check_schedule_laws(schedule, float(epsilon)),
        check_profile_legality(profiles, schedule),
        check_restriction(field, instance),
        check_global_lipschitz(field, instance, budget, seed=seed),
        check_envelope_sandwich(field, instance, budget),
        check_step2(instance, profiles, schedule),
        check_localization(instance, schedule, field, profiles),
        loc,
        check_inf_family(instance, phi_family, queries, budget),
    ]
    frag = mcshane_comparison(instance, mcshane_radii, epsilon, field=field)
    return VerificationReport(checks=checks, params=params,
                              schedule_triples=schedule.to_triples(),
                              fragments={"mcshane_comparison": frag})
