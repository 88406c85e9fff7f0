"""Classical forced hard-impact oscillator.

Between impacts x'' = -(k/m) x + (A_f/m) sin(w t) is solved in closed form.
Impacts at x = x_w reverse the velocity, v+ = -r v-.  A zero-velocity contact
while the net force pushes into the wall is a sticking phase: the mass rests
on the wall until the force reverses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ResonantForcing, StuckAtWall

MAX_IMPACTS_PER_PERIOD = 10**6


@dataclass(frozen=True)
class ImpactParams:
    k: float = 1.0
    m: float = 1.0
    x_w: float = 1.0
    A_f: float = 0.0
    omega_f: float = 1.0
    r: float = 0.95

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ValueError("restitution r must lie in (0, 1]")
        if not (self.k > 0 and self.m > 0):
            raise ValueError("k and m must be positive")
        if self.A_f != 0 and abs(self.omega_f - self.omega0) < 1e-12:
            raise ResonantForcing("forcing at the natural frequency")

    @property
    def omega0(self) -> float:
        return math.sqrt(self.k / self.m)

    @property
    def B(self) -> float:
        """Amplitude of the particular solution B sin(w t)."""
        if self.A_f == 0:
            return 0.0
        return self.A_f / (self.m * (self.omega0**2 - self.omega_f**2))

    @property
    def period(self) -> float:
        w = self.omega_f if self.A_f != 0 else self.omega0
        return 2 * math.pi / w

    def accel(self, x, t):
        return -(self.k / self.m) * x + (self.A_f / self.m) * np.sin(self.omega_f * t)

    def energy(self, x, v):
        return 0.5 * self.m * v * v + 0.5 * self.k * x * x


@dataclass(frozen=True)
class ClassicalState:
    x: float
    v: float
    t: float = 0.0


class _Segment:
    """Closed-form free flight from (x0, v0) at t0."""

    def __init__(self, p: ImpactParams, x0: float, v0: float, t0: float):
        self.p, self.t0 = p, t0
        w, wf, B = p.omega0, p.omega_f, p.B
        self.C = x0 - B * math.sin(wf * t0)
        self.D = (v0 - B * wf * math.cos(wf * t0)) / w

    def x(self, t):
        p = self.p
        s = p.omega0 * (t - self.t0)
        return self.C * np.cos(s) + self.D * np.sin(s) + p.B * np.sin(p.omega_f * t)

    def v(self, t):
        p = self.p
        w = p.omega0
        s = w * (t - self.t0)
        return w * (-self.C * np.sin(s) + self.D * np.cos(s)) + p.B * p.omega_f * np.cos(p.omega_f * t)


def _newton_polish(seg: _Segment, t: float, x_w: float, lo: float, hi: float) -> float:
    for _ in range(3):
        v = float(seg.v(t))
        if v == 0.0:
            break
        tn = t - (float(seg.x(t)) - x_w) / v
        if not lo <= tn <= hi:
            break
        t = tn
    return t


def _next_impact(seg: _Segment, x_w: float, t_start: float, t_end: float, h: float):
    """First time in (t_start, t_end] at which x crosses x_w from below, or None.

    The segment is scanned on a sub-grid of spacing h; a velocity sign change
    inside an interval (a local maximum of x) is resolved so brief excursions
    past the wall are not missed.
    """
    n = max(1, int(math.ceil((t_end - t_start) / h)))
    ts = np.linspace(t_start, t_end, n + 1)
    # touches within eps of the wall are grazing contacts, not impacts
    eps = 1e-12 * max(1.0, abs(x_w))
    g = seg.x(ts) - x_w - eps
    vs = seg.v(ts)
    for i in range(n):
        a, b = ts[i], ts[i + 1]
        ga, gb = g[i], g[i + 1]
        hi = None
        if ga < 0 < gb:
            hi = b
        elif ga < 0 and vs[i] > 0 > vs[i + 1]:
            tm = brentq(seg.v, a, b, xtol=1e-15)
            if seg.x(tm) - x_w - eps > 0:
                hi = tm
        if hi is not None:
            if seg.x(a) - x_w >= 0:
                return a
            t = brentq(lambda s: seg.x(s) - x_w, a, hi, xtol=1e-15)
            return _newton_polish(seg, t, x_w, a, hi)
    return None


@dataclass(frozen=True, eq=False)
class ImpactTrajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    impact_times: np.ndarray
    impact_velocities: np.ndarray      # v- at each impact
    stick_time: float = 0.0


def _release_time(p: ImpactParams, t0: float, t_end: float, h: float) -> float | None:
    """First time the net wall-normal force on a resting mass becomes negative."""
    n = max(1, int(math.ceil((t_end - t0) / h)))
    ts = np.linspace(t0, t_end, n + 1)
    a = p.accel(p.x_w, ts)
    neg = np.flatnonzero(a < 0)
    if neg.size == 0:
        return None
    i = int(neg[0])
    if i == 0:
        return t0
    return brentq(lambda s: p.accel(p.x_w, s), ts[i - 1], ts[i], xtol=1e-15)


class _Flow:
    """Event-driven integrator shared by simulation and Lyapunov estimation."""

    def __init__(self, p: ImpactParams, ic: ClassicalState, samples_per_period: int = 64,
                 stick_tol: float = 1e-9):
        if ic.x > p.x_w:
            raise ValueError("initial position beyond the wall")
        self.p = p
        self.h = p.period / samples_per_period
        self.stick_v = stick_tol * max(1.0, abs(p.x_w) * p.omega0, abs(p.B) * p.omega_f)
        self.x, self.v, self.t = ic.x, ic.v, ic.t

    def advance(self, t_target: float, on_impact=None, on_flight=None):
        """Integrate to t_target; yields impacts through ``on_impact(t, v_minus, a)``."""
        p = self.p
        count_period_start = self.t
        count = 0
        stick = 0.0
        while self.t < t_target:
            if self.x >= p.x_w and abs(self.v) <= self.stick_v and p.accel(p.x_w, self.t) >= 0:
                tr = _release_time(p, self.t, min(t_target, self.t + 2 * p.period + self.h), self.h)
                if tr is None:
                    if self.t + 2 * p.period < t_target:
                        raise StuckAtWall(f"mass pinned to the wall from t={self.t:.6g}")
                    tr = t_target
                stick += tr - self.t
                if on_flight is not None:
                    on_flight(self.t, tr, None)
                self.x, self.v, self.t = p.x_w, 0.0, tr
                continue
            seg = _Segment(p, self.x, self.v, self.t)
            ti = _next_impact(seg, p.x_w, self.t, t_target, self.h)
            if ti is None:
                if on_flight is not None:
                    on_flight(self.t, t_target, seg)
                self.x, self.v, self.t = float(seg.x(t_target)), float(seg.v(t_target)), t_target
                break
            if on_flight is not None:
                on_flight(self.t, ti, seg)
            vm = float(seg.v(ti))
            a = float(p.accel(p.x_w, ti))
            vp = -p.r * vm
            if on_impact is not None:
                on_impact(ti, vm, a)
            self.x, self.v, self.t = p.x_w, vp, ti
            if abs(vp) <= self.stick_v:
                self.v = 0.0
            if ti - count_period_start > p.period:
                count_period_start, count = ti, 0
            count += 1
            if count > MAX_IMPACTS_PER_PERIOD:
                raise StuckAtWall(f"more than {MAX_IMPACTS_PER_PERIOD} impacts in one period")
        return stick


def simulate_impact(params: ImpactParams, ic: ClassicalState, T: float,
                    samples_per_period: int = 64) -> ImpactTrajectory:
    """Trajectory on a uniform output grid of ``samples_per_period`` points per
    forcing period, plus the exact impact times and pre-impact velocities."""
    if not T > 0:
        raise ValueError("T must be positive")
    flow = _Flow(params, ic, samples_per_period)
    h = flow.h
    n = int(math.floor(T / h + 1e-9))
    ts = ic.t + h * np.arange(n + 1)
    xs = np.empty(n + 1)
    vs = np.empty(n + 1)
    xs[0], vs[0] = ic.x, ic.v
    imp_t, imp_v = [], []
    stick = 0.0
    for i in range(1, n + 1):
        stick += flow.advance(ts[i], on_impact=lambda t, vm, a: (imp_t.append(t), imp_v.append(vm)))
        xs[i], vs[i] = min(flow.x, params.x_w), flow.v
    return ImpactTrajectory(ts, xs, vs, np.array(imp_t), np.array(imp_v), stick)


def _flow_matrix(w: float, dt: float) -> np.ndarray:
    c, s = math.cos(w * dt), math.sin(w * dt)
    return np.array([[c, s / w], [-w * s, c]])


def saltation_matrix(r: float, v_minus: float, a: float) -> np.ndarray:
    """Jump of the tangent map across an impact v+ = -r v- at x = x_w."""
    return np.array([[-r, 0.0], [(1 + r) * a / v_minus, -r]])


def lyapunov_classical(params: ImpactParams, ic: ClassicalState, T: float,
                       transient: float = 0.2, renorm_periods: float = 1.0) -> float:
    """Largest exponent from tangent dynamics with saltation at impacts.

    The first ``transient`` fraction of T is integrated but not averaged.
    A sticking phase annihilates perturbations and yields -inf.
    """
    p = params
    flow = _Flow(p, ic)
    w = p.omega0
    u = np.array([1.0, 0.0])
    state = {"u": u, "dead": False}

    def on_flight(t0, t1, seg):
        if seg is None:
            state["dead"] = True
        else:
            state["u"] = _flow_matrix(w, t1 - t0) @ state["u"]

    def on_impact(t, vm, a):
        state["u"] = saltation_matrix(p.r, vm, a) @ state["u"]

    tau = renorm_periods * p.period
    n = int(round(T / tau))
    n_skip = int(transient * n)
    acc = 0.0
    t = ic.t
    for j in range(n):
        t += tau
        flow.advance(t, on_impact, on_flight)
        if state["dead"]:
            return -math.inf
        d = float(np.linalg.norm(state["u"]))
        state["u"] = state["u"] / d
        if j >= n_skip:
            acc += math.log(d)
    return acc / ((n - n_skip) * tau)


def strobe_classical(params: ImpactParams, ic: ClassicalState, n_periods: int,
                     n_skip: int) -> tuple[np.ndarray, ClassicalState]:
    """x at t = ic.t + j*T_f for j = n_skip+1..n_periods, and the final state."""
    flow = _Flow(params, ic)
    out = []
    for j in range(1, n_periods + 1):
        flow.advance(ic.t + j * params.period)
        if j > n_skip:
            out.append(flow.x)
    return np.array(out), ClassicalState(flow.x, flow.v, flow.t)


@dataclass(frozen=True, eq=False)
class ClassicalBifurcation:
    x_w: np.ndarray
    samples: list = field(default_factory=list)
    lyapunov: np.ndarray = None

    def spread(self) -> np.ndarray:
        return np.array([np.ptp(s) if len(s) else np.nan for s in self.samples])


def periodic_ic(params: ImpactParams) -> ClassicalState:
    """Start on the impact-free periodic orbit x = B sin(w t)."""
    return ClassicalState(0.0, params.B * params.omega_f, 0.0)


def bifurcation_classical(x_w_values, params: ImpactParams, n_periods: int = 400,
                          n_skip: int = 200, lyap_periods: int = 400,
                          continuation: bool = True) -> ClassicalBifurcation:
    """Stroboscopic samples and lambda_max over wall positions.

    With ``continuation`` each point starts from the previous final state
    (clipped behind the new wall); otherwise, and whenever the continued start
    fails, from the impact-free periodic orbit."""
    from dataclasses import replace
    xs = np.asarray(x_w_values, dtype=float)
    if xs.size == 0:
        raise ValueError("empty x_w range")
    samples, lams = [], []
    prev = None
    for xw in xs:
        p = replace(params, x_w=float(xw))
        cold = periodic_ic(p)
        ic = cold
        if continuation and prev is not None:
            ic = ClassicalState(min(prev.x, p.x_w), prev.v if prev.x < p.x_w else -abs(prev.v), 0.0)
        try:
            s, prev = strobe_classical(p, ic, n_periods, n_skip)
        except StuckAtWall:
            s, prev = strobe_classical(p, cold, n_periods, n_skip)
            ic = cold
        samples.append(s)
        lams.append(lyapunov_classical(p, ic, lyap_periods * p.period))
    return ClassicalBifurcation(xs, samples, np.array(lams))
