//! The planar system `v' = u, u' = v - |v|^{p-2} v` and its first integral
//! `H(v, u) = u² - v² + (2/p)|v|^p`.
//!
//! Phase portrait: a saddle at the origin, centres at `(±1, 0)` with
//! `H = -1 + 2/p`, two heteroclinic loops on `H = 0` (the solitons `±v̄`),
//! periodic orbits around each centre for `H < 0` and periodic orbits
//! enclosing all three equilibria for `H > 0`.

use serde::Serialize;

use crate::error::{check_exponent, Error, Result};
use crate::line;
use crate::quadrature;

/// `|v|^{p-2} v`, evaluated as `sign(v)|v|^{p-1}`.
#[inline]
pub fn odd_power(v: f64, p: f64) -> f64 {
    let m = p - 1.0;
    let a = v.abs();
    let mag = if m == m.round() && m < 32.0 {
        a.powi(m as i32)
    } else {
        a.powf(m)
    };
    mag.copysign(v)
}

#[inline]
pub fn first_integral(v: f64, u: f64, p: f64) -> f64 {
    let a = v.abs();
    let ap = if p == p.round() && p < 32.0 {
        a.powi(p as i32)
    } else {
        a.powf(p)
    };
    u * u - v * v + 2.0 / p * ap
}

/// First-integral value at the centres `(±1, 0)`.
pub fn center_level(p: f64) -> f64 {
    -1.0 + 2.0 / p
}

/// One classical RK4 step for an autonomous system whose first component
/// is `v`. A step that changes the sign of `v` is redone as two steps
/// meeting near `v = 0`, where `|v|^{p-2} v` is not smooth; without this
/// the step loses fourth order.
#[inline]
pub(crate) fn rk4_step<const N: usize, F>(y: &[f64; N], h: f64, f: &F) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let next = rk4_plain(y, h, f);
    if y[0] * next[0] >= 0.0 {
        return next;
    }
    let t = h * y[0] / (y[0] - next[0]);
    let mid = rk4_plain(y, t, f);
    rk4_plain(&mid, h - t, f)
}

#[inline]
fn rk4_plain<const N: usize, F>(y: &[f64; N], h: f64, f: &F) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let axpy = |base: &[f64; N], k: &[f64; N], c: f64| {
        let mut out = *base;
        for i in 0..N {
            out[i] += c * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&axpy(y, &k1, 0.5 * h));
    let k3 = f(&axpy(y, &k2, 0.5 * h));
    let k4 = f(&axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
pub(crate) fn field(y: &[f64; 2], p: f64) -> [f64; 2] {
    [y[1], y[0] - odd_power(y[0], p)]
}

/// Number of RK4 steps covering `arc`; the last one is shortened so the
/// final sample lands exactly on `arc`.
pub(crate) fn step_plan(arc: f64, step: f64) -> usize {
    ((arc / step - 1e-9).ceil() as usize).max(1)
}

/// A point of the phase plane with its first-integral value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseState {
    pub v: f64,
    pub u: f64,
    pub p: f64,
    pub h: f64,
}

impl PhaseState {
    pub fn new(v: f64, u: f64, p: f64) -> Self {
        PhaseState {
            v,
            u,
            p,
            h: first_integral(v, u, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub s: f64,
    pub v: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub p: f64,
    pub samples: Vec<Sample>,
    /// `|H(end) - H(start)|`.
    pub drift: f64,
}

/// Crossing of a level by `v` (or of 0 by `u`), located by cubic Hermite
/// interpolation between samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub s: f64,
    pub v: f64,
    pub u: f64,
    /// +1 for an upward crossing, -1 for downward.
    pub direction: i8,
}

fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

fn hermite_root(y0: f64, d0: f64, y1: f64, d1: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    let f_lo = y0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = hermite(y0, d0, y1, d1, h, mid);
        if (fm > 0.0) == (f_lo > 0.0) && fm != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Trajectory {
    pub fn last(&self) -> Sample {
        *self.samples.last().expect("trajectory has samples")
    }

    fn events<G, D>(&self, value: G, slope: D) -> Vec<Event>
    where
        G: Fn(&Sample) -> f64,
        D: Fn(&Sample) -> f64,
    {
        let mut out = Vec::new();
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (ga, gb) = (value(a), value(b));
            let crosses = (ga < 0.0 && gb >= 0.0) || (ga > 0.0 && gb <= 0.0);
            if !crosses || (gb == 0.0 && ga == 0.0) {
                continue;
            }
            let h = b.s - a.s;
            let t = if gb == 0.0 {
                1.0
            } else {
                hermite_root(ga, slope(a), gb, slope(b), h)
            };
            let v = hermite(a.v, a.u, b.v, b.u, h, t);
            let u = hermite(
                a.u,
                a.v - odd_power(a.v, self.p),
                b.u,
                b.v - odd_power(b.v, self.p),
                h,
                t,
            );
            out.push(Event {
                s: a.s + t * h,
                v,
                u,
                direction: if gb > ga { 1 } else { -1 },
            });
        }
        out
    }

    /// Crossings of `v = level` after the first sample.
    pub fn level_crossings(&self, level: f64) -> Vec<Event> {
        self.events(|s| s.v - level, |s| s.u)
    }

    pub fn zero_crossings(&self) -> Vec<Event> {
        self.level_crossings(0.0)
    }

    /// Turning points `u = 0`; `direction = -1` marks a maximum of `v`.
    pub fn turning_points(&self) -> Vec<Event> {
        let p = self.p;
        self.events(|s| s.u, move |s| s.v - odd_power(s.v, p))
    }

    /// First time the orbit comes back through the starting value of `v`
    /// moving in the starting direction.
    pub fn return_time(&self) -> Option<f64> {
        let first = self.samples.first()?;
        let dir = if first.u >= 0.0 { 1 } else { -1 };
        self.level_crossings(first.v)
            .into_iter()
            .find(|e| e.direction == dir && e.s > 0.0)
            .map(|e| e.s)
    }
}

/// Fixed-step RK4 from `start` over `[0, arc]`.
pub fn integrate(start: &PhaseState, arc: f64, step: f64) -> Result<Trajectory> {
    check_exponent(start.p)?;
    if !(arc > 0.0 && step > 0.0 && step <= arc) {
        return Err(Error::OutOfRange(format!(
            "need 0 < step ≤ arc, got step {step}, arc {arc}"
        )));
    }
    let p = start.p;
    let n = step_plan(arc, step);
    let mut samples = Vec::with_capacity(n + 1);
    let mut y = [start.v, start.u];
    samples.push(Sample {
        s: 0.0,
        v: y[0],
        u: y[1],
    });
    let f = |y: &[f64; 2]| field(y, p);
    for i in 0..n {
        let s0 = i as f64 * step;
        let h = if i + 1 == n { arc - s0 } else { step };
        y = rk4_step(&y, h, &f);
        let s = if i + 1 == n { arc } else { s0 + h };
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::BlowUp { arc: s });
        }
        samples.push(Sample { s, v: y[0], u: y[1] });
    }
    let drift = (first_integral(y[0], y[1], p) - start.h).abs();
    Ok(Trajectory {
        p,
        samples,
        drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitClass {
    OriginEquilibrium,
    CenterEquilibrium,
    Heteroclinic,
    InnerPeriodic,
    OuterPeriodic,
}

impl OrbitClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OrbitClass::OriginEquilibrium => "origin_equilibrium",
            OrbitClass::CenterEquilibrium => "center_equilibrium",
            OrbitClass::Heteroclinic => "heteroclinic",
            OrbitClass::InnerPeriodic => "inner_periodic",
            OrbitClass::OuterPeriodic => "outer_periodic",
        }
    }
}

const LEVEL_TOL: f64 = 1e-12;

pub fn classify_orbit(state: &PhaseState) -> OrbitClass {
    let h = first_integral(state.v, state.u, state.p);
    if state.v.abs() <= LEVEL_TOL && state.u.abs() <= LEVEL_TOL {
        OrbitClass::OriginEquilibrium
    } else if h.abs() <= LEVEL_TOL {
        OrbitClass::Heteroclinic
    } else if h < 0.0 {
        if h - center_level(state.p) <= LEVEL_TOL {
            OrbitClass::CenterEquilibrium
        } else {
            OrbitClass::InnerPeriodic
        }
    } else {
        OrbitClass::OuterPeriodic
    }
}

/// Positive root of `(2/p) v^p - v² = level` on `[lo, hi]`, where the left
/// side is monotone.
fn turning_root(level: f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = |v: f64| 2.0 / p * v.powf(p) - v * v - level;
    let increasing = g(hi) > g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Turning points `(v_min, v_max)` of the periodic orbit at `level`
/// (`v_min = -v_max` for outer orbits).
pub fn turning_points(level: f64, p: f64) -> Option<(f64, f64)> {
    let hc = center_level(p);
    if level <= hc || level == 0.0 || !level.is_finite() {
        return None;
    }
    let apex = (p / 2.0).powf(1.0 / (p - 2.0));
    if level < 0.0 {
        let v1 = turning_root(level, p, 0.0, 1.0);
        let v2 = turning_root(level, p, 1.0, apex);
        Some((v1, v2))
    } else {
        let mut hi = 2.0 * apex;
        while 2.0 / p * hi.powf(p) - hi * hi < level {
            hi *= 2.0;
        }
        let v = turning_root(level, p, apex, hi);
        Some((-v, v))
    }
}

/// Period of the closed orbit with `H = level`; `None` off the periodic range.
///
/// `ds = dv/u` is integrated between the turning points with the
/// substitution `v = m - r cos θ`, which removes the inverse-square-root
/// endpoint singularities.
pub fn period(level: f64, p: f64) -> Option<f64> {
    check_exponent(p).ok()?;
    let (lo, hi) = turning_points(level, p)?;
    let m = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let (glo, ghi) = (2.0 / p * lo.abs().powf(p) - lo * lo, 2.0 / p * hi.powf(p) - hi * hi);
    debug_assert!((glo - level).abs() < 1e-9 && (ghi - level).abs() < 1e-9);
    let integrand = |theta: f64| {
        let v = m - r * theta.cos();
        let u2 = level + v * v - 2.0 / p * v.abs().powf(p);
        if u2 <= 0.0 {
            return 0.0;
        }
        r * theta.sin() / u2.sqrt()
    };
    let q = quadrature::integrate(integrand, 0.0, std::f64::consts::PI, 1e-12, 1e-12);
    Some(2.0 * q.value)
}

/// Layout of an emitted phase portrait.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortraitSpec {
    pub step: f64,
    /// Inner orbit levels as fractions of the centre level `-1 + 2/p`.
    pub inner_fractions: Vec<f64>,
    /// Outer orbit levels `H > 0`.
    pub outer_levels: Vec<f64>,
    /// Half-length of the plotted heteroclinic arc.
    pub heteroclinic_half_arc: f64,
}

impl Default for PortraitSpec {
    fn default() -> Self {
        PortraitSpec {
            step: 1e-3,
            inner_fractions: vec![0.75, 0.5, 0.25],
            outer_levels: vec![0.02, 0.09, 0.3],
            heteroclinic_half_arc: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortraitRow {
    pub orbit_id: String,
    pub s: f64,
    pub v: f64,
    pub u: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub class: OrbitClass,
}

fn trajectory_rows(id: &str, traj: &Trajectory, class: OrbitClass, out: &mut Vec<PortraitRow>) {
    for smp in &traj.samples {
        out.push(PortraitRow {
            orbit_id: id.to_owned(),
            s: smp.s,
            v: smp.v,
            u: smp.u,
            h: first_integral(smp.v, smp.u, traj.p),
            class,
        });
    }
}

/// Sampled orbits: the three equilibria, both heteroclinics, inner orbits
/// around each centre and outer orbits.
pub fn emit_phase_portrait(p: f64, spec: &PortraitSpec) -> Result<Vec<PortraitRow>> {
    check_exponent(p)?;
    let mut rows = Vec::new();
    for (id, v) in [("origin", 0.0), ("center+", 1.0), ("center-", -1.0)] {
        let st = PhaseState::new(v, 0.0, p);
        rows.push(PortraitRow {
            orbit_id: id.to_owned(),
            s: 0.0,
            v,
            u: 0.0,
            h: st.h,
            class: classify_orbit(&st),
        });
    }
    let n = (2.0 * spec.heteroclinic_half_arc / spec.step).round() as usize;
    for (id, sign) in [("heteroclinic+", 1.0), ("heteroclinic-", -1.0)] {
        for i in 0..=n {
            let s = -spec.heteroclinic_half_arc + i as f64 * spec.step;
            let v = sign * line::vbar_unchecked(s, p);
            let u = sign * line::vbar_slope_unchecked(s, p);
            rows.push(PortraitRow {
                orbit_id: id.to_owned(),
                s: s + spec.heteroclinic_half_arc,
                v,
                u,
                h: first_integral(v, u, p),
                class: OrbitClass::Heteroclinic,
            });
        }
    }
    let hc = center_level(p);
    for (k, frac) in spec.inner_fractions.iter().enumerate() {
        let level = hc * frac;
        let (_, v2) = turning_points(level, p)
            .ok_or_else(|| Error::OutOfRange(format!("inner level {level}")))?;
        let t = period(level, p).expect("periodic level");
        for (side, sign) in [("+", 1.0), ("-", -1.0)] {
            let traj = integrate(&PhaseState::new(sign * v2, 0.0, p), t, spec.step)?;
            trajectory_rows(&format!("inner{side}{k}"), &traj, OrbitClass::InnerPeriodic, &mut rows);
        }
    }
    for (k, &level) in spec.outer_levels.iter().enumerate() {
        let t = period(level, p)
            .ok_or_else(|| Error::OutOfRange(format!("outer level {level}")))?;
        let traj = integrate(&PhaseState::new(0.0, level.sqrt(), p), t, spec.step)?;
        trajectory_rows(&format!("outer{k}"), &traj, OrbitClass::OuterPeriodic, &mut rows);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_is_stationary() {
        let t = integrate(&PhaseState::new(1.0, 0.0, 3.0), 10.0, 1e-3).unwrap();
        assert!(t.samples.iter().all(|s| s.v == 1.0 && s.u == 0.0));
        assert_eq!(t.last().s, 10.0);
    }

    #[test]
    fn apex_start_follows_soliton() {
        let t = integrate(&PhaseState::new(1.5, 0.0, 3.0), 10.0, 1e-3).unwrap();
        let end = t.last();
        let exact = line::vbar(10.0, 3.0).unwrap();
        assert!((end.v - exact).abs() < 1e-7, "{} vs {}", end.v, exact);
        assert!(end.u < 0.0);
    }

    #[test]
    fn last_step_is_shortened() {
        let t = integrate(&PhaseState::new(0.2, 0.1, 3.0), 1.0005, 1e-3).unwrap();
        assert_eq!(t.last().s, 1.0005);
        assert_eq!(t.samples.len(), 1002);
        let t = integrate(&PhaseState::new(0.2, 0.1, 3.0), 2.0, 1e-3).unwrap();
        assert_eq!(t.samples.len(), 2001);
        assert!(integrate(&PhaseState::new(0.2, 0.1, 3.0), 1.0, 2.0).is_err());
        assert!(integrate(&PhaseState::new(0.2, 0.1, 2.0), 1.0, 0.1).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        // p < 1-ish growth is impossible here; force overflow with a huge start
        let err = integrate(&PhaseState::new(1e100, 0.0, 5.0), 1.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn outer_orbit_returns() {
        let t = integrate(&PhaseState::new(0.0, 0.3, 3.0), 30.0, 1e-3).unwrap();
        let zeros = t.zero_crossings();
        assert!(zeros.len() >= 2);
        assert!((zeros[0].u + 0.3).abs() < 1e-8);
        let period_time = t.return_time().unwrap();
        assert!((period_time - zeros[1].s).abs() < 1e-9);
        let min_dist = t
            .samples
            .iter()
            .take_while(|s| s.s <= period_time)
            .map(|s| s.v.abs() + s.u.abs())
            .fold(f64::INFINITY, f64::min);
        assert!(min_dist > 0.25);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_orbit(&PhaseState::new(0.0, 0.0, 3.0)), OrbitClass::OriginEquilibrium);
        let c = PhaseState::new(1.0, 0.0, 3.0);
        assert_eq!(classify_orbit(&c), OrbitClass::CenterEquilibrium);
        assert!((c.h + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(classify_orbit(&PhaseState::new(-1.0, 0.0, 3.0)), OrbitClass::CenterEquilibrium);
        assert_eq!(classify_orbit(&PhaseState::new(0.0, 0.3, 3.0)), OrbitClass::OuterPeriodic);
        assert_eq!(classify_orbit(&PhaseState::new(1.5, 0.0, 3.0)), OrbitClass::Heteroclinic);
        assert_eq!(classify_orbit(&PhaseState::new(1.2, 0.0, 3.0)), OrbitClass::InnerPeriodic);
    }

    #[test]
    fn period_limits_and_agreement() {
        assert_eq!(period(0.0, 3.0), None);
        assert_eq!(period(center_level(3.0), 3.0), None);
        assert_eq!(period(-0.5, 3.0), None);
        // linearisation at the centre: ω² = p - 2
        let near = period(center_level(3.0) * (1.0 - 1e-8), 3.0).unwrap();
        assert!((near - 2.0 * std::f64::consts::PI).abs() < 1e-3, "{near}");
        let near4 = period(center_level(4.0) * (1.0 - 1e-8), 4.0).unwrap();
        assert!((near4 - 2.0 * std::f64::consts::PI / 2f64.sqrt()).abs() < 1e-3);
        let t = integrate(&PhaseState::new(0.0, 0.3, 3.0), 30.0, 1e-3).unwrap();
        let measured = t.return_time().unwrap();
        assert!((period(0.09, 3.0).unwrap() - measured).abs() < 1e-4);
    }

    #[test]
    fn inner_period_matches_event_detection() {
        let level = center_level(3.0) * 0.5;
        let (_, v2) = turning_points(level, 3.0).unwrap();
        let t = integrate(&PhaseState::new(v2, 0.0, 3.0), 20.0, 1e-3).unwrap();
        let maxima: Vec<_> = t.turning_points().into_iter().filter(|e| e.direction == -1).collect();
        let measured = maxima[0].s;
        assert!((period(level, 3.0).unwrap() - measured).abs() < 1e-6);
    }

    #[test]
    fn portrait_conserves_level() {
        let rows = emit_phase_portrait(3.0, &PortraitSpec::default()).unwrap();
        let mut start_level = std::collections::BTreeMap::new();
        for r in &rows {
            let h0 = *start_level.entry(r.orbit_id.clone()).or_insert(r.h);
            assert!((r.h - h0).abs() < 1e-8, "{} {}", r.orbit_id, r.h - h0);
        }
        assert!(rows.iter().any(|r| r.class == OrbitClass::CenterEquilibrium && r.v == -1.0));
        assert!(rows.iter().any(|r| r.class == OrbitClass::CenterEquilibrium && r.v == 1.0));
        assert!(rows.iter().any(|r| r.orbit_id == "heteroclinic+"));
        let outer = rows
            .iter()
            .find(|r| r.orbit_id == "outer1" && r.s == 0.0)
            .unwrap();
        assert_eq!((outer.v, outer.u), (0.0, 0.3));
        assert_eq!(outer.class, OrbitClass::OuterPeriodic);
        let inner_ids: std::collections::BTreeSet<_> = rows
            .iter()
            .filter(|r| r.class == OrbitClass::InnerPeriodic)
            .map(|r| r.orbit_id.clone())
            .collect();
        assert_eq!(inner_ids.len(), 6);
    }
}
