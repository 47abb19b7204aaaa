//! Admissible non-negative solution branches of `-v'' + v = v^{p-1}` on a
//! single edge, seen from its inner endpoint.
//!
//! A branch is fixed by the vertex value `a` and the inward slope `s` (the
//! derivative at the inner vertex taken into the edge). On a bounded edge of
//! length `ℓ` the branch must land on `v(ℓ) = 0` without changing sign; on a
//! ray it must decay, which forces it onto the heteroclinic `H = 0`.
//!
//! Non-negative branches on bounded edges have at most one interior
//! maximum: landing at zero needs `H = u(ℓ)² > 0`, i.e. an outer orbit,
//! and the positive part of an outer orbit is a single arc.

use serde::Serialize;

use crate::error::{check_exponent, Error, Result};
use crate::graph::EdgeLength;
use crate::line;
use crate::phase::{self, first_integral, odd_power, rk4_step, PhaseState, Sample};
use crate::quadrature;

/// Slopes closer than this are the same branch.
pub const SLOPE_DEDUP: f64 = 1e-8;
/// Profiles may dip this far below zero and still count as non-negative.
pub const NONNEG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchOptions {
    /// RK4 step for bounded edges.
    pub step: f64,
    /// Sampling step of ray profiles (these are evaluated in closed form).
    pub ray_step: f64,
    /// Slope samples in the scan window `[-S_max, S_max]`.
    pub scan_points: usize,
    /// Cap on the profile maximum; `None` means three times the apex value.
    pub amplitude_cap: Option<f64>,
    /// Required landing accuracy `|v(ℓ)|`.
    pub landing_tol: f64,
    pub max_bumps: usize,
    /// Return the zero function when `a = 0` on a ray.
    pub include_trivial: bool,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            step: 1e-3,
            ray_step: 1e-2,
            scan_points: 400,
            amplitude_cap: None,
            landing_tol: 1e-10,
            max_bumps: 3,
            include_trivial: false,
        }
    }
}

impl BranchOptions {
    pub fn amplitude_cap(&self, p: f64) -> f64 {
        self.amplitude_cap
            .unwrap_or_else(|| 3.0 * (p / 2.0).powf(1.0 / (p - 2.0)))
    }
}

/// One admissible edge solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeBranch {
    pub edge_id: String,
    pub length: EdgeLength,
    pub vertex_value: f64,
    pub inward_slope: f64,
    pub bump_count: usize,
    /// `(x, v, u)` samples from the inner vertex; `s` is the distance.
    pub profile: Vec<Sample>,
    /// `|v(ℓ)|` for bounded edges, `|H|` on rays.
    pub residual: f64,
}

impl EdgeBranch {
    pub fn with_edge_id(mut self, id: &str) -> Self {
        id.clone_into(&mut self.edge_id);
        self
    }

    pub fn slope_sign(&self) -> i8 {
        if self.inward_slope.abs() <= 1e-12 {
            0
        } else if self.inward_slope > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn is_ray(&self) -> bool {
        self.length.is_infinite()
    }

    /// `(∫ (v'² + v²), ∫ |v|^p)` over the edge.
    pub fn moments(&self, p: f64, step: f64) -> (f64, f64) {
        match self.length {
            EdgeLength::Infinite => ray_moments(self.vertex_value, self.inward_slope, p),
            EdgeLength::Finite(l) => bounded_moments(self.vertex_value, self.inward_slope, l, p, step),
        }
    }
}

fn ray_moments(a: f64, slope: f64, p: f64) -> (f64, f64) {
    if a <= 0.0 {
        return (0.0, 0.0);
    }
    let s0 = line::soliton_position(a, p);
    let start = if slope > 0.0 { -s0 } else { s0 };
    let tail = tail_position(p);
    let energy = |s: f64| {
        let v = line::vbar_unchecked(s, p);
        let d = line::vbar_slope_unchecked(s, p);
        d * d + v * v
    };
    let mass = |s: f64| line::vbar_unchecked(s, p).powf(p);
    let mut e = 0.0;
    let mut m = 0.0;
    let mut pieces = vec![];
    if start < 0.0 {
        pieces.push((start, 0.0));
        pieces.push((0.0, tail));
    } else if start < tail {
        pieces.push((start, tail));
    }
    for (lo, hi) in pieces {
        e += quadrature::integrate(energy, lo, hi, 1e-15, 1e-13).value;
        m += quadrature::integrate(mass, lo, hi, 1e-15, 1e-13).value;
    }
    (e, m)
}

/// Arclength past which `v̄` is below `1e-10` of its apex.
pub(crate) fn tail_position(p: f64) -> f64 {
    let apex = (p / 2.0).powf(1.0 / (p - 2.0));
    line::soliton_position(1e-10 * apex, p)
}

fn bounded_moments(a: f64, s: f64, l: f64, p: f64, step: f64) -> (f64, f64) {
    let n = phase::step_plan(l, step);
    let f = |y: &[f64; 4]| {
        [
            y[1],
            y[0] - odd_power(y[0], p),
            y[1] * y[1] + y[0] * y[0],
            y[0].abs().powf(p),
        ]
    };
    let mut y = [a, s, 0.0, 0.0];
    for i in 0..n {
        let h = if i + 1 == n { l - i as f64 * step } else { step };
        y = rk4_step(&y, h, &f);
    }
    (y[2], y[3])
}

/// Outcome of integrating one bounded edge without storing samples.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Landing {
    pub v: f64,
    pub u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub maxima: usize,
}

pub(crate) fn land(v0: f64, u0: f64, arc: f64, step: f64, p: f64) -> Landing {
    let n = phase::step_plan(arc, step);
    let f = |y: &[f64; 2]| phase::field(y, p);
    let mut y = [v0, u0];
    let mut out = Landing {
        v: v0,
        u: u0,
        min_v: v0,
        max_v: v0,
        maxima: 0,
    };
    for i in 0..n {
        let h = if i + 1 == n { arc - i as f64 * step } else { step };
        let prev_u = y[1];
        y = rk4_step(&y, h, &f);
        if !(y[0].is_finite() && y[1].is_finite()) {
            out.v = f64::NAN;
            out.u = f64::NAN;
            return out;
        }
        out.min_v = out.min_v.min(y[0]);
        out.max_v = out.max_v.max(y[0]);
        if i + 1 < n && prev_u > 0.0 && y[1] <= 0.0 {
            out.maxima += 1;
        }
    }
    out.v = y[0];
    out.u = y[1];
    out
}

fn count_interior_maxima(samples: &[Sample]) -> usize {
    let n = samples.len();
    samples
        .windows(2)
        .enumerate()
        .filter(|(i, w)| *i + 2 < n && w[0].u > 0.0 && w[1].u <= 0.0)
        .count()
}

/// Branches on a ray attached at a vertex with value `a`.
///
/// Zero entries for `a > apex`, one (slope 0) at the apex, otherwise two
/// with slopes `±d(a)`: the negative one decays monotonically, the positive
/// one climbs to the apex first.
pub fn ray_branches(a: f64, p: f64) -> Result<Vec<EdgeBranch>> {
    ray_branches_with(a, p, &BranchOptions::default())
}

pub fn ray_branches_with(a: f64, p: f64, opts: &BranchOptions) -> Result<Vec<EdgeBranch>> {
    check_exponent(p)?;
    if a.is_nan() || a < 0.0 {
        return Err(Error::OutOfRange(format!("vertex value {a} must be ≥ 0")));
    }
    let apex = line::apex_value(p)?;
    if a == 0.0 {
        if !opts.include_trivial {
            return Ok(vec![]);
        }
        return Ok(vec![EdgeBranch {
            edge_id: String::new(),
            length: EdgeLength::Infinite,
            vertex_value: 0.0,
            inward_slope: 0.0,
            bump_count: 0,
            profile: vec![Sample { s: 0.0, v: 0.0, u: 0.0 }],
            residual: 0.0,
        }]);
    }
    // allow for rounding right at the apex
    if a > apex * (1.0 + 1e-14) {
        return Ok(vec![]);
    }
    let a = a.min(apex);
    let d = line::heteroclinic_slope_unchecked(a, p);
    let slopes: Vec<f64> = if d == 0.0 { vec![0.0] } else { vec![-d, d] };
    Ok(slopes
        .into_iter()
        .map(|s| ray_branch(a, s, p, opts.ray_step))
        .collect())
}

/// Ray branch through `(a, slope)` along the soliton, sampled in closed form.
pub(crate) fn ray_branch(a: f64, slope: f64, p: f64, step: f64) -> EdgeBranch {
    let s0 = line::soliton_position(a, p);
    let offset = if slope > 0.0 { -s0 } else { s0 };
    let end = tail_position(p) - offset;
    let n = (end / step).ceil() as usize;
    let mut profile: Vec<Sample> = (0..=n)
        .map(|i| {
            let x = i as f64 * step;
            Sample {
                s: x,
                v: line::vbar_unchecked(x + offset, p),
                u: line::vbar_slope_unchecked(x + offset, p),
            }
        })
        .collect();
    profile[0] = Sample { s: 0.0, v: a, u: slope };
    EdgeBranch {
        edge_id: String::new(),
        length: EdgeLength::Infinite,
        vertex_value: a,
        inward_slope: slope,
        bump_count: usize::from(slope > 0.0),
        profile,
        residual: first_integral(a, slope, p).abs(),
    }
}

/// Upper bound on the inward slope of any admissible bounded branch whose
/// profile stays below `cap`.
///
/// Branches with an interior maximum live on orbits with
/// `H ≤ H_max = max(0, (2/p)A^p - A²)`, so `s² ≤ H_max + a²`. Monotone
/// branches cross `[0, a]` in time `ℓ` with speed at least
/// `√(s² - a²)`, so `s² ≤ a²/ℓ² + a²`. Both are below
/// `max(H_max, a²/ℓ²) + A²`.
pub fn slope_bound(a: f64, p: f64, length: f64, cap: f64) -> f64 {
    let h_max = (2.0 / p * cap.powf(p) - cap * cap).max(0.0);
    (h_max.max(a * a / (length * length)) + cap * cap).sqrt()
}

/// Branches on a bounded edge of length `ℓ` with at most `max_bumps`
/// interior maxima, using default options otherwise.
pub fn bounded_branches(length: f64, a: f64, p: f64, max_bumps: usize) -> Result<Vec<EdgeBranch>> {
    let opts = BranchOptions {
        max_bumps,
        ..BranchOptions::default()
    };
    bounded_branches_with(length, a, p, &opts)
}

/// Scan the inward slope over `[-S_max, S_max]`, bracket sign changes of
/// the landing value `v(ℓ)`, bisect, and keep non-negative profiles.
pub fn bounded_branches_with(
    length: f64,
    a: f64,
    p: f64,
    opts: &BranchOptions,
) -> Result<Vec<EdgeBranch>> {
    check_exponent(p)?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::OutOfRange(format!("edge length {length}")));
    }
    if a.is_nan() || a < 0.0 {
        return Err(Error::OutOfRange(format!("vertex value {a} must be ≥ 0")));
    }
    let cap = opts.amplitude_cap(p);
    if a > cap {
        return Ok(vec![]);
    }
    let s_max = slope_bound(a, p, length, cap);
    let n = opts.scan_points.max(2);
    let landing = |s: f64| land(a, s, length, opts.step, p).v;
    let grid: Vec<f64> = (0..=n)
        .map(|k| -s_max + 2.0 * s_max * k as f64 / n as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&s| landing(s)).collect();

    let mut roots = Vec::new();
    for k in 0..n {
        let (f0, f1) = (values[k], values[k + 1]);
        if f0 == 0.0 {
            roots.push(grid[k]);
        }
        if f0 * f1 < 0.0 {
            if let Some(r) = bisect(&landing, grid[k], grid[k + 1], f0, opts.landing_tol) {
                roots.push(r);
            }
        }
    }
    if values[n] == 0.0 {
        roots.push(grid[n]);
    }

    let mut out: Vec<EdgeBranch> = Vec::new();
    for s in roots {
        let Some(b) = admissible_bounded(length, a, s, p, opts) else {
            continue;
        };
        out.push(b);
    }
    out.sort_by(|x, y| x.inward_slope.total_cmp(&y.inward_slope));
    out.dedup_by(|x, y| (x.inward_slope - y.inward_slope).abs() <= SLOPE_DEDUP);
    Ok(out)
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> Option<f64> {
    let mut best = (f64::INFINITY, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < best.0 {
            best = (fm.abs(), mid);
        }
        if fm == 0.0 || hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    (best.0 < tol).then_some(best.1)
}

/// Full profile through `(a, s)` if it lands, stays non-negative and obeys
/// the amplitude and bump limits.
pub(crate) fn admissible_bounded(
    length: f64,
    a: f64,
    s: f64,
    p: f64,
    opts: &BranchOptions,
) -> Option<EdgeBranch> {
    let traj = phase::integrate(&PhaseState::new(a, s, p), length, opts.step.min(length)).ok()?;
    let end = traj.last();
    if end.v.abs() >= opts.landing_tol {
        return None;
    }
    let (lo, hi) = traj
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.v), hi.max(x.v)));
    if lo < -NONNEG_TOL || hi > opts.amplitude_cap(p) {
        return None;
    }
    let bumps = count_interior_maxima(&traj.samples);
    if bumps > opts.max_bumps {
        return None;
    }
    Some(EdgeBranch {
        edge_id: String::new(),
        length: EdgeLength::Finite(length),
        vertex_value: a,
        inward_slope: s,
        bump_count: bumps,
        profile: traj.samples,
        residual: end.v.abs(),
    })
}

/// Re-solve `v(ℓ) = 0` near a known slope; used to polish slopes obtained
/// by shooting from the far end.
pub(crate) fn polish_slope(length: f64, a: f64, s: f64, p: f64, step: f64, tol: f64) -> f64 {
    let f = |s: f64| land(a, s, length, step, p).v;
    let f0 = f(s);
    if f0.abs() < tol * 1e-2 {
        return s;
    }
    let mut delta = 1e-9 * s.abs().max(1e-3);
    for _ in 0..40 {
        for other in [s - delta, s + delta] {
            let f1 = f(other);
            if f0 * f1 <= 0.0 {
                let (lo, hi, flo) = if other < s { (other, s, f1) } else { (s, other, f0) };
                if let Some(r) = bisect(&f, lo, hi, flo, tol) {
                    return r;
                }
            }
        }
        delta *= 4.0;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_branch_counts() {
        let apex = ray_branches(1.5, 3.0).unwrap();
        assert_eq!(apex.len(), 1);
        assert_eq!(apex[0].inward_slope, 0.0);
        assert_eq!(apex[0].bump_count, 0);
        let two = ray_branches(1.0, 3.0).unwrap();
        assert_eq!(two.len(), 2);
        let d = (1.0f64 / 3.0).sqrt();
        assert!((two[0].inward_slope + d).abs() < 1e-15);
        assert!((two[1].inward_slope - d).abs() < 1e-15);
        assert_eq!(two[0].bump_count, 0);
        assert_eq!(two[1].bump_count, 1);
        let top = two[1].profile.iter().map(|s| s.v).fold(0.0, f64::max);
        assert!((top - 1.5).abs() < 1e-4);
        assert!(ray_branches(2.0, 3.0).unwrap().is_empty());
        assert!(ray_branches(0.0, 3.0).unwrap().is_empty());
        assert!(ray_branches(-0.1, 3.0).is_err());
        let trivial = ray_branches_with(
            0.0,
            3.0,
            &BranchOptions {
                include_trivial: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(trivial.len(), 1);
    }

    #[test]
    fn ray_profiles_follow_translated_soliton() {
        for b in ray_branches(0.4, 3.0).unwrap() {
            let s0 = line::soliton_position(0.4, 3.0);
            let shift = if b.inward_slope > 0.0 { -s0 } else { s0 };
            for smp in b.profile.iter().step_by(37) {
                let exact = line::vbar(smp.s + shift, 3.0).unwrap();
                assert!((smp.v - exact).abs() < 1e-8);
            }
            assert!(b.residual < 1e-14);
            assert_eq!(b.profile[0].v, 0.4);
        }
    }

    #[test]
    fn zero_vertex_value_includes_zero_branch() {
        for l in [0.5, 2.0] {
            let bs = bounded_branches(l, 0.0, 3.0, 3).unwrap();
            assert!(bs.iter().any(|b| b.inward_slope == 0.0 && b.bump_count == 0));
        }
    }

    #[test]
    fn long_edge_has_rising_branch() {
        let bs = bounded_branches(5.0, 0.05, 3.0, 3).unwrap();
        let rising: Vec<_> = bs.iter().filter(|b| b.inward_slope > 0.0).collect();
        assert!(!rising.is_empty());
        for b in rising {
            assert_eq!(b.bump_count, 1);
            assert!(b.residual < 1e-10);
        }
    }

    #[test]
    fn short_edge_monotone_branch_is_steep() {
        let bs = bounded_branches(1.0, 0.05, 3.0, 3).unwrap();
        let mono: Vec<_> = bs.iter().filter(|b| b.inward_slope < 0.0).collect();
        assert_eq!(mono.len(), 1);
        assert_eq!(mono[0].bump_count, 0);
        let d = line::heteroclinic_slope(0.05, 3.0).unwrap();
        assert!(mono[0].inward_slope.abs() > d);
        assert!(mono[0].profile.iter().all(|s| s.v >= -NONNEG_TOL));
    }

    #[test]
    fn slope_bound_formula() {
        let cap = 4.5f64;
        let expected = (cap * cap * (2.0 / 3.0 * cap - 1.0).max(0.0) + cap * cap).sqrt();
        assert!((slope_bound(0.0, 3.0, 1.0, cap) - expected).abs() < 1e-12);
        let mut prev = 0.0;
        for cap in [0.5, 1.0, 1.5, 2.0, 4.0, 8.0] {
            let s = slope_bound(0.3, 3.0, 2.0, cap);
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bounded_branches(0.0, 0.1, 3.0, 3).is_err());
        assert!(bounded_branches(1.0, -0.1, 3.0, 3).is_err());
        assert!(bounded_branches(1.0, 0.1, 2.0, 3).is_err());
    }

    #[test]
    fn moments_satisfy_energy_identity_for_rays() {
        // on a full soliton split at its apex, each half carries half the mass
        let b = &ray_branches(1.5, 3.0).unwrap()[0];
        let (e, m) = b.moments(3.0, 1e-3);
        assert!((m - 3.6).abs() < 1e-10);
        assert!((e - 3.6).abs() < 1e-10);
        let bs = ray_branches(0.7, 3.0).unwrap();
        let total: f64 = bs.iter().map(|b| b.moments(3.0, 1e-3).1).sum();
        assert!((total - 7.2).abs() < 1e-10);
    }
}
