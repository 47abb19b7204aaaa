use graphnls::line::{apex_value, vbar};
use graphnls::phase::{integrate, PhaseState};
use graphnls::shooting::{bounded_branches, bounded_branches_with, ray_branches, slope_bound, BranchOptions};
use proptest::prelude::*;

const P: f64 = 3.0;
const LENGTHS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];
const VALUES: [f64; 5] = [0.2, 0.5, 0.9, 1.2, 1.45];

fn rk4(y: [f64; 2], h: f64) -> [f64; 2] {
    let f = |y: [f64; 2]| [y[1], y[0] - y[0].abs() * y[0]];
    let k1 = f(y);
    let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

struct Shot {
    end: f64,
    min_v: f64,
    max_v: f64,
    maxima: usize,
}

fn shoot(a: f64, s: f64, length: f64) -> Shot {
    let n = (length / 1e-3).round() as usize;
    let h = length / n as f64;
    let mut y = [a, s];
    let (mut min_v, mut max_v, mut maxima) = (a, a, 0);
    for k in 0..n {
        let next = rk4(y, h);
        min_v = min_v.min(next[0]);
        max_v = max_v.max(next[0]);
        if k + 1 < n && y[1] > 0.0 && next[1] <= 0.0 {
            maxima += 1;
        }
        y = next;
    }
    Shot {
        end: y[0],
        min_v,
        max_v,
        maxima,
    }
}

/// Brute-force branch set: every sign change of `v(ℓ)` over a wide slope
/// window, bisected, filtered by non-negativity and the amplitude cap.
fn oracle(length: f64, a: f64) -> Vec<(f64, usize)> {
    let cap = 3.0 * apex_value(P).unwrap();
    let (s_max, n) = (8.0, 4000);
    let grid: Vec<f64> = (0..=n).map(|k| -s_max + 2.0 * s_max * k as f64 / n as f64).collect();
    let ends: Vec<f64> = grid.iter().map(|&s| shoot(a, s, length).end).collect();
    let mut out = Vec::new();
    for k in 0..n {
        if ends[k] * ends[k + 1] >= 0.0 {
            continue;
        }
        let (mut lo, mut hi, f_lo) = (grid[k], grid[k + 1], ends[k]);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (shoot(a, mid, length).end > 0.0) == (f_lo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let shot = shoot(a, s, length);
        if shot.end.abs() < 1e-8 && shot.min_v >= -1e-9 && shot.max_v <= cap {
            out.push((s, shot.maxima));
        }
    }
    out
}

#[test]
fn bounded_branches_match_brute_force_scan() {
    let mut total = 0;
    for &l in &LENGTHS {
        for &a in &VALUES {
            let found = bounded_branches(l, a, P, 3).unwrap();
            let expected = oracle(l, a);
            total += expected.len();
            assert_eq!(found.len(), expected.len(), "ℓ = {l}, a = {a}: {found:?} vs {expected:?}");
            for (b, (s, bumps)) in found.iter().zip(&expected) {
                assert!((b.inward_slope - s).abs() < 1e-6, "ℓ = {l}, a = {a}: {} vs {s}", b.inward_slope);
                assert_eq!(b.bump_count, *bumps, "ℓ = {l}, a = {a}");
            }
        }
    }
    assert!(total >= 25, "{total}");
}

#[test]
fn scan_window_contains_every_oracle_branch() {
    let cap = 3.0 * apex_value(P).unwrap();
    for l in [1.0, 5.0] {
        for a in [0.05, 0.5] {
            let bound = slope_bound(a, P, l, cap);
            assert!(bound < 8.0);
            let found = oracle(l, a);
            assert!(!found.is_empty());
            assert!(found.iter().all(|(s, _)| s.abs() <= bound), "ℓ = {l}, a = {a}: {found:?} vs {bound}");
        }
    }
}

#[test]
fn branches_land_at_half_step_and_keep_bump_counts() {
    let fine = BranchOptions {
        step: 5e-4,
        ..BranchOptions::default()
    };
    for &l in &LENGTHS {
        for &a in &VALUES {
            let coarse = bounded_branches(l, a, P, 3).unwrap();
            for b in &coarse {
                let t = integrate(&PhaseState::new(a, b.inward_slope, P), l, 5e-4).unwrap();
                assert!(t.last().v.abs() < 1e-8, "ℓ = {l}, a = {a}: v(ℓ) = {}", t.last().v);
            }
            let refined = bounded_branches_with(l, a, P, &fine).unwrap();
            let counts: Vec<usize> = coarse.iter().map(|b| b.bump_count).collect();
            let fine_counts: Vec<usize> = refined.iter().map(|b| b.bump_count).collect();
            assert_eq!(counts, fine_counts, "ℓ = {l}, a = {a}");
        }
    }
}

fn soliton_offset(a: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vbar(mid, P).unwrap() > a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ray_profiles_are_translated_solitons(a in 0.01f64..1.499) {
        let s0 = soliton_offset(a);
        for b in ray_branches(a, P).unwrap() {
            let dir = if b.inward_slope < 0.0 { 1.0 } else { -1.0 };
            for smp in b.profile.iter().step_by(37) {
                let expect = vbar(dir * smp.s + s0, P).unwrap();
                prop_assert!((smp.v - expect).abs() < 1e-8, "a = {}, s = {}: {} vs {}", a, smp.s, smp.v, expect);
            }
        }
    }
}
