use graphnls::line::{best_quotient_line, vbar, vbar_slope};
use graphnls::phase::{first_integral, integrate, PhaseState};
use proptest::prelude::*;

fn max_drift(v: f64, u: f64, h: f64) -> f64 {
    let t = integrate(&PhaseState::new(v, u, 3.0), 20.0, h).unwrap();
    let h0 = first_integral(v, u, 3.0);
    t.samples
        .iter()
        .map(|s| (first_integral(s.v, s.u, 3.0) - h0).abs())
        .fold(0.0, f64::max)
}

fn flow(v: f64, u: f64, s: f64) -> (f64, f64) {
    let e = integrate(&PhaseState::new(v, u, 3.0), s, 1e-3).unwrap().last();
    (e.v, e.u)
}

#[test]
fn drift_shrinks_at_fourth_order() {
    for (v, u) in [(0.6, 0.2), (1.3, -0.1), (0.8, 0.3)] {
        let coarse = max_drift(v, u, 0.05);
        let fine = max_drift(v, u, 0.025);
        assert!(coarse / fine >= 8.0, "({v}, {u}): {coarse:.3e} -> {fine:.3e}");
    }
}

#[test]
fn soliton_solves_the_profile_equation() {
    for p in [2.5, 3.0, 4.0] {
        let d = 1e-3;
        for k in -400..=400 {
            let s = k as f64 * 0.01;
            let v = |x: f64| vbar(x, p).unwrap();
            let d2 = (v(s - d) - 2.0 * v(s) + v(s + d)) / (d * d);
            let r = -d2 + v(s) - v(s).powf(p - 1.0);
            assert!(r.abs() < 1e-6, "p = {p}, s = {s}: {r:.2e}");
        }
    }
}

#[test]
fn line_constant_is_continuous_in_p() {
    let mut prev = best_quotient_line(2.01).unwrap();
    for k in 1..=599 {
        let p = 2.01 + k as f64 * 0.01;
        let q = best_quotient_line(p).unwrap();
        assert!(q.is_finite() && (q - prev).abs() < 0.05, "p = {p}: {prev} -> {q}");
        prev = q;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_integral_is_conserved(v in -3.0f64..3.0, u in -3.0f64..3.0) {
        prop_assert!(max_drift(v, u, 1e-3) < 1e-9);
    }

    #[test]
    fn flow_is_time_reversible(v in 0.55f64..1.45, u in -0.2f64..0.2, s in 0.1f64..5.0) {
        let (v1, u1) = flow(v, u, s);
        let (v2, u2) = flow(v1, -u1, s);
        prop_assert!((v2 - v).abs() < 1e-10 && (u2 + u).abs() < 1e-10);
    }

    /// Along the orbit from `(0, d)`, `|(v, u)|² = d² + 2v² - (2/3)|v|³ ≥ d²`
    /// while `|v| ≤ 3`.
    #[test]
    fn half_line_orbits_return_and_avoid_origin(d in 0.01f64..=2.0) {
        let t = integrate(&PhaseState::new(0.0, d, 3.0), 60.0, 1e-3).unwrap();
        let ret = t.zero_crossings().into_iter().find(|e| e.direction == -1);
        prop_assert!(ret.is_some());
        let ret = ret.unwrap();
        prop_assert!((ret.u + d).abs() < 1e-6);
        let closest = t
            .samples
            .iter()
            .filter(|s| s.s <= ret.s)
            .map(|s| s.v.hypot(s.u))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(closest >= d * (1.0 - 1e-9), "{} < {}", closest, d);
    }

    #[test]
    fn soliton_lies_on_zero_level(s in -12.0f64..12.0, p in 2.2f64..8.0) {
        let h = first_integral(vbar(s, p).unwrap(), vbar_slope(s, p).unwrap(), p);
        prop_assert!(h.abs() < 1e-12);
    }
}
