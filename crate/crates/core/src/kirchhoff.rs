//! Kirchhoff matching on graphs with a single inner vertex.
//!
//! Every non-negative branch on a bounded edge with `a > 0` is the end of
//! an orbit leaving the Dirichlet vertex at `(v, u) = (0, σ)` with `σ > 0`.
//! Integrating from that end for the edge length traces the curve
//! `σ ↦ (a(σ), s(σ))` of all branches at once. The curve is split into
//! pieces on which `a(σ)` is monotone, so each piece is a graph over `a`.
//! Rays contribute the two heteroclinic pieces `s = ±d(a)`. Picking one
//! piece per edge gives a residual `R(a) = Σ s_i(a)` which is traced on an
//! `a`-grid, bracketed and bisected.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ray_with_pendants, EdgeLength, GraphClass, MetricGraph};
use crate::line;
use crate::phase::{self, first_integral, odd_power};
use crate::shooting::{self, BranchOptions, EdgeBranch, Landing, NONNEG_TOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_bumps: usize,
    /// Largest vertex value considered; `None` means the apex value when a
    /// ray is present and three times the apex otherwise.
    pub a_cap: Option<f64>,
    pub a_points: usize,
    /// Samples of the leaf slope `σ` per bounded edge.
    pub sigma_points: usize,
    /// Kirchhoff residual tolerance.
    pub tol: f64,
    pub branch: BranchOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_bumps: 3,
            a_cap: None,
            a_points: 2000,
            sigma_points: 4000,
            tol: 1e-8,
            branch: BranchOptions::default(),
        }
    }
}

impl SolveOptions {
    pub fn a_cap(&self, graph: &MetricGraph) -> f64 {
        let apex = (graph.p() / 2.0).powf(1.0 / (graph.p() - 2.0));
        self.a_cap
            .unwrap_or(if graph.has_ray() { apex } else { 3.0 * apex })
    }
}

/// Per-edge `(bump_count, slope_sign)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EdgeSignature {
    pub bump_count: usize,
    pub slope_sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Signature(pub Vec<EdgeSignature>);

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| {
                let sign = match e.slope_sign {
                    1 => '+',
                    -1 => '-',
                    _ => '0',
                };
                format!("{}{}", e.bump_count, sign)
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KirchhoffSolution {
    /// Id of the inner vertex.
    pub vertex: String,
    pub vertex_value: f64,
    /// One branch per edge, in graph edge order.
    pub branches: Vec<EdgeBranch>,
    pub kirchhoff_residual: f64,
    /// `∫ (v'² + v²)`.
    pub energy: f64,
    pub lp_norm_p: f64,
    pub quotient: f64,
    pub signature: Signature,
}

impl KirchhoffSolution {
    fn assemble(vertex: &str, a: f64, branches: Vec<EdgeBranch>, p: f64, step: f64) -> Self {
        let kirchhoff_residual = branches.iter().map(|b| b.inward_slope).sum::<f64>().abs();
        let (energy, lp_norm_p) = branches
            .iter()
            .map(|b| b.moments(p, step))
            .fold((0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1));
        let signature = Signature(
            branches
                .iter()
                .map(|b| EdgeSignature {
                    bump_count: b.bump_count,
                    slope_sign: b.slope_sign(),
                })
                .collect(),
        );
        KirchhoffSolution {
            vertex: vertex.to_owned(),
            vertex_value: a,
            branches,
            kirchhoff_residual,
            energy,
            lp_norm_p,
            quotient: energy / lp_norm_p.powf(2.0 / p),
            signature,
        }
    }

    /// Hand-built solution from explicit branches (no matching performed).
    pub fn from_branches(graph: &MetricGraph, branches: Vec<EdgeBranch>, step: f64) -> Result<Self> {
        let (vertex, _) = single_inner_vertex(graph)?;
        let a = branches.first().map_or(0.0, |b| b.vertex_value);
        Ok(Self::assemble(&vertex, a, branches, graph.p(), step))
    }
}

/// A branch piece along which `a` is monotone.
#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Ray { sign: f64 },
    Bounded {
        length: f64,
        /// `(σ, a, s)` sorted by increasing `a`.
        samples: Vec<(f64, f64, f64)>,
    },
}

impl Piece {
    fn a_range(&self, apex: f64) -> (f64, f64) {
        match self {
            Piece::Ray { .. } => (0.0, apex),
            Piece::Bounded { samples, .. } => (samples[0].1, samples[samples.len() - 1].1),
        }
    }

    fn label(&self, index: usize) -> String {
        match self {
            Piece::Ray { sign } if *sign > 0.0 => "ray+".to_owned(),
            Piece::Ray { .. } => "ray-".to_owned(),
            Piece::Bounded { samples, .. } => {
                let pos = samples.iter().any(|x| x.2 > 0.0);
                let neg = samples.iter().any(|x| x.2 < 0.0);
                let kind = match (neg, pos) {
                    (true, true) => "mixed",
                    (false, true) => "bump",
                    _ => "monotone",
                };
                format!("arc{index}:{kind}")
            }
        }
    }

    /// Linear interpolation of `s(a)` from the samples.
    fn interpolate(&self, a: f64, p: f64) -> f64 {
        match self {
            Piece::Ray { sign } => sign * line::heteroclinic_slope_unchecked(a, p),
            Piece::Bounded { samples, .. } => {
                let k = bracket_index(samples, a);
                let (x0, x1) = (samples[k], samples[k + 1]);
                if x1.1 == x0.1 {
                    return x0.2;
                }
                let t = ((a - x0.1) / (x1.1 - x0.1)).clamp(0.0, 1.0);
                x0.2 + t * (x1.2 - x0.2)
            }
        }
    }

    /// `(σ, s)` with `a(σ) = a` solved by bisection on `σ`.
    fn exact(&self, a: f64, p: f64, step: f64) -> (f64, f64) {
        match self {
            Piece::Ray { sign } => (0.0, sign * line::heteroclinic_slope_unchecked(a, p)),
            Piece::Bounded { length, samples } => {
                let k = bracket_index(samples, a);
                let (mut lo, mut hi) = (samples[k], samples[k + 1]);
                if a <= lo.1 {
                    return (lo.0, lo.2);
                }
                if a >= hi.1 {
                    return (hi.0, hi.2);
                }
                let mut best = lo;
                for _ in 0..100 {
                    let sigma = 0.5 * (lo.0 + hi.0);
                    if sigma == lo.0 || sigma == hi.0 {
                        break;
                    }
                    let l = sheet(sigma, *length, step, p);
                    let here = (sigma, l.v, -l.u);
                    if (here.1 - a).abs() < (best.1 - a).abs() {
                        best = here;
                    }
                    if here.1 == a {
                        break;
                    }
                    if here.1 < a {
                        lo = here;
                    } else {
                        hi = here;
                    }
                }
                (best.0, best.2)
            }
        }
    }
}

/// Index `k` with `samples[k].1 ≤ a ≤ samples[k+1].1` (clamped).
fn bracket_index(samples: &[(f64, f64, f64)], a: f64) -> usize {
    let n = samples.len();
    samples.partition_point(|x| x.1 <= a).clamp(1, n - 1) - 1
}

/// Integrate from the Dirichlet end `(0, σ)` across the whole edge.
fn sheet(sigma: f64, length: f64, step: f64, p: f64) -> Landing {
    shooting::land(0.0, sigma, length, step, p)
}

fn h_max(cap: f64, p: f64) -> f64 {
    (2.0 / p * cap.powf(p) - cap * cap).max(0.0)
}

/// Log-spaced then uniform grid on `(0, top]`.
fn mixed_grid(top: f64, n: usize) -> Vec<f64> {
    let n_log = n / 4;
    let n_lin = n - n_log;
    let knee = 0.05 * top;
    let bottom = 1e-4 * top;
    let mut g: Vec<f64> = (0..n_log)
        .map(|i| bottom * (knee / bottom).powf(i as f64 / n_log as f64))
        .collect();
    g.extend((0..n_lin).map(|i| knee + (top - knee) * (i as f64 + 1.0) / n_lin as f64));
    g
}

/// Monotone pieces of the branch curve of a bounded edge.
fn bounded_pieces(length: f64, p: f64, a_cap: f64, opts: &SolveOptions) -> Vec<Piece> {
    let amp = opts.branch.amplitude_cap(p);
    let step = opts.branch.step;
    let sigma_max = 1.05 * h_max(amp, p).max(a_cap * a_cap / (length * length) + h_max(a_cap, p)).sqrt();
    let sigmas = mixed_grid(sigma_max, opts.sigma_points.max(8));
    let samples: Vec<(f64, Landing)> = sigmas
        .par_iter()
        .map(|&sg| (sg, sheet(sg, length, step, p)))
        .collect();
    let admissible = |l: &Landing| {
        l.v.is_finite()
            && l.v > 0.0
            && l.v <= a_cap
            && l.min_v >= -NONNEG_TOL
            && l.max_v <= amp
            && l.maxima <= opts.max_bumps
    };
    let mut pieces = Vec::new();
    let mut run: Vec<(f64, f64, f64)> = Vec::new();
    let flush = |run: &mut Vec<(f64, f64, f64)>, pieces: &mut Vec<Piece>| {
        split_monotone(std::mem::take(run), length, pieces);
    };
    for (sg, l) in &samples {
        if admissible(l) {
            run.push((*sg, l.v, -l.u));
        } else {
            flush(&mut run, &mut pieces);
        }
    }
    flush(&mut run, &mut pieces);
    pieces
}

fn split_monotone(run: Vec<(f64, f64, f64)>, length: f64, out: &mut Vec<Piece>) {
    if run.len() < 2 {
        return;
    }
    let mut start = 0;
    let mut dir = 0.0f64;
    let emit = |lo: usize, hi: usize, out: &mut Vec<Piece>| {
        let mut s: Vec<_> = run[lo..=hi].to_vec();
        if s.len() < 2 {
            return;
        }
        s.sort_by(|x, y| x.1.total_cmp(&y.1));
        out.push(Piece::Bounded { length, samples: s });
    };
    for k in 1..run.len() {
        let d = run[k].1 - run[k - 1].1;
        if d == 0.0 {
            continue;
        }
        let sgn = d.signum();
        if dir != 0.0 && sgn != dir {
            emit(start, k - 1, out);
            start = k - 1;
        }
        dir = sgn;
    }
    emit(start, run.len() - 1, out);
}

struct EdgePieces {
    edge: usize,
    pieces: Vec<Piece>,
}

struct Problem {
    vertex: String,
    p: f64,
    apex: f64,
    a_cap: f64,
    edges: Vec<EdgePieces>,
    /// Edge ids, in graph order.
    ids: Vec<String>,
}

fn single_inner_vertex(graph: &MetricGraph) -> Result<(String, usize)> {
    let inner = graph.inner_vertices();
    match inner.as_slice() {
        [v] => Ok((graph.vertices()[*v].id.clone(), *v)),
        _ => Err(Error::Classification(format!(
            "Kirchhoff matching needs exactly one inner vertex, found {}",
            inner.len()
        ))),
    }
}

/// `Ok(None)` for a graph without inner vertex (a half-line or an interval).
fn build_problem(graph: &MetricGraph, opts: &SolveOptions) -> Result<Option<Problem>> {
    let class = graph.classify()?;
    if class == GraphClass::General {
        return Err(Error::Classification(
            "graph has more than one inner vertex; use the variational minimizer".into(),
        ));
    }
    if graph.inner_vertices().is_empty() {
        return Ok(None);
    }
    let (vertex, _) = single_inner_vertex(graph)?;
    let p = graph.p();
    let apex = line::apex_value(p)?;
    let a_cap = opts.a_cap(graph);
    let edges = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| EdgePieces {
            edge: i,
            pieces: match e.length {
                EdgeLength::Infinite => vec![Piece::Ray { sign: -1.0 }, Piece::Ray { sign: 1.0 }],
                EdgeLength::Finite(l) => bounded_pieces(l, p, a_cap, opts),
            },
        })
        .collect();
    Ok(Some(Problem {
        vertex,
        p,
        apex,
        a_cap,
        edges,
        ids: graph.edges().iter().map(|e| e.id.clone()).collect(),
    }))
}

/// Cartesian product of piece indices.
fn combinations(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in counts {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone)]
struct Trace {
    combo: Vec<usize>,
    domain: (f64, f64),
    r_min: f64,
    r_max: f64,
    min_abs: f64,
    min_rel: f64,
    roots: Vec<f64>,
    family: bool,
}

impl Problem {
    fn pieces(&self, combo: &[usize]) -> Vec<&Piece> {
        combo
            .iter()
            .zip(&self.edges)
            .map(|(&i, e)| &e.pieces[i])
            .collect()
    }

    fn domain(&self, combo: &[usize]) -> Option<(f64, f64)> {
        let (lo, hi) = self
            .pieces(combo)
            .iter()
            .map(|pc| pc.a_range(self.apex))
            .fold((0.0f64, self.a_cap), |(lo, hi), r| (lo.max(r.0), hi.min(r.1)));
        (lo < hi).then_some((lo, hi))
    }

    fn exact_r(&self, pieces: &[&Piece], a: f64, step: f64) -> (f64, f64) {
        pieces.iter().fold((0.0, 0.0), |(r, m), pc| {
            let s = pc.exact(a, self.p, step).1;
            (r + s, m + s.abs())
        })
    }

    fn trace(&self, combo: &[usize], grid: &[f64], opts: &SolveOptions) -> Option<Trace> {
        let (lo, hi) = self.domain(combo)?;
        let pieces = self.pieces(combo);
        let step = opts.branch.step;
        let mut pts: Vec<f64> = vec![lo.max(grid[0])];
        pts.extend(grid.iter().copied().filter(|&a| a > lo && a < hi));
        pts.push(hi);
        let interp: Vec<(f64, f64)> = pts
            .iter()
            .map(|&a| {
                pieces.iter().fold((0.0, 0.0), |(r, m), pc| {
                    let s = pc.interpolate(a, self.p);
                    (r + s, m + s.abs())
                })
            })
            .collect();
        let mut t = Trace {
            combo: combo.to_vec(),
            domain: (lo, hi),
            r_min: f64::INFINITY,
            r_max: f64::NEG_INFINITY,
            min_abs: f64::INFINITY,
            min_rel: f64::INFINITY,
            roots: vec![],
            family: false,
        };
        for &(r, m) in &interp {
            t.r_min = t.r_min.min(r);
            t.r_max = t.r_max.max(r);
            t.min_abs = t.min_abs.min(r.abs());
            if m > 0.0 {
                t.min_rel = t.min_rel.min(r.abs() / m);
            }
        }
        if pts.len() >= 3 && t.r_max.abs().max(t.r_min.abs()) <= opts.tol {
            t.family = true;
            return Some(t);
        }
        // near a = 0 every slope is O(a), so endpoint roots must also be
        // small relative to the slopes
        for &k in &[0, pts.len() - 1] {
            let (r, m) = self.exact_r(&pieces, pts[k], step);
            if r.abs() <= opts.tol && (m == 0.0 || r.abs() <= 1e-6 * m) {
                t.roots.push(pts[k]);
            }
        }
        let n = pts.len();
        let mut k = 0;
        while k + 1 < n {
            let (r0, r1) = (interp[k].0, interp[k + 1].0);
            if r0 * r1 < 0.0 {
                if let Some(root) = self.refine(&pieces, &pts, k, opts) {
                    t.roots.push(root);
                }
            }
            k += 1;
        }
        t.roots.sort_by(f64::total_cmp);
        t.roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-9);
        Some(t)
    }

    /// Confirm an interpolated sign change with exact values (widening to
    /// neighbouring grid points if needed) and bisect on `a`.
    fn refine(&self, pieces: &[&Piece], pts: &[f64], k: usize, opts: &SolveOptions) -> Option<f64> {
        let step = opts.branch.step;
        let n = pts.len();
        let candidates = [
            (k, k + 1),
            (k.saturating_sub(1), k + 1),
            (k, (k + 2).min(n - 1)),
            (k.saturating_sub(1), (k + 2).min(n - 1)),
        ];
        for (i, j) in candidates {
            let (mut lo, mut hi) = (pts[i], pts[j]);
            let mut r_lo = self.exact_r(pieces, lo, step).0;
            let r_hi = self.exact_r(pieces, hi, step).0;
            if r_lo == 0.0 {
                return Some(lo);
            }
            if r_hi == 0.0 {
                return Some(hi);
            }
            if r_lo * r_hi > 0.0 {
                continue;
            }
            let mut best = (r_lo.abs().min(r_hi.abs()), if r_lo.abs() < r_hi.abs() { lo } else { hi });
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let r = self.exact_r(pieces, mid, step).0;
                if r.abs() < best.0 {
                    best = (r.abs(), mid);
                }
                if r == 0.0 {
                    break;
                }
                if (r > 0.0) == (r_lo > 0.0) {
                    lo = mid;
                    r_lo = r;
                } else {
                    hi = mid;
                }
            }
            return (best.0 <= opts.tol).then_some(best.1);
        }
        None
    }

    fn build(&self, combo: &[usize], a: f64, opts: &SolveOptions) -> Option<KirchhoffSolution> {
        let pieces = self.pieces(combo);
        let bo = BranchOptions {
            max_bumps: opts.max_bumps,
            ..opts.branch.clone()
        };
        let mut branches = Vec::with_capacity(pieces.len());
        for ((pc, ep), id) in pieces.iter().zip(&self.edges).zip(&self.ids) {
            let b = match pc {
                Piece::Ray { sign } => {
                    let a = a.min(self.apex);
                    let d = line::heteroclinic_slope_unchecked(a, self.p);
                    shooting::ray_branch(a, sign * d, self.p, bo.ray_step)
                }
                Piece::Bounded { length, .. } => {
                    let (_, s) = pc.exact(a, self.p, bo.step);
                    let s = shooting::polish_slope(*length, a, s, self.p, bo.step, bo.landing_tol);
                    shooting::admissible_bounded(*length, a, s, self.p, &bo)?
                }
            };
            debug_assert_eq!(self.ids[ep.edge], *id);
            branches.push(b.with_edge_id(id));
        }
        let sol = KirchhoffSolution::assemble(&self.vertex, a, branches, self.p, bo.step);
        (sol.kirchhoff_residual <= opts.tol).then_some(sol)
    }

    fn run(&self, opts: &SolveOptions) -> Vec<Trace> {
        let counts: Vec<usize> = self.edges.iter().map(|e| e.pieces.len()).collect();
        let grid = mixed_grid(self.a_cap, opts.a_points.max(8));
        combinations(&counts)
            .par_iter()
            .filter_map(|c| self.trace(c, &grid, opts))
            .collect()
    }
}

/// One-parameter family of solutions along which `R(a) ≡ 0`.
#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub a_range: (f64, f64),
    pub labels: Vec<String>,
    vertex: String,
    p: f64,
    apex: f64,
    ids: Vec<String>,
    pieces: Vec<Piece>,
    opts: SolveOptions,
}

impl SolutionFamily {
    pub fn member(&self, a: f64) -> Result<KirchhoffSolution> {
        if !(a > self.a_range.0 && a <= self.a_range.1) {
            return Err(Error::OutOfRange(format!(
                "family member a = {a} outside ({}, {}]",
                self.a_range.0, self.a_range.1
            )));
        }
        let problem = Problem {
            vertex: self.vertex.clone(),
            p: self.p,
            apex: self.apex,
            a_cap: self.a_range.1,
            edges: self
                .pieces
                .iter()
                .enumerate()
                .map(|(i, pc)| EdgePieces {
                    edge: i,
                    pieces: vec![pc.clone()],
                })
                .collect(),
            ids: self.ids.clone(),
        };
        problem
            .build(&vec![0; self.pieces.len()], a, &self.opts)
            .ok_or_else(|| Error::OutOfRange(format!("no family member at a = {a}")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct StarSolve {
    /// Sorted by signature, then vertex value.
    pub solutions: Vec<KirchhoffSolution>,
    pub families: Vec<SolutionFamily>,
}

impl StarSolve {
    pub fn has_family(&self) -> bool {
        !self.families.is_empty()
    }
}

pub fn solve_star_like(graph: &MetricGraph, opts: &SolveOptions) -> Result<StarSolve> {
    let Some(problem) = build_problem(graph, opts)? else {
        return Ok(StarSolve::default());
    };
    let traces = problem.run(opts);
    let mut out = StarSolve::default();
    let found: Vec<Option<KirchhoffSolution>> = traces
        .par_iter()
        .filter(|t| !t.family)
        .flat_map_iter(|t| t.roots.iter().map(move |&a| (t, a)))
        .map(|(t, a)| problem.build(&t.combo, a, opts))
        .collect();
    let mut sols: Vec<KirchhoffSolution> = found.into_iter().flatten().collect();
    sols.sort_by(|x, y| {
        x.signature
            .cmp(&y.signature)
            .then(x.vertex_value.total_cmp(&y.vertex_value))
    });
    for s in sols {
        let dup = out.solutions.iter().any(|o: &KirchhoffSolution| {
            o.signature == s.signature && (o.vertex_value - s.vertex_value).abs() <= 1e-6
        });
        if !dup {
            out.solutions.push(s);
        }
    }
    for t in traces.iter().filter(|t| t.family) {
        let pieces: Vec<Piece> = problem.pieces(&t.combo).into_iter().cloned().collect();
        out.families.push(SolutionFamily {
            a_range: t.domain,
            labels: pieces.iter().enumerate().map(|(i, p)| p.label(i)).collect(),
            vertex: problem.vertex.clone(),
            p: problem.p,
            apex: problem.apex,
            ids: problem.ids.clone(),
            pieces,
            opts: opts.clone(),
        });
    }
    Ok(out)
}

/// Solutions found on `{ray, ℓ₁, ℓ₂}` for one pair of pendant lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityCell {
    pub lengths: (f64, f64),
    pub signatures: Vec<String>,
    pub quotients: Vec<f64>,
}

/// Empirical map of how many solutions the pendant graph `{ray, ℓ₁, ℓ₂}`
/// carries, over every pair `ℓ₁ ∈ first`, `ℓ₂ ∈ second`.
pub fn multiplicity_map(p: f64, first: &[f64], second: &[f64], opts: &SolveOptions) -> Result<Vec<MultiplicityCell>> {
    let pairs: Vec<(f64, f64)> = first
        .iter()
        .flat_map(|&a| second.iter().map(move |&b| (a, b)))
        .collect();
    pairs
        .par_iter()
        .map(|&(l1, l2)| {
            let res = solve_star_like(&ray_with_pendants(p, &[l1, l2]), opts)?;
            Ok(MultiplicityCell {
                lengths: (l1, l2),
                signatures: res.solutions.iter().map(|s| s.signature.to_string()).collect(),
                quotients: res.solutions.iter().map(|s| s.quotient).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// `max |v_e(0) - a|` over edges.
    pub continuity: f64,
    pub kirchhoff: f64,
    /// `max |v(ℓ)|` after re-integrating bounded edges at half step.
    pub landing: f64,
    /// Largest `|-v'' + v - |v|^{p-2}v|` from a five-point stencil.
    pub ode_residual: f64,
    /// Largest `|H|` along ray profiles.
    pub heteroclinic: f64,
    /// `|quotient - lp_norm_p^{(p-2)/p}|`.
    pub identity: f64,
    pub min_value: f64,
}

impl VerificationReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.continuity,
            self.kirchhoff,
            self.landing,
            self.ode_residual,
            self.heteroclinic,
            self.identity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn stencil_residual(v: &[f64], h: f64, p: f64) -> f64 {
    v.windows(5)
        .map(|w| {
            let d2 = (-w[0] + 16.0 * w[1] - 30.0 * w[2] + 16.0 * w[3] - w[4]) / (12.0 * h * h);
            (-d2 + w[2] - odd_power(w[2], p)).abs()
        })
        .fold(0.0, f64::max)
}

pub fn verify_solution(sol: &KirchhoffSolution, graph: &MetricGraph, step: f64) -> VerificationReport {
    let p = graph.p();
    let a = sol.vertex_value;
    let mut r = VerificationReport {
        continuity: 0.0,
        kirchhoff: sol.branches.iter().map(|b| b.inward_slope).sum::<f64>().abs(),
        landing: 0.0,
        ode_residual: 0.0,
        heteroclinic: 0.0,
        identity: 0.0,
        min_value: f64::INFINITY,
    };
    let half = 0.5 * step;
    for b in &sol.branches {
        let v0 = b.profile.first().map_or(b.vertex_value, |s| s.v);
        r.continuity = r.continuity.max((v0 - a).abs()).max((b.vertex_value - a).abs());
        match b.length {
            EdgeLength::Finite(l) => {
                let Ok(t) = phase::integrate(&phase::PhaseState::new(v0, b.inward_slope, p), l, half.min(l))
                else {
                    r.landing = f64::INFINITY;
                    continue;
                };
                r.landing = r.landing.max(t.last().v.abs());
                let vs: Vec<f64> = t.samples.iter().map(|s| s.v).collect();
                r.min_value = vs.iter().copied().fold(r.min_value, f64::min);
                if vs.len() >= 5 {
                    r.ode_residual = r.ode_residual.max(stencil_residual(&vs, half, p));
                }
            }
            EdgeLength::Infinite => {
                for s in &b.profile {
                    r.heteroclinic = r.heteroclinic.max(first_integral(s.v, s.u, p).abs());
                    r.min_value = r.min_value.min(s.v);
                }
                let vs: Vec<f64> = b.profile.iter().map(|s| s.v).collect();
                let h = b.profile.get(1).map_or(1.0, |s| s.s);
                if vs.len() >= 5 {
                    r.ode_residual = r.ode_residual.max(stencil_residual(&vs, h, p));
                }
            }
        }
    }
    let (e, m) = sol
        .branches
        .iter()
        .map(|b| b.moments(p, half))
        .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    r.identity = (e / m.powf(2.0 / p) - m.powf((p - 2.0) / p)).abs();
    if !r.min_value.is_finite() {
        r.min_value = 0.0;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCertificate {
    /// One label per edge (`ray+`, `ray-`, `arcK:kind`).
    pub pieces: Vec<String>,
    pub a_range: (f64, f64),
    pub r_min: f64,
    pub r_max: f64,
    pub min_abs_residual: f64,
    pub roots: Vec<f64>,
    pub family: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonexistenceCertificate {
    pub traces: Vec<TraceCertificate>,
    pub a_points: usize,
    pub max_bumps: usize,
    /// Smallest `|R(a)|` over every traced grid point.
    pub min_abs_residual: f64,
    /// Smallest `|R(a)| / Σ|s_i(a)|`; scale-free as `a → 0`.
    pub relative_margin: f64,
    pub note: String,
}

impl NonexistenceCertificate {
    pub fn root_found(&self) -> bool {
        self.traces.iter().any(|t| t.family || !t.roots.is_empty())
    }
}

/// Trace `R(a)` for every piece combination and report the sign ranges;
/// "no root" is only a statement about the configured resolution.
pub fn nonexistence_scan(graph: &MetricGraph, opts: &SolveOptions) -> Result<NonexistenceCertificate> {
    let Some(problem) = build_problem(graph, opts)? else {
        return Ok(NonexistenceCertificate {
            traces: vec![],
            a_points: opts.a_points,
            max_bumps: opts.max_bumps,
            min_abs_residual: f64::INFINITY,
            relative_margin: f64::INFINITY,
            note: "no inner vertex: any solution is a single orbit leaving v = 0 with u > 0, \
                   which returns to v = 0 (see phase-plane periodicity)"
                .into(),
        });
    };
    let traces = problem.run(opts);
    let min_abs_residual = traces.iter().map(|t| t.min_abs).fold(f64::INFINITY, f64::min);
    let relative_margin = traces.iter().map(|t| t.min_rel).fold(f64::INFINITY, f64::min);
    let traces: Vec<TraceCertificate> = traces
        .into_iter()
        .map(|t| TraceCertificate {
            pieces: problem
                .pieces(&t.combo)
                .iter()
                .enumerate()
                .map(|(i, pc)| format!("{}:{}", problem.ids[i], pc.label(t.combo[i])))
                .collect(),
            a_range: t.domain,
            r_min: t.r_min,
            r_max: t.r_max,
            min_abs_residual: t.min_abs,
            roots: t.roots,
            family: t.family,
        })
        .collect();
    let note = if traces.iter().any(|t| t.family || !t.roots.is_empty()) {
        "roots found".into()
    } else {
        "no root found at this resolution".into()
    };
    Ok(NonexistenceCertificate {
        traces,
        a_points: opts.a_points,
        max_bumps: opts.max_bumps,
        min_abs_residual,
        relative_margin,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bounded_star, ray_star, ray_with_pendants};

    #[test]
    fn odd_ray_star_has_only_the_apex_solution() {
        let g = ray_star(3.0, 3);
        let res = solve_star_like(&g, &SolveOptions::default()).unwrap();
        assert!(!res.has_family());
        assert_eq!(res.solutions.len(), 1);
        let s = &res.solutions[0];
        assert!((s.vertex_value - 1.5).abs() < 1e-12);
        assert!(s.branches.iter().all(|b| b.inward_slope.abs() < 1e-8));
        let expected = 1.5f64.cbrt() * 7.2f64.cbrt();
        assert!((s.quotient - expected).abs() < 1e-4);
        assert!(verify_solution(s, &g, 1e-3).max_residual() < 1e-6);
    }

    #[test]
    fn line_is_a_family() {
        let g = ray_star(3.0, 2);
        let res = solve_star_like(&g, &SolveOptions::default()).unwrap();
        assert!(res.has_family());
        for a in [0.2, 1.0, 1.5] {
            let m = res.families[0].member(a).unwrap();
            assert!((m.quotient - 7.2f64.cbrt()).abs() < 1e-5);
        }
    }

    #[test]
    fn continuity_defect_is_reported() {
        let g = ray_star(3.0, 3);
        let mut s = solve_star_like(&g, &SolveOptions::default()).unwrap().solutions[0].clone();
        s.branches[1].profile[0].v += 0.1;
        let r = verify_solution(&s, &g, 1e-3);
        assert!((r.continuity - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_two_inner_vertices() {
        use crate::graph::Edge;
        let g = MetricGraph::new(
            3.0,
            vec!["A", "B", "C", "D"],
            vec![
                Edge::segment("e1", "A", "B", 1.0),
                Edge::segment("e2", "B", "C", 1.0),
                Edge::ray("r1", "B"),
                Edge::segment("e3", "C", "D", 1.0),
                Edge::ray("r2", "C"),
            ],
        );
        assert!(matches!(
            solve_star_like(&g, &SolveOptions::default()),
            Err(Error::Classification(_))
        ));
    }

    #[test]
    fn short_pendants_have_no_solution() {
        let g = ray_with_pendants(3.0, &[0.1, 0.1]);
        let c = nonexistence_scan(&g, &SolveOptions::default()).unwrap();
        assert!(!c.root_found());
        assert!(c.min_abs_residual > 0.0 && c.relative_margin > 0.0);
    }

    #[test]
    fn bounded_star_has_a_solution() {
        let g = bounded_star(3.0, &[1.0, 2.0, 5.0]);
        let res = solve_star_like(&g, &SolveOptions::default()).unwrap();
        assert!(!res.solutions.is_empty());
        for s in &res.solutions {
            assert!(verify_solution(s, &g, 1e-3).max_residual() < 1e-6);
        }
    }
}
