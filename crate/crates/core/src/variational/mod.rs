//! Direct minimisation of `F(v) = ∫(v'² + v²) / (∫|v|^p)^{2/p}` over P1
//! fields on a (truncated) metric graph.
//!
//! The descent direction is the `H¹` gradient `-A⁻¹ r` of the Lagrangian
//! residual `r = A v - λ b(v)`, `λ = Q/N`. At unit step this is the
//! normalised iteration `v ← λ A⁻¹ b(v)`; Armijo backtracking keeps the
//! descent monotone. Since `A` is an M-matrix, steps `t ≤ 1` preserve
//! positivity.

mod assembly;

pub use assembly::{p1_power_integral, Assembly, EdgeMesh};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{EdgeLength, MetricGraph};
use crate::kirchhoff::{verify_solution, KirchhoffSolution, VerificationReport};
use crate::line::{self, LineReference};
use crate::shooting::{self, BranchOptions};
use assembly::dot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeOptions {
    pub starts: usize,
    pub max_iterations: usize,
    /// Target for the Euler–Lagrange residual.
    pub tol: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            starts: 8,
            max_iterations: 5000,
            tol: 1e-9,
            seed: 20_160_101,
        }
    }
}

/// Location of `|v|^p` relative to a reference vertex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassCenter {
    pub reference_vertex: String,
    /// `∫ dist(x, ref) |v|^p / ∫ |v|^p`.
    pub mean_distance: f64,
    /// Edge holding the largest share of `∫|v|^p`.
    pub heaviest_edge: String,
    pub heaviest_share: f64,
}

/// A P1 field together with its mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedField {
    pub meshes: Vec<EdgeMesh>,
    pub values: Vec<f64>,
}

impl DiscretizedField {
    /// `(x, v)` node pairs of one edge.
    pub fn edge_profile(&self, edge: usize) -> Vec<(f64, f64)> {
        let m = &self.meshes[edge];
        m.nodal_values(&self.values)
            .into_iter()
            .enumerate()
            .map(|(k, v)| (m.node_position(k), v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestConstantEstimate {
    pub quotient_min: f64,
    pub cp_estimate: f64,
    /// Normalised to `∫|v|^p = 1`.
    pub minimizer: DiscretizedField,
    pub h: f64,
    pub truncation: Option<f64>,
    pub el_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start: String,
    pub mass_center: MassCenter,
    /// Every start, in start order.
    pub runs: Vec<StartRun>,
}

/// Final state of one start of the multistart descent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartRun {
    pub start: String,
    pub quotient: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalised to `∫|v|^p = 1`.
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl StartRun {
    /// The run as a standalone estimate (used to examine local minima).
    pub fn estimate(&self, graph: &MetricGraph, asm: &Assembly) -> BestConstantEstimate {
        BestConstantEstimate {
            quotient_min: self.quotient,
            cp_estimate: 1.0 / self.quotient,
            minimizer: DiscretizedField {
                meshes: asm.meshes.clone(),
                values: self.values.clone(),
            },
            h: asm.h,
            truncation: asm.truncation,
            el_residual: self.el_residual,
            converged: self.converged,
            iterations: self.iterations,
            start: self.start.clone(),
            mass_center: mass_center(graph, asm, &self.values),
            runs: vec![],
        }
    }
}

impl BestConstantEstimate {
    /// The discrete Euler–Lagrange multiplier `λ = Q/N`.
    pub fn multiplier(&self) -> f64 {
        self.quotient_min
    }
}

struct Run {
    v: Vec<f64>,
    quotient: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn normalize(asm: &Assembly, v: &mut [f64]) -> f64 {
    let n = asm.lp_norm_p(v);
    let c = n.powf(-1.0 / asm.p());
    v.iter_mut().for_each(|x| *x *= c);
    n
}

/// `(A⁻¹ r, λ, ‖r‖_{A⁻¹})` for `r = A v - λ b(v)`, scaled to the unit slice.
fn lagrangian(asm: &Assembly, v: &[f64]) -> (Vec<f64>, f64, f64) {
    let av = asm.apply(v);
    let b = asm.power_load(v);
    let n = asm.lp_norm_p(v);
    let lambda = dot(v, &av) / n;
    let r: Vec<f64> = av.iter().zip(&b).map(|(a, b)| a - lambda * b).collect();
    let ar = asm.solve(&r);
    let norm = dot(&r, &ar).max(0.0).sqrt() / n.powf(1.0 / asm.p());
    (ar, lambda, norm)
}

/// Newton's method on `A w = b(w)` from the ODE-scaled iterate. Accepted
/// only if it lowers the residual, keeps `F` from rising and stays
/// non-negative.
fn newton_polish(asm: &Assembly, v: &[f64], lambda: f64, f: f64, residual: f64, tol: f64) -> Option<(Vec<f64>, f64, f64)> {
    let p = asm.p();
    let c = lambda.powf(1.0 / (p - 2.0));
    let mut w: Vec<f64> = v.iter().map(|x| c * x).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..25 {
        let aw = asm.apply(&w);
        let b = asm.power_load(&w);
        let g: Vec<f64> = aw.iter().zip(&b).map(|(a, b)| a - b).collect();
        let jac = asm.jacobian(&w).ok()?;
        let delta = asm.solve_with(&jac, &g);
        w.iter_mut().zip(&delta).for_each(|(x, d)| *x -= d);
        if w.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mut u = w.clone();
        normalize(asm, &mut u);
        let r = lagrangian(asm, &u).2;
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((u, r));
        }
        if r <= 0.1 * tol {
            break;
        }
    }
    let (u, r) = best?;
    let fu = asm.quotient(&u);
    let top = u.iter().copied().fold(0.0, f64::max);
    let nonneg = u.iter().all(|&x| x >= -1e-12 * top);
    (r < residual && fu <= f * (1.0 + 1e-12) && nonneg).then_some((u, fu, r))
}

/// Descent stops when a window of this many steps lowers `F` by less than
/// `1e-14` relative.
const STAGNATION_WINDOW: usize = 100;

fn descend(asm: &Assembly, mut v: Vec<f64>, opts: &MinimizeOptions) -> Run {
    normalize(asm, &mut v);
    let mut f = asm.quotient(&v);
    let mut iterations = 0;
    let (mut dir, mut lambda, mut residual) = lagrangian(asm, &v);
    let mut newton_at = f64::INFINITY;
    let mut checkpoint = f;
    while residual > opts.tol && iterations < opts.max_iterations {
        if iterations > 0 && iterations % STAGNATION_WINDOW == 0 {
            if checkpoint - f <= 1e-14 * f {
                break;
            }
            checkpoint = f;
        }
        if residual < 1e-4 && residual < 0.1 * newton_at {
            newton_at = residual;
            if let Some((u, fu, r)) = newton_polish(asm, &v, lambda, f, residual, opts.tol) {
                v = u;
                f = fu;
                (dir, lambda, residual) = lagrangian(asm, &v);
                debug_assert!((residual - r).abs() <= 1e-3 * r.max(1e-300));
                continue;
            }
        }
        iterations += 1;
        // d = -A⁻¹ r, so ∇F·d = -2 rᵀA⁻¹r on the unit slice
        let slope = -2.0 * residual * residual;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x - t * d).collect();
            let ft = asm.quotient(&trial);
            let armijo = ft <= f + 1e-4 * t * slope;
            // below ~1e-8 the decrease is lost in the rounding of F
            let floor = residual < 1e-6 && ft <= f * (1.0 + 4.0 * f64::EPSILON);
            if armijo || floor {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((mut trial, ft)) = accepted else {
            break;
        };
        normalize(asm, &mut trial);
        v = trial;
        f = ft.min(f);
        (dir, lambda, residual) = lagrangian(asm, &v);
    }
    Run {
        quotient: asm.quotient(&v),
        v,
        residual,
        iterations,
        converged: residual <= opts.tol,
    }
}

fn reference_vertex(graph: &MetricGraph) -> usize {
    graph.inner_vertices().first().copied().unwrap_or(0)
}

/// Graph distance from the reference vertex to each node of each edge.
fn node_distances(graph: &MetricGraph, asm: &Assembly) -> Vec<Vec<f64>> {
    let dist = graph.vertex_distances(reference_vertex(graph));
    graph
        .edges()
        .iter()
        .zip(&asm.meshes)
        .map(|(e, m)| {
            let da = graph.vertex_index(&e.endpoint_a).map_or(f64::INFINITY, |i| dist[i]);
            let db = e
                .endpoint_b
                .as_ref()
                .and_then(|b| graph.vertex_index(b).ok())
                .map_or(f64::INFINITY, |i| dist[i]);
            (0..=m.elements)
                .map(|k| {
                    let x = m.node_position(k);
                    (da + x).min(db + m.length - x)
                })
                .collect()
        })
        .collect()
}

fn seeds(graph: &MetricGraph, asm: &Assembly, opts: &MinimizeOptions) -> Vec<(String, Vec<f64>)> {
    let p = graph.p();
    let dist = node_distances(graph, asm);
    let mut out = Vec::new();
    let centred = asm.interpolate(|e, x| {
        let m = &asm.meshes[e];
        let k = ((x / m.h).round() as usize).min(m.elements);
        line::vbar(dist[e][k], p).unwrap_or(0.0)
    });
    out.push(("vertex".to_owned(), centred));
    for (i, m) in asm.meshes.iter().enumerate() {
        let l = m.length;
        let bump = asm.interpolate(|e, x| {
            if e != i {
                return 0.0;
            }
            let s = line::vbar(x - 0.5 * l, p).unwrap_or(0.0);
            s * (std::f64::consts::PI * x / l).sin().max(0.0)
        });
        // the shared vertex values of a single-edge bump must vanish
        let bump: Vec<f64> = bump
            .iter()
            .enumerate()
            .map(|(k, &x)| if k < asm.vertex_dofs.len() { 0.0 } else { x })
            .collect();
        out.push((format!("bump:{}", m.edge_id), bump));
    }
    let mut k = 0u64;
    while out.len() < opts.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k));
        let v: Vec<f64> = (0..asm.dofs()).map(|_| rng.random::<f64>() + 1e-3).collect();
        out.push((format!("random:{k}"), v));
        k += 1;
    }
    out.truncate(opts.starts.max(1));
    out
}

pub fn mass_center(graph: &MetricGraph, asm: &Assembly, v: &[f64]) -> MassCenter {
    let p = asm.p();
    let dist = node_distances(graph, asm);
    let mut total = 0.0;
    let mut moment = 0.0;
    let mut shares = Vec::new();
    for (e, m) in asm.meshes.iter().enumerate() {
        let nodes = m.nodal_values(v);
        let mut edge_mass = 0.0;
        for k in 0..m.elements {
            let mass = p1_power_integral(&nodes[k..k + 2], m.h, p);
            edge_mass += mass;
            moment += mass * 0.5 * (dist[e][k] + dist[e][k + 1]);
        }
        total += edge_mass;
        shares.push(edge_mass);
    }
    let (idx, &heaviest) = shares
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &0.0));
    MassCenter {
        reference_vertex: graph.vertices()[reference_vertex(graph)].id.clone(),
        mean_distance: moment / total,
        heaviest_edge: asm.meshes.get(idx).map_or(String::new(), |m| m.edge_id.clone()),
        heaviest_share: heaviest / total,
    }
}

/// Multistart descent; the best local minimum by quotient wins, ties go to
/// the earlier start.
pub fn minimize(graph: &MetricGraph, h: f64, truncation: Option<f64>, opts: &MinimizeOptions) -> Result<BestConstantEstimate> {
    let asm = Assembly::new(graph, h, truncation)?;
    minimize_assembled(graph, &asm, opts)
}

pub fn minimize_assembled(graph: &MetricGraph, asm: &Assembly, opts: &MinimizeOptions) -> Result<BestConstantEstimate> {
    let starts = seeds(graph, asm, opts);
    let runs: Vec<Run> = starts
        .par_iter()
        .map(|(_, v0)| descend(asm, v0.clone(), opts))
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.quotient.total_cmp(&b.1.quotient).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let run = &runs[best];
    let quotient_min = asm.quotient(&run.v);
    Ok(BestConstantEstimate {
        quotient_min,
        cp_estimate: 1.0 / quotient_min,
        minimizer: DiscretizedField {
            meshes: asm.meshes.clone(),
            values: run.v.clone(),
        },
        h: asm.h,
        truncation: asm.truncation,
        el_residual: run.residual,
        converged: run.converged,
        iterations: run.iterations,
        start: starts[best].0.clone(),
        mass_center: mass_center(graph, asm, &run.v),
        runs: starts
            .iter()
            .zip(&runs)
            .map(|((name, _), r)| StartRun {
                start: name.clone(),
                quotient: r.quotient,
                el_residual: r.residual,
                iterations: r.iterations,
                converged: r.converged,
                values: r.v.clone(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub truncation: Option<f64>,
    pub quotient_min: f64,
    pub mass_distance: f64,
    pub el_residual: f64,
    pub converged: bool,
}

/// `minimize` for every truncation length; bounded graphs give one row
/// without a truncation.
pub fn truncation_study(
    graph: &MetricGraph,
    h: f64,
    lengths: &[f64],
    opts: &MinimizeOptions,
) -> Result<Vec<TruncationRow>> {
    let cuts: Vec<Option<f64>> = if graph.has_ray() {
        lengths.iter().map(|&l| Some(l)).collect()
    } else {
        vec![None]
    };
    cuts.into_iter()
        .map(|l| {
            let est = minimize(graph, h, l, opts)?;
            Ok(TruncationRow {
                truncation: est.truncation,
                quotient_min: est.quotient_min,
                mass_distance: est.mass_center.mean_distance,
                el_residual: est.el_residual,
                converged: est.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LowerBoundStatus {
    Pass,
    Violation,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub status: LowerBoundStatus,
    pub cp_estimate: f64,
    pub cp_line: f64,
    /// `cp_estimate - cp_line`.
    pub gap: f64,
    pub tolerance: f64,
}

/// `C_p(G) ≥ C_p(ℝ)` for graphs with a ray; a violation beyond `tol` is
/// a discretisation error.
pub fn lower_bound_check(graph: &MetricGraph, est: &BestConstantEstimate, tol: f64) -> Result<LowerBoundReport> {
    let r = LineReference::new(graph.p())?;
    let gap = est.cp_estimate - r.cp_line;
    let status = if !graph.has_ray() {
        LowerBoundStatus::Skipped
    } else if gap >= -tol {
        LowerBoundStatus::Pass
    } else {
        LowerBoundStatus::Violation
    };
    Ok(LowerBoundReport {
        status,
        cp_estimate: est.cp_estimate,
        cp_line: r.cp_line,
        gap,
        tolerance: tol,
    })
}

/// Minimiser rescaled to solve `-v'' + v = |v|^{p-2} v`: `c^{p-2} = λ`.
pub fn ode_scaled(est: &BestConstantEstimate, p: f64) -> Vec<f64> {
    let c = est.multiplier().powf(1.0 / (p - 2.0));
    est.minimizer.values.iter().map(|x| c * x).collect()
}

/// Shooting solution built from the FEM vertex value, with the exact
/// branch on each edge chosen to match the FEM inward slope.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub vertex_value: f64,
    pub fem_slopes: Vec<f64>,
    pub solution: KirchhoffSolution,
    pub report: VerificationReport,
}

pub fn transfer_to_shooting(graph: &MetricGraph, est: &BestConstantEstimate, step: f64) -> Result<Transfer> {
    let p = graph.p();
    let w = ode_scaled(est, p);
    let inner = graph.inner_vertices();
    let [vi] = inner.as_slice() else {
        return Err(crate::Error::Classification(
            "transfer needs exactly one inner vertex".into(),
        ));
    };
    let vid = &graph.vertices()[*vi].id;
    let mut a = None;
    let mut fem_slopes = Vec::new();
    let mut branches = Vec::new();
    for (e, m) in graph.edges().iter().zip(&est.minimizer.meshes) {
        let nodes = m.nodal_values(&w);
        let at_start = &e.endpoint_a == vid;
        let (v0, v1) = if at_start {
            (nodes[0], nodes[1])
        } else {
            (nodes[m.elements], nodes[m.elements - 1])
        };
        let a = *a.get_or_insert(v0);
        let fem_slope = (v1 - v0) / m.h;
        fem_slopes.push(fem_slope);
        let opts = BranchOptions {
            step,
            ..BranchOptions::default()
        };
        let candidates = match e.length {
            EdgeLength::Infinite => shooting::ray_branches_with(a, p, &opts)?,
            EdgeLength::Finite(l) => shooting::bounded_branches_with(l, a, p, &opts)?,
        };
        let pick = candidates
            .into_iter()
            .min_by(|x, y| {
                (x.inward_slope - fem_slope)
                    .abs()
                    .total_cmp(&(y.inward_slope - fem_slope).abs())
            })
            .ok_or_else(|| crate::Error::OutOfRange(format!("no branch on edge {} at a = {a}", e.id)))?;
        branches.push(pick.with_edge_id(&e.id));
    }
    let solution = KirchhoffSolution::from_branches(graph, branches, step)?;
    let report = verify_solution(&solution, graph, step);
    Ok(Transfer {
        vertex_value: solution.vertex_value,
        fem_slopes,
        solution,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bounded_star, ray_star};

    #[test]
    fn quotient_is_scale_invariant() {
        let asm = Assembly::new(&bounded_star(3.0, &[1.0, 2.0]), 0.05, None).unwrap();
        let v: Vec<f64> = (0..asm.dofs()).map(|i| 1.0 + (i as f64 * 0.3).sin()).collect();
        let f = asm.quotient(&v);
        for c in [-3.0, 0.01, 7.5] {
            let w: Vec<f64> = v.iter().map(|x| c * x).collect();
            assert!((asm.quotient(&w) - f).abs() <= 1e-14 * f);
        }
    }

    #[test]
    fn truncated_line_recovers_line_constant() {
        let est = minimize(&ray_star(3.0, 2), 0.02, Some(30.0), &MinimizeOptions::default()).unwrap();
        assert!((est.quotient_min - 7.2f64.cbrt()).abs() < 1e-3);
        assert!(est.quotient_min >= 7.2f64.cbrt() - 1e-12);
        let asm = Assembly::new(&ray_star(3.0, 2), 0.02, Some(30.0)).unwrap();
        assert!((asm.quotient(&est.minimizer.values) - est.quotient_min).abs() < 1e-12);
    }

    #[test]
    fn bounded_star_minimizer_converges() {
        let g = bounded_star(3.0, &[1.0, 2.0, 5.0]);
        let est = minimize(&g, 0.01, None, &MinimizeOptions::default()).unwrap();
        assert!(est.converged, "residual {}", est.el_residual);
        assert!(est.el_residual < 1e-6);
        let lower = lower_bound_check(&g, &est, 5e-3).unwrap();
        assert_eq!(lower.status, LowerBoundStatus::Skipped);
    }
}
