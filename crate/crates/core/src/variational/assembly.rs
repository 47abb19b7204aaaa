//! P1 finite elements on a metric graph.
//!
//! Each edge carries a uniform mesh; inner vertices own one shared unknown
//! and Dirichlet vertices (including ray cuts) are eliminated. The
//! quadratic form `∫ v'² + v²` is assembled exactly and `∫ |v|^p` uses a
//! four-point Gauss rule per element.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_exponent, Error, Result};
use crate::graph::{BcRole, MetricGraph};
use crate::phase::odd_power;
use crate::quadrature::GAUSS_LEGENDRE_4;

/// Mesh of one edge. Node 0 sits at `endpoint_a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeMesh {
    pub edge_id: String,
    /// Edge length after truncation.
    pub length: f64,
    pub elements: usize,
    pub h: f64,
    pub is_ray: bool,
    /// Vertex unknowns at the two ends (`None` for Dirichlet).
    pub start_dof: Option<usize>,
    pub end_dof: Option<usize>,
    /// First interior unknown; the edge owns `elements - 1` of them.
    pub offset: usize,
}

impl EdgeMesh {
    pub fn interior(&self) -> usize {
        self.elements - 1
    }

    pub fn node_position(&self, k: usize) -> f64 {
        if k == self.elements {
            self.length
        } else {
            k as f64 * self.h
        }
    }

    /// Values at all `elements + 1` nodes, Dirichlet ends as zero.
    pub fn nodal_values(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.elements + 1);
        out.push(self.start_dof.map_or(0.0, |i| dofs[i]));
        out.extend_from_slice(&dofs[self.offset..self.offset + self.interior()]);
        out.push(self.end_dof.map_or(0.0, |i| dofs[i]));
        out
    }
}

/// `∫ |v|^p` of the piecewise-linear interpolant of uniformly spaced nodes.
pub fn p1_power_integral(nodes: &[f64], h: f64, p: f64) -> f64 {
    nodes
        .windows(2)
        .map(|w| {
            GAUSS_LEGENDRE_4
                .iter()
                .map(|&(x, wt)| {
                    let t = 0.5 * (x + 1.0);
                    0.5 * wt * abs_power(w[0] + t * (w[1] - w[0]), p)
                })
                .sum::<f64>()
                * h
        })
        .sum()
}

/// `|x|^p` with an integer fast path.
pub(crate) fn abs_power(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        x.abs().powi(p as i32)
    } else {
        x.abs().powf(p)
    }
}

/// Symmetric matrix with the sparsity of a P1 form: tridiagonal on each
/// edge interior, coupled to the vertex unknowns at the edge ends.
#[derive(Debug, Clone)]
struct GraphMatrix {
    vertex_diag: Vec<f64>,
    blocks: Vec<BlockEntries>,
}

#[derive(Debug, Clone)]
struct BlockEntries {
    diag: Vec<f64>,
    /// `off[k]` couples interior nodes `k` and `k + 1`.
    off: Vec<f64>,
    couple_start: f64,
    couple_end: f64,
}

impl GraphMatrix {
    /// Sum of element matrices `[[a11, a12], [a12, a22]]` from `local`.
    fn assemble<F: Fn(&EdgeMesh, usize) -> (f64, f64, f64)>(meshes: &[EdgeMesh], nv: usize, local: F) -> Self {
        let mut vertex_diag = vec![0.0; nv];
        let mut blocks = Vec::with_capacity(meshes.len());
        for m in meshes {
            let n = m.elements;
            let mut b = BlockEntries {
                diag: vec![0.0; n - 1],
                off: vec![0.0; n.saturating_sub(2)],
                couple_start: 0.0,
                couple_end: 0.0,
            };
            for k in 0..n {
                let (a11, a12, a22) = local(m, k);
                if k == 0 {
                    if let Some(i) = m.start_dof {
                        vertex_diag[i] += a11;
                    }
                    b.couple_start += a12;
                } else {
                    b.diag[k - 1] += a11;
                }
                if k + 1 == n {
                    if let Some(i) = m.end_dof {
                        vertex_diag[i] += a22;
                    }
                    b.couple_end += a12;
                } else {
                    b.diag[k] += a22;
                }
                if k > 0 && k + 1 < n {
                    b.off[k - 1] += a12;
                }
            }
            blocks.push(b);
        }
        GraphMatrix { vertex_diag, blocks }
    }

    fn factor(self, meshes: &[EdgeMesh]) -> Result<Factored> {
        let nv = self.vertex_diag.len();
        let mut s = DMatrix::<f64>::from_diagonal(&DVector::from_vec(self.vertex_diag));
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (m, e) in meshes.iter().zip(self.blocks) {
            let f = Thomas::new(e)?;
            let last = f.first.len() - 1;
            let (cs, ce) = (f.entries.couple_start, f.entries.couple_end);
            if let Some(i) = m.start_dof {
                s[(i, i)] -= cs * cs * f.first[0];
                if let Some(j) = m.end_dof {
                    s[(i, j)] -= cs * ce * f.first[last];
                }
            }
            if let Some(j) = m.end_dof {
                s[(j, j)] -= ce * ce * f.last[last];
                if let Some(i) = m.start_dof {
                    s[(j, i)] -= ce * cs * f.last[0];
                }
            }
            blocks.push(f);
        }
        let schur = if nv == 0 {
            None
        } else {
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(Error::InvalidGraph(vec!["singular vertex Schur complement".into()]));
            }
            Some(lu)
        };
        Ok(Factored { nv, blocks, schur })
    }
}

#[derive(Debug, Clone)]
struct Thomas {
    entries: BlockEntries,
    pivots: Vec<f64>,
    /// `T⁻¹ e_first` and `T⁻¹ e_last`.
    first: Vec<f64>,
    last: Vec<f64>,
}

impl Thomas {
    fn new(entries: BlockEntries) -> Result<Self> {
        let m = entries.diag.len();
        let mut pivots = Vec::with_capacity(m);
        for i in 0..m {
            let d = if i == 0 {
                entries.diag[0]
            } else {
                entries.diag[i] - entries.off[i - 1] * entries.off[i - 1] / pivots[i - 1]
            };
            if d == 0.0 || !d.is_finite() {
                return Err(Error::InvalidGraph(vec!["singular edge block".into()]));
            }
            pivots.push(d);
        }
        let mut t = Thomas {
            entries,
            pivots,
            first: vec![],
            last: vec![],
        };
        let mut e = vec![0.0; m];
        e[0] = 1.0;
        t.first = t.solve(&e);
        let mut e = vec![0.0; m];
        e[m - 1] = 1.0;
        t.last = t.solve(&e);
        Ok(t)
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let m = y.len();
        let off = &self.entries.off;
        let mut z = y.to_vec();
        for i in 1..m {
            z[i] -= off[i - 1] / self.pivots[i - 1] * z[i - 1];
        }
        z[m - 1] /= self.pivots[m - 1];
        for i in (0..m - 1).rev() {
            z[i] = (z[i] - off[i] * z[i + 1]) / self.pivots[i];
        }
        z
    }
}

/// Direct solver: Thomas factorisation per edge interior plus a dense
/// Schur complement on the vertex unknowns.
#[derive(Debug, Clone)]
pub(crate) struct Factored {
    nv: usize,
    blocks: Vec<Thomas>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Factored {
    fn solve(&self, meshes: &[EdgeMesh], y: &[f64]) -> Vec<f64> {
        let nv = self.nv;
        let mut x = vec![0.0; y.len()];
        let mut g = DVector::from_iterator(nv, y[..nv].iter().copied());
        let mut w = Vec::with_capacity(meshes.len());
        for (m, b) in meshes.iter().zip(&self.blocks) {
            let we = b.solve(&y[m.offset..m.offset + m.interior()]);
            if let Some(i) = m.start_dof {
                g[i] -= b.entries.couple_start * we[0];
            }
            if let Some(i) = m.end_dof {
                g[i] -= b.entries.couple_end * we[m.interior() - 1];
            }
            w.push(we);
        }
        if let Some(lu) = &self.schur {
            if let Some(xv) = lu.solve(&g) {
                x[..nv].copy_from_slice(xv.as_slice());
            }
        }
        for ((m, b), we) in meshes.iter().zip(&self.blocks).zip(w) {
            let xa = m.start_dof.map_or(0.0, |i| x[i]) * b.entries.couple_start;
            let xb = m.end_dof.map_or(0.0, |i| x[i]) * b.entries.couple_end;
            for k in 0..m.interior() {
                x[m.offset + k] = we[k] - (xa * b.first[k] + xb * b.last[k]);
            }
        }
        x
    }
}

/// Discrete quotient on a graph.
#[derive(Debug, Clone)]
pub struct Assembly {
    p: f64,
    pub meshes: Vec<EdgeMesh>,
    pub vertex_dofs: Vec<String>,
    /// Requested mesh size; each edge uses the largest `ℓ/n ≤ h`.
    pub h: f64,
    pub truncation: Option<f64>,
    dofs: usize,
    solver: Factored,
}

fn local_stiffness(h: f64) -> (f64, f64) {
    (1.0 / h, -1.0 / h)
}

fn local_mass(h: f64) -> (f64, f64) {
    (h / 3.0, h / 6.0)
}

impl Assembly {
    /// Mesh every edge with `ceil(ℓ/h)` elements; rays are cut at `truncation`.
    pub fn new(graph: &MetricGraph, h: f64, truncation: Option<f64>) -> Result<Self> {
        graph.ensure_valid()?;
        check_exponent(graph.p())?;
        let shortest = graph
            .edges()
            .iter()
            .filter(|e| !e.is_ray())
            .map(|e| e.length.value())
            .fold(f64::INFINITY, f64::min);
        let cut = if graph.has_ray() {
            let l = truncation.unwrap_or(40.0);
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::OutOfRange(format!("truncation length {l}")));
            }
            Some(l)
        } else {
            None
        };
        let shortest = shortest.min(cut.unwrap_or(f64::INFINITY));
        if h.is_nan() || h <= 0.0 || h >= shortest {
            return Err(Error::MeshTooCoarse { h, shortest });
        }
        let mut vertex_dofs = Vec::new();
        let mut dof_of = std::collections::BTreeMap::new();
        for v in graph.vertices() {
            if v.bc_role == BcRole::Kirchhoff {
                dof_of.insert(v.id.clone(), vertex_dofs.len());
                vertex_dofs.push(v.id.clone());
            }
        }
        let mut offset = vertex_dofs.len();
        let mut meshes = Vec::new();
        for e in graph.edges() {
            let length = if e.is_ray() { cut.unwrap_or(0.0) } else { e.length.value() };
            let elements = ((length / h - 1e-9).ceil() as usize).max(2);
            meshes.push(EdgeMesh {
                edge_id: e.id.clone(),
                length,
                elements,
                h: length / elements as f64,
                is_ray: e.is_ray(),
                start_dof: dof_of.get(&e.endpoint_a).copied(),
                end_dof: e.endpoint_b.as_ref().and_then(|b| dof_of.get(b).copied()),
                offset,
            });
            offset += elements - 1;
        }
        let solver = GraphMatrix::assemble(&meshes, vertex_dofs.len(), |m, _| Self::local_form(m))
            .factor(&meshes)?;
        Ok(Assembly {
            p: graph.p(),
            meshes,
            vertex_dofs,
            h,
            truncation: cut,
            dofs: offset,
            solver,
        })
    }

    fn local_form(m: &EdgeMesh) -> (f64, f64, f64) {
        let (kd, ko) = local_stiffness(m.h);
        let (md, mo) = local_mass(m.h);
        (kd + md, ko + mo, kd + md)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    fn for_each_element<F: FnMut(&EdgeMesh, usize, f64, f64)>(&self, v: &[f64], mut f: F) {
        for m in &self.meshes {
            let nodes = m.nodal_values(v);
            for k in 0..m.elements {
                f(m, k, nodes[k], nodes[k + 1]);
            }
        }
    }

    fn node_dof(m: &EdgeMesh, k: usize) -> Option<usize> {
        if k == 0 {
            m.start_dof
        } else if k == m.elements {
            m.end_dof
        } else {
            Some(m.offset + k - 1)
        }
    }

    /// `∫ v'²`.
    pub fn stiffness_form(&self, v: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_element(v, |m, _, l, r| total += (r - l) * (r - l) / m.h);
        total
    }

    /// `∫ v²`.
    pub fn mass_form(&self, v: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_element(v, |m, _, l, r| total += m.h / 3.0 * (l * l + l * r + r * r));
        total
    }

    pub fn energy(&self, v: &[f64]) -> f64 {
        self.stiffness_form(v) + self.mass_form(v)
    }

    pub fn lp_norm_p(&self, v: &[f64]) -> f64 {
        self.meshes
            .iter()
            .map(|m| p1_power_integral(&m.nodal_values(v), m.h, self.p))
            .sum()
    }

    pub fn quotient(&self, v: &[f64]) -> f64 {
        self.energy(v) / self.lp_norm_p(v).powf(2.0 / self.p)
    }

    /// `A v` for the form `∫ v'² + v²`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs];
        for m in &self.meshes {
            let nodes = m.nodal_values(v);
            let (kd, ko) = local_stiffness(m.h);
            let (md, mo) = local_mass(m.h);
            let (d, o) = (kd + md, ko + mo);
            for k in 0..m.elements {
                let (l, r) = (nodes[k], nodes[k + 1]);
                if let Some(i) = Self::node_dof(m, k) {
                    out[i] += d * l + o * r;
                }
                if let Some(i) = Self::node_dof(m, k + 1) {
                    out[i] += o * l + d * r;
                }
            }
        }
        out
    }

    /// `b_i = ∫ |v|^{p-2} v φ_i`, so that `∇ ∫|v|^p = p b`.
    pub fn power_load(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs];
        let p = self.p;
        for m in &self.meshes {
            let nodes = m.nodal_values(v);
            for k in 0..m.elements {
                let (l, r) = (nodes[k], nodes[k + 1]);
                let (mut bl, mut br) = (0.0, 0.0);
                for &(x, w) in &GAUSS_LEGENDRE_4 {
                    let t = 0.5 * (x + 1.0);
                    let f = odd_power(l + t * (r - l), p) * 0.5 * w * m.h;
                    bl += f * (1.0 - t);
                    br += f * t;
                }
                if let Some(i) = Self::node_dof(m, k) {
                    out[i] += bl;
                }
                if let Some(i) = Self::node_dof(m, k + 1) {
                    out[i] += br;
                }
            }
        }
        out
    }

    /// `∇F = 2 (A v - (Q/N) b) / N^{2/p}`.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let av = self.apply(v);
        let b = self.power_load(v);
        let q = dot(v, &av);
        let n = self.lp_norm_p(v);
        let lambda = q / n;
        let scale = 2.0 / n.powf(2.0 / self.p);
        av.iter().zip(&b).map(|(a, b)| scale * (a - lambda * b)).collect()
    }

    /// Exact solve of `A x = y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        self.solver.solve(&self.meshes, y)
    }

    /// Factorised Jacobian `A - (p-1) W(v)` of `v ↦ A v - b(v)`, where
    /// `W_ij = ∫ |v|^{p-2} φ_i φ_j`.
    pub(crate) fn jacobian(&self, v: &[f64]) -> Result<Factored> {
        let p = self.p;
        let nodal: Vec<Vec<f64>> = self.meshes.iter().map(|m| m.nodal_values(v)).collect();
        let index: std::collections::HashMap<&str, usize> = self
            .meshes
            .iter()
            .enumerate()
            .map(|(i, m)| (m.edge_id.as_str(), i))
            .collect();
        GraphMatrix::assemble(&self.meshes, self.vertex_dofs.len(), |m, k| {
            let nodes = &nodal[index[m.edge_id.as_str()]];
            let (l, r) = (nodes[k], nodes[k + 1]);
            let (mut w11, mut w12, mut w22) = (0.0, 0.0, 0.0);
            for &(x, w) in &GAUSS_LEGENDRE_4 {
                let t = 0.5 * (x + 1.0);
                let wt = abs_power(l + t * (r - l), p - 2.0) * 0.5 * w * m.h * (p - 1.0);
                w11 += wt * (1.0 - t) * (1.0 - t);
                w12 += wt * t * (1.0 - t);
                w22 += wt * t * t;
            }
            let (a11, a12, a22) = Self::local_form(m);
            (a11 - w11, a12 - w12, a22 - w22)
        })
        .factor(&self.meshes)
    }

    pub(crate) fn solve_with(&self, f: &Factored, y: &[f64]) -> Vec<f64> {
        f.solve(&self.meshes, y)
    }

    /// Nodal interpolant of `f(edge index, local coordinate)`; values at
    /// eliminated Dirichlet nodes are dropped.
    pub fn interpolate<F: Fn(usize, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut v = vec![0.0; self.dofs];
        let mut vertex_set = vec![false; self.vertex_dofs.len()];
        for (e, m) in self.meshes.iter().enumerate() {
            for k in 0..=m.elements {
                let Some(i) = Self::node_dof(m, k) else {
                    continue;
                };
                if i < vertex_set.len() {
                    if vertex_set[i] {
                        continue;
                    }
                    vertex_set[i] = true;
                }
                v[i] = f(e, m.node_position(k));
            }
        }
        v
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
