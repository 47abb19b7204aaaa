use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::output::{fmt_float, write_csv, OutputDir, RunManifest};
use super::graph_to_toml;
use crate::error::{Error, Result};
use crate::graph::{bounded_star, ray_with_pendants, EdgeLength, MetricGraph};
use crate::kirchhoff::{nonexistence_scan, solve_star_like, KirchhoffSolution, SolveOptions};
use crate::line::LineReference;
use crate::phase::{classify_orbit, emit_phase_portrait, first_integral, OrbitClass, PhaseState, PortraitSpec};
use crate::variational::{lower_bound_check, minimize, ode_scaled, truncation_study, MinimizeOptions};

pub fn line_constant_report(p: f64) -> Result<String> {
    let r = LineReference::new(p)?;
    Ok(format!(
        "p {:.12}\napex_value {:.12}\nbest_quotient_line {:.12}\ncp_line {:.12}\n",
        r.p, r.apex_value, r.best_quotient, r.cp_line
    ))
}

fn portrait_rows(p: f64) -> Result<Vec<Vec<String>>> {
    Ok(emit_phase_portrait(p, &PortraitSpec::default())?
        .into_iter()
        .map(|r| {
            vec![
                r.orbit_id,
                fmt_float(r.s),
                fmt_float(r.v),
                fmt_float(r.u),
                fmt_float(r.h),
                r.class.as_str().to_owned(),
            ]
        })
        .collect())
}

const PORTRAIT_HEADER: [&str; 6] = ["orbit_id", "s", "v", "u", "H", "class"];

/// Write the phase portrait to a single CSV file (via a temporary name).
pub fn run_phase_portrait(p: f64, out: &Path) -> Result<String> {
    let rows = portrait_rows(p)?;
    let tmp = out.with_extension("csv.partial");
    if let Err(e) = write_csv(&tmp, &PORTRAIT_HEADER, &rows) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, out)?;
    Ok(format!("{} rows written to {}\n", rows.len(), out.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRequest {
    pub options: SolveOptions,
}

fn profile_rows(graph: &MetricGraph, sol: &KirchhoffSolution) -> Vec<Vec<String>> {
    let p = graph.p();
    let mut rows = Vec::new();
    for (e, b) in graph.edges().iter().zip(&sol.branches) {
        let class = if b.is_ray() {
            OrbitClass::Heteroclinic
        } else {
            classify_orbit(&PhaseState::new(b.vertex_value, b.inward_slope, p))
        };
        let reversed = e.endpoint_a != sol.vertex;
        let length = e.length.value();
        for smp in &b.profile {
            let x = if reversed { length - smp.s } else { smp.s };
            rows.push(vec![
                e.id.clone(),
                fmt_float(smp.s),
                fmt_float(smp.v),
                fmt_float(smp.u),
                fmt_float(first_integral(smp.v, smp.u, p)),
                class.as_str().to_owned(),
                fmt_float(x),
            ]);
        }
    }
    rows
}

fn write_solutions(dir: &OutputDir, graph: &MetricGraph, opts: &SolveOptions) -> Result<String> {
    let res = solve_star_like(graph, opts)?;
    let mut summary = Vec::new();
    let mut dots = Vec::new();
    let mut report = String::new();
    for (k, s) in res.solutions.iter().enumerate() {
        let id = format!("solution_{k}");
        summary.push(vec![
            id.clone(),
            s.signature.to_string(),
            fmt_float(s.vertex_value),
            fmt_float(s.kirchhoff_residual),
            fmt_float(s.quotient),
            fmt_float(s.lp_norm_p),
        ]);
        for b in &s.branches {
            dots.push(vec![
                id.clone(),
                b.edge_id.clone(),
                fmt_float(s.vertex_value),
                fmt_float(b.inward_slope),
            ]);
        }
        write_csv(
            &dir.path(&format!("{id}.csv")),
            &["orbit_id", "s", "v", "u", "H", "class", "x"],
            &profile_rows(graph, s),
        )?;
        let _ = writeln!(
            report,
            "{id}: signature [{}] a = {:.10} quotient = {:.10}",
            s.signature, s.vertex_value, s.quotient
        );
    }
    write_csv(
        &dir.path("summary.csv"),
        &["solution", "signature", "a", "residual", "quotient", "lp_norm_p"],
        &summary,
    )?;
    write_csv(
        &dir.path("vertex_dots.csv"),
        &["solution", "edge_id", "a", "inward_slope"],
        &dots,
    )?;
    if res.has_family() {
        let rows: Vec<Vec<String>> = res
            .families
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let mid = 0.5 * (f.a_range.0 + f.a_range.1);
                let q = f.member(mid).map_or(f64::NAN, |m| m.quotient);
                vec![
                    format!("family_{k}"),
                    f.labels.join(" "),
                    fmt_float(f.a_range.0),
                    fmt_float(f.a_range.1),
                    fmt_float(q),
                ]
            })
            .collect();
        write_csv(
            &dir.path("families.csv"),
            &["family", "pieces", "a_min", "a_max", "quotient_mid"],
            &rows,
        )?;
        let _ = writeln!(report, "{} one-parameter families", res.families.len());
    }
    if res.solutions.is_empty() && !res.has_family() {
        let cert = nonexistence_scan(graph, opts)?;
        fs::write(
            dir.path("nonexistence.json"),
            serde_json::to_string_pretty(&cert)? + "\n",
        )?;
        let _ = writeln!(
            report,
            "{} (min |R| = {:.3e}, relative margin {:.3e})",
            cert.note, cert.min_abs_residual, cert.relative_margin
        );
    }
    Ok(report)
}

pub fn run_solve(graph: &MetricGraph, req: &SolveRequest, out: &Path) -> Result<String> {
    let text = graph_to_toml(graph);
    let manifest = RunManifest::new("solve", Some(&text), req)?;
    let mut report = String::new();
    OutputDir::run(out, &manifest, |dir| {
        fs::write(dir.path("graph.toml"), &text)?;
        report = write_solutions(dir, graph, &req.options)?;
        Ok(())
    })?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeRequest {
    pub h: f64,
    pub truncation: Option<f64>,
    pub options: MinimizeOptions,
    /// Truncation lengths for a study; empty for none.
    pub study: Vec<f64>,
}

pub fn run_minimize(graph: &MetricGraph, req: &MinimizeRequest, out: &Path) -> Result<String> {
    let text = graph_to_toml(graph);
    let manifest = RunManifest::new("minimize", Some(&text), req)?;
    let mut report = String::new();
    OutputDir::run(out, &manifest, |dir| {
        fs::write(dir.path("graph.toml"), &text)?;
        let est = minimize(graph, req.h, req.truncation, &req.options)?;
        let w = ode_scaled(&est, graph.p());
        let mut rows = Vec::new();
        for (e, m) in est.minimizer.meshes.iter().enumerate() {
            let nodes = m.nodal_values(&w);
            for (k, (x, v)) in est.minimizer.edge_profile(e).into_iter().enumerate() {
                rows.push(vec![m.edge_id.clone(), fmt_float(x), fmt_float(v), fmt_float(nodes[k])]);
            }
        }
        write_csv(&dir.path("minimizer.csv"), &["edge_id", "x", "v", "v_ode"], &rows)?;
        let lower = lower_bound_check(graph, &est, 5e-3)?;
        let status = format!("{:?}", lower.status).to_lowercase();
        write_csv(
            &dir.path("summary.csv"),
            &[
                "quotient_min",
                "cp_estimate",
                "el_residual",
                "h",
                "L",
                "converged",
                "iterations",
                "start",
                "mass_distance",
                "lower_bound",
            ],
            &[vec![
                fmt_float(est.quotient_min),
                fmt_float(est.cp_estimate),
                fmt_float(est.el_residual),
                fmt_float(est.h),
                est.truncation.map_or_else(String::new, fmt_float),
                est.converged.to_string(),
                est.iterations.to_string(),
                est.start.clone(),
                fmt_float(est.mass_center.mean_distance),
                status.clone(),
            ]],
        )?;
        let starts: Vec<Vec<String>> = est
            .runs
            .iter()
            .map(|r| {
                vec![
                    r.start.clone(),
                    fmt_float(r.quotient),
                    fmt_float(r.el_residual),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.path("starts.csv"),
            &["start", "quotient", "el_residual", "iterations", "converged"],
            &starts,
        )?;
        let _ = writeln!(
            report,
            "quotient_min = {:.10} cp_estimate = {:.10} el_residual = {:.3e} converged = {} lower bound: {status}",
            est.quotient_min, est.cp_estimate, est.el_residual, est.converged
        );
        if !req.study.is_empty() {
            let table = truncation_study(graph, req.h, &req.study, &req.options)?;
            let rows: Vec<Vec<String>> = table
                .iter()
                .map(|r| {
                    vec![
                        r.truncation.map_or_else(String::new, fmt_float),
                        fmt_float(r.quotient_min),
                        fmt_float(r.mass_distance),
                        fmt_float(r.el_residual),
                        r.converged.to_string(),
                    ]
                })
                .collect();
            write_csv(
                &dir.path("truncation.csv"),
                &["L", "quotient_min", "mass_distance", "el_residual", "converged"],
                &rows,
            )?;
        }
        Ok(())
    })?;
    Ok(report)
}

/// Figures that `reproduce` can regenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Figure {
    PhasePortrait,
    Star15Inf,
    Bounded125,
    Bounded145,
}

impl Figure {
    pub const ALL: [Figure; 4] = [
        Figure::PhasePortrait,
        Figure::Star15Inf,
        Figure::Bounded125,
        Figure::Bounded145,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::PhasePortrait => "phase-portrait",
            Figure::Star15Inf => "star15inf",
            Figure::Bounded125 => "bounded125",
            Figure::Bounded145 => "bounded145",
        }
    }

    pub fn graph(self) -> Option<MetricGraph> {
        match self {
            Figure::PhasePortrait => None,
            Figure::Star15Inf => Some(ray_with_pendants(3.0, &[1.0, 5.0])),
            Figure::Bounded125 => Some(bounded_star(3.0, &[1.0, 2.0, 5.0])),
            Figure::Bounded145 => Some(bounded_star(3.0, &[1.0, 4.0, 5.0])),
        }
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownId {
                kind: "figure",
                id: s.to_owned(),
            })
    }
}

#[derive(Serialize)]
struct ReproduceOptions {
    figure: &'static str,
    p: f64,
    portrait: Option<PortraitSpec>,
    solve: Option<SolveOptions>,
}

pub fn run_reproduce(figure: Figure, out: &Path) -> Result<(PathBuf, String)> {
    let graph = figure.graph();
    let text = graph.as_ref().map(graph_to_toml);
    let opts = ReproduceOptions {
        figure: figure.name(),
        p: 3.0,
        portrait: graph.is_none().then(PortraitSpec::default),
        solve: graph.is_some().then(SolveOptions::default),
    };
    let manifest = RunManifest::new(&format!("reproduce {}", figure.name()), text.as_deref(), &opts)?;
    let mut report = String::new();
    let dir = OutputDir::run(out, &manifest, |dir| {
        match (&graph, &text) {
            (Some(g), Some(t)) => {
                fs::write(dir.path("graph.toml"), t)?;
                report = write_solutions(dir, g, opts.solve.as_ref().unwrap_or(&SolveOptions::default()))?;
                let edges: Vec<Vec<String>> = g
                    .edges()
                    .iter()
                    .map(|e| {
                        vec![
                            e.id.clone(),
                            match e.length {
                                EdgeLength::Finite(l) => fmt_float(l),
                                EdgeLength::Infinite => "inf".to_owned(),
                            },
                        ]
                    })
                    .collect();
                write_csv(&dir.path("edges.csv"), &["edge_id", "length"], &edges)?;
            }
            _ => {
                let rows = portrait_rows(3.0)?;
                write_csv(&dir.path("phase_portrait.csv"), &PORTRAIT_HEADER, &rows)?;
                let _ = writeln!(report, "{} portrait rows", rows.len());
            }
        }
        Ok(())
    })?;
    Ok((dir, report))
}
