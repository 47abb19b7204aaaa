//! Graph files, CSV and manifest output, and the command implementations
//! behind the CLI.
//!
//! A graph file is TOML:
//!
//! ```toml
//! p = 3.0
//! vertices = ["O", "A", "B"]
//!
//! [[edges]]
//! id = "e1"
//! from = "O"
//! to = "A"
//! length = 1.0
//!
//! [[edges]]
//! id = "e0"
//! from = "O"
//! length = "inf"
//! ```

mod commands;
mod output;

pub use commands::{
    line_constant_report, run_minimize, run_phase_portrait, run_reproduce, run_solve, Figure,
    MinimizeRequest, SolveRequest,
};
pub use output::{fmt_float, write_csv, OutputDir, RunManifest};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeLength, MetricGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum LengthField {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: String,
    from: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<String>,
    length: LengthField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    p: f64,
    vertices: Vec<String>,
    edges: Vec<EdgeRecord>,
}

pub fn parse_graph_file(path: &Path) -> Result<MetricGraph> {
    let text = std::fs::read_to_string(path)?;
    parse_graph_str(&text, path)
}

/// Parse and validate; `origin` only labels error messages.
pub fn parse_graph_str(text: &str, origin: &Path) -> Result<MetricGraph> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let rec: GraphRecord = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let mut edges = Vec::with_capacity(rec.edges.len());
    for (i, e) in rec.edges.iter().enumerate() {
        let length = match &e.length {
            LengthField::Number(x) => EdgeLength::Finite(*x),
            LengthField::Text(s) if s == "inf" => EdgeLength::Infinite,
            LengthField::Text(s) => {
                return Err(parse_err(format!(
                    "edges[{i}] (id `{}`), field `length`: expected a positive number or \"inf\", got \"{s}\"",
                    e.id
                )))
            }
        };
        edges.push(Edge {
            id: e.id.clone(),
            endpoint_a: e.from.clone(),
            endpoint_b: e.to.clone(),
            length,
        });
    }
    let graph = MetricGraph::new(rec.p, rec.vertices, edges);
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(parse_err(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(graph)
}

/// Canonical TOML text of a graph; its digest identifies the input of a run.
pub fn graph_to_toml(graph: &MetricGraph) -> String {
    let rec = GraphRecord {
        p: graph.p(),
        vertices: graph.vertices().iter().map(|v| v.id.clone()).collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                id: e.id.clone(),
                from: e.endpoint_a.clone(),
                to: e.endpoint_b.clone(),
                length: match e.length {
                    EdgeLength::Finite(x) => LengthField::Number(x),
                    EdgeLength::Infinite => LengthField::Text("inf".into()),
                },
            })
            .collect(),
    };
    toml::to_string(&rec).unwrap_or_default()
}
