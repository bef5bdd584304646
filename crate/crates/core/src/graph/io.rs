//! JSON Lines graph files.
//!
//! One graph per line:
//! `{"nodes": [[f64,..],..], "edges": [{"src": 0, "dst": 1, "attr": [f64,..]}], "label": 0}`.
//! `attr` may be omitted on every edge of a file, in which case edges get
//! the single attribute `[1.0]`; mixing present and missing attributes is an
//! error. `label` is optional.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Edge, Graph};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RawEdge {
    src: usize,
    dst: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attr: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<Vec<f64>>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

pub fn load_graphs(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_graphs(BufReader::new(file))
}

/// Parses JSON Lines from any reader. Blank lines are skipped.
pub fn parse_graphs<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut raws = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawGraph = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        raws.push(raw);
    }

    let with_attr = raws.iter().flat_map(|g| &g.edges).filter(|e| e.attr.is_some()).count();
    let total_edges: usize = raws.iter().map(|g| g.edges.len()).sum();
    let edge_dim = if with_attr == 0 {
        1
    } else {
        raws.iter()
            .flat_map(|g| &g.edges)
            .find_map(|e| e.attr.as_ref().map(Vec::len))
            .unwrap_or(1)
    };

    let mut graphs = Vec::with_capacity(raws.len());
    let mut feature_dim = None;
    for (gi, raw) in raws.into_iter().enumerate() {
        let bad = |message: String| Error::InvalidGraph { graph: gi, message };
        let d = raw.nodes.first().map_or(0, Vec::len);
        if raw.nodes.iter().any(|row| row.len() != d) {
            return Err(bad("node feature rows have inconsistent widths".into()));
        }
        match feature_dim {
            None => feature_dim = Some(d),
            Some(expected) if expected != d => {
                return Err(bad(format!("node feature width {d}, previous graphs have {expected}")));
            }
            _ => {}
        }
        let mut edges = Vec::with_capacity(raw.edges.len());
        for (ei, e) in raw.edges.into_iter().enumerate() {
            let attr = match e.attr {
                Some(a) => a,
                None if with_attr == 0 => vec![1.0],
                None => {
                    return Err(bad(format!(
                        "edge {ei} has no attr but {with_attr} of {total_edges} edges in the file do"
                    )))
                }
            };
            if attr.len() != edge_dim {
                return Err(bad(format!(
                    "edge {ei} has attribute width {}, expected {edge_dim}",
                    attr.len()
                )));
            }
            edges.push(Edge::new(e.src, e.dst, attr));
        }
        let g = Graph::from_rows(&raw.nodes, edges, edge_dim, raw.label)
            .map_err(|e| bad(e.to_string()))?;
        graphs.push(g);
    }

    let num_classes = graphs
        .iter()
        .filter_map(Graph::label)
        .max()
        .map_or(1, |m| m + 1);
    Dataset::new(graphs, num_classes)
}

pub fn save_graphs(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graphs(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn write_graphs<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    for g in &data.graphs {
        let raw = RawGraph {
            nodes: (0..g.num_nodes()).map(|v| g.node_features().row(v).to_vec()).collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| RawEdge {
                    src: e.src,
                    dst: e.dst,
                    attr: Some(e.attr.clone()),
                })
                .collect(),
            label: g.label(),
        };
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
