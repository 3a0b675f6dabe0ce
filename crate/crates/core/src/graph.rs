//! Signed interaction graph built from the fitted matrices.
//!
//! Nodes are the p genes followed by hidden regulators `h1..hk`. Every
//! matrix entry above the threshold becomes a directed edge, oriented from
//! the regulating variable to the regulated one:
//!
//! | block | source            | target          |
//! |-------|-------------------|-----------------|
//! | B     | gene j at t−1     | gene i at t     |
//! | Z     | hidden j at t     | gene i at t     |
//! | A     | gene j at t−1     | hidden i at t   |
//! | F     | hidden j at t−1   | hidden i at t   |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::em::Block;
use crate::model::ModelParams;
use crate::{NetinfError, Result, Scalar};

/// Default magnitude threshold: numerical zero.
pub const DEFAULT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Gene,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Activation,
    Inhibition,
}

impl Sign {
    pub fn of(weight: f64) -> Self {
        if weight > 0.0 {
            Sign::Activation
        } else {
            Sign::Inhibition
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Activation => "activation",
            Sign::Inhibition => "inhibition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Index into [`InteractionGraph::nodes`].
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub sign: Sign,
    pub block: Block,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

pub fn hidden_label(j: usize) -> String {
    format!("h{}", j + 1)
}

/// Builds the graph of every entry with `|value| > threshold`.
///
/// Edges are ordered by block (B, Z, A, F), then target row, then source
/// column.
pub fn assemble_graph<T: Scalar>(
    params: &ModelParams<T>,
    gene_names: &[String],
    threshold: f64,
) -> Result<InteractionGraph> {
    if !(threshold >= 0.0) {
        return Err(NetinfError::InvalidArgument(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let (p, k) = (params.p(), params.k());
    if gene_names.len() != p {
        return Err(NetinfError::DimensionMismatch(format!(
            "{} gene names for a model with p={p}",
            gene_names.len()
        )));
    }
    let mut nodes: Vec<Node> = gene_names
        .iter()
        .map(|n| Node { name: n.clone(), kind: NodeKind::Gene })
        .collect();
    nodes.extend((0..k).map(|j| Node { name: hidden_label(j), kind: NodeKind::Hidden }));

    let mut edges = Vec::new();
    let mut add = |m: &DMatrix<T>, block: Block, src_off: usize, dst_off: usize| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let w = m[(i, j)].to_f64().unwrap_or(f64::NAN);
                if w.abs() > threshold {
                    edges.push(Edge {
                        source: src_off + j,
                        target: dst_off + i,
                        weight: w,
                        sign: Sign::of(w),
                        block,
                    });
                }
            }
        }
    };
    add(&params.b, Block::B, 0, 0);
    add(&params.z, Block::Z, p, 0);
    add(&params.a, Block::A, 0, p);
    add(&params.f, Block::F, p, p);
    Ok(InteractionGraph { nodes, edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

/// Node degrees sorted descending; ties keep node order.
pub fn degree_ranking(
    g: &InteractionGraph,
    direction: Direction,
    restrict_block: Option<Block>,
) -> Vec<(String, usize)> {
    let mut degree = vec![0usize; g.nodes.len()];
    for e in &g.edges {
        if restrict_block.is_some_and(|b| b != e.block) {
            continue;
        }
        let node = match direction {
            Direction::In => e.target,
            Direction::Out => e.source,
        };
        degree[node] += 1;
    }
    let mut ranked: Vec<(usize, usize)> = degree.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .map(|(i, d)| (g.nodes[i].name.clone(), d))
        .collect()
}

/// Edges touching `center` plus the nodes they reach (radius 1).
pub fn neighborhood(g: &InteractionGraph, center: &str) -> Result<InteractionGraph> {
    let idx = g
        .nodes
        .iter()
        .position(|n| n.name == center)
        .ok_or_else(|| NetinfError::InvalidArgument(format!("no node named '{center}'")))?;
    let kept: Vec<&Edge> = g
        .edges
        .iter()
        .filter(|e| e.source == idx || e.target == idx)
        .collect();
    let mut members = BTreeSet::new();
    members.insert(idx);
    for e in &kept {
        members.insert(e.source);
        members.insert(e.target);
    }
    let remap: std::collections::HashMap<usize, usize> =
        members.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    Ok(InteractionGraph {
        nodes: members.iter().map(|&i| g.nodes[i].clone()).collect(),
        edges: kept
            .into_iter()
            .map(|e| Edge {
                source: remap[&e.source],
                target: remap[&e.target],
                ..e.clone()
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    EdgeCsv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = NetinfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "edge-csv" | "csv" => Ok(ExportFormat::EdgeCsv),
            "json" => Ok(ExportFormat::Json),
            other => Err(NetinfError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn export_graph(g: &InteractionGraph, format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::Dot => Ok(to_dot(g)),
        ExportFormat::EdgeCsv => to_edge_csv(g),
        ExportFormat::Json => Ok(serde_json::to_string_pretty(g)? + "\n"),
    }
}

pub fn export_graph_named(g: &InteractionGraph, format: &str) -> Result<String> {
    export_graph(g, format.parse()?)
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(g: &InteractionGraph) -> String {
    let mut out = String::from("digraph netinf {\n");
    for node in &g.nodes {
        let shape = match node.kind {
            NodeKind::Gene => "ellipse",
            NodeKind::Hidden => "box",
        };
        let _ = writeln!(out, "  {} [shape={shape}];", dot_id(&node.name));
    }
    for e in &g.edges {
        let color = match e.sign {
            Sign::Activation => "blue",
            Sign::Inhibition => "red",
        };
        let _ = writeln!(
            out,
            "  {} -> {} [color={color}, label=\"{:.3}\"];",
            dot_id(&g.nodes[e.source].name),
            dot_id(&g.nodes[e.target].name),
            e.weight
        );
    }
    out.push_str("}\n");
    out
}

fn to_edge_csv(g: &InteractionGraph) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "target", "weight", "sign", "block"])?;
    for e in &g.edges {
        w.write_record([
            g.nodes[e.source].name.as_str(),
            g.nodes[e.target].name.as_str(),
            &format!("{}", e.weight),
            e.sign.as_str(),
            e.block.name(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| NetinfError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| NetinfError::Parse(e.to_string()))
}

/// Parses the JSON export back into a graph.
pub fn graph_from_json(text: &str) -> Result<InteractionGraph> {
    let g: InteractionGraph = serde_json::from_str(text)?;
    for e in &g.edges {
        if e.source >= g.nodes.len() || e.target >= g.nodes.len() {
            return Err(NetinfError::Parse("edge refers to a missing node".into()));
        }
    }
    Ok(g)
}
