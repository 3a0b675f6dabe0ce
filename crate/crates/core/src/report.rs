//! Plain-text fit summaries and the CSV log-likelihood trace.

use std::fmt::Write as _;

use crate::em::{Block, FitResult};
use crate::graph::{degree_ranking, Direction, InteractionGraph, NodeKind};
use crate::model::Dims;
use crate::selection::{fmt_num, SelectionTable};

/// Genes with many incoming edges in the published T-cell network.
pub const TCELL_IN_HUBS: [&str; 6] = ["TRAF5", "JUND", "CDK4", "CASP4", "CD69", "C3X1"];
/// Genes with many outgoing edges in the published T-cell network.
pub const TCELL_OUT_HUBS: [&str; 4] = ["FYB", "CCNA2", "AKT1", "CASP8"];

/// `iteration,loglik` with iteration 0 at the starting parameters.
pub fn loglik_trace_csv(fit: &FitResult<f64>) -> String {
    let mut out = String::from("iteration,loglik\n");
    let _ = writeln!(out, "0,{}", fmt_num(fit.initial_loglik));
    for (i, l) in fit.loglik_trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_num(*l));
    }
    out
}

/// Largest drop between consecutive M-step log-likelihoods (0 when
/// monotone). The starting point is left out: it need not lie inside the
/// budget set, so the first constrained M-step may end below it.
pub fn max_loglik_decrease(fit: &FitResult<f64>) -> f64 {
    fit.loglik_trace
        .windows(2)
        .fold(0.0f64, |worst, w| worst.max(w[0] - w[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HubComparison {
    pub direction: Direction,
    pub reference: Vec<String>,
    /// Gene nodes with the highest degree, ties in gene order.
    pub top: Vec<(String, usize)>,
    /// Reference genes found in `top`.
    pub overlap: Vec<String>,
    /// `(gene, degree, rank)` for every reference gene present in the
    /// graph; rank is 1-based among genes.
    pub reference_ranks: Vec<(String, usize, usize)>,
}

pub fn compare_hubs(
    g: &InteractionGraph,
    direction: Direction,
    reference: &[&str],
    top_n: usize,
) -> HubComparison {
    let genes: Vec<(String, usize)> = degree_ranking(g, direction, None)
        .into_iter()
        .filter(|(name, _)| {
            g.nodes
                .iter()
                .any(|n| n.kind == NodeKind::Gene && &n.name == name)
        })
        .collect();
    let top: Vec<(String, usize)> = genes.iter().take(top_n).cloned().collect();
    let overlap = reference
        .iter()
        .filter(|r| top.iter().any(|(n, _)| n == *r))
        .map(|r| r.to_string())
        .collect();
    let reference_ranks = reference
        .iter()
        .filter_map(|r| {
            genes
                .iter()
                .position(|(n, _)| n == r)
                .map(|i| (r.to_string(), genes[i].1, i + 1))
        })
        .collect();
    HubComparison {
        direction,
        reference: reference.iter().map(|s| s.to_string()).collect(),
        top,
        overlap,
        reference_ranks,
    }
}

fn render_hubs(out: &mut String, cmp: &HubComparison) {
    let label = match cmp.direction {
        Direction::In => "in-degree",
        Direction::Out => "out-degree",
    };
    let _ = writeln!(out, "top {label} genes:");
    for (i, (name, d)) in cmp.top.iter().enumerate() {
        let _ = writeln!(out, "  {:>2}. {name} ({d})", i + 1);
    }
    let _ = writeln!(out, "reference {label} hubs: {}", cmp.reference.join(", "));
    for r in &cmp.reference {
        match cmp.reference_ranks.iter().find(|(n, _, _)| n == r) {
            Some((_, d, rank)) => {
                let _ = writeln!(out, "  {r}: degree {d}, rank {rank}");
            }
            None => {
                let _ = writeln!(out, "  {r}: not in dataset");
            }
        }
    }
    let _ = writeln!(
        out,
        "overlap with top {}: {}/{} ({})",
        cmp.top.len(),
        cmp.overlap.len(),
        cmp.reference.len(),
        if cmp.overlap.is_empty() { "none".to_string() } else { cmp.overlap.join(", ") }
    );
}

pub struct ReportInput<'a> {
    pub dims: Dims,
    pub fit: &'a FitResult<f64>,
    pub selection: Option<&'a SelectionTable<f64>>,
    pub graph: &'a InteractionGraph,
    pub threshold: f64,
}

/// Renders the text report. Output depends only on the inputs, with
/// shortest round-trip decimals for every number.
pub fn render_report(input: &ReportInput<'_>) -> String {
    let d = input.dims;
    let fit = input.fit;
    let mut out = String::new();
    let _ = writeln!(out, "netinf report");
    let _ = writeln!(out, "genes (p): {}", d.p);
    let _ = writeln!(out, "hidden dimension (k): {}", d.k);
    let _ = writeln!(out, "time points (T): {}", d.n_times);
    let _ = writeln!(out, "replicates: {}", d.n_reps);
    let _ = writeln!(out, "observations N: {}", d.observation_count());
    let _ = writeln!(out, "dense parameter count P: {}", d.param_count());
    let _ = writeln!(out, "nonzero coefficients P_eff: {}", fit.nonzero_counts.total());
    let _ = writeln!(
        out,
        "note: AICc is computed with P_eff; the dense count P is the same for every budget"
    );

    out.push_str("\n[fit]\n");
    let _ = writeln!(out, "EM iterations: {}", fit.n_iter);
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "initial loglik: {}", fmt_num(fit.initial_loglik));
    let _ = writeln!(out, "final loglik: {}", fmt_num(fit.final_loglik()));
    let drop = max_loglik_decrease(fit);
    let _ = writeln!(
        out,
        "loglik trace monotone after the first M-step: {}",
        if drop <= 0.0 { "yes".to_string() } else { format!("no (largest drop {})", fmt_num(drop)) }
    );
    let nz = fit.nonzero_counts;
    let _ = writeln!(out, "nonzeros: Z={} B={} F={} A={}", nz.z, nz.b, nz.f, nz.a);

    if let Some(table) = input.selection {
        let best = table.best();
        out.push_str("\n[selection]\n");
        let _ = writeln!(out, "grid points evaluated: {}", table.rows.len());
        let _ = writeln!(
            out,
            "converged grid points: {}",
            table.rows.iter().filter(|r| r.converged).count()
        );
        let [sz, sb, sf, sa] = best.penalties;
        let _ = writeln!(
            out,
            "selected (s_Z, s_B, s_F, s_A): ({}, {}, {}, {}), k={}",
            fmt_num(sz),
            fmt_num(sb),
            fmt_num(sf),
            fmt_num(sa),
            best.k
        );
        let _ = writeln!(out, "selected AICc: {}", fmt_num(best.aicc));
    }

    let g = input.graph;
    out.push_str("\n[graph]\n");
    let _ = writeln!(out, "edge threshold: {}", fmt_num(input.threshold));
    let _ = writeln!(out, "edges: {}", g.edges.len());
    for block in [Block::B, Block::Z, Block::A, Block::F] {
        let n = g.edges.iter().filter(|e| e.block == block).count();
        let _ = writeln!(out, "  {}: {n}", block.name());
    }
    out.push('\n');
    render_hubs(&mut out, &compare_hubs(g, Direction::In, &TCELL_IN_HUBS, 10));
    out.push('\n');
    render_hubs(&mut out, &compare_hubs(g, Direction::Out, &TCELL_OUT_HUBS, 10));
    out
}
