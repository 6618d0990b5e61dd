//! Conditional-dependence graphs read off a precision matrix.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::PrecisionEstimate;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Partial correlation `−Θ_ab / √(Θ_aa Θ_bb)`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

/// Edges `a < b` whose partial correlation exceeds `threshold` in magnitude.
pub fn dependency_graph(estimate: &PrecisionEstimate, labels: &[String], threshold: f64) -> DependencyGraph {
    let p = estimate.dim();
    assert_eq!(labels.len(), p, "one label per node");
    let mut edges = Vec::new();
    for a in 0..p {
        for b in (a + 1)..p {
            let weight = estimate.partial_correlation(a, b);
            if weight.abs() > threshold {
                edges.push(Edge { a, b, weight });
            }
        }
    }
    DependencyGraph {
        nodes: labels.to_vec(),
        edges,
    }
}

impl DependencyGraph {
    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.iter().any(|e| {
            let (x, y) = (&self.nodes[e.a], &self.nodes[e.b]);
            (x == a && y == b) || (x == b && y == a)
        })
    }

    pub fn neighbours(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.a == node {
                    Some(e.b)
                } else if e.b == node {
                    Some(e.a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// `node_a,node_b,weight` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_a,node_b,weight\n");
        for e in &self.edges {
            writeln!(out, "{},{},{:.6}", self.nodes[e.a], self.nodes[e.b], e.weight).unwrap();
        }
        out
    }

    /// Undirected DOT graph with the partial correlation on each edge.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("graph \"{name}\" {{\n");
        for node in &self.nodes {
            writeln!(out, "  \"{node}\";").unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  \"{}\" -- \"{}\" [weight={:.6}, label=\"{:.3}\"];",
                self.nodes[e.a], self.nodes[e.b], e.weight, e.weight
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spd_inverse, Matrix};

    fn estimate(theta: Matrix) -> PrecisionEstimate {
        let sigma = spd_inverse(&theta).unwrap();
        PrecisionEstimate {
            theta,
            sigma,
            objective_trace: vec![],
            converged: true,
            iterations: 1,
            jitter_added: false,
        }
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("h{i:02}")).collect()
    }

    #[test]
    fn diagonal_precision_has_no_edges() {
        let g = dependency_graph(&estimate(Matrix::identity(4, 4) * 2.0), &labels(4), 0.01);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn ar1_precision_is_a_chain() {
        // Precision of a stationary AR(1) with coefficient φ is tridiagonal.
        let q = 24;
        let phi: f64 = 0.7;
        let theta = Matrix::from_fn(q, q, |i, j| {
            if i == j {
                if i == 0 || i == q - 1 {
                    1.0
                } else {
                    1.0 + phi * phi
                }
            } else if (i as i64 - j as i64).abs() == 1 {
                -phi
            } else {
                0.0
            }
        });
        let g = dependency_graph(&estimate(theta), &labels(q), 0.01);
        assert_eq!(g.edges.len(), q - 1);
        for (k, e) in g.edges.iter().enumerate() {
            assert_eq!((e.a, e.b), (k, k + 1));
            assert!(e.weight > 0.0 && e.weight < 1.0);
        }
        assert_eq!(g.neighbours(5), vec![4, 6]);
        let none = dependency_graph(&estimate(Matrix::identity(3, 3)), &labels(3), 1.0);
        assert!(none.edges.is_empty());
    }

    #[test]
    fn exports() {
        let theta = Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let g = dependency_graph(&estimate(theta), &["a".into(), "b".into()], 0.01);
        assert_eq!(g.to_csv(), "node_a,node_b,weight\na,b,0.500000\n");
        let dot = g.to_dot("t");
        assert!(dot.starts_with("graph \"t\" {"));
        assert!(dot.contains("\"a\" -- \"b\""));
        assert!(g.has_edge("b", "a"));
    }
}
