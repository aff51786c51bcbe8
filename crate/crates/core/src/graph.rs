//! Communication topology among DG controllers.
//!
//! `a[i][j] > 0` means node `i` receives information from node `j`
//! (directed edge `j -> i`). Pinning gains `b[i] > 0` mark the nodes that see
//! the voltage reference directly.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::GraphError;

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: DMatrix<f64>,
    pinning: DVector<f64>,
}

impl CommGraph {
    /// Validates and builds a graph from a dense adjacency matrix and pinning vector.
    pub fn new(adjacency: DMatrix<f64>, pinning: DVector<f64>) -> Result<Self, GraphError> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n || pinning.len() != n {
            return Err(GraphError::DimensionMismatch {
                rows: adjacency.nrows(),
                cols: adjacency.ncols(),
                pins: pinning.len(),
            });
        }
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..n {
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(GraphError::BadWeight { i, j, value: a });
                }
                if i == j && a != 0.0 {
                    return Err(GraphError::SelfLoop { node: i });
                }
            }
            let b = pinning[i];
            if !b.is_finite() || b < 0.0 {
                return Err(GraphError::BadPinning { node: i, value: b });
            }
        }
        if pinning.iter().all(|&b| b == 0.0) {
            return Err(GraphError::NoPinnedNode);
        }

        // Breadth-first search from all pinned nodes along j -> i edges.
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| pinning[i] > 0.0).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && adjacency[(i, j)] > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(GraphError::Unreachable { node });
        }

        let graph = Self { adjacency, pinning };
        if let Some(node) = (0..n).find(|&i| graph.gain(i) <= 0.0) {
            return Err(GraphError::ZeroGain { node });
        }
        Ok(graph)
    }

    /// Builds a graph from `(receiver, sender, weight)` triples. With
    /// `undirected`, every edge is mirrored.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        undirected: bool,
        pinned: &[(usize, f64)],
    ) -> Result<Self, GraphError> {
        let mut adjacency = DMatrix::zeros(n, n);
        let mut pinning = DVector::zeros(n);
        let check = |node: usize| {
            if node >= n {
                Err(GraphError::NodeOutOfRange { node, n })
            } else {
                Ok(node)
            }
        };
        for &(i, j, w) in edges {
            let (i, j) = (check(i)?, check(j)?);
            adjacency[(i, j)] = w;
            if undirected {
                adjacency[(j, i)] = w;
            }
        }
        for &(i, b) in pinned {
            pinning[check(i)?] = b;
        }
        Self::new(adjacency, pinning)
    }

    /// Undirected unit-weight chain `0 - 1 - ... - (n-1)` with node 0 pinned.
    pub fn chain(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i, i - 1, 1.0)).collect();
        Self::from_edges(n, &edges, true, &[(0, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.pinning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinning.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn pinning(&self, i: usize) -> f64 {
        self.pinning[i]
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn pinning_vector(&self) -> &DVector<f64> {
        &self.pinning
    }

    /// In-degree `d_i = sum_j a_ij`.
    pub fn in_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }

    /// `d_i + b_i`, the normalizer of the consensus laws.
    pub fn gain(&self, i: usize) -> f64 {
        self.in_degree(i) + self.pinning[i]
    }

    /// Nodes `j` with `a_ij > 0`, together with the weight.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len()).filter_map(move |j| {
            let a = self.adjacency[(i, j)];
            (a > 0.0).then_some((j, a))
        })
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            l[(i, i)] = self.in_degree(i);
        }
        l
    }

    /// `L + diag(b)`.
    pub fn augmented_laplacian(&self) -> DMatrix<f64> {
        self.laplacian() + DMatrix::from_diagonal(&self.pinning)
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.len();
        let mut adjacency = DMatrix::zeros(n, n);
        let mut pinning = DVector::zeros(n);
        for i in 0..n {
            pinning[perm[i]] = self.pinning[i];
            for j in 0..n {
                adjacency[(perm[i], perm[j])] = self.adjacency[(i, j)];
            }
        }
        Self::new(adjacency, pinning)
    }

    pub fn split_for_tradeoff(&self, mode: TradeoffMode) -> TradeoffSplit {
        self.split_with_pinning(mode, None)
    }

    /// As [`split_for_tradeoff`](Self::split_for_tradeoff), but with an
    /// explicit voltage pinning vector `B_V` (ignored in sharing-only mode).
    pub fn split_with_pinning(&self, mode: TradeoffMode, pinning_v: Option<&DVector<f64>>) -> TradeoffSplit {
        let n = self.len();
        let zero = DMatrix::zeros(n, n);
        let b = pinning_v.cloned().unwrap_or_else(|| self.pinning.clone());
        let (laplacian_v, pinning_v, laplacian_q) = match mode {
            TradeoffMode::VoltageOnly => (self.laplacian(), b, zero),
            TradeoffMode::SharingOnly => (zero.clone(), DVector::zeros(n), self.laplacian()),
            TradeoffMode::SharingWithTightRegulation => (zero, b, self.laplacian()),
        };
        TradeoffSplit {
            mode,
            laplacian_v,
            pinning_v,
            laplacian_q,
        }
    }
}

/// Which objectives the consensus errors encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TradeoffMode {
    #[default]
    VoltageOnly,
    SharingOnly,
    SharingWithTightRegulation,
}

impl FromStr for TradeoffMode {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voltage-only" => Ok(Self::VoltageOnly),
            "sharing-only" => Ok(Self::SharingOnly),
            "sharing-with-tight-regulation" => Ok(Self::SharingWithTightRegulation),
            other => Err(GraphError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for TradeoffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::VoltageOnly => "voltage-only",
            Self::SharingOnly => "sharing-only",
            Self::SharingWithTightRegulation => "sharing-with-tight-regulation",
        })
    }
}

/// Voltage Laplacian `L_V`, voltage pinning `B_V` (as its diagonal) and
/// reactive-sharing Laplacian `L_Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffSplit {
    pub mode: TradeoffMode,
    pub laplacian_v: DMatrix<f64>,
    pub pinning_v: DVector<f64>,
    pub laplacian_q: DMatrix<f64>,
}

impl TradeoffSplit {
    /// Neighbour weight used in the voltage errors.
    pub fn weight_v(&self, i: usize, j: usize) -> f64 {
        -self.laplacian_v[(i, j)]
    }

    /// Neighbour weight used in the reactive-sharing error.
    pub fn weight_q(&self, i: usize, j: usize) -> f64 {
        -self.laplacian_q[(i, j)]
    }
}
