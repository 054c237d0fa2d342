//! Communication topologies and doubly stochastic weight matrices.
//!
//! The network is a strongly connected directed graph with a weight matrix
//! whose rows and columns each sum to one, every positive entry bounded away
//! from zero, and a self-loop at every node. The synthetic experiments use an
//! undirected Erdős–Rényi topology weighted by the Metropolis–Hastings rule;
//! arbitrary doubly stochastic matrices can be supplied through
//! [`NetworkModel::from_weights`] and checked with [`NetworkModel::validate`].

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on row and column sums of the weight matrix.
pub const STOCHASTICITY_TOL: f64 = 1e-12;

/// How many fresh draws [`erdos_renyi`] makes before giving up on
/// connectivity.
pub const CONNECTIVITY_RETRY_BUDGET: usize = 1000;

/// Undirected simple graph stored as sorted adjacency lists (no self loops).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            neighbors: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::InvalidGraph(format!("self loop at node {i}")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidGraph(format!(
                "edge ({i},{j}) out of range for {} nodes",
                self.n
            )));
        }
        if !self.neighbors[i].contains(&j) {
            self.neighbors[i].push(j);
            self.neighbors[j].push(i);
            self.neighbors[i].sort_unstable();
            self.neighbors[j].sort_unstable();
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        reachable_from(0, self.n, |i| self.neighbors[i].iter().copied()) == self.n
    }
}

fn reachable_from<I>(start: usize, n: usize, succ: impl Fn(usize) -> I) -> usize
where
    I: Iterator<Item = usize>,
{
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in succ(u) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// Samples a connected Erdős–Rényi graph: each pair is an edge with
/// probability `p`, redrawn (with an advanced seed stream) until connected.
///
/// Deterministic given `seed`. Fails with the attempt count once the retry
/// budget is exhausted.
pub fn erdos_renyi(n_agents: usize, p: f64, seed: u64) -> Result<Adjacency> {
    if n_agents < 2 {
        return Err(Error::InvalidGraph("need at least 2 agents".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidGraph(format!(
            "connectivity parameter must lie in [0, 1], got {p}"
        )));
    }
    for attempt in 0..CONNECTIVITY_RETRY_BUDGET {
        let mut rng = rng::data_rng(rng::derive_seed(seed, attempt as u64));
        let mut g = Adjacency::new(n_agents);
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                if rng.random_bool(p) {
                    g.add_edge(i, j)?;
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GraphGeneration {
        attempts: CONNECTIVITY_RETRY_BUDGET,
        reason: format!("no connected graph for n={n_agents}, p={p}"),
    })
}

/// Directed network with a doubly stochastic weight matrix.
///
/// Neighbor sets always include the node itself; `eta` is the smallest
/// strictly positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    n_agents: usize,
    weights: Vec<Vec<f64>>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
    eta: f64,
}

impl NetworkModel {
    /// Builds a model from an explicit weight matrix.
    ///
    /// Only shape and finiteness are enforced here; neighbor sets are derived
    /// from the positive off-diagonal entries (`j` is an in-neighbor of `i`
    /// iff `w_ij > 0`). Run [`NetworkModel::validate`] for the full
    /// stochasticity and connectivity report.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidWeights("empty matrix".into()));
        }
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidWeights(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() {
                    return Err(Error::InvalidWeights(format!("w[{i}][{j}] = {w}")));
                }
                if w < 0.0 {
                    return Err(Error::InvalidWeights(format!(
                        "negative weight w[{i}][{j}] = {w}"
                    )));
                }
            }
        }
        let mut in_neighbors = vec![Vec::new(); n];
        let mut out_neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && weights[i][j] > 0.0 {
                    in_neighbors[i].push(j);
                }
            }
            in_neighbors[i].push(i);
            in_neighbors[i].sort_unstable();
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && weights[j][i] > 0.0 {
                    out_neighbors[i].push(j);
                }
            }
            out_neighbors[i].push(i);
            out_neighbors[i].sort_unstable();
        }
        let eta = weights
            .iter()
            .flatten()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            n_agents: n,
            weights,
            in_neighbors,
            out_neighbors,
            eta,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    /// In-neighbors of `i`, including `i`, sorted.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Out-neighbors of `i`, including `i`, sorted.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    /// Smallest strictly positive weight.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Checks strong connectivity, double stochasticity and the positive
    /// weight floor. Failures are reported, not raised.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n_agents;
        let mut row_stochastic = true;
        let mut column_stochastic = true;
        for i in 0..n {
            let rsum: f64 = self.weights[i].iter().sum();
            if (rsum - 1.0).abs() > STOCHASTICITY_TOL {
                row_stochastic = false;
            }
            let csum: f64 = (0..n).map(|r| self.weights[r][i]).sum();
            if (csum - 1.0).abs() > STOCHASTICITY_TOL {
                column_stochastic = false;
            }
        }
        let self_loops_positive = (0..n).all(|i| self.weights[i][i] > 0.0);
        // Strong connectivity over the positive-weight digraph: every node
        // reaches node 0 and node 0 reaches every node.
        let forward = reachable_from(0, n, |i| {
            (0..n).filter(move |&j| j != i).filter({
                let w = &self.weights;
                move |&j| w[j][i] > 0.0 // i -> j edge: j receives from i
            })
        });
        let backward = reachable_from(0, n, |i| {
            (0..n).filter(move |&j| j != i).filter({
                let w = &self.weights;
                move |&j| w[i][j] > 0.0
            })
        });
        let strongly_connected = forward == n && backward == n;
        ValidationReport {
            strongly_connected,
            row_stochastic,
            column_stochastic,
            self_loops_positive,
            eta: self.eta,
        }
    }

    /// Writes the weight matrix as header-less CSV, one row per line.
    pub fn save_weights_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        for row in &self.weights {
            let line: Vec<String> = row.iter().map(|w| format!("{w}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a weight matrix saved by [`NetworkModel::save_weights_csv`].
    pub fn load_weights_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut weights = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            weights.push(row);
        }
        Self::from_weights(weights)
    }
}

/// Per-condition outcome of [`NetworkModel::validate`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub strongly_connected: bool,
    pub row_stochastic: bool,
    pub column_stochastic: bool,
    pub self_loops_positive: bool,
    /// Smallest strictly positive weight observed.
    pub eta: f64,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.strongly_connected
            && self.row_stochastic
            && self.column_stochastic
            && self.self_loops_positive
            && self.eta > 0.0
    }
}

/// Metropolis–Hastings weights on a connected undirected graph:
/// `w_ij = 1 / (1 + max(deg_i, deg_j))` for each edge, diagonal filling the
/// remainder. The result is symmetric and doubly stochastic.
pub fn metropolis_hastings_weights(adjacency: &Adjacency) -> Result<NetworkModel> {
    if !adjacency.is_connected() {
        return Err(Error::InvalidGraph(
            "Metropolis-Hastings weights require a connected graph".into(),
        ));
    }
    let n = adjacency.num_nodes();
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut off_diag = 0.0;
        for &j in adjacency.neighbors(i) {
            let w = 1.0 / (1.0 + adjacency.degree(i).max(adjacency.degree(j)) as f64);
            weights[i][j] = w;
            off_diag += w;
        }
        weights[i][i] = 1.0 - off_diag;
    }
    NetworkModel::from_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_full_probability_gives_single_edge() {
        let g = erdos_renyi(2, 1.0, 3).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn same_seed_reproduces_edge_set() {
        let a = erdos_renyi(48, 0.3, 12345).unwrap();
        let b = erdos_renyi(48, 0.3, 12345).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        let c = erdos_renyi(48, 0.3, 54321).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_probability_exhausts_retry_budget() {
        // An empty graph can never connect; the generator must give up and
        // report the attempt count.
        let err = erdos_renyi(5, 0.0, 1).unwrap_err();
        match err {
            Error::GraphGeneration { attempts, .. } => {
                assert_eq!(attempts, CONNECTIVITY_RETRY_BUDGET)
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn metropolis_hastings_on_two_node_path() {
        let g = Adjacency::from_edges(2, &[(0, 1)]).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((model.weight(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn metropolis_hastings_on_three_node_star() {
        // Node 0 is the center with degree 2; leaves have degree 1.
        let g = Adjacency::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        let third = 1.0 / 3.0;
        assert!((model.weight(0, 1) - third).abs() < 1e-15);
        assert!((model.weight(0, 2) - third).abs() < 1e-15);
        assert!((model.weight(0, 0) - third).abs() < 1e-15);
        assert!((model.weight(1, 0) - third).abs() < 1e-15);
        assert!((model.weight(1, 1) - 2.0 * third).abs() < 1e-15);
        assert!((model.weight(2, 2) - 2.0 * third).abs() < 1e-15);
        // Hand-checked row and column sums.
        let report = model.validate();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn metropolis_hastings_rejects_disconnected_input() {
        let g = Adjacency::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(metropolis_hastings_weights(&g).is_err());
    }

    #[test]
    fn column_sums_are_one_on_random_graphs() {
        for seed in 0..5u64 {
            let g = erdos_renyi(12, 0.4, seed).unwrap();
            let model = metropolis_hastings_weights(&g).unwrap();
            let n = model.n_agents();
            for j in 0..n {
                // Brute-force column summation.
                let csum: f64 = (0..n).map(|i| model.weight(i, j)).sum();
                assert!(
                    (csum - 1.0).abs() <= STOCHASTICITY_TOL,
                    "column {j} sums to {csum}"
                );
            }
        }
    }

    #[test]
    fn metropolis_hastings_weights_are_symmetric() {
        let g = erdos_renyi(15, 0.3, 99).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(model.weight(i, j), model.weight(j, i));
            }
        }
    }

    #[test]
    fn eta_is_minimum_positive_weight() {
        let g = erdos_renyi(10, 0.5, 4).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        let mut min_pos = f64::INFINITY;
        for i in 0..10 {
            for j in 0..10 {
                let w = model.weight(i, j);
                if w > 0.0 {
                    min_pos = min_pos.min(w);
                }
            }
        }
        assert_eq!(model.eta(), min_pos);
        assert!(model.eta() > 0.0);
    }

    #[test]
    fn validate_flags_row_but_not_column_stochastic() {
        let model =
            NetworkModel::from_weights(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let report = model.validate();
        assert!(report.row_stochastic);
        assert!(!report.column_stochastic);
        assert!(!report.all_pass());
    }

    #[test]
    fn validate_flags_unreachable_node() {
        // Node 2 never sends: column 2 is zero off-diagonal, so nothing is
        // reachable from it in the transpose direction.
        let model = NetworkModel::from_weights(vec![
            vec![0.5, 0.25, 0.25],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let report = model.validate();
        assert!(!report.strongly_connected);
    }

    #[test]
    fn neighbor_sets_include_self() {
        let g = Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        assert_eq!(model.in_neighbors(0), &[0, 1]);
        assert_eq!(model.in_neighbors(1), &[0, 1, 2]);
        assert_eq!(model.out_neighbors(2), &[1, 2]);
    }

    #[test]
    fn weights_csv_round_trip() {
        let g = erdos_renyi(8, 0.5, 21).unwrap();
        let model = metropolis_hastings_weights(&g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        model.save_weights_csv(&path).unwrap();
        let loaded = NetworkModel::load_weights_csv(&path).unwrap();
        assert_eq!(model, loaded);
    }
}
