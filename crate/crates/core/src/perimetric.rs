//! Perimetric storage on an s x s sensor grid.
//!
//! The 4(s - 1) boundary nodes store, k interior nodes sense. Every
//! pre-routed packet travels along a shortest grid path, so it costs its
//! Manhattan distance in 1-hop transmissions. Multicast sharing is not
//! modelled; reported costs are upper bounds.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{BipartiteGraph, Code, CodeError, CodeParams};
use crate::field::{Field, FieldSpec};
use crate::seed::{self, mix64, tag};
use crate::sim::{evaluate_code, SelectionMode, TrialResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid side must be >= 3 (got {0})")]
    TooSmall(usize),
    #[error("ratio {ratio} gives k = {k} for n = {n}; need 1 <= k < n")]
    BadRatio { ratio: f64, k: usize, n: usize },
    #[error("k = {k} data nodes do not fit in {interior} interior points")]
    Crowded { k: usize, interior: usize },
    #[error(transparent)]
    Code(#[from] CodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// s, with N = s^2 nodes in total.
    pub side: usize,
    /// k / n.
    pub ratio: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(side: usize, ratio: f64, seed: u64) -> Result<Self, GridError> {
        let spec = GridSpec { side, ratio, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Side length for N total nodes (N must be a perfect square).
    pub fn side_for(total_nodes: usize) -> Option<usize> {
        let s = (total_nodes as f64).sqrt().round() as usize;
        (s * s == total_nodes).then_some(s)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.side < 3 {
            return Err(GridError::TooSmall(self.side));
        }
        let (k, n) = (self.k(), self.n());
        if k < 1 || k >= n || !self.ratio.is_finite() {
            return Err(GridError::BadRatio {
                ratio: self.ratio,
                k,
                n,
            });
        }
        let interior = (self.side - 2) * (self.side - 2);
        if k > interior {
            return Err(GridError::Crowded { k, interior });
        }
        Ok(())
    }

    pub fn total_nodes(&self) -> usize {
        self.side * self.side
    }

    /// Storage nodes: exact perimeter count 4(s - 1).
    pub fn n(&self) -> usize {
        4 * (self.side - 1)
    }

    pub fn k(&self) -> usize {
        (self.ratio * self.n() as f64).round().max(0.0) as usize
    }

    /// rho with k = rho * sqrt(N).
    pub fn rho(&self) -> f64 {
        self.k() as f64 / self.side as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }
}

/// Number of 1-hop transmissions between two grid nodes under greedy
/// geographic routing: the Manhattan distance.
pub fn hop_cost(a: Point, b: Point) -> u64 {
    (a.x.abs_diff(b.x) + a.y.abs_diff(b.y)) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub side: usize,
    /// Storage node j sits at storage_positions[j].
    pub storage_positions: Vec<Point>,
    /// Data node i sits at data_positions[i].
    pub data_positions: Vec<Point>,
}

/// Perimeter points clockwise from (0, 0): up the left edge, along the top,
/// down the right edge, back along the bottom.
pub fn perimeter(side: usize) -> Vec<Point> {
    let m = side as u32 - 1;
    let mut pts = Vec::with_capacity(4 * m as usize);
    pts.extend((0..m).map(|y| Point::new(0, y)));
    pts.extend((0..m).map(|x| Point::new(x, m)));
    pts.extend((1..=m).rev().map(|y| Point::new(m, y)));
    pts.extend((1..=m).rev().map(|x| Point::new(x, 0)));
    pts
}

/// Storage on the perimeter; k data nodes uniformly without replacement
/// over the interior, drawn from `(seed, PLACEMENT)`.
pub fn layout(spec: &GridSpec) -> Result<Placement, GridError> {
    spec.validate()?;
    let inner = spec.side - 2;
    let mut rng = seed::stream(spec.seed, tag::PLACEMENT, 0);
    let data_positions = index::sample(&mut rng, inner * inner, spec.k())
        .into_iter()
        .map(|p| Point::new((1 + p % inner) as u32, (1 + p / inner) as u32))
        .collect();
    Ok(Placement {
        side: spec.side,
        storage_positions: perimeter(spec.side),
        data_positions,
    })
}

/// Sum of hop costs over every pre-routed packet, duplicates included.
pub fn total_hops(placement: &Placement, graph: &BipartiteGraph) -> u64 {
    (0..graph.k())
        .map(|i| {
            let src = placement.data_positions[i];
            graph
                .draws(i)
                .iter()
                .map(|&j| hop_cost(src, placement.storage_positions[j as usize]))
                .sum::<u64>()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub total_hops: u64,
    /// total_hops / N.
    pub hops_per_node: f64,
    /// k * d(k).
    pub packets_prerouted: u64,
    /// Mean packets received per storage node.
    pub mean_store: f64,
    /// Population standard deviation of packets received per storage node.
    pub sd_store: f64,
}

pub fn cost_report(spec: &GridSpec, placement: &Placement, graph: &BipartiteGraph) -> CostReport {
    let hops = total_hops(placement, graph);
    let loads = graph.storage_loads();
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<usize>() as f64 / n;
    let var = loads.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    CostReport {
        total_hops: hops,
        hops_per_node: hops as f64 / spec.total_nodes() as f64,
        packets_prerouted: graph.total_draws() as u64,
        mean_store: mean,
        sd_store: var.sqrt(),
    }
}

/// Parameters for a batch of perimetric trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimetricConfig {
    pub grid: GridSpec,
    /// Degree constant; `None` uses 5 n / k.
    pub c: Option<f64>,
    pub field: FieldSpec,
    pub trials: usize,
    pub payload_len: usize,
}

impl PerimetricConfig {
    pub fn degree_constant(&self) -> f64 {
        self.c.unwrap_or(5.0 * self.grid.n() as f64 / self.grid.k() as f64)
    }

    pub fn code_params(&self, seed: u64) -> Result<CodeParams, GridError> {
        Ok(CodeParams::new(
            self.grid.k(),
            self.grid.n(),
            self.degree_constant(),
            self.field,
            seed,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerimetricTrial {
    pub seed: u64,
    pub cost: CostReport,
    pub result: TrialResult,
}

/// One trial: fresh placement and code from `trial_seed`, cost accounting,
/// and one decodability check with a uniform k-subset.
pub fn run_perimetric(cfg: &PerimetricConfig, field: &Field, trial_seed: u64) -> Result<PerimetricTrial, GridError> {
    let grid = GridSpec {
        seed: trial_seed,
        ..cfg.grid
    };
    let placement = layout(&grid)?;
    let code = Code::build(cfg.code_params(trial_seed)?, field)?;
    let cost = cost_report(&grid, &placement, &code.graph);
    let result = evaluate_code(&code, field, cfg.payload_len, SelectionMode::Uniform, trial_seed);
    Ok(PerimetricTrial {
        seed: trial_seed,
        cost,
        result,
    })
}

/// Trial t uses seed mix64(grid.seed, t).
pub fn run_perimetric_batch(cfg: &PerimetricConfig, field: &Field) -> Result<Vec<PerimetricTrial>, GridError> {
    cfg.grid.validate()?;
    cfg.code_params(0)?;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_perimetric(cfg, field, mix64(cfg.grid.seed, t)))
        .collect()
}

pub const PERIMETRIC_CSV_HEADER: [&str; 13] = [
    "N",
    "s",
    "n",
    "k",
    "c",
    "q",
    "total_hops",
    "hops_per_node",
    "packets_prerouted",
    "mean_store",
    "sd_store",
    "decode_ok",
    "seed",
];

pub fn perimetric_csv_row(cfg: &PerimetricConfig, trial: &PerimetricTrial) -> Vec<String> {
    let g = &cfg.grid;
    vec![
        g.total_nodes().to_string(),
        g.side.to_string(),
        g.n().to_string(),
        g.k().to_string(),
        format!("{:.6}", cfg.degree_constant()),
        cfg.field.order().to_string(),
        trial.cost.total_hops.to_string(),
        format!("{:.6}", trial.cost.hops_per_node),
        trial.cost.packets_prerouted.to_string(),
        format!("{:.6}", trial.cost.mean_store),
        format!("{:.6}", trial.cost.sd_store),
        u8::from(trial.result.decode_ok).to_string(),
        trial.seed.to_string(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::build_graph;
    use proptest::prelude::*;

    #[test]
    fn three_by_three_geometry() {
        let spec = GridSpec::new(3, 0.1, 1).unwrap();
        assert_eq!(spec.n(), 8);
        assert_eq!(spec.k(), 1);
        let p = layout(&spec).unwrap();
        assert_eq!(p.storage_positions.len(), 8);
        assert_eq!(p.data_positions, vec![Point::new(1, 1)]);
    }

    #[test]
    fn n400_ten_percent() {
        let spec = GridSpec::new(20, 0.10, 1).unwrap();
        assert_eq!(spec.n(), 76);
        assert_eq!(spec.k(), 8);
        assert!((spec.rho() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perimeter_is_clockwise_and_distinct() {
        for s in 3..12 {
            let pts = perimeter(s);
            assert_eq!(pts.len(), 4 * (s - 1));
            let mut sorted = pts.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), pts.len());
            assert_eq!(pts[0], Point::new(0, 0));
            assert_eq!(pts[1], Point::new(0, 1));
            // consecutive points are grid neighbours, including the wrap
            for w in 0..pts.len() {
                assert_eq!(hop_cost(pts[w], pts[(w + 1) % pts.len()]), 1);
            }
            let m = s as u32 - 1;
            assert!(pts.iter().all(|p| p.x == 0 || p.y == 0 || p.x == m || p.y == m));
        }
    }

    #[test]
    fn layout_deterministic_interior_distinct() {
        let spec = GridSpec::new(40, 0.33, 9).unwrap();
        let a = layout(&spec).unwrap();
        assert_eq!(a, layout(&spec).unwrap());
        let m = spec.side as u32 - 1;
        assert!(a
            .data_positions
            .iter()
            .all(|p| p.x > 0 && p.y > 0 && p.x < m && p.y < m));
        let mut d = a.data_positions.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), spec.k());
        assert_ne!(a, layout(&GridSpec { seed: 10, ..spec }).unwrap());
    }

    #[test]
    fn invalid_grids() {
        assert_eq!(GridSpec::new(2, 0.1, 0), Err(GridError::TooSmall(2)));
        assert!(matches!(GridSpec::new(20, 0.0, 0), Err(GridError::BadRatio { .. })));
        assert!(matches!(GridSpec::new(20, 1.0, 0), Err(GridError::BadRatio { .. })));
        // 3x3 has one interior point
        assert!(matches!(
            GridSpec::new(3, 0.33, 0),
            Err(GridError::Crowded { k: 3, interior: 1 })
        ));
    }

    #[test]
    fn hop_cost_examples() {
        assert_eq!(hop_cost(Point::new(3, 4), Point::new(3, 5)), 1);
        assert_eq!(hop_cost(Point::new(0, 0), Point::new(19, 19)), 38);
        assert_eq!(hop_cost(Point::new(7, 7), Point::new(7, 7)), 0);
    }

    proptest! {
        #[test]
        fn hop_cost_is_a_metric(a in (0u32..100, 0u32..100), b in (0u32..100, 0u32..100), c in (0u32..100, 0u32..100)) {
            let (a, b, c) = (Point::new(a.0, a.1), Point::new(b.0, b.1), Point::new(c.0, c.1));
            prop_assert_eq!(hop_cost(a, b), hop_cost(b, a));
            prop_assert!(hop_cost(a, c) <= hop_cost(a, b) + hop_cost(b, c));
            prop_assert_eq!(hop_cost(a, b) == 0, a == b);
        }
    }

    #[test]
    fn total_hops_invariant_under_storage_relabeling() {
        let spec = GridSpec::new(20, 0.33, 4).unwrap();
        let placement = layout(&spec).unwrap();
        let params = CodeParams::new(spec.k(), spec.n(), 6.0, FieldSpec::GF256, 4).unwrap();
        let graph = build_graph(&params);
        let base = total_hops(&placement, &graph);
        // permutation j -> (7 j + 3) mod n (gcd(7, 76) = 1)
        let n = spec.n();
        let perm: Vec<usize> = (0..n).map(|j| (7 * j + 3) % n).collect();
        let mut relabeled = placement.clone();
        for (j, &p) in perm.iter().enumerate() {
            relabeled.storage_positions[p] = placement.storage_positions[j];
        }
        let draws = (0..graph.k())
            .map(|i| graph.draws(i).iter().map(|&j| perm[j as usize] as u32).collect())
            .collect();
        let graph2 = BipartiteGraph::from_draws(n, draws).unwrap();
        assert_eq!(total_hops(&relabeled, &graph2), base);
    }

    #[test]
    fn cost_report_counts_every_packet() {
        let field = Field::new(FieldSpec::GF256);
        let cfg = PerimetricConfig {
            grid: GridSpec::new(20, 0.10, 3).unwrap(),
            c: None,
            field: FieldSpec::GF256,
            trials: 5,
            payload_len: 4,
        };
        let d = crate::code::degree(8, cfg.degree_constant());
        for t in run_perimetric_batch(&cfg, &field).unwrap() {
            assert_eq!(t.cost.packets_prerouted, (8 * d) as u64);
            assert!(t.cost.total_hops >= t.cost.packets_prerouted);
            assert!((t.cost.mean_store - (8 * d) as f64 / 76.0).abs() < 1e-9);
            assert_eq!(perimetric_csv_row(&cfg, &t).len(), PERIMETRIC_CSV_HEADER.len());
        }
    }
}
