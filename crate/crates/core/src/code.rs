//! Code construction: random spraying graph, sparse generator matrix and
//! storage-node encoding.
//!
//! Each data node `i` draws `d(k)` storage nodes uniformly with replacement;
//! repeated draws collapse into one edge, and every distinct edge gets one
//! coefficient. Storage node `j` stores `S_j = sum_{i : j in N(i)} f_ij D_i`
//! together with its `(i, f_ij)` list.
//!
//! Row `i` of the graph and of the generator is drawn from its own stream
//! keyed by `(seed, i)`, so any row can be regenerated without touching the
//! others.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldElement, FieldSpec};
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodeError {
    #[error("k must be >= 1")]
    ZeroDataNodes,
    #[error("k must be < n (got k = {k}, n = {n})")]
    NotExpanding { k: usize, n: usize },
    #[error("degree constant c must be finite and > 0 (got {0})")]
    InvalidDegreeConstant(f64),
    #[error("degree override must be >= 1")]
    ZeroDegree,
    #[error("alpha must be > 1 (got {0})")]
    InvalidAlpha(f64),
    #[error("expected {expected} data packets, got {got}")]
    WrongPacketCount { expected: usize, got: usize },
    #[error("data packet {index} has {got} symbols, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, got: usize },
    #[error("symbol {value:#x} does not belong to {field}")]
    SymbolOutOfRange { value: u16, field: FieldSpec },
    #[error("generator is over {generator} but field is {field}")]
    FieldMismatch { generator: FieldSpec, field: FieldSpec },
    #[error("row {row} references storage node {node} but n = {n}")]
    NodeOutOfRange { row: usize, node: u32, n: usize },
    #[error("row {row} lists storage node {node} more than once")]
    DuplicateEdge { row: usize, node: u32 },
}

/// d(k) = max(1, ceil(c ln k)).
pub fn degree(k: usize, c: f64) -> usize {
    let d = (c * (k as f64).ln()).ceil();
    if d.is_finite() && d >= 1.0 {
        d as usize
    } else {
        1
    }
}

/// Degree constant above which the probability of a Hall-violating set
/// vanishes: `-5 / (2 ln((alpha - 1/2) / alpha))`, asymptotically `5 alpha`.
pub fn sufficient_c(alpha: f64) -> Result<f64, CodeError> {
    if !alpha.is_finite() || alpha <= 1.0 {
        return Err(CodeError::InvalidAlpha(alpha));
    }
    Ok(-5.0 / (2.0 * ((alpha - 0.5) / alpha).ln()))
}

/// ceil(log2 k), the bits needed to name a data node.
pub fn id_bits(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub k: usize,
    pub n: usize,
    pub c: f64,
    pub field: FieldSpec,
    pub seed: u64,
    /// Draw coefficients from GF(q) \ {0} instead of all of GF(q).
    #[serde(default)]
    pub nonzero_coeffs: bool,
    /// Use a fixed per-row draw count instead of d(k); the converse
    /// experiment runs at constant degree.
    #[serde(default)]
    pub degree_override: Option<usize>,
}

impl CodeParams {
    pub fn new(k: usize, n: usize, c: f64, field: FieldSpec, seed: u64) -> Result<Self, CodeError> {
        let p = CodeParams {
            k,
            n,
            c,
            field,
            seed,
            nonzero_coeffs: false,
            degree_override: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        if self.k == 0 {
            return Err(CodeError::ZeroDataNodes);
        }
        if self.k >= self.n {
            return Err(CodeError::NotExpanding { k: self.k, n: self.n });
        }
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(CodeError::InvalidDegreeConstant(self.c));
        }
        if self.degree_override == Some(0) {
            return Err(CodeError::ZeroDegree);
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.k as f64
    }

    /// Number of draws each data node makes.
    pub fn row_degree(&self) -> usize {
        self.degree_override.unwrap_or_else(|| degree(self.k, self.c))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Random bipartite graph between k data nodes and n storage nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    k: usize,
    n: usize,
    /// Raw draws per data node, in draw order (duplicates kept).
    draws: Vec<Vec<u32>>,
    /// N(i): sorted distinct storage nodes per data node.
    neighbors: Vec<Vec<u32>>,
}

impl BipartiteGraph {
    /// Graph from explicit draws. Duplicates within a row are identified.
    pub fn from_draws(n: usize, draws: Vec<Vec<u32>>) -> Result<Self, CodeError> {
        let k = draws.len();
        let mut neighbors = Vec::with_capacity(k);
        for (row, d) in draws.iter().enumerate() {
            if let Some(&node) = d.iter().find(|&&j| j as usize >= n) {
                return Err(CodeError::NodeOutOfRange { row, node, n });
            }
            let mut set = d.clone();
            set.sort_unstable();
            set.dedup();
            neighbors.push(set);
        }
        Ok(BipartiteGraph { k, n, draws, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn draws(&self, i: usize) -> &[u32] {
        &self.draws[i]
    }

    /// Total pre-routed packets (draws, duplicates included).
    pub fn total_draws(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    /// Distinct edges, i.e. nnz(G).
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Packets received by each storage node (duplicates included).
    pub fn storage_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.n];
        for &j in self.draws.iter().flatten() {
            loads[j as usize] += 1;
        }
        loads
    }

    /// |N(j)|: distinct data nodes connected to each storage node.
    pub fn storage_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &j in self.neighbors.iter().flatten() {
            deg[j as usize] += 1;
        }
        deg
    }

    /// Storage nodes reached by at least one data node.
    pub fn covered_count(&self) -> usize {
        self.storage_degrees().iter().filter(|&&d| d > 0).count()
    }
}

/// `d` uniform draws over `[0, n)` with replacement.
pub fn sample_draws<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<u32> {
    (0..d).map(|_| rng.gen_range(0..n as u32)).collect()
}

/// Builds the spraying graph from `params.seed`; row `i` uses the stream
/// `(seed, GRAPH, i)`.
pub fn build_graph(params: &CodeParams) -> BipartiteGraph {
    let d = params.row_degree();
    let draws = (0..params.k)
        .map(|i| sample_draws(params.n, d, &mut seed::stream(params.seed, tag::GRAPH, i as u64)))
        .collect();
    BipartiteGraph::from_draws(params.n, draws).expect("draws are in range by construction")
}

/// Sparse k x n generator matrix stored by rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGenerator {
    k: usize,
    n: usize,
    field: FieldSpec,
    rows: Vec<Vec<(u32, FieldElement)>>,
}

impl SparseGenerator {
    /// Hand-built generator. Rows are sorted by storage index; zero
    /// coefficients are kept as structural entries.
    pub fn from_rows(n: usize, field: FieldSpec, mut rows: Vec<Vec<(u32, FieldElement)>>) -> Result<Self, CodeError> {
        for (row, entries) in rows.iter_mut().enumerate() {
            entries.sort_unstable_by_key(|&(j, _)| j);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(CodeError::DuplicateEdge { row, node: w[0].0 });
                }
            }
            for &(j, f) in entries.iter() {
                if j as usize >= n {
                    return Err(CodeError::NodeOutOfRange { row, node: j, n });
                }
                if f.0 as u32 >= field.order() {
                    return Err(CodeError::SymbolOutOfRange { value: f.0, field });
                }
            }
        }
        Ok(SparseGenerator {
            k: rows.len(),
            n,
            field,
            rows,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn row(&self, i: usize) -> &[(u32, FieldElement)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Column view: for each storage node, its `(data node, coefficient)`
    /// entries in increasing data-node order.
    pub fn columns(&self) -> Vec<Vec<(u32, FieldElement)>> {
        let mut cols = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, f) in row {
                cols[j as usize].push((i as u32, f));
            }
        }
        cols
    }

    /// Dense row-major k x n copy.
    pub fn to_dense(&self) -> Vec<Vec<FieldElement>> {
        let mut dense = vec![vec![FieldElement::ZERO; self.n]; self.k];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, f) in row {
                dense[i][j as usize] = f;
            }
        }
        dense
    }
}

/// Coefficients for row `i`, one per distinct neighbour in increasing order.
pub fn sample_row_coeffs<R: Rng + ?Sized>(
    field: &Field,
    neighbors: &[u32],
    nonzero: bool,
    rng: &mut R,
) -> Vec<(u32, FieldElement)> {
    neighbors.iter().map(|&j| (j, field.random(rng, nonzero))).collect()
}

/// One uniform coefficient per distinct edge; row `i` uses the stream
/// `(seed, COEFFS, i)`.
pub fn make_generator(graph: &BipartiteGraph, field: &Field, seed: u64, nonzero: bool) -> SparseGenerator {
    let rows = (0..graph.k())
        .map(|i| {
            let mut rng = seed::stream(seed, tag::COEFFS, i as u64);
            sample_row_coeffs(field, graph.neighbors(i), nonzero, &mut rng)
        })
        .collect();
    SparseGenerator {
        k: graph.k(),
        n: graph.n(),
        field: *field.spec(),
        rows,
    }
}

/// Graph plus generator built from one [`CodeParams`].
#[derive(Debug, Clone)]
pub struct Code {
    pub params: CodeParams,
    pub graph: BipartiteGraph,
    pub generator: SparseGenerator,
}

impl Code {
    pub fn build(params: CodeParams, field: &Field) -> Result<Self, CodeError> {
        params.validate()?;
        if *field.spec() != params.field {
            return Err(CodeError::FieldMismatch {
                generator: params.field,
                field: *field.spec(),
            });
        }
        let graph = build_graph(&params);
        let generator = make_generator(&graph, field, params.seed, params.nonzero_coeffs);
        Ok(Code {
            params,
            graph,
            generator,
        })
    }
}

/// State of one storage node after spraying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoragePacket {
    pub storage_id: u32,
    pub k: u32,
    pub n: u32,
    pub field: FieldSpec,
    /// `(source id i, f_ij)` in increasing source order.
    pub coeffs: Vec<(u32, FieldElement)>,
    /// S_j, symbol-wise.
    pub payload: Vec<FieldElement>,
}

impl StoragePacket {
    /// Coefficient storage cost: |coeffs| * (u + ceil(log2 k)) bits.
    pub fn overhead_bits(&self) -> u64 {
        self.coeffs.len() as u64 * (self.field.degree() + id_bits(self.k as usize)) as u64
    }
}

/// Encodes `data` (k packets of equal symbol length) into n storage packets.
/// Storage nodes nobody sprayed to hold a zero payload and no coefficients.
pub fn encode(
    generator: &SparseGenerator,
    field: &Field,
    data: &[Vec<FieldElement>],
) -> Result<Vec<StoragePacket>, CodeError> {
    if generator.field != *field.spec() {
        return Err(CodeError::FieldMismatch {
            generator: generator.field,
            field: *field.spec(),
        });
    }
    if data.len() != generator.k {
        return Err(CodeError::WrongPacketCount {
            expected: generator.k,
            got: data.len(),
        });
    }
    let len = data.first().map_or(0, Vec::len);
    for (index, packet) in data.iter().enumerate() {
        if packet.len() != len {
            return Err(CodeError::LengthMismatch {
                index,
                expected: len,
                got: packet.len(),
            });
        }
        if let Some(bad) = packet.iter().find(|s| !field.contains(**s)) {
            return Err(CodeError::SymbolOutOfRange {
                value: bad.0,
                field: *field.spec(),
            });
        }
    }
    let packets = generator
        .columns()
        .into_iter()
        .enumerate()
        .map(|(j, coeffs)| {
            let mut payload = vec![FieldElement::ZERO; len];
            for &(i, f) in &coeffs {
                field.mul_add_slice(&mut payload, &data[i as usize], f);
            }
            StoragePacket {
                storage_id: j as u32,
                k: generator.k as u32,
                n: generator.n as u32,
                field: generator.field,
                coeffs,
                payload,
            }
        })
        .collect();
    Ok(packets)
}
