//! Structural oracles on the support of G'.
//!
//! det(G') is a polynomial in the coefficients; it is identically zero
//! exactly when every permutation term hits a structural zero, i.e. when the
//! support graph has no perfect matching (Edmonds). When a perfect matching
//! exists, uniform coefficients make the determinant vanish with probability
//! at most k/q (Schwartz-Zippel).

use std::collections::VecDeque;

use thiserror::Error;

use crate::decode::{self, Submatrix};
use crate::field::{Field, FieldElement};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchingError {
    #[error("permutation expansion limited to k <= {max} (got {k})")]
    TooLarge { k: usize, max: usize },
    #[error("support graph has no perfect matching")]
    NoMatching,
}

/// Largest k for which [`symbolic_det_is_zero`] enumerates permutations.
pub const MAX_SYMBOLIC_K: usize = 8;

/// Square bipartite adjacency: `adj[i][l]` iff G'[i][l] is a structural
/// nonzero (data node i sprayed to the l-th selected storage node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportGraph {
    k: usize,
    adj: Vec<Vec<bool>>,
}

impl SupportGraph {
    /// Panics if `adj` is not square.
    pub fn from_adjacency(adj: Vec<Vec<bool>>) -> Self {
        let k = adj.len();
        assert!(adj.iter().all(|row| row.len() == k), "support graph must be square");
        SupportGraph { k, adj }
    }

    /// Pattern `bits`: bit `i * k + l` set iff edge (i, l).
    pub fn from_bits(k: usize, bits: u64) -> Self {
        let adj = (0..k)
            .map(|i| (0..k).map(|l| (bits >> (i * k + l)) & 1 == 1).collect())
            .collect();
        SupportGraph { k, adj }
    }

    pub fn from_submatrix(sub: &Submatrix) -> Self {
        let k = sub.k();
        let mut adj = vec![vec![false; k]; k];
        for (l, col) in (0..k).map(|l| sub.column(l)).enumerate() {
            for &(i, _) in col {
                adj[i as usize][l] = true;
            }
        }
        SupportGraph { k, adj }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_edge(&self, i: usize, l: usize) -> bool {
        self.adj[i][l]
    }

    pub fn add_edge(&mut self, i: usize, l: usize) {
        self.adj[i][l] = true;
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().flatten().filter(|&&e| e).count()
    }

    /// Submatrix with this support and coefficients drawn from `values`.
    pub fn to_submatrix(&self, field: &Field, mut values: impl FnMut() -> FieldElement) -> Submatrix {
        let columns = (0..self.k)
            .map(|l| {
                (0..self.k)
                    .filter(|&i| self.adj[i][l])
                    .map(|i| (i as u32, values()))
                    .collect()
            })
            .collect();
        Submatrix::from_columns(*field.spec(), columns)
    }
}

/// Size of a maximum matching (Hopcroft-Karp).
pub fn maximum_matching(g: &SupportGraph) -> usize {
    const FREE: usize = usize::MAX;
    let k = g.k;
    let lists: Vec<Vec<usize>> = (0..k).map(|i| (0..k).filter(|&l| g.adj[i][l]).collect()).collect();
    let mut match_left = vec![FREE; k];
    let mut match_right = vec![FREE; k];
    let mut dist = vec![0usize; k];
    let mut size = 0;

    loop {
        // BFS layers from free left vertices.
        let mut queue = VecDeque::new();
        for i in 0..k {
            if match_left[i] == FREE {
                dist[i] = 0;
                queue.push_back(i);
            } else {
                dist[i] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(i) = queue.pop_front() {
            for &l in &lists[i] {
                let j = match_right[l];
                if j == FREE {
                    found = true;
                } else if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        if !found {
            break;
        }
        // Vertex-disjoint shortest augmenting paths along the layers.
        let mut next = vec![0usize; k];
        for i in 0..k {
            if match_left[i] == FREE && augment(i, &lists, &mut match_left, &mut match_right, &mut dist, &mut next) {
                size += 1;
            }
        }
    }
    size
}

fn augment(
    i: usize,
    lists: &[Vec<usize>],
    match_left: &mut [usize],
    match_right: &mut [usize],
    dist: &mut [usize],
    next: &mut [usize],
) -> bool {
    while next[i] < lists[i].len() {
        let l = lists[i][next[i]];
        next[i] += 1;
        let j = match_right[l];
        let ok = j == usize::MAX || (dist[j] == dist[i] + 1 && augment(j, lists, match_left, match_right, dist, next));
        if ok {
            match_left[i] = l;
            match_right[l] = i;
            return true;
        }
    }
    dist[i] = usize::MAX;
    false
}

pub fn has_perfect_matching(g: &SupportGraph) -> bool {
    maximum_matching(g) == g.k
}

/// True iff every term of the permutation expansion of det(G') contains a
/// structural zero. Enumerates all k! permutations, so k is capped.
pub fn symbolic_det_is_zero(g: &SupportGraph) -> Result<bool, MatchingError> {
    if g.k > MAX_SYMBOLIC_K {
        return Err(MatchingError::TooLarge {
            k: g.k,
            max: MAX_SYMBOLIC_K,
        });
    }
    let k = g.k;
    let term_nonzero = |perm: &[usize]| (0..k).all(|i| g.adj[i][perm[i]]);
    // Heap's algorithm, iterative.
    let mut perm: Vec<usize> = (0..k).collect();
    if term_nonzero(&perm) {
        return Ok(false);
    }
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            if term_nonzero(&perm) {
                return Ok(false);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(true)
}

/// Empirical rate at which fresh uniform coefficients (zero included) on
/// `g`'s support give a singular matrix. Requires a perfect matching, so the
/// determinant polynomial is nonzero and the rate should stay below k/q.
pub fn schwartz_zippel_check(g: &SupportGraph, field: &Field, trials: usize, seed: u64) -> Result<f64, MatchingError> {
    if !has_perfect_matching(g) {
        return Err(MatchingError::NoMatching);
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let singular = (0..trials)
        .filter(|&t| {
            let mut rng = seed::rng_from(seed::mix64(seed, t as u64));
            let sub = g.to_submatrix(field, || field.random(&mut rng, false));
            decode::rank(field, &sub) < g.k
        })
        .count();
    Ok(singular as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use proptest::prelude::*;

    fn identity(k: usize) -> SupportGraph {
        SupportGraph::from_adjacency((0..k).map(|i| (0..k).map(|l| i == l).collect()).collect())
    }

    #[test]
    fn identity_has_matching() {
        for k in 0..9 {
            assert!(has_perfect_matching(&identity(k)));
            assert_eq!(symbolic_det_is_zero(&identity(k)), Ok(false));
        }
    }

    #[test]
    fn isolated_vertex_blocks_matching() {
        let mut g = SupportGraph::from_adjacency(vec![vec![true; 4]; 4]);
        for l in 0..4 {
            g.adj[2][l] = false;
        }
        assert!(!has_perfect_matching(&g));
        assert_eq!(symbolic_det_is_zero(&g), Ok(true));
        let mut g = SupportGraph::from_adjacency(vec![vec![true; 4]; 4]);
        for i in 0..4 {
            g.adj[i][1] = false;
        }
        assert!(!has_perfect_matching(&g));
    }

    #[test]
    fn hall_violation_without_isolated_vertices() {
        // rows 0,1,2 only reach columns 0,1
        let adj = vec![
            vec![true, true, false, false],
            vec![true, true, false, false],
            vec![true, false, false, false],
            vec![true, true, true, true],
        ];
        let g = SupportGraph::from_adjacency(adj);
        assert_eq!(maximum_matching(&g), 3);
        assert!(!has_perfect_matching(&g));
        assert_eq!(symbolic_det_is_zero(&g), Ok(true));
    }

    #[test]
    fn symbolic_det_too_large() {
        assert_eq!(
            symbolic_det_is_zero(&identity(9)),
            Err(MatchingError::TooLarge { k: 9, max: 8 })
        );
    }

    #[test]
    fn all_k3_patterns_agree_with_permutation_oracle() {
        // explicit 3! expansion, independent of Heap's enumeration
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut with_pm = 0;
        for bits in 0..512u64 {
            let g = SupportGraph::from_bits(3, bits);
            let oracle = PERMS.iter().any(|p| (0..3).all(|i| g.has_edge(i, p[i])));
            assert_eq!(has_perfect_matching(&g), oracle, "pattern {bits:09b}");
            assert_eq!(symbolic_det_is_zero(&g).unwrap(), !oracle, "pattern {bits:09b}");
            with_pm += usize::from(oracle);
        }
        // number of 3x3 0/1 matrices with nonzero permanent
        assert_eq!(with_pm, 247);
    }

    #[test]
    fn schwartz_zippel_identity_matches_product_formula() {
        // singular iff some diagonal coefficient is zero: 1 - (1 - 1/q)^k
        let field = Field::new(FieldSpec::GF16);
        let k = 4;
        let trials = 20_000;
        let rate = schwartz_zippel_check(&identity(k), &field, trials, 3).unwrap();
        let exact = 1.0 - (1.0 - 1.0 / 16.0f64).powi(k as i32);
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((rate - exact).abs() <= 4.0 * se, "rate {rate} exact {exact}");
        assert!(exact <= k as f64 / 16.0);
    }

    #[test]
    fn schwartz_zippel_requires_matching() {
        let field = Field::new(FieldSpec::GF16);
        let g = SupportGraph::from_adjacency(vec![vec![false; 3]; 3]);
        assert_eq!(schwartz_zippel_check(&g, &field, 10, 0), Err(MatchingError::NoMatching));
    }

    fn arb_graph(max_k: usize) -> impl Strategy<Value = SupportGraph> {
        (1..=max_k).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.35), k), k)
                .prop_map(SupportGraph::from_adjacency)
        })
    }

    proptest! {
        #[test]
        fn adding_edges_never_destroys_matching(g in arb_graph(12), i in 0usize..12, l in 0usize..12) {
            let before = has_perfect_matching(&g);
            let mut h = g.clone();
            h.add_edge(i % g.k(), l % g.k());
            prop_assert!(!before || has_perfect_matching(&h));
            prop_assert!(maximum_matching(&h) >= maximum_matching(&g));
        }

        #[test]
        fn edmonds_equivalence_small(g in arb_graph(7)) {
            prop_assert_eq!(symbolic_det_is_zero(&g).unwrap(), !has_perfect_matching(&g));
        }
    }
}
