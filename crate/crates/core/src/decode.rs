//! Data-collector side: pick k storage nodes, form the k x k submatrix G'
//! and solve `m G' = s'` for the k original packets.
//!
//! Two solvers share one contract. [`rank_and_solve`] is Gauss-Jordan
//! elimination with lowest-row-index pivoting and is the reference.
//! [`wiedemann_solve`] is the randomized sparse solver (Krylov sequence +
//! Berlekamp-Massey); it only ever returns solutions it has re-verified.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::code::SparseGenerator;
use crate::field::{Field, FieldElement, FieldSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("selection has {got} indices, expected {expected}")]
    WrongSelectionSize { expected: usize, got: usize },
    #[error("storage index {index} out of range for n = {n}")]
    IndexOutOfRange { index: u32, n: usize },
    #[error("storage index {0} selected twice")]
    DuplicateIndex(u32),
    #[error("expected {expected} received payloads, got {got}")]
    WrongPayloadCount { expected: usize, got: usize },
    #[error("received payload {index} has {got} symbols, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, got: usize },
    #[error("submatrix is over {matrix} but field is {field}")]
    FieldMismatch { matrix: FieldSpec, field: FieldSpec },
    #[error("randomized solver could neither solve nor certify singularity")]
    NotDetermined,
    #[error("computed solution does not reproduce the received payloads")]
    Inconsistent,
}

/// k distinct storage indices chosen by the data collector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySelection {
    indices: Vec<u32>,
}

impl QuerySelection {
    pub fn new(indices: Vec<u32>) -> Self {
        QuerySelection { indices }
    }

    /// Uniform k-subset of [0, n) in random order.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let indices = index::sample(rng, n, k).into_iter().map(|j| j as u32).collect();
        QuerySelection { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn validate(&self, k: usize, n: usize) -> Result<(), DecodeError> {
        if self.indices.len() != k {
            return Err(DecodeError::WrongSelectionSize {
                expected: k,
                got: self.indices.len(),
            });
        }
        let mut seen = vec![false; n];
        for &j in &self.indices {
            let slot = seen
                .get_mut(j as usize)
                .ok_or(DecodeError::IndexOutOfRange { index: j, n })?;
            if *slot {
                return Err(DecodeError::DuplicateIndex(j));
            }
            *slot = true;
        }
        Ok(())
    }
}

/// k x k matrix G' stored by columns. Structural entries are kept even when
/// their coefficient happens to be zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submatrix {
    k: usize,
    field: FieldSpec,
    /// columns[l] = [(row i, G'[i][l])], rows increasing.
    columns: Vec<Vec<(u32, FieldElement)>>,
}

impl Submatrix {
    pub fn from_columns(field: FieldSpec, columns: Vec<Vec<(u32, FieldElement)>>) -> Self {
        let k = columns.len();
        debug_assert!(columns.iter().flatten().all(|&(i, _)| (i as usize) < k));
        Submatrix { k, field, columns }
    }

    /// Dense row-major input; zero entries are treated as structural zeros.
    pub fn from_dense(field: FieldSpec, dense: &[Vec<FieldElement>]) -> Self {
        let k = dense.len();
        let columns = (0..k)
            .map(|l| {
                (0..k)
                    .filter(|&i| !dense[i][l].is_zero())
                    .map(|i| (i as u32, dense[i][l]))
                    .collect()
            })
            .collect();
        Submatrix { k, field, columns }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn column(&self, l: usize) -> &[(u32, FieldElement)] {
        &self.columns[l]
    }

    /// Same support with new coefficient values, in column-major order.
    pub fn with_values(&self, mut values: impl FnMut() -> FieldElement) -> Submatrix {
        let columns = self
            .columns
            .iter()
            .map(|col| col.iter().map(|&(i, _)| (i, values())).collect())
            .collect();
        Submatrix {
            k: self.k,
            field: self.field,
            columns,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<FieldElement>> {
        let mut dense = vec![vec![FieldElement::ZERO; self.k]; self.k];
        for (l, col) in self.columns.iter().enumerate() {
            for &(i, f) in col {
                dense[i as usize][l] = f;
            }
        }
        dense
    }
}

/// Column `l` of G' is column `sel[l]` of G.
pub fn extract_submatrix(gen: &SparseGenerator, sel: &QuerySelection) -> Result<Submatrix, DecodeError> {
    sel.validate(gen.k(), gen.n())?;
    let mut slot = vec![usize::MAX; gen.n()];
    for (l, &j) in sel.indices().iter().enumerate() {
        slot[j as usize] = l;
    }
    let mut columns = vec![Vec::new(); gen.k()];
    for i in 0..gen.k() {
        for &(j, f) in gen.row(i) {
            let l = slot[j as usize];
            if l != usize::MAX {
                columns[l].push((i as u32, f));
            }
        }
    }
    Ok(Submatrix {
        k: gen.k(),
        field: gen.field(),
        columns,
    })
}

/// Outcome of a decode attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// The k recovered data packets.
    Solved(Vec<Vec<FieldElement>>),
    /// G' is singular. The elimination solver reports the exact rank; the
    /// randomized solver certifies singularity without computing it.
    Singular { rank: Option<usize> },
}

impl Decoded {
    pub fn is_solved(&self) -> bool {
        matches!(self, Decoded::Solved(_))
    }
}

fn check_field(field: &Field, sub: &Submatrix) -> Result<(), DecodeError> {
    if *field.spec() != sub.field {
        return Err(DecodeError::FieldMismatch {
            matrix: sub.field,
            field: *field.spec(),
        });
    }
    Ok(())
}

fn check_received(sub: &Submatrix, received: &[Vec<FieldElement>]) -> Result<usize, DecodeError> {
    if received.len() != sub.k {
        return Err(DecodeError::WrongPayloadCount {
            expected: sub.k,
            got: received.len(),
        });
    }
    let len = received.first().map_or(0, Vec::len);
    for (index, r) in received.iter().enumerate() {
        if r.len() != len {
            return Err(DecodeError::LengthMismatch {
                index,
                expected: len,
                got: r.len(),
            });
        }
    }
    Ok(len)
}

/// `m G'`: payload of column l is `sum_i G'[i][l] m_i`.
pub fn multiply(field: &Field, data: &[Vec<FieldElement>], sub: &Submatrix) -> Vec<Vec<FieldElement>> {
    let len = data.first().map_or(0, Vec::len);
    sub.columns
        .iter()
        .map(|col| {
            let mut out = vec![FieldElement::ZERO; len];
            for &(i, f) in col {
                field.mul_add_slice(&mut out, &data[i as usize], f);
            }
            out
        })
        .collect()
}

/// Gauss-Jordan on the transposed system. Returns the rank and, when it is
/// full, the solution rows in data-node order.
fn eliminate(
    field: &Field,
    sub: &Submatrix,
    mut rhs: Vec<Vec<FieldElement>>,
) -> (usize, Option<Vec<Vec<FieldElement>>>) {
    let k = sub.k;
    // Equation l: sum_i G'[i][l] m_i = s'_l, i.e. row l of A = column l of G'.
    let mut a: Vec<Vec<FieldElement>> = sub
        .columns
        .iter()
        .map(|col| {
            let mut row = vec![FieldElement::ZERO; k];
            for &(i, f) in col {
                row[i as usize] = f;
            }
            row
        })
        .collect();
    let mut rank = 0;
    for col in 0..k {
        let Some(p) = (rank..k).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        rhs.swap(rank, p);
        let inv = field.inv(a[rank][col]).expect("pivot is nonzero");
        field.scale_slice(&mut a[rank][col..], inv);
        field.scale_slice(&mut rhs[rank], inv);
        let (pivot_row, pivot_rhs) = (a[rank].clone(), rhs[rank].clone());
        for r in 0..k {
            if r == rank {
                continue;
            }
            let factor = a[r][col];
            if factor.is_zero() {
                continue;
            }
            field.mul_add_slice(&mut a[r][col..], &pivot_row[col..], factor);
            field.mul_add_slice(&mut rhs[r], &pivot_rhs, factor);
        }
        rank += 1;
    }
    // Full rank leaves A = I with rows in pivot order, so rhs[i] = m_i.
    (rank, (rank == k).then_some(rhs))
}

/// Exact rank of G'.
pub fn rank(field: &Field, sub: &Submatrix) -> usize {
    eliminate(field, sub, vec![Vec::new(); sub.k]).0
}

/// Reference decoder: Gauss-Jordan with first-nonzero pivoting.
pub fn rank_and_solve(field: &Field, sub: &Submatrix, received: &[Vec<FieldElement>]) -> Result<Decoded, DecodeError> {
    check_field(field, sub)?;
    check_received(sub, received)?;
    match eliminate(field, sub, received.to_vec()) {
        (_, Some(m)) => {
            if multiply(field, &m, sub) != received {
                return Err(DecodeError::Inconsistent);
            }
            Ok(Decoded::Solved(m))
        }
        (r, None) => Ok(Decoded::Singular { rank: Some(r) }),
    }
}

/// Dense polynomials over the field, lowest degree first, no trailing zeros.
mod poly {
    use crate::field::{Field, FieldElement};

    pub type Poly = Vec<FieldElement>;

    pub fn trim(mut p: Poly) -> Poly {
        while p.last().is_some_and(|c| c.is_zero()) {
            p.pop();
        }
        p
    }

    pub fn mul(f: &Field, a: &[FieldElement], b: &[FieldElement]) -> Poly {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![FieldElement::ZERO; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            f.mul_add_slice(&mut out[i..i + b.len()], b, x);
        }
        trim(out)
    }

    /// (quotient, remainder); `b` must be nonzero.
    pub fn divrem(f: &Field, a: &[FieldElement], b: &[FieldElement]) -> (Poly, Poly) {
        let mut rem = trim(a.to_vec());
        let db = b.len() - 1;
        let lead_inv = f.inv(b[db]).expect("divisor is nonzero");
        if rem.len() < b.len() {
            return (Vec::new(), rem);
        }
        let mut quot = vec![FieldElement::ZERO; rem.len() - db];
        while rem.len() >= b.len() {
            let shift = rem.len() - b.len();
            let c = f.mul(rem[rem.len() - 1], lead_inv);
            quot[shift] = c;
            f.mul_add_slice(&mut rem[shift..], b, c);
            rem = trim(rem);
        }
        (trim(quot), rem)
    }

    pub fn monic(f: &Field, mut p: Poly) -> Poly {
        if let Some(&lead) = p.last() {
            let inv = f.inv(lead).expect("trimmed polynomial has nonzero lead");
            f.scale_slice(&mut p, inv);
        }
        p
    }

    pub fn gcd(f: &Field, a: &[FieldElement], b: &[FieldElement]) -> Poly {
        let (mut a, mut b) = (trim(a.to_vec()), trim(b.to_vec()));
        while !b.is_empty() {
            let (_, r) = divrem(f, &a, &b);
            a = b;
            b = r;
        }
        monic(f, a)
    }

    pub fn lcm(f: &Field, a: &[FieldElement], b: &[FieldElement]) -> Poly {
        let g = gcd(f, a, b);
        let (q, _) = divrem(f, a, &g);
        monic(f, mul(f, &q, b))
    }
}

/// Minimal polynomial (monic, lowest degree first) generating `seq`.
fn berlekamp_massey(f: &Field, seq: &[FieldElement]) -> poly::Poly {
    let mut c = vec![FieldElement::ONE];
    let mut b = vec![FieldElement::ONE];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut last_disc = FieldElement::ONE;
    for n in 0..seq.len() {
        let mut disc = seq[n];
        for i in 1..=len.min(c.len() - 1) {
            disc = f.add(disc, f.mul(c[i], seq[n - i]));
        }
        if disc.is_zero() {
            shift += 1;
            continue;
        }
        let scale = f.div(disc, last_disc).expect("last discrepancy is nonzero");
        let prev = c.clone();
        if c.len() < b.len() + shift {
            c.resize(b.len() + shift, FieldElement::ZERO);
        }
        f.mul_add_slice(&mut c[shift..shift + b.len()], &b, scale);
        if 2 * len <= n {
            len = n + 1 - len;
            b = prev;
            last_disc = disc;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    // Connection polynomial C(z) of length `len` -> reversed polynomial.
    c.resize(len + 1, FieldElement::ZERO);
    c.reverse();
    c
}

/// y = A x for A = G'^T applied to a block of vectors (one per data node).
fn apply_transpose(field: &Field, sub: &Submatrix, x: &[Vec<FieldElement>], width: usize) -> Vec<Vec<FieldElement>> {
    sub.columns
        .iter()
        .map(|col| {
            let mut y = vec![FieldElement::ZERO; width];
            for &(i, f) in col {
                field.mul_add_slice(&mut y, &x[i as usize], f);
            }
            y
        })
        .collect()
}

fn dot(field: &Field, u: &[FieldElement], v: &[FieldElement]) -> FieldElement {
    u.iter()
        .zip(v)
        .fold(FieldElement::ZERO, |acc, (&a, &b)| field.add(acc, field.mul(a, b)))
}

/// Fresh random projections tried before giving up.
pub const WIEDEMANN_ATTEMPTS: usize = 3;
/// Random right-hand sides solved alongside the real ones. A singular G'
/// passes all of them with probability at most q^-PROBES.
const PROBES: usize = 4;

/// Randomized sparse decoder.
///
/// Each attempt draws random `u`, `v`, computes `u^T A^j v` for
/// `j < 2k`, and runs Berlekamp-Massey. A zero constant term certifies that
/// A is singular. Otherwise the running lcm `g` of the polynomials found so
/// far yields `x = g(0)^-1 sum_{j>=1} g_j A^(j-1) b` for every right-hand
/// side; the result is returned only if `A x = b` holds for the real
/// payloads and for [`PROBES`] random ones.
pub fn wiedemann_solve(
    field: &Field,
    sub: &Submatrix,
    received: &[Vec<FieldElement>],
    seed: u64,
) -> Result<Decoded, DecodeError> {
    check_field(field, sub)?;
    let len = check_received(sub, received)?;
    let k = sub.k;
    if k == 0 {
        return Ok(Decoded::Solved(Vec::new()));
    }
    // Zero column or zero row of G' is singular outright.
    let mut row_used = vec![false; k];
    for col in &sub.columns {
        if col.iter().all(|(_, f)| f.is_zero()) {
            return Ok(Decoded::Singular { rank: None });
        }
        for &(i, f) in col {
            row_used[i as usize] |= !f.is_zero();
        }
    }
    if row_used.contains(&false) {
        return Ok(Decoded::Singular { rank: None });
    }

    let mut rng = seed::stream(seed, seed::tag::SOLVER, 0);
    let width = len + PROBES;
    // Right-hand sides: row l holds payload symbols of equation l plus probes.
    let b: Vec<Vec<FieldElement>> = received
        .iter()
        .map(|r| {
            let mut row = r.clone();
            row.extend((0..PROBES).map(|_| field.random(&mut rng, false)));
            row
        })
        .collect();

    let mut g: poly::Poly = vec![FieldElement::ONE];
    for _ in 0..WIEDEMANN_ATTEMPTS {
        let u: Vec<_> = (0..k).map(|_| field.random(&mut rng, false)).collect();
        let mut v: Vec<Vec<FieldElement>> = (0..k).map(|_| vec![field.random(&mut rng, false)]).collect();
        let mut seq = Vec::with_capacity(2 * k);
        for _ in 0..2 * k {
            let flat: Vec<_> = v.iter().map(|x| x[0]).collect();
            seq.push(dot(field, &u, &flat));
            v = apply_transpose(field, sub, &v, 1);
        }
        let f = berlekamp_massey(field, &seq);
        if f[0].is_zero() {
            return Ok(Decoded::Singular { rank: None });
        }
        g = poly::lcm(field, &g, &f);
        if g.len() < 2 {
            continue;
        }
        // Horner: acc = sum_{j>=1} g_j A^(j-1) b
        let deg = g.len() - 1;
        let mut acc: Vec<Vec<FieldElement>> = b.clone();
        for row in acc.iter_mut() {
            field.scale_slice(row, g[deg]);
        }
        for j in (1..deg).rev() {
            acc = apply_transpose(field, sub, &acc, width);
            for (a, bl) in acc.iter_mut().zip(&b) {
                field.mul_add_slice(a, bl, g[j]);
            }
        }
        let g0_inv = field.inv(g[0]).expect("constant term checked nonzero");
        for row in acc.iter_mut() {
            field.scale_slice(row, g0_inv);
        }
        if apply_transpose(field, sub, &acc, width) == b {
            let m: Vec<Vec<FieldElement>> = acc
                .into_iter()
                .map(|mut row| {
                    row.truncate(len);
                    row
                })
                .collect();
            debug_assert_eq!(multiply(field, &m, sub), received);
            return Ok(Decoded::Solved(m));
        }
    }
    Err(DecodeError::NotDetermined)
}
