//! Decentralized erasure codes over GF(2^u).
//!
//! k data nodes each spray their packet to `d(k) = ceil(c ln k)` storage
//! nodes chosen uniformly and independently; every storage node keeps one
//! random linear combination of what it received. A data collector that
//! reads any k storage nodes recovers all k packets with high probability.
//!
//! * [`field`]: GF(2^u) arithmetic.
//! * [`code`]: spraying graph, sparse generator, encoding.
//! * [`packet`]: binary storage-packet format.
//! * [`decode`]: submatrix extraction, elimination and Wiedemann solvers.
//! * [`matching`]: perfect-matching and determinant-expansion oracles.
//! * [`sim`]: seeded Monte Carlo harness.
//! * [`perimetric`]: grid scenario with perimeter storage and hop counting.

pub mod code;
pub mod decode;
pub mod field;
pub mod matching;
pub mod packet;
pub mod perimetric;
pub mod seed;
pub mod sim;

pub use code::{CodeParams, SparseGenerator, StoragePacket};
pub use field::{Field, FieldElement, FieldSpec};
