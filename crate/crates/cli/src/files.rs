//! `encode` and `decode`: storage packets on disk.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use decspray::code::{self, Code, CodeParams, StoragePacket};
use decspray::decode::{self, DecodeError, Decoded, Submatrix};
use decspray::packet;
use decspray::{Field, FieldElement, FieldSpec};
use serde::{Deserialize, Serialize};

use crate::config::{parse_field, require, usage, Failure, VERSION};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeArgs {
    /// Directory of k equal-length files; sorted by name, file i is data node i.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for the n packet files and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Storage nodes.
    #[arg(long)]
    pub n: Option<usize>,
    /// [default: 6]
    #[arg(long)]
    pub c: Option<f64>,
    /// gf16, gf256 or gf65536 [default: gf256].
    #[arg(long)]
    pub field: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub nonzero_coeffs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub k: usize,
    pub n: usize,
    pub c: f64,
    pub field: FieldSpec,
    pub seed: u64,
    pub nonzero_coeffs: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: EncodeConfig,
    /// Original file names in data-node order.
    pub files: Vec<String>,
    pub file_len: usize,
}

fn read_data_dir(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, Failure> {
    let entries =
        fs::read_dir(dir).map_err(|e| Failure::Usage(format!("cannot read data directory {}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            let name = entry
                .file_name()
                .into_string()
                .map_err(|n| Failure::Usage(format!("file name {n:?} is not valid UTF-8")))?;
            names.push(name);
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let bytes = fs::read(dir.join(&name))?;
            Ok((name, bytes))
        })
        .collect()
}

pub fn encode(a: EncodeArgs) -> Result<(), Failure> {
    let data_dir = require(a.data, "data")?;
    let out_dir = require(a.out, "out")?;
    let field_spec = parse_field(a.field.as_deref(), FieldSpec::GF256)?;
    if !field_spec.is_standard() {
        return Err(Failure::Usage(format!(
            "{field_spec} uses a non-default polynomial; packet files can only record gf16, gf256 or gf65536"
        )));
    }
    let files = read_data_dir(&data_dir)?;
    if files.is_empty() {
        return Err(Failure::Usage(format!("{} contains no files", data_dir.display())));
    }
    let file_len = files[0].1.len();
    if let Some((name, bytes)) = files.iter().find(|(_, b)| b.len() != file_len) {
        return Err(Failure::Usage(format!(
            "all data files must have the same length: {name} has {} bytes, {} has {file_len}",
            bytes.len(),
            files[0].0
        )));
    }
    let cfg = EncodeConfig {
        k: files.len(),
        n: require(a.n, "n")?,
        c: a.c.unwrap_or(6.0),
        field: field_spec,
        seed: a.seed.unwrap_or(0),
        nonzero_coeffs: a.nonzero_coeffs,
    };
    let mut params = CodeParams::new(cfg.k, cfg.n, cfg.c, cfg.field, cfg.seed).map_err(usage)?;
    params.nonzero_coeffs = cfg.nonzero_coeffs;

    let data = files
        .iter()
        .map(|(name, bytes)| {
            packet::bytes_to_symbols(&cfg.field, bytes).map_err(|e| Failure::Usage(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let field = Field::new(cfg.field);
    let code = Code::build(params, &field).map_err(usage)?;
    let packets = code::encode(&code.generator, &field, &data).map_err(|e| Failure::Other(e.into()))?;

    fs::create_dir_all(&out_dir)?;
    for p in &packets {
        let bytes = packet::to_bytes(p).map_err(|e| Failure::Other(e.into()))?;
        fs::write(out_dir.join(packet_file_name(p.storage_id)), bytes)?;
    }
    let manifest = Manifest {
        version: VERSION.to_string(),
        config: cfg,
        files: files.into_iter().map(|(name, _)| name).collect(),
        file_len,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)?;
    fs::write(out_dir.join(MANIFEST), json + "\n")?;
    println!("wrote {} packets to {}", packets.len(), out_dir.display());
    Ok(())
}

pub fn packet_file_name(storage_id: u32) -> String {
    format!("packet_{storage_id:05}.dec")
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeArgs {
    /// Exactly k packet files.
    #[arg(long, num_args = 1..)]
    #[serde(default)]
    pub packets: Vec<PathBuf>,
    /// Extra packets checked against the decoded data.
    #[arg(long, num_args = 1..)]
    #[serde(default)]
    pub check: Vec<PathBuf>,
    /// Directory for the recovered files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest written by encode [default: manifest.json beside the first packet, if present].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// gauss or wiedemann [default: gauss].
    #[arg(long)]
    pub solver: Option<String>,
    /// Seed for the randomized solver [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

fn read_packet(path: &Path) -> Result<StoragePacket, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    packet::from_bytes(&bytes).map_err(|e| Failure::Header(format!("{}: {e}", path.display())))
}

fn check_header(path: &Path, p: &StoragePacket, reference: &StoragePacket) -> Result<(), Failure> {
    if (p.k, p.n, p.field) != (reference.k, reference.n, reference.field) {
        return Err(Failure::Header(format!(
            "header mismatch: {} has k = {}, n = {}, field {}; expected k = {}, n = {}, field {}",
            path.display(),
            p.k,
            p.n,
            p.field,
            reference.k,
            reference.n,
            reference.field
        )));
    }
    if p.payload.len() != reference.payload.len() {
        return Err(Failure::Header(format!(
            "header mismatch: {} carries {} symbols, expected {}",
            path.display(),
            p.payload.len(),
            reference.payload.len()
        )));
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<Manifest, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("manifest {}: {e}", path.display())))
}

/// `sum_i f_i m_i` for one packet's coefficients.
fn reencode(field: &Field, p: &StoragePacket, data: &[Vec<FieldElement>]) -> Vec<FieldElement> {
    let mut out = vec![FieldElement::ZERO; p.payload.len()];
    for &(i, f) in &p.coeffs {
        field.mul_add_slice(&mut out, &data[i as usize], f);
    }
    out
}

pub fn decode(a: DecodeArgs) -> Result<(), Failure> {
    let out_dir = require(a.out, "out")?;
    if a.packets.is_empty() {
        return Err(Failure::Usage("need exactly k packets (got none)".into()));
    }
    let use_wiedemann = match a.solver.as_deref() {
        None | Some("gauss") => false,
        Some("wiedemann") => true,
        Some(other) => {
            return Err(Failure::Usage(format!(
                "unknown solver {other:?} (expected gauss or wiedemann)"
            )))
        }
    };

    let packets = a
        .packets
        .iter()
        .map(|p| read_packet(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = &packets[0];
    for (path, p) in a.packets.iter().zip(&packets) {
        check_header(path, p, first)?;
    }
    let k = first.k as usize;
    if packets.len() != k {
        return Err(Failure::Usage(format!(
            "need exactly k packets (got {}, k = {k})",
            packets.len()
        )));
    }
    let mut seen = HashSet::new();
    for p in &packets {
        if !seen.insert(p.storage_id) {
            return Err(Failure::Usage(format!("storage node {} given twice", p.storage_id)));
        }
    }

    let manifest_path = a.manifest.clone().or_else(|| {
        let candidate = a.packets[0].parent().unwrap_or(Path::new(".")).join(MANIFEST);
        candidate.is_file().then_some(candidate)
    });
    let manifest = manifest_path.as_deref().map(load_manifest).transpose()?;
    if let Some(m) = &manifest {
        let c = &m.config;
        if (c.k, c.n, c.field) != (k, first.n as usize, first.field) {
            return Err(Failure::Header(format!(
                "header mismatch: manifest says k = {}, n = {}, field {}; packets say k = {k}, n = {}, field {}",
                c.k, c.n, c.field, first.n, first.field
            )));
        }
    }

    let field = Field::new(first.field);
    let sub = Submatrix::from_columns(first.field, packets.iter().map(|p| p.coeffs.clone()).collect());
    let received: Vec<_> = packets.iter().map(|p| p.payload.clone()).collect();
    let outcome = if use_wiedemann {
        decode::wiedemann_solve(&field, &sub, &received, a.seed.unwrap_or(0))
    } else {
        decode::rank_and_solve(&field, &sub, &received)
    };
    let data = match outcome {
        Ok(Decoded::Solved(m)) => m,
        Ok(Decoded::Singular { rank }) => return Err(Failure::Singular { rank, k }),
        Err(DecodeError::Inconsistent) => {
            return Err(Failure::Inconsistent(
                "solution does not reproduce the received packets".into(),
            ))
        }
        Err(e) => return Err(Failure::Other(e.into())),
    };

    for path in &a.check {
        let p = read_packet(path)?;
        check_header(path, &p, first)?;
        if reencode(&field, &p, &data) != p.payload {
            return Err(Failure::Inconsistent(format!(
                "{} (storage node {}) disagrees with the decoded data",
                path.display(),
                p.storage_id
            )));
        }
    }

    let names: Vec<String> = match &manifest {
        Some(m) if m.files.len() == k => m.files.clone(),
        _ => (0..k).map(|i| format!("data_{i:05}.bin")).collect(),
    };
    fs::create_dir_all(&out_dir)?;
    for (name, symbols) in names.iter().zip(&data) {
        let bytes = packet::symbols_to_bytes(&first.field, symbols).map_err(|e| Failure::Other(e.into()))?;
        fs::write(out_dir.join(name), bytes)?;
    }
    println!("recovered {k} files into {}", out_dir.display());
    Ok(())
}
