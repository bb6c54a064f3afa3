//! Monte Carlo subcommands. Each writes one CSV document.

use std::path::PathBuf;

use clap::Args;
use decspray::code::{self, CodeParams};
use decspray::perimetric::{self, GridSpec, PerimetricConfig, PERIMETRIC_CSV_HEADER};
use decspray::seed::mix64;
use decspray::sim::{self, SelectionMode, TrialConfig, SIM_CSV_HEADER};
use decspray::{Field, FieldSpec};
use serde::{Deserialize, Serialize};

use crate::config::{csv_document, emit, parse_field, require, usage, Failure};

fn parse_selection(s: Option<&str>) -> Result<SelectionMode, Failure> {
    match s {
        None | Some("uniform") => Ok(SelectionMode::Uniform),
        Some("prefix") => Ok(SelectionMode::Prefix),
        Some(other) => Err(Failure::Usage(format!(
            "unknown selection {other:?} (expected uniform or prefix)"
        ))),
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Data nodes.
    #[arg(long)]
    pub k: Option<usize>,
    /// Storage nodes.
    #[arg(long)]
    pub n: Option<usize>,
    /// Degree constant: each data node makes ceil(c ln k) draws [default: 10].
    #[arg(long)]
    pub c: Option<f64>,
    /// gf16, gf256, gf65536 or gfNN:0xPOLY [default: gf256].
    #[arg(long)]
    pub field: Option<String>,
    /// [default: 1000]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Symbols per data packet [default: 8].
    #[arg(long)]
    pub payload_len: Option<usize>,
    /// Draw coefficients from the nonzero elements only.
    #[arg(long)]
    #[serde(default)]
    pub nonzero_coeffs: bool,
    /// uniform (random k-subset) or prefix (nodes 0..k) [default: uniform].
    #[arg(long)]
    pub selection: Option<String>,
    /// Output file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one CSV row per trial to this file.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    k: usize,
    n: usize,
    c: f64,
    field: FieldSpec,
    trials: usize,
    seed: u64,
    payload_len: usize,
    nonzero_coeffs: bool,
    selection: SelectionMode,
}

const RAW_HEADER: [&str; 8] = [
    "trial",
    "trial_seed",
    "pm_exists",
    "full_rank",
    "decode_ok",
    "rank",
    "covered",
    "max_load",
];

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let r = SimulateConfig {
        k: require(a.k, "k")?,
        n: require(a.n, "n")?,
        c: a.c.unwrap_or(10.0),
        field: parse_field(a.field.as_deref(), FieldSpec::GF256)?,
        trials: a.trials.unwrap_or(1000),
        seed: a.seed.unwrap_or(0),
        payload_len: a.payload_len.unwrap_or(8),
        nonzero_coeffs: a.nonzero_coeffs,
        selection: parse_selection(a.selection.as_deref())?,
    };
    let mut params = CodeParams::new(r.k, r.n, r.c, r.field, r.seed).map_err(usage)?;
    params.nonzero_coeffs = r.nonzero_coeffs;
    let cfg = TrialConfig {
        code: params,
        trials: r.trials,
        master_seed: r.seed,
        payload_len: r.payload_len,
        selection: r.selection,
    };
    let field = Field::new(r.field);
    let results = sim::run_trials(&cfg, &field);
    let stats = sim::AggregateStats::from_results(&results, Default::default());

    if let Some(raw) = &a.raw {
        let rows: Vec<Vec<String>> = results
            .iter()
            .enumerate()
            .map(|(t, res)| {
                vec![
                    t.to_string(),
                    mix64(r.seed, t as u64).to_string(),
                    u8::from(res.pm_exists).to_string(),
                    u8::from(res.full_rank).to_string(),
                    u8::from(res.decode_ok).to_string(),
                    res.rank.to_string(),
                    res.covered_storage_nodes.to_string(),
                    res.max_load.to_string(),
                ]
            })
            .collect();
        emit(Some(raw), &csv_document("simulate", &r, &RAW_HEADER, &rows)?)?;
    }
    let doc = csv_document("simulate", &r, &SIM_CSV_HEADER, &[sim::sim_csv_row(&cfg, &stats)])?;
    emit(a.out.as_deref(), &doc)
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Draws per data node, held fixed regardless of k [default: 3].
    #[arg(long)]
    pub degree: Option<usize>,
    /// Also run the ceil(c ln k) arm with this c.
    #[arg(long)]
    pub contrast_c: Option<f64>,
    /// [default: gf256]
    #[arg(long)]
    pub field: Option<String>,
    /// [default: 500]
    #[arg(long)]
    pub trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 8]
    #[arg(long)]
    pub payload_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ConverseConfig {
    k: usize,
    n: usize,
    degree: usize,
    contrast_c: Option<f64>,
    field: FieldSpec,
    trials: usize,
    seed: u64,
    payload_len: usize,
}

const CONVERSE_HEADER: [&str; 10] = [
    "k",
    "n",
    "degree",
    "q",
    "trials",
    "failures",
    "ci_low",
    "ci_high",
    "mean_covered",
    "seed",
];

pub fn converse(a: ConverseArgs) -> Result<(), Failure> {
    let r = ConverseConfig {
        k: require(a.k, "k")?,
        n: require(a.n, "n")?,
        degree: a.degree.unwrap_or(3),
        contrast_c: a.contrast_c,
        field: parse_field(a.field.as_deref(), FieldSpec::GF256)?,
        trials: a.trials.unwrap_or(500),
        seed: a.seed.unwrap_or(0),
        payload_len: a.payload_len.unwrap_or(8),
    };
    let c = r.contrast_c.unwrap_or(1.0);
    let mut params = CodeParams::new(r.k, r.n, c, r.field, r.seed).map_err(usage)?;
    params.degree_override = Some(r.degree);
    params.validate().map_err(usage)?;
    let field = Field::new(r.field);
    let mut cfg = TrialConfig::new(params, r.trials, r.seed);
    cfg.payload_len = r.payload_len;

    let mut arms = vec![r.degree];
    if r.contrast_c.is_some() {
        arms.push(code::degree(r.k, c));
    }
    let rows: Vec<Vec<String>> = arms
        .into_iter()
        .map(|d| {
            let s = sim::converse_experiment(&cfg, d, &field);
            vec![
                r.k.to_string(),
                r.n.to_string(),
                d.to_string(),
                r.field.order().to_string(),
                s.trials.to_string(),
                s.failure.count.to_string(),
                format!("{:.6}", s.failure.ci_low),
                format!("{:.6}", s.failure.ci_high),
                format!("{:.4}", s.mean_covered),
                r.seed.to_string(),
            ]
        })
        .collect();
    emit(
        a.out.as_deref(),
        &csv_document("converse", &r, &CONVERSE_HEADER, &rows)?,
    )
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageArgs {
    /// Storage nodes to cover.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Threshold multiplier on bins ln bins [default: 2].
    #[arg(long)]
    pub beta: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    pub trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CoverageConfig {
    bins: usize,
    beta: f64,
    trials: usize,
    seed: u64,
}

const COVERAGE_HEADER: [&str; 11] = [
    "bins",
    "beta",
    "trials",
    "mean_draws",
    "expected_draws",
    "threshold",
    "exceed",
    "exceed_rate",
    "ci_high",
    "tail_bound",
    "seed",
];

pub fn coverage(a: CoverageArgs) -> Result<(), Failure> {
    let r = CoverageConfig {
        bins: require(a.bins, "bins")?,
        beta: a.beta.unwrap_or(2.0),
        trials: a.trials.unwrap_or(2000),
        seed: a.seed.unwrap_or(0),
    };
    if r.bins < 2 {
        return Err(Failure::Usage("bins must be >= 2".into()));
    }
    if r.beta.is_nan() || r.beta <= 1.0 {
        return Err(Failure::Usage(format!("beta must be > 1 (got {})", r.beta)));
    }
    let s = sim::coverage_experiment(r.bins, r.beta, r.trials, r.seed);
    let row = vec![
        r.bins.to_string(),
        format!("{}", r.beta),
        s.trials.to_string(),
        format!("{:.4}", s.mean),
        format!("{:.4}", s.expected),
        format!("{:.4}", s.threshold),
        s.exceed.count.to_string(),
        format!("{:.6}", s.exceed.rate),
        format!("{:.6}", s.exceed.ci_high),
        format!("{:.6e}", s.tail_bound),
        r.seed.to_string(),
    ];
    emit(
        a.out.as_deref(),
        &csv_document("coverage", &r, &COVERAGE_HEADER, &[row])?,
    )
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxloadArgs {
    /// Balls thrown per trial; alternatively give --k, --alpha and --c.
    #[arg(long)]
    pub balls: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Data nodes; balls = k ceil(c ln k), bins = round(alpha k).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MaxloadConfig {
    balls: usize,
    bins: usize,
    trials: usize,
    seed: u64,
}

const MAXLOAD_HEADER: [&str; 8] = [
    "balls",
    "bins",
    "trials",
    "mean_load",
    "mean_max_load",
    "max_max_load",
    "max_over_mean",
    "seed",
];

pub fn maxload(a: MaxloadArgs) -> Result<(), Failure> {
    let (balls, bins) = match (a.balls, a.bins, a.k) {
        (Some(balls), Some(bins), None) => (balls, bins),
        (None, None, Some(k)) => {
            let alpha = require(a.alpha, "alpha")?;
            let c = require(a.c, "c")?;
            if alpha.is_nan() || alpha <= 1.0 || c.is_nan() || c <= 0.0 {
                return Err(Failure::Usage("need alpha > 1 and c > 0".into()));
            }
            (k * code::degree(k, c), (alpha * k as f64).round() as usize)
        }
        _ => {
            return Err(Failure::Usage(
                "give either --balls and --bins, or --k with --alpha and --c".into(),
            ))
        }
    };
    if bins == 0 {
        return Err(Failure::Usage("bins must be >= 1".into()));
    }
    let r = MaxloadConfig {
        balls,
        bins,
        trials: a.trials.unwrap_or(100),
        seed: a.seed.unwrap_or(0),
    };
    let s = sim::max_load_experiment(r.balls, r.bins, r.trials, r.seed);
    let top = s.max_loads.iter().copied().max().unwrap_or(0);
    let row = vec![
        r.balls.to_string(),
        r.bins.to_string(),
        r.trials.to_string(),
        format!("{:.4}", s.mean_load),
        format!("{:.4}", s.mean_max()),
        top.to_string(),
        format!(
            "{:.4}",
            if s.mean_load > 0.0 {
                top as f64 / s.mean_load
            } else {
                0.0
            }
        ),
        r.seed.to_string(),
    ];
    emit(a.out.as_deref(), &csv_document("maxload", &r, &MAXLOAD_HEADER, &[row])?)
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerimetricArgs {
    /// Total grid nodes N (a perfect square); alternatively --side.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    /// k / n [default: 0.1].
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Degree constant [default: 5 n / k].
    #[arg(long)]
    pub c: Option<f64>,
    /// [default: gf256]
    #[arg(long)]
    pub field: Option<String>,
    /// [default: 50]
    #[arg(long)]
    pub trials: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 8]
    #[arg(long)]
    pub payload_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn perimetric(a: PerimetricArgs) -> Result<(), Failure> {
    let side = match (a.nodes, a.side) {
        (Some(nodes), None) => GridSpec::side_for(nodes)
            .ok_or_else(|| Failure::Usage(format!("--nodes {nodes} is not a perfect square")))?,
        (None, Some(side)) => side,
        _ => return Err(Failure::Usage("give exactly one of --nodes and --side".into())),
    };
    let grid = GridSpec::new(side, a.ratio.unwrap_or(0.1), a.seed.unwrap_or(0)).map_err(usage)?;
    let cfg = PerimetricConfig {
        grid,
        c: a.c,
        field: parse_field(a.field.as_deref(), FieldSpec::GF256)?,
        trials: a.trials.unwrap_or(50),
        payload_len: a.payload_len.unwrap_or(8),
    };
    let field = Field::new(cfg.field);
    let trials = perimetric::run_perimetric_batch(&cfg, &field).map_err(usage)?;
    let rows: Vec<Vec<String>> = trials.iter().map(|t| perimetric::perimetric_csv_row(&cfg, t)).collect();
    let resolved = PerimetricConfig {
        c: Some(cfg.degree_constant()),
        ..cfg
    };
    emit(
        a.out.as_deref(),
        &csv_document("perimetric", &resolved, &PERIMETRIC_CSV_HEADER, &rows)?,
    )
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MincArgs {
    /// Redundancy n / k.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MincConfig {
    alpha: f64,
}

pub fn minc(a: MincArgs) -> Result<(), Failure> {
    let r = MincConfig {
        alpha: require(a.alpha, "alpha")?,
    };
    let c = code::sufficient_c(r.alpha).map_err(usage)?;
    let row = vec![
        format!("{}", r.alpha),
        format!("{c:.6}"),
        format!("{:.6}", 5.0 * r.alpha),
    ];
    emit(
        a.out.as_deref(),
        &csv_document("minc", &r, &["alpha", "sufficient_c", "five_alpha"], &[row])?,
    )
}
