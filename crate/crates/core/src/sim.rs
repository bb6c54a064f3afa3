//! Monte Carlo harness.
//!
//! Trial `t` of a run with master seed `s` draws everything (graph,
//! coefficients, data, query selection) from streams keyed by
//! `mix64(s, t)`, so a run's results do not depend on how trials are
//! scheduled across threads. Aggregation happens after all trials finish,
//! in trial-index order.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::code::{encode, Code, CodeParams};
use crate::decode::{self, extract_submatrix, Decoded, QuerySelection};
use crate::field::{Field, FieldElement};
use crate::matching::{has_perfect_matching, SupportGraph};
use crate::seed::{self, mix64, tag};

/// How the data collector picks its k storage nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Uniformly random k-subset.
    #[default]
    Uniform,
    /// Storage nodes 0..k.
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub code: CodeParams,
    pub trials: usize,
    pub master_seed: u64,
    /// Symbols per data packet.
    pub payload_len: usize,
    pub selection: SelectionMode,
}

impl TrialConfig {
    pub fn new(code: CodeParams, trials: usize, master_seed: u64) -> Self {
        TrialConfig {
            code,
            trials,
            master_seed,
            payload_len: 8,
            selection: SelectionMode::Uniform,
        }
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialResult {
    /// Support of G' has a perfect matching (det not identically zero).
    pub pm_exists: bool,
    pub full_rank: bool,
    /// Decoded packets equal the originals.
    pub decode_ok: bool,
    pub rank: usize,
    pub covered_storage_nodes: usize,
    /// Largest number of coefficients held by one storage node.
    pub max_load: usize,
}

/// Encode random data with `code`, query k nodes, decode, and record every
/// structural and numeric outcome.
pub fn evaluate_code(
    code: &Code,
    field: &Field,
    payload_len: usize,
    selection: SelectionMode,
    trial_seed: u64,
) -> TrialResult {
    let k = code.params.k;
    let n = code.params.n;
    let mut data_rng = seed::stream(trial_seed, tag::DATA, 0);
    let data: Vec<Vec<FieldElement>> = (0..k)
        .map(|_| (0..payload_len).map(|_| field.random(&mut data_rng, false)).collect())
        .collect();
    let packets = encode(&code.generator, field, &data).expect("data shaped to the generator");
    let sel = match selection {
        SelectionMode::Uniform => QuerySelection::random(n, k, &mut seed::stream(trial_seed, tag::SELECTION, 0)),
        SelectionMode::Prefix => QuerySelection::new((0..k as u32).collect()),
    };
    let sub = extract_submatrix(&code.generator, &sel).expect("selection is valid by construction");
    let pm_exists = has_perfect_matching(&SupportGraph::from_submatrix(&sub));
    let received: Vec<_> = sel
        .indices()
        .iter()
        .map(|&j| packets[j as usize].payload.clone())
        .collect();
    let (rank, decode_ok) = match decode::rank_and_solve(field, &sub, &received) {
        Ok(Decoded::Solved(m)) => (k, m == data),
        Ok(Decoded::Singular { rank }) => (rank.expect("elimination reports rank"), false),
        Err(e) => panic!("decode failed on a well-formed system: {e}"),
    };
    let full_rank = rank == k;
    assert!(!decode_ok || full_rank, "decoded without full rank");
    assert!(!full_rank || pm_exists, "full numeric rank without a perfect matching");
    TrialResult {
        pm_exists,
        full_rank,
        decode_ok,
        rank,
        covered_storage_nodes: code.graph.covered_count(),
        max_load: code.graph.storage_degrees().into_iter().max().unwrap_or(0),
    }
}

/// Runs trial `index` of `cfg`. Deterministic per `(master_seed, index)`.
pub fn run_trial(cfg: &TrialConfig, field: &Field, index: u64) -> TrialResult {
    let trial_seed = mix64(cfg.master_seed, index);
    let code = Code::build(cfg.code.with_seed(trial_seed), field).expect("trial config validated");
    evaluate_code(&code, field, cfg.payload_len, cfg.selection, trial_seed)
}

/// Two-sided exact binomial (Clopper-Pearson) interval for `x` successes in
/// `n` trials at confidence `level`.
pub fn clopper_pearson(x: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let tail = (1.0 - level) / 2.0;
    let (xf, nf) = (x as f64, n as f64);
    let low = if x == 0 {
        0.0
    } else {
        inv_beta_reg(xf, nf - xf + 1.0, tail)
    };
    let high = if x == n {
        1.0
    } else {
        inv_beta_reg(xf + 1.0, nf - xf, 1.0 - tail)
    };
    (low, high)
}

/// Failure rate with its 95% Clopper-Pearson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Rate {
    pub fn new(count: u64, total: u64) -> Self {
        let rate = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let (ci_low, ci_high) = clopper_pearson(count, total, 0.95);
        Rate {
            count,
            total,
            rate,
            ci_low,
            ci_high,
        }
    }

    /// Binomial standard error sqrt(p(1-p)/n) at proportion `p`.
    pub fn standard_error(p: f64, total: u64) -> f64 {
        (p * (1.0 - p) / total as f64).sqrt()
    }

    pub fn overlaps(&self, other: &Rate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub trials: u64,
    /// decode_ok = false.
    pub failure: Rate,
    /// No perfect matching on the support of G'.
    pub pm_failure: Rate,
    /// Singular among trials whose support has a perfect matching.
    pub conditional_singular: Rate,
    pub mean_max_load: f64,
    /// Mean number of storage nodes reached by at least one data node.
    pub mean_covered: f64,
    /// Wall-clock time per trial; not part of any deterministic output.
    #[serde(skip)]
    pub runtime_per_trial: Duration,
}

impl AggregateStats {
    pub fn from_results(results: &[TrialResult], elapsed: Duration) -> Self {
        let trials = results.len() as u64;
        let failures = results.iter().filter(|r| !r.decode_ok).count() as u64;
        let pm = results.iter().filter(|r| r.pm_exists).count() as u64;
        let cond = results.iter().filter(|r| r.pm_exists && !r.full_rank).count() as u64;
        let load_sum: usize = results.iter().map(|r| r.max_load).sum();
        let covered_sum: usize = results.iter().map(|r| r.covered_storage_nodes).sum();
        AggregateStats {
            trials,
            failure: Rate::new(failures, trials),
            pm_failure: Rate::new(trials - pm, trials),
            conditional_singular: Rate::new(cond, pm),
            mean_max_load: if trials == 0 {
                0.0
            } else {
                load_sum as f64 / trials as f64
            },
            mean_covered: if trials == 0 {
                0.0
            } else {
                covered_sum as f64 / trials as f64
            },
            runtime_per_trial: if trials == 0 {
                Duration::ZERO
            } else {
                elapsed / trials as u32
            },
        }
    }
}

/// Runs `cfg.trials` trials on the current rayon pool and aggregates them.
pub fn run_trials(cfg: &TrialConfig, field: &Field) -> Vec<TrialResult> {
    cfg.code.validate().expect("invalid code parameters");
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, field, t))
        .collect()
}

pub fn estimate_failure(cfg: &TrialConfig, field: &Field) -> AggregateStats {
    let start = Instant::now();
    let results = run_trials(cfg, field);
    AggregateStats::from_results(&results, start.elapsed())
}

/// Decode failure rate when every data node makes exactly `degree` draws,
/// independent of k.
pub fn converse_experiment(cfg: &TrialConfig, degree: usize, field: &Field) -> AggregateStats {
    let mut cfg = *cfg;
    cfg.code.degree_override = Some(degree);
    estimate_failure(&cfg, field)
}

/// Draws uniformly over `bins` bins until every bin has been hit; returns
/// the number of draws.
pub fn coverage_trial<R: Rng + ?Sized>(bins: usize, rng: &mut R) -> u64 {
    assert!(bins >= 1, "coverage needs at least one bin");
    let mut hit = vec![false; bins];
    let mut remaining = bins;
    let mut draws = 0;
    while remaining > 0 {
        draws += 1;
        let b = rng.gen_range(0..bins);
        if !hit[b] {
            hit[b] = true;
            remaining -= 1;
        }
    }
    draws
}

/// Throws `balls` uniformly into `bins`; returns the largest occupancy.
pub fn max_load_trial<R: Rng + ?Sized>(balls: usize, bins: usize, rng: &mut R) -> usize {
    assert!(bins >= 1, "need at least one bin");
    let mut load = vec![0usize; bins];
    for _ in 0..balls {
        load[rng.gen_range(0..bins)] += 1;
    }
    load.into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStats {
    pub bins: usize,
    pub trials: u64,
    pub mean: f64,
    /// beta * bins * ln(bins)
    pub threshold: f64,
    /// Trials with C > threshold.
    pub exceed: Rate,
    /// bins^-(beta - 1)
    pub tail_bound: f64,
    /// bins * H_bins
    pub expected: f64,
}

/// bins * H_bins, the exact coupon-collector expectation.
pub fn coupon_collector_mean(bins: usize) -> f64 {
    bins as f64 * (1..=bins).map(|i| 1.0 / i as f64).sum::<f64>()
}

pub fn coverage_experiment(bins: usize, beta: f64, trials: usize, master_seed: u64) -> CoverageStats {
    let counts: Vec<u64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| coverage_trial(bins, &mut seed::rng_from(mix64(master_seed, t))))
        .collect();
    let b = bins as f64;
    let threshold = beta * b * b.ln();
    let exceed = counts.iter().filter(|&&c| c as f64 > threshold).count() as u64;
    CoverageStats {
        bins,
        trials: trials as u64,
        mean: counts.iter().sum::<u64>() as f64 / trials.max(1) as f64,
        threshold,
        exceed: Rate::new(exceed, trials as u64),
        tail_bound: b.powf(-(beta - 1.0)),
        expected: coupon_collector_mean(bins),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxLoadStats {
    pub balls: usize,
    pub bins: usize,
    pub mean_load: f64,
    pub max_loads: Vec<usize>,
}

impl MaxLoadStats {
    pub fn mean_max(&self) -> f64 {
        self.max_loads.iter().sum::<usize>() as f64 / self.max_loads.len().max(1) as f64
    }
}

pub fn max_load_experiment(balls: usize, bins: usize, trials: usize, master_seed: u64) -> MaxLoadStats {
    let max_loads = (0..trials as u64)
        .into_par_iter()
        .map(|t| max_load_trial(balls, bins, &mut seed::rng_from(mix64(master_seed, t))))
        .collect();
    MaxLoadStats {
        balls,
        bins,
        mean_load: balls as f64 / bins as f64,
        max_loads,
    }
}

/// Every k-subset of storage nodes checked against one code. Small codes only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExhaustiveReport {
    pub subsets: u64,
    pub singular_subsets: u64,
    pub no_matching_subsets: u64,
    /// Smallest rank over all subsets (the adversarial collector's view).
    pub worst_rank: usize,
}

pub const MAX_EXHAUSTIVE_K: usize = 6;

/// Rank and matching verdict for all C(n, k) selections; `None` if
/// k exceeds [`MAX_EXHAUSTIVE_K`].
pub fn exhaustive_subsets(code: &Code, field: &Field) -> Option<ExhaustiveReport> {
    let (k, n) = (code.params.k, code.params.n);
    if k > MAX_EXHAUSTIVE_K {
        return None;
    }
    let mut report = ExhaustiveReport {
        subsets: 0,
        singular_subsets: 0,
        no_matching_subsets: 0,
        worst_rank: k,
    };
    let mut idx: Vec<u32> = (0..k as u32).collect();
    loop {
        let sub = extract_submatrix(&code.generator, &QuerySelection::new(idx.clone())).expect("valid subset");
        let r = decode::rank(field, &sub);
        report.subsets += 1;
        report.singular_subsets += u64::from(r < k);
        report.no_matching_subsets += u64::from(!has_perfect_matching(&SupportGraph::from_submatrix(&sub)));
        report.worst_rank = report.worst_rank.min(r);
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| (idx[p] as usize) < n - k + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    Some(report)
}

/// Column order of the per-configuration CSV.
pub const SIM_CSV_HEADER: [&str; 12] = [
    "k",
    "n",
    "c",
    "q",
    "trials",
    "failures",
    "pm_failures",
    "cond_singular",
    "ci_low",
    "ci_high",
    "mean_max_load",
    "seed",
];

/// One CSV row for a simulated configuration; floats use fixed precision so
/// reruns are byte-identical.
pub fn sim_csv_row(cfg: &TrialConfig, stats: &AggregateStats) -> Vec<String> {
    vec![
        cfg.code.k.to_string(),
        cfg.code.n.to_string(),
        format!("{}", cfg.code.c),
        cfg.code.field.order().to_string(),
        stats.trials.to_string(),
        stats.failure.count.to_string(),
        stats.pm_failure.count.to_string(),
        stats.conditional_singular.count.to_string(),
        format!("{:.6}", stats.failure.ci_low),
        format!("{:.6}", stats.failure.ci_high),
        format!("{:.4}", stats.mean_max_load),
        cfg.master_seed.to_string(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn small_cfg(trials: usize, seed: u64) -> TrialConfig {
        let p = CodeParams::new(12, 24, 4.0, FieldSpec::GF256, 0).unwrap();
        TrialConfig::new(p, trials, seed)
    }

    #[test]
    fn trials_are_deterministic() {
        let field = Field::new(FieldSpec::GF256);
        let cfg = small_cfg(10, 77);
        for t in 0..10 {
            assert_eq!(run_trial(&cfg, &field, t), run_trial(&cfg, &field, t));
        }
        let a = estimate_failure(&cfg, &field);
        let b = estimate_failure(&cfg, &field);
        assert_eq!(sim_csv_row(&cfg, &a), sim_csv_row(&cfg, &b));
    }

    #[test]
    fn identity_like_limit_always_decodes() {
        // One data node sprays 64 times over two storage nodes with nonzero
        // coefficients; the collector reads node 0.
        let field = Field::new(FieldSpec::GF16);
        let mut p = CodeParams::new(1, 2, 1.0, FieldSpec::GF16, 0).unwrap();
        p.nonzero_coeffs = true;
        p.degree_override = Some(64);
        let mut cfg = TrialConfig::new(p, 50, 5);
        cfg.selection = SelectionMode::Prefix;
        for t in 0..50 {
            let r = run_trial(&cfg, &field, t);
            assert!(r.decode_ok && r.full_rank && r.pm_exists);
            assert_eq!(r.rank, 1);
            assert_eq!(r.covered_storage_nodes, 2);
        }
    }

    #[test]
    fn implication_chain_holds() {
        let field = Field::new(FieldSpec::GF16);
        // low degree so all outcomes occur
        let p = CodeParams::new(10, 20, 2.0, FieldSpec::GF16, 0).unwrap();
        let results = run_trials(&TrialConfig::new(p, 300, 1), &field);
        for r in &results {
            assert!(!r.decode_ok || r.full_rank);
            assert!(!r.full_rank || r.pm_exists);
            assert!(r.rank <= 10);
        }
        assert!(results.iter().any(|r| !r.pm_exists));
        assert!(results.iter().any(|r| r.decode_ok));
    }

    #[test]
    fn clopper_pearson_edges() {
        let n = 1000;
        let (lo, hi) = clopper_pearson(0, n, 0.95);
        assert_eq!(lo, 0.0);
        // closed form for zero successes: 1 - (alpha/2)^(1/n)
        let closed = 1.0 - 0.025f64.powf(1.0 / n as f64);
        assert!((hi - closed).abs() < 1e-9, "{hi} vs {closed}");
        // close to the rule of three
        assert!(hi > 3.0 / n as f64 && hi < 3.8 / n as f64);
        let (lo, hi) = clopper_pearson(n, n, 0.95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(1.0 / n as f64)).abs() < 1e-9);
        // textbook value: 5 of 20 -> [0.0866, 0.4910]
        let (lo, hi) = clopper_pearson(5, 20, 0.95);
        assert!((lo - 0.0866).abs() < 1e-3 && (hi - 0.4910).abs() < 1e-3, "{lo} {hi}");
    }

    #[test]
    fn rates_bracket_point_estimates() {
        for (x, n) in [(0, 10), (3, 10), (10, 10), (17, 2000)] {
            let r = Rate::new(x, n);
            assert!(r.ci_low <= r.rate && r.rate <= r.ci_high);
            assert!((0.0..=1.0).contains(&r.ci_low) && (0.0..=1.0).contains(&r.ci_high));
        }
    }

    #[test]
    fn coverage_and_load_edge_cases() {
        let mut rng = seed::rng_from(1);
        assert_eq!(coverage_trial(1, &mut rng), 1);
        assert!(coverage_trial(10, &mut rng) >= 10);
        assert_eq!(max_load_trial(1, 1, &mut rng), 1);
        assert_eq!(max_load_trial(0, 5, &mut rng), 0);
        assert_eq!(max_load_trial(7, 1, &mut rng), 7);
    }

    #[test]
    fn coupon_collector_expectation() {
        assert!((coupon_collector_mean(1) - 1.0).abs() < 1e-12);
        assert!((coupon_collector_mean(2) - 3.0).abs() < 1e-12);
        let approx = 200.0 * 200f64.ln() + 0.5772156649 * 200.0 + 0.5;
        assert!((coupon_collector_mean(200) - approx).abs() < 0.01);
    }

    #[test]
    fn exhaustive_mode_counts_all_subsets() {
        let field = Field::new(FieldSpec::GF256);
        let p = CodeParams::new(3, 7, 2.0, FieldSpec::GF256, 12).unwrap();
        let code = Code::build(p, &field).unwrap();
        let report = exhaustive_subsets(&code, &field).unwrap();
        assert_eq!(report.subsets, 35);
        assert!(report.no_matching_subsets <= report.singular_subsets);
        let big = CodeParams::new(7, 9, 2.0, FieldSpec::GF256, 12).unwrap();
        assert!(exhaustive_subsets(&Code::build(big, &field).unwrap(), &field).is_none());
    }
}
