//! Simulation studies: static single-window power and online detection power.
//!
//! Every sample is one decision. Sample `k` draws, from its own stream
//! `stream_rng(seed, k)`, first the fair coin deciding whether a change is
//! present and then the standard Gaussian noise `z`. Post-change values are
//! `z + Δ` (mean change) or `√c · z` (variance change), so runs that differ
//! only in `Δ` or `c` share their random numbers.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{analytic_threshold, calibrate_monte_carlo, CalibrationConfig, StatisticKind, ThresholdTable};
use crate::detector::{allocate_alphas, DetectionEvent, Detector, DetectorConfig, PostDetectionPolicy};
use crate::distributions::{fill_standard_normal, stream_rng};
use crate::error::{check_probability, GsrError, Result};
use crate::graph::{decompose_window, Observation};
use crate::gsr::compute_gsr;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ChangeKind {
    None,
    /// Post-change mean `Δ · 1`.
    Mean(f64),
    /// Post-change covariance `c · I`.
    Variance(f64),
}

impl ChangeKind {
    /// Mean change of `d^(-1/3)` per coordinate.
    pub fn mean_cube_root(d: usize) -> Self {
        ChangeKind::Mean((d as f64).cbrt().recip())
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ChangeKind::None => Ok(()),
            ChangeKind::Mean(delta) if delta.is_finite() => Ok(()),
            ChangeKind::Variance(c) if c.is_finite() && c > 0.0 => Ok(()),
            other => Err(GsrError::invalid("change", format!("{other:?} is not a valid change"))),
        }
    }

    fn apply(&self, post: &mut [f64]) {
        match *self {
            ChangeKind::None => {}
            ChangeKind::Mean(delta) => post.iter_mut().for_each(|v| *v += delta),
            ChangeKind::Variance(c) => {
                let s = c.sqrt();
                post.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Pre-change law `N(0, I_d)`; after `change_at` the law given by `kind`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dimension: usize,
    pub length: usize,
    pub change_at: Option<usize>,
    pub kind: ChangeKind,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(GsrError::invalid("dimension", "must be at least 1"));
        }
        if self.length == 0 {
            return Err(GsrError::invalid("length", "must be at least 1"));
        }
        if let Some(tau) = self.change_at {
            if tau >= self.length {
                return Err(GsrError::invalid(
                    "change_at",
                    format!("{tau} outside a stream of length {}", self.length),
                ));
            }
        }
        self.kind.validate()
    }

    pub fn has_change(&self) -> bool {
        self.change_at.is_some() && self.kind != ChangeKind::None
    }

    /// Row-major `length × dimension` draw.
    pub fn generate_flat<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf = vec![0.0; self.length * self.dimension];
        fill_standard_normal(rng, &mut buf);
        if let Some(tau) = self.change_at {
            self.kind.apply(&mut buf[tau * self.dimension..]);
        }
        buf
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<Observation>> {
        self.validate()?;
        let buf = self.generate_flat(&mut stream_rng(seed, 0));
        buf.chunks_exact(self.dimension).map(|c| Observation::new(c.to_vec())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

/// Per-stream decision: any event counts as a detection.
pub fn classify_outcome(events: &[DetectionEvent], scenario: &Scenario) -> Outcome {
    outcome(scenario.has_change(), !events.is_empty())
}

fn outcome(change: bool, detected: bool) -> Outcome {
    match (change, detected) {
        (true, true) => Outcome::TruePositive,
        (true, false) => Outcome::FalseNegative,
        (false, true) => Outcome::FalsePositive,
        (false, false) => Outcome::TrueNegative,
    }
}

/// Confusion counts and derived rates. A rate whose denominator is zero is
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub p_mean: Option<f64>,
    pub fpr: Option<f64>,
    /// Reported change time minus true change time, for detected changes.
    pub localization: BTreeMap<i64, usize>,
}

impl PowerReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let total = tp + fp + tn + fn_;
        debug_assert!(total > 0);
        let accuracy = (tp + tn) as f64 / total as f64;
        let sensitivity = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        PowerReport {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            sensitivity,
            p_mean: sensitivity.map(|s| (accuracy * s).sqrt()),
            fpr: (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64),
            localization: BTreeMap::new(),
        }
    }

    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        let mut c = [0usize; 4];
        for o in outcomes {
            c[o as usize] += 1;
        }
        Self::from_counts(c[0], c[1], c[2], c[3])
    }

    pub fn samples(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub const MIN_STATIC_SAMPLES: usize = 100;
pub const MIN_ONLINE_SAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct StaticPowerConfig {
    pub dimension: usize,
    pub n: usize,
    pub change: ChangeKind,
    pub samples: usize,
    /// Total level, split equally over `families`.
    pub alpha: f64,
    pub families: Vec<StatisticKind>,
    pub seed: u64,
}

impl StaticPowerConfig {
    pub fn new(dimension: usize, n: usize, change: ChangeKind, samples: usize, alpha: f64) -> Self {
        StaticPowerConfig { dimension, n, change, samples, alpha, families: StatisticKind::ALL.to_vec(), seed: 0 }
    }
}

/// Samples of length `2n`, changed at position `n` with probability 1/2,
/// each tested once against analytic thresholds.
pub fn run_static_power(config: &StaticPowerConfig) -> Result<PowerReport> {
    if config.samples < MIN_STATIC_SAMPLES {
        return Err(GsrError::invalid("samples", format!("{} < {MIN_STATIC_SAMPLES}", config.samples)));
    }
    let (d, n) = (config.dimension, config.n);
    let alphas = allocate_alphas(config.alpha, &config.families, &[n])?;
    let rho: Vec<(StatisticKind, f64)> =
        alphas.iter().map(|((kind, n), a)| Ok((kind, analytic_threshold(kind, n, d, a)?))).collect::<Result<_>>()?;
    let base = Scenario { dimension: d, length: 2 * n, change_at: Some(n), kind: config.change };
    base.validate()?;
    let outcomes: Vec<Outcome> = (0..config.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.seed, k as u64);
            let change = rng.random_bool(0.5);
            let scenario = Scenario { change_at: change.then_some(n), ..base };
            let buf = scenario.generate_flat(&mut rng);
            let rows: Vec<&[f64]> = buf.chunks_exact(d).collect();
            let triple = compute_gsr(&decompose_window(&rows[..n], &rows[n..]).expect("finite draws"), n as u64);
            let detected = rho.iter().any(|&(kind, r)| kind.of(&triple).is_some_and(|s| s >= r));
            outcome(scenario.has_change(), detected)
        })
        .collect();
    Ok(PowerReport::from_outcomes(outcomes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OnlineThresholds {
    Analytic,
    /// Zone maxima over sequences as long as the simulated streams.
    MonteCarlo {
        replications: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlinePowerConfig {
    pub dimension: usize,
    pub windows: Vec<usize>,
    pub change: ChangeKind,
    pub samples: usize,
    pub alpha_total: f64,
    pub stream_length: usize,
    pub change_at: usize,
    pub thresholds: OnlineThresholds,
    pub policy: PostDetectionPolicy,
    pub seed: u64,
}

impl OnlinePowerConfig {
    /// Streams of 100 observations, change at 50, windows {20, 35, 50},
    /// total level 0.06, Monte Carlo thresholds from 4000 replications.
    pub fn new(dimension: usize, change: ChangeKind, samples: usize) -> Self {
        OnlinePowerConfig {
            dimension,
            windows: vec![20, 35, 50],
            change,
            samples,
            alpha_total: 0.06,
            stream_length: 100,
            change_at: 50,
            thresholds: OnlineThresholds::MonteCarlo { replications: 4000 },
            policy: PostDetectionPolicy::Halt,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < MIN_ONLINE_SAMPLES {
            return Err(GsrError::invalid("samples", format!("{} < {MIN_ONLINE_SAMPLES}", self.samples)));
        }
        check_probability("alpha_total", self.alpha_total)?;
        let max_n = self.windows.iter().copied().max().unwrap_or(0);
        if self.stream_length < 2 * max_n {
            return Err(GsrError::invalid("stream_length", format!("{} < 2 · max window {max_n}", self.stream_length)));
        }
        Scenario {
            dimension: self.dimension,
            length: self.stream_length,
            change_at: Some(self.change_at),
            kind: self.change,
        }
        .validate()
    }
}

/// Seed offset separating calibration draws from simulated streams.
const CALIBRATION_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Thresholds used by [`run_online_power`].
pub fn online_threshold_table(config: &OnlinePowerConfig) -> Result<ThresholdTable> {
    config.validate()?;
    let alphas = allocate_alphas(config.alpha_total, &StatisticKind::ALL, &config.windows)?;
    match config.thresholds {
        OnlineThresholds::Analytic => ThresholdTable::analytic(config.dimension, &alphas),
        OnlineThresholds::MonteCarlo { replications } => {
            let mut cal = CalibrationConfig::new(config.dimension, alphas);
            cal.zone_length = config.stream_length;
            cal.replications = replications;
            cal.seed = config.seed ^ CALIBRATION_SALT;
            calibrate_monte_carlo(&cal)
        }
    }
}

pub fn run_online_power(config: &OnlinePowerConfig) -> Result<PowerReport> {
    let table = online_threshold_table(config)?;
    run_online_power_with_table(config, &table)
}

/// Online study with precomputed thresholds.
pub fn run_online_power_with_table(config: &OnlinePowerConfig, table: &ThresholdTable) -> Result<PowerReport> {
    config.validate()?;
    let detector_config = DetectorConfig::from_table(table.clone(), config.policy)?;
    if detector_config.dimension != config.dimension {
        return Err(GsrError::Incompatible(format!(
            "threshold table is for dimension {}, streams have dimension {}",
            detector_config.dimension, config.dimension
        )));
    }
    Detector::new(detector_config.clone())?;
    let d = config.dimension;
    let results: Vec<(Outcome, Option<i64>)> = (0..config.samples)
        .into_par_iter()
        .map_init(
            || Detector::new(detector_config.clone()).expect("validated"),
            |detector, k| {
                detector.reset();
                let mut rng = stream_rng(config.seed, k as u64);
                let change = rng.random_bool(0.5);
                let scenario = Scenario {
                    dimension: d,
                    length: config.stream_length,
                    change_at: change.then_some(config.change_at),
                    kind: config.change,
                };
                let buf = scenario.generate_flat(&mut rng);
                let mut first: Option<DetectionEvent> = None;
                let mut any = false;
                for obs in buf.chunks_exact(d) {
                    let events = detector.step(obs).expect("finite draws");
                    if first.is_none() {
                        first = events.first().copied();
                    }
                    any |= !events.is_empty();
                }
                let result = outcome(scenario.has_change(), any);
                let offset = match (result, first) {
                    (Outcome::TruePositive, Some(e)) => Some(e.change_at as i64 - config.change_at as i64),
                    _ => None,
                };
                (result, offset)
            },
        )
        .collect();
    let mut report = PowerReport::from_outcomes(results.iter().map(|r| r.0));
    for offset in results.iter().filter_map(|r| r.1) {
        *report.localization.entry(offset).or_default() += 1;
    }
    Ok(report)
}

/// One grid point of a static power study.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourRow {
    pub d: usize,
    pub n: usize,
    pub report: PowerReport,
}

/// Static power over a `(d, n)` grid; the change may depend on `d`.
pub fn static_power_grid(
    dims: &[usize],
    ns: &[usize],
    change: impl Fn(usize) -> ChangeKind,
    samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<ContourRow>> {
    let mut rows = Vec::with_capacity(dims.len() * ns.len());
    for &d in dims {
        for &n in ns {
            let mut cfg = StaticPowerConfig::new(d, n, change(d), samples, alpha);
            cfg.seed = seed;
            rows.push(ContourRow { d, n, report: run_static_power(&cfg)? });
        }
    }
    Ok(rows)
}

/// Plot-ready CSV: `d,n,tp,fp,tn,fn,accuracy,sensitivity,p_mean,fpr`, with
/// undefined rates left empty.
pub fn write_contour_csv<W: Write>(writer: W, rows: &[ContourRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["d", "n", "tp", "fp", "tn", "fn", "accuracy", "sensitivity", "p_mean", "fpr"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.d.to_string(),
            row.n.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.tn.to_string(),
            r.fn_.to_string(),
            r.accuracy.to_string(),
            opt(r.sensitivity),
            opt(r.p_mean),
            opt(r.fpr),
        ])?;
    }
    w.flush()?;
    Ok(())
}
