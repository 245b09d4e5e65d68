//! Multi-window online detector.
//!
//! Every window length `n` keeps its own [`ObservationWindow`] over the same
//! stream. Once a window holds `2n` observations each new observation slides
//! it, the three ratios are recomputed and each is compared with its
//! threshold `ρ_{kind,n}`. An exceedance reports a change at the first
//! observation of the right half, `t − n + 1`, where `t` is the index of the
//! newest observation (stream indices start at 0).
//!
//! Levels are split Bonferroni-style: the total level over the statistic
//! families, then each family level over the window lengths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{StatisticKind, ThresholdTable};
use crate::error::{check_probability, GsrError, Result};
use crate::graph::{check_finite, ObservationWindow};
use crate::gsr::{compute_gsr, GsrTriple};

/// Significance level per `(family, n)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaAllocation {
    cells: BTreeMap<(StatisticKind, usize), f64>,
}

impl AlphaAllocation {
    pub fn from_cells(cells: impl IntoIterator<Item = ((StatisticKind, usize), f64)>) -> Result<Self> {
        let cells: BTreeMap<_, _> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(GsrError::invalid("alphas", "no cells"));
        }
        for (&(_, n), &alpha) in &cells {
            check_probability("alpha", alpha)?;
            if n < 2 {
                return Err(GsrError::invalid("windows", format!("half-length {n} < 2")));
            }
        }
        Ok(AlphaAllocation { cells })
    }

    /// Levels recorded in a threshold table.
    pub fn from_table(table: &ThresholdTable) -> Result<Self> {
        Self::from_cells(table.entries.iter().map(|e| ((e.kind, e.n), e.alpha)))
    }

    pub fn get(&self, kind: StatisticKind, n: usize) -> Option<f64> {
        self.cells.get(&(kind, n)).copied()
    }

    /// Cells ordered by `(family, n)`.
    pub fn iter(&self) -> impl Iterator<Item = ((StatisticKind, usize), f64)> + '_ {
        self.cells.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn windows(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.cells.keys().map(|&(_, n)| n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn family_total(&self, kind: StatisticKind) -> f64 {
        self.iter().filter(|((k, _), _)| *k == kind).map(|(_, a)| a).sum()
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }
}

/// Equal split of `alpha_total` over `families`, then of each family level
/// over `windows`. The last cell absorbs rounding so that the cells summed in
/// iteration order reproduce `alpha_total` exactly.
pub fn allocate_alphas(alpha_total: f64, families: &[StatisticKind], windows: &[usize]) -> Result<AlphaAllocation> {
    check_probability("alpha_total", alpha_total)?;
    if windows.is_empty() {
        return Err(GsrError::invalid("windows", "empty window set"));
    }
    if families.is_empty() {
        return Err(GsrError::invalid("families", "no statistic family selected"));
    }
    let mut ws = windows.to_vec();
    ws.sort_unstable();
    ws.dedup();
    let mut fs = families.to_vec();
    fs.sort_unstable();
    fs.dedup();
    let per_cell = alpha_total / fs.len() as f64 / ws.len() as f64;
    let mut cells: Vec<((StatisticKind, usize), f64)> =
        fs.iter().flat_map(|&k| ws.iter().map(move |&n| ((k, n), per_cell))).collect();
    let head: f64 = cells[..cells.len() - 1].iter().map(|(_, a)| a).sum();
    cells.last_mut().unwrap().1 = alpha_total - head;
    AlphaAllocation::from_cells(cells)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdSource {
    /// Single-point Fisher critical values.
    Analytic,
    /// Precomputed (usually Monte Carlo) table.
    Table(ThresholdTable),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostDetectionPolicy {
    /// Stop reporting after the first tick with an event.
    Halt,
    /// Suppress events for this many ticks after a tick with an event.
    Cooldown(usize),
    Continue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub dimension: usize,
    pub alphas: AlphaAllocation,
    pub thresholds: ThresholdSource,
    pub policy: PostDetectionPolicy,
}

impl DetectorConfig {
    /// Equal Bonferroni split over all three families, analytic thresholds,
    /// cooldown of `2 · max(n)`.
    pub fn new(dimension: usize, windows: &[usize], alpha_total: f64) -> Result<Self> {
        let alphas = allocate_alphas(alpha_total, &StatisticKind::ALL, windows)?;
        let max_n = alphas.windows().into_iter().max().unwrap_or(0);
        Ok(DetectorConfig {
            dimension,
            alphas,
            thresholds: ThresholdSource::Analytic,
            policy: PostDetectionPolicy::Cooldown(2 * max_n),
        })
    }

    /// Tests every cell of `table` with its recorded level.
    pub fn from_table(table: ThresholdTable, policy: PostDetectionPolicy) -> Result<Self> {
        Ok(DetectorConfig {
            dimension: table.dimension,
            alphas: AlphaAllocation::from_table(&table)?,
            thresholds: ThresholdSource::Table(table),
            policy,
        })
    }

    pub fn with_policy(mut self, policy: PostDetectionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_thresholds(mut self, thresholds: ThresholdSource) -> Self {
        self.thresholds = thresholds;
        self
    }

    fn resolve(&self) -> Result<ThresholdTable> {
        match &self.thresholds {
            ThresholdSource::Analytic => ThresholdTable::analytic(self.dimension, &self.alphas),
            ThresholdSource::Table(table) => {
                if table.dimension != self.dimension {
                    return Err(GsrError::Incompatible(format!(
                        "threshold table is for dimension {}, stream has dimension {}",
                        table.dimension, self.dimension
                    )));
                }
                for ((kind, n), alpha) in self.alphas.iter() {
                    let entry = table.get(kind, n).ok_or_else(|| {
                        GsrError::Incompatible(format!("threshold table has no {kind} entry for n={n}"))
                    })?;
                    if (entry.alpha - alpha).abs() > 1e-12 * alpha {
                        return Err(GsrError::Incompatible(format!(
                            "{kind} n={n}: table level {} differs from requested {alpha}",
                            entry.alpha
                        )));
                    }
                }
                Ok(table.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    MeanChange,
    VarianceIncrease,
    VarianceDecrease,
}

impl From<StatisticKind> for EventKind {
    fn from(kind: StatisticKind) -> Self {
        match kind {
            StatisticKind::Mu => EventKind::MeanChange,
            StatisticKind::SigmaPlus => EventKind::VarianceIncrease,
            StatisticKind::SigmaMinus => EventKind::VarianceDecrease,
        }
    }
}

/// One threshold exceedance. Serializes to the JSON-lines event schema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detected_at: u64,
    pub change_at: u64,
    pub kind: EventKind,
    pub window: usize,
    pub statistic: f64,
    pub threshold: f64,
}

/// Per-family supremum over warm windows of `statistic − threshold`.
/// A family with no defined statistic is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PooledStatistics {
    pub mu: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl PooledStatistics {
    pub fn max(&self) -> f64 {
        self.mu.max(self.sigma_plus).max(self.sigma_minus)
    }

    pub fn fires(&self) -> bool {
        self.max() >= 0.0
    }
}

struct Lane {
    window: ObservationWindow,
    rho: [Option<f64>; 3],
    latest: Option<GsrTriple>,
}

/// Single-stream detector state.
pub struct Detector {
    config: DetectorConfig,
    table: ThresholdTable,
    lanes: Vec<Lane>,
    clock: u64,
    halted: bool,
    cooldown: usize,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        if config.dimension == 0 {
            return Err(GsrError::invalid("dimension", "must be at least 1"));
        }
        let table = config.resolve()?;
        let lanes = config
            .alphas
            .windows()
            .into_iter()
            .map(|n| {
                let mut rho = [None; 3];
                for kind in StatisticKind::ALL {
                    if config.alphas.get(kind, n).is_some() {
                        rho[kind as usize] = table.rho(kind, n);
                    }
                }
                Ok(Lane { window: ObservationWindow::new(n, config.dimension)?, rho, latest: None })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Detector { config, table, lanes, clock: 0, halted: false, cooldown: 0 })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Thresholds in use.
    pub fn thresholds(&self) -> &ThresholdTable {
        &self.table
    }

    /// Number of observations consumed so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn reset(&mut self) {
        for lane in &mut self.lanes {
            lane.window = ObservationWindow::new(lane.window.half_len(), self.config.dimension).expect("valid");
            lane.latest = None;
        }
        self.clock = 0;
        self.halted = false;
        self.cooldown = 0;
    }

    /// Latest ratios per window length (`None` while the window is cold).
    pub fn latest(&self) -> impl Iterator<Item = (usize, Option<&GsrTriple>)> + '_ {
        self.lanes.iter().map(|l| (l.window.half_len(), l.latest.as_ref()))
    }

    /// Consumes one observation and returns the events raised at this tick,
    /// ordered by `(family, n)`.
    pub fn step(&mut self, observation: &[f64]) -> Result<Vec<DetectionEvent>> {
        if observation.len() != self.config.dimension {
            return Err(GsrError::DimensionMismatch { expected: self.config.dimension, found: observation.len() });
        }
        check_finite(observation)?;
        let t = self.clock;
        self.clock += 1;
        for lane in &mut self.lanes {
            lane.window.push(observation)?;
            if lane.window.is_warm() {
                let n = lane.window.half_len() as u64;
                let decomp = lane.window.decompose()?;
                lane.latest = Some(compute_gsr(&decomp, t + 1 - n));
            }
        }
        if self.halted {
            return Ok(Vec::new());
        }
        let mut events = Vec::new();
        for kind in StatisticKind::ALL {
            for lane in &self.lanes {
                let (Some(triple), Some(rho)) = (lane.latest.as_ref(), lane.rho[kind as usize]) else {
                    continue;
                };
                if let Some(stat) = kind.of(triple) {
                    if stat >= rho {
                        events.push(DetectionEvent {
                            detected_at: t,
                            change_at: triple.t_index,
                            kind: kind.into(),
                            window: lane.window.half_len(),
                            statistic: stat,
                            threshold: rho,
                        });
                    }
                }
            }
        }
        if self.cooldown > 0 {
            self.cooldown -= 1;
            events.clear();
        } else if !events.is_empty() {
            match self.config.policy {
                PostDetectionPolicy::Halt => self.halted = true,
                PostDetectionPolicy::Cooldown(c) => self.cooldown = c,
                PostDetectionPolicy::Continue => {}
            }
        }
        Ok(events)
    }

    /// Feeds a whole stream and collects every event.
    pub fn run<T: AsRef<[f64]>>(&mut self, stream: &[T]) -> Result<Vec<DetectionEvent>> {
        let mut all = Vec::new();
        for obs in stream {
            all.extend(self.step(obs.as_ref())?);
        }
        Ok(all)
    }

    /// Pooled statistics at the current tick.
    pub fn pooled_statistics(&self) -> Result<PooledStatistics> {
        let mut pooled = [f64::NEG_INFINITY; 3];
        let mut any_warm = false;
        for lane in &self.lanes {
            let Some(triple) = lane.latest.as_ref() else {
                continue;
            };
            any_warm = true;
            for kind in StatisticKind::ALL {
                if let (Some(stat), Some(rho)) = (kind.of(triple), lane.rho[kind as usize]) {
                    let slot = &mut pooled[kind as usize];
                    *slot = slot.max(stat - rho);
                }
            }
        }
        if !any_warm {
            let lane = self.lanes.iter().max_by_key(|l| l.window.capacity()).expect("at least one window");
            return Err(GsrError::WindowNotWarm {
                filled: self.clock.min(lane.window.capacity() as u64) as usize,
                capacity: self.lanes.iter().map(|l| l.window.capacity()).min().unwrap_or(0),
            });
        }
        Ok(PooledStatistics { mu: pooled[0], sigma_plus: pooled[1], sigma_minus: pooled[2] })
    }
}
