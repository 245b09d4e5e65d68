//! Complete-graph spanning distances over sliding windows.
//!
//! The spanning distance of a set of points is `Σ_{i<j} ‖Y_i − Y_j‖²`. A
//! window of `2n` points is split into halves and decomposed into
//!
//! * `w_left`, `w_right`: spanning distance inside each half,
//! * `w_btw`: squared distances summed over cross pairs,
//! * `w_full = w_left + w_right + w_btw`,
//! * `w_rem = w_full − 2 (w_left + w_right) = ‖Σ_left Y − Σ_right Y‖²`.
//!
//! [`ObservationWindow`] keeps per-half sums of `Y` and `‖Y‖²` so that a
//! slide costs `O(d)`, using `Σ_{i<j} ‖Y_i − Y_j‖² = m Σ ‖Y_i‖² − ‖Σ Y_i‖²`.
//! Coordinates are accumulated relative to an origin taken from the data and
//! refreshed together with a full recomputation every `4n` slides.

use serde::{Deserialize, Serialize};

use crate::error::{GsrError, Result};

/// One `d`-dimensional sample with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(GsrError::invalid("observation", "dimension must be at least 1"));
        }
        check_finite(&values)?;
        Ok(Observation(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Observation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Observation {
    type Error = GsrError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Observation::new(values)
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(coordinate) => Err(GsrError::NonFinite { coordinate }),
        None => Ok(()),
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σ_{i<j} ‖Y_i − Y_j‖²` by enumeration of every unordered pair.
pub fn spanning_distance<T: AsRef<[f64]>>(observations: &[T]) -> Result<f64> {
    if observations.len() < 2 {
        return Err(GsrError::TooFewObservations { required: 2, found: observations.len() });
    }
    let d = observations[0].as_ref().len();
    for obs in observations {
        let obs = obs.as_ref();
        if obs.len() != d {
            return Err(GsrError::DimensionMismatch { expected: d, found: obs.len() });
        }
        check_finite(obs)?;
    }
    let mut total = 0.0;
    for (i, a) in observations.iter().enumerate() {
        for b in &observations[..i] {
            total += squared_distance(a.as_ref(), b.as_ref());
        }
    }
    Ok(total)
}

/// Spanning distances of a warm window and its two halves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanningDecomposition {
    pub w_full: f64,
    pub w_left: f64,
    pub w_right: f64,
    pub w_rem: f64,
    pub w_btw: f64,
}

#[derive(Clone, Debug)]
struct HalfStats {
    sum: Vec<f64>,
    sumsq: f64,
}

impl HalfStats {
    fn new(d: usize) -> Self {
        HalfStats { sum: vec![0.0; d], sumsq: 0.0 }
    }

    fn clear(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.sumsq = 0.0;
    }

    fn add(&mut self, y: &[f64], origin: &[f64]) {
        let mut sq = 0.0;
        for ((s, v), o) in self.sum.iter_mut().zip(y).zip(origin) {
            let c = v - o;
            *s += c;
            sq += c * c;
        }
        self.sumsq += sq;
    }

    fn remove(&mut self, y: &[f64], origin: &[f64]) {
        let mut sq = 0.0;
        for ((s, v), o) in self.sum.iter_mut().zip(y).zip(origin) {
            let c = v - o;
            *s -= c;
            sq += c * c;
        }
        self.sumsq -= sq;
    }

    /// `m Σ‖Y‖² − ‖ΣY‖²`, flushed to zero when it is below the rounding
    /// level of the raw second moment (a constant half).
    fn spanning(&self, m: f64) -> f64 {
        let raw = m * self.sumsq;
        let w = raw - self.sum.iter().map(|s| s * s).sum::<f64>();
        if w <= 1e-12 * raw {
            0.0
        } else {
            w
        }
    }
}

/// Ring buffer of the latest `2n` observations, split into a left half (the
/// `n` oldest) and a right half (the `n` newest).
#[derive(Clone, Debug)]
pub struct ObservationWindow {
    half: usize,
    dim: usize,
    buffer: Vec<f64>,
    /// Slot of the oldest observation.
    start: usize,
    filled: usize,
    origin: Vec<f64>,
    left: HalfStats,
    right: HalfStats,
    slides_since_refresh: usize,
    pushed: u64,
}

impl ObservationWindow {
    /// Empty window with half-length `n >= 1` over dimension `d >= 1`.
    pub fn new(half: usize, dim: usize) -> Result<Self> {
        if half == 0 {
            return Err(GsrError::invalid("n", "window half-length must be at least 1"));
        }
        if dim == 0 {
            return Err(GsrError::invalid("d", "dimension must be at least 1"));
        }
        Ok(ObservationWindow {
            half,
            dim,
            buffer: vec![0.0; 2 * half * dim],
            start: 0,
            filled: 0,
            origin: vec![0.0; dim],
            left: HalfStats::new(dim),
            right: HalfStats::new(dim),
            slides_since_refresh: 0,
            pushed: 0,
        })
    }

    /// Window of half-length `n` holding the last `2n` of `observations`.
    pub fn from_observations<T: AsRef<[f64]>>(half: usize, observations: &[T]) -> Result<Self> {
        let dim = observations
            .first()
            .map(|o| o.as_ref().len())
            .ok_or(GsrError::TooFewObservations { required: 2 * half, found: 0 })?;
        let mut window = ObservationWindow::new(half, dim)?;
        for obs in observations {
            window.push(obs.as_ref())?;
        }
        Ok(window)
    }

    pub fn half_len(&self) -> usize {
        self.half
    }

    pub fn capacity(&self) -> usize {
        2 * self.half
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_warm(&self) -> bool {
        self.filled == self.capacity()
    }

    /// Total number of observations ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    fn slot(&self, position: usize) -> &[f64] {
        let s = (self.start + position) % self.capacity();
        &self.buffer[s * self.dim..(s + 1) * self.dim]
    }

    /// Observation at logical position `0..2n` (0 is the oldest).
    pub fn get(&self, position: usize) -> Option<&[f64]> {
        (position < self.filled).then(|| self.slot(position))
    }

    /// Held observations from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.filled).map(move |p| self.slot(p))
    }

    fn validate(&self, incoming: &[f64]) -> Result<()> {
        if incoming.len() != self.dim {
            return Err(GsrError::DimensionMismatch { expected: self.dim, found: incoming.len() });
        }
        check_finite(incoming)
    }

    /// Appends an observation, sliding once the window is warm.
    pub fn push(&mut self, incoming: &[f64]) -> Result<()> {
        self.validate(incoming)?;
        if self.is_warm() {
            self.slide_unchecked(incoming);
            return Ok(());
        }
        if self.filled == 0 {
            self.origin.copy_from_slice(incoming);
        }
        let s = (self.start + self.filled) % self.capacity();
        self.buffer[s * self.dim..(s + 1) * self.dim].copy_from_slice(incoming);
        self.filled += 1;
        self.pushed += 1;
        if self.is_warm() {
            self.recompute();
        }
        Ok(())
    }

    /// Evicts the oldest observation, moves the boundary observation from
    /// the right half into the left half and appends `incoming` on the right.
    pub fn slide(&mut self, incoming: &[f64]) -> Result<()> {
        if !self.is_warm() {
            return Err(self.not_warm());
        }
        self.validate(incoming)?;
        self.slide_unchecked(incoming);
        Ok(())
    }

    fn slide_unchecked(&mut self, incoming: &[f64]) {
        let (d, cap, n) = (self.dim, self.capacity(), self.half);
        let oldest = self.start;
        let boundary = (self.start + n) % cap;
        {
            let (buf, origin) = (&self.buffer, &self.origin);
            let old = &buf[oldest * d..(oldest + 1) * d];
            let mid = &buf[boundary * d..(boundary + 1) * d];
            self.left.remove(old, origin);
            self.left.add(mid, origin);
            self.right.remove(mid, origin);
            self.right.add(incoming, origin);
        }
        self.buffer[oldest * d..(oldest + 1) * d].copy_from_slice(incoming);
        self.start = (self.start + 1) % cap;
        self.pushed += 1;
        self.slides_since_refresh += 1;
        if self.slides_since_refresh >= 4 * n {
            self.recompute();
        }
    }

    /// Rebuilds the running sums from the buffer, re-centred on the newest
    /// observation.
    pub fn recompute(&mut self) {
        self.slides_since_refresh = 0;
        self.left.clear();
        self.right.clear();
        if self.filled == 0 {
            return;
        }
        let newest = self.slot(self.filled - 1).to_vec();
        self.origin.copy_from_slice(&newest);
        for p in 0..self.filled {
            let s = (self.start + p) % self.capacity();
            let y = &self.buffer[s * self.dim..(s + 1) * self.dim];
            if p < self.half {
                self.left.add(y, &self.origin);
            } else {
                self.right.add(y, &self.origin);
            }
        }
    }

    fn not_warm(&self) -> GsrError {
        GsrError::WindowNotWarm { filled: self.filled, capacity: self.capacity() }
    }

    pub fn decompose(&self) -> Result<SpanningDecomposition> {
        if !self.is_warm() {
            return Err(self.not_warm());
        }
        let m = self.half as f64;
        let w_left = self.left.spanning(m);
        let w_right = self.right.spanning(m);
        let w_rem: f64 = self.left.sum.iter().zip(&self.right.sum).map(|(l, r)| (l - r) * (l - r)).sum();
        let within = w_left + w_right;
        Ok(SpanningDecomposition { w_full: w_rem + 2.0 * within, w_left, w_right, w_rem, w_btw: w_rem + within })
    }
}

/// Decomposition of the window whose halves are `left` and `right`.
pub fn decompose_window<T: AsRef<[f64]>>(left: &[T], right: &[T]) -> Result<SpanningDecomposition> {
    if left.len() != right.len() {
        return Err(GsrError::invalid("window", format!("halves differ in length: {} vs {}", left.len(), right.len())));
    }
    let all: Vec<&[f64]> = left.iter().chain(right).map(|o| o.as_ref()).collect();
    ObservationWindow::from_observations(left.len(), &all)?.decompose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    // Independent reference: pairwise enumeration for every component.
    fn pairwise(window: &ObservationWindow) -> SpanningDecomposition {
        let all: Vec<&[f64]> = window.iter().collect();
        let n = window.half_len();
        let (l, r) = all.split_at(n);
        let w_left = spanning_distance(l).unwrap();
        let w_right = spanning_distance(r).unwrap();
        let w_full = spanning_distance(&all).unwrap();
        let w_btw: f64 = l.iter().flat_map(|a| r.iter().map(move |b| squared_distance(a, b))).sum();
        SpanningDecomposition { w_full, w_left, w_right, w_rem: w_full - 2.0 * (w_left + w_right), w_btw }
    }

    fn close(a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= 1e-9 * scale.max(1e-300)
    }

    fn assert_matches(got: &SpanningDecomposition, want: &SpanningDecomposition) {
        let scale = want.w_full.abs();
        for (g, w) in [
            (got.w_full, want.w_full),
            (got.w_left, want.w_left),
            (got.w_right, want.w_right),
            (got.w_rem, want.w_rem),
            (got.w_btw, want.w_btw),
        ] {
            assert!(close(g, w, scale), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn spanning_distance_small_sets() {
        assert_eq!(spanning_distance(&pts(&[0.0, 1.0, 2.0])).unwrap(), 6.0);
        assert_eq!(spanning_distance(&pts(&[0.0, 1.0, 3.0, 4.0])).unwrap(), 40.0);
        assert_eq!(spanning_distance(&pts(&[2.5; 7])).unwrap(), 0.0);
    }

    #[test]
    fn spanning_distance_errors() {
        assert!(matches!(spanning_distance(&pts(&[1.0])), Err(GsrError::TooFewObservations { .. })));
        assert!(matches!(spanning_distance(&[vec![1.0], vec![1.0, 2.0]]), Err(GsrError::DimensionMismatch { .. })));
        assert!(matches!(spanning_distance(&[vec![1.0], vec![f64::NAN]]), Err(GsrError::NonFinite { .. })));
    }

    #[test]
    fn decomposition_of_two_pairs() {
        let d = decompose_window(&pts(&[0.0, 1.0]), &pts(&[3.0, 4.0])).unwrap();
        assert_eq!(d.w_full, 40.0);
        assert_eq!(d.w_left, 1.0);
        assert_eq!(d.w_right, 1.0);
        assert_eq!(d.w_btw, 38.0);
        assert_eq!(d.w_rem, 36.0);
    }

    #[test]
    fn decomposition_degenerate_and_symmetric() {
        let d = decompose_window(&pts(&[3.0; 4]), &pts(&[3.0; 4])).unwrap();
        assert_eq!(d, SpanningDecomposition::default());
        let d = decompose_window(&pts(&[0.0, 1.0]), &pts(&[0.0, 1.0])).unwrap();
        assert_eq!(d.w_left, 1.0);
        assert_eq!(d.w_right, 1.0);
    }

    #[test]
    fn cold_window_is_rejected() {
        let mut w = ObservationWindow::new(2, 1).unwrap();
        w.push(&[1.0]).unwrap();
        assert!(matches!(w.decompose(), Err(GsrError::WindowNotWarm { filled: 1, capacity: 4 })));
        assert!(w.slide(&[1.0]).is_err());
    }

    #[test]
    fn push_validates_input() {
        let mut w = ObservationWindow::new(2, 2).unwrap();
        assert!(matches!(w.push(&[1.0]), Err(GsrError::DimensionMismatch { .. })));
        assert!(matches!(w.push(&[1.0, f64::INFINITY]), Err(GsrError::NonFinite { coordinate: 1 })));
        assert_eq!(w.pushed(), 0);
    }

    #[test]
    fn slide_shifts_halves() {
        let mut w = ObservationWindow::from_observations(2, &pts(&[0.0, 1.0, 3.0, 4.0])).unwrap();
        w.slide(&[5.0]).unwrap();
        let held: Vec<f64> = w.iter().map(|o| o[0]).collect();
        assert_eq!(held, vec![1.0, 3.0, 4.0, 5.0]);
        let d = w.decompose().unwrap();
        assert_eq!(d.w_left, 4.0);
        assert_eq!(d.w_right, 1.0);
    }

    #[test]
    fn constant_stream_stays_zero() {
        let mut w = ObservationWindow::new(3, 2).unwrap();
        for _ in 0..100 {
            w.push(&[0.1, -7.3]).unwrap();
            if w.is_warm() {
                assert_eq!(w.decompose().unwrap(), SpanningDecomposition::default());
            }
        }
    }

    #[test]
    fn full_replacement_equals_fresh_window() {
        let data: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 * 0.1]).collect();
        let mut w = ObservationWindow::from_observations(4, &data[..8]).unwrap();
        for obs in &data[8..16] {
            w.slide(obs).unwrap();
        }
        let fresh = ObservationWindow::from_observations(4, &data[8..16]).unwrap();
        let a: Vec<&[f64]> = w.iter().collect();
        let b: Vec<&[f64]> = fresh.iter().collect();
        assert_eq!(a, b);
        assert_matches(&w.decompose().unwrap(), &fresh.decompose().unwrap());
    }

    proptest! {
        #[test]
        fn incremental_matches_pairwise(
            n in 2usize..6,
            d in 1usize..4,
            seq in prop::collection::vec(-50.0f64..50.0, 12..400),
        ) {
            let obs: Vec<&[f64]> = seq.chunks_exact(d).collect();
            prop_assume!(obs.len() >= 2 * n);
            let mut w = ObservationWindow::new(n, d).unwrap();
            for o in obs {
                w.push(o).unwrap();
                if w.is_warm() {
                    let got = w.decompose().unwrap();
                    assert_matches(&got, &pairwise(&w));
                    // identities hold on the incremental result itself
                    prop_assert!(close(got.w_full, got.w_left + got.w_right + got.w_btw, got.w_full));
                    prop_assert!(close(got.w_rem, got.w_full - 2.0 * (got.w_left + got.w_right), got.w_full));
                    prop_assert!(got.w_left >= 0.0 && got.w_right >= 0.0 && got.w_btw >= 0.0 && got.w_rem >= 0.0);
                }
            }
        }

        #[test]
        fn offset_data_keeps_precision(
            offset in -1e6f64..1e6,
            seq in prop::collection::vec(-1.0f64..1.0, 40..120),
        ) {
            let shifted: Vec<Vec<f64>> = seq.iter().map(|x| vec![x + offset]).collect();
            let mut w = ObservationWindow::new(5, 1).unwrap();
            for o in &shifted {
                w.push(o).unwrap();
            }
            let want = pairwise(&w);
            let got = w.decompose().unwrap();
            prop_assert!((got.w_left - want.w_left).abs() <= 1e-6 * want.w_left.max(1e-3));
        }
    }
}
