//! Chi-square and Fisher distributions, Gaussian sampling and the
//! Kolmogorov-Smirnov distance.
//!
//! Quantiles are always *upper-tail*: `fisher_upper_quantile(p, alpha)`
//! returns `x` with `P(X >= x) = alpha`. Thresholds reject for large
//! statistics, so this is the only convention used in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, GsrError, Result};
use crate::graph::Observation;

const EPS: f64 = f64::EPSILON;

/// Anything with a cumulative distribution function on the real line.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Law of `scale * X` where `X` follows `inner`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<D> {
    pub inner: D,
    pub scale: f64,
}

impl<D: Cdf> Cdf for Scaled<D> {
    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x / self.scale)
    }
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        return ln_gamma(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn max_iterations(a: f64, b: f64) -> usize {
    10_000 + (50.0 * (a + b).sqrt()) as usize
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=max_iterations(a, b) {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_density(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Solves `I_x(a, b) = p` for `x` by Newton steps kept inside a shrinking
/// bisection bracket.
pub fn inverse_regularized_beta(a: f64, b: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = a / (a + b);
    for _ in 0..400 {
        let f = regularized_beta(a, b, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * EPS * x.max(EPS) {
            break;
        }
        let density = beta_density(a, b, x);
        let newton = if density > 0.0 { x - f / density } else { f64::NAN };
        // Fall back to bisection when Newton leaves the bracket.
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if f.abs() < 1e-16 * p.min(1.0 - p) {
            break;
        }
    }
    x
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..max_iterations(a, 0.0) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=max_iterations(a, 0.0) {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

// ---------------------------------------------------------------------------
// Fisher
// ---------------------------------------------------------------------------

/// Fisher (F) distribution with `df_num` and `df_den` degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherParams {
    pub df_num: f64,
    pub df_den: f64,
}

impl FisherParams {
    pub fn new(df_num: f64, df_den: f64) -> Result<Self> {
        for (name, df) in [("df_num", df_num), ("df_den", df_den)] {
            if !(df.is_finite() && df > 0.0) {
                return Err(GsrError::invalid(name, format!("{df} is not a positive finite degree of freedom")));
            }
        }
        Ok(FisherParams { df_num, df_den })
    }

    /// `P(X >= x)`, evaluated directly in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let y = self.df_den / (self.df_den + self.df_num * x);
        regularized_beta(0.5 * self.df_den, 0.5 * self.df_num, y)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.df_den > 2.0).then(|| self.df_den / (self.df_den - 2.0))
    }
}

impl Cdf for FisherParams {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let y = self.df_num * x / (self.df_num * x + self.df_den);
        regularized_beta(0.5 * self.df_num, 0.5 * self.df_den, y)
    }
}

/// Upper-tail quantile of the F distribution: `P(X >= x) = alpha`.
pub fn fisher_upper_quantile(params: FisherParams, alpha: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    let params = FisherParams::new(params.df_num, params.df_den)?;
    let (m, n) = (params.df_num, params.df_den);
    // sf(x) = I_y(n/2, m/2) with y = n / (n + m x)
    let y = inverse_regularized_beta(0.5 * n, 0.5 * m, alpha);
    Ok(n * (1.0 - y) / (m * y))
}

// ---------------------------------------------------------------------------
// Chi-square
// ---------------------------------------------------------------------------

/// (Possibly non-central) chi-square distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareParams {
    pub df: f64,
    pub noncentrality: f64,
}

impl ChiSquareParams {
    pub fn central(df: f64) -> Result<Self> {
        Self::new(df, 0.0)
    }

    pub fn new(df: f64, noncentrality: f64) -> Result<Self> {
        if !(df.is_finite() && df > 0.0) {
            return Err(GsrError::invalid("df", format!("{df} is not positive and finite")));
        }
        if !(noncentrality.is_finite() && noncentrality >= 0.0) {
            return Err(GsrError::invalid("noncentrality", format!("{noncentrality} is not nonnegative and finite")));
        }
        Ok(ChiSquareParams { df, noncentrality })
    }

    fn central_sf(df: f64, x: f64) -> f64 {
        regularized_gamma_q(0.5 * df, 0.5 * x)
    }

    fn central_density(df: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = 0.5 * df;
        ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
    }

    /// `P(X >= x)`.
    pub fn sf(&self, x: f64) -> f64 {
        if self.noncentrality == 0.0 {
            Self::central_sf(self.df, x)
        } else {
            1.0 - self.cdf(x)
        }
    }
}

impl Cdf for ChiSquareParams {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.noncentrality == 0.0 {
            return regularized_gamma_p(0.5 * self.df, 0.5 * x);
        }
        // Poisson(λ/2) mixture of central laws, summed outwards from the mode.
        let half = 0.5 * self.noncentrality;
        let mode = half.floor();
        let weight = |j: f64| (-half + j * half.ln() - ln_gamma(j + 1.0)).exp();
        let term = |j: f64| weight(j) * regularized_gamma_p(0.5 * self.df + j, 0.5 * x);
        let mut total = term(mode);
        let mut j = mode + 1.0;
        while weight(j) > 1e-18 {
            total += term(j);
            j += 1.0;
        }
        let mut j = mode - 1.0;
        while j >= 0.0 && weight(j) > 1e-18 {
            total += term(j);
            j -= 1.0;
        }
        total.clamp(0.0, 1.0)
    }
}

/// Whether a chi-square quantile is exact or one of the Birgé bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileKind {
    Exact,
    UpperBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareQuantile {
    pub value: f64,
    pub kind: QuantileKind,
}

/// Upper-`alpha` quantile of a chi-square law.
///
/// Central laws are inverted exactly. For a non-central law the Birgé upper
/// bound is returned and tagged [`QuantileKind::UpperBound`].
pub fn chi2_upper_quantile(params: ChiSquareParams, alpha: f64) -> Result<ChiSquareQuantile> {
    check_probability("alpha", alpha)?;
    let params = ChiSquareParams::new(params.df, params.noncentrality)?;
    if params.noncentrality > 0.0 {
        return Ok(ChiSquareQuantile {
            value: birge_upper_bound(params.noncentrality, params.df, alpha),
            kind: QuantileKind::UpperBound,
        });
    }
    let df = params.df;
    let mut lo = 0.0_f64;
    let mut hi = df.max(1.0);
    while ChiSquareParams::central_sf(df, hi) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        // sf is decreasing; root of g(x) = alpha - sf(x)
        let g = alpha - ChiSquareParams::central_sf(df, x);
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * EPS * x.max(f64::MIN_POSITIVE) {
            break;
        }
        let density = ChiSquareParams::central_density(df, x);
        let newton = if density > 0.0 { x - g / density } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if g.abs() < 1e-16 * alpha.min(1.0 - alpha) {
            break;
        }
    }
    Ok(ChiSquareQuantile { value: x, kind: QuantileKind::Exact })
}

/// Birgé upper bound on the `1 - u` quantile of a non-central chi-square with
/// `df` degrees of freedom and noncentrality `a`.
pub fn birge_upper_bound(a: f64, df: f64, u: f64) -> f64 {
    let log = (1.0 / u).ln();
    df + a + 2.0 * ((df + 2.0 * a) * log).sqrt() + 2.0 * log
}

/// Birgé lower bound on the `u` quantile (the `1 - u` tail from below).
pub fn birge_lower_bound(a: f64, df: f64, u: f64) -> f64 {
    let log = (1.0 / u).ln();
    df + a - 2.0 * ((df + 2.0 * a) * log).sqrt()
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Per-replication generator: stream `stream` of the ChaCha8 sequence keyed
/// by `seed`. Results never depend on which thread draws them.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Standard deviation of a Gaussian, either shared by every coordinate or
/// given per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum Scale {
    Isotropic(f64),
    PerCoordinate(Vec<f64>),
}

impl Scale {
    fn at(&self, coordinate: usize) -> f64 {
        match self {
            Scale::Isotropic(s) => *s,
            Scale::PerCoordinate(s) => s[coordinate],
        }
    }
}

/// Draws `count` independent `N(mean, diag(scale^2))` observations.
pub fn gaussian_sample(mean: &[f64], scale: &Scale, count: usize, seed: u64) -> Result<Vec<Observation>> {
    let d = mean.len();
    if d == 0 {
        return Err(GsrError::invalid("mean", "dimension must be at least 1"));
    }
    if count == 0 {
        return Err(GsrError::invalid("count", "must be at least 1"));
    }
    if let Scale::PerCoordinate(s) = scale {
        if s.len() != d {
            return Err(GsrError::DimensionMismatch { expected: d, found: s.len() });
        }
    }
    for j in 0..d {
        let s = scale.at(j);
        if !(s.is_finite() && s > 0.0) {
            return Err(GsrError::invalid("scale", format!("{s} is not positive")));
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut buf = vec![0.0; d];
    (0..count)
        .map(|_| {
            fill_standard_normal(&mut rng, &mut buf);
            let values = buf.iter().enumerate().map(|(j, z)| mean[j] + scale.at(j) * z).collect();
            Observation::new(values)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// Sup-norm distance between the empirical CDF of `samples` and `reference`.
pub fn ks_statistic<D: Cdf + ?Sized>(samples: &[f64], reference: &D) -> Result<f64> {
    if samples.len() < 2 {
        return Err(GsrError::TooFewObservations { required: 2, found: samples.len() });
    }
    if let Some(j) = samples.iter().position(|x| x.is_nan()) {
        return Err(GsrError::NonFinite { coordinate: j });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = reference.cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    Ok(d)
}

/// Asymptotic one-sample KS critical value `c(level) / sqrt(m)`.
pub fn ks_critical_value(m: usize, level: f64) -> f64 {
    (-(0.5 * level).ln() / 2.0).sqrt() / (m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fisher_quantiles_match_reference_values() {
        let cases = [
            (1.0, 1.0, 0.05, 161.447_638_797_588_27),
            (10.0, 10.0, 0.05, 2.978_237_016_082_321_3),
            (1.0, 2.0, 0.05, 18.512_820_512_820_497),
            (100.0, 5800.0, 0.05, 1.246_237_801_523_060_4),
            (5.0, 90.0, 0.01, 3.227_625_821_297_685),
            (290.0, 290.0, 0.001, 1.439_420_832_211_618_7),
            (4900.0, 4900.0, 0.02 / 3.0, 1.073_278_325_654_685_6),
            (2.5, 7.3, 0.3, 1.454_452_498_113_666_8),
        ];
        for (m, n, alpha, expected) in cases {
            let q = fisher_upper_quantile(FisherParams::new(m, n).unwrap(), alpha).unwrap();
            assert_relative_eq!(q, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn fisher_median_of_symmetric_law_is_one() {
        for k in [1.0, 3.0, 17.0, 290.0, 5000.0] {
            let q = fisher_upper_quantile(FisherParams::new(k, k).unwrap(), 0.5).unwrap();
            assert_relative_eq!(q, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn chi2_quantiles_match_reference_values() {
        let cases = [
            (1.0, 0.05, 3.841_458_820_694_128_5),
            (10.0, 0.05, 18.307_038_053_275_15),
            (45.0, 0.01, 69.956_832_065_838_19),
            (0.5, 0.9, 1.350_012_477_126_788_4e-4),
            (3000.0, 0.5, 2_999.333_359_677_192_7),
        ];
        for (df, alpha, expected) in cases {
            let q = chi2_upper_quantile(ChiSquareParams::central(df).unwrap(), alpha).unwrap();
            assert_eq!(q.kind, QuantileKind::Exact);
            assert_relative_eq!(q.value, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn chi2_median_below_mean() {
        for df in [1.0, 2.0, 7.0, 100.0] {
            let q = chi2_upper_quantile(ChiSquareParams::central(df).unwrap(), 0.5).unwrap();
            assert!(q.value < df);
        }
    }

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(
            FisherParams::new(3.0, 7.0).unwrap().cdf(2.0),
            0.797_306_357_513_349_1,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            ChiSquareParams::central(4.0).unwrap().cdf(3.0),
            0.442_174_599_628_925_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn birge_bound_direct_evaluation() {
        assert_relative_eq!(birge_upper_bound(0.0, 10.0, 0.05), 26.938_121_157_331_928, max_relative = 1e-12);
        let q = chi2_upper_quantile(ChiSquareParams::new(10.0, 3.0).unwrap(), 0.05).unwrap();
        assert_eq!(q.kind, QuantileKind::UpperBound);
        assert_relative_eq!(q.value, birge_upper_bound(3.0, 10.0, 0.05));
    }

    #[test]
    fn birge_bounds_bracket_the_noncentral_quantile() {
        let law = ChiSquareParams::new(6.0, 12.0).unwrap();
        let upper = birge_upper_bound(12.0, 6.0, 0.05);
        let lower = birge_lower_bound(12.0, 6.0, 0.05);
        assert!(law.sf(upper) <= 0.05);
        assert!(law.cdf(lower) <= 0.05);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let f = FisherParams { df_num: 1.0, df_den: 1.0 };
        assert!(fisher_upper_quantile(f, 0.0).is_err());
        assert!(fisher_upper_quantile(f, 1.0).is_err());
        assert!(FisherParams::new(0.0, 1.0).is_err());
        assert!(FisherParams::new(1.0, f64::INFINITY).is_err());
        assert!(ChiSquareParams::new(-1.0, 0.0).is_err());
        assert!(ChiSquareParams::new(1.0, -0.5).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip_on_grid() {
        let fishers = [(1.0, 1.0), (3.0, 12.0), (10.0, 580.0), (49.0, 49.0)];
        let chis = [1.0, 4.5, 50.0, 900.0];
        for k in 1..1000 {
            let alpha = k as f64 / 1000.0;
            for &(m, n) in &fishers {
                let p = FisherParams::new(m, n).unwrap();
                let q = fisher_upper_quantile(p, alpha).unwrap();
                assert!((p.cdf(q) - (1.0 - alpha)).abs() < 1e-9, "F({m},{n}) alpha {alpha}");
            }
            for &df in &chis {
                let p = ChiSquareParams::central(df).unwrap();
                let q = chi2_upper_quantile(p, alpha).unwrap().value;
                assert!((p.cdf(q) - (1.0 - alpha)).abs() < 1e-9, "chi2({df}) alpha {alpha}");
            }
        }
    }

    #[test]
    fn fisher_reciprocal_symmetry() {
        for k in [1.0, 5.0, 29.0, 490.0] {
            let p = FisherParams::new(k, k).unwrap();
            for alpha in [0.001, 0.01, 0.05, 0.2, 0.4] {
                let hi = fisher_upper_quantile(p, alpha).unwrap();
                let lo = fisher_upper_quantile(p, 1.0 - alpha).unwrap();
                assert!((hi * lo - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_validated() {
        let a = gaussian_sample(&[0.0, 1.0], &Scale::Isotropic(2.0), 50, 9).unwrap();
        let b = gaussian_sample(&[0.0, 1.0], &Scale::Isotropic(2.0), 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_sample(&[0.0], &Scale::Isotropic(0.0), 5, 1).is_err());
        assert!(gaussian_sample(&[0.0, 0.0], &Scale::PerCoordinate(vec![1.0]), 5, 1).is_err());
    }

    #[test]
    fn sample_moments_within_four_standard_errors() {
        let n = 100_000;
        let draws = gaussian_sample(&[0.0], &Scale::Isotropic(1.0), n, 2024).unwrap();
        let xs: Vec<f64> = draws.iter().map(|o| o.values()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.013, "mean {mean}");
        // s.e. of the sample variance is sqrt(2 / n)
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn ks_on_own_quantiles_is_small() {
        let law = ChiSquareParams::central(5.0).unwrap();
        let m = 200;
        let xs: Vec<f64> = (1..=m)
            .map(|i| {
                let p = i as f64 / (m as f64 + 1.0);
                chi2_upper_quantile(law, 1.0 - p).unwrap().value
            })
            .collect();
        let d = ks_statistic(&xs, &law).unwrap();
        assert!(d <= 1.0 / (m as f64 + 1.0) + 1e-9);
    }

    #[test]
    fn ks_on_point_mass_at_median() {
        let law = FisherParams::new(4.0, 4.0).unwrap();
        let d = ks_statistic(&[1.0; 10], &law).unwrap();
        assert!(d >= 0.5 - 1e-12);
        assert!(ks_statistic(&[], &law).is_err());
    }

    #[test]
    fn ks_accepts_samples_from_reference() {
        let draws = gaussian_sample(&[0.0], &Scale::Isotropic(1.0), 5000, 77).unwrap();
        let xs: Vec<f64> = draws.iter().map(|o| o.values()[0]).collect();
        let normal = |x: f64| 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
        assert!(ks_statistic(&xs, &normal).unwrap() < 1.63 / (5000f64).sqrt());
        assert_relative_eq!(ks_critical_value(5000, 0.01) * (5000f64).sqrt(), 1.6276, epsilon = 1e-4);
    }

    // erf via the regularized gamma function: erf(x) = sign(x) P(1/2, x^2)
    fn erf(x: f64) -> f64 {
        x.signum() * regularized_gamma_p(0.5, x * x)
    }
}
