//! Limit laws and empirical-distribution comparisons.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measures::DensityMeasure;
use crate::numeric::{integrate, CompensatedSum};

const MIXTURE_TOL: f64 = 1e-10;
const KNOTS: usize = 4096;

/// Standard normal CDF.
#[inline]
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
fn gauss_density(t: f64, v: f64) -> f64 {
    (-t * t / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
}

/// JSON form of a [`LimitLaw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawSpec {
    StandardNormal,
    /// Characteristic function `∫ exp(−h t²/(2μ(h))) dμ`.
    AveragedGaussian {
        measure: DensityMeasure,
        /// Use variance `h` instead of `h/μ(h)` in the density and CDF.
        #[serde(default)]
        literal_density: bool,
    },
    /// Mass function `∫ τᵏ h^{k+1} e^{−hτ}/k! dm`.
    AveragedPoisson {
        measure: DensityMeasure,
        tau: f64,
    },
    /// Gaussian mixture with variances `σ²` and weights summing to 1.
    VarianceProfileGaussian {
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// Mixing distribution of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
enum Mixture {
    /// `(weight, variance)` pairs.
    Finite(Vec<(f64, f64)>),
    /// Variance `scale · h(x)` under `dμ = h dm`.
    Continuous { measure: DensityMeasure, scale: f64 },
}

impl Mixture {
    /// `∫ f(v) dν(v)`.
    fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match self {
            Mixture::Finite(parts) => parts.iter().map(|&(w, v)| w * f(v)).collect::<CompensatedSum>().value(),
            Mixture::Continuous { measure, scale } => {
                let g = |x: f64| {
                    let h = measure.density(x);
                    h * f(scale * h)
                };
                integrate(&g, 0.0, 1.0, MIXTURE_TOL)
            }
        }
    }

    fn max_variance(&self) -> f64 {
        match self {
            Mixture::Finite(parts) => parts.iter().map(|p| p.1).fold(0.0, f64::max),
            Mixture::Continuous { measure, scale } => scale * measure.sup_density(),
        }
    }

    fn min_variance(&self) -> f64 {
        match self {
            Mixture::Finite(parts) => parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            Mixture::Continuous { measure, scale } => scale * measure.lower_bound(),
        }
    }
}

fn mixture_of(measure: &DensityMeasure, scale: f64) -> Mixture {
    match measure.pieces() {
        Some(pieces) => Mixture::Finite(pieces.iter().map(|p| (p.h * (p.hi - p.lo), scale * p.h)).collect()),
        None => Mixture::Continuous {
            measure: measure.clone(),
            scale,
        },
    }
}

/// CDF tabulated on equally spaced knots over `[−span, span]`.
#[derive(Debug, Clone, PartialEq)]
struct KnotCache {
    span: f64,
    values: Vec<f64>,
}

impl KnotCache {
    fn build(mixture: &Mixture) -> Self {
        let span = 12.0 * mixture.max_variance().sqrt();
        let mut values = Vec::with_capacity(KNOTS);
        let mut running = 0.0f64;
        for j in 0..KNOTS {
            let t = -span + 2.0 * span * j as f64 / (KNOTS - 1) as f64;
            running = running.max(mixture.expect(|v| phi(t / v.sqrt())));
            values.push(running.min(1.0));
        }
        Self { span, values }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= -self.span {
            return 0.0;
        }
        if t >= self.span {
            return 1.0;
        }
        let pos = (t + self.span) / (2.0 * self.span) * (KNOTS - 1) as f64;
        let j = (pos.floor() as usize).min(KNOTS - 2);
        let frac = pos - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }
}

/// A limit law with its evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawSpec", into = "LawSpec")]
pub struct LimitLaw {
    spec: LawSpec,
    /// Mixing law behind the characteristic function.
    charfn_mixture: Option<Mixture>,
    /// Mixing law behind the density and CDF.
    density_mixture: Option<Mixture>,
    cache: Option<KnotCache>,
}

impl TryFrom<LawSpec> for LimitLaw {
    type Error = Error;

    fn try_from(spec: LawSpec) -> Result<Self> {
        let (charfn_mixture, density_mixture) = match &spec {
            LawSpec::StandardNormal => (None, None),
            LawSpec::AveragedGaussian {
                measure,
                literal_density,
            } => {
                if measure.dimension() != 1 {
                    return Err(Error::Descriptor("averaged laws need a 1-D density".into()));
                }
                let normalized = 1.0 / measure.mu_h();
                let dens = if *literal_density { 1.0 } else { normalized };
                (Some(mixture_of(measure, normalized)), Some(mixture_of(measure, dens)))
            }
            LawSpec::AveragedPoisson { measure, tau } => {
                if !(*tau > 0.0) {
                    return Err(Error::Descriptor(format!("tau = {tau} must be positive")));
                }
                if measure.dimension() != 1 {
                    return Err(Error::Descriptor("averaged laws need a 1-D density".into()));
                }
                (None, None)
            }
            LawSpec::VarianceProfileGaussian { variances, weights } => {
                if variances.len() != weights.len() || variances.is_empty() {
                    return Err(Error::Descriptor(
                        "variances and weights must be nonempty and equally long".into(),
                    ));
                }
                if variances.iter().any(|v| !(*v > 0.0)) || weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::Descriptor(
                        "variances must be positive and weights nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Descriptor(format!("weights sum to {total}, not 1")));
                }
                let m = Mixture::Finite(weights.iter().copied().zip(variances.iter().copied()).collect());
                (Some(m.clone()), Some(m))
            }
        };
        let cache = match &density_mixture {
            Some(m @ Mixture::Continuous { .. }) => Some(KnotCache::build(m)),
            _ => None,
        };
        Ok(Self {
            spec,
            charfn_mixture,
            density_mixture,
            cache,
        })
    }
}

impl From<LimitLaw> for LawSpec {
    fn from(law: LimitLaw) -> Self {
        law.spec
    }
}

impl LimitLaw {
    pub fn standard_normal() -> Self {
        Self::try_from(LawSpec::StandardNormal).expect("valid")
    }

    pub fn averaged_gaussian(measure: &DensityMeasure) -> Result<Self> {
        Self::try_from(LawSpec::AveragedGaussian {
            measure: measure.clone(),
            literal_density: false,
        })
    }

    pub fn averaged_poisson(measure: &DensityMeasure, tau: f64) -> Result<Self> {
        Self::try_from(LawSpec::AveragedPoisson {
            measure: measure.clone(),
            tau,
        })
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.spec, LawSpec::AveragedPoisson { .. })
    }

    /// Characteristic function; real because every supported law is symmetric
    /// or, for the Poisson mixture, evaluated through its mass function.
    pub fn charfn(&self, t: f64) -> Complex64 {
        match (&self.spec, &self.charfn_mixture) {
            (LawSpec::StandardNormal, _) => Complex64::new((-t * t / 2.0).exp(), 0.0),
            (LawSpec::AveragedPoisson { measure, tau }, _) => {
                // ∫ exp(hτ(e^{it} − 1)) h dm
                let z = Complex64::new(0.0, t).exp() - 1.0;
                let f = |part: fn(Complex64) -> f64| {
                    let g = move |x: f64| {
                        let h = measure.density(x);
                        h * part((z * h * *tau).exp())
                    };
                    integrate_density_pieces(measure, &g)
                };
                Complex64::new(f(|c| c.re), f(|c| c.im))
            }
            (_, Some(m)) => Complex64::new(m.expect(|v| (-v * t * t / 2.0).exp()), 0.0),
            _ => unreachable!("gaussian laws carry a mixture"),
        }
    }

    /// Density (mass function at integers for the Poisson mixture).
    pub fn density(&self, t: f64) -> f64 {
        match (&self.spec, &self.density_mixture) {
            (LawSpec::StandardNormal, _) => gauss_density(t, 1.0),
            (LawSpec::AveragedPoisson { .. }, _) => {
                if t >= 0.0 && t.fract() == 0.0 {
                    self.pmf(t as u64)
                } else {
                    0.0
                }
            }
            (_, Some(m)) => m.expect(|v| gauss_density(t, v)),
            _ => unreachable!(),
        }
    }

    /// Averaged Poisson mass at `k`; zero for the Gaussian laws.
    pub fn pmf(&self, k: u64) -> f64 {
        match &self.spec {
            LawSpec::AveragedPoisson { measure, tau } => averaged_poisson_pmf(measure, *tau, k),
            _ => 0.0,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match (&self.spec, &self.density_mixture) {
            (LawSpec::StandardNormal, _) => phi(t),
            (LawSpec::AveragedPoisson { .. }, _) => {
                if t < 0.0 {
                    return 0.0;
                }
                let kmax = t.floor() as u64;
                let mut acc = CompensatedSum::new();
                for k in 0..=kmax {
                    let p = self.pmf(k);
                    acc.add(p);
                    if k > 20 && p < 1e-17 {
                        break;
                    }
                }
                acc.value().min(1.0)
            }
            (_, Some(Mixture::Finite(parts))) => parts
                .iter()
                .map(|&(w, v)| w * phi(t / v.sqrt()))
                .collect::<CompensatedSum>()
                .value(),
            (_, Some(Mixture::Continuous { .. })) => self.cache.as_ref().expect("cache").eval(t),
            _ => unreachable!(),
        }
    }

    /// `P(X < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if self.is_discrete() {
            if t <= 0.0 {
                0.0
            } else {
                self.cdf(t.ceil() - 1.0)
            }
        } else {
            self.cdf(t)
        }
    }

    /// Smallest `t` with `cdf(t) ≥ p` (bisection).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf(lo) > p && lo > -1e6 {
            lo *= 2.0;
        }
        while self.cdf(hi) < p && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if self.is_discrete() {
            hi.ceil()
        } else {
            hi
        }
    }

    /// Density recovered from the characteristic function by numerical
    /// Fourier inversion, `(1/π) ∫₀^∞ φ(s) cos(st) ds` (symmetric laws only).
    pub fn inverted_density(&self, t: f64) -> Result<f64> {
        let vmin = match (&self.spec, &self.charfn_mixture) {
            (LawSpec::StandardNormal, _) => 1.0,
            (LawSpec::AveragedPoisson { .. }, _) => {
                return Err(Error::Domain("inversion applies to the Gaussian laws".into()))
            }
            (_, Some(m)) => m.min_variance(),
            _ => unreachable!(),
        };
        let upper = (80.0 / vmin).sqrt();
        let f = |s: f64| self.charfn(s).re * (s * t).cos();
        let breaks: Vec<f64> = (0..=64).map(|i| upper * i as f64 / 64.0).collect();
        Ok(crate::numeric::integrate_pieces(&f, &breaks, 1e-12) / std::f64::consts::PI)
    }
}

fn integrate_density_pieces<F: Fn(f64) -> f64>(measure: &DensityMeasure, f: &F) -> f64 {
    let breaks = measure.breakpoints();
    crate::numeric::integrate_pieces(f, &breaks, MIXTURE_TOL)
}

/// `∫ τᵏ h^{k+1} e^{−hτ}/k! dm`; a finite sum for piecewise-constant `h`.
pub fn averaged_poisson_pmf(measure: &DensityMeasure, tau: f64, k: u64) -> f64 {
    let kf = k as f64;
    let lg = ln_gamma(kf + 1.0);
    let term = move |h: f64| (kf * (tau * h).ln() + h.ln() - tau * h - lg).exp();
    match measure.pieces() {
        Some(pieces) => pieces
            .iter()
            .map(|p| (p.hi - p.lo) * term(p.h))
            .collect::<CompensatedSum>()
            .value(),
        None => integrate_density_pieces(measure, &|x| term(measure.density(x))),
    }
}

/// Averaged Gaussian characteristic function `∫ exp(−h t²/(2μ(h))) dμ`.
pub fn averaged_gaussian_charfn(measure: &DensityMeasure, t: f64) -> Result<f64> {
    Ok(LimitLaw::averaged_gaussian(measure)?.charfn(t).re)
}

/// Averaged Gaussian density with variance profile `h/μ(h)`.
pub fn averaged_gaussian_density(measure: &DensityMeasure, t: f64) -> Result<f64> {
    Ok(LimitLaw::averaged_gaussian(measure)?.density(t))
}

/// Sorted sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empirical distribution needs at least one sample".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample {v}")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `#{x_i ≤ t} / N`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.values.partition_point(|&v| v <= t) as f64 / self.len() as f64
    }
}

/// Sup distance between the empirical CDF and `F`, given `F` and its left
/// limits. Ties count once, on both sides of the jump.
pub fn ks_against<F, G>(emp: &EmpiricalDistribution, cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = emp.len() as f64;
    let v = &emp.values;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        // empirical CDF jumps from i/n to j/n at v[i]
        d = d.max((i as f64 / n - cdf_left(v[i])).abs());
        d = d.max((j as f64 / n - cdf(v[i])).abs());
        i = j;
    }
    d
}

pub fn ks_statistic(emp: &EmpiricalDistribution, law: &LimitLaw) -> f64 {
    let d = ks_against(emp, |t| law.cdf(t), |t| law.cdf_left(t));
    if !law.is_discrete() {
        return d;
    }
    // between samples the law itself can jump at the integers
    let top = emp.values.last().copied().unwrap_or(0.0).max(0.0).ceil() as u64;
    (0..=top).fold(d, |d, k| {
        let t = k as f64;
        d.max((emp.cdf(t) - law.cdf(t)).abs())
            .max((emp.values.partition_point(|&v| v < t) as f64 / emp.len() as f64 - law.cdf_left(t)).abs())
    })
}

/// `N⁻¹ Σ exp(i t x_j)`.
pub fn empirical_charfn(emp: &EmpiricalDistribution, t: f64) -> Complex64 {
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for &x in &emp.values {
        let (s, c) = (t * x).sin_cos();
        re.add(c);
        im.add(s);
    }
    let n = emp.len() as f64;
    Complex64::new(re.value() / n, im.value() / n)
}

/// Total-variation distance between the law of integer counts and a pmf.
pub fn count_tv_distance<F: Fn(u64) -> f64>(counts: &[u64], pmf: F) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Domain("no counts".into()));
    }
    let n = counts.len() as f64;
    let top = *counts.iter().max().expect("nonempty");
    let mut freq = vec![0u64; top as usize + 1];
    for &c in counts {
        freq[c as usize] += 1;
    }
    let mut diff = CompensatedSum::new();
    let mut covered = CompensatedSum::new();
    let mut k = 0u64;
    loop {
        let p = pmf(k);
        let q = freq.get(k as usize).map_or(0.0, |&f| f as f64 / n);
        diff.add((q - p).abs());
        covered.add(p);
        k += 1;
        if k > top && (1.0 - covered.value() < 1e-13 || k > top + 10_000) {
            break;
        }
    }
    Ok(0.5 * (diff.value() + (1.0 - covered.value()).max(0.0)))
}

/// Poisson mass `e^{−τ} τᵏ / k!`.
pub fn poisson_pmf(tau: f64, k: u64) -> f64 {
    let kf = k as f64;
    (kf * tau.ln() - tau - ln_gamma(kf + 1.0)).exp()
}

/// Two-sample Kolmogorov distance; sorts both inputs.
pub fn two_sample_ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One row of an empirical-vs-theoretical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub empirical: f64,
    pub theoretical: f64,
}

pub fn write_comparison_csv<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_substream, uniform};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two() -> DensityMeasure {
        DensityMeasure::two_slope()
    }

    #[test]
    fn charfn_examples() {
        let leb = DensityMeasure::lebesgue();
        for t in [0.0, 0.3, 1.0, 2.5] {
            assert_abs_diff_eq!(
                averaged_gaussian_charfn(&leb, t).unwrap(),
                (-t * t / 2.0).exp(),
                epsilon = 1e-15
            );
        }
        assert_abs_diff_eq!(averaged_gaussian_charfn(&two(), 0.0).unwrap(), 1.0, epsilon = 1e-15);
        let expected = 0.75 * (-6.0f64 / 11.0).exp() + 0.25 * (-4.0f64 / 11.0).exp();
        let got = averaged_gaussian_charfn(&two(), 1.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
        assert!((got - 0.609).abs() < 1e-3);
    }

    #[test]
    fn density_examples() {
        let leb = DensityMeasure::lebesgue();
        assert_abs_diff_eq!(
            averaged_gaussian_density(&leb, 0.7).unwrap(),
            gauss_density(0.7, 1.0),
            epsilon = 1e-15
        );
        assert!(averaged_gaussian_density(&two(), 60.0).unwrap() < 1e-300);
        let (v1, v2) = (36.0 / 33.0, 24.0 / 33.0);
        let expected = (0.75 / f64::sqrt(v1) + 0.25 / f64::sqrt(v2)) / std::f64::consts::TAU.sqrt();
        assert_abs_diff_eq!(
            averaged_gaussian_density(&two(), 0.0).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_integrates_to_one() {
        for law in [
            LimitLaw::averaged_gaussian(&two()).unwrap(),
            LimitLaw::averaged_gaussian(&DensityMeasure::affine(1.5).unwrap()).unwrap(),
        ] {
            let total = integrate(&|t| law.density(t), -30.0, 30.0, 1e-12);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn inversion_matches_density() {
        for m in [two(), DensityMeasure::affine(-1.0).unwrap()] {
            let law = LimitLaw::averaged_gaussian(&m).unwrap();
            for i in 0..=20 {
                let t = -5.0 + 0.5 * i as f64;
                let inv = law.inverted_density(t).unwrap();
                assert!(
                    (inv - law.density(t)).abs() < 1e-4,
                    "t={t}: {inv} vs {}",
                    law.density(t)
                );
            }
        }
    }

    #[test]
    fn literal_density_differs_from_inversion() {
        let literal = LimitLaw::try_from(LawSpec::AveragedGaussian {
            measure: two(),
            literal_density: true,
        })
        .unwrap();
        let inv = literal.inverted_density(0.0).unwrap();
        assert!((inv - literal.density(0.0)).abs() > 1e-3);
    }

    #[test]
    fn affine_cdf_cache() {
        let m = DensityMeasure::affine(1.2).unwrap();
        let law = LimitLaw::averaged_gaussian(&m).unwrap();
        for t in [-3.0, -1.0, -0.2, 0.0, 0.4, 2.0] {
            let direct = integrate(&|s| law.density(s), -20.0, t, 1e-12);
            assert!((law.cdf(t) - direct).abs() < 1e-5, "t={t}");
        }
        assert_abs_diff_eq!(law.cdf(0.0), 0.5, epsilon = 1e-6);
        assert_eq!(law.cdf(1e3), 1.0);
        assert_eq!(law.cdf(-1e3), 0.0);
    }

    #[test]
    fn poisson_examples() {
        let leb = DensityMeasure::lebesgue();
        for k in 0..10 {
            assert_abs_diff_eq!(averaged_poisson_pmf(&leb, 2.0, k), poisson_pmf(2.0, k), epsilon = 1e-15);
        }
        let expected = (2.0 / 3.0) * 1.125 * (-1.125f64).exp() + (1.0 / 3.0) * 0.75 * (-0.75f64).exp();
        assert_abs_diff_eq!(averaged_poisson_pmf(&two(), 1.0, 0), expected, epsilon = 1e-15);
        for tau in [0.5, 1.0, 3.0] {
            let total: f64 = (0..80).map(|k| averaged_poisson_pmf(&two(), tau, k)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
        let aff = DensityMeasure::affine(0.5).unwrap();
        let total: f64 = (0..60).map(|k| averaged_poisson_pmf(&aff, 1.0, k)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn ks_examples() {
        let normal = LimitLaw::standard_normal();
        let zeros = EmpiricalDistribution::new(vec![0.0; 50]).unwrap();
        assert_abs_diff_eq!(ks_statistic(&zeros, &normal), 0.5, epsilon = 1e-15);

        let n = 10_000;
        let q: Vec<f64> = (1..=n).map(|i| normal.quantile((i as f64 - 0.5) / n as f64)).collect();
        let d = ks_statistic(&EmpiricalDistribution::new(q).unwrap(), &normal);
        assert!(d <= 1e-4 + 1e-9, "{d}");

        // uniform samples: the sup of |F_U − Φ| is Φ(0) − 0 = 1/2, attained at 0
        let mut rng = derive_substream(2, 0).unwrap();
        let u: Vec<f64> = (0..1000).map(|_| uniform(&mut rng)).collect();
        let oracle = 0.5f64.max(
            (0..=1000)
                .map(|i| {
                    let x = i as f64 / 1000.0;
                    (x - phi(x)).abs()
                })
                .fold(0.0, f64::max),
        );
        let d = ks_statistic(&EmpiricalDistribution::new(u).unwrap(), &normal);
        assert!((d - oracle).abs() < 2e-3, "{d} vs {oracle}");
        assert!(EmpiricalDistribution::new(vec![]).is_err());
    }

    #[test]
    fn poisson_ks_and_tv() {
        let law = LimitLaw::averaged_poisson(&DensityMeasure::lebesgue(), 1.0).unwrap();
        let counts: Vec<u64> = (0..1000)
            .map(|i| {
                if i < 368 {
                    0
                } else if i < 736 {
                    1
                } else if i < 920 {
                    2
                } else {
                    3
                }
            })
            .collect();
        let tv = count_tv_distance(&counts, |k| law.pmf(k)).unwrap();
        assert!(tv < 0.03, "{tv}");
        let emp = EmpiricalDistribution::new(counts.iter().map(|&c| c as f64).collect()).unwrap();
        assert!(ks_statistic(&emp, &law) < 0.03);
        let all_zero = count_tv_distance(&[0, 0, 0], |k| poisson_pmf(1.0, k)).unwrap();
        assert_abs_diff_eq!(all_zero, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn empirical_charfn_examples() {
        let e = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(empirical_charfn(&e, 0.0).re, 1.0);
        let a = 1.7;
        let sym = EmpiricalDistribution::new(vec![-a, a]).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let c = empirical_charfn(&sym, t);
            assert_abs_diff_eq!(c.re, (a * t).cos(), epsilon = 1e-15);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-15);
        }
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = derive_substream(10, 0).unwrap();
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let c = empirical_charfn(&EmpiricalDistribution::new(draws).unwrap(), 1.0);
        assert!((c.re - (-0.5f64).exp()).abs() < 3e-3);
    }

    #[test]
    fn variance_profile_law() {
        let law = LimitLaw::try_from(LawSpec::VarianceProfileGaussian {
            variances: vec![0.5, 2.0],
            weights: vec![0.5, 0.5],
        })
        .unwrap();
        let t: f64 = 1.3;
        let expected = 0.5 * (-0.25 * t * t).exp() + 0.5 * (-t * t).exp();
        assert_abs_diff_eq!(law.charfn(t).re, expected, epsilon = 1e-15);
        assert!(LimitLaw::try_from(LawSpec::VarianceProfileGaussian {
            variances: vec![1.0],
            weights: vec![0.7],
        })
        .is_err());
    }

    #[test]
    fn serde_round_trip() {
        let law = LimitLaw::averaged_gaussian(&two()).unwrap();
        let json = serde_json::to_string(&law).unwrap();
        assert!(json.contains("\"kind\":\"averaged-gaussian\""));
        let back: LimitLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(law, back);
    }

    #[test]
    fn poisson_charfn_normalized() {
        let law = LimitLaw::averaged_poisson(&two(), 1.0).unwrap();
        assert_abs_diff_eq!(law.charfn(0.0).re, 1.0, epsilon = 1e-12);
        let t = 0.7;
        let direct: Complex64 = (0..80)
            .map(|k| law.pmf(k) * Complex64::new(0.0, t * k as f64).exp())
            .sum();
        assert!((law.charfn(t) - direct).norm() < 1e-10);
    }

    proptest! {
        #[test]
        fn charfn_even_and_bounded(t in -10.0f64..10.0) {
            let law = LimitLaw::averaged_gaussian(&two()).unwrap();
            let a = law.charfn(t).re;
            prop_assert!((a - law.charfn(-t).re).abs() < 1e-15);
            prop_assert!(a <= 1.0 + 1e-15);
        }

        #[test]
        fn ks_invariant_under_increasing_maps(seed in 0u64..1000) {
            let mut rng = derive_substream(seed, 0).unwrap();
            let xs: Vec<f64> = (0..200).map(|_| 4.0 * uniform(&mut rng) - 2.0).collect();
            let normal = LimitLaw::standard_normal();
            let d = ks_statistic(&EmpiricalDistribution::new(xs.clone()).unwrap(), &normal);
            let mapped = EmpiricalDistribution::new(xs.iter().map(|x| x.exp()).collect()).unwrap();
            let dg = ks_against(&mapped, |y| phi(y.ln()), |y| phi(y.ln()));
            prop_assert!((d - dg).abs() < 1e-12);
        }
    }
}
