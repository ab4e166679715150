//! Invariant measures with exact ball masses.
//!
//! One-dimensional measures are piecewise-constant densities (Lebesgue is the
//! single-piece case) or the named affine density `1 + β(x − 1/2)`. On the
//! torus only Lebesgue is supported, where balls of radius `r ≤ 1/2` are
//! round discs of area `π r²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, integrate_pieces};
use crate::rng::{derive_substream, uniform, BitExpansion, Stream};
use crate::systems::{BitPoint, MapSystem, Metric, Point};

const NORMALIZATION_TOL: f64 = 1e-12;
const QUADRATURE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Density {
    Pieces {
        pieces: Vec<Piece>,
        /// `cdf[i]` is the mass of `[0, pieces[i].lo)`.
        cdf: Vec<f64>,
    },
    Affine {
        slope: f64,
    },
    LebesgueTorus,
}

/// `dμ = h dm` with exact ball masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureDescriptor", into = "MeasureDescriptor")]
pub struct DensityMeasure {
    density: Density,
    /// Declared Frostman exponent (diagnostics only).
    pub s0: Option<f64>,
    /// Declared thin-annuli exponent (diagnostics only).
    pub alpha0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<Piece>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub named: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
}

impl TryFrom<MeasureDescriptor> for DensityMeasure {
    type Error = Error;

    fn try_from(d: MeasureDescriptor) -> Result<Self> {
        let mut m = match (d.pieces, d.named.as_deref()) {
            (Some(p), None) => DensityMeasure::piecewise(p)?,
            (None, Some("lebesgue")) => DensityMeasure::lebesgue(),
            (None, Some("lebesgue-torus")) => DensityMeasure::lebesgue_torus(),
            (None, Some("two-slope")) => DensityMeasure::two_slope(),
            (None, Some("affine")) => DensityMeasure::affine(
                d.slope
                    .ok_or_else(|| Error::Descriptor("affine density needs \"slope\"".into()))?,
            )?,
            (None, Some(other)) => return Err(Error::Descriptor(format!("unknown measure {other:?}"))),
            (Some(_), Some(_)) => {
                return Err(Error::Descriptor(
                    "give either \"pieces\" or \"named\", not both".into(),
                ))
            }
            (None, None) => return Err(Error::Descriptor("measure needs \"pieces\" or \"named\"".into())),
        };
        m.s0 = d.s0;
        m.alpha0 = d.alpha0;
        Ok(m)
    }
}

impl From<DensityMeasure> for MeasureDescriptor {
    fn from(m: DensityMeasure) -> Self {
        let (pieces, named, slope) = match m.density {
            Density::Pieces { pieces, .. } => (Some(pieces), None, None),
            Density::Affine { slope } => (None, Some("affine".to_string()), Some(slope)),
            Density::LebesgueTorus => (None, Some("lebesgue-torus".to_string()), None),
        };
        MeasureDescriptor {
            pieces,
            named,
            slope,
            s0: m.s0,
            alpha0: m.alpha0,
        }
    }
}

impl DensityMeasure {
    pub fn piecewise(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Descriptor("density needs at least one piece".into()));
        }
        if pieces[0].lo != 0.0 || pieces.last().map(|p| p.hi) != Some(1.0) {
            return Err(Error::Descriptor("pieces must cover [0,1)".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.lo < p.hi) || !p.h.is_finite() || p.h <= 0.0 {
                return Err(Error::Descriptor(format!("piece {i} is empty or has h <= 0")));
            }
            if let Some(next) = pieces.get(i + 1) {
                if next.lo != p.hi {
                    return Err(Error::Descriptor(format!(
                        "pieces {i} and {} are not contiguous",
                        i + 1
                    )));
                }
            }
        }
        let mut cdf = Vec::with_capacity(pieces.len() + 1);
        let mut acc = 0.0;
        for p in &pieces {
            cdf.push(acc);
            acc += p.h * (p.hi - p.lo);
        }
        cdf.push(acc);
        if (acc - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Descriptor(format!("density integrates to {acc}, not 1")));
        }
        Ok(Self {
            density: Density::Pieces { pieces, cdf },
            s0: Some(1.0),
            alpha0: Some(1.0),
        })
    }

    pub fn lebesgue() -> Self {
        Self::piecewise(vec![Piece {
            lo: 0.0,
            hi: 1.0,
            h: 1.0,
        }])
        .expect("valid")
    }

    /// Invariant density of [`MapSystem::two_slope`].
    pub fn two_slope() -> Self {
        Self::piecewise(vec![
            Piece {
                lo: 0.0,
                hi: 2.0 / 3.0,
                h: 9.0 / 8.0,
            },
            Piece {
                lo: 2.0 / 3.0,
                hi: 1.0,
                h: 0.75,
            },
        ])
        .expect("valid")
    }

    pub fn affine(slope: f64) -> Result<Self> {
        if !(slope.abs() < 2.0) {
            return Err(Error::Descriptor(format!(
                "affine slope {slope} must satisfy |slope| < 2"
            )));
        }
        Ok(Self {
            density: Density::Affine { slope },
            s0: Some(1.0),
            alpha0: Some(1.0),
        })
    }

    pub fn lebesgue_torus() -> Self {
        Self {
            density: Density::LebesgueTorus,
            s0: Some(2.0),
            alpha0: Some(1.0),
        }
    }

    pub fn dimension(&self) -> usize {
        match self.density {
            Density::LebesgueTorus => 2,
            _ => 1,
        }
    }

    pub fn pieces(&self) -> Option<&[Piece]> {
        match &self.density {
            Density::Pieces { pieces, .. } => Some(pieces),
            _ => None,
        }
    }

    pub fn is_lebesgue(&self) -> bool {
        match &self.density {
            Density::Pieces { pieces, .. } => pieces.iter().all(|p| p.h == 1.0),
            Density::LebesgueTorus => true,
            Density::Affine { slope } => *slope == 0.0,
        }
    }

    /// Density `h(x)` (1-D; 1 on the torus).
    pub fn density(&self, x: f64) -> f64 {
        match &self.density {
            Density::Pieces { pieces, .. } => pieces[piece_index(pieces, x)].h,
            Density::Affine { slope } => 1.0 + slope * (x - 0.5),
            Density::LebesgueTorus => 1.0,
        }
    }

    /// Lower bound `c` with `h ≥ c > 0`.
    pub fn lower_bound(&self) -> f64 {
        match &self.density {
            Density::Pieces { pieces, .. } => pieces.iter().map(|p| p.h).fold(f64::INFINITY, f64::min),
            Density::Affine { slope } => 1.0 - slope.abs() / 2.0,
            Density::LebesgueTorus => 1.0,
        }
    }

    pub fn sup_density(&self) -> f64 {
        match &self.density {
            Density::Pieces { pieces, .. } => pieces.iter().map(|p| p.h).fold(0.0, f64::max),
            Density::Affine { slope } => 1.0 + slope.abs() / 2.0,
            Density::LebesgueTorus => 1.0,
        }
    }

    /// Points where `h` may jump or bend, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.density {
            Density::Pieces { pieces, .. } => {
                let mut v: Vec<f64> = pieces.iter().map(|p| p.lo).collect();
                v.push(1.0);
                v
            }
            _ => vec![0.0, 1.0],
        }
    }

    /// `μ([0, x))` for `x ∈ [0, 1]`.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.density {
            Density::Pieces { pieces, cdf } => {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let i = piece_index(pieces, x);
                cdf[i] + pieces[i].h * (x - pieces[i].lo)
            }
            Density::Affine { slope } => {
                let x = x.clamp(0.0, 1.0);
                x + slope * (x * x - x) / 2.0
            }
            Density::LebesgueTorus => x.clamp(0.0, 1.0),
        }
    }

    /// Inverse of [`Self::cdf`].
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.density {
            Density::Pieces { pieces, cdf } => {
                let i = cdf[1..].partition_point(|&c| c <= u).min(pieces.len() - 1);
                let p = pieces[i];
                (p.lo + (u - cdf[i]) / p.h).clamp(p.lo, p.hi)
            }
            Density::Affine { slope } => {
                if *slope == 0.0 {
                    return u;
                }
                // (β/2) x² + (1 − β/2) x − u = 0
                let a = slope / 2.0;
                let b = 1.0 - a;
                let disc = (b * b + 4.0 * a * u).max(0.0);
                (2.0 * u / (b + disc.sqrt())).clamp(0.0, 1.0)
            }
            Density::LebesgueTorus => u,
        }
    }

    /// `∫ h dμ = ∫ h² dm`.
    pub fn mu_h(&self) -> f64 {
        match &self.density {
            Density::Pieces { pieces, .. } => compensated_sum(pieces.iter().map(|p| p.h * p.h * (p.hi - p.lo))),
            Density::Affine { slope } => 1.0 + slope * slope / 12.0,
            Density::LebesgueTorus => 1.0,
        }
    }

    fn check_metric(&self, metric: Metric) -> Result<()> {
        let ok = (metric == Metric::Torus) == (self.dimension() == 2);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "a {}-dimensional measure cannot be paired with the {metric:?} metric",
                self.dimension()
            )))
        }
    }

    /// Largest admissible radius around `x`.
    pub fn max_radius(metric: Metric, x: f64) -> f64 {
        match metric {
            Metric::Circle | Metric::Torus => 0.5,
            Metric::Interval => x.max(1.0 - x),
        }
    }

    pub fn ball_measure(&self, system: &MapSystem, center: &Point, r: f64) -> Result<f64> {
        let metric = system
            .metric()
            .ok_or_else(|| Error::Domain("ball measures need a geometric system".into()))?;
        self.ball_measure_at(metric, center.coords()?, r)
    }

    pub fn ball_measure_at(&self, metric: Metric, center: [f64; 2], r: f64) -> Result<f64> {
        self.check_metric(metric)?;
        check_radius(metric, r)?;
        Ok(self.ball_unchecked(metric, center, r))
    }

    /// Ball mass without validation; `r` must be admissible for `metric`.
    #[inline]
    pub fn ball_unchecked(&self, metric: Metric, center: [f64; 2], r: f64) -> f64 {
        let x = center[0];
        match metric {
            Metric::Torus => std::f64::consts::PI * r * r,
            Metric::Interval => self.cdf((x + r).min(1.0)) - self.cdf((x - r).max(0.0)),
            Metric::Circle => {
                if r >= 0.5 {
                    return 1.0;
                }
                let periodic = |t: f64| {
                    let f = t.floor();
                    f + self.cdf(t - f)
                };
                periodic(x + r) - periodic(x - r)
            }
        }
    }

    /// `M̂(r) = ∫ μ(B(x, r)) dμ(x)`.
    pub fn mean_ball_measure(&self, metric: Metric, r: f64) -> Result<f64> {
        self.check_metric(metric)?;
        check_radius(metric, r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.density {
            Density::LebesgueTorus => std::f64::consts::PI * r * r,
            Density::Pieces { pieces, .. } => {
                let shifts: &[f64] = if metric == Metric::Circle {
                    &[-1.0, 0.0, 1.0]
                } else {
                    &[0.0]
                };
                compensated_sum(pieces.iter().flat_map(|p| {
                    pieces.iter().flat_map(move |q| {
                        shifts
                            .iter()
                            .map(move |s| p.h * q.h * pair_overlap(p.lo, p.hi, q.lo + s, q.hi + s, r))
                    })
                }))
            }
            Density::Affine { .. } => {
                let f = |x: f64| self.density(x) * self.ball_unchecked(metric, [x, 0.0], r);
                let mut breaks: Vec<f64> = [0.0, 1.0, r, 1.0 - r, 1.0 - 2.0 * r, 2.0 * r]
                    .into_iter()
                    .filter(|b| (0.0..=1.0).contains(b))
                    .collect();
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                integrate_pieces(&f, &breaks, QUADRATURE_TOL * 1e-3)
            }
        })
    }

    #[inline]
    pub fn sample_value(&self, rng: &mut Stream) -> f64 {
        self.quantile(uniform(rng))
    }

    /// i.i.d. μ-points as floats.
    pub fn sample(&self, rng: &mut Stream, count: usize) -> Vec<Point> {
        (0..count)
            .map(|_| match self.density {
                Density::LebesgueTorus => Point::Planar([uniform(rng), uniform(rng)]),
                _ => Point::Real(self.sample_value(rng)),
            })
            .collect()
    }

    /// Empirical constants of the Frostman and thin-annuli bounds over grids.
    pub fn verify_regularity(
        &self,
        metric: Metric,
        radii: &[f64],
        centers: &[[f64; 2]],
        bounds: RegularityBounds,
    ) -> Result<RegularityReport> {
        if radii.is_empty() || centers.is_empty() {
            return Err(Error::Domain("regularity grids must be nonempty".into()));
        }
        self.check_metric(metric)?;
        let s0 = bounds.s0.or(self.s0).unwrap_or(self.dimension() as f64);
        let alpha0 = bounds.alpha0.or(self.alpha0).unwrap_or(1.0);
        let mut frostman = 0.0f64;
        let mut annulus = 0.0f64;
        for c in centers {
            let rmax = Self::max_radius(metric, c[0]);
            for &r in radii.iter().filter(|&&r| r > 0.0 && r <= rmax) {
                let inner = self.ball_unchecked(metric, *c, r);
                frostman = frostman.max(inner / r.powf(s0));
                for &eps in radii.iter().filter(|&&e| e > 0.0 && r + e <= rmax) {
                    let outer = self.ball_unchecked(metric, *c, r + eps);
                    annulus = annulus.max((outer - inner) / eps.powf(alpha0));
                }
            }
        }
        let mut violations = Vec::new();
        if let Some(b) = bounds.frostman_bound {
            if frostman > b * (1.0 + 1e-12) {
                violations.push(format!("Frostman constant {frostman} exceeds {b}"));
            }
        }
        if let Some(b) = bounds.annulus_bound {
            if annulus > b * (1.0 + 1e-12) {
                violations.push(format!("annulus constant {annulus} exceeds {b}"));
            }
        }
        Ok(RegularityReport {
            s0,
            alpha0,
            frostman_constant: frostman,
            annulus_constant: annulus,
            violations,
        })
    }
}

#[inline]
fn piece_index(pieces: &[Piece], x: f64) -> usize {
    let last = pieces.len() - 1;
    pieces[..last].iter().position(|p| x < p.hi).unwrap_or(last)
}

fn check_radius(metric: Metric, r: f64) -> Result<()> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius {r} is negative")));
    }
    if matches!(metric, Metric::Circle | Metric::Torus) && r > 0.5 {
        return Err(Error::UnsupportedRadius { radius: r, max: 0.5 });
    }
    Ok(())
}

/// Lebesgue area of `{(x, y) ∈ [a,b] × [c,d] : |x − y| < r}`.
///
/// The overlap length `x ↦ |[x−r, x+r] ∩ [c,d]|` is piecewise linear with
/// kinks at `c ± r` and `d ± r`, so the trapezoid rule between kinks is exact.
fn pair_overlap(a: f64, b: f64, c: f64, d: f64, r: f64) -> f64 {
    let len = |x: f64| ((x + r).min(d) - (x - r).max(c)).max(0.0);
    let mut knots = vec![a, b];
    knots.extend([c - r, c + r, d - r, d + r].into_iter().filter(|&k| k > a && k < b));
    knots.sort_by(f64::total_cmp);
    compensated_sum(knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (len(w[0]) + len(w[1]))))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularityBounds {
    pub s0: Option<f64>,
    pub alpha0: Option<f64>,
    pub frostman_bound: Option<f64>,
    pub annulus_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub s0: f64,
    pub alpha0: f64,
    /// `sup μ(B(x,r)) / r^{s0}` over the grids.
    pub frostman_constant: f64,
    /// `sup μ(B(x,r+ε) \ B(x,r)) / ε^{α0}` over the grids.
    pub annulus_constant: f64,
    pub violations: Vec<String>,
}

/// Checks that `system` and `measure` live on the same space.
pub fn check_compatible(system: &MapSystem, measure: &DensityMeasure) -> Result<Metric> {
    let metric = system
        .metric()
        .ok_or_else(|| Error::Domain("symbolic systems carry Markov measures, not densities".into()))?;
    measure.check_metric(metric)?;
    Ok(metric)
}

/// Initial point `index` of a run seeded by `master`.
///
/// Dyadic-exact maps with Lebesgue measure get a bitstream point whose
/// expansion is the substream itself; everything else gets a float drawn by
/// inverse CDF from the same substream.
pub fn sample_point(system: &MapSystem, measure: &DensityMeasure, master: u64, index: u64) -> Result<Point> {
    if system.is_dyadic() && measure.is_lebesgue() && measure.dimension() == 1 {
        return Ok(Point::Bits(BitPoint::new(BitExpansion::new(master, index)?)));
    }
    let mut rng = derive_substream(master, index)?;
    Ok(measure.sample(&mut rng, 1).pop().expect("one point"))
}

/// Two-sample Kolmogorov distance between `count` μ-samples and their images.
pub fn pushforward_ks(system: &MapSystem, measure: &DensityMeasure, rng: &mut Stream, count: usize) -> Result<f64> {
    let metric = check_compatible(system, measure)?;
    if metric == Metric::Torus {
        return Err(Error::Domain("pushforward check is one-dimensional".into()));
    }
    let mut before: Vec<f64> = Vec::with_capacity(count);
    let mut after: Vec<f64> = Vec::with_capacity(count);
    for p in measure.sample(rng, count) {
        before.push(p.value()?);
        after.push(system.iterate(&p, 1)?.value()?);
    }
    Ok(crate::limits::two_sample_ks(&mut before, &mut after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn circle() -> MapSystem {
        MapSystem::doubling()
    }

    #[test]
    fn ball_measure_examples() {
        let leb = DensityMeasure::lebesgue();
        for x in [0.0, 0.05, 0.5, 0.97] {
            let m = leb.ball_measure(&circle(), &Point::Real(x), 0.1).unwrap();
            assert_abs_diff_eq!(m, 0.2, epsilon = 1e-15);
        }
        let two = DensityMeasure::two_slope();
        let m = two
            .ball_measure(&MapSystem::two_slope(), &Point::Real(0.25), 0.1)
            .unwrap();
        assert_abs_diff_eq!(m, 0.225, epsilon = 1e-15);
        let torus = DensityMeasure::lebesgue_torus();
        let m = torus
            .ball_measure(&MapSystem::cat_map(), &Point::Planar([0.3, 0.9]), 0.1)
            .unwrap();
        assert_abs_diff_eq!(m, 0.031_415_926_535_897_93, epsilon = 1e-15);
    }

    #[test]
    fn radius_limits() {
        let leb = DensityMeasure::lebesgue();
        let err = leb.ball_measure(&circle(), &Point::Real(0.2), 0.6).unwrap_err();
        assert!(matches!(err, Error::UnsupportedRadius { .. }));
        assert_abs_diff_eq!(leb.ball_measure(&circle(), &Point::Real(0.2), 0.5).unwrap(), 1.0);
        assert!(leb.ball_measure(&circle(), &Point::Real(0.2), -0.1).is_err());
        assert!(DensityMeasure::lebesgue_torus()
            .ball_measure(&MapSystem::cat_map(), &Point::Planar([0.1, 0.1]), 0.51)
            .is_err());
        assert!(leb
            .ball_measure(&MapSystem::cat_map(), &Point::Planar([0.1, 0.1]), 0.1)
            .is_err());
    }

    #[test]
    fn mean_ball_measure_examples() {
        let leb = DensityMeasure::lebesgue();
        assert_abs_diff_eq!(
            leb.mean_ball_measure(Metric::Circle, 0.1).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(leb.mean_ball_measure(Metric::Circle, 0.0).unwrap(), 0.0);
        // interval Lebesgue: 2r - r^2
        assert_abs_diff_eq!(
            leb.mean_ball_measure(Metric::Interval, 0.1).unwrap(),
            0.19,
            epsilon = 1e-15
        );
    }

    /// Independent oracle: midpoint rule over a 10^6-point grid, with the inner
    /// ball mass written out for the two-piece density.
    fn grid_mean_ball_two_slope(r: f64) -> f64 {
        let n = 1_000_000;
        let h = |x: f64| if x < 2.0 / 3.0 { 1.125 } else { 0.75 };
        let inner = |x: f64| {
            let (lo, hi) = ((x - r).max(0.0), (x + r).min(1.0));
            let cut = 2.0 / 3.0;
            let left = (hi.min(cut) - lo).max(0.0);
            let right = (hi - lo.max(cut)).max(0.0);
            1.125 * left + 0.75 * right
        };
        let mut acc = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            acc += h(x) * inner(x);
        }
        acc / n as f64
    }

    #[test]
    fn two_slope_mean_ball_matches_grid_oracle() {
        let two = DensityMeasure::two_slope();
        let exact = two.mean_ball_measure(Metric::Interval, 0.05).unwrap();
        let oracle = grid_mean_ball_two_slope(0.05);
        // the density jump at 2/3 sits between grid midpoints: error <= 3/8 * 0.1 * 1e-6
        assert_abs_diff_eq!(exact, oracle, epsilon = 4e-8);
    }

    #[test]
    fn affine_mean_ball_uses_quadrature() {
        let m = DensityMeasure::affine(0.8).unwrap();
        let r = 0.07;
        let got = m.mean_ball_measure(Metric::Circle, r).unwrap();
        let n = 200_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                m.density(x) * m.ball_unchecked(Metric::Circle, [x, 0.0], r)
            })
            .sum::<f64>()
            / n as f64;
        assert!((got - oracle).abs() / oracle < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn two_slope_invariants() {
        let two = DensityMeasure::two_slope();
        assert_abs_diff_eq!(two.mu_h(), 33.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two.cdf(2.0 / 3.0), 0.75, epsilon = 1e-15);
        assert_eq!(two.lower_bound(), 0.75);
    }

    #[test]
    fn sampling_examples() {
        let mut rng = derive_substream(1, 0).unwrap();
        assert!(DensityMeasure::lebesgue().sample(&mut rng, 0).is_empty());

        let n = 100_000;
        let mut xs: Vec<f64> = DensityMeasure::lebesgue()
            .sample(&mut rng, n)
            .iter()
            .map(|p| p.value().unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                ((i + 1) as f64 / n as f64 - x)
                    .abs()
                    .max((x - i as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks {ks}");

        let two = DensityMeasure::two_slope();
        let hits = two
            .sample(&mut rng, n)
            .iter()
            .filter(|p| p.value().unwrap() < 2.0 / 3.0)
            .count() as f64
            / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((hits - 0.75).abs() < 3.0 * se, "mass {hits}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let two = DensityMeasure::two_slope();
        let a = two.sample(&mut derive_substream(5, 2).unwrap(), 10);
        let b = two.sample(&mut derive_substream(5, 2).unwrap(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn regularity_constants() {
        let radii: Vec<f64> = (1..=40).map(|i| i as f64 / 100.0).collect();
        let centers: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 / 50.0, 0.0]).collect();
        let leb = DensityMeasure::lebesgue()
            .verify_regularity(Metric::Circle, &radii, &centers, RegularityBounds::default())
            .unwrap();
        assert_abs_diff_eq!(leb.frostman_constant, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(leb.annulus_constant, 2.0, epsilon = 1e-9);
        let two = DensityMeasure::two_slope()
            .verify_regularity(
                Metric::Interval,
                &radii,
                &centers,
                RegularityBounds {
                    frostman_bound: Some(2.25),
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(two.frostman_constant <= 2.25 + 1e-12);
        assert!(two.violations.is_empty());
        let tight = DensityMeasure::two_slope()
            .verify_regularity(
                Metric::Interval,
                &radii,
                &centers,
                RegularityBounds {
                    frostman_bound: Some(2.0),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(tight.violations.len(), 1);
    }

    #[test]
    fn pushforward_preserves_measure() {
        let mut rng = derive_substream(8, 0).unwrap();
        for (sys, m) in [
            (MapSystem::doubling(), DensityMeasure::lebesgue()),
            (MapSystem::two_slope(), DensityMeasure::two_slope()),
            (MapSystem::tent(), DensityMeasure::lebesgue()),
        ] {
            let d = pushforward_ks(&sys, &m, &mut rng, 100_000).unwrap();
            assert!(d <= 0.01, "{d}");
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"pieces":[{"lo":0,"hi":0.5,"h":1.5},{"lo":0.5,"hi":1,"h":0.5}]}"#;
        let m: DensityMeasure = serde_json::from_str(json).unwrap();
        let again: DensityMeasure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, again);
        assert!(serde_json::from_str::<DensityMeasure>(r#"{"pieces":[{"lo":0,"hi":1,"h":2}]}"#).is_err());
        let t: DensityMeasure = serde_json::from_str(r#"{"named":"lebesgue-torus"}"#).unwrap();
        assert_eq!(t.dimension(), 2);
    }

    proptest! {
        #[test]
        fn ball_measure_is_monotone_lipschitz_and_frostman(x in 0.0f64..1.0, r1 in 0.0f64..0.5, r2 in 0.0f64..0.5) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            for (metric, m) in [
                (Metric::Interval, DensityMeasure::two_slope()),
                (Metric::Circle, DensityMeasure::affine(-1.2).unwrap()),
                (Metric::Circle, DensityMeasure::lebesgue()),
            ] {
                let a = m.ball_unchecked(metric, [x, 0.0], lo);
                let b = m.ball_unchecked(metric, [x, 0.0], hi);
                prop_assert!(a <= b + 1e-15);
                prop_assert!(b - a <= 2.0 * m.sup_density() * (hi - lo) + 1e-12);
                if metric == Metric::Circle {
                    prop_assert!(a >= 2.0 * m.lower_bound() * lo - 1e-12);
                }
            }
        }

        #[test]
        fn quantile_inverts_cdf(u in 0.0f64..1.0) {
            for m in [DensityMeasure::two_slope(), DensityMeasure::affine(1.5).unwrap()] {
                prop_assert!((m.cdf(m.quantile(u)) - u).abs() < 1e-12);
            }
        }
    }
}
