//! Recurrence and shrinking-target sums, Borel–Cantelli ratios and
//! short-return estimates.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{check_compatible, sample_point, DensityMeasure};
use crate::numeric::{mean, standard_error, CompensatedSum};
use crate::radii::{implicit_radius_at, Mode, RadiusSchedule};
use crate::rng::{derive_substream, uniform, Stream};
use crate::systems::{AnyOrbit, MapSystem, Metric, Orbit, PiecewiseAffine, Point};
use crate::with_orbit;

/// Receives `(k, hit_k, expected_mass_k)` for `k = 1..=n`.
pub trait HitSink {
    fn record(&mut self, k: usize, hit: bool, mass: f64);
}

/// How the expected masses of a series were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `M_k` of an implicit schedule.
    ImplicitMass,
    /// `μ(B(c, r_k))` around the relevant center.
    BallMeasure,
}

/// Full per-step record of one orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitSeries {
    pub hits: Vec<bool>,
    pub masses: Vec<f64>,
    pub cum_hits: Vec<u64>,
    pub cum_mass: Vec<f64>,
    pub normalization: Normalization,
    #[serde(skip)]
    acc: CompensatedSum,
}

impl HitSeries {
    pub fn with_capacity(n: usize, normalization: Normalization) -> Self {
        Self {
            hits: Vec::with_capacity(n),
            masses: Vec::with_capacity(n),
            cum_hits: Vec::with_capacity(n),
            cum_mass: Vec::with_capacity(n),
            normalization,
            acc: CompensatedSum::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn total_hits(&self) -> u64 {
        self.cum_hits.last().copied().unwrap_or(0)
    }

    pub fn total_mass(&self) -> f64 {
        self.cum_mass.last().copied().unwrap_or(0.0)
    }
}

impl HitSink for HitSeries {
    fn record(&mut self, _k: usize, hit: bool, mass: f64) {
        self.acc.add(mass);
        self.hits.push(hit);
        self.masses.push(mass);
        self.cum_hits.push(self.total_hits() + u64::from(hit));
        self.cum_mass.push(self.acc.value());
    }
}

/// Running totals only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Totals {
    pub hits: u64,
    pub mass: CompensatedSum,
}

impl HitSink for Totals {
    #[inline]
    fn record(&mut self, _k: usize, hit: bool, mass: f64) {
        self.hits += u64::from(hit);
        self.mass.add(mass);
    }
}

/// Totals snapshotted at a fixed increasing list of step counts.
#[derive(Debug, Clone)]
pub struct Checkpoints {
    marks: Vec<usize>,
    next: usize,
    running: Totals,
    /// `(hits_cum, mass_cum)` at each mark.
    pub values: Vec<(u64, f64)>,
}

impl Checkpoints {
    pub fn new(marks: &[usize]) -> Self {
        Self {
            marks: marks.to_vec(),
            next: 0,
            running: Totals::default(),
            values: Vec::with_capacity(marks.len()),
        }
    }

    /// `hits_cum − mass_cum` at each mark.
    pub fn centered(&self) -> Vec<f64> {
        self.values.iter().map(|&(h, m)| h as f64 - m).collect()
    }
}

impl HitSink for Checkpoints {
    #[inline]
    fn record(&mut self, k: usize, hit: bool, mass: f64) {
        self.running.record(k, hit, mass);
        while self.next < self.marks.len() && self.marks[self.next] == k {
            self.values.push((self.running.hits, self.running.mass.value()));
            self.next += 1;
        }
    }
}

fn drive<O, S, F>(orbit: &mut O, n: usize, mut test: F, sink: &mut S)
where
    O: Orbit,
    S: HitSink,
    F: FnMut(usize, [f64; 2]) -> (bool, f64),
{
    for k in 1..=n {
        orbit.step();
        let (hit, mass) = test(k, orbit.current());
        sink.record(k, hit, mass);
    }
}

/// A schedule evaluated up to `n` against a system and measure.
#[derive(Debug, Clone)]
pub struct SeriesContext<'a> {
    pub system: &'a MapSystem,
    pub measure: &'a DensityMeasure,
    pub metric: Metric,
    pub mode: Mode,
    /// `r_k` (explicit) or `M_k` (implicit) for `k = 1..=n`.
    pub values: Vec<f64>,
    /// Implicit radii when ball masses do not depend on the center.
    uniform_radii: Option<Vec<f64>>,
    max_value: f64,
}

impl<'a> SeriesContext<'a> {
    pub fn new(
        system: &'a MapSystem,
        measure: &'a DensityMeasure,
        schedule: &RadiusSchedule,
        n: usize,
    ) -> Result<Self> {
        let metric = check_compatible(system, measure)?;
        let values = schedule.sequence.values(n)?;
        let max_value = values.iter().copied().fold(0.0, f64::max);
        let uniform_radii = match schedule.mode {
            Mode::Explicit => {
                if matches!(metric, Metric::Circle | Metric::Torus) && max_value > 0.5 {
                    return Err(Error::UnsupportedRadius {
                        radius: max_value,
                        max: 0.5,
                    });
                }
                None
            }
            Mode::Implicit => {
                if let Some(&m) = values.iter().find(|&&m| !(m > 0.0)) {
                    return Err(Error::Domain(format!("target mass {m} must be positive")));
                }
                let translation_invariant = measure.is_lebesgue() && metric != Metric::Interval;
                if translation_invariant {
                    let r = values
                        .iter()
                        .map(|&m| implicit_radius_at(measure, metric, [0.0, 0.0], m))
                        .collect::<Result<Vec<_>>>()?;
                    Some(r)
                } else {
                    None
                }
            }
        };
        Ok(Self {
            system,
            measure,
            metric,
            mode: schedule.mode,
            values,
            uniform_radii,
            max_value,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn normalization(&self) -> Normalization {
        match self.mode {
            Mode::Implicit => Normalization::ImplicitMass,
            Mode::Explicit => Normalization::BallMeasure,
        }
    }

    /// Errors when some `M_k` exceeds the largest ball around `c`.
    pub fn check_feasible(&self, c: [f64; 2]) -> Result<()> {
        if self.mode == Mode::Implicit && self.uniform_radii.is_none() {
            let top = self
                .measure
                .ball_unchecked(self.metric, c, DensityMeasure::max_radius(self.metric, c[0]));
            if self.max_value > top + crate::radii::IMPLICIT_TOL {
                return Err(Error::Infeasible {
                    x: c[0],
                    mass: self.max_value,
                    max: top,
                });
            }
        }
        Ok(())
    }

    /// Streams `1{d(Tᵏx, x) < r_k(x)}` into `sink`.
    pub fn recurrence_into<S: HitSink>(&self, x: &Point, sink: &mut S) -> Result<()> {
        let x0 = x.coords()?;
        self.check_feasible(x0)?;
        let (metric, measure, values) = (self.metric, self.measure, &self.values);
        let mut orbit = AnyOrbit::new(self.system, x)?;
        match (self.mode, &self.uniform_radii) {
            (Mode::Implicit, Some(radii)) => with_orbit!(&mut orbit, o => drive(o, self.n(), |k, z| {
                (metric.distance(z, x0) < radii[k - 1], values[k - 1])
            }, sink)),
            (Mode::Implicit, None) => with_orbit!(&mut orbit, o => drive(o, self.n(), |k, z| {
                let m = values[k - 1];
                (measure.ball_unchecked(metric, x0, metric.distance(z, x0)) < m, m)
            }, sink)),
            (Mode::Explicit, _) => with_orbit!(&mut orbit, o => drive(o, self.n(), |k, z| {
                let r = values[k - 1];
                (metric.distance(z, x0) < r, measure.ball_unchecked(metric, x0, r))
            }, sink)),
        }
        Ok(())
    }

    /// Per-target data for [`Self::target_into`].
    pub fn target(&self, y: &Point) -> Result<Target> {
        let c = y.coords()?;
        self.check_feasible(c)?;
        let (radii, masses) = match self.mode {
            Mode::Explicit => (
                self.values.clone(),
                self.values
                    .iter()
                    .map(|&r| self.measure.ball_unchecked(self.metric, c, r))
                    .collect(),
            ),
            Mode::Implicit => {
                let radii = match &self.uniform_radii {
                    Some(r) => r.clone(),
                    None => self
                        .values
                        .iter()
                        .map(|&m| implicit_radius_at(self.measure, self.metric, c, m))
                        .collect::<Result<Vec<_>>>()?,
                };
                (radii, self.values.clone())
            }
        };
        Ok(Target {
            center: c,
            radii,
            masses,
        })
    }

    /// Streams `1{d(Tᵏx, y) < r_k}` into `sink`.
    pub fn target_into<S: HitSink>(&self, target: &Target, x: &Point, sink: &mut S) -> Result<()> {
        let (metric, c) = (self.metric, target.center);
        let (radii, masses) = (&target.radii, &target.masses);
        let mut orbit = AnyOrbit::new(self.system, x)?;
        with_orbit!(&mut orbit, o => drive(o, self.n(), |k, z| {
            (metric.distance(z, c) < radii[k - 1], masses[k - 1])
        }, sink));
        Ok(())
    }
}

/// A shrinking target `B(y, r_k)` with precomputed radii and masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
}

pub fn recurrence_series(
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    x: &Point,
    n: usize,
) -> Result<HitSeries> {
    let ctx = SeriesContext::new(system, measure, schedule, n)?;
    let mut series = HitSeries::with_capacity(n, ctx.normalization());
    ctx.recurrence_into(x, &mut series)?;
    Ok(series)
}

pub fn target_series(
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    y: &Point,
    x: &Point,
    n: usize,
) -> Result<HitSeries> {
    let ctx = SeriesContext::new(system, measure, schedule, n)?;
    let target = ctx.target(y)?;
    let mut series = HitSeries::with_capacity(n, Normalization::BallMeasure);
    ctx.target_into(&target, x, &mut series)?;
    Ok(series)
}

/// Lebesgue measure of `B(x, r)`.
#[inline]
pub fn volume_ball(metric: Metric, x: [f64; 2], r: f64) -> f64 {
    match metric {
        Metric::Circle => (2.0 * r).min(1.0),
        Metric::Interval => (x[0] + r).min(1.0) - (x[0] - r).max(0.0),
        Metric::Torus => std::f64::consts::PI * r * r,
    }
}

/// `(Σ hits) / (Σ m(B(x, r_k)))` along a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbcRatio {
    /// First step (1-based) with a positive reference mass; `None` if never.
    pub first_index: Option<usize>,
    /// Ratios from `first_index` on.
    pub trajectory: Vec<f64>,
    pub final_ratio: Option<f64>,
}

pub fn sbc_ratio(hits: &[bool], reference: &[f64]) -> Result<SbcRatio> {
    if hits.len() != reference.len() {
        return Err(Error::Length {
            expected: hits.len(),
            got: reference.len(),
        });
    }
    let mut h = 0u64;
    let mut m = CompensatedSum::new();
    let mut first_index = None;
    let mut trajectory = Vec::new();
    for (k, (&hit, &r)) in hits.iter().zip(reference).enumerate() {
        h += u64::from(hit);
        m.add(r);
        if first_index.is_none() && m.value() > 0.0 {
            first_index = Some(k + 1);
        }
        if first_index.is_some() {
            trajectory.push(h as f64 / m.value());
        }
    }
    Ok(SbcRatio {
        first_index,
        final_ratio: trajectory.last().copied(),
        trajectory,
    })
}

/// Streaming SBC accumulator for long explicit-radius runs.
#[derive(Debug, Clone)]
pub struct SbcSink<'a> {
    metric: Metric,
    center: [f64; 2],
    radii: &'a [f64],
    pub hits: u64,
    pub reference: CompensatedSum,
}

impl<'a> SbcSink<'a> {
    pub fn new(metric: Metric, center: [f64; 2], radii: &'a [f64]) -> Self {
        Self {
            metric,
            center,
            radii,
            hits: 0,
            reference: CompensatedSum::new(),
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        let m = self.reference.value();
        (m > 0.0).then(|| self.hits as f64 / m)
    }
}

impl HitSink for SbcSink<'_> {
    #[inline]
    fn record(&mut self, k: usize, hit: bool, _mass: f64) {
        self.hits += u64::from(hit);
        self.reference
            .add(volume_ball(self.metric, self.center, self.radii[k - 1]));
    }
}

/// One row of a batch CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRow {
    pub point_id: u64,
    pub n: usize,
    pub hits_cum: u64,
    pub mass_cum: f64,
    pub ratio: f64,
}

pub fn write_batch_csv<W: Write>(writer: W, rows: &[BatchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `task(i)` for `i in 0..count` in parallel; results keep index order.
pub fn map_points<T, F>(count: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(task).collect()
}

/// Monte Carlo short-return estimates at one `(r, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShortReturns {
    pub r: f64,
    pub l: usize,
    pub samples: usize,
    /// `μ{x : d(x, Tˡx) < 2r}`
    pub p_close: f64,
    pub p_close_se: f64,
    /// `∫ μ(B(y,r) ∩ T^{-l}B(y,r)) dμ(y)`
    pub overlap: f64,
    pub overlap_se: f64,
}

/// Inner samples per `y` for the nested estimate on the torus.
const TORUS_INNER: usize = 16;

struct Piece {
    lo: f64,
    hi: f64,
    /// `Tˡ z = slope·z + shift` on `[lo, hi)`, with the image inside `[0, 1]`.
    slope: f64,
    shift: f64,
}

/// `μ(B ∩ T^{-l}B)` for `l = 1..=l_max`, where `B = B(y, r)` on a piecewise
/// affine map, by pushing the affine pieces of `B` forward.
fn overlap_profile(map: &PiecewiseAffine, measure: &DensityMeasure, y: f64, r: f64, l_max: usize) -> Vec<f64> {
    let ball = ball_intervals(map.metric(), y, r);
    let mut out = vec![0.0; l_max];
    let mut stack: Vec<(Piece, usize)> = ball
        .iter()
        .map(|&(lo, hi)| {
            (
                Piece {
                    lo,
                    hi,
                    slope: 1.0,
                    shift: 0.0,
                },
                0,
            )
        })
        .collect();
    let breaks = map.breakpoints();
    while let Some((p, depth)) = stack.pop() {
        if depth == l_max {
            continue;
        }
        // split the current image at branch endpoints and push each part one step
        let (u, v) = (p.slope * p.lo + p.shift, p.slope * p.hi + p.shift);
        let (img_lo, img_hi) = if u <= v { (u, v) } else { (v, u) };
        for (bi, w) in breaks.windows(2).enumerate() {
            let (a, b) = (img_lo.max(w[0]), img_hi.min(w[1]));
            if a >= b {
                continue;
            }
            let branch = map.branches()[bi];
            let s = branch.slope * p.slope;
            let c = branch.slope * p.shift + branch.intercept;
            let (za, zb) = ((a - p.shift) / p.slope, (b - p.shift) / p.slope);
            let (zlo, zhi) = if za <= zb { (za, zb) } else { (zb, za) };
            let (ia, ib) = (s * zlo + c, s * zhi + c);
            let (ilo, ihi) = if ia <= ib { (ia, ib) } else { (ib, ia) };
            // reduce mod 1, splitting where the image crosses an integer
            let mut m = ilo.floor();
            while m < ihi {
                let (ca, cb) = (ilo.max(m), ihi.min(m + 1.0));
                if ca < cb {
                    let (qa, qb) = ((ca - c) / s, (cb - c) / s);
                    let (qlo, qhi) = if qa <= qb { (qa, qb) } else { (qb, qa) };
                    let piece = Piece {
                        lo: qlo.max(zlo),
                        hi: qhi.min(zhi),
                        slope: s,
                        shift: c - m,
                    };
                    if piece.lo < piece.hi {
                        out[depth] += piece_mass_in(&piece, measure, &ball);
                        stack.push((piece, depth + 1));
                    }
                }
                m += 1.0;
            }
        }
    }
    out
}

/// `μ{z ∈ piece : slope·z + shift ∈ ball}`.
fn piece_mass_in(p: &Piece, measure: &DensityMeasure, ball: &[(f64, f64)]) -> f64 {
    let (u, v) = (p.slope * p.lo + p.shift, p.slope * p.hi + p.shift);
    let (ilo, ihi) = if u <= v { (u, v) } else { (v, u) };
    let mut total = 0.0;
    for &(a, b) in ball {
        let (wa, wb) = (ilo.max(a), ihi.min(b));
        if wa < wb {
            let (za, zb) = ((wa - p.shift) / p.slope, (wb - p.shift) / p.slope);
            let (zlo, zhi) = if za <= zb { (za, zb) } else { (zb, za) };
            total += measure.cdf(zhi.min(p.hi)) - measure.cdf(zlo.max(p.lo));
        }
    }
    total
}

/// `B(y, r)` as disjoint intervals of `[0, 1)`.
fn ball_intervals(metric: Metric, y: f64, r: f64) -> Vec<(f64, f64)> {
    match metric {
        Metric::Interval => vec![((y - r).max(0.0), (y + r).min(1.0))],
        _ => {
            if r >= 0.5 {
                return vec![(0.0, 1.0)];
            }
            let (a, b) = (y - r, y + r);
            if a < 0.0 {
                vec![(0.0, b), (a + 1.0, 1.0)]
            } else if b > 1.0 {
                vec![(0.0, b - 1.0), (a, 1.0)]
            } else {
                vec![(a, b)]
            }
        }
    }
}

/// Per-sample `(close_l, overlap_l)` for `l = 1..=l_max`.
fn short_return_sample(
    system: &MapSystem,
    measure: &DensityMeasure,
    metric: Metric,
    r: f64,
    l_max: usize,
    rng: &mut Stream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut close = Vec::with_capacity(l_max);
    let x = measure.sample(rng, 1).pop().expect("one point");
    let x0 = x.coords()?;
    let mut orbit = AnyOrbit::new(system, &x)?;
    for _ in 0..l_max {
        orbit.step();
        close.push(f64::from(u8::from(metric.distance(orbit.current(), x0) < 2.0 * r)));
    }
    let y = measure.sample(rng, 1).pop().expect("one point");
    let overlap = match system {
        MapSystem::PiecewiseAffine(map) => overlap_profile(map, measure, y.value()?, r, l_max),
        _ => {
            let c = y.coords()?;
            let area = measure.ball_unchecked(metric, c, r);
            let mut acc = vec![0.0; l_max];
            for _ in 0..TORUS_INNER {
                // uniform point of the disc B(c, r)
                let rho = r * uniform(rng).sqrt();
                let theta = std::f64::consts::TAU * uniform(rng);
                let z = Point::Planar([
                    (c[0] + rho * theta.cos()).rem_euclid(1.0),
                    (c[1] + rho * theta.sin()).rem_euclid(1.0),
                ]);
                let mut o = AnyOrbit::new(system, &z)?;
                for slot in acc.iter_mut() {
                    o.step();
                    if metric.distance(o.current(), c) < r {
                        *slot += 1.0;
                    }
                }
            }
            acc.iter().map(|a| area * a / TORUS_INNER as f64).collect()
        }
    };
    Ok((close, overlap))
}

fn short_returns_check(system: &MapSystem, measure: &DensityMeasure, r: f64, l: usize) -> Result<Metric> {
    let metric = check_compatible(system, measure)?;
    if l == 0 {
        return Err(Error::Domain("short returns need l >= 1".into()));
    }
    if !(r >= 0.0) || (metric != Metric::Interval && r > 0.25) {
        return Err(Error::UnsupportedRadius { radius: r, max: 0.25 });
    }
    Ok(metric)
}

/// Short-return estimates at a single `l`, drawing from one stream.
pub fn short_returns(
    system: &MapSystem,
    measure: &DensityMeasure,
    r: f64,
    l: usize,
    samples: usize,
    rng: &mut Stream,
) -> Result<ShortReturns> {
    let metric = short_returns_check(system, measure, r, l)?;
    let mut close = Vec::with_capacity(samples);
    let mut overlap = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (c, o) = short_return_sample(system, measure, metric, r, l, rng)?;
        close.push(c[l - 1]);
        overlap.push(o[l - 1]);
    }
    Ok(summarize(r, l, &close, &overlap))
}

fn summarize(r: f64, l: usize, close: &[f64], overlap: &[f64]) -> ShortReturns {
    let se = |v: &[f64]| if v.len() > 1 { standard_error(v) } else { 0.0 };
    ShortReturns {
        r,
        l,
        samples: close.len(),
        p_close: if close.is_empty() { 0.0 } else { mean(close) },
        p_close_se: se(close),
        overlap: if overlap.is_empty() { 0.0 } else { mean(overlap) },
        overlap_se: se(overlap),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: CompensatedSum,
    sq: CompensatedSum,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.n += 1;
        self.sum.add(v);
        self.sq.add(v * v);
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.add(other.sum.value());
        self.sq.add(other.sq.value());
    }

    fn mean_se(&self) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        let nf = self.n as f64;
        let m = self.sum.value() / nf;
        if self.n < 2 {
            return (m, 0.0);
        }
        let var = ((self.sq.value() - nf * m * m) / (nf - 1.0)).max(0.0);
        (m, (var / nf).sqrt())
    }
}

const CHUNK: usize = 4096;

/// Short-return estimates for every `l = 1..=l_max` from one parallel pass;
/// sample `i` draws from `derive_substream(seed, i)`.
pub fn short_returns_profile(
    system: &MapSystem,
    measure: &DensityMeasure,
    r: f64,
    l_max: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<ShortReturns>> {
    let metric = short_returns_check(system, measure, r, l_max)?;
    let chunks = samples.div_ceil(CHUNK);
    let partial = map_points(chunks, |c| {
        let mut close = vec![Moments::default(); l_max];
        let mut over = vec![Moments::default(); l_max];
        let start = c as usize * CHUNK;
        for i in start..(start + CHUNK).min(samples) {
            let mut rng = derive_substream(seed, i as u64)?;
            let (cl, ov) = short_return_sample(system, measure, metric, r, l_max, &mut rng)?;
            for l in 0..l_max {
                close[l].add(cl[l]);
                over[l].add(ov[l]);
            }
        }
        Ok((close, over))
    })?;
    let mut close = vec![Moments::default(); l_max];
    let mut over = vec![Moments::default(); l_max];
    for (c, o) in &partial {
        for l in 0..l_max {
            close[l].merge(&c[l]);
            over[l].merge(&o[l]);
        }
    }
    Ok((0..l_max)
        .map(|l| {
            let (p, pse) = close[l].mean_se();
            let (o, ose) = over[l].mean_se();
            ShortReturns {
                r,
                l: l + 1,
                samples,
                p_close: p,
                p_close_se: pse,
                overlap: o,
                overlap_se: ose,
            }
        })
        .collect())
}

/// Monte Carlo estimate of `μ(E_k)` against `M_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetMeasure {
    pub k: usize,
    pub estimate: f64,
    pub se: f64,
    pub mass: f64,
}

/// Estimates `μ(E_k)` for `k = 1..=k_max` under an implicit schedule.
pub fn recurrence_set_measures(
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<SetMeasure>> {
    if !schedule.is_implicit() {
        return Err(Error::Domain(
            "set-measure diagnostic needs an implicit schedule".into(),
        ));
    }
    let ctx = SeriesContext::new(system, measure, schedule, k_max)?;
    let series = map_points(samples, |i| {
        let x = sample_point(system, measure, seed, i)?;
        let mut s = HitSeries::with_capacity(k_max, Normalization::ImplicitMass);
        ctx.recurrence_into(&x, &mut s)?;
        Ok(s.hits)
    })?;
    Ok((0..k_max)
        .map(|k| {
            let v: Vec<f64> = series.iter().map(|h| f64::from(u8::from(h[k]))).collect();
            let (estimate, se) = summarize_mean(&v);
            SetMeasure {
                k: k + 1,
                estimate,
                se,
                mass: ctx.values[k],
            }
        })
        .collect())
}

fn summarize_mean(v: &[f64]) -> (f64, f64) {
    match v.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (v[0], 0.0),
        _ => (mean(v), standard_error(v)),
    }
}
