//! Radius schedules: explicit `r_k`, or implicit radii solving
//! `μ(B(x, r_k(x))) = M_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DensityMeasure;
use crate::numeric::ls_slope;
use crate::systems::{MapSystem, Metric, Point};

/// Tolerance on the defining equation of an implicit radius.
pub const IMPLICIT_TOL: f64 = 1e-12;

/// A positive scalar sequence indexed from `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum Sequence {
    /// `scale · k^{-gamma}`
    Pow {
        gamma: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · (log(k + offset))^{-upsilon}`
    Log {
        upsilon: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        offset: f64,
    },
    Constant {
        value: f64,
    },
    /// `values[k - 1]`
    Table {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Sequence {
    pub fn pow(gamma: f64, scale: f64) -> Self {
        Sequence::Pow { gamma, scale }
    }

    pub fn constant(value: f64) -> Self {
        Sequence::Constant { value }
    }

    /// Term `k ≥ 1`.
    pub fn at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain("sequences are indexed from 1".into()));
        }
        let kf = k as f64;
        Ok(match self {
            Sequence::Pow { gamma, scale } => scale * kf.powf(-gamma),
            Sequence::Log { upsilon, scale, offset } => scale * (kf + offset).ln().powf(-upsilon),
            Sequence::Constant { value } => *value,
            Sequence::Table { values } => *values.get(k as usize - 1).ok_or(Error::Length {
                expected: k as usize,
                got: values.len(),
            })?,
        })
    }

    /// Terms `1..=n`.
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        if let Sequence::Table { values } = self {
            if values.len() < n {
                return Err(Error::Length {
                    expected: n,
                    got: values.len(),
                });
            }
        }
        (1..=n as u64).map(|k| self.at(k)).collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Descriptor(m.to_string()));
        match self {
            Sequence::Pow { gamma, scale } if !(*gamma >= 0.0 && *scale >= 0.0) => {
                bad("pow sequence needs gamma >= 0 and scale >= 0")
            }
            Sequence::Log { upsilon, scale, offset }
                if !(*upsilon >= 0.0 && *scale >= 0.0 && (1.0 + offset).ln() > 0.0) =>
            {
                bad("log sequence needs upsilon >= 0, scale >= 0 and log(1 + offset) > 0")
            }
            Sequence::Constant { value } if !(*value >= 0.0) => bad("constant sequence must be >= 0"),
            Sequence::Table { values } if values.iter().any(|v| !(*v >= 0.0)) => bad("table entries must be >= 0"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Explicit,
    Implicit,
}

/// Either `r_k` (explicit) or `M_k` (implicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDescriptor", into = "ScheduleDescriptor")]
pub struct RadiusSchedule {
    pub mode: Mode,
    pub sequence: Sequence,
    pub gamma: Option<f64>,
    pub upsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDescriptor {
    pub mode: Mode,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<Sequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Sequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
}

impl TryFrom<ScheduleDescriptor> for RadiusSchedule {
    type Error = Error;

    fn try_from(d: ScheduleDescriptor) -> Result<Self> {
        let sequence = match (d.mode, d.mass, d.r) {
            (Mode::Implicit, Some(m), None) => m,
            (Mode::Explicit, None, Some(r)) => r,
            (Mode::Implicit, _, _) => {
                return Err(Error::Descriptor("implicit schedules take \"M\" and no \"r\"".into()))
            }
            (Mode::Explicit, _, _) => {
                return Err(Error::Descriptor("explicit schedules take \"r\" and no \"M\"".into()))
            }
        };
        sequence.validate()?;
        Ok(RadiusSchedule {
            mode: d.mode,
            sequence,
            gamma: d.gamma,
            upsilon: d.upsilon,
        })
    }
}

impl From<RadiusSchedule> for ScheduleDescriptor {
    fn from(s: RadiusSchedule) -> Self {
        let (mass, r) = match s.mode {
            Mode::Implicit => (Some(s.sequence), None),
            Mode::Explicit => (None, Some(s.sequence)),
        };
        ScheduleDescriptor {
            mode: s.mode,
            mass,
            r,
            gamma: s.gamma,
            upsilon: s.upsilon,
        }
    }
}

impl RadiusSchedule {
    pub fn explicit(r: Sequence) -> Self {
        Self {
            mode: Mode::Explicit,
            sequence: r,
            gamma: None,
            upsilon: None,
        }
    }

    pub fn implicit(mass: Sequence) -> Self {
        Self {
            mode: Mode::Implicit,
            sequence: mass,
            gamma: None,
            upsilon: None,
        }
    }

    pub fn is_implicit(&self) -> bool {
        self.mode == Mode::Implicit
    }
}

/// Outcome of the Condition-S check on `a_n = M_n` (or `r_n`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSReport {
    pub gamma: f64,
    pub upsilon: f64,
    pub n_max: u64,
    pub monotone: bool,
    /// First `n` with `a_n > a_{n-1}`.
    pub first_violation: Option<u64>,
    /// `min a_n n^γ` over `2 ≤ n ≤ n_max`.
    pub lower_constant: f64,
    /// `max a_n (log n)^υ` over `2 ≤ n ≤ n_max`.
    pub upper_constant: f64,
    /// Log-log slope of `a_n n^γ` over the upper half (in log scale) of the range.
    pub lower_tail_slope: f64,
    /// Log-log slope of `a_n (log n)^υ` over the same tail.
    pub upper_tail_slope: f64,
    pub pass: bool,
}

/// Slack on the tail slopes: a bounded ratio has slope ~0, a violated bound
/// drifts like a power.
const TAIL_SLOPE_TOL: f64 = 0.05;

pub fn check_condition_s(sequence: &Sequence, gamma: f64, upsilon: f64, n_max: u64) -> Result<ConditionSReport> {
    if n_max < 2 {
        return Err(Error::Domain("n_max must be at least 2".into()));
    }
    let mut prev = sequence.at(1)?;
    let mut first_violation = None;
    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    let split = (n_max as f64).sqrt().max(2.0);
    let (mut lx, mut ly_lo, mut ly_hi) = (Vec::new(), Vec::new(), Vec::new());
    let mut next_sample = split;
    for n in 2..=n_max {
        let a = sequence.at(n)?;
        if a > prev && first_violation.is_none() {
            first_violation = Some(n);
        }
        prev = a;
        let nf = n as f64;
        let lo = a * nf.powf(gamma);
        let hi = a * nf.ln().powf(upsilon);
        lower = lower.min(lo);
        upper = upper.max(hi);
        if nf >= next_sample && a > 0.0 {
            lx.push(nf.ln());
            ly_lo.push(lo.ln());
            ly_hi.push(hi.ln());
            next_sample = nf * 1.05;
        }
    }
    let (lower_tail_slope, upper_tail_slope) = if lx.len() >= 2 {
        (ls_slope(&lx, &ly_lo), ls_slope(&lx, &ly_hi))
    } else {
        (0.0, 0.0)
    };
    let monotone = first_violation.is_none();
    let pass = monotone
        && lower > 0.0
        && upper.is_finite()
        && lower_tail_slope >= -TAIL_SLOPE_TOL
        && upper_tail_slope <= TAIL_SLOPE_TOL;
    Ok(ConditionSReport {
        gamma,
        upsilon,
        n_max,
        monotone,
        first_violation,
        lower_constant: lower,
        upper_constant: upper,
        lower_tail_slope,
        upper_tail_slope,
        pass,
    })
}

fn metric_of(system: &MapSystem) -> Result<Metric> {
    system
        .metric()
        .ok_or_else(|| Error::Domain("implicit radii need a geometric system".into()))
}

/// Radius `r` with `|μ(B(x, r)) − M| ≤ 10⁻¹²`.
pub fn implicit_radius(measure: &DensityMeasure, system: &MapSystem, x: &Point, mass: f64) -> Result<f64> {
    implicit_radius_at(measure, metric_of(system)?, x.coords()?, mass)
}

pub fn implicit_radius_at(measure: &DensityMeasure, metric: Metric, x: [f64; 2], mass: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::Domain(format!("target mass {mass} must be positive")));
    }
    let rmax = DensityMeasure::max_radius(metric, x[0]);
    let top = measure.ball_measure_at(metric, x, rmax)?;
    if mass > top + IMPLICIT_TOL {
        return Err(Error::Infeasible {
            x: x[0],
            mass,
            max: top,
        });
    }
    let (mut lo, mut hi) = (0.0f64, rmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = measure.ball_unchecked(metric, x, mid);
        if (m - mass).abs() <= IMPLICIT_TOL * 0.25 {
            return Ok(mid);
        }
        if m < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(
        if (measure.ball_unchecked(metric, x, hi) - mass).abs() <= (measure.ball_unchecked(metric, x, lo) - mass).abs()
        {
            hi
        } else {
            lo
        },
    )
}

/// Hit test `d < r(x)` for the implicit radius `r(x)` of mass `M`, decided via
/// `μ(B(x, d)) < M`. Valid because `r ↦ μ(B(x, r))` is strictly increasing.
#[inline]
pub fn implicit_hit(measure: &DensityMeasure, metric: Metric, x: [f64; 2], d: f64, mass: f64) -> bool {
    measure.ball_unchecked(metric, x, d) < mass
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusField {
    pub mass: f64,
    /// `(x, r(x))` with 2-D points flattened to their coordinates.
    pub rows: Vec<([f64; 2], f64)>,
    /// `max |r(x) − r(y)| / d(x, y)` over sampled pairs.
    pub lipschitz_ratio: f64,
}

pub fn radius_field(measure: &DensityMeasure, system: &MapSystem, mass: f64, points: &[Point]) -> Result<RadiusField> {
    let metric = metric_of(system)?;
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let x = p.coords()?;
        let r =
            implicit_radius_at(measure, metric, x, mass).map_err(|e| e.context(format!("implicit radius at {x:?}")))?;
        rows.push((x, r));
    }
    let mut lip = 0.0f64;
    for (i, (x, rx)) in rows.iter().enumerate() {
        for (y, ry) in &rows[i + 1..] {
            let d = metric.distance(*x, *y);
            if d > 0.0 {
                lip = lip.max((rx - ry).abs() / d);
            }
        }
    }
    Ok(RadiusField {
        mass,
        rows,
        lipschitz_ratio: lip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_substream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"mode":"implicit","M":{"form":"pow","gamma":0.5},"upsilon":1.0}"#;
        let s: RadiusSchedule = serde_json::from_str(json).unwrap();
        assert!(s.is_implicit());
        assert_eq!(s.sequence, Sequence::pow(0.5, 1.0));
        assert_eq!(s.upsilon, Some(1.0));
        let back: RadiusSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
        let e: RadiusSchedule =
            serde_json::from_str(r#"{"mode":"explicit","r":{"form":"pow","gamma":0.5,"scale":0.25}}"#).unwrap();
        assert_abs_diff_eq!(e.sequence.at(4).unwrap(), 0.125);
        assert!(
            serde_json::from_str::<RadiusSchedule>(r#"{"mode":"explicit","M":{"form":"constant","value":1}}"#).is_err()
        );
        assert!(
            serde_json::from_str::<RadiusSchedule>(r#"{"mode":"explicit","r":{"form":"pow","gamma":-1}}"#).is_err()
        );
    }

    #[test]
    fn table_length() {
        let t = Sequence::Table { values: vec![0.3, 0.2] };
        assert_eq!(t.values(2).unwrap(), vec![0.3, 0.2]);
        assert!(matches!(t.values(3), Err(Error::Length { expected: 3, got: 2 })));
    }

    #[test]
    fn condition_s_examples() {
        let r = check_condition_s(&Sequence::pow(0.5, 1.0), 0.5, 1.0, 100_000).unwrap();
        assert!(r.pass, "{r:?}");
        assert_abs_diff_eq!(r.lower_constant, 1.0, epsilon = 1e-12);

        let log = Sequence::Log {
            upsilon: 1.0,
            scale: 1.0,
            offset: 1.0,
        };
        let r = check_condition_s(&log, 0.9, 1.0, 100_000).unwrap();
        assert!(r.pass, "{r:?}");

        let alt = Sequence::Table {
            values: (0..20).map(|i| if i % 2 == 0 { 0.1 } else { 0.2 }).collect(),
        };
        let r = check_condition_s(&alt, 0.5, 1.0, 20).unwrap();
        assert!(!r.pass);
        assert_eq!(r.first_violation, Some(2));

        // decays faster than any n^{-γ} allowed
        let r = check_condition_s(&Sequence::pow(1.0, 1.0), 0.5, 1.0, 100_000).unwrap();
        assert!(r.monotone && !r.pass);
        assert!(check_condition_s(&log, 0.9, 1.0, 1).is_err());
    }

    #[test]
    fn implicit_radius_examples() {
        let leb = DensityMeasure::lebesgue();
        let circle = MapSystem::doubling();
        let r = implicit_radius(&leb, &circle, &Point::Real(0.37), 0.2).unwrap();
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-12);

        let two = DensityMeasure::two_slope();
        let sys = MapSystem::two_slope();
        let r = implicit_radius(&two, &sys, &Point::Real(0.25), 0.2).unwrap();
        assert_abs_diff_eq!(r, 0.2 / 2.25, epsilon = 1e-12);
        let r = implicit_radius(&two, &sys, &Point::Real(2.0 / 3.0), 0.15).unwrap();
        assert_abs_diff_eq!(r, 0.08, epsilon = 1e-12);
        let m = two.ball_measure(&sys, &Point::Real(2.0 / 3.0), r).unwrap();
        assert!((m - 0.15).abs() <= IMPLICIT_TOL);
    }

    #[test]
    fn implicit_radius_errors() {
        let two = DensityMeasure::two_slope();
        let sys = MapSystem::two_slope();
        assert!(matches!(
            implicit_radius(&two, &sys, &Point::Real(0.5), 0.0),
            Err(Error::Domain(_))
        ));
        let torus = DensityMeasure::lebesgue_torus();
        let err = implicit_radius(&torus, &MapSystem::cat_map(), &Point::Planar([0.2, 0.3]), 0.9).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        // the full circle is a ball of radius 1/2
        let r = implicit_radius(
            &DensityMeasure::lebesgue(),
            &MapSystem::doubling(),
            &Point::Real(0.1),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn defining_equation_and_monotonicity() {
        let two = DensityMeasure::two_slope();
        let mut rng = derive_substream(11, 0).unwrap();
        for p in two.sample(&mut rng, 200) {
            let x = p.coords().unwrap();
            let mut prev = 0.0;
            for mass in [0.01, 0.05, 0.2, 0.5, 0.9] {
                let r = implicit_radius_at(&two, Metric::Interval, x, mass).unwrap();
                assert!((two.ball_unchecked(Metric::Interval, x, r) - mass).abs() <= IMPLICIT_TOL);
                assert!(r >= prev);
                prev = r;
                assert!(implicit_hit(&two, Metric::Interval, x, 0.99 * r, mass));
                assert!(!implicit_hit(&two, Metric::Interval, x, 1.01 * r, mass));
            }
        }
    }

    #[test]
    fn field_examples() {
        let mut rng = derive_substream(3, 0).unwrap();
        let leb = DensityMeasure::lebesgue();
        let pts = leb.sample(&mut rng, 100);
        let f = radius_field(&leb, &MapSystem::doubling(), 0.3, &pts).unwrap();
        assert!(f.rows.iter().all(|(_, r)| (r - 0.15).abs() < 1e-12));
        assert!(f.lipschitz_ratio < 1e-6);

        let two = DensityMeasure::two_slope();
        let near: Vec<Point> = (0..200).map(|i| Point::Real(0.5 + i as f64 / 1000.0)).collect();
        let f = radius_field(&two, &MapSystem::two_slope(), 0.15, &near).unwrap();
        assert!(f.lipschitz_ratio <= 1.0 + 1e-6, "{}", f.lipschitz_ratio);
        assert!(f.lipschitz_ratio > 0.1);

        let single = radius_field(&two, &MapSystem::two_slope(), 0.15, &[Point::Real(0.3)]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.lipschitz_ratio, 0.0);
    }
}
