//! Monte Carlo estimates of the recurrence and target variances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hitstats::{map_points, Checkpoints, SeriesContext};
use crate::measures::{sample_point, DensityMeasure};
use crate::numeric::{compensated_sum, mean, standard_error, variance_with_jackknife};
use crate::radii::{Mode, RadiusSchedule};
use crate::rng::role_seed;
use crate::systems::{MapSystem, Point};

/// Which variance sequence is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `σₙ²`: recurrence sums under implicit radii.
    Sigma2Recurrence,
    /// `sₙ²(y)`: target sums under implicit radii around `y`.
    S2Target,
    /// `σ̂ₙ²`: recurrence sums under explicit radii, centered per point.
    Sigma2Hat,
    /// `ŝₙ²(y)`: target sums under explicit radii.
    S2Hat,
}

impl Estimand {
    pub fn is_target(self) -> bool {
        matches!(self, Estimand::S2Target | Estimand::S2Hat)
    }

    pub fn mode(self) -> Mode {
        match self {
            Estimand::Sigma2Recurrence | Estimand::S2Target => Mode::Implicit,
            Estimand::Sigma2Hat | Estimand::S2Hat => Mode::Explicit,
        }
    }

    pub fn recurrence_for(mode: Mode) -> Self {
        match mode {
            Mode::Implicit => Estimand::Sigma2Recurrence,
            Mode::Explicit => Estimand::Sigma2Hat,
        }
    }

    pub fn target_for(mode: Mode) -> Self {
        match mode {
            Mode::Implicit => Estimand::S2Target,
            Mode::Explicit => Estimand::S2Hat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub estimand: Estimand,
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    /// Initial points that entered the estimate.
    pub samples: usize,
    /// Initial points dropped because the schedule was infeasible there.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
}

/// Centered sums `Σ hits − Σ masses` at each of `marks`, one row per point.
/// Points where the schedule is infeasible come back as `None`.
fn centered_sums(
    ctx: &SeriesContext<'_>,
    estimand: Estimand,
    y: Option<&Point>,
    marks: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>> {
    let target = match (estimand.is_target(), y) {
        (true, Some(y)) => Some(ctx.target(y)?),
        (true, None) => return Err(Error::Domain("target variances need a center y".into())),
        (false, _) => None,
    };
    map_points(samples, |i| {
        let x = sample_point(ctx.system, ctx.measure, seed, i)?;
        let mut sink = Checkpoints::new(marks);
        let run = match &target {
            Some(t) => ctx.target_into(t, &x, &mut sink),
            None => ctx.recurrence_into(&x, &mut sink),
        };
        match run {
            Ok(()) => Ok(Some(sink.centered())),
            Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })
}

fn check_grid(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::Domain("n grid must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Variance estimates at every `n` of an increasing grid from one set of runs.
#[allow(clippy::too_many_arguments)]
pub fn estimate_variance_grid(
    estimand: Estimand,
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    ns: &[usize],
    samples: usize,
    seed: u64,
    y: Option<&Point>,
) -> Result<Vec<VarianceEstimate>> {
    if samples < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {samples}")));
    }
    check_grid(ns)?;
    if schedule.mode != estimand.mode() {
        return Err(Error::Domain(format!(
            "{estimand:?} needs a {:?} schedule",
            estimand.mode()
        )));
    }
    let ctx = SeriesContext::new(system, measure, schedule, *ns.last().expect("nonempty"))?;
    let rows = centered_sums(&ctx, estimand, y, ns, samples, seed)?;
    let kept: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let skipped = rows.len() - kept.len();
    if kept.len() < 2 {
        return Err(Error::Domain(format!(
            "only {} of {samples} initial points were feasible",
            kept.len()
        )));
    }
    let center = y.map(|p| p.coords()).transpose()?;
    Ok(ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let column: Vec<f64> = kept.iter().map(|r| r[j]).collect();
            let (var, se) = variance_with_jackknife(&column);
            VarianceEstimate {
                estimand,
                n,
                estimate: var.max(0.0),
                se,
                samples: kept.len(),
                skipped,
                y: center,
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_variance(
    estimand: Estimand,
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    n: usize,
    samples: usize,
    seed: u64,
    y: Option<&Point>,
) -> Result<VarianceEstimate> {
    Ok(
        estimate_variance_grid(estimand, system, measure, schedule, &[n], samples, seed, y)?
            .pop()
            .expect("one row"),
    )
}

/// Sample budget for the outer/inner split over target centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    /// Initial points for the recurrence variance.
    pub sigma: usize,
    /// Target centers `y`.
    pub outer: usize,
    /// Initial points per center.
    pub inner: usize,
}

impl Sampling {
    /// 100 centers with `samples / 100` points each; `samples` for the recurrence run.
    pub fn from_total(samples: usize) -> Self {
        Self {
            sigma: samples,
            outer: 100,
            inner: samples / 100,
        }
    }
}

/// True when `|value − target|` is resolved at three standard errors.
pub fn resolved(value: f64, se: f64, target: f64) -> bool {
    (value - target).abs() > 3.0 * se
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatioRow {
    pub n: usize,
    pub sigma2: VarianceEstimate,
    /// `ℰₙ`: implicit `Σ M_k`, explicit `Σ M̂(r_k)`.
    pub expected_mass: f64,
    /// `σₙ² / ℰₙ`
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    /// `∫ sₙ²(y)/σₙ² dμ(y)`
    pub target_integral: Option<f64>,
    pub target_integral_se: Option<f64>,
    /// Sorted `sₙ²(y)/σₙ²` over the sampled centers.
    pub target_ratios: Vec<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatioReport {
    pub sampling: Sampling,
    pub rows: Vec<VarianceRatioRow>,
}

/// `ℰₙ` at each mark.
fn expected_masses(ctx: &SeriesContext<'_>, measure: &DensityMeasure, marks: &[usize]) -> Result<Vec<f64>> {
    let per_step: Vec<f64> = match ctx.mode {
        Mode::Implicit => ctx.values.clone(),
        Mode::Explicit => ctx
            .values
            .iter()
            .map(|&r| measure.mean_ball_measure(ctx.metric, r))
            .collect::<Result<_>>()?,
    };
    Ok(marks
        .iter()
        .map(|&n| compensated_sum(per_step[..n].iter().copied()))
        .collect())
}

pub fn variance_ratio_report(
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    ns: &[usize],
    sampling: Sampling,
    seed: u64,
) -> Result<VarianceRatioReport> {
    check_grid(ns)?;
    if sampling.outer < 2 || sampling.inner < 2 {
        return Err(Error::Domain("need at least 2 centers and 2 points per center".into()));
    }
    let rec = Estimand::recurrence_for(schedule.mode);
    let tgt = Estimand::target_for(schedule.mode);
    let sigma = estimate_variance_grid(
        rec,
        system,
        measure,
        schedule,
        ns,
        sampling.sigma,
        role_seed(seed, "sigma"),
        None,
    )?;
    let ctx = SeriesContext::new(system, measure, schedule, *ns.last().expect("nonempty"))?;
    let expected = expected_masses(&ctx, measure, ns)?;

    let outer_seed = role_seed(seed, "outer");
    let mut per_center: Vec<Vec<VarianceEstimate>> = Vec::with_capacity(sampling.outer);
    let mut skipped_centers = 0usize;
    for j in 0..sampling.outer as u64 {
        let y = sample_point(system, measure, outer_seed, j)?;
        let inner_seed = role_seed(seed, &format!("inner-{j}"));
        match estimate_variance_grid(tgt, system, measure, schedule, ns, sampling.inner, inner_seed, Some(&y)) {
            Ok(rows) => per_center.push(rows),
            Err(Error::Infeasible { .. }) => skipped_centers += 1,
            Err(e) => return Err(e),
        }
    }

    let rows = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let s = &sigma[i];
            let mut flags = Vec::new();
            if skipped_centers > 0 {
                flags.push(format!("{skipped_centers} infeasible centers skipped"));
            }
            if s.skipped > 0 {
                flags.push(format!("{} infeasible initial points skipped", s.skipped));
            }
            let defined = s.estimate > 0.0 && expected[i] > 0.0;
            if !defined {
                flags.push("undefined: zero variance or zero expected mass".into());
            }
            let (ratio, ratio_se) = if defined {
                (Some(s.estimate / expected[i]), Some(s.se / expected[i]))
            } else {
                (None, None)
            };
            let mut target_ratios: Vec<f64> = if s.estimate > 0.0 {
                per_center.iter().map(|c| c[i].estimate / s.estimate).collect()
            } else {
                Vec::new()
            };
            let (target_integral, target_integral_se) = if target_ratios.len() >= 2 {
                let m = mean(&target_ratios);
                let rel_sigma = s.se / s.estimate;
                let spread = standard_error(&target_ratios);
                (Some(m), Some((spread * spread + (m * rel_sigma).powi(2)).sqrt()))
            } else {
                (None, None)
            };
            target_ratios.sort_by(f64::total_cmp);
            VarianceRatioRow {
                n,
                sigma2: s.clone(),
                expected_mass: expected[i],
                ratio,
                ratio_se,
                target_integral,
                target_integral_se,
                target_ratios,
                flags,
            }
        })
        .collect();
    Ok(VarianceRatioReport { sampling, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub y: f64,
    pub h: f64,
    pub s_hat: f64,
    /// `√(h(y)/μ(h))`
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCheck {
    pub n: usize,
    pub sampling: Sampling,
    /// `μ(h) = ∫ h² dm`
    pub mu_h: f64,
    pub sigma_hat2: VarianceEstimate,
    /// Monte Carlo `∫ |ŝₙ/σ̂ₙ − √(h/μ(h))| dμ`.
    pub distance: f64,
    pub distance_se: f64,
    pub rows: Vec<ProfileRow>,
}

/// L¹ distance between `ŝₙ(y)/σ̂ₙ` and the profile `√(h(y)/μ(h))`.
pub fn l1_profile_check(
    system: &MapSystem,
    measure: &DensityMeasure,
    schedule: &RadiusSchedule,
    n: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<ProfileCheck> {
    if schedule.is_implicit() {
        return Err(Error::Domain("the profile check uses explicit radii".into()));
    }
    if measure.dimension() != 1 {
        return Err(Error::Domain("the profile check needs a 1-D density".into()));
    }
    if sampling.outer < 2 || sampling.inner < 2 {
        return Err(Error::Domain("need at least 2 centers and 2 points per center".into()));
    }
    let mu_h = measure.mu_h();
    let sigma_hat2 = estimate_variance(
        Estimand::Sigma2Hat,
        system,
        measure,
        schedule,
        n,
        sampling.sigma,
        role_seed(seed, "sigma"),
        None,
    )?;
    let sigma_hat = sigma_hat2.estimate.sqrt();
    let outer_seed = role_seed(seed, "outer");
    let mut rows = Vec::with_capacity(sampling.outer);
    for j in 0..sampling.outer as u64 {
        let y = sample_point(system, measure, outer_seed, j)?;
        let inner_seed = role_seed(seed, &format!("inner-{j}"));
        let s2 = estimate_variance(
            Estimand::S2Hat,
            system,
            measure,
            schedule,
            n,
            sampling.inner,
            inner_seed,
            Some(&y),
        )?;
        let yv = y.value()?;
        let h = measure.density(yv);
        rows.push(ProfileRow {
            y: yv,
            h,
            s_hat: s2.estimate.sqrt(),
            target: (h / mu_h).sqrt(),
        });
    }
    let gaps: Vec<f64> = rows
        .iter()
        .map(|r| {
            let ratio = if sigma_hat > 0.0 { r.s_hat / sigma_hat } else { f64::NAN };
            (ratio - r.target).abs()
        })
        .collect();
    Ok(ProfileCheck {
        n,
        sampling,
        mu_h,
        sigma_hat2,
        distance: mean(&gaps),
        distance_se: standard_error(&gaps),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radii::Sequence;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_radius_gives_zero_variance() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let zero = RadiusSchedule::explicit(Sequence::constant(0.0));
        let v = estimate_variance(Estimand::Sigma2Hat, &sys, &leb, &zero, 500, 50, 1, None).unwrap();
        assert_eq!(v.estimate, 0.0);
        assert_eq!(v.se, 0.0);
    }

    #[test]
    fn full_radius_gives_zero_variance() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let all = RadiusSchedule::explicit(Sequence::constant(0.5));
        let y = Point::Real(0.3);
        // every point except the antipode is within 1/2
        let v = estimate_variance(Estimand::S2Hat, &sys, &leb, &all, 300, 40, 2, Some(&y)).unwrap();
        assert!(v.estimate < 1e-20, "{v:?}");
    }

    #[test]
    fn half_interval_target_green_kubo() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let sched = RadiusSchedule::explicit(Sequence::constant(0.25));
        let y = Point::Real(0.25);
        let v = estimate_variance(Estimand::S2Hat, &sys, &leb, &sched, 10_000, 10_000, 3, Some(&y)).unwrap();
        let per_step = v.estimate / 1e4;
        assert!((0.23..=0.27).contains(&per_step), "{per_step}");
        assert!((per_step - 0.25).abs() < 4.0 * v.se / 1e4);
    }

    #[test]
    fn validation() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let imp = RadiusSchedule::implicit(Sequence::pow(0.5, 1.0));
        assert!(estimate_variance(Estimand::Sigma2Recurrence, &sys, &leb, &imp, 10, 1, 0, None).is_err());
        assert!(estimate_variance(Estimand::S2Target, &sys, &leb, &imp, 10, 10, 0, None).is_err());
        assert!(estimate_variance(Estimand::Sigma2Hat, &sys, &leb, &imp, 10, 10, 0, None).is_err());
        assert!(estimate_variance_grid(Estimand::Sigma2Recurrence, &sys, &leb, &imp, &[10, 5], 10, 0, None).is_err());
    }

    #[test]
    fn infeasible_points_are_skipped() {
        // on the interval every point sees a ball of mass 1, so only M > 1 is infeasible
        let sys = MapSystem::two_slope();
        let m = DensityMeasure::two_slope();
        let sched = RadiusSchedule::implicit(Sequence::constant(1.5));
        let err = estimate_variance(Estimand::Sigma2Recurrence, &sys, &m, &sched, 20, 30, 4, None).unwrap_err();
        assert!(err.to_string().contains("0 of 30"), "{err}");
    }

    #[test]
    fn grid_matches_single_runs() {
        let sys = MapSystem::two_slope();
        let m = DensityMeasure::two_slope();
        let sched = RadiusSchedule::explicit(Sequence::pow(0.5, 0.25));
        let grid = estimate_variance_grid(Estimand::Sigma2Hat, &sys, &m, &sched, &[50, 200], 100, 5, None).unwrap();
        let single = estimate_variance(Estimand::Sigma2Hat, &sys, &m, &sched, 200, 100, 5, None).unwrap();
        assert_abs_diff_eq!(grid[1].estimate, single.estimate, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_report_is_flagged() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let zero = RadiusSchedule::explicit(Sequence::constant(0.0));
        let rep = variance_ratio_report(
            &sys,
            &leb,
            &zero,
            &[100],
            Sampling {
                sigma: 20,
                outer: 3,
                inner: 5,
            },
            1,
        )
        .unwrap();
        let row = &rep.rows[0];
        assert!(row.ratio.is_none() && row.target_integral.is_none());
        assert!(row.flags.iter().any(|f| f.starts_with("undefined")));
    }

    #[test]
    fn small_report_is_sane() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let sched = RadiusSchedule::implicit(Sequence::pow(0.5, 1.0));
        let rep = variance_ratio_report(
            &sys,
            &leb,
            &sched,
            &[100, 1000],
            Sampling {
                sigma: 2000,
                outer: 20,
                inner: 100,
            },
            9,
        )
        .unwrap();
        for row in &rep.rows {
            let r = row.ratio.unwrap();
            assert!(r > 0.6 && r < 1.4, "{row:?}");
            assert_eq!(row.target_ratios.len(), 20);
        }
    }

    #[test]
    fn profile_targets_two_slope() {
        let sys = MapSystem::two_slope();
        let m = DensityMeasure::two_slope();
        let sched = RadiusSchedule::explicit(Sequence::pow(0.5, 0.25));
        let check = l1_profile_check(
            &sys,
            &m,
            &sched,
            1,
            Sampling {
                sigma: 50,
                outer: 10,
                inner: 10,
            },
            2,
        )
        .unwrap();
        assert_abs_diff_eq!(check.mu_h, 33.0 / 32.0, epsilon = 1e-15);
        for row in &check.rows {
            let expect = if row.y < 2.0 / 3.0 {
                (36.0f64 / 33.0).sqrt()
            } else {
                (24.0f64 / 33.0).sqrt()
            };
            assert_abs_diff_eq!(row.target, expect, epsilon = 1e-15);
        }
        assert!(check.distance.is_finite());
    }

    #[test]
    fn lebesgue_profile_is_flat() {
        let sys = MapSystem::doubling();
        let leb = DensityMeasure::lebesgue();
        let sched = RadiusSchedule::explicit(Sequence::pow(0.5, 0.25));
        let check = l1_profile_check(
            &sys,
            &leb,
            &sched,
            2000,
            Sampling {
                sigma: 2000,
                outer: 10,
                inner: 400,
            },
            6,
        )
        .unwrap();
        assert!(check.rows.iter().all(|r| r.target == 1.0));
        assert!(check.distance < 0.15, "{}", check.distance);
    }
}
