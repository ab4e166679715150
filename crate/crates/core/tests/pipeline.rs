//! Cross-module checks through the public API.

use std::fs;
use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use reclab_core::hitstats::{recurrence_series, target_series};
use reclab_core::limits::{ks_statistic, EmpiricalDistribution};
use reclab_core::measures::sample_point;
use reclab_core::radii::implicit_radius;
use reclab_core::transfer::green_kubo_variance;
use reclab_core::{
    build_ulam, run_with_jobs, Bins, DensityMeasure, ExperimentConfig, LimitLaw, MapSystem, Point, RadiusSchedule,
    Sequence,
};
use serde_json::json;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_validate() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn ulam_density_matches_declared_measure() {
    let m = DensityMeasure::two_slope();
    let op = build_ulam(&MapSystem::two_slope(), &m, &Bins::Refined(4), true).unwrap();
    for (d, w) in op.stationary_density().unwrap().iter().zip(op.boundaries().windows(2)) {
        assert_abs_diff_eq!(*d, m.density(0.5 * (w[0] + w[1])), epsilon = 1e-10);
    }
    // bin weights are the declared masses
    for (wt, w) in op.weights().iter().zip(op.boundaries().windows(2)) {
        assert_abs_diff_eq!(*wt, m.cdf(w[1]) - m.cdf(w[0]), epsilon = 1e-15);
    }
}

#[test]
fn green_kubo_matches_long_run_variance() {
    // Birkhoff sums of the centered indicator of [0, 2/3) under the two-slope map
    let m = DensityMeasure::two_slope();
    let sys = MapSystem::two_slope();
    let op = build_ulam(&sys, &m, &Bins::Boundaries(vec![0.0, 2.0 / 3.0, 1.0]), true).unwrap();
    let gk = green_kubo_variance(&op, &[1.0, 0.0], 60).unwrap().value;
    let n = 400;
    let sums: Vec<f64> = (0..4000u64)
        .map(|i| {
            let mut x = sample_point(&sys, &m, 11, i).unwrap().value().unwrap();
            let mut s = 0.0;
            for _ in 0..n {
                s += if x < 2.0 / 3.0 { 0.25 } else { -0.75 };
                x = sys.as_piecewise().unwrap().step(x);
            }
            s
        })
        .collect();
    let var = reclab_core::numeric::sample_variance(&sums) / n as f64;
    // sample variance of 4000 values: relative SE about 2.2%
    assert!((var - gk).abs() < 0.1 * gk, "{var} vs {gk}");
}

#[test]
fn implicit_masses_are_the_prescribed_ones() {
    let sys = MapSystem::two_slope();
    let m = DensityMeasure::two_slope();
    let sched = RadiusSchedule::implicit(Sequence::pow(0.5, 0.5));
    let x = Point::real(0.3).unwrap();
    let series = recurrence_series(&sys, &m, &sched, &x, 200).unwrap();
    for (k, mass) in series.masses.iter().enumerate() {
        let expect = 0.5 / ((k + 1) as f64).sqrt();
        assert_abs_diff_eq!(*mass, expect, epsilon = 1e-15);
        let r = implicit_radius(&m, &sys, &x, expect).unwrap();
        assert_abs_diff_eq!(m.ball_measure(&sys, &x, r).unwrap(), expect, epsilon = 1e-10);
    }
}

#[test]
fn target_sums_center_on_ball_masses() {
    let sys = MapSystem::doubling();
    let m = DensityMeasure::lebesgue();
    let sched = RadiusSchedule::explicit(Sequence::pow(0.5, 0.25));
    let y = Point::real(0.4).unwrap();
    let mut centered = Vec::new();
    for i in 0..400 {
        let x = sample_point(&sys, &m, 5, i).unwrap();
        let s = target_series(&sys, &m, &sched, &y, &x, 2000).unwrap();
        centered.push(s.total_hits() as f64 - s.total_mass());
    }
    let mean = reclab_core::numeric::mean(&centered);
    let se = reclab_core::numeric::standard_error(&centered);
    assert!(mean.abs() < 4.0 * se, "{mean} ± {se}");
}

#[test]
fn law_round_trips_through_json() {
    let law = LimitLaw::averaged_gaussian(&DensityMeasure::two_slope()).unwrap();
    let text = serde_json::to_string(&law).unwrap();
    let back: LimitLaw = serde_json::from_str(&text).unwrap();
    for t in [-2.0, 0.0, 0.7, 3.0] {
        assert_eq!(law.cdf(t), back.cdf(t));
    }
    let emp = EmpiricalDistribution::new(vec![-1.0, 0.0, 1.0]).unwrap();
    assert_eq!(ks_statistic(&emp, &law), ks_statistic(&emp, &back));
}

#[test]
fn reports_agree_across_worker_counts() {
    let config = ExperimentConfig::from_value(&json!({
        "kind": "poisson-count",
        "system": {"kind": "doubling"},
        "measure": {"named": "lebesgue"},
        "n": 500, "samples": 300, "seed": 12
    }))
    .unwrap();
    let a = run_with_jobs(&config, Some(1)).unwrap();
    let b = run_with_jobs(&config, Some(3)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.tables, b.tables);
}
