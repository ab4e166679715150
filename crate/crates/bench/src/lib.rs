//! Fixtures shared by the benchmarks.

use reclab_core::measures::sample_point;
use reclab_core::{DensityMeasure, MapSystem, Point, RadiusSchedule, Sequence};

pub const SEED: u64 = 2024;

pub fn doubling() -> (MapSystem, DensityMeasure) {
    (MapSystem::doubling(), DensityMeasure::lebesgue())
}

pub fn two_slope() -> (MapSystem, DensityMeasure) {
    (MapSystem::two_slope(), DensityMeasure::two_slope())
}

/// `M_k = k^{-1/2}`.
pub fn implicit_sqrt() -> RadiusSchedule {
    RadiusSchedule::implicit(Sequence::pow(0.5, 1.0))
}

/// `r_k = k^{-1/2}/4`.
pub fn explicit_sqrt() -> RadiusSchedule {
    RadiusSchedule::explicit(Sequence::pow(0.5, 0.25))
}

pub fn points(system: &MapSystem, measure: &DensityMeasure, count: usize) -> Vec<Point> {
    (0..count as u64)
        .map(|i| sample_point(system, measure, SEED, i).expect("compatible fixture"))
        .collect()
}
