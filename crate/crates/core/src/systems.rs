//! Concrete measure-preserving maps and exact orbit iteration.
//!
//! Three families are supported: piecewise-affine maps of the circle or the
//! interval, hyperbolic linear automorphisms of the 2-torus, and subshifts of
//! finite type (delegating to [`crate::symbolic`]).
//!
//! Maps whose branches are all `x -> ±2^j x + c` with integral `c` are
//! *dyadic-exact*: orbits of [`Point::Bits`] are computed by shifting (and
//! possibly complementing) a seeded binary expansion, so no precision is lost
//! however long the orbit. Everything else runs in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{window_to_unit, BitCursor, BitExpansion};
use crate::symbolic::{SftDescriptor, SftSystem, SymbolSeq};

const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub a: f64,
    pub b: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Branch {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Unreduced image of `[a, b)` as `(lo, hi)`.
    pub fn image(&self) -> (f64, f64) {
        let (u, v) = (self.apply(self.a), self.apply(self.b));
        (u.min(v), u.max(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Circle,
    Interval,
    Torus,
}

impl Metric {
    #[inline]
    pub fn distance(self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match self {
            Metric::Circle => circle_gap(x[0], y[0]),
            Metric::Interval => (x[0] - y[0]).abs(),
            Metric::Torus => circle_gap(x[0], y[0]).hypot(circle_gap(x[1], y[1])),
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Metric::Circle | Metric::Interval => 1,
            Metric::Torus => 2,
        }
    }
}

#[inline]
fn circle_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    d.min(1.0 - d)
}

/// Shift-and-complement code of a dyadic branch `x -> ±2^shift x + integer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicCode {
    pub shift: u32,
    pub negate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    metric: Metric,
    branches: Vec<Branch>,
    markov: bool,
    dyadic: Option<Vec<DyadicCode>>,
}

impl PiecewiseAffine {
    pub fn new(metric: Metric, branches: Vec<Branch>, markov: bool) -> Result<Self> {
        if metric == Metric::Torus {
            return Err(Error::Descriptor(
                "piecewise-affine maps live on the circle or the interval".into(),
            ));
        }
        validate_branches(metric, &branches)?;
        if markov {
            check_markov(metric, &branches)?;
        }
        let dyadic = branches.iter().map(dyadic_code).collect::<Option<Vec<_>>>();
        Ok(Self {
            metric,
            branches,
            markov,
            dyadic,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn is_markov(&self) -> bool {
        self.markov
    }

    pub fn dyadic_codes(&self) -> Option<&[DyadicCode]> {
        self.dyadic.as_deref()
    }

    /// Index of the branch whose right-open domain contains `x`.
    #[inline]
    pub fn branch_index(&self, x: f64) -> usize {
        let last = self.branches.len() - 1;
        self.branches[..last].iter().position(|b| x < b.b).unwrap_or(last)
    }

    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        let y = self.branches[self.branch_index(x)].apply(x);
        let r = y - y.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }

    /// The largest branch endpoint set, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.branches.iter().map(|b| b.a).collect();
        v.push(1.0);
        v
    }
}

fn validate_branches(metric: Metric, branches: &[Branch]) -> Result<()> {
    let first = branches
        .first()
        .ok_or_else(|| Error::Descriptor("at least one branch is required".into()))?;
    if first.a != 0.0 {
        return Err(Error::Descriptor("first branch must start at 0".into()));
    }
    if branches.last().map(|b| b.b) != Some(1.0) {
        return Err(Error::Descriptor("last branch must end at 1".into()));
    }
    for (i, b) in branches.iter().enumerate() {
        if ![b.a, b.b, b.slope, b.intercept].iter().all(|v| v.is_finite()) {
            return Err(Error::Descriptor(format!("branch {i} has non-finite data")));
        }
        if b.a >= b.b {
            return Err(Error::Descriptor(format!("branch {i} has empty domain")));
        }
        if b.slope.abs() <= 1.0 {
            return Err(Error::Descriptor(format!(
                "branch {i} is not expanding (|slope| = {})",
                b.slope.abs()
            )));
        }
        if let Some(next) = branches.get(i + 1) {
            if (next.a - b.b).abs() > ENDPOINT_TOL {
                return Err(Error::Descriptor(format!(
                    "branches {i} and {} do not partition [0,1)",
                    i + 1
                )));
            }
        }
        if metric == Metric::Interval {
            let (lo, hi) = b.image();
            if lo < -ENDPOINT_TOL || hi > 1.0 + ENDPOINT_TOL {
                return Err(Error::Descriptor(format!(
                    "branch {i} maps outside [0,1]: [{lo}, {hi}]"
                )));
            }
        }
    }
    Ok(())
}

fn is_endpoint(v: f64, ends: &[f64]) -> bool {
    ends.iter().any(|e| (e - v).abs() <= ENDPOINT_TOL)
}

fn check_markov(metric: Metric, branches: &[Branch]) -> Result<()> {
    let mut ends: Vec<f64> = branches.iter().map(|b| b.a).collect();
    ends.push(1.0);
    for (i, b) in branches.iter().enumerate() {
        let (lo, hi) = b.image();
        let ok = match metric {
            Metric::Circle => {
                hi - lo >= 1.0 - ENDPOINT_TOL
                    || (is_endpoint(lo - lo.floor(), &ends) && is_endpoint(hi - hi.floor(), &ends))
            }
            _ => is_endpoint(lo, &ends) && is_endpoint(hi, &ends),
        };
        if !ok {
            return Err(Error::Descriptor(format!(
                "branch {i} image [{lo}, {hi}] is not a union of branch domains"
            )));
        }
    }
    Ok(())
}

fn dyadic_code(b: &Branch) -> Option<DyadicCode> {
    let m = b.slope.abs();
    let shift = m.log2();
    if shift.fract() != 0.0 || !(1.0..64.0).contains(&shift) || b.intercept.fract() != 0.0 {
        return None;
    }
    Some(DyadicCode {
        shift: shift as u32,
        negate: b.slope < 0.0,
    })
}

/// Linear automorphism `x -> A x mod 1` of the 2-torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusAutomorphism {
    matrix: [[i64; 2]; 2],
}

impl TorusAutomorphism {
    pub fn new(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = matrix;
        let det = a * d - b * c;
        if det.abs() != 1 {
            return Err(Error::Descriptor(format!("|det| = {} != 1", det.abs())));
        }
        let trace = (a + d) as f64;
        let disc = trace * trace - 4.0 * det as f64;
        let hyperbolic = disc > 0.0 && {
            let l1 = (trace + disc.sqrt()) / 2.0;
            let l2 = (trace - disc.sqrt()) / 2.0;
            (l1.abs() - 1.0).abs() > 1e-9 && (l2.abs() - 1.0).abs() > 1e-9
        };
        if !hyperbolic {
            return Err(Error::Descriptor("torus matrix has an eigenvalue of modulus 1".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        self.matrix
    }

    #[inline]
    pub fn step(&self, p: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.matrix;
        let x = a as f64 * p[0] + b as f64 * p[1];
        let y = c as f64 * p[0] + d as f64 * p[1];
        [wrap(x), wrap(y)]
    }
}

#[inline]
fn wrap(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A metric measure-preserving map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemDescriptor", into = "SystemDescriptor")]
pub enum MapSystem {
    PiecewiseAffine(PiecewiseAffine),
    TorusLinear(TorusAutomorphism),
    Shift(SftSystem),
}

impl MapSystem {
    /// `x -> 2x mod 1` on the circle.
    pub fn doubling() -> Self {
        Self::piecewise(
            Metric::Circle,
            vec![
                Branch {
                    a: 0.0,
                    b: 0.5,
                    slope: 2.0,
                    intercept: 0.0,
                },
                Branch {
                    a: 0.5,
                    b: 1.0,
                    slope: 2.0,
                    intercept: -1.0,
                },
            ],
        )
    }

    /// The tent map on the interval.
    pub fn tent() -> Self {
        Self::piecewise(
            Metric::Interval,
            vec![
                Branch {
                    a: 0.0,
                    b: 0.5,
                    slope: 2.0,
                    intercept: 0.0,
                },
                Branch {
                    a: 0.5,
                    b: 1.0,
                    slope: -2.0,
                    intercept: 2.0,
                },
            ],
        )
    }

    /// Markov interval map with slopes 3/2 on `[0,2/3)` and 2 on `[2/3,1)`.
    ///
    /// Its invariant density is 9/8 on `[0,2/3)` and 3/4 on `[2/3,1)`.
    pub fn two_slope() -> Self {
        Self::piecewise(
            Metric::Interval,
            vec![
                Branch {
                    a: 0.0,
                    b: 2.0 / 3.0,
                    slope: 1.5,
                    intercept: 0.0,
                },
                Branch {
                    a: 2.0 / 3.0,
                    b: 1.0,
                    slope: 2.0,
                    intercept: -4.0 / 3.0,
                },
            ],
        )
    }

    /// Arnold's cat map `(2 1; 1 1)`.
    pub fn cat_map() -> Self {
        MapSystem::TorusLinear(TorusAutomorphism::new([[2, 1], [1, 1]]).expect("hyperbolic"))
    }

    fn piecewise(metric: Metric, branches: Vec<Branch>) -> Self {
        MapSystem::PiecewiseAffine(PiecewiseAffine::new(metric, branches, true).expect("valid preset"))
    }

    pub fn metric(&self) -> Option<Metric> {
        match self {
            MapSystem::PiecewiseAffine(p) => Some(p.metric),
            MapSystem::TorusLinear(_) => Some(Metric::Torus),
            MapSystem::Shift(_) => None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.metric().map_or(1, Metric::dimension)
    }

    pub fn as_piecewise(&self) -> Option<&PiecewiseAffine> {
        match self {
            MapSystem::PiecewiseAffine(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_dyadic(&self) -> bool {
        self.as_piecewise().is_some_and(|p| p.dyadic.is_some())
    }

    pub fn iterate(&self, x: &Point, n: u64) -> Result<Point> {
        x.check_domain()?;
        match (self, x) {
            (MapSystem::PiecewiseAffine(p), Point::Real(v)) => {
                let mut v = *v;
                for _ in 0..n {
                    v = p.step(v);
                }
                Ok(Point::Real(v))
            }
            (MapSystem::PiecewiseAffine(p), Point::Bits(bp)) => {
                let codes = p
                    .dyadic
                    .as_deref()
                    .ok_or_else(|| Error::Domain("bitstream points require a dyadic-exact map".into()))?;
                let mut bp = *bp;
                if let Some(code) = uniform_code(codes) {
                    bp.offset += n * u64::from(code.shift);
                    bp.flip ^= code.negate && n % 2 == 1;
                } else {
                    for _ in 0..n {
                        let code = codes[p.branch_index(bp.value())];
                        bp.offset += u64::from(code.shift);
                        bp.flip ^= code.negate;
                    }
                }
                Ok(Point::Bits(bp))
            }
            (MapSystem::TorusLinear(t), Point::Planar(q)) => {
                let mut q = *q;
                for _ in 0..n {
                    q = t.step(q);
                }
                Ok(Point::Planar(q))
            }
            (MapSystem::Shift(s), Point::Symbols(seq)) => s.shift(seq, n).map(Point::Symbols),
            _ => Err(Error::Domain("point representation does not match the system".into())),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            MapSystem::Shift(s) => match (x, y) {
                (Point::Symbols(a), Point::Symbols(b)) => Ok(s.distance(a, b)),
                _ => Err(Error::Domain("symbolic systems need symbol sequences".into())),
            },
            _ => {
                let metric = self.metric().expect("geometric system");
                Ok(metric.distance(x.coords()?, y.coords()?))
            }
        }
    }

    /// Hit indicators `d(T^k x, c_k) < r_k` for `k = 1..=n`.
    pub fn orbit_hits<I>(&self, x: &Point, targets: I, n: usize) -> Result<Vec<bool>>
    where
        I: IntoIterator<Item = (Point, f64)>,
    {
        let metric = self
            .metric()
            .ok_or_else(|| Error::Domain("hit scans need a geometric system".into()))?;
        let mut targets = targets.into_iter();
        let mut out = Vec::with_capacity(n);
        let mut orbit = AnyOrbit::new(self, x)?;
        for k in 0..n {
            let (c, r) = targets.next().ok_or(Error::Length { expected: n, got: k })?;
            let c = c.coords()?;
            orbit.step();
            out.push(metric.distance(orbit.current(), c) < r);
        }
        Ok(out)
    }
}

#[inline]
fn uniform_code(codes: &[DyadicCode]) -> Option<DyadicCode> {
    let first = codes[0];
    codes.iter().all(|c| *c == first).then_some(first)
}

/// A point of a bitstream orbit: the expansion read from `offset`, complemented
/// when `flip` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitPoint {
    pub expansion: BitExpansion,
    pub offset: u64,
    pub flip: bool,
}

impl BitPoint {
    pub fn new(expansion: BitExpansion) -> Self {
        Self {
            expansion,
            offset: 0,
            flip: false,
        }
    }

    pub fn value(&self) -> f64 {
        let w = self.expansion.window(self.offset);
        window_to_unit(if self.flip { !w } else { w })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Real(f64),
    Planar([f64; 2]),
    Bits(BitPoint),
    Symbols(SymbolSeq),
}

impl Point {
    /// A 1-D point, rejecting values outside [0, 1).
    pub fn real(x: f64) -> Result<Self> {
        let p = Point::Real(x);
        p.check_domain()?;
        Ok(p)
    }

    /// A 1-D point reduced mod 1.
    pub fn wrapped(x: f64) -> Self {
        Point::Real(wrap(x))
    }

    pub fn planar(x: f64, y: f64) -> Result<Self> {
        let p = Point::Planar([x, y]);
        p.check_domain()?;
        Ok(p)
    }

    fn check_domain(&self) -> Result<()> {
        let inside = |v: f64| (0.0..1.0).contains(&v);
        match self {
            Point::Real(v) if !inside(*v) => Err(Error::Domain(format!("{v} is outside [0,1)"))),
            Point::Planar([a, b]) if !inside(*a) || !inside(*b) => {
                Err(Error::Domain(format!("({a}, {b}) is outside [0,1)^2")))
            }
            _ => Ok(()),
        }
    }

    /// Coordinates padded to two entries; bitstream points are read at 53 bits.
    pub fn coords(&self) -> Result<[f64; 2]> {
        match self {
            Point::Real(v) => Ok([*v, 0.0]),
            Point::Planar(p) => Ok(*p),
            Point::Bits(b) => Ok([b.value(), 0.0]),
            Point::Symbols(_) => Err(Error::Domain("symbol sequences have no coordinates".into())),
        }
    }

    pub fn value(&self) -> Result<f64> {
        Ok(self.coords()?[0])
    }
}

/// Orbit cursor; `step` applies T once, `current` reads the position.
pub trait Orbit {
    fn current(&self) -> [f64; 2];
    fn step(&mut self);
}

pub struct FloatOrbit<'a> {
    map: &'a PiecewiseAffine,
    x: f64,
}

impl Orbit for FloatOrbit<'_> {
    #[inline]
    fn current(&self) -> [f64; 2] {
        [self.x, 0.0]
    }

    #[inline]
    fn step(&mut self) {
        self.x = self.map.step(self.x);
    }
}

pub struct DyadicOrbit<'a> {
    map: &'a PiecewiseAffine,
    codes: &'a [DyadicCode],
    uniform: Option<DyadicCode>,
    cursor: BitCursor,
    flip: bool,
    x: f64,
}

impl DyadicOrbit<'_> {
    #[inline]
    fn read(&mut self) {
        let w = self.cursor.window();
        self.x = window_to_unit(if self.flip { !w } else { w });
    }
}

impl Orbit for DyadicOrbit<'_> {
    #[inline]
    fn current(&self) -> [f64; 2] {
        [self.x, 0.0]
    }

    #[inline]
    fn step(&mut self) {
        let code = match self.uniform {
            Some(c) => c,
            None => self.codes[self.map.branch_index(self.x)],
        };
        self.cursor.advance(code.shift);
        self.flip ^= code.negate;
        self.read();
    }
}

pub struct TorusOrbit {
    map: TorusAutomorphism,
    p: [f64; 2],
}

impl Orbit for TorusOrbit {
    #[inline]
    fn current(&self) -> [f64; 2] {
        self.p
    }

    #[inline]
    fn step(&mut self) {
        self.p = self.map.step(self.p);
    }
}

/// Dispatches to a monomorphized orbit cursor.
// unboxed: the orbit is stepped in the innermost loop
#[allow(clippy::large_enum_variant)]
pub enum AnyOrbit<'a> {
    Float(FloatOrbit<'a>),
    Dyadic(DyadicOrbit<'a>),
    Torus(TorusOrbit),
}

impl<'a> AnyOrbit<'a> {
    pub fn new(system: &'a MapSystem, x: &Point) -> Result<Self> {
        x.check_domain()?;
        match (system, x) {
            (MapSystem::PiecewiseAffine(map), Point::Real(v)) => Ok(AnyOrbit::Float(FloatOrbit { map, x: *v })),
            (MapSystem::PiecewiseAffine(map), Point::Bits(bp)) => {
                let codes = map
                    .dyadic
                    .as_deref()
                    .ok_or_else(|| Error::Domain("bitstream points require a dyadic-exact map".into()))?;
                let mut orbit = DyadicOrbit {
                    map,
                    codes,
                    uniform: uniform_code(codes),
                    cursor: bp.expansion.cursor(bp.offset),
                    flip: bp.flip,
                    x: 0.0,
                };
                orbit.read();
                Ok(AnyOrbit::Dyadic(orbit))
            }
            (MapSystem::TorusLinear(map), Point::Planar(p)) => Ok(AnyOrbit::Torus(TorusOrbit { map: *map, p: *p })),
            _ => Err(Error::Domain("point representation does not match the system".into())),
        }
    }
}

impl Orbit for AnyOrbit<'_> {
    fn current(&self) -> [f64; 2] {
        match self {
            AnyOrbit::Float(o) => o.current(),
            AnyOrbit::Dyadic(o) => o.current(),
            AnyOrbit::Torus(o) => o.current(),
        }
    }

    fn step(&mut self) {
        match self {
            AnyOrbit::Float(o) => o.step(),
            AnyOrbit::Dyadic(o) => o.step(),
            AnyOrbit::Torus(o) => o.step(),
        }
    }
}

/// Runs `$body` with `$o` bound to the concrete orbit type.
#[macro_export]
macro_rules! with_orbit {
    ($any:expr, $o:ident => $body:expr) => {
        match $any {
            $crate::systems::AnyOrbit::Float($o) => $body,
            $crate::systems::AnyOrbit::Dyadic($o) => $body,
            $crate::systems::AnyOrbit::Torus($o) => $body,
        }
    };
}

/// JSON form of a [`MapSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<Branch>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[i64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sft: Option<SftDescriptor>,
}

impl TryFrom<SystemDescriptor> for MapSystem {
    type Error = Error;

    fn try_from(d: SystemDescriptor) -> Result<Self> {
        let branches = || {
            d.branches
                .clone()
                .ok_or_else(|| Error::Descriptor(format!("{} needs \"branches\"", d.kind)))
        };
        match d.kind.as_str() {
            "circle-pw-affine" => Ok(MapSystem::PiecewiseAffine(PiecewiseAffine::new(
                Metric::Circle,
                branches()?,
                d.markov.unwrap_or(false),
            )?)),
            "interval-pw-affine" => Ok(MapSystem::PiecewiseAffine(PiecewiseAffine::new(
                Metric::Interval,
                branches()?,
                d.markov.unwrap_or(false),
            )?)),
            "torus-linear" => {
                let m = d
                    .matrix
                    .ok_or_else(|| Error::Descriptor("torus-linear needs \"matrix\"".into()))?;
                Ok(MapSystem::TorusLinear(TorusAutomorphism::new(m)?))
            }
            "shift-of-finite-type" => {
                let s = d
                    .sft
                    .ok_or_else(|| Error::Descriptor("shift-of-finite-type needs \"sft\"".into()))?;
                Ok(MapSystem::Shift(SftSystem::try_from(s)?))
            }
            "doubling" => Ok(MapSystem::doubling()),
            "tent" => Ok(MapSystem::tent()),
            "two-slope" => Ok(MapSystem::two_slope()),
            "cat-map" => Ok(MapSystem::cat_map()),
            "golden-mean" => Ok(MapSystem::Shift(SftSystem::golden_mean(0.5, 16)?)),
            other => Err(Error::Descriptor(format!("unknown system kind {other:?}"))),
        }
    }
}

impl From<MapSystem> for SystemDescriptor {
    fn from(s: MapSystem) -> Self {
        let empty = |kind: &str| SystemDescriptor {
            kind: kind.into(),
            branches: None,
            matrix: None,
            markov: None,
            sft: None,
        };
        match s {
            MapSystem::PiecewiseAffine(p) => SystemDescriptor {
                branches: Some(p.branches),
                markov: Some(p.markov),
                ..empty(match p.metric {
                    Metric::Circle => "circle-pw-affine",
                    _ => "interval-pw-affine",
                })
            },
            MapSystem::TorusLinear(t) => SystemDescriptor {
                matrix: Some(t.matrix),
                ..empty("torus-linear")
            },
            MapSystem::Shift(s) => SystemDescriptor {
                sft: Some(s.into()),
                ..empty("shift-of-finite-type")
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn real(x: f64) -> Point {
        Point::real(x).unwrap()
    }

    #[test]
    fn doubling_steps() {
        let d = MapSystem::doubling();
        assert_abs_diff_eq!(d.iterate(&real(0.3), 1).unwrap().value().unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(d.iterate(&real(0.3), 2).unwrap().value().unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn cat_map_step() {
        let p = MapSystem::cat_map()
            .iterate(&Point::planar(0.5, 0.5).unwrap(), 1)
            .unwrap();
        assert_eq!(p, Point::Planar([0.5, 0.0]));
    }

    #[test]
    fn distances() {
        let circle = MapSystem::doubling();
        let interval = MapSystem::two_slope();
        assert_abs_diff_eq!(circle.distance(&real(0.1), &real(0.9)).unwrap(), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(interval.distance(&real(0.1), &real(0.9)).unwrap(), 0.8, epsilon = 1e-15);
        let torus = MapSystem::cat_map();
        let d = torus
            .distance(&Point::planar(0.0, 0.0).unwrap(), &Point::planar(0.5, 0.5).unwrap())
            .unwrap();
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn out_of_domain_point_is_rejected() {
        assert!(Point::real(1.0).is_err());
        let err = MapSystem::doubling().iterate(&Point::Real(1.5), 1).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn fixed_point_always_hits() {
        let d = MapSystem::doubling();
        let x = real(0.0);
        let hits = d.orbit_hits(&x, std::iter::repeat((x.clone(), 1e-6)), 50).unwrap();
        assert!(hits.iter().all(|&h| h));
    }

    #[test]
    fn period_two_orbit_hits_on_even_steps() {
        // 1/3 -> 2/3 -> 1/3, and d(2/3, 1/3) = 1/3 > 0.1
        let d = MapSystem::doubling();
        let x = Point::Real(1.0 / 3.0);
        let hits = d.orbit_hits(&x, std::iter::repeat((x.clone(), 0.1)), 40).unwrap();
        for (k, h) in hits.iter().enumerate() {
            assert_eq!(*h, (k + 1) % 2 == 0, "k = {}", k + 1);
        }
    }

    #[test]
    fn empty_and_short_streams() {
        let d = MapSystem::doubling();
        let x = real(0.2);
        assert!(d.orbit_hits(&x, std::iter::empty(), 0).unwrap().is_empty());
        let err = d
            .orbit_hits(&x, std::iter::repeat_n((x.clone(), 0.1), 3), 5)
            .unwrap_err();
        assert!(matches!(err, Error::Length { expected: 5, got: 3 }));
    }

    #[test]
    fn invalid_descriptors() {
        let flat = vec![Branch {
            a: 0.0,
            b: 1.0,
            slope: 1.0,
            intercept: 0.0,
        }];
        assert!(PiecewiseAffine::new(Metric::Circle, flat, false).is_err());
        let gap = vec![
            Branch {
                a: 0.0,
                b: 0.4,
                slope: 2.0,
                intercept: 0.0,
            },
            Branch {
                a: 0.5,
                b: 1.0,
                slope: 2.0,
                intercept: -1.0,
            },
        ];
        assert!(PiecewiseAffine::new(Metric::Circle, gap, false).is_err());
        // not Markov: [0, 0.6) -> [0, 0.9)
        let skew = vec![
            Branch {
                a: 0.0,
                b: 0.6,
                slope: 1.5,
                intercept: 0.0,
            },
            Branch {
                a: 0.6,
                b: 1.0,
                slope: 2.5,
                intercept: -1.5,
            },
        ];
        assert!(PiecewiseAffine::new(Metric::Interval, skew.clone(), false).is_ok());
        assert!(PiecewiseAffine::new(Metric::Interval, skew, true).is_err());
        assert!(TorusAutomorphism::new([[1, 1], [0, 1]]).is_err());
        assert!(TorusAutomorphism::new([[2, 0], [0, 1]]).is_err());
        assert!(TorusAutomorphism::new([[0, 1], [1, 0]]).is_err());
        assert!(TorusAutomorphism::new([[1, 1], [1, 0]]).is_ok());
    }

    #[test]
    fn dyadic_detection() {
        assert!(MapSystem::doubling().is_dyadic());
        assert!(MapSystem::tent().is_dyadic());
        assert!(!MapSystem::two_slope().is_dyadic());
    }

    #[test]
    fn bitstream_orbit_is_a_shift() {
        let e = BitExpansion::new(11, 4).unwrap();
        let x = Point::Bits(BitPoint::new(e));
        let y = MapSystem::doubling().iterate(&x, 1000).unwrap();
        match y {
            Point::Bits(b) => {
                assert_eq!(b.offset, 1000);
                assert_eq!(b.value(), window_to_unit(e.window(1000)));
            }
            _ => panic!("representation changed"),
        }
    }

    #[test]
    fn bitstream_tent_matches_float_for_short_orbits() {
        let e = BitExpansion::new(3, 9).unwrap();
        let bits = Point::Bits(BitPoint::new(e));
        let float = Point::Real(bits.value().unwrap());
        let tent = MapSystem::tent();
        for n in 0..20 {
            let a = tent.iterate(&bits, n).unwrap().value().unwrap();
            let b = tent.iterate(&float, n).unwrap().value().unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"kind":"circle-pw-affine","branches":[{"a":0,"b":0.5,"slope":2,"intercept":0},{"a":0.5,"b":1,"slope":2,"intercept":-1}],"markov":true}"#;
        let s: MapSystem = serde_json::from_str(json).unwrap();
        assert_eq!(s, MapSystem::doubling());
        let back: MapSystem = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let cat: MapSystem = serde_json::from_str(r#"{"kind":"torus-linear","matrix":[[2,1],[1,1]]}"#).unwrap();
        assert_eq!(cat, MapSystem::cat_map());
        assert!(serde_json::from_str::<MapSystem>(r#"{"kind":"torus-linear","matrix":[[1,0],[0,1]]}"#).is_err());
    }

    proptest! {
        #[test]
        fn bitstream_iteration_composes_exactly(seed in any::<u64>(), a in 0u64..200, b in 0u64..200) {
            let x = Point::Bits(BitPoint::new(BitExpansion::new(seed, 0).unwrap()));
            for sys in [MapSystem::doubling(), MapSystem::tent()] {
                let whole = sys.iterate(&x, a + b).unwrap();
                let split = sys.iterate(&sys.iterate(&x, a).unwrap(), b).unwrap();
                prop_assert_eq!(whole, split);
            }
        }

        #[test]
        fn float_iteration_composes(x in 0.0f64..1.0, a in 0u64..15, b in 0u64..15) {
            for sys in [MapSystem::doubling(), MapSystem::two_slope()] {
                let p = Point::Real(x);
                let whole = sys.iterate(&p, a + b).unwrap().value().unwrap();
                let split = sys.iterate(&sys.iterate(&p, a).unwrap(), b).unwrap().value().unwrap();
                prop_assert!((whole - split).abs() <= 2f64.powi(-40));
            }
        }
    }
}
