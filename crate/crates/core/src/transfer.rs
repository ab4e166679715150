//! Ulam discretizations of the transfer operator and what is built on them.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{check_compatible, DensityMeasure};
use crate::numeric::{compensated_sum, ls_slope};
use crate::systems::{MapSystem, Metric, PiecewiseAffine};

const ALIGN_TOL: f64 = 1e-12;

/// Row-stochastic `A[i][j] = μ(binᵢ ∩ T⁻¹binⱼ) / μ(binᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    boundaries: Vec<f64>,
    matrix: DMatrix<f64>,
    /// `μ(binᵢ)`
    weights: Vec<f64>,
    exact: bool,
}

/// How to cut `[0, 1)` into bins.
#[derive(Debug, Clone, PartialEq)]
pub enum Bins {
    Uniform(usize),
    Boundaries(Vec<f64>),
    /// Branch endpoints and density jumps, pulled back `depth` times.
    Refined(usize),
}

impl Bins {
    fn boundaries(&self, map: &PiecewiseAffine, measure: &DensityMeasure) -> Result<Vec<f64>> {
        let b = match self {
            Bins::Uniform(n) => (0..=*n).map(|i| i as f64 / *n as f64).collect::<Vec<_>>(),
            Bins::Boundaries(b) => b.clone(),
            Bins::Refined(depth) => markov_refinement(map, measure, *depth),
        };
        if b.len() < 3 {
            return Err(Error::Domain("need at least 2 bins".into()));
        }
        if b[0] != 0.0 || *b.last().expect("nonempty") != 1.0 || b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("bin boundaries must increase from 0 to 1".into()));
        }
        Ok(b)
    }
}

/// Markov partition refined by `depth` pullbacks under the map.
pub fn markov_refinement(map: &PiecewiseAffine, measure: &DensityMeasure, depth: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = map.branches().iter().flat_map(|b| [b.a, b.b]).collect();
    if let Some(pieces) = measure.pieces() {
        grid.extend(pieces.iter().flat_map(|p| [p.lo, p.hi]));
    }
    let tidy = |g: &mut Vec<f64>| {
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() <= ALIGN_TOL);
    };
    tidy(&mut grid);
    for _ in 0..depth {
        let mut next = grid.clone();
        for br in map.branches() {
            for &g in &grid {
                let mut m = -2.0;
                while m <= 2.0 {
                    let z = (g + m - br.intercept) / br.slope;
                    if z > br.a && z < br.b {
                        next.push(z);
                    }
                    m += 1.0;
                }
            }
        }
        grid = next;
        tidy(&mut grid);
    }
    grid
}

fn on_grid(grid: &[f64], x: f64) -> bool {
    let i = grid.partition_point(|&g| g < x - ALIGN_TOL);
    i < grid.len() && (grid[i] - x).abs() <= ALIGN_TOL
}

/// Images of `[a, b)` under one affine branch, split at integers and shifted
/// into `[0, 1]`: `(image_lo, image_hi, integer_shift)`.
fn image_parts(slope: f64, intercept: f64, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
    let (u, v) = (slope * a + intercept, slope * b + intercept);
    let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
    let mut out = Vec::new();
    let mut m = lo.floor();
    while m < hi {
        let (p, q) = (lo.max(m), hi.min(m + 1.0));
        if p < q {
            out.push((p - m, q - m, m));
        }
        m += 1.0;
    }
    out
}

/// Pieces of `[a, b)` lying in single branches: `(lo, hi, branch)`.
fn branch_pieces(map: &PiecewiseAffine, a: f64, b: f64) -> Vec<(f64, f64, usize)> {
    map.branches()
        .iter()
        .enumerate()
        .filter_map(|(k, br)| {
            let (lo, hi) = (a.max(br.a), b.min(br.b));
            (lo < hi).then_some((lo, hi, k))
        })
        .collect()
}

fn alignment(map: &PiecewiseAffine, measure: &DensityMeasure, grid: &[f64]) -> std::result::Result<(), String> {
    for br in map.branches() {
        if !on_grid(grid, br.a) || !on_grid(grid, br.b) {
            return Err(format!("branch endpoint {} or {} is not a bin boundary", br.a, br.b));
        }
    }
    match measure.pieces() {
        None => return Err("density is not piecewise constant".into()),
        Some(pieces) => {
            if let Some(p) = pieces.iter().find(|p| !on_grid(grid, p.lo)) {
                return Err(format!("density jump at {} is not a bin boundary", p.lo));
            }
        }
    }
    for w in grid.windows(2) {
        for (lo, hi, k) in branch_pieces(map, w[0], w[1]) {
            let br = map.branches()[k];
            for (p, q, _) in image_parts(br.slope, br.intercept, lo, hi) {
                if !on_grid(grid, p) || !on_grid(grid, q) {
                    return Err(format!("image of bin [{}, {}) is not a union of bins", w[0], w[1]));
                }
            }
        }
    }
    Ok(())
}

/// Builds the Ulam matrix; with `require_exact` the bins must refine the
/// Markov partition and the density must be constant on every bin.
pub fn build_ulam(
    system: &MapSystem,
    measure: &DensityMeasure,
    bins: &Bins,
    require_exact: bool,
) -> Result<UlamOperator> {
    check_compatible(system, measure)?;
    let map = system
        .as_piecewise()
        .ok_or_else(|| Error::Domain("Ulam operators are built for piecewise-affine maps".into()))?;
    let grid = bins.boundaries(map, measure)?;
    let aligned = alignment(map, measure, &grid);
    if require_exact {
        if let Err(why) = &aligned {
            return Err(Error::Alignment(why.clone()));
        }
    }
    let n = grid.len() - 1;
    let weights: Vec<f64> = grid.windows(2).map(|w| measure.cdf(w[1]) - measure.cdf(w[0])).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for (lo, hi, k) in branch_pieces(map, grid[i], grid[i + 1]) {
            let br = map.branches()[k];
            for (p, q, m) in image_parts(br.slope, br.intercept, lo, hi) {
                let first = grid.partition_point(|&g| g <= p).saturating_sub(1);
                for j in first..n {
                    if grid[j] >= q {
                        break;
                    }
                    let (wa, wb) = (p.max(grid[j]), q.min(grid[j + 1]));
                    if wa >= wb {
                        continue;
                    }
                    let za = (wa + m - br.intercept) / br.slope;
                    let zb = (wb + m - br.intercept) / br.slope;
                    let (zlo, zhi) = if za <= zb { (za, zb) } else { (zb, za) };
                    matrix[(i, j)] += measure.cdf(zhi.min(hi)) - measure.cdf(zlo.max(lo));
                }
            }
        }
        let row_mass = compensated_sum(matrix.row(i).iter().copied());
        for j in 0..n {
            matrix[(i, j)] /= row_mass;
        }
    }
    Ok(UlamOperator {
        boundaries: grid,
        matrix,
        weights,
        exact: aligned.is_ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// `[re, im]`, sorted by decreasing modulus.
    pub eigenvalues: Vec<[f64; 2]>,
    pub second_modulus: f64,
    /// `A − 1π` is nilpotent, so every non-leading eigenvalue is 0.
    pub nilpotent: bool,
}

impl UlamOperator {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `μ(binᵢ)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (compensated_sum(self.matrix.row(i).iter().copied()) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Left Perron vector `πA = π`, `Σπ = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut m = self.matrix.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("Ulam matrix has no unique stationary vector".into()))?;
        Ok(pi.iter().copied().collect())
    }

    /// Stationary vector divided by bin lengths.
    pub fn stationary_density(&self) -> Result<Vec<f64>> {
        Ok(self
            .stationary()?
            .iter()
            .zip(self.boundaries.windows(2))
            .map(|(p, w)| p / (w[1] - w[0]))
            .collect())
    }

    /// `(Aψ)ᵢ = E[ψ∘T | binᵢ]`.
    pub fn compose(&self, psi: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(psi))
            .iter()
            .copied()
            .collect()
    }

    /// `(P̂f)ⱼ = Σᵢ μᵢ A[i][j] fᵢ / μⱼ`, the transfer operator on bin functions.
    pub fn transfer(&self, f: &[f64]) -> Vec<f64> {
        let w = &self.weights;
        (0..self.len())
            .map(|j| compensated_sum((0..self.len()).map(|i| w[i] * self.matrix[(i, j)] * f[i])) / w[j])
            .collect()
    }

    /// `∫ f dμ`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        compensated_sum(f.iter().zip(&self.weights).map(|(a, w)| a * w))
    }

    /// `⟨f, g⟩_μ`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        compensated_sum(f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| a * b * w))
    }

    pub fn center(&self, f: &[f64]) -> Vec<f64> {
        let m = self.mean(f);
        f.iter().map(|v| v - m).collect()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let n = self.len();
        let pi = self.stationary()?;
        // A − 1π is nilpotent exactly when every other eigenvalue vanishes
        let ones_pi = DMatrix::from_fn(n, n, |_, j| pi[j]);
        let mut power = &self.matrix - ones_pi;
        let mut nilpotent = false;
        let mut reach = 1usize;
        while reach <= 2 * n {
            if power.amax() < 1e-12 {
                nilpotent = true;
                break;
            }
            power = &power * &power;
            reach *= 2;
        }
        let mut eig: Vec<[f64; 2]> = self.matrix.complex_eigenvalues().iter().map(|c| [c.re, c.im]).collect();
        eig.sort_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])).reverse());
        let second_modulus = if nilpotent {
            0.0
        } else {
            let lead = eig
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1[0] - 1.0).hypot(a.1[1]);
                    let db = (b.1[0] - 1.0).hypot(b.1[1]);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            eig.iter()
                .enumerate()
                .filter(|(i, _)| *i != lead)
                .map(|(_, e)| e[0].hypot(e[1]))
                .fold(0.0, f64::max)
        };
        Ok(Spectrum {
            eigenvalues: eig,
            second_modulus,
            nilpotent,
        })
    }

    pub fn write_spectrum_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.spectrum()?)?;
        Ok(())
    }

    pub fn write_matrix_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.write_record(self.matrix.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationDecay {
    /// `Cov(φ, ψ∘Tᵏ)` for `k = 0..=k_max`.
    pub covariances: Vec<f64>,
    /// Fitted `ρ` with `|Cov_k| ≈ C ρᵏ`; `None` when too few are nonzero.
    pub rate: Option<f64>,
}

pub fn correlation_decay(op: &UlamOperator, phi: &[f64], psi: &[f64], k_max: usize) -> Result<CorrelationDecay> {
    check_len(op, phi)?;
    check_len(op, psi)?;
    let phi_c = op.center(phi);
    let mut g = op.center(psi);
    let mut covariances = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k > 0 {
            g = op.compose(&g);
        }
        covariances.push(op.inner(&phi_c, &g));
    }
    let scale = covariances.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let (ks, logs): (Vec<f64>, Vec<f64>) = covariances
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-13 * scale.max(1e-300))
        .map(|(k, c)| (k as f64, c.abs().ln()))
        .unzip();
    let rate = (ks.len() >= 3).then(|| ls_slope(&ks, &logs).exp());
    Ok(CorrelationDecay { covariances, rate })
}

fn check_len(op: &UlamOperator, f: &[f64]) -> Result<()> {
    if f.len() != op.len() {
        return Err(Error::Length {
            expected: op.len(),
            got: f.len(),
        });
    }
    Ok(())
}

/// `ψₙ = φₙ + hₙ − hₙ₊₁∘T` on the pieces `binᵢ ∩ T⁻¹binⱼ` with `A[i][j] > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceFunction {
    /// `φₙ + hₙ` on the source bin.
    pub source: Vec<f64>,
    /// `hₙ₊₁` on the target bin.
    pub target: Vec<f64>,
}

impl PieceFunction {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.source[i] - self.target[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Martingale {
    /// `h_0, …, h_{n+1}`.
    pub h: Vec<Vec<f64>>,
    /// `ψ_0, …, ψ_n`.
    pub psi: Vec<PieceFunction>,
    /// `max_k ‖P̂ψ_k‖∞`.
    pub max_transfer: f64,
}

/// Transfer of a piece function, `(P̂ψ)ⱼ = Σᵢ μᵢ A[i][j] ψᵢⱼ / μⱼ`.
pub fn transfer_pieces(op: &UlamOperator, psi: &PieceFunction) -> Vec<f64> {
    let w = op.weights();
    (0..op.len())
        .map(|j| {
            compensated_sum(
                (0..op.len())
                    .filter(|&i| op.matrix[(i, j)] > 0.0)
                    .map(|i| w[i] * op.matrix[(i, j)] * psi.value(i, j)),
            ) / w[j]
        })
        .collect()
}

/// `hₙ = Σ_{k=1}^{n} P^k φ_{n−k}` by `h_{k+1} = P(φ_k + h_k)`, and the
/// reverse-martingale differences `ψ_k`.
pub fn martingale_decomposition(op: &UlamOperator, phis: &[Vec<f64>], n: usize) -> Result<Martingale> {
    if !op.is_exact() {
        return Err(Error::NotExact("the martingale decomposition"));
    }
    if phis.len() < n + 1 {
        return Err(Error::Length {
            expected: n + 1,
            got: phis.len(),
        });
    }
    for phi in &phis[..=n] {
        check_len(op, phi)?;
    }
    let mut h = vec![vec![0.0; op.len()]];
    for phi in &phis[..=n] {
        let last = h.last().expect("h_0");
        let sum: Vec<f64> = phi.iter().zip(last).map(|(a, b)| a + b).collect();
        h.push(op.transfer(&sum));
    }
    let psi: Vec<PieceFunction> = (0..=n)
        .map(|k| PieceFunction {
            source: phis[k].iter().zip(&h[k]).map(|(a, b)| a + b).collect(),
            target: h[k + 1].clone(),
        })
        .collect();
    let max_transfer = psi
        .iter()
        .flat_map(|p| transfer_pieces(op, p))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Martingale { h, psi, max_transfer })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenKubo {
    pub value: f64,
    pub variance: f64,
    pub covariances: Vec<f64>,
    /// Spectral estimate `2 Var λ₂^{k_max+1} / (1 − λ₂)` of the omitted tail.
    pub tail_bound: f64,
}

/// `Var(φ) + 2 Σ_{k=1}^{k_max} Cov(φ, φ∘Tᵏ)`; `φ` is centered first.
pub fn green_kubo_variance(op: &UlamOperator, phi: &[f64], k_max: usize) -> Result<GreenKubo> {
    let decay = correlation_decay(op, phi, phi, k_max)?;
    let variance = decay.covariances[0];
    let value = variance + 2.0 * compensated_sum(decay.covariances[1..].iter().copied());
    let lambda = op.spectrum()?.second_modulus;
    let tail_bound = if lambda == 0.0 {
        0.0
    } else if lambda < 1.0 {
        2.0 * variance * lambda.powi(k_max as i32 + 1) / (1.0 - lambda)
    } else {
        f64::INFINITY
    };
    Ok(GreenKubo {
        value,
        variance,
        covariances: decay.covariances,
        tail_bound,
    })
}

/// Lipschitz ramp `1_B ≤ g ≤ 1_{B^{+ε}}` around a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEnvelope {
    pub metric: Metric,
    pub center: [f64; 2],
    pub radius: f64,
    pub eps: f64,
}

impl HolderEnvelope {
    pub fn new(metric: Metric, center: [f64; 2], radius: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !(radius >= 0.0) {
            return Err(Error::Domain("envelope needs eps > 0 and radius >= 0".into()));
        }
        Ok(Self {
            metric,
            center,
            radius,
            eps,
        })
    }

    /// `min(1, dist(z, complement of B(c, r + ε)) / ε)`.
    pub fn eval(&self, z: [f64; 2]) -> f64 {
        let d = self.metric.distance(z, self.center);
        ((self.radius + self.eps - d) / self.eps).clamp(0.0, 1.0)
    }

    pub fn lipschitz(&self) -> f64 {
        1.0 / self.eps
    }
}

pub fn holder_envelope(metric: Metric, center: [f64; 2], radius: f64, eps: f64) -> Result<HolderEnvelope> {
    HolderEnvelope::new(metric, center, radius, eps)
}
