//! Subshifts of finite type and the future-coordinate reduction of two-sided
//! cylinder observables.
//!
//! Sequences are finite windows `x_lo ..= x_hi` of a two-sided sequence. The
//! only infinite objects are the fixed pasts: for every symbol `i` an
//! admissible left tail ending in a symbol that may precede `i`. The map `G`
//! replaces the negative coordinates of `x` by the fixed past of `x_0`.
//!
//! Given observables `φ*_k` (cylinder functions), [`sinai_future`] builds
//!
//! ```text
//! v_n(x) = Σ_{m=0}^{K} [ φ*_{n+m}(σ^m x) − φ*_{n+m}(σ^m G x) ]
//! f_n    = φ*_n − v_n + v_{n+1} ∘ σ
//! ```
//!
//! where every `f_n` depends only on `x_0, x_1, ...`. All sums are finite for
//! cylinder observables once `K` covers the deepest past coordinate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{uniform, Stream};

/// A finite window of a two-sided sequence; `symbols[j]` is coordinate `lo + j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolSeq {
    pub lo: i64,
    pub symbols: Vec<u8>,
}

impl SymbolSeq {
    pub fn new(lo: i64, symbols: Vec<u8>) -> Self {
        Self { lo, symbols }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.symbols.len() as i64 - 1
    }

    #[inline]
    pub fn get(&self, i: i64) -> Option<u8> {
        let j = i - self.lo;
        if j < 0 {
            return None;
        }
        self.symbols.get(j as usize).copied()
    }

    fn slice(&self, from: i64, to: i64) -> Result<&[u8]> {
        if from < self.lo || to > self.hi() || from > to + 1 {
            return Err(Error::Domain(format!(
                "coordinates [{from}, {to}] outside window [{}, {}]",
                self.lo,
                self.hi()
            )));
        }
        Ok(&self.symbols[(from - self.lo) as usize..=(to - self.lo) as usize])
    }
}

/// Transition data plus metric base and fixed pasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SftDescriptor", into = "SftDescriptor")]
pub struct SftSystem {
    transitions: Vec<Vec<u8>>,
    theta: f64,
    /// `pasts[i]` holds `x_{-W} ..= x_{-1}` of the reference point for symbol `i`.
    pasts: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftDescriptor {
    pub transitions: Vec<Vec<u8>>,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pasts: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub past_depth: Option<usize>,
}

const DEFAULT_PAST_DEPTH: usize = 16;

impl TryFrom<SftDescriptor> for SftSystem {
    type Error = Error;

    fn try_from(d: SftDescriptor) -> Result<Self> {
        match d.pasts {
            Some(p) => SftSystem::with_pasts(d.transitions, d.theta, p),
            None => SftSystem::new(d.transitions, d.theta, d.past_depth.unwrap_or(DEFAULT_PAST_DEPTH)),
        }
    }
}

impl From<SftSystem> for SftDescriptor {
    fn from(s: SftSystem) -> Self {
        SftDescriptor {
            transitions: s.transitions,
            theta: s.theta,
            pasts: Some(s.pasts),
            past_depth: None,
        }
    }
}

impl SftSystem {
    /// Builds the system with canonical pasts of the given depth: each past is
    /// extended backwards by the smallest admissible predecessor.
    pub fn new(transitions: Vec<Vec<u8>>, theta: f64, depth: usize) -> Result<Self> {
        validate_transitions(&transitions)?;
        let k = transitions.len();
        let pasts = (0..k)
            .map(|i| {
                let mut past = Vec::with_capacity(depth);
                let mut next = i;
                for _ in 0..depth {
                    let pred = (0..k)
                        .find(|&j| transitions[j][next] == 1)
                        .expect("primitive matrices have no source-free symbols");
                    past.push(pred as u8);
                    next = pred;
                }
                past.reverse();
                past
            })
            .collect();
        Self::with_pasts(transitions, theta, pasts)
    }

    pub fn with_pasts(transitions: Vec<Vec<u8>>, theta: f64, pasts: Vec<Vec<u8>>) -> Result<Self> {
        validate_transitions(&transitions)?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Descriptor(format!("theta = {theta} is not in (0,1)")));
        }
        let k = transitions.len();
        if pasts.len() != k {
            return Err(Error::Descriptor(format!("need {k} pasts, got {}", pasts.len())));
        }
        let depth = pasts[0].len();
        let s = Self {
            transitions,
            theta,
            pasts,
        };
        for (i, past) in s.pasts.iter().enumerate() {
            if past.len() != depth {
                return Err(Error::Descriptor("pasts must share one depth".into()));
            }
            let mut full = past.clone();
            full.push(i as u8);
            if !s.is_admissible_word(&full) {
                return Err(Error::Descriptor(format!("past of symbol {i} is not admissible")));
            }
        }
        Ok(s)
    }

    /// The golden-mean shift: two symbols, `11` forbidden.
    pub fn golden_mean(theta: f64, depth: usize) -> Result<Self> {
        Self::new(vec![vec![1, 1], vec![1, 0]], theta, depth)
    }

    pub fn alphabet(&self) -> usize {
        self.transitions.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn past_depth(&self) -> usize {
        self.pasts[0].len()
    }

    pub fn transitions(&self) -> &[Vec<u8>] {
        &self.transitions
    }

    #[inline]
    pub fn allowed(&self, a: u8, b: u8) -> bool {
        self.transitions[a as usize][b as usize] == 1
    }

    pub fn is_admissible_word(&self, word: &[u8]) -> bool {
        word.iter().all(|&s| (s as usize) < self.alphabet()) && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    pub fn is_admissible(&self, seq: &SymbolSeq) -> bool {
        self.is_admissible_word(&seq.symbols)
    }

    /// `σ^n x`: coordinate `i` of the result is coordinate `i + n` of `x`.
    pub fn shift(&self, x: &SymbolSeq, n: u64) -> Result<SymbolSeq> {
        let n = i64::try_from(n).map_err(|_| Error::Domain("shift too large".into()))?;
        Ok(SymbolSeq::new(x.lo - n, x.symbols.clone()))
    }

    /// `θ^s` with `s` the smallest `|i|` where the windows disagree; 0 if they
    /// agree on their common window.
    pub fn distance(&self, x: &SymbolSeq, y: &SymbolSeq) -> f64 {
        let lo = x.lo.max(y.lo);
        let hi = x.hi().min(y.hi());
        let first = (lo..=hi)
            .filter(|&i| x.get(i) != y.get(i))
            .map(|i| i.unsigned_abs())
            .min();
        match first {
            Some(s) => self.theta.powi(s as i32),
            None => 0.0,
        }
    }

    /// `G(σ^shift x)`: the fixed past of its zeroth symbol followed by its
    /// non-negative coordinates.
    pub fn reference(&self, x: &SymbolSeq, shift: i64) -> Result<SymbolSeq> {
        let future = x.slice(shift, x.hi())?;
        let past = &self.pasts[future[0] as usize];
        let mut symbols = Vec::with_capacity(past.len() + future.len());
        symbols.extend_from_slice(past);
        symbols.extend_from_slice(future);
        Ok(SymbolSeq::new(-(past.len() as i64), symbols))
    }

    /// All admissible words of the given length, lexicographic.
    pub fn admissible_words(&self, len: usize) -> Vec<Vec<u8>> {
        let k = self.alphabet() as u8;
        let mut words: Vec<Vec<u8>> = if len == 0 {
            vec![vec![]]
        } else {
            (0..k).map(|s| vec![s]).collect()
        };
        for _ in 1..len {
            words = words
                .into_iter()
                .flat_map(|w| {
                    let last = *w.last().expect("nonempty");
                    (0..k).filter(move |&s| self.allowed(last, s)).map(move |s| {
                        let mut v = w.clone();
                        v.push(s);
                        v
                    })
                })
                .collect();
        }
        words
    }
}

fn validate_transitions(t: &[Vec<u8>]) -> Result<()> {
    let k = t.len();
    if k == 0 || t.iter().any(|row| row.len() != k) {
        return Err(Error::Descriptor(
            "transition matrix must be square and nonempty".into(),
        ));
    }
    if t.iter().flatten().any(|&v| v > 1) {
        return Err(Error::Descriptor("transition matrix must be 0/1".into()));
    }
    if !is_primitive(t) {
        return Err(Error::Descriptor("transition matrix is not primitive".into()));
    }
    Ok(())
}

/// Some power `A^p` with `p ≤ (k-1)^2 + 1` is strictly positive (Wielandt).
fn is_primitive(t: &[Vec<u8>]) -> bool {
    let k = t.len();
    let to_bool = |m: &[Vec<u8>]| {
        m.iter()
            .map(|r| r.iter().map(|&v| v == 1).collect())
            .collect::<Vec<Vec<bool>>>()
    };
    let base = to_bool(t);
    let mut power = base.clone();
    for _ in 0..((k - 1) * (k - 1) + 1) {
        if power.iter().flatten().all(|&v| v) {
            return true;
        }
        power = (0..k)
            .map(|i| (0..k).map(|j| (0..k).any(|l| power[i][l] && base[l][j])).collect())
            .collect();
    }
    power.iter().flatten().all(|&v| v)
}

/// A stationary Markov measure on the subshift.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMeasure {
    stochastic: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl MarkovMeasure {
    /// Parry (maximal entropy) measure: `P_ij = A_ij r_j / (λ r_i)`.
    pub fn parry(sft: &SftSystem) -> Self {
        let k = sft.alphabet();
        let a: Vec<Vec<f64>> = sft
            .transitions
            .iter()
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let (lambda, right) = perron(&a, false);
        let (_, left) = perron(&a, true);
        let stochastic = (0..k)
            .map(|i| (0..k).map(|j| a[i][j] * right[j] / (lambda * right[i])).collect())
            .collect();
        let mut stationary: Vec<f64> = (0..k).map(|i| left[i] * right[i]).collect();
        let total: f64 = stationary.iter().sum();
        stationary.iter_mut().for_each(|v| *v /= total);
        Self { stochastic, stationary }
    }

    pub fn stochastic(&self) -> &[Vec<f64>] {
        &self.stochastic
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Samples coordinates `lo ..= hi` of a stationary sequence.
    pub fn sample(&self, rng: &mut Stream, lo: i64, hi: i64) -> SymbolSeq {
        let len = (hi - lo + 1).max(0) as usize;
        let mut symbols = Vec::with_capacity(len);
        if len > 0 {
            let mut s = draw(&self.stationary, uniform(rng));
            symbols.push(s as u8);
            for _ in 1..len {
                s = draw(&self.stochastic[s], uniform(rng));
                symbols.push(s as u8);
            }
        }
        SymbolSeq::new(lo, symbols)
    }
}

fn draw(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Perron eigenpair by power iteration (transposed when `left`).
fn perron(a: &[Vec<f64>], left: bool) -> (f64, Vec<f64>) {
    let k = a.len();
    let entry = |i: usize, j: usize| if left { a[j][i] } else { a[i][j] };
    let mut v = vec![1.0 / k as f64; k];
    let mut lambda = 1.0;
    for _ in 0..10_000 {
        // (A + I) shares the Perron vector and is aperiodic
        let w: Vec<f64> = (0..k)
            .map(|i| v[i] + (0..k).map(|j| entry(i, j) * v[j]).sum::<f64>())
            .collect();
        let norm: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = w;
        lambda = norm - 1.0;
        if diff < 1e-15 {
            break;
        }
    }
    let av: f64 = (0..k).map(|i| (0..k).map(|j| entry(i, j) * v[j]).sum::<f64>()).sum();
    lambda = if lambda > 0.0 {
        av / v.iter().sum::<f64>()
    } else {
        lambda
    };
    (lambda, v)
}

/// A function of the coordinates `lo ..= hi`, tabulated on admissible words.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    lo: i64,
    hi: i64,
    base: u64,
    table: HashMap<u64, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderEntry {
    pub word: Vec<u8>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderDescriptor {
    pub lo: i64,
    pub hi: i64,
    pub table: Vec<CylinderEntry>,
}

fn encode(word: &[u8], base: u64) -> u64 {
    word.iter().fold(0u64, |acc, &s| acc * base + u64::from(s))
}

impl CylinderFunction {
    pub fn from_fn<F: FnMut(&[u8]) -> f64>(sft: &SftSystem, lo: i64, hi: i64, mut f: F) -> Result<Self> {
        if hi < lo {
            return Err(Error::Descriptor(format!("empty window [{lo}, {hi}]")));
        }
        let base = sft.alphabet() as u64;
        let table = sft
            .admissible_words((hi - lo + 1) as usize)
            .into_iter()
            .map(|w| (encode(&w, base), f(&w)))
            .collect();
        Ok(Self { lo, hi, base, table })
    }

    /// Builds from explicit entries, which must cover exactly the admissible words.
    pub fn from_entries(sft: &SftSystem, d: &CylinderDescriptor) -> Result<Self> {
        let len = (d.hi - d.lo + 1).max(0) as usize;
        let base = sft.alphabet() as u64;
        let mut table = HashMap::new();
        for e in &d.table {
            if e.word.len() != len || !sft.is_admissible_word(&e.word) {
                return Err(Error::Descriptor(format!(
                    "word {:?} is not admissible on the window",
                    e.word
                )));
            }
            table.insert(encode(&e.word, base), e.value);
        }
        let expected = sft.admissible_words(len).len();
        if table.len() != expected {
            return Err(Error::Descriptor(format!(
                "table covers {} of {expected} admissible words",
                table.len()
            )));
        }
        Ok(Self {
            lo: d.lo,
            hi: d.hi,
            base,
            table,
        })
    }

    pub fn constant(sft: &SftSystem, value: f64) -> Self {
        Self::from_fn(sft, 0, 0, |_| value).expect("nonempty window")
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn sup_abs(&self) -> f64 {
        self.table.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at `σ^shift x`.
    pub fn eval(&self, x: &SymbolSeq, shift: i64) -> Result<f64> {
        let word = x.slice(self.lo + shift, self.hi + shift)?;
        self.table
            .get(&encode(word, self.base))
            .copied()
            .ok_or_else(|| Error::Domain(format!("word {word:?} is not admissible")))
    }

    pub fn descriptor(&self) -> CylinderDescriptor {
        let len = (self.hi - self.lo + 1) as usize;
        let mut table: Vec<CylinderEntry> = self
            .table
            .iter()
            .map(|(&code, &value)| {
                let mut word = vec![0u8; len];
                let mut c = code;
                for slot in word.iter_mut().rev() {
                    *slot = (c % self.base) as u8;
                    c /= self.base;
                }
                CylinderEntry { word, value }
            })
            .collect();
        table.sort_by(|a, b| a.word.cmp(&b.word));
        CylinderDescriptor {
            lo: self.lo,
            hi: self.hi,
            table,
        }
    }
}

/// Raised when the truncation `K` drops nonvanishing terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationWarning {
    pub needed: usize,
    pub truncation: usize,
    /// Bound on the dropped terms: `2 Σ sup|φ*|` over them.
    pub bound: f64,
}

/// Output of [`sinai_future`].
#[derive(Debug, Clone)]
pub struct SinaiFuture {
    /// Future-only tables `f_1, ..., f_n` on windows `[0, H_k]`.
    pub f: Vec<CylinderFunction>,
    /// `v_1, ..., v_{n+1}` as cylinder functions on their full windows.
    pub v: Vec<CylinderFunction>,
    /// Largest disagreement of `f_k` across words sharing their future part.
    pub future_discrepancy: f64,
    /// `sup|f_k| ≤ sup|φ*_k| + 2 Σ (terms reaching past coordinate 0)`.
    pub sup_bounds: Vec<f64>,
    pub warning: Option<TruncationWarning>,
}

/// Evaluator for `v_n` and `f_n` directly on two-sided windows.
pub struct SinaiTerms<'a> {
    sft: &'a SftSystem,
    phis: &'a [CylinderFunction],
    truncation: usize,
}

impl<'a> SinaiTerms<'a> {
    /// `phis[k - 1]` is `φ*_k`.
    pub fn new(sft: &'a SftSystem, phis: &'a [CylinderFunction], truncation: usize) -> Self {
        Self { sft, phis, truncation }
    }

    fn phi(&self, k: usize) -> Result<&CylinderFunction> {
        k.checked_sub(1).and_then(|i| self.phis.get(i)).ok_or(Error::Length {
            expected: k,
            got: self.phis.len(),
        })
    }

    /// `v_n(σ^shift x)`.
    pub fn v(&self, n: usize, x: &SymbolSeq, shift: i64) -> Result<f64> {
        let g = self.sft.reference(x, shift)?;
        let mut total = 0.0;
        for m in 0..=self.truncation {
            let phi = self.phi(n + m)?;
            // terms whose window stays in the future cancel exactly
            if phi.lo + m as i64 >= 0 {
                continue;
            }
            total += phi.eval(x, shift + m as i64)? - phi.eval(&g, m as i64)?;
        }
        Ok(total)
    }

    /// `f_n(σ^shift x) = φ*_n − v_n + v_{n+1} ∘ σ`.
    pub fn f(&self, n: usize, x: &SymbolSeq, shift: i64) -> Result<f64> {
        Ok(self.phi(n)?.eval(x, shift)? - self.v(n, x, shift)? + self.v(n + 1, x, shift + 1)?)
    }

    /// Window read by `v_n` (including the zeroth coordinate that selects G's past).
    fn v_window(&self, n: usize) -> Result<(i64, i64)> {
        let (mut lo, mut hi) = (0i64, 0i64);
        for m in 0..=self.truncation {
            let phi = self.phi(n + m)?;
            if phi.lo + m as i64 >= 0 {
                continue;
            }
            lo = lo.min(phi.lo + m as i64);
            hi = hi.max(phi.hi + m as i64);
        }
        Ok((lo, hi))
    }

    fn f_window(&self, n: usize) -> Result<(i64, i64)> {
        let (plo, phi_hi) = self.phi(n)?.window();
        let (vlo, vhi) = self.v_window(n)?;
        let (wlo, whi) = self.v_window(n + 1)?;
        Ok((plo.min(vlo).min(wlo + 1).min(0), phi_hi.max(vhi).max(whi + 1).max(0)))
    }

    /// Terms `m > K` that would not cancel, among the supplied observables.
    fn truncation_gap(&self, n: usize) -> (usize, f64) {
        let mut needed = 0;
        let mut bound = 0.0;
        for (i, phi) in self.phis.iter().enumerate().skip(n + self.truncation) {
            let m = i + 1 - n;
            if phi.lo + (m as i64) < 0 {
                needed = needed.max(m);
                bound += 2.0 * phi.sup_abs();
            }
        }
        (needed, bound)
    }
}

/// Builds the future-only observables `f_1..f_n` and the transfer terms
/// `v_1..v_{n+1}`. Requires `φ*_1 .. φ*_{n+1+K}`.
pub fn sinai_future(sft: &SftSystem, phis: &[CylinderFunction], n: usize, truncation: usize) -> Result<SinaiFuture> {
    let needed_len = n + 1 + truncation;
    if phis.len() < needed_len {
        return Err(Error::Length {
            expected: needed_len,
            got: phis.len(),
        });
    }
    let depth = sft.past_depth() as i64;
    if let Some(phi) = phis.iter().find(|p| p.lo < -depth) {
        return Err(Error::Domain(format!(
            "observable window starts at {} but fixed pasts only reach -{depth}",
            phi.lo
        )));
    }
    let terms = SinaiTerms::new(sft, phis, truncation);

    let mut warning: Option<TruncationWarning> = None;
    for k in 1..=n + 1 {
        let (needed, bound) = terms.truncation_gap(k);
        if bound > 0.0 {
            let w = warning.get_or_insert(TruncationWarning {
                needed,
                truncation,
                bound: 0.0,
            });
            w.needed = w.needed.max(needed);
            w.bound = w.bound.max(bound);
        }
    }

    let v = (1..=n + 1)
        .map(|k| {
            let (lo, hi) = terms.v_window(k)?;
            tabulate(sft, lo, hi, |x| terms.v(k, x, 0))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut f = Vec::with_capacity(n);
    let mut discrepancy = 0.0f64;
    let mut sup_bounds = Vec::with_capacity(n);
    for k in 1..=n {
        let (lo, hi) = terms.f_window(k)?;
        let full = tabulate(sft, lo, hi, |x| terms.f(k, x, 0))?;
        let mut future: HashMap<Vec<u8>, f64> = HashMap::new();
        for entry in full.descriptor().table {
            let tail = entry.word[(-lo) as usize..].to_vec();
            match future.get(&tail) {
                Some(&prev) => discrepancy = discrepancy.max((prev - entry.value).abs()),
                None => {
                    future.insert(tail, entry.value);
                }
            }
        }
        let table = CylinderFunction::from_fn(sft, 0, hi, |w| future[w])?;
        let mut bound = phis[k - 1].sup_abs();
        for (m, phi) in phis
            .iter()
            .enumerate()
            .skip(k)
            .take(truncation + 1)
            .map(|(i, p)| (i + 1 - k, p))
        {
            if phi.lo + (m as i64) - 1 < 0 {
                bound += 2.0 * phi.sup_abs();
            }
        }
        sup_bounds.push(bound);
        f.push(table);
    }

    Ok(SinaiFuture {
        f,
        v,
        future_discrepancy: discrepancy,
        sup_bounds,
        warning,
    })
}

/// Tabulates `g` over admissible words on `[lo, hi]`.
fn tabulate<G>(sft: &SftSystem, lo: i64, hi: i64, mut g: G) -> Result<CylinderFunction>
where
    G: FnMut(&SymbolSeq) -> Result<f64>,
{
    let mut err = None;
    let table = CylinderFunction::from_fn(sft, lo, hi, |w| {
        g(&SymbolSeq::new(lo, w.to_vec())).unwrap_or_else(|e| {
            err.get_or_insert(e);
            f64::NAN
        })
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// Residual of `Σ_{k=1}^n f_k∘σ^k − Σ φ*_k∘σ^k = v_{n+1}∘σ^{n+1} − v_1∘σ` at `x`.
pub fn telescoping_residual(
    construction: &SinaiFuture,
    phis: &[CylinderFunction],
    x: &SymbolSeq,
    n: usize,
) -> Result<f64> {
    let mut lhs = 0.0;
    for k in 1..=n {
        lhs += construction.f[k - 1].eval(x, k as i64)? - phis[k - 1].eval(x, k as i64)?;
    }
    let rhs = construction.v[n].eval(x, n as i64 + 1)? - construction.v[0].eval(x, 1)?;
    Ok((lhs - rhs).abs())
}

/// Smallest window `[lo, hi]` a sequence needs for [`telescoping_residual`].
pub fn telescoping_window(construction: &SinaiFuture, phis: &[CylinderFunction], n: usize) -> (i64, i64) {
    let mut lo = 0i64;
    let mut hi = 0i64;
    let mut cover = |(a, b): (i64, i64), shift: i64| {
        lo = lo.min(a + shift);
        hi = hi.max(b + shift);
    };
    for k in 1..=n {
        cover(construction.f[k - 1].window(), k as i64);
        cover(phis[k - 1].window(), k as i64);
    }
    cover(construction.v[n].window(), n as i64 + 1);
    cover(construction.v[0].window(), 1);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_substream;

    fn golden() -> SftSystem {
        SftSystem::golden_mean(0.5, 8).unwrap()
    }

    #[test]
    fn distance_examples() {
        let s = golden();
        let x = SymbolSeq::new(-4, vec![0, 1, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(s.distance(&x, &x), 0.0);
        let mut y = x.clone();
        y.symbols[4] = 0; // coordinate 0
        assert_eq!(s.distance(&x, &y), 1.0);
        let mut z = x.clone();
        z.symbols[1] = 0; // coordinate -3
        assert_eq!(s.distance(&x, &z), 0.125);
    }

    #[test]
    fn rejects_non_primitive_and_bad_pasts() {
        assert!(SftSystem::new(vec![vec![0, 1], vec![1, 0]], 0.5, 4).is_err());
        assert!(SftSystem::new(vec![vec![1, 0], vec![0, 1]], 0.5, 4).is_err());
        assert!(SftSystem::with_pasts(vec![vec![1, 1], vec![1, 0]], 0.5, vec![vec![0, 0], vec![1, 1]]).is_err());
        assert!(SftSystem::golden_mean(1.5, 4).is_err());
    }

    #[test]
    fn canonical_pasts_are_admissible() {
        let s = golden();
        for i in 0..2u8 {
            let g = s.reference(&SymbolSeq::new(0, vec![i, 0]), 0).unwrap();
            assert!(s.is_admissible(&g));
            assert_eq!(g.get(0), Some(i));
        }
    }

    #[test]
    fn parry_measure_of_golden_mean() {
        let m = MarkovMeasure::parry(&golden());
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((m.stochastic()[0][0] - 1.0 / phi).abs() < 1e-12);
        assert!((m.stochastic()[1][0] - 1.0).abs() < 1e-12);
        let p0 = phi * phi / (1.0 + phi * phi);
        assert!((m.stationary()[0] - p0).abs() < 1e-12);
    }

    #[test]
    fn sampled_sequences_are_admissible() {
        let s = golden();
        let m = MarkovMeasure::parry(&s);
        let mut rng = derive_substream(1, 0).unwrap();
        for _ in 0..100 {
            assert!(s.is_admissible(&m.sample(&mut rng, -10, 30)));
        }
    }

    #[test]
    fn cylinder_table_must_cover_admissible_words() {
        let s = golden();
        let d = CylinderDescriptor {
            lo: 0,
            hi: 1,
            table: vec![
                CylinderEntry {
                    word: vec![0, 0],
                    value: 1.0,
                },
                CylinderEntry {
                    word: vec![0, 1],
                    value: 2.0,
                },
            ],
        };
        assert!(CylinderFunction::from_entries(&s, &d).is_err());
        let mut full = d.clone();
        full.table.push(CylinderEntry {
            word: vec![1, 0],
            value: 3.0,
        });
        let f = CylinderFunction::from_entries(&s, &full).unwrap();
        assert_eq!(f.descriptor(), full);
        full.table.push(CylinderEntry {
            word: vec![1, 1],
            value: 4.0,
        });
        assert!(CylinderFunction::from_entries(&s, &full).is_err());
    }

    #[test]
    fn future_observables_are_unchanged() {
        let s = golden();
        let phis: Vec<_> = (0..6)
            .map(|k| {
                CylinderFunction::from_fn(&s, 0, 1, |w| f64::from(w[0]) + 0.25 * f64::from(w[1]) * k as f64).unwrap()
            })
            .collect();
        let out = sinai_future(&s, &phis, 3, 2).unwrap();
        assert!(out.warning.is_none());
        for ((f, phi), v) in out.f.iter().zip(&phis).zip(&out.v) {
            assert_eq!(f, phi);
            assert!(v.descriptor().table.iter().all(|e| e.value == 0.0));
        }
    }

    #[test]
    fn constant_observable_stays_constant() {
        let s = golden();
        let phis: Vec<_> = (0..8)
            .map(|_| CylinderFunction::from_fn(&s, -2, 0, |_| 0.75).unwrap())
            .collect();
        let out = sinai_future(&s, &phis, 4, 3).unwrap();
        for f in &out.f {
            assert!(f.descriptor().table.iter().all(|e| e.value == 0.75));
        }
    }

    #[test]
    fn two_sided_window_reduces_to_single_term() {
        let s = golden();
        let phis: Vec<_> = (0..8)
            .map(|k| {
                CylinderFunction::from_fn(&s, -1, 0, |w| {
                    f64::from(w[0]) * 0.5 - f64::from(w[1]) * 0.125 * (k + 1) as f64
                })
                .unwrap()
            })
            .collect();
        let out = sinai_future(&s, &phis, 4, 1).unwrap();
        assert!(out.warning.is_none());
        assert_eq!(out.future_discrepancy, 0.0);
        // v_n only has the m = 0 term, so its window is [-1, 0]
        assert_eq!(out.v[0].window(), (-1, 0));
        let m = MarkovMeasure::parry(&s);
        let mut rng = derive_substream(3, 0).unwrap();
        let (lo, hi) = telescoping_window(&out, &phis, 4);
        for _ in 0..200 {
            let x = m.sample(&mut rng, lo, hi);
            assert!(telescoping_residual(&out, &phis, &x, 4).unwrap() <= 1e-12);
        }
        for (f, b) in out.f.iter().zip(&out.sup_bounds) {
            assert!(f.sup_abs() <= *b + 1e-12);
        }
    }

    #[test]
    fn short_truncation_warns() {
        let s = golden();
        let phis: Vec<_> = (0..8)
            .map(|_| CylinderFunction::from_fn(&s, -3, 0, |w| f64::from(w[0])).unwrap())
            .collect();
        let out = sinai_future(&s, &phis, 2, 1).unwrap();
        let w = out.warning.expect("truncation at K = 1 drops the m = 2 term");
        assert_eq!(w.needed, 2);
        assert!(w.bound > 0.0);
        assert!(sinai_future(&s, &phis, 2, 3).unwrap().warning.is_none());
    }

    #[test]
    fn too_few_observables() {
        let s = golden();
        let phis = vec![CylinderFunction::constant(&s, 1.0); 3];
        assert!(matches!(sinai_future(&s, &phis, 3, 1), Err(Error::Length { .. })));
    }
}
