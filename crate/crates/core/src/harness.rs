//! Experiment configuration, dispatch and reporting.
//!
//! Every experiment splits into per-point tasks seeded by
//! `derive_substream(seed, index)`; results are gathered in index order, so a
//! report does not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, FieldError, Result};
use crate::hitstats::{map_points, short_returns_profile, SbcSink, SeriesContext, Totals};
use crate::limits::{count_tv_distance, empirical_charfn, ks_statistic, EmpiricalDistribution, LimitLaw};
use crate::measures::{check_compatible, sample_point, DensityMeasure};
use crate::numeric::{mean, sample_variance};
use crate::radii::{Mode, RadiusSchedule, Sequence};
use crate::rng::{derive_substream, role_seed, uniform};
use crate::symbolic::{
    sinai_future, telescoping_residual, telescoping_window, CylinderFunction, MarkovMeasure, SftSystem,
};
use crate::systems::{MapSystem, Metric, Point};
use crate::transfer::{build_ulam, green_kubo_variance, martingale_decomposition, Bins};
use crate::variance::{variance_ratio_report, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CltRecurrence,
    CltTarget,
    VarianceReport,
    ShortReturns,
    PoissonCount,
    TransferDiagnostics,
    SinaiCheck,
    SbcRatio,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::CltRecurrence,
        ExperimentKind::CltTarget,
        ExperimentKind::VarianceReport,
        ExperimentKind::ShortReturns,
        ExperimentKind::PoissonCount,
        ExperimentKind::TransferDiagnostics,
        ExperimentKind::SinaiCheck,
        ExperimentKind::SbcRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CltRecurrence => "clt-recurrence",
            ExperimentKind::CltTarget => "clt-target",
            ExperimentKind::VarianceReport => "variance-report",
            ExperimentKind::ShortReturns => "short-returns",
            ExperimentKind::PoissonCount => "poisson-count",
            ExperimentKind::TransferDiagnostics => "transfer-diagnostics",
            ExperimentKind::SinaiCheck => "sinai-check",
            ExperimentKind::SbcRatio => "sbc-ratio",
        }
    }

    fn needs_measure(self) -> bool {
        self != ExperimentKind::SinaiCheck
    }

    fn needs_schedule(self) -> bool {
        matches!(
            self,
            ExperimentKind::CltRecurrence
                | ExperimentKind::CltTarget
                | ExperimentKind::VarianceReport
                | ExperimentKind::SbcRatio
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Descriptor(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Directory for `report.json` and the CSV series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write `plot.py` next to the CSVs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plot_script: bool,
}

/// Optional per-kind settings; unset fields take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// `standard-normal` or `averaged-gaussian`; by default the latter only
    /// for explicit radii under a non-constant density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    /// Default 0.06.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_tol: Option<f64>,
    /// Default `[0.5, 1, 2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<f64>>,
    /// Default 0.05.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charfn_tol: Option<f64>,
    /// Target center; drawn from the measure when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    /// Variance grid, default `[n]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    /// Default 0.85.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_min: Option<f64>,
    /// Default 0.1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_tol: Option<f64>,
    /// Grid points where the target integral is asserted, default all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_ns: Option<Vec<usize>>,
    /// Default `[0.05, 0.01]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Default 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<usize>,
    /// Default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Default 0.1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv_tol: Option<f64>,
    /// Uniform bin count, default 64.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Markov refinement depth; overrides `bins`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
    /// Refuse misaligned bins, default false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    /// Green–Kubo lags, default 200.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Random observable sequences for the martingale check, default `samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Sinai truncation `K`, default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    /// Default 0.15.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbc_tol: Option<f64>,
    /// Default 0.8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbc_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub system: MapSystem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<DensityMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<RadiusSchedule>,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub params: Params,
}

const FIELDS: [&str; 9] = [
    "kind", "system", "measure", "schedule", "n", "samples", "seed", "outputs", "params",
];

fn field_error(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

fn decode<T: serde::de::DeserializeOwned>(
    obj: &serde_json::Map<String, Value>,
    field: &str,
    required: bool,
    errors: &mut Vec<FieldError>,
) -> Option<T> {
    match obj.get(field) {
        None | Some(Value::Null) => {
            if required {
                errors.push(field_error(field, "missing"));
            }
            None
        }
        Some(v) => match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                errors.push(field_error(field, e.to_string()));
                None
            }
        },
    }
}

impl ExperimentConfig {
    /// Parses and validates, collecting every offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Validation(vec![field_error("(root)", "expected a JSON object")]))?;
        let mut errors: Vec<FieldError> = obj
            .keys()
            .filter(|k| !FIELDS.contains(&k.as_str()))
            .map(|k| field_error(k, "unknown field"))
            .collect();
        let kind = decode(obj, "kind", true, &mut errors);
        let system = decode(obj, "system", true, &mut errors);
        let measure = decode(obj, "measure", false, &mut errors);
        let schedule = decode(obj, "schedule", false, &mut errors);
        let n = decode(obj, "n", true, &mut errors);
        let samples = decode(obj, "samples", true, &mut errors);
        let seed = decode(obj, "seed", true, &mut errors);
        let outputs = decode(obj, "outputs", false, &mut errors).unwrap_or_default();
        let params = decode(obj, "params", false, &mut errors).unwrap_or_default();
        match (kind, system, n, samples, seed) {
            (Some(kind), Some(system), Some(n), Some(samples), Some(seed)) if errors.is_empty() => {
                let config = ExperimentConfig {
                    kind,
                    system,
                    measure,
                    schedule,
                    n,
                    samples,
                    seed,
                    outputs,
                    params,
                };
                config.validate()?;
                Ok(config)
            }
            _ => Err(Error::Validation(errors)),
        }
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let kind = self.kind;
        if self.n == 0 {
            errors.push(field_error("n", "must be at least 1"));
        }
        if self.samples < 2 {
            errors.push(field_error("samples", format!("need at least 2, got {}", self.samples)));
        }
        let shift = matches!(self.system, MapSystem::Shift(_));
        if kind == ExperimentKind::SinaiCheck && !shift {
            errors.push(field_error("system", "sinai-check needs a shift of finite type"));
        }
        if kind != ExperimentKind::SinaiCheck && shift {
            errors.push(field_error(
                "system",
                format!("{kind} needs a map on the circle, interval or torus"),
            ));
        }
        if kind == ExperimentKind::TransferDiagnostics && self.system.as_piecewise().is_none() {
            errors.push(field_error(
                "system",
                "transfer-diagnostics needs a piecewise-affine map",
            ));
        }
        match (&self.measure, kind.needs_measure()) {
            (None, true) => errors.push(field_error("measure", format!("{kind} needs a measure"))),
            (Some(m), true) if !shift => {
                if let Err(e) = check_compatible(&self.system, m) {
                    errors.push(field_error("measure", e.to_string()));
                }
            }
            _ => {}
        }
        match (&self.schedule, kind.needs_schedule()) {
            (None, true) => errors.push(field_error("schedule", format!("{kind} needs a radius schedule"))),
            (Some(s), _) if kind == ExperimentKind::SbcRatio && s.is_implicit() => {
                errors.push(field_error("schedule", "sbc-ratio needs explicit radii"));
            }
            _ => {}
        }
        let p = &self.params;
        if let Some(law) = &p.law {
            if law != "standard-normal" && law != "averaged-gaussian" {
                errors.push(field_error("params.law", format!("unknown law {law:?}")));
            }
        }
        if let Some(ns) = &p.ns {
            if ns.is_empty() || ns.contains(&0) {
                errors.push(field_error("params.ns", "need a nonempty grid of positive n"));
            }
        }
        if p.outer.is_some_and(|v| v < 2) {
            errors.push(field_error("params.outer", "need at least 2"));
        }
        if p.inner.is_some_and(|v| v < 2) {
            errors.push(field_error("params.inner", "need at least 2"));
        }
        if p.radii
            .as_ref()
            .is_some_and(|r| r.is_empty() || r.iter().any(|&v| !(v > 0.0)))
        {
            errors.push(field_error("params.radii", "need positive radii"));
        }
        if p.l_max == Some(0) {
            errors.push(field_error("params.l_max", "must be at least 1"));
        }
        if p.tau.is_some_and(|t| !(t > 0.0)) {
            errors.push(field_error("params.tau", "must be positive"));
        }
        if p.bins.is_some_and(|b| b < 2) {
            errors.push(field_error("params.bins", "need at least 2"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    fn measure(&self) -> &DensityMeasure {
        self.measure.as_ref().expect("validated")
    }

    fn schedule(&self) -> &RadiusSchedule {
        self.schedule.as_ref().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tolerance {
    AtMost {
        bound: f64,
    },
    AtLeast {
        bound: f64,
    },
    Within {
        reference: f64,
        bound: f64,
    },
    /// `|value − reference| ≤ sigmas · se`
    WithinSe {
        reference: f64,
        sigmas: f64,
    },
}

impl Tolerance {
    pub fn accepts(&self, value: f64, se: f64) -> bool {
        match *self {
            Tolerance::AtMost { bound } => value <= bound,
            Tolerance::AtLeast { bound } => value >= bound,
            Tolerance::Within { reference, bound } => (value - reference).abs() <= bound,
            Tolerance::WithinSe { reference, sigmas } => (value - reference).abs() <= sigmas * se,
        }
    }
}

/// An asserted quantity. `se` is 0 for exact computations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub se: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl MetricResult {
    pub fn new(name: impl Into<String>, value: f64, se: f64, tolerance: Tolerance) -> Self {
        Self {
            name: name.into(),
            value,
            se,
            tolerance,
            pass: tolerance.accepts(value, se),
        }
    }
}

/// A CSV series.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricResult>,
    /// Unasserted diagnostics.
    pub values: BTreeMap<String, f64>,
    pub pass: bool,
    /// Kept out of the JSON so reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub tables: Vec<Table>,
    /// Extra JSON files, written as `<name>.json`.
    #[serde(skip)]
    pub documents: Vec<(String, Value)>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `report.json`, one CSV per table and optionally `plot.py`.
    pub fn write_outputs(&self, dir: &Path, plot_script: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("report.json");
        fs::write(&path, self.to_json()?)?;
        written.push(path);
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            t.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
        for (name, doc) in &self.documents {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(doc)? + "\n")?;
            written.push(path);
        }
        if plot_script {
            let path = dir.join("plot.py");
            fs::write(&path, self.plot_script())?;
            written.push(path);
        }
        Ok(written)
    }

    fn plot_script(&self) -> String {
        let mut s = String::from(
            "import csv\nimport matplotlib.pyplot as plt\n\n\
             def load(name):\n    with open(name) as f:\n        rows = list(csv.reader(f))\n    \
             return rows[0], [[float(v) for v in r] for r in rows[1:]]\n",
        );
        for t in &self.tables {
            s.push_str(&format!(
                "\nhead, rows = load(\"{name}.csv\")\nplt.figure()\nfor c in range(1, len(head)):\n    \
                 plt.plot([r[0] for r in rows], [r[c] for r in rows], \".\", label=head[c])\n\
                 plt.xlabel(head[0])\nplt.title(\"{kind}: {name}\")\nplt.legend()\nplt.savefig(\"{name}.png\")\n",
                name = t.name,
                kind = self.config.kind,
            ));
        }
        s
    }
}

struct Outcome {
    metrics: Vec<MetricResult>,
    values: BTreeMap<String, f64>,
    tables: Vec<Table>,
    documents: Vec<(String, Value)>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            metrics: Vec::new(),
            values: BTreeMap::new(),
            tables: Vec::new(),
            documents: Vec::new(),
        }
    }

    fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.into(), v);
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let outcome = match config.kind {
        ExperimentKind::CltRecurrence => clt(config, false),
        ExperimentKind::CltTarget => clt(config, true),
        ExperimentKind::VarianceReport => variance_report(config),
        ExperimentKind::ShortReturns => short_returns(config),
        ExperimentKind::PoissonCount => poisson_count(config),
        ExperimentKind::TransferDiagnostics => transfer_diagnostics(config),
        ExperimentKind::SinaiCheck => sinai_check(config),
        ExperimentKind::SbcRatio => sbc_ratio(config),
    }
    .map_err(|e| e.context(format!("{} experiment", config.kind)))?;
    Ok(RunReport {
        config: config.clone(),
        pass: outcome.metrics.iter().all(|m| m.pass),
        metrics: outcome.metrics,
        values: outcome.values,
        wall_time: start.elapsed(),
        tables: outcome.tables,
        documents: outcome.documents,
    })
}

/// Runs on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn run_with_jobs(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

fn std_error_of(values: &[f64]) -> f64 {
    (sample_variance(values) / values.len() as f64).sqrt()
}

/// Standard deviation of the Kolmogorov distribution, scaled by `1/√N`.
fn ks_se(count: usize) -> f64 {
    const KOLMOGOROV_SD: f64 = 0.260_318;
    KOLMOGOROV_SD / (count as f64).sqrt()
}

fn clt(config: &ExperimentConfig, target: bool) -> Result<Outcome> {
    let (system, measure, schedule) = (&config.system, config.measure(), config.schedule());
    let ctx = SeriesContext::new(system, measure, schedule, config.n)?;
    let mut out = Outcome::new();
    let totals: Vec<(u64, f64)> = if target {
        let y = match config.params.y {
            Some(y) => Point::real(y)?,
            None => sample_point(system, measure, role_seed(config.seed, "target"), 0)?,
        };
        out.value("y", y.coords()?[0]);
        let tgt = ctx.target(&y)?;
        map_points(config.samples, |i| {
            let x = sample_point(system, measure, config.seed, i)?;
            let mut t = Totals::default();
            ctx.target_into(&tgt, &x, &mut t)?;
            Ok((t.hits, t.mass.value()))
        })?
    } else {
        map_points(config.samples, |i| {
            let x = sample_point(system, measure, config.seed, i)?;
            let mut t = Totals::default();
            ctx.recurrence_into(&x, &mut t)?;
            Ok((t.hits, t.mass.value()))
        })?
    };
    let centered: Vec<f64> = totals.iter().map(|&(h, m)| h as f64 - m).collect();
    let var = sample_variance(&centered);
    if !(var > 0.0) {
        return Err(Error::Domain(
            "normalized sums are degenerate: zero sample variance".into(),
        ));
    }
    let sd = var.sqrt();
    let z: Vec<f64> = centered.iter().map(|c| c / sd).collect();
    let averaged = match config.params.law.as_deref() {
        Some(l) => l == "averaged-gaussian",
        None => !target && schedule.mode == Mode::Explicit && measure.pieces().is_none_or(|p| p.len() > 1),
    };
    let law = if averaged {
        LimitLaw::averaged_gaussian(measure)?
    } else {
        LimitLaw::standard_normal()
    };
    out.value("sigma_hat2", var);
    out.value(
        "mean_hits",
        mean(&totals.iter().map(|t| t.0 as f64).collect::<Vec<_>>()),
    );
    out.value("mean_expected", mean(&totals.iter().map(|t| t.1).collect::<Vec<_>>()));
    out.value("averaged_law", f64::from(u8::from(averaged)));

    let emp = EmpiricalDistribution::new(z.clone())?;
    let ks = ks_statistic(&emp, &law);
    out.metrics.push(MetricResult::new(
        "ks",
        ks,
        ks_se(z.len()),
        Tolerance::AtMost {
            bound: config.params.ks_tol.unwrap_or(0.06),
        },
    ));
    let ts = config.params.t_values.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    for t in ts {
        let e = empirical_charfn(&emp, t);
        let dev = (e - law.charfn(t)).norm();
        let cos: Vec<f64> = z.iter().map(|v| (t * v).cos()).collect();
        let sin: Vec<f64> = z.iter().map(|v| (t * v).sin()).collect();
        let se = std_error_of(&cos).hypot(std_error_of(&sin));
        out.metrics.push(MetricResult::new(
            format!("charfn_deviation_t{t}"),
            dev,
            se,
            Tolerance::AtMost {
                bound: config.params.charfn_tol.unwrap_or(0.05),
            },
        ));
    }

    let mut sums = Table::new("sums", &["point", "hits", "expected", "normalized"]);
    for (i, (&(h, m), zv)) in totals.iter().zip(&z).enumerate() {
        sums.rows.push(vec![i as f64, h as f64, m, *zv]);
    }
    let mut cdf = Table::new("cdf", &["t", "empirical", "theoretical"]);
    for &v in emp.values() {
        cdf.rows.push(vec![v, emp.cdf(v), law.cdf(v)]);
    }
    out.tables.push(sums);
    out.tables.push(cdf);
    Ok(out)
}

fn variance_report(config: &ExperimentConfig) -> Result<Outcome> {
    let p = &config.params;
    let ns = p.ns.clone().unwrap_or_else(|| vec![config.n]);
    let sampling = Sampling {
        sigma: config.samples,
        outer: p.outer.unwrap_or(100),
        inner: p.inner.unwrap_or((config.samples / 100).max(2)),
    };
    let report = variance_ratio_report(
        &config.system,
        config.measure(),
        config.schedule(),
        &ns,
        sampling,
        config.seed,
    )?;
    let mut out = Outcome::new();
    let ratio_min = p.ratio_min.unwrap_or(0.85);
    let integral_tol = p.integral_tol.unwrap_or(0.1);
    let mut table = Table::new(
        "variance",
        &[
            "n",
            "sigma2",
            "sigma2_se",
            "expected_mass",
            "ratio",
            "ratio_se",
            "target_integral",
            "target_integral_se",
        ],
    );
    for row in &report.rows {
        let ratio = row.ratio.unwrap_or(f64::NAN);
        let ratio_se = row.ratio_se.unwrap_or(f64::NAN);
        out.metrics.push(MetricResult::new(
            format!("variance_ratio_n{}", row.n),
            ratio,
            ratio_se,
            Tolerance::AtLeast { bound: ratio_min },
        ));
        let integral = row.target_integral.unwrap_or(f64::NAN);
        let integral_se = row.target_integral_se.unwrap_or(f64::NAN);
        if p.integral_ns.as_ref().is_none_or(|v| v.contains(&row.n)) {
            out.metrics.push(MetricResult::new(
                format!("target_integral_n{}", row.n),
                integral,
                integral_se,
                Tolerance::Within {
                    reference: 1.0,
                    bound: integral_tol,
                },
            ));
        }
        table.rows.push(vec![
            row.n as f64,
            row.sigma2.estimate,
            row.sigma2.se,
            row.expected_mass,
            ratio,
            ratio_se,
            integral,
            integral_se,
        ]);
    }
    out.tables.push(table);
    Ok(out)
}

fn short_returns(config: &ExperimentConfig) -> Result<Outcome> {
    let (system, measure) = (&config.system, config.measure());
    let metric = check_compatible(system, measure)?;
    let radii = config.params.radii.clone().unwrap_or_else(|| vec![0.05, 0.01]);
    let l_max = config.params.l_max.unwrap_or(10);
    // closed forms hold for the doubling map under Lebesgue measure
    let closed_form = *system == MapSystem::doubling() && measure.is_lebesgue();
    let mut out = Outcome::new();
    let mut table = Table::new(
        "short_returns",
        &["r", "l", "p_close", "p_close_se", "overlap", "overlap_se"],
    );
    for (idx, &r) in radii.iter().enumerate() {
        let seed = role_seed(config.seed, &format!("radius-{idx}"));
        let rows = short_returns_profile(system, measure, r, l_max, config.samples, seed)?;
        let mass = measure.mean_ball_measure(metric, r)?;
        out.value(&format!("mean_ball_measure_r{r}"), mass);
        for row in rows {
            let tag = format!("r{r}_l{}", row.l);
            if closed_form {
                out.metrics.push(MetricResult::new(
                    format!("p_close_{tag}"),
                    row.p_close,
                    row.p_close_se,
                    Tolerance::WithinSe {
                        reference: 4.0 * r,
                        sigmas: 3.0,
                    },
                ));
                out.metrics.push(MetricResult::new(
                    format!("overlap_{tag}"),
                    row.overlap,
                    row.overlap_se,
                    Tolerance::WithinSe {
                        reference: 4.0 * r * r,
                        sigmas: 3.0,
                    },
                ));
            }
            out.metrics.push(MetricResult::new(
                format!("overlap_maximal_bound_{tag}"),
                row.overlap,
                row.overlap_se,
                Tolerance::AtMost { bound: mass.powf(1.5) },
            ));
            table.rows.push(vec![
                r,
                row.l as f64,
                row.p_close,
                row.p_close_se,
                row.overlap,
                row.overlap_se,
            ]);
        }
    }
    out.tables.push(table);
    Ok(out)
}

fn poisson_count(config: &ExperimentConfig) -> Result<Outcome> {
    let (system, measure) = (&config.system, config.measure());
    let tau = config.params.tau.unwrap_or(1.0);
    let r = tau / (2.0 * config.n as f64);
    let schedule = RadiusSchedule::explicit(Sequence::constant(r));
    let ctx = SeriesContext::new(system, measure, &schedule, config.n)?;
    let counts = map_points(config.samples, |i| {
        let x = sample_point(system, measure, config.seed, i)?;
        let mut t = Totals::default();
        ctx.recurrence_into(&x, &mut t)?;
        Ok(t.hits)
    })?;
    let law = LimitLaw::averaged_poisson(measure, tau)?;
    let tv = count_tv_distance(&counts, |k| law.pmf(k))?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let total = counts.len() as f64;
    let mut table = Table::new("counts", &["k", "empirical", "theoretical"]);
    let mut se = 0.0;
    for k in 0..=max + 2 {
        let f = counts.iter().filter(|&&c| c == k).count() as f64 / total;
        se += 0.5 * (f * (1.0 - f) / total).sqrt();
        table.rows.push(vec![k as f64, f, law.pmf(k)]);
    }
    let mut out = Outcome::new();
    out.value("radius", r);
    out.value(
        "mean_count",
        mean(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
    );
    out.metrics.push(MetricResult::new(
        "count_tv_distance",
        tv,
        se,
        Tolerance::AtMost {
            bound: config.params.tv_tol.unwrap_or(0.1),
        },
    ));
    out.tables.push(table);
    Ok(out)
}

fn transfer_diagnostics(config: &ExperimentConfig) -> Result<Outcome> {
    let (system, measure) = (&config.system, config.measure());
    let p = &config.params;
    let bins = match p.refine {
        Some(depth) => Bins::Refined(depth),
        None => Bins::Uniform(p.bins.unwrap_or(64)),
    };
    let op = build_ulam(system, measure, &bins, p.exact.unwrap_or(false))?;
    let mut out = Outcome::new();
    out.value("bins", op.len() as f64);
    out.value("exact", f64::from(u8::from(op.is_exact())));
    out.metrics.push(MetricResult::new(
        "row_sum_error",
        op.row_sum_error(),
        0.0,
        Tolerance::AtMost { bound: 1e-12 },
    ));
    let spectrum = op.spectrum()?;
    out.value("second_eigenvalue_modulus", spectrum.second_modulus);
    out.value("nilpotent", f64::from(u8::from(spectrum.nilpotent)));

    let density = op.stationary_density()?;
    let mids: Vec<f64> = op.boundaries().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut stationary = Table::new("stationary", &["lo", "hi", "ulam_density", "declared_density"]);
    let mut worst = 0.0f64;
    for ((w, d), x) in op.boundaries().windows(2).zip(&density).zip(&mids) {
        let declared = measure.density(*x);
        worst = worst.max((d - declared).abs());
        stationary.rows.push(vec![w[0], w[1], *d, declared]);
    }
    if op.is_exact() {
        out.metrics.push(MetricResult::new(
            "stationary_density_error",
            worst,
            0.0,
            Tolerance::AtMost { bound: 1e-10 },
        ));
        let trials = p.trials.unwrap_or(config.samples);
        let steps = config.n;
        let residuals = map_points(trials, |i| {
            let mut rng = derive_substream(config.seed, i)?;
            let phis: Vec<Vec<f64>> = (0..=steps)
                .map(|_| op.center(&(0..op.len()).map(|_| uniform(&mut rng) - 0.5).collect::<Vec<_>>()))
                .collect();
            Ok(martingale_decomposition(&op, &phis, steps)?.max_transfer)
        })?;
        out.metrics.push(MetricResult::new(
            "martingale_max_transfer",
            residuals.iter().copied().fold(0.0, f64::max),
            0.0,
            Tolerance::AtMost { bound: 1e-10 },
        ));
    } else {
        out.value("stationary_density_error", worst);
    }
    let half: Vec<f64> = mids.iter().map(|&x| f64::from(u8::from(x < 0.5))).collect();
    let gk = green_kubo_variance(&op, &half, p.k_max.unwrap_or(200))?;
    out.value("green_kubo_half_indicator", gk.value);
    out.value("green_kubo_tail_bound", gk.tail_bound);

    let mut matrix = Table::new("matrix", &[]);
    matrix.columns = (0..op.len()).map(|j| format!("bin{j}")).collect();
    for i in 0..op.len() {
        matrix.rows.push(op.matrix().row(i).iter().copied().collect());
    }
    let mut eig = Table::new("spectrum", &["re", "im", "modulus"]);
    for e in &spectrum.eigenvalues {
        eig.rows.push(vec![e[0], e[1], e[0].hypot(e[1])]);
    }
    let mut cov = Table::new("green_kubo", &["lag", "covariance"]);
    for (k, c) in gk.covariances.iter().enumerate() {
        cov.rows.push(vec![k as f64, *c]);
    }
    out.tables.extend([matrix, eig, stationary, cov]);
    out.documents
        .push(("spectrum".into(), serde_json::to_value(&spectrum)?));
    Ok(out)
}

/// `φ*_k` on the window `[−1, 0]` with uniform values in `[−1, 1)`.
pub fn random_window_observables(sft: &SftSystem, count: usize, seed: u64) -> Result<Vec<CylinderFunction>> {
    (0..count as u64)
        .map(|k| {
            let mut rng = derive_substream(seed, k)?;
            CylinderFunction::from_fn(sft, -1, 0, |_| 2.0 * uniform(&mut rng) - 1.0)
        })
        .collect()
}

fn sinai_check(config: &ExperimentConfig) -> Result<Outcome> {
    let MapSystem::Shift(sft) = &config.system else {
        unreachable!("validated")
    };
    let n = config.n;
    let truncation = config.params.truncation.unwrap_or(1);
    let phis = random_window_observables(sft, n + 1 + truncation, role_seed(config.seed, "observables"))?;
    let construction = sinai_future(sft, &phis, n, truncation)?;
    let parry = MarkovMeasure::parry(sft);
    let (lo, hi) = telescoping_window(&construction, &phis, n);
    let residuals = map_points(config.samples, |i| {
        let mut rng = derive_substream(config.seed, i)?;
        let x = parry.sample(&mut rng, lo, hi);
        telescoping_residual(&construction, &phis, &x, n)
    })?;
    let mut out = Outcome::new();
    let future_start = construction.f.iter().map(|f| f.window().0).min().unwrap_or(0);
    out.value("future_window_start", future_start as f64);
    out.value(
        "truncation_bound",
        construction.warning.as_ref().map_or(0.0, |w| w.bound),
    );
    out.metrics.push(MetricResult::new(
        "future_discrepancy",
        construction.future_discrepancy,
        0.0,
        Tolerance::AtMost { bound: 1e-12 },
    ));
    out.metrics.push(MetricResult::new(
        "max_telescoping_residual",
        residuals.iter().copied().fold(0.0, f64::max),
        0.0,
        Tolerance::AtMost { bound: 1e-12 },
    ));
    let mut table = Table::new("residuals", &["sequence", "residual"]);
    for (i, r) in residuals.iter().enumerate() {
        table.rows.push(vec![i as f64, *r]);
    }
    out.tables.push(table);
    Ok(out)
}

fn sbc_ratio(config: &ExperimentConfig) -> Result<Outcome> {
    let (system, measure, schedule) = (&config.system, config.measure(), config.schedule());
    let ctx = SeriesContext::new(system, measure, schedule, config.n)?;
    let metric: Metric = ctx.metric;
    let radii = ctx.values.clone();
    let rows = map_points(config.samples, |i| {
        let x = sample_point(system, measure, config.seed, i)?;
        let c = x.coords()?;
        let mut sink = SbcSink::new(metric, c, &radii);
        ctx.recurrence_into(&x, &mut sink)?;
        Ok((c[0], measure.density(c[0]), sink.ratio().unwrap_or(f64::NAN)))
    })?;
    let tol = config.params.sbc_tol.unwrap_or(0.15);
    let close = rows.iter().filter(|r| (r.2 - r.1).abs() <= tol).count() as f64;
    let total = rows.len() as f64;
    let frac = close / total;
    let mut out = Outcome::new();
    out.metrics.push(MetricResult::new(
        "fraction_within_tolerance",
        frac,
        (frac * (1.0 - frac) / total).sqrt(),
        Tolerance::AtLeast {
            bound: config.params.sbc_fraction.unwrap_or(0.8),
        },
    ));
    let mut table = Table::new("sbc", &["point", "x", "density", "ratio"]);
    for (i, r) in rows.iter().enumerate() {
        table.rows.push(vec![i as f64, r.0, r.1, r.2]);
    }
    out.tables.push(table);
    Ok(out)
}
