//! Policies that decide whether the current imagined trajectory can keep
//! being executed or the planner has to run again.
//!
//! * N-Skip replans every `n + 1` steps regardless of what happens.
//! * FSA (first-step-alike) keeps going while the observed prediction error
//!   looks like a typical error right after replanning.
//! * CB (confidence bound) keeps going while the observed state lies within
//!   `c` predicted standard deviations of the prediction in every dimension.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// N-Skip rule. `depth` is the position within the current trajectory of the
/// action that was just executed (0 right after a replan), so with `n = 1`
/// actions 0 and 1 of every plan are used and the planner runs every second
/// step. `n = 0` never skips.
pub fn nskip_should_skip(depth: usize, n: usize) -> bool {
    depth < n
}

/// Checks `n < horizon`; longer skips would run past the plan.
pub fn validate_nskip(n: usize, horizon: usize) -> Result<()> {
    if n >= horizon {
        return Err(Error::config(format!("nskip n = {n} must be smaller than the plan horizon {horizon}")));
    }
    Ok(())
}

/// D'Agostino-Pearson omnibus normality statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    pub skew_z: f64,
    pub kurtosis_z: f64,
    pub k2: f64,
    pub p_value: f64,
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Normality test from the sample skewness and kurtosis z-scores. The
/// p-value is the chi-squared (2 dof) survival function `exp(-K²/2)`.
pub fn dagostino_pearson(samples: &[f64]) -> Result<NormalityTest> {
    if samples.len() < 20 {
        return Err(Error::invalid(format!("normality test needs at least 20 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let n = samples.len() as f64;
    let (m2, m3, m4) = central_moments(samples);
    if m2 <= 0.0 {
        return Err(Error::invalid("zero-variance sample"));
    }
    let b1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);

    // skewness
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 =
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let ya = y / alpha;
    let skew_z = delta * (ya + (ya * ya + 1.0).sqrt()).ln();

    // kurtosis
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return Err(Error::invalid("kurtosis transform undefined for this sample"));
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let kurtosis_z = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = skew_z * skew_z + kurtosis_z * kurtosis_z;
    Ok(NormalityTest { skew_z, kurtosis_z, k2, p_value: (-k2 / 2.0).exp() })
}

/// Nearest-rank percentile of an ascending slice: `sorted[ceil(c*M) - 1]`,
/// with the rank clamped to `1..=M`.
pub fn nearest_rank(sorted: &[f64], c: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let m = sorted.len();
    let rank = (c * m as f64).ceil();
    let rank = if rank.is_nan() { 1 } else { (rank as usize).clamp(1, m) };
    Ok(sorted[rank - 1])
}

/// Frozen distribution of errors observed one step after replanning.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    errors: Vec<f64>,
    mu0: f64,
    theta0: f64,
    significance: f64,
    p_value: Option<f64>,
    is_normal: bool,
}

pub const MIN_ERROR_SAMPLES: usize = 20;

/// Sorts the errors, computes their mean and (population) standard
/// deviation and runs the normality test at `significance`.
pub fn build_error_model(errors: &[f64], significance: f64) -> Result<ErrorModel> {
    if errors.len() < MIN_ERROR_SAMPLES {
        return Err(Error::invalid(format!(
            "error model needs at least {MIN_ERROR_SAMPLES} samples, got {}",
            errors.len()
        )));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::invalid("errors must be finite and non-negative"));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::invalid("significance must be in (0, 1)"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let (mu0, theta0) = if sorted[0] == sorted[sorted.len() - 1] {
        (sorted[0], 0.0)
    } else {
        let mu0 = sorted.iter().sum::<f64>() / m;
        (mu0, (sorted.iter().map(|e| (e - mu0) * (e - mu0)).sum::<f64>() / m).sqrt())
    };
    let (p_value, is_normal) = if theta0 > 0.0 {
        match dagostino_pearson(&sorted) {
            Ok(t) => (Some(t.p_value), t.p_value >= significance),
            Err(_) => (None, false),
        }
    } else {
        (None, false)
    };
    Ok(ErrorModel { errors: sorted, mu0, theta0, significance, p_value, is_normal })
}

impl ErrorModel {
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn significance(&self) -> f64 {
        self.significance
    }

    /// `None` when the test could not run (zero spread).
    pub fn p_value(&self) -> Option<f64> {
        self.p_value
    }

    pub fn is_normal(&self) -> bool {
        self.is_normal
    }

    /// Nearest-rank `c`-percentile of the stored errors.
    pub fn percentile_threshold(&self, c: f64) -> Result<f64> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::config(format!("percentile c = {c} must be in (0, 1)")));
        }
        nearest_rank(&self.errors, c)
    }

    /// Upper error bound used by the FSA rule.
    pub fn fsa_threshold(&self, c: f64) -> f64 {
        if self.is_normal && self.theta0 > 0.0 {
            self.mu0 + c * self.theta0
        } else {
            nearest_rank(&self.errors, c).expect("non-empty model")
        }
    }

    /// Writes an `e0_errors,significance` CSV, one error per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["e0_errors", "significance"])?;
        for e in &self.errors {
            wtr.write_record([e.to_string(), self.significance.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::invalid(format!("missing column {name}")))
        };
        let (ie, is) = (col("e0_errors")?, col("significance")?);
        let mut errors = Vec::new();
        let mut significance = None;
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid("malformed error model row"))
            };
            errors.push(parse(ie)?);
            significance.get_or_insert(parse(is)?);
        }
        build_error_model(&errors, significance.unwrap_or(0.05))
    }
}

/// FSA rule: skip while `eps` is no larger than a typical step-0 error.
/// Normal samples use `mu0 + c * theta0`; otherwise the nearest-rank
/// `c`-percentile. Both are one-sided, so small errors always pass.
pub fn fsa_should_skip(model: &ErrorModel, eps: f64, c: f64) -> bool {
    eps <= model.fsa_threshold(c)
}

/// CB rule: skip iff `pred - c*sigma <= actual <= pred + c*sigma` in every
/// dimension.
pub fn cb_should_skip(actual: &[f64], pred: &[f64], sigma: &[f64], c: f64) -> Result<bool> {
    check_dim(pred.len(), actual.len())?;
    check_dim(pred.len(), sigma.len())?;
    Ok(actual.iter().zip(pred).zip(sigma).all(|((&s, &p), &sd)| p - c * sd <= s && s <= p + c * sd))
}

/// What a policy sees after each executed action.
#[derive(Debug, Clone, Copy)]
pub struct SkipContext<'a> {
    /// Position of the executed action in its trajectory.
    pub depth: usize,
    pub actual: &'a [f64],
    pub predicted: &'a [f64],
    pub sigma: &'a [f64],
    /// Euclidean distance between `actual` and `predicted`.
    pub error: f64,
}

pub trait SkipPolicy {
    fn should_skip(&self, ctx: &SkipContext<'_>) -> Result<bool>;
}

/// Test stub that always keeps the current trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysSkip;

impl SkipPolicy for AlwaysSkip {
    fn should_skip(&self, _ctx: &SkipContext<'_>) -> Result<bool> {
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipKind {
    Nskip,
    Fsa,
    Cb,
}

/// `{"kind": "nskip", "n": 2}`, `{"kind": "fsa", "c": 0.95}` or
/// `{"kind": "cb", "c": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipPolicyConfig {
    pub kind: SkipKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl Default for SkipPolicyConfig {
    fn default() -> Self {
        Self::nskip(0)
    }
}

impl SkipPolicyConfig {
    pub fn nskip(n: usize) -> Self {
        Self { kind: SkipKind::Nskip, n: Some(n), c: None }
    }

    pub fn fsa(c: f64) -> Self {
        Self { kind: SkipKind::Fsa, n: None, c: Some(c) }
    }

    pub fn cb(c: f64) -> Self {
        Self { kind: SkipKind::Cb, n: None, c: Some(c) }
    }

    /// Short label such as `NSKIP2`, `FSA0.95` or `CB0.5`.
    pub fn label(&self) -> String {
        match self.kind {
            SkipKind::Nskip if self.n == Some(0) => "Baseline".to_string(),
            SkipKind::Nskip => format!("NSKIP{}", self.n.unwrap_or(0)),
            SkipKind::Fsa => format!("FSA{}", self.c.unwrap_or(f64::NAN)),
            SkipKind::Cb => format!("CB{}", self.c.unwrap_or(f64::NAN)),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self.kind {
            SkipKind::Nskip => validate_nskip(self.n.ok_or_else(|| Error::config("nskip needs n"))?, horizon),
            SkipKind::Fsa => match self.c {
                Some(c) if c > 0.0 && c.is_finite() => Ok(()),
                _ => Err(Error::config("fsa needs a positive c")),
            },
            SkipKind::Cb => match self.c {
                Some(c) if c >= 0.0 && c.is_finite() => Ok(()),
                _ => Err(Error::config("cb needs a non-negative c")),
            },
        }
    }

    /// Concrete policy; FSA needs the step-0 error model.
    pub fn build(&self, horizon: usize, errors: Option<&ErrorModel>) -> Result<Policy> {
        self.validate(horizon)?;
        Ok(match self.kind {
            SkipKind::Nskip => Policy::NSkip { n: self.n.unwrap_or(0) },
            SkipKind::Fsa => Policy::Fsa {
                model: errors.cloned().ok_or_else(|| Error::config("fsa requires an error model"))?,
                c: self.c.unwrap_or(0.0),
            },
            SkipKind::Cb => Policy::Cb { c: self.c.unwrap_or(0.0) },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    NSkip { n: usize },
    Fsa { model: ErrorModel, c: f64 },
    Cb { c: f64 },
}

impl SkipPolicy for Policy {
    fn should_skip(&self, ctx: &SkipContext<'_>) -> Result<bool> {
        match self {
            Policy::NSkip { n } => Ok(nskip_should_skip(ctx.depth, *n)),
            Policy::Fsa { model, c } => Ok(fsa_should_skip(model, ctx.error, *c)),
            Policy::Cb { c } => cb_should_skip(ctx.actual, ctx.predicted, ctx.sigma, *c),
        }
    }
}
