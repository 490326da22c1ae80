//! Empirical CDFs and two-sample Kolmogorov–Smirnov tests of each target
//! group's per-slogan hit counts against the baseline group.
//!
//! No multiple-comparison correction is applied; callers that test all
//! 64 default cells at a fixed alpha should account for that themselves.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Taxonomy;
use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::lexicon::CountsTable;

pub const DEFAULT_PERMUTATION_ROUNDS: usize = 10_000;

const SERIES_TOLERANCE: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 100_000;
/// Below this λ the alternating series cancels badly; the theta-function form
/// of the same distribution is used instead.
const THETA_SWITCH: f64 = 1.18;

/// `1 - (√(2π)/λ) Σ_{k≥1} exp(-(2k-1)²π²/(8λ²))`, identical to the alternating
/// series but made of positive terms.
fn kolmogorov_sf_small(lambda: f64) -> f64 {
    let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
    let mut sum = 0.0;
    for k in 1..=SERIES_MAX_TERMS {
        let odd = (2 * k - 1) as f64;
        let term = (c * odd * odd).exp();
        sum += term;
        if term < SERIES_TOLERANCE * 1e-4 {
            break;
        }
    }
    let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
    (1.0 - cdf).clamp(0.0, 1.0)
}

/// Right-continuous step function: `fraction` is the share of the sample that
/// is `<= value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub value: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EcdfCurve {
    pub points: Vec<EcdfPoint>,
}

impl EcdfCurve {
    /// Evaluates the step function at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|p| p.value <= x) {
            0 => 0.0,
            i => self.points[i - 1].fraction,
        }
    }
}

fn sorted_finite(sample: &[f64], what: &str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::analysis(format!("{what}: sample is empty")));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::analysis(format!("{what}: sample contains a non-finite value")));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn ecdf(sample: &[f64]) -> Result<EcdfCurve> {
    let sorted = sorted_finite(sample, "ecdf")?;
    let n = sorted.len() as f64;
    let mut points: Vec<EcdfPoint> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(p) if p.value == x => p.fraction = fraction,
            _ => points.push(EcdfPoint { value: x, fraction }),
        }
    }
    Ok(EcdfCurve { points })
}

/// `max |i·n_b − j·n_a|` over pooled distinct values, where `i`, `j` count the
/// elements `<= x` of each sorted sample. Dividing by `n_a·n_b` gives D.
fn ks_numerator(a: &[f64], b: &[f64]) -> u64 {
    let (na, nb) = (a.len() as i128, b.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: i128 = 0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as i128 * nb - j as i128 * na).abs());
    }
    best as u64
}

pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_finite(a, "ks_statistic (first sample)")?;
    let b = sorted_finite(b, "ks_statistic (second sample)")?;
    Ok(ks_numerator(&a, &b) as f64 / (a.len() as f64 * b.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    #[default]
    Asymptotic,
    Permutation,
}

impl fmt::Display for PMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PMethod::Asymptotic => "asymptotic",
            PMethod::Permutation => "permutation",
        })
    }
}

impl FromStr for PMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(PMethod::Asymptotic),
            "permutation" => Ok(PMethod::Permutation),
            other => Err(Error::config(format!(
                "unknown p-value method '{other}' (expected asymptotic or permutation)"
            ))),
        }
    }
}

/// Asymptotic Kolmogorov p-value with the small-sample correction
/// `λ = (√nₑ + 0.12 + 0.11/√nₑ)·d`, `nₑ = n_a·n_b/(n_a+n_b)`.
pub fn ks_pvalue_asymptotic(d: f64, n_a: usize, n_b: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::analysis(format!("KS statistic {d} is outside [0, 1]")));
    }
    if n_a == 0 || n_b == 0 {
        return Err(Error::analysis("KS sample sizes must be at least 1"));
    }
    let ne = (n_a as f64 * n_b as f64) / (n_a + n_b) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if lambda < THETA_SWITCH {
        return Ok(kolmogorov_sf_small(lambda));
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=SERIES_MAX_TERMS {
        let kf = k as f64;
        let term = 2.0 * sign * (a2 * kf * kf).exp();
        sum += term;
        if term.abs() < SERIES_TOLERANCE {
            return Ok(sum.clamp(0.0, 1.0));
        }
        sign = -sign;
    }
    // Unreachable for λ >= THETA_SWITCH; kept as the non-convergence fallback.
    Ok(1.0)
}

/// Monte-Carlo permutation p-value `(1 + #{D_perm ≥ D}) / (R + 1)` over `rounds`
/// random relabelings of the pooled sample.
pub fn ks_pvalue_permutation(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::analysis("permutation rounds must be at least 1"));
    }
    let sa = sorted_finite(a, "permutation test (first sample)")?;
    let sb = sorted_finite(b, "permutation test (second sample)")?;
    let observed = ks_numerator(&sa, &sb);

    let mut pooled: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    // Boundaries of runs of equal values: the ECDFs are compared only there.
    let mut run_ends = Vec::new();
    for i in 0..pooled.len() {
        if i + 1 == pooled.len() || pooled[i + 1] != pooled[i] {
            run_ends.push(i + 1);
        }
    }

    let (na, nb) = (sa.len() as i128, sb.len() as i128);
    let mut labels: Vec<bool> = std::iter::repeat_n(true, sa.len())
        .chain(std::iter::repeat_n(false, sb.len()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..rounds {
        labels.shuffle(&mut rng);
        let (mut i, mut j, mut start) = (0i128, 0i128, 0usize);
        let mut best = 0i128;
        for &end in &run_ends {
            for &is_a in &labels[start..end] {
                if is_a {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            start = end;
            best = best.max((i * nb - j * na).abs());
        }
        if best as u64 >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (rounds + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KsOptions {
    pub method: PMethod,
    pub permutation_rounds: usize,
    pub seed: u64,
}

impl Default for KsOptions {
    fn default() -> Self {
        KsOptions {
            method: PMethod::Asymptotic,
            permutation_rounds: DEFAULT_PERMUTATION_ROUNDS,
            seed: 0,
        }
    }
}

/// Returns `(D, p)`.
pub fn ks_test(a: &[f64], b: &[f64], options: &KsOptions) -> Result<(f64, f64)> {
    let d = ks_statistic(a, b)?;
    let p = match options.method {
        PMethod::Asymptotic => ks_pvalue_asymptotic(d, a.len(), b.len())?,
        PMethod::Permutation => {
            ks_pvalue_permutation(a, b, options.permutation_rounds, options.seed)?
        }
    };
    Ok((d, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub demographic_category: String,
    pub group_id: String,
    pub category: String,
    pub n_target: usize,
    pub n_baseline: usize,
    pub d_statistic: f64,
    pub p_value: f64,
    pub p_method: PMethod,
}

fn as_f64(v: &[u32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn resolve_baseline<'a>(taxonomy: &'a Taxonomy, baseline_id: Option<&'a str>) -> Result<&'a str> {
    let id = baseline_id.unwrap_or(&taxonomy.baseline().id);
    if taxonomy.group(id).is_none() {
        return Err(Error::analysis(format!("baseline group '{id}' is not in the taxonomy")));
    }
    Ok(id)
}

/// One KS comparison per (target group × term category), in taxonomy then
/// category order. `baseline_id` defaults to the taxonomy's baseline group.
pub fn compare_to_baseline(
    counts: &CountsTable,
    taxonomy: &Taxonomy,
    baseline_id: Option<&str>,
    options: &KsOptions,
) -> Result<Vec<KsResult>> {
    let baseline_id = resolve_baseline(taxonomy, baseline_id)?;
    let counts = counts.align_to(taxonomy)?;
    let baseline = counts
        .group(baseline_id)
        .filter(|g| g.n_slogans() > 0)
        .ok_or_else(|| {
            Error::analysis(format!("baseline group '{baseline_id}' has no slogans"))
        })?;

    let mut jobs = Vec::new();
    for g in taxonomy.groups.iter().filter(|g| g.id != baseline_id) {
        let gc = counts.group(&g.id).expect("aligned counts cover taxonomy");
        if gc.n_slogans() == 0 {
            return Err(Error::analysis(format!("target group '{}' has no slogans", g.id)));
        }
        for (ci, cat) in counts.categories().iter().enumerate() {
            jobs.push((g, gc, ci, cat));
        }
    }

    jobs.par_iter()
        .map(|(g, gc, ci, cat)| {
            let target = as_f64(gc.per_slogan(*ci));
            let base = as_f64(baseline.per_slogan(*ci));
            let cell_options = KsOptions {
                seed: derive_seed(options.seed, &["ks", &g.id, cat]),
                ..*options
            };
            let (d, p) = ks_test(&target, &base, &cell_options)?;
            Ok(KsResult {
                demographic_category: g.category.clone(),
                group_id: g.id.clone(),
                category: (*cat).clone(),
                n_target: target.len(),
                n_baseline: base.len(),
                d_statistic: d,
                p_value: p,
                p_method: options.method,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfComparison {
    pub demographic_category: String,
    pub group_id: String,
    pub category: String,
    pub target: EcdfCurve,
    pub baseline: EcdfCurve,
}

/// Everything needed to redraw the per-category CDF comparison plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfExport {
    pub baseline_group: String,
    pub categories: Vec<String>,
    pub curves: Vec<CdfComparison>,
}

pub fn cdf_export(
    counts: &CountsTable,
    taxonomy: &Taxonomy,
    baseline_id: Option<&str>,
) -> Result<CdfExport> {
    let baseline_id = resolve_baseline(taxonomy, baseline_id)?;
    let counts = counts.align_to(taxonomy)?;
    let baseline = counts.group(baseline_id).expect("aligned counts cover taxonomy");
    let mut curves = Vec::new();
    for g in taxonomy.groups.iter().filter(|g| g.id != baseline_id) {
        let gc = counts.group(&g.id).expect("aligned counts cover taxonomy");
        for (ci, cat) in counts.categories().iter().enumerate() {
            curves.push(CdfComparison {
                demographic_category: g.category.clone(),
                group_id: g.id.clone(),
                category: cat.clone(),
                target: ecdf(&as_f64(gc.per_slogan(ci)))?,
                baseline: ecdf(&as_f64(baseline.per_slogan(ci)))?,
            });
        }
    }
    Ok(CdfExport {
        baseline_group: baseline_id.to_string(),
        categories: counts.categories().to_vec(),
        curves,
    })
}
