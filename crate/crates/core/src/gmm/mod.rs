//! One-dimensional Gaussian mixtures fitted by expectation-maximization, with
//! the component count chosen by BIC.
//!
//! The free-parameter count of a K-component 1-D mixture is `3K - 1`
//! (K means, K variances, K - 1 independent weights).

mod summary;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wide::f64x4;

pub use summary::{summarize_csv, summarize_reader, AnalysisError, DensityCurve, GroupKey, Summary, SummaryRow};

pub const DEFAULT_MAX_K: usize = 4;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Stop once `(LL_t - LL_{t-1}) / |LL_{t-1}|` drops below this.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Variance floor as a fraction of the sample variance.
pub const VARIANCE_FLOOR_FRACTION: f64 = 1e-6;
/// Minimum samples per component.
pub const SAMPLES_PER_COMPONENT: usize = 10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GmmFit {
    pub k: usize,
    /// Sorted by mean, ascending.
    pub components: Vec<GmmComponent>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n: usize,
    pub param_count: usize,
    /// All samples were identical; the fit collapses to one component.
    pub degenerate: bool,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at each E-step of the winning restart.
    pub ll_history: Vec<f64>,
}

impl GmmFit {
    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.variance).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (-(x - c.mean).powi(2) / (2.0 * c.variance)).exp() / (2.0 * PI * c.variance).sqrt())
            .sum()
    }

    /// `points` evenly spaced samples of the mixture density over `[lo, hi]`.
    pub fn density_curve(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        match points {
            0 => Vec::new(),
            1 => vec![(lo, self.density(lo))],
            _ => {
                let step = (hi - lo) / (points - 1) as f64;
                (0..points)
                    .map(|i| {
                        let x = if i == points - 1 { hi } else { lo + step * i as f64 };
                        (x, self.density(x))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum GmmError {
    #[error("need at least {needed} samples for {k} components, got {n}")]
    TooFewSamples { n: usize, k: usize, needed: usize },
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

#[derive(Clone, Debug)]
pub struct EmOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER, rel_tol: DEFAULT_REL_TOL }
    }
}

pub fn param_count(k: usize) -> usize {
    3 * k - 1
}

/// `-2 LL + (3K - 1) ln n`.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + param_count(k) as f64 * (n as f64).ln()
}

pub fn fit_em(samples: &[f64], k: usize, seed: u64) -> Result<GmmFit, GmmError> {
    fit_em_with(samples, k, seed, &EmOptions::default())
}

/// Best of `options.restarts` seeded EM runs, by final log-likelihood.
pub fn fit_em_with(samples: &[f64], k: usize, seed: u64, options: &EmOptions) -> Result<GmmFit, GmmError> {
    check_samples(samples, k)?;
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let var = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;

    if var == 0.0 {
        return Ok(degenerate_fit(n, mean));
    }
    let floor = VARIANCE_FLOOR_FRACTION * var;

    let mut best: Option<Run> = None;
    for restart in 0..options.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k, restart));
        let run = run_em(&centered, k, var, floor, options, &mut rng);
        if best.as_ref().is_none_or(|b| run.log_likelihood > b.log_likelihood) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");

    let mut components: Vec<GmmComponent> = (0..k)
        .map(|j| GmmComponent { weight: run.weights[j], mean: run.means[j] + mean, variance: run.variances[j] })
        .collect();
    components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(GmmFit {
        k,
        components,
        log_likelihood: run.log_likelihood,
        bic: bic(run.log_likelihood, k, n),
        n,
        param_count: param_count(k),
        degenerate: false,
        iterations: run.history.len(),
        converged: run.converged,
        ll_history: run.history,
    })
}

/// Fits `K = 1..=k_max` and returns the lowest-BIC fit, preferring the
/// smaller K on ties.
pub fn select_model(samples: &[f64], k_max: usize, seed: u64) -> Result<GmmFit, GmmError> {
    select_model_with(samples, k_max, seed, &EmOptions::default()).map(|(best, _)| best)
}

/// Like [`select_model`], also returning every candidate fit.
pub fn select_model_with(
    samples: &[f64],
    k_max: usize,
    seed: u64,
    options: &EmOptions,
) -> Result<(GmmFit, Vec<GmmFit>), GmmError> {
    check_samples(samples, k_max)?;
    let mut fits = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let fit = fit_em_with(samples, k, seed, options)?;
        let degenerate = fit.degenerate;
        fits.push(fit);
        if degenerate {
            break;
        }
    }
    let best = fits
        .iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.k.cmp(&b.k)))
        .cloned()
        .expect("k_max >= 1");
    Ok((best, fits))
}

fn check_samples(samples: &[f64], k: usize) -> Result<(), GmmError> {
    if k == 0 {
        return Err(GmmError::ZeroComponents);
    }
    let needed = SAMPLES_PER_COMPONENT * k;
    if samples.len() < needed {
        return Err(GmmError::TooFewSamples { n: samples.len(), k, needed });
    }
    if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
        return Err(GmmError::NonFinite { index });
    }
    Ok(())
}

/// Single component at the common value with the variance at an absolute
/// floor (the relative floor is zero here).
fn degenerate_fit(n: usize, value: f64) -> GmmFit {
    let variance = VARIANCE_FLOOR_FRACTION;
    let ll = -0.5 * n as f64 * (LN_2PI + variance.ln());
    GmmFit {
        k: 1,
        components: vec![GmmComponent { weight: 1.0, mean: value, variance }],
        log_likelihood: ll,
        bic: bic(ll, 1, n),
        n,
        param_count: param_count(1),
        degenerate: true,
        iterations: 0,
        converged: true,
        ll_history: vec![ll],
    }
}

fn mix_seed(seed: u64, k: usize, restart: usize) -> u64 {
    // splitmix64 finalizer over the combined inputs
    let mut z = seed ^ ((k as u64) << 40) ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Run {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    log_likelihood: f64,
    history: Vec<f64>,
    converged: bool,
}

/// k-means++ seeding: first mean uniform over the samples, each further mean
/// drawn with probability proportional to squared distance to the nearest
/// chosen mean.
fn seed_means(x: &[f64], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut means = Vec::with_capacity(k);
    means.push(x[rng.gen_range(0..x.len())]);
    let mut d2: Vec<f64> = x.iter().map(|v| (v - means[0]).powi(2)).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = x.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.gen_range(0..x.len())
        };
        let m = x[pick];
        means.push(m);
        for (d, v) in d2.iter_mut().zip(x) {
            *d = d.min((v - m).powi(2));
        }
    }
    means
}

fn run_em(x: &[f64], k: usize, pooled_var: f64, floor: f64, options: &EmOptions, rng: &mut impl Rng) -> Run {
    let n = x.len() as f64;
    let mut means = seed_means(x, k, rng);
    let mut weights = vec![1.0 / k as f64; k];
    let mut variances = vec![pooled_var.max(floor); k];

    let mut history = Vec::new();
    let mut converged = false;
    let mut ll;
    let mut params = Params { coef: vec![0.0; k], log_coef: vec![0.0; k], inv2var: vec![0.0; k], means: Vec::new() };
    let mut stats = Stats { s0: vec![0.0; k], s1: vec![0.0; k], s2: vec![0.0; k] };

    loop {
        for j in 0..k {
            params.coef[j] = weights[j] / (2.0 * PI * variances[j]).sqrt();
            params.log_coef[j] = weights[j].ln() - 0.5 * (LN_2PI + variances[j].ln());
            params.inv2var[j] = 0.5 / variances[j];
        }
        params.means.clone_from(&means);
        ll = if k <= 4 { e_step_x4(x, &params, &mut stats) } else { e_step(x, &params, &mut stats) };
        let Stats { s0, s1, s2 } = &stats;

        let prev = history.last().copied();
        history.push(ll);
        if let Some(prev) = prev {
            if (ll - prev) / prev.abs() < options.rel_tol {
                converged = true;
                break;
            }
        }
        if history.len() > options.max_iter {
            break;
        }

        // M-step. A component with no responsibility keeps its parameters.
        let mass: f64 = s0.iter().sum();
        for j in 0..k {
            weights[j] = s0[j] / mass;
            if s0[j] > 1e-12 * n {
                let m = s1[j] / s0[j];
                means[j] = m;
                variances[j] = (s2[j] / s0[j] - m * m).max(floor);
            }
        }
    }

    Run { weights, means, variances, log_likelihood: ll, history, converged }
}

struct Params {
    coef: Vec<f64>,
    log_coef: Vec<f64>,
    inv2var: Vec<f64>,
    means: Vec<f64>,
}

/// Responsibility-weighted sums of 1, x and x^2 per component.
struct Stats {
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

/// Log-domain density for a sample where every component underflowed.
/// Leaves scaled densities in `dens` and returns (their sum, log total).
fn log_domain_density(xi: f64, p: &Params, dens: &mut [f64]) -> (f64, f64) {
    let mut max = f64::NEG_INFINITY;
    for (j, d) in dens.iter_mut().enumerate() {
        let diff = xi - p.means[j];
        *d = p.log_coef[j] - diff * diff * p.inv2var[j];
        max = max.max(*d);
    }
    let mut sum = 0.0;
    for d in dens.iter_mut() {
        *d = (*d - max).exp();
        sum += *d;
    }
    (sum, max + sum.ln())
}

/// E-step fused with the M-step sufficient statistics; returns the log-likelihood.
fn e_step(x: &[f64], p: &Params, st: &mut Stats) -> f64 {
    let k = p.means.len();
    let mut dens = vec![0.0; k];
    st.s0.fill(0.0);
    st.s1.fill(0.0);
    st.s2.fill(0.0);
    let mut ll = 0.0;
    for &xi in x {
        let mut total = 0.0;
        for j in 0..k {
            let d = xi - p.means[j];
            dens[j] = p.coef[j] * (-d * d * p.inv2var[j]).exp();
            total += dens[j];
        }
        if !(total > f64::MIN_POSITIVE && total.is_finite()) {
            let (sum, log_total) = log_domain_density(xi, p, &mut dens);
            total = sum;
            ll += log_total;
        } else {
            ll += total.ln();
        }
        let inv = 1.0 / total;
        for j in 0..k {
            let r = dens[j] * inv;
            st.s0[j] += r;
            st.s1[j] += r * xi;
            st.s2[j] += r * xi * xi;
        }
    }
    ll
}

/// Same as [`e_step`] for up to four components, evaluated as one SIMD lane
/// each. Unused lanes have zero coefficient and contribute nothing.
fn e_step_x4(x: &[f64], p: &Params, st: &mut Stats) -> f64 {
    let k = p.means.len();
    let lanes = |v: &[f64]| {
        let mut a = [0.0; 4];
        a[..k].copy_from_slice(v);
        f64x4::from(a)
    };
    let (coef, inv2var, means) = (lanes(&p.coef), lanes(&p.inv2var), lanes(&p.means));
    let (mut s0, mut s1, mut s2) = (f64x4::ZERO, f64x4::ZERO, f64x4::ZERO);
    let mut ll = 0.0;
    for &xi in x {
        let d = f64x4::splat(xi) - means;
        let mut dens = coef * (-(d * d) * inv2var).exp();
        let mut total = dens.reduce_add();
        if total > f64::MIN_POSITIVE && total.is_finite() {
            ll += total.ln();
        } else {
            let mut scaled = [0.0; 4];
            let (sum, log_total) = log_domain_density(xi, p, &mut scaled[..k]);
            dens = f64x4::from(scaled);
            total = sum;
            ll += log_total;
        }
        let r = dens * f64x4::splat(1.0 / total);
        let rx = r * f64x4::splat(xi);
        s0 += r;
        s1 += rx;
        s2 += rx * f64x4::splat(xi);
    }
    st.s0.copy_from_slice(&s0.to_array()[..k]);
    st.s1.copy_from_slice(&s1.to_array()[..k]);
    st.s2.copy_from_slice(&s2.to_array()[..k]);
    ll
}
