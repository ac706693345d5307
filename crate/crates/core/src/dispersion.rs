//! Monte Carlo for the pair-separation diffusion.
//!
//! The separation `r_t` of two particles advected by the same Kraichnan
//! field is a one-dimensional diffusion with generator
//! `b_L(r) ∂_r² + (d-1) b_N(r)/r ∂_r`. Paths are advanced by Euler–Maruyama
//! with the state-dependent step `dt = min(dt_max, ε r^{2-2α})` and mirrored
//! at a small floor.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(master_seed)` switched to
//! stream `i`, so its randomness does not depend on scheduling. Paths are
//! processed in fixed chunks; per-chunk moment accumulators are merged in a
//! fixed pairwise tree, which makes every statistic bit-identical for any
//! number of worker threads.

use crate::error::{invalid, Error, Result};
use crate::kernels::{DerivedConstants, IsotropicKernel};
use crate::quadrature::{self, QuadOptions};
use crate::scaling::{loglog_fit, PowerFit};
use crate::special;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per work unit. Part of the reproducibility contract: changing it
/// changes the reduction tree and hence the last bits of the statistics.
pub const CHUNK: usize = 1024;

/// Smallest time step; keeps paths stuck at the floor from stalling.
const DT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    /// Initial separation; 0 starts at `floor_eps`.
    pub r0: f64,
    pub t_end: f64,
    pub dt_max: f64,
    /// ε in `dt = min(dt_max, ε r^{2-2α})`.
    pub eps_dt: f64,
    pub floor_eps: f64,
    pub master_seed: u64,
    /// Times at which the ensemble is sampled (`t_end` is appended).
    pub sample_times: Vec<f64>,
    /// Moment orders accumulated by streaming; empty means `{2-2α, 1, 2, 4}`.
    pub moment_orders: Vec<f64>,
    /// Keep every `r` value (memory `n_paths × n_times`).
    pub keep_samples: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            r0: 0.01,
            t_end: 1.0,
            dt_max: 1e-2,
            eps_dt: 0.1,
            floor_eps: 1e-8,
            master_seed: 0,
            sample_times: Vec::new(),
            moment_orders: Vec::new(),
            keep_samples: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(invalid(format!(
                "n_paths must be at least 100, got {}",
                self.n_paths
            )));
        }
        if !(self.floor_eps > 0.0) {
            return Err(invalid("floor_eps must be positive"));
        }
        if !(self.r0 == 0.0 || self.r0 > self.floor_eps) || !self.r0.is_finite() {
            return Err(invalid(format!(
                "r0 must be 0 or exceed floor_eps = {:e}, got {}",
                self.floor_eps, self.r0
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end must be positive"));
        }
        if !(self.dt_max > 0.0 && self.eps_dt > 0.0) {
            return Err(invalid("dt_max and eps_dt must be positive"));
        }
        if self.sample_times.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("sample times must be positive"));
        }
        if self.moment_orders.iter().any(|q| !(*q > 0.0)) {
            return Err(invalid("moment orders must be positive"));
        }
        Ok(())
    }

    fn start(&self) -> f64 {
        if self.r0 == 0.0 {
            self.floor_eps
        } else {
            self.r0
        }
    }
}

/// Mean and centred second moment, mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        let mean = a.mean + delta * b.n as f64 / n as f64;
        let m2 = a.m2 + b.m2 + delta * delta * (a.n as f64 * b.n as f64) / n as f64;
        Self { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Sufficient statistics of a simulated ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationEnsemble {
    pub times: Vec<f64>,
    pub orders: Vec<f64>,
    /// `stats[k][j]`: moments of `r^{orders[j]}` at `times[k]`.
    pub stats: Vec<Vec<Moments>>,
    /// Per path `sup_k t_k^{-1/(1-α)} r_{t_k}²` (NaN for flagged paths).
    pub sup_statistic: Vec<f64>,
    /// `samples[k][i]` when requested (NaN for flagged paths).
    pub samples: Option<Vec<Vec<f64>>>,
    pub flagged_paths: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    pub r0: f64,
    pub alpha: f64,
    pub steps: u64,
}

struct ChunkOut {
    stats: Vec<Vec<Moments>>,
    sup: Vec<f64>,
    samples: Vec<Vec<f64>>,
    flagged: usize,
    steps: u64,
}

/// Runs the ensemble.
pub fn simulate_separation(
    kernel: &IsotropicKernel,
    config: &McConfig,
) -> Result<SeparationEnsemble> {
    config.validate()?;
    let alpha = kernel.params().alpha;
    let gamma = 2.0 - 2.0 * alpha;
    let d = kernel.dim() as f64;
    let orders: Vec<f64> = if config.moment_orders.is_empty() {
        let mut o = vec![gamma, 1.0, 2.0, 4.0];
        o.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        o
    } else {
        config.moment_orders.clone()
    };
    let mut times: Vec<f64> = config
        .sample_times
        .iter()
        .copied()
        .filter(|t| *t < config.t_end)
        .collect();
    times.push(config.t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sup_power = 1.0 / (1.0 - alpha);
    let r_start = config.start();
    let floor = config.floor_eps;

    let n_chunks = config.n_paths.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> ChunkOut {
        let first = c * CHUNK;
        let last = (first + CHUNK).min(config.n_paths);
        let mut stats = vec![vec![Moments::default(); orders.len()]; times.len()];
        let mut sup = Vec::with_capacity(last - first);
        let mut samples = if config.keep_samples {
            vec![Vec::with_capacity(last - first); times.len()]
        } else {
            Vec::new()
        };
        let mut flagged = 0;
        let mut steps = 0u64;
        let mut path_values = vec![0.0; times.len()];
        for path in first..last {
            let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
            rng.set_stream(path as u64);
            let mut r = r_start;
            let mut t = 0.0;
            let mut ok = true;
            'times: for (k, &target) in times.iter().enumerate() {
                while t < target {
                    let mut dt = (config.eps_dt * r.powf(gamma))
                        .min(config.dt_max)
                        .max(DT_FLOOR);
                    if t + dt >= target {
                        dt = target - t;
                    }
                    let co = kernel.coefficients(r);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let mut next = r + (d - 1.0) * co.b_n / r * dt + (2.0 * co.b_l * dt).sqrt() * z;
                    if next < floor {
                        next = 2.0 * floor - next;
                    }
                    if !next.is_finite() {
                        ok = false;
                        break 'times;
                    }
                    r = next;
                    t += dt;
                    steps += 1;
                }
                t = target;
                path_values[k] = r;
            }
            if !ok {
                flagged += 1;
                sup.push(f64::NAN);
                for s in samples.iter_mut() {
                    s.push(f64::NAN);
                }
                continue;
            }
            let mut s_max = 0.0f64;
            for (k, &r) in path_values.iter().enumerate() {
                for (j, &q) in orders.iter().enumerate() {
                    stats[k][j].push(r.powf(q));
                }
                s_max = s_max.max(times[k].powf(-sup_power) * r * r);
                if config.keep_samples {
                    samples[k].push(r);
                }
            }
            sup.push(s_max);
        }
        ChunkOut {
            stats,
            sup,
            samples,
            flagged,
            steps,
        }
    };
    let chunks: Vec<ChunkOut> = (0..n_chunks).into_par_iter().map(run_chunk).collect();

    let flagged: usize = chunks.iter().map(|c| c.flagged).sum();
    if flagged * 100 > config.n_paths {
        return Err(Error::Numerical(format!(
            "{flagged} of {} paths produced non-finite values",
            config.n_paths
        )));
    }
    let steps = chunks.iter().map(|c| c.steps).sum();
    let sup_statistic: Vec<f64> = chunks.iter().flat_map(|c| c.sup.iter().copied()).collect();
    let samples = config.keep_samples.then(|| {
        (0..times.len())
            .map(|k| {
                chunks
                    .iter()
                    .flat_map(|c| c.samples[k].iter().copied())
                    .collect()
            })
            .collect()
    });
    let stats = (0..times.len())
        .map(|k| {
            (0..orders.len())
                .map(|j| {
                    let leaves: Vec<Moments> = chunks.iter().map(|c| c.stats[k][j]).collect();
                    tree_merge(&leaves)
                })
                .collect()
        })
        .collect();
    Ok(SeparationEnsemble {
        times,
        orders,
        stats,
        sup_statistic,
        samples,
        flagged_paths: flagged,
        n_paths: config.n_paths,
        master_seed: config.master_seed,
        r0: r_start,
        alpha,
        steps,
    })
}

fn tree_merge(leaves: &[Moments]) -> Moments {
    match leaves.len() {
        0 => Moments::default(),
        1 => leaves[0],
        n => Moments::merge(tree_merge(&leaves[..n / 2]), tree_merge(&leaves[n / 2..])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: u64,
}

/// Sample mean and standard error of `r^q` at every sample time.
pub fn moment_curve(ensemble: &SeparationEnsemble, q: f64) -> Result<Vec<MomentPoint>> {
    if !(q > 0.0) {
        return Err(invalid(format!("moment order must be positive, got {q}")));
    }
    if ensemble.times.is_empty() || ensemble.n_paths == ensemble.flagged_paths {
        return Err(invalid("empty ensemble"));
    }
    if let Some(j) = ensemble
        .orders
        .iter()
        .position(|o| (o - q).abs() <= 1e-12 * q)
    {
        return Ok(ensemble
            .times
            .iter()
            .zip(&ensemble.stats)
            .map(|(t, s)| MomentPoint {
                t: *t,
                mean: s[j].mean,
                stderr: s[j].stderr(),
                n_effective: s[j].n,
            })
            .collect());
    }
    let samples = ensemble.samples.as_ref().ok_or_else(|| {
        invalid(format!(
            "order {q} was not accumulated and samples were not kept (orders: {:?})",
            ensemble.orders
        ))
    })?;
    Ok(ensemble
        .times
        .iter()
        .zip(samples)
        .map(|(t, rs)| {
            let mut m = Moments::default();
            for r in rs.iter().filter(|r| !r.is_nan()) {
                m.push(r.powf(q));
            }
            MomentPoint {
                t: *t,
                mean: m.mean,
                stderr: m.stderr(),
                n_effective: m.n,
            }
        })
        .collect())
}

/// Richardson-law statistics of `E[Var] = E[r²]/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichardsonReport {
    pub exponent: f64,
    pub exponent_ci: f64,
    /// Prefactor of the free fit.
    pub prefactor: f64,
    /// Prefactor with the exponent held at `1/(1-α)` (geometric mean over
    /// the window).
    pub prefactor_fixed: f64,
    pub k_ric: f64,
    /// Fraction of sample times in the window with `E[Var] ≥ 0.9 K_Ric t^{1/(1-α)}`.
    pub lower_bound_fraction: f64,
    pub lower_bound_pass: bool,
    pub window: (f64, f64),
    /// Median, 99th percentile and maximum of the pathwise sup statistic.
    pub sup_median: f64,
    pub sup_p99: f64,
    pub sup_max: f64,
    pub flagged_paths: usize,
    pub fit: PowerFit,
}

/// Log-log fit of `E[r²]/2` against `t`.
///
/// Without an explicit window the fit starts at ten memory times
/// `r0^{2-2α}/(cγ(1-2α+β(d-1)))` and the ensemble must reach a hundred
/// memory times.
pub fn richardson_report(
    ensemble: &SeparationEnsemble,
    constants: &DerivedConstants,
    window: Option<(f64, f64)>,
) -> Result<RichardsonReport> {
    let p = 1.0 / (1.0 - constants.alpha);
    let t_end = *ensemble
        .times
        .last()
        .ok_or_else(|| invalid("empty ensemble"))?;
    let window = match window {
        Some(w) => w,
        None => {
            let rate = constants.richardson_rate();
            if !(rate > 0.0) {
                return Err(invalid("the Richardson template needs the diffusive regime (positive drift of r^{2-2α})"));
            }
            let t_mem = ensemble.r0.powf(2.0 - 2.0 * constants.alpha) / rate;
            if t_end < 100.0 * t_mem {
                return Err(invalid(format!(
                    "ensemble ends at t = {t_end:e}, before 100 memory times ({:e})",
                    100.0 * t_mem
                )));
            }
            (10.0 * t_mem, t_end)
        }
    };
    let curve = moment_curve(ensemble, 2.0)?;
    let points: Vec<(f64, f64)> = curve.iter().map(|m| (m.t, 0.5 * m.mean)).collect();
    let fit = loglog_fit(&points, window)?;
    let inside: Vec<&(f64, f64)> = points
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    let ln_fixed =
        inside.iter().map(|(t, v)| v.ln() - p * t.ln()).sum::<f64>() / inside.len() as f64;
    let above = inside
        .iter()
        .filter(|(t, v)| *v >= 0.9 * constants.k_ric * t.powf(p))
        .count();
    let mut sup: Vec<f64> = ensemble
        .sup_statistic
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .collect();
    sup.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        if sup.is_empty() {
            f64::NAN
        } else {
            sup[((sup.len() - 1) as f64 * q).round() as usize]
        }
    };
    let fraction = above as f64 / inside.len() as f64;
    Ok(RichardsonReport {
        exponent: fit.slope,
        exponent_ci: fit.slope_ci_95,
        prefactor: fit.prefactor(),
        prefactor_fixed: ln_fixed.exp(),
        k_ric: constants.k_ric,
        lower_bound_fraction: fraction,
        lower_bound_pass: fraction == 1.0,
        window: fit.window,
        sup_median: quantile(0.5),
        sup_p99: quantile(0.99),
        sup_max: quantile(1.0),
        flagged_paths: ensemble.flagged_paths,
        fit,
    })
}

/// `Var(μ) ‖μ‖_{L²}^{4/d}` for the centred isotropic Gaussian density of
/// scale `sigma` in `d` dimensions, by radial quadrature. The exact value is
/// `d/(4π)` for every `sigma`.
pub fn gaussian_variance_identity(sigma: f64, d: usize) -> Result<f64> {
    if !(sigma > 0.0) || d == 0 {
        return Err(invalid("need sigma > 0 and d >= 1"));
    }
    let df = d as f64;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-df / 2.0);
    let density = |r: f64| norm * (-r * r / (2.0 * sigma * sigma)).exp();
    let area = special::sphere_area(d);
    let opts = QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_subdivisions: 4000,
    };
    let upper = 40.0 * sigma;
    let mass =
        area * quadrature::adaptive(|r| r.powf(df - 1.0) * density(r), 0.0, upper, opts)?.value;
    let second =
        area * quadrature::adaptive(|r| r.powf(df + 1.0) * density(r), 0.0, upper, opts)?.value;
    let l2sq = area
        * quadrature::adaptive(|r| r.powf(df - 1.0) * density(r).powi(2), 0.0, upper, opts)?.value;
    let var = second / mass;
    Ok(var * l2sq.powf(2.0 / df))
}
