//! Seeded sampling, Monte-Carlo and shell-stratified integration, and the
//! verification suites built on them.

mod report;
mod verify;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dforms::DformError;
use crate::geom::{DomainSpec, GammaConvention, GeomError};
use crate::jet::C64;

pub use report::{render_report, Estimate, SweepCell, SweepReport, Verdict, VerificationReport, SCHEMA_VERSION};
pub use verify::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("rejection efficiency {0:.2e} is below 1e-3; check the bounding box")]
    BoxMisconfigured(f64),
    #[error("integrand is not finite at {0:?}")]
    SingularSample(Vec<C64>),
    #[error("{0}")]
    Refused(String),
    #[error("insufficient valid pairs: {got} of {want}")]
    InsufficientPairs { got: usize, want: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Dform(#[from] DformError),
}

/// Points per shard; each shard owns its own random stream.
pub const SHARD: usize = 4096;

/// Stream `shard` of the seeded generator.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Sampling regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `D_eps = {r + eps < 0}`.
    Interior { eps: f64 },
    /// `{r + eps = 0}`, from seeds in `|r + eps| < band`, dropping `gamma < gamma_min`.
    Boundary { eps: f64, band: f64, gamma_min: f64 },
    /// `S_delta = {|r| < delta}`.
    Strip { delta: f64 },
    /// `{r < delta}`.
    Enlarged { delta: f64 },
}

impl Region {
    fn contains(&self, d: &DomainSpec, z: &[C64]) -> bool {
        let r = d.r(z);
        match *self {
            Region::Interior { eps } => r + eps < 0.0,
            Region::Boundary { eps, band, .. } => (r + eps).abs() < band,
            Region::Strip { delta } => r.abs() < delta,
            Region::Enlarged { delta } => r < delta,
        }
    }
}

/// A reproducible point sample. The estimator of `∫ f` over the region is
/// `scale / tries * sum_i weights_i f(points_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub domain: String,
    pub region: Region,
    pub seed: u64,
    pub n: usize,
    /// Interleaved `re, im` coordinates, `2n` numbers per point.
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    /// Box draws spent, including rejected ones.
    pub tries: u64,
    /// Volume of the proposal box.
    pub scale: f64,
    /// Accepted seeds dropped by the `gamma_min` window.
    pub excluded: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<C64> {
        let k = 2 * self.n;
        self.coords[i * k..(i + 1) * k].chunks(2).map(|c| C64::new(c[0], c[1])).collect()
    }

    pub fn acceptance(&self) -> f64 {
        (self.len() as u64 + self.excluded) as f64 / self.tries as f64
    }
}

/// Projects onto `{r + eps = 0}` by Newton steps along the gradient.
pub fn project_to_level(d: &DomainSpec, z: &[C64], level: f64) -> Option<Vec<C64>> {
    let mut x = z.to_vec();
    for _ in 0..60 {
        let f = d.r(&x) - level;
        if f.abs() <= 1e-13 {
            return Some(x);
        }
        let g = d.real_gradient(&x);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 < 1e-300 {
            return None;
        }
        for j in 0..d.n {
            x[j] -= C64::new(g[2 * j], g[2 * j + 1]) * (f / g2);
        }
    }
    (d.r(&x) - level).abs().le(&1e-10).then_some(x)
}

/// Draws `n_points` samples of `region`, in shards of [`SHARD`] points.
pub fn sample(d: &DomainSpec, region: Region, n_points: usize, seed: u64) -> Result<SampleSet, QuadError> {
    let shards = n_points.div_ceil(SHARD);
    let max_tries_per_shard = (SHARD as u64) * 1000;
    let parts: Vec<Result<(Vec<f64>, Vec<f64>, u64, u64), QuadError>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let quota = SHARD.min(n_points - s * SHARD);
            let mut rng = shard_rng(seed, s as u64);
            let (mut coords, mut weights) = (Vec::with_capacity(quota * 2 * d.n), Vec::with_capacity(quota));
            let (mut tries, mut excluded) = (0u64, 0u64);
            while weights.len() < quota {
                tries += 1;
                if tries > max_tries_per_shard {
                    return Err(QuadError::BoxMisconfigured(weights.len() as f64 / tries as f64));
                }
                let z = d.random_box_point(&mut rng);
                if !region.contains(d, &z) {
                    continue;
                }
                let (p, w) = match region {
                    Region::Boundary { eps, band, gamma_min } => {
                        let Some(p) = project_to_level(d, &z, -eps) else {
                            excluded += 1;
                            continue;
                        };
                        let gamma = d.gamma(&p, eps, GammaConvention::Euclid)?;
                        if gamma < gamma_min {
                            excluded += 1;
                            continue;
                        }
                        // real gradient norm is 2 gamma; the band has width 2 band
                        (p, 2.0 * gamma / (2.0 * band))
                    }
                    _ => (z, 1.0),
                };
                coords.extend(p.iter().flat_map(|c| [c.re, c.im]));
                weights.push(w);
            }
            Ok((coords, weights, tries, excluded))
        })
        .collect();
    let mut set = SampleSet {
        domain: d.name.clone(),
        region,
        seed,
        n: d.n,
        coords: Vec::with_capacity(n_points * 2 * d.n),
        weights: Vec::with_capacity(n_points),
        tries: 0,
        scale: d.box_volume(),
        excluded: 0,
    };
    for part in parts {
        let (c, w, t, e) = part?;
        set.coords.extend(c);
        set.weights.extend(w);
        set.tries += t;
        set.excluded += e;
    }
    let eff = (set.len() as u64 + set.excluded) as f64 / set.tries.max(1) as f64;
    if eff < 1e-3 {
        return Err(QuadError::BoxMisconfigured(eff));
    }
    Ok(set)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub re: f64,
    pub im: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
    /// Largest share of the second moment carried by one sample.
    pub tail_share: f64,
    pub high_variance: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl IntegralEstimate {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// Tail share above which an estimate is flagged as dominated by few samples.
pub const HIGH_VARIANCE_SHARE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    sum: C64,
    sum_sq: f64,
    max_sq: f64,
}

impl Moments {
    fn push(&mut self, x: C64) {
        self.sum += x;
        let s = x.norm_sqr();
        self.sum_sq += s;
        self.max_sq = self.max_sq.max(s);
    }

    fn merge(&mut self, o: &Moments) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.max_sq = self.max_sq.max(o.max_sq);
    }

    fn share(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.max_sq / self.sum_sq
        } else {
            0.0
        }
    }

    /// Mean and standard error of the mean over `count` draws, the ones not
    /// pushed being zero.
    fn mean_and_error(&self, count: u64) -> (C64, f64) {
        let k = count as f64;
        let mean = self.sum / k;
        let var = (self.sum_sq / k - mean.norm_sqr()).max(0.0) * k / (k - 1.0).max(1.0);
        (mean, (var / k).sqrt())
    }
}

pub type PointFn<'a> = dyn Fn(&[C64]) -> Result<C64, QuadError> + Sync + 'a;

fn moments_over(f: &PointFn<'_>, s: &SampleSet) -> Result<Moments, QuadError> {
    let parts: Vec<Result<Moments, QuadError>> = (0..s.len().div_ceil(SHARD))
        .into_par_iter()
        .map(|k| {
            let mut m = Moments::default();
            for i in k * SHARD..s.len().min((k + 1) * SHARD) {
                let p = s.point(i);
                let v = f(&p)?;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(QuadError::SingularSample(p));
                }
                m.push(v * s.weights[i]);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Unbiased estimate of the integral of `f` over the sampled region.
pub fn mc_integral(f: &PointFn<'_>, s: &SampleSet) -> Result<IntegralEstimate, QuadError> {
    let start = Instant::now();
    let m = moments_over(f, s)?;
    let (mean, err) = m.mean_and_error(s.tries);
    let v = mean * s.scale;
    Ok(IntegralEstimate {
        re: v.re,
        im: v.im,
        std_error: err * s.scale,
        n: s.len() as u64,
        seed: s.seed,
        tail_share: m.share(),
        high_variance: m.share() > HIGH_VARIANCE_SHARE,
        wall_time: start.elapsed(),
    })
}

/// Geometric shells `r0 2^-(k+1) < |zeta - z| <= r0 2^-k`, an inner ball and
/// the rest of the region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shells {
    pub r0: f64,
    pub count: usize,
}

impl Default for Shells {
    fn default() -> Shells {
        Shells { r0: 1.0, count: 20 }
    }
}

fn ball_volume(dim: usize, radius: f64) -> f64 {
    let half = dim as f64 / 2.0;
    PI.powf(half) / gamma_fn(half + 1.0) * radius.powi(dim as i32)
}

/// Gamma function at integers and half integers.
fn gamma_fn(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut v = PI.sqrt();
        let mut t = 0.5;
        while t < x - 0.25 {
            v *= t;
            t += 1.0;
        }
        v
    }
}

/// Uniform point of the shell `a < |w| <= b` in real dimension `dim`.
fn shell_point(rng: &mut ChaCha8Rng, dim: usize, a: f64, b: f64) -> Vec<f64> {
    let dir = loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let d = dim as i32;
    let u: f64 = rng.gen();
    let s = (a.powi(d) + u * (b.powi(d) - a.powi(d))).powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * s).collect()
}

/// Shell-stratified estimate of `∫_region f` around the point `z`, with
/// `n_points` split evenly across the strata.
pub fn shell_stratified(
    f: &PointFn<'_>,
    d: &DomainSpec,
    region: Region,
    z: &[C64],
    shells: Shells,
    n_points: usize,
    seed: u64,
) -> Result<IntegralEstimate, QuadError> {
    let start = Instant::now();
    let dim = 2 * d.n;
    let strata = shells.count + 2;
    let per = (n_points / strata).max(2);
    let mut value = C64::new(0.0, 0.0);
    let mut var = 0.0;
    let (mut sum_sq, mut max_sq) = (0.0f64, 0.0f64);
    // shells and the inner ball
    for k in 0..=shells.count {
        let b = shells.r0 * 0.5f64.powi(k as i32);
        let a = if k == shells.count { 0.0 } else { b / 2.0 };
        let vol = ball_volume(dim, b) - ball_volume(dim, a);
        let shards = per.div_ceil(SHARD);
        let parts: Vec<Result<Moments, QuadError>> = (0..shards)
            .into_par_iter()
            .map(|s| {
                let mut rng = shard_rng(seed, ((k as u64 + 1) << 32) | s as u64);
                let mut m = Moments::default();
                for _ in s * SHARD..per.min((s + 1) * SHARD) {
                    let w = shell_point(&mut rng, dim, a, b);
                    let p: Vec<C64> = (0..d.n).map(|j| z[j] + C64::new(w[2 * j], w[2 * j + 1])).collect();
                    if !region.contains(d, &p) {
                        continue;
                    }
                    let v = f(&p)?;
                    if !(v.re.is_finite() && v.im.is_finite()) {
                        return Err(QuadError::SingularSample(p));
                    }
                    m.push(v);
                }
                Ok(m)
            })
            .collect();
        let mut m = Moments::default();
        for p in parts {
            m.merge(&p?);
        }
        let (mean, err) = m.mean_and_error(per as u64);
        value += mean * vol;
        var += (err * vol).powi(2);
        sum_sq += m.sum_sq * (vol / per as f64).powi(2);
        max_sq = max_sq.max(m.max_sq * (vol / per as f64).powi(2));
    }
    // the region outside the outer shell, by rejection in the box
    let outer = sample(d, region, per, seed ^ 0x6f75_7465_7200_0000)?;
    let r0 = shells.r0;
    let masked = |p: &[C64]| -> Result<C64, QuadError> {
        let dist2: f64 = p.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
        if dist2 <= r0 * r0 {
            Ok(C64::new(0.0, 0.0))
        } else {
            f(p)
        }
    };
    let m = moments_over(&masked, &outer)?;
    let (mean, err) = m.mean_and_error(outer.tries);
    value += mean * outer.scale;
    var += (err * outer.scale).powi(2);
    let w = outer.scale / outer.tries as f64;
    sum_sq += m.sum_sq * w * w;
    max_sq = max_sq.max(m.max_sq * w * w);
    let share = if sum_sq > 0.0 { max_sq / sum_sq } else { 0.0 };
    Ok(IntegralEstimate {
        re: value.re,
        im: value.im,
        std_error: var.sqrt(),
        n: (per * strata) as u64,
        seed,
        tail_share: share,
        high_variance: share > HIGH_VARIANCE_SHARE,
        wall_time: start.elapsed(),
    })
}
