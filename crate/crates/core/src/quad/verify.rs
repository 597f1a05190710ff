use std::f64::consts::PI;

use num_traits::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    mc_integral, project_to_level, sample, shard_rng, shell_stratified, Estimate, QuadError, Region, Shells, SweepCell,
    SweepReport, VerificationReport, SHARD,
};
use crate::dforms::{
    dbar_jet, dbar_poly, formal_adjoint_theta, integrate_zeta_volume, omega_q, parse_test_form, BetaMetric,
    BoundaryPairing, DoubleForm, Form, HodgeStar, JetForm, KernelContext,
};
use crate::geom::{DomainSpec, GammaConvention, Poly};
use crate::jet::{Jet, C64};
use crate::ktype::integrability_threshold;

fn to_c(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|[a, b]| C64::new(*a, *b)).collect()
}

fn to_pairs(z: &[C64]) -> Vec<[f64; 2]> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Evaluates polynomial coefficients at a point.
fn eval_form(f: &Form<Poly>, z: &[C64]) -> DoubleForm {
    DoubleForm::from_terms(f.n(), f.terms().iter().map(|(m, p)| (*m, p.eval(z))).collect())
}

fn eval_jet_form(f: &Form<Poly>, z: &[C64]) -> JetForm {
    JetForm::from_terms(f.n(), f.terms().iter().map(|(m, p)| (*m, p.eval_jet(z))).collect())
}

/// Mixes a grid position into a seed.
fn cell_seed(seed: u64, a: usize, b: usize) -> u64 {
    seed ^ ((a as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ ((b as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

/// The standard exhaustion grid.
pub fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmkConfig {
    pub domain: String,
    pub q: usize,
    /// Test function, e.g. `zbar1`.
    pub form: String,
    pub z: Vec<Vec<[f64; 2]>>,
    pub n_samples: usize,
    pub seed: u64,
    /// Half width in `r` of the seed band for boundary sampling.
    pub band: f64,
    pub shells: Shells,
    pub tol: f64,
}

impl BmkConfig {
    pub fn new(d: &DomainSpec, form: &str, n_samples: usize, seed: u64) -> BmkConfig {
        let z = match d.n {
            1 => vec![vec![[0.3, 0.1]]],
            _ => {
                let pad = |v: Vec<[f64; 2]>| {
                    let mut v = v;
                    v.resize(d.n, [0.0, 0.0]);
                    v
                };
                vec![pad(vec![[0.3, 0.0]]), pad(vec![[0.1, 0.2], [-0.3, 0.0]]), pad(vec![[0.0, 0.0], [0.0, 0.5]])]
            }
        };
        BmkConfig {
            domain: d.name.clone(),
            q: 0,
            form: form.to_string(),
            z,
            n_samples,
            seed,
            band: 0.02,
            shells: Shells::default(),
            tol: if d.n == 1 { 1e-6 } else { 1e-2 },
        }
    }
}

/// Trapezoid rule on a boundary curve that is star shaped about the box
/// centre, doubling the node count until successive sums agree.
fn contour_integral(
    d: &DomainSpec,
    g: &(dyn Fn(&[C64], C64) -> Result<C64, QuadError> + Sync),
    tol: f64,
) -> Result<(C64, f64, usize), QuadError> {
    let c = C64::new((d.bbox[0][0] + d.bbox[0][1]) / 2.0, (d.bbox[1][0] + d.bbox[1][1]) / 2.0);
    if d.r(&[c]) >= 0.0 {
        return Err(QuadError::Unsupported("the box centre must lie inside the domain".into()));
    }
    let s_max = (d.bbox[0][1] - d.bbox[0][0]).hypot(d.bbox[1][1] - d.bbox[1][0]);
    let node = |theta: f64| -> Result<C64, QuadError> {
        let e = C64::from_polar(1.0, theta);
        let (mut lo, mut hi) = (0.0, s_max);
        if d.r(&[c + e * hi]) <= 0.0 {
            return Err(QuadError::Unsupported("boundary ray leaves the box".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d.r(&[c + e * mid]) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let s = 0.5 * (lo + hi);
        let p = c + e * s;
        let gr = d.real_gradient(&[p]);
        let ds =
            -(gr[0] * (-s * theta.sin()) + gr[1] * (s * theta.cos())) / (gr[0] * theta.cos() + gr[1] * theta.sin());
        let dp = e * ds + C64::new(0.0, 1.0) * e * s;
        g(&[p], dp)
    };
    let sum = |m: usize| -> Result<C64, QuadError> {
        let vals: Vec<Result<C64, QuadError>> =
            (0..m).into_par_iter().map(|k| node(2.0 * PI * k as f64 / m as f64)).collect();
        let mut s = zero();
        for v in vals {
            s += v?;
        }
        Ok(s * (2.0 * PI / m as f64))
    };
    let mut m = 32;
    let mut prev = sum(m)?;
    loop {
        m *= 2;
        let cur = sum(m)?;
        let diff = (cur - prev).norm();
        if diff <= tol * 1e-2 || m >= 1 << 16 {
            return Ok((cur, diff, m));
        }
        prev = cur;
    }
}

/// Reproduction of a test function from its boundary values and `∂̄`
/// through the Bochner-Martinelli-Koppelman kernel with the flat metric.
pub fn verify_bmk(d: &DomainSpec, cfg: &BmkConfig) -> Result<VerificationReport, QuadError> {
    let n = d.n;
    if cfg.q != 0 {
        return Err(QuadError::Unsupported(
            "only q = 0: for q >= 1 the last term differentiates a singular integral in z".into(),
        ));
    }
    let f = parse_test_form(&cfg.form, n)?;
    if f.terms().iter().any(|(m, _)| *m != 0) {
        return Err(QuadError::Unsupported("q = 0 needs a function, not a form".into()));
    }
    let f0 = f.coeff(0).cloned().unwrap_or_else(|| Poly::zero(n));
    let df = dbar_poly(&f);
    let ctx = KernelContext::new(d, BetaMetric::Flat);
    let mut report = VerificationReport::new("verify bmk", cfg);
    let zs: Vec<Vec<C64>> = cfg.z.iter().map(|z| to_c(z)).collect();
    for z in &zs {
        if z.len() != n {
            return Err(QuadError::Refused(format!("point {z:?} has the wrong dimension")));
        }
        let r = d.r(z);
        let grad = d.real_gradient(z).iter().map(|x| x * x).sum::<f64>().sqrt();
        if r >= 0.0 || -r <= 5.0 * cfg.band || -r / grad.max(1e-300) <= 5.0 * cfg.band / grad.max(1e-300) {
            return Err(QuadError::Refused(format!("point {z:?} is within the quadrature resolution of the boundary")));
        }
    }
    let boundary_set = if n > 1 {
        Some(sample(d, Region::Boundary { eps: 0.0, band: cfg.band, gamma_min: 0.0 }, cfg.n_samples, cfg.seed)?)
    } else {
        None
    };
    let pairing = BoundaryPairing::new(n);
    for (zi, z) in zs.iter().enumerate() {
        let boundary = match &boundary_set {
            Some(set) => {
                let g = |p: &[C64]| -> Result<C64, QuadError> {
                    let b0 = omega_q(&ctx.beta(p, z)?, 0);
                    let grad = d.real_gradient(p);
                    let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nu: Vec<f64> = grad.iter().map(|x| x / norm).collect();
                    let dens = pairing.density(&b0, &nu);
                    Ok(f0.eval(p) * dens.coeff(0).copied().unwrap_or(zero()))
                };
                let e = mc_integral(&g, set)?;
                Estimate::from_integral(format!("boundary[{zi}]"), &e)
            }
            None => {
                let g = |p: &[C64], dp: C64| -> Result<C64, QuadError> {
                    let b0 = omega_q(&ctx.beta(p, z)?, 0);
                    Ok(f0.eval(p) * b0.coeff(1).copied().unwrap_or(zero()) * dp)
                };
                let (v, err, m) = contour_integral(d, &g, cfg.tol)?;
                Estimate { label: format!("boundary[{zi}]"), re: v.re, im: v.im, std_error: err, n: m as u64, seed: 0 }
            }
        };
        let volume = if df.is_zero() {
            Estimate::exact(format!("volume[{zi}]"), 0.0, 0, cfg.seed)
        } else {
            let g = |p: &[C64]| -> Result<C64, QuadError> {
                let b0 = omega_q(&ctx.beta(p, z)?, 0);
                let top = integrate_zeta_volume(&eval_form(&df, p).wedge(&b0));
                Ok(-top.coeff(0).copied().unwrap_or(zero()))
            };
            let region = Region::Interior { eps: 0.0 };
            let e = shell_stratified(&g, d, region, z, cfg.shells, cfg.n_samples, cell_seed(cfg.seed, zi, 1))?;
            Estimate::from_integral(format!("volume[{zi}]"), &e)
        };
        let recon = C64::new(boundary.re + volume.re, boundary.im + volume.im);
        let target = f0.eval(z);
        let residual = (recon - target).norm();
        let sigma = boundary.std_error.hypot(volume.std_error);
        report.estimate(boundary);
        report.estimate(volume);
        report.estimate(Estimate {
            label: format!("reconstruction[{zi}]"),
            re: recon.re,
            im: recon.im,
            std_error: sigma,
            n: cfg.n_samples as u64,
            seed: cfg.seed,
        });
        report.estimate(Estimate {
            label: format!("target[{zi}]"),
            re: target.re,
            im: target.im,
            std_error: 0.0,
            n: 0,
            seed: 0,
        });
        report.verdict(
            format!("residual[{zi}]"),
            residual <= cfg.tol,
            true,
            format!("|reconstruction - f(z)| = {residual:.3e} (std error {sigma:.1e}, tolerance {:.0e})", cfg.tol),
        );
    }
    Ok(report)
}

/// Which way a sweep is expected to go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepExpectation {
    /// Below the integrability threshold: bounded, gating.
    Bounded,
    /// Above it: growth, reported as a diagnostic.
    Growth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalConfig {
    pub domain: String,
    /// Majorant `gamma(z)^2 / (P^(n - j/2 - mu) |phi|^(mu+1))`.
    pub j: i32,
    pub mu: i32,
    pub lambda: f64,
    pub eps: Vec<f64>,
    /// Base points near the boundary; each is moved to `r_eps = -depth * eps`.
    pub panel: Vec<Vec<[f64; 2]>>,
    pub depth: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub shells: Shells,
    pub expect: SweepExpectation,
    pub ratio_tol: f64,
    pub growth_min: f64,
}

impl TypicalConfig {
    pub fn new(d: &DomainSpec, lambda: f64, n_samples: usize, seed: u64) -> Result<TypicalConfig, QuadError> {
        let (j, mu) = (1, 1);
        let thr = integrability_threshold(j, d.n as u32)
            .map_err(|e| QuadError::Unsupported(e.to_string()))?
            .to_f64()
            .unwrap_or(f64::INFINITY);
        let panel = if d.name == "pinched" {
            vec![
                vec![[1.0, 0.0], [0.0, 0.0]],
                vec![[-1.0, 0.0], [0.0, 0.0]],
                vec![[0.5, 0.0], [0.433, 0.0]],
                vec![[0.5, 0.0], [0.0, 0.433]],
                vec![[-0.7, 0.0], [0.0, 0.5]],
            ]
        } else {
            (0..5)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / 5.0;
                    let mut v = vec![[0.0, 0.0]; d.n];
                    v[0] = [t.cos(), 0.0];
                    if d.n > 1 {
                        v[1] = [0.0, t.sin()];
                    }
                    v
                })
                .collect()
        };
        Ok(TypicalConfig {
            domain: d.name.clone(),
            j,
            mu,
            lambda,
            eps: default_eps_grid(),
            panel,
            depth: 1e-3,
            n_samples,
            seed,
            shells: Shells::default(),
            expect: if lambda < thr { SweepExpectation::Bounded } else { SweepExpectation::Growth },
            ratio_tol: 2.0,
            growth_min: 2.0,
        })
    }

    pub fn majorant_label(&self) -> String {
        format!("gamma(z)^2/(P^(n-{}/2-{})|phi|^{})", self.j, self.mu, self.mu + 1)
    }
}

/// `∫_{D_eps} |majorant|^lambda dV(zeta)` over the exhaustion grid and a
/// panel of points approaching the boundary with `eps`.
pub fn verify_typical_sweep(d: &DomainSpec, cfg: &TypicalConfig) -> Result<VerificationReport, QuadError> {
    if !(cfg.lambda >= 0.0) {
        return Err(QuadError::Refused(format!("lambda = {} must be non-negative", cfg.lambda)));
    }
    let n = d.n as f64;
    let p_exp = n - f64::from(cfg.j) / 2.0 - f64::from(cfg.mu);
    let phi_exp = f64::from(cfg.mu + 1);
    let mut sweep = SweepReport {
        majorant: cfg.majorant_label(),
        lambda: cfg.lambda,
        eps: cfg.eps.clone(),
        z_panel: Vec::new(),
        cells: Vec::new(),
        ratios: Vec::new(),
        monotone: Vec::new(),
        growth: Vec::new(),
    };
    for (zi, base) in cfg.panel.iter().enumerate() {
        let base = to_c(base);
        let mut per_eps = Vec::new();
        for (ei, &eps) in cfg.eps.iter().enumerate() {
            let z = project_to_level(d, &base, -eps * (1.0 + cfg.depth))
                .ok_or_else(|| QuadError::Refused(format!("panel point {zi} cannot be moved to depth {eps}")))?;
            per_eps.push(to_pairs(&z));
            let gz = d.gamma(&z, eps, GammaConvention::Euclid)?;
            let f = |p: &[C64]| -> Result<C64, QuadError> {
                let pe = d.p_eps(p, &z, eps)?;
                let phi = d.phi_eps(p, &z, eps).norm();
                let m = gz * gz / (pe.powf(p_exp) * phi.powf(phi_exp));
                Ok(C64::new(m.powf(cfg.lambda), 0.0))
            };
            let region = Region::Interior { eps };
            let e = shell_stratified(&f, d, region, &z, cfg.shells, cfg.n_samples, cell_seed(cfg.seed, ei, zi))?;
            sweep.cells.push(SweepCell {
                eps,
                z_index: zi,
                estimate: Estimate::from_integral(format!("eps={eps} z{zi}"), &e),
            });
        }
        sweep.z_panel.push(per_eps);
    }
    sweep.summarize();
    let mut report = VerificationReport::new("verify typical", cfg);
    let ratio_text = |s: &SweepReport| {
        s.ratios
            .iter()
            .map(|r| r.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()))
            .collect::<Vec<_>>()
            .join(", ")
    };
    match cfg.expect {
        SweepExpectation::Bounded => {
            let ok = sweep.ratios.iter().all(|r| r.is_some_and(|x| x <= cfg.ratio_tol));
            report.verdict(
                "uniformly bounded",
                ok,
                true,
                format!("max/min across eps per panel point: [{}], tolerance {}", ratio_text(&sweep), cfg.ratio_tol),
            );
        }
        SweepExpectation::Growth => {
            let ok = sweep.monotone.iter().all(|m| *m)
                && sweep.growth.iter().all(|g| g.is_some_and(|x| x >= cfg.growth_min));
            let growth =
                sweep.growth.iter().map(|g| g.map(|x| format!("{x:.3}")).unwrap_or_default()).collect::<Vec<_>>();
            report.verdict(
                "grows above threshold",
                ok,
                false,
                format!("last/first per panel point: [{}], monotone: {:?}", growth.join(", "), sweep.monotone),
            );
        }
    }
    report.sweeps.push(sweep);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiestConfig {
    pub domain: String,
    pub eps: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
    /// Width of the strip `|r_eps| < delta` holding `zeta`.
    pub delta: f64,
    /// Largest separation `|zeta - z|`.
    pub radius: f64,
    pub spread_tol: f64,
}

impl PhiestConfig {
    pub fn new(d: &DomainSpec, pairs: usize, seed: u64) -> PhiestConfig {
        PhiestConfig {
            domain: d.name.clone(),
            eps: default_eps_grid(),
            pairs,
            seed,
            delta: d.patch.delta,
            radius: d.patch.eps_patch.sqrt(),
            spread_tol: 2.0,
        }
    }
}

fn unit_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn offset(z: &[C64], dir: &[f64], t: f64) -> Vec<C64> {
    z.iter().enumerate().map(|(j, c)| c + C64::new(dir[2 * j], dir[2 * j + 1]) * t).collect()
}

/// Pairs `(zeta, z)` with `zeta` in the strip `-delta < r_eps < 0` and `z` in
/// `D_eps` at separation given by `sep(rng)`.
fn sample_pairs(
    d: &DomainSpec,
    eps: f64,
    delta: f64,
    count: usize,
    seed: u64,
    stream: u64,
    sep: &dyn Fn(&mut rand_chacha::ChaCha8Rng) -> f64,
) -> Result<Vec<(Vec<C64>, Vec<C64>)>, QuadError> {
    let mut rng = shard_rng(seed, stream);
    let mut out = Vec::with_capacity(count);
    let max_tries = count as u64 * 20_000;
    let mut tries = 0u64;
    while out.len() < count {
        tries += 1;
        if tries > max_tries {
            return Err(QuadError::InsufficientPairs { got: out.len(), want: count });
        }
        let zeta = d.random_box_point(&mut rng);
        let re = d.r_eps(&zeta, eps);
        if !(re < 0.0 && re > -delta) {
            continue;
        }
        let dir = unit_direction(&mut rng, 2 * d.n);
        let t = sep(&mut rng);
        let z = offset(&zeta, &dir, t);
        if d.r_eps(&z, eps) < 0.0 {
            out.push((zeta, z));
        }
    }
    Ok(out)
}

/// Lower bound `|phi_eps| >= c (|<∂r_eps(z), zeta - z>| + rho^2)` on sampled
/// pairs, uniformly in `eps`.
pub fn verify_phiest(d: &DomainSpec, cfg: &PhiestConfig) -> Result<VerificationReport, QuadError> {
    let mut report = VerificationReport::new("verify phiest", cfg);
    let mut mins = Vec::new();
    let dim = 2 * d.n;
    for (ei, &eps) in cfg.eps.iter().enumerate() {
        let radius = cfg.radius;
        let sep = move |rng: &mut rand_chacha::ChaCha8Rng| radius * rng.gen::<f64>().powf(1.0 / dim as f64);
        let pairs = sample_pairs(d, eps, cfg.delta, cfg.pairs, cfg.seed, ei as u64, &sep)?;
        let ratios: Vec<f64> = pairs
            .par_iter()
            .map(|(zeta, z)| {
                let phi = d.phi_eps(zeta, z, eps).norm();
                let dr = d.dr(z);
                let lin: C64 = dr.iter().zip(zeta.iter().zip(z)).map(|(g, (a, b))| g * (a - b)).sum();
                phi / (lin.norm() + d.rho2(zeta, z))
            })
            .collect();
        let c = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        report.estimate(Estimate::exact(format!("c[eps={eps}]"), c, pairs.len() as u64, cfg.seed));
        mins.push(c);
    }
    let max = mins.iter().cloned().fold(f64::MIN, f64::max);
    let min = mins.iter().cloned().fold(f64::INFINITY, f64::min);
    report.verdict("positive", min > 0.0 && min.is_finite(), true, format!("smallest constant {min:.4e}"));
    report.verdict(
        "eps spread",
        min > 0.0 && max / min <= cfg.spread_tol,
        true,
        format!("max/min = {:.4} (tolerance {})", max / min, cfg.spread_tol),
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhisymmConfig {
    pub domain: String,
    pub eps: Vec<f64>,
    pub separations: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
    pub delta: f64,
    pub stability_tol: f64,
}

impl PhisymmConfig {
    pub fn new(d: &DomainSpec, pairs: usize, seed: u64) -> PhisymmConfig {
        PhisymmConfig {
            domain: d.name.clone(),
            eps: default_eps_grid(),
            separations: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            pairs,
            seed,
            delta: d.patch.delta,
            stability_tol: 2.0,
        }
    }
}

/// Differences below this multiple of machine precision count as zero.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// `sup |phi_eps(zeta,z) - phi*_eps(zeta,z)| / |zeta - z|^3` as the pair
/// separation halves, with `phi*(zeta,z) = conj(phi(z,zeta))`. The plain swap
/// `phi(z,zeta)` is reported alongside.
pub fn verify_phisymm(d: &DomainSpec, cfg: &PhisymmConfig) -> Result<VerificationReport, QuadError> {
    let mut report = VerificationReport::new("verify phisymm", cfg);
    let mut sups = Vec::new();
    let mut plain = Vec::new();
    for (si, &s) in cfg.separations.iter().enumerate() {
        let (mut sup, mut sup_plain) = (0.0f64, 0.0f64);
        for (ei, &eps) in cfg.eps.iter().enumerate() {
            let sep = move |_: &mut rand_chacha::ChaCha8Rng| s;
            let stream = (si * cfg.eps.len() + ei) as u64;
            let pairs = sample_pairs(d, eps, cfg.delta, cfg.pairs, cfg.seed, stream, &sep)?;
            let vals: Vec<(f64, f64)> = pairs
                .par_iter()
                .map(|(zeta, z)| {
                    let a = d.phi_eps(zeta, z, eps);
                    let b = d.phi_eps(z, zeta, eps);
                    let floor = ROUNDOFF * (1.0 + a.norm() + b.norm());
                    let sym = (a - b.conj()).norm();
                    let sym = if sym <= floor { 0.0 } else { sym };
                    (sym / s.powi(3), (a - b).norm() / s.powi(3))
                })
                .collect();
            for (x, y) in vals {
                sup = sup.max(x);
                sup_plain = sup_plain.max(y);
            }
        }
        report.estimate(Estimate::exact(format!("C[sep={s}]"), sup, (cfg.pairs * cfg.eps.len()) as u64, cfg.seed));
        report.estimate(Estimate::exact(
            format!("plain swap[sep={s}]"),
            sup_plain,
            (cfg.pairs * cfg.eps.len()) as u64,
            cfg.seed,
        ));
        sups.push(sup);
        plain.push(sup_plain);
    }
    let max = sups.iter().cloned().fold(0.0, f64::max);
    let min = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let finite = sups.iter().all(|x| x.is_finite());
    let stable = max == 0.0 || (min > 0.0 && max / min <= cfg.stability_tol);
    report.verdict("finite", finite, true, format!("largest constant {max:.4e}"));
    let detail = if max == 0.0 {
        "symmetric to roundoff at every separation".to_string()
    } else {
        format!("max/min = {:.4} (tolerance {})", max / min, cfg.stability_tol)
    };
    report.verdict("stable under halving", stable, true, detail);
    let growth = plain.last().copied().unwrap_or(0.0) / plain.first().copied().unwrap_or(1.0).max(1e-300);
    report.verdict(
        "plain swap",
        true,
        false,
        format!("phi(z,zeta) in place of its conjugate: last/first = {growth:.3e}"),
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1diffConfig {
    pub domain: String,
    pub radii: Vec<f64>,
    pub directions: usize,
    pub seed: u64,
    pub ratio_tol: f64,
    /// Relative finite-difference step.
    pub step: f64,
}

impl C1diffConfig {
    pub fn new(d: &DomainSpec, seed: u64) -> C1diffConfig {
        C1diffConfig {
            domain: d.name.clone(),
            radii: vec![1e-1, 1e-2, 1e-3, 1e-4],
            directions: 8,
            seed,
            ratio_tol: 1.5,
            step: 1e-3,
        }
    }
}

/// Gradient bounds for `r / gamma` near a boundary critical point.
pub fn verify_c1diff(d: &DomainSpec, cfg: &C1diffConfig) -> Result<VerificationReport, QuadError> {
    let crit = d
        .boundary_critical_points()
        .into_iter()
        .next()
        .ok_or_else(|| QuadError::Unsupported(format!("`{}` has no boundary critical point", d.name)))?;
    let dim = 2 * d.n;
    let g = |p: &[C64]| -> Result<f64, QuadError> { Ok(d.r(p) / d.gamma(p, 0.0, GammaConvention::Euclid)?) };
    let grad = |p: &[C64], h: f64| -> Result<Vec<f64>, QuadError> {
        (0..dim)
            .map(|k| {
                let mut e = vec![0.0; dim];
                e[k] = 1.0;
                Ok((g(&offset(p, &e, h))? - g(&offset(p, &e, -h))?) / (2.0 * h))
            })
            .collect()
    };
    let mut rng = shard_rng(cfg.seed, 0);
    let mut dirs = vec![{
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        e
    }];
    while dirs.len() < cfg.directions.max(1) {
        dirs.push(unit_direction(&mut rng, dim));
    }
    let mut report = VerificationReport::new("verify c1diff", cfg);
    let mut sups = Vec::new();
    let mut slopes = Vec::new();
    for &t in &cfg.radii {
        let mut sup = 0.0f64;
        for (k, dir) in dirs.iter().enumerate() {
            let p = offset(&crit, dir, t);
            let gr = grad(&p, cfg.step * t)?;
            sup = sup.max(gr.iter().map(|x| x * x).sum::<f64>().sqrt());
            if k == 0 {
                slopes.push(gr[0].abs());
            }
        }
        report.estimate(Estimate::exact(format!("sup|grad|[t={t}]"), sup, dirs.len() as u64, cfg.seed));
        report.estimate(Estimate::exact(format!("axis slope[t={t}]"), slopes[slopes.len() - 1], 1, cfg.seed));
        sups.push(sup);
    }
    let worst = sups.windows(2).map(|w| (w[1] / w[0]).max(w[0] / w[1])).fold(1.0, f64::max);
    let finite = sups.iter().all(|x| x.is_finite());
    report.verdict(
        "bounded",
        finite,
        true,
        format!("largest gradient {:.4}", sups.iter().cloned().fold(0.0, f64::max)),
    );
    report.verdict(
        "no growth",
        finite && worst <= cfg.ratio_tol,
        true,
        format!("largest consecutive-radius ratio {worst:.4} (tolerance {})", cfg.ratio_tol),
    );
    let slope_ok = slopes.iter().all(|s| (0.5..=2.0).contains(s));
    report.verdict("axis slope", slope_ok, true, format!("|d(r/gamma)/dx| along the first axis: {slopes:.4?}"));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfConfig {
    pub domain: String,
    pub forms: Vec<String>,
    pub eps: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub stability_tol: f64,
}

impl LinfConfig {
    pub fn new(d: &DomainSpec, n_samples: usize, seed: u64) -> LinfConfig {
        let forms = if d.n >= 2 {
            vec!["0".into(), "zbar2*dzbar1".into(), "z1*dzbar1 + zbar1*z2*dzbar2".into(), "1*dzbar2".into()]
        } else {
            vec!["0".into(), "zbar1*dzbar1".into(), "z1^2*dzbar1".into()]
        };
        LinfConfig { domain: d.name.clone(), forms, eps: default_eps_grid(), n_samples, seed, stability_tol: 4.0 }
    }
}

/// Sides of the weighted sup-norm estimate for one form on one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinfSides {
    pub lhs: f64,
    pub rhs: f64,
}

/// `sup gamma^{3(n+2)} |f|` against `sup gamma^2 |∂̄f| + sup gamma^2 |ϑf| + ||f||_2`,
/// with flat pointwise norms.
pub fn linf_sides(
    d: &DomainSpec,
    f: &Form<Poly>,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<LinfSides, QuadError> {
    let n = d.n;
    let star = HodgeStar::flat(n);
    let set = sample(d, Region::Interior { eps }, n_samples, seed)?;
    let df = dbar_poly(f);
    let norm = |a: &DoubleForm| star.inner(a, a).re.max(0.0).sqrt();
    let rows: Vec<Result<(f64, f64, f64), QuadError>> = (0..set.len().div_ceil(SHARD))
        .into_par_iter()
        .map(|k| {
            let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
            for i in k * SHARD..set.len().min((k + 1) * SHARD) {
                let p = set.point(i);
                let g = d.gamma(&p, eps, GammaConvention::Euclid)?;
                a = a.max(g.powi(3 * (n as i32 + 2)) * norm(&eval_form(f, &p)));
                b = b.max(g * g * norm(&eval_form(&df, &p)));
                c = c.max(g * g * norm(&formal_adjoint_theta(&eval_jet_form(f, &p), &star)));
            }
            Ok((a, b, c))
        })
        .collect();
    let (mut lhs, mut sup_dbar, mut sup_theta) = (0.0f64, 0.0f64, 0.0f64);
    for r in rows {
        let (a, b, c) = r?;
        lhs = lhs.max(a);
        sup_dbar = sup_dbar.max(b);
        sup_theta = sup_theta.max(c);
    }
    let l2 = mc_integral(&|p: &[C64]| Ok(C64::new(star.inner(&eval_form(f, p), &eval_form(f, p)).re, 0.0)), &set)?;
    Ok(LinfSides { lhs, rhs: sup_dbar + sup_theta + l2.re.max(0.0).sqrt() })
}

/// Fitted constants of the weighted sup-norm estimate on a panel of forms.
pub fn verify_linf(d: &DomainSpec, cfg: &LinfConfig) -> Result<VerificationReport, QuadError> {
    let mut report = VerificationReport::new("verify linf", cfg);
    for (fi, text) in cfg.forms.iter().enumerate() {
        let f = parse_test_form(text, d.n)?;
        let mut ratios = Vec::new();
        for (ei, &eps) in cfg.eps.iter().enumerate() {
            let s = linf_sides(d, &f, eps, cfg.n_samples, cell_seed(cfg.seed, ei, 0))?;
            report.estimate(Estimate::exact(format!("lhs[{fi}, eps={eps}]"), s.lhs, cfg.n_samples as u64, cfg.seed));
            report.estimate(Estimate::exact(format!("rhs[{fi}, eps={eps}]"), s.rhs, cfg.n_samples as u64, cfg.seed));
            if s.lhs == 0.0 && s.rhs == 0.0 {
                continue;
            }
            ratios.push(s.lhs / s.rhs);
        }
        if ratios.is_empty() {
            report.verdict(format!("form {fi}"), true, true, format!("`{text}`: both sides vanish"));
            continue;
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let ok = ratios.iter().all(|r| r.is_finite()) && (max == 0.0 || max / min <= cfg.stability_tol);
        report.verdict(
            format!("form {fi}"),
            ok,
            true,
            format!("`{text}`: fitted constant {max:.4e}, eps spread {:.3}", if min > 0.0 { max / min } else { 1.0 }),
        );
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointConfig {
    pub domain: String,
    /// Grid points in total; the per-axis count is the `2n`-th root.
    pub n_points: usize,
    pub tol: f64,
    pub center_u: Vec<[f64; 2]>,
    pub center_v: Vec<[f64; 2]>,
    pub radius: f64,
}

impl AdjointConfig {
    pub fn new(d: &DomainSpec, n_points: usize) -> AdjointConfig {
        let mut cu = vec![[0.0, 0.0]; d.n];
        let mut cv = vec![[0.0, 0.0]; d.n];
        cu[0] = [0.1, 0.0];
        cv[d.n - 1] = [0.0, -0.1];
        AdjointConfig { domain: d.name.clone(), n_points, tol: 1e-4, center_u: cu, center_v: cv, radius: 0.75 }
    }
}

/// `exp(-1 / (1 - |zeta - c|^2 / R^2))` inside the ball, zero outside.
fn bump(p: &[C64], c: &[C64], radius: f64) -> Jet {
    let m = p.len();
    let mut s = Jet::real(0.0, m);
    for j in 0..m {
        let w = Jet::var(p[j], j, m) - Jet::constant(c[j], m);
        s = s + w * w.conj();
    }
    let s = s.scale(C64::new(1.0 / (radius * radius), 0.0));
    let x = s.v.re;
    if x >= 1.0 {
        return Jet::real(0.0, m);
    }
    let f = (-1.0 / (1.0 - x)).exp();
    s.map_real(f, -f / ((1.0 - x) * (1.0 - x)))
}

/// Integration by parts `<∂̄u, v> = <u, ϑv>` for bump-supported `u` and a
/// (0,1)-form `v`, on a midpoint grid with the flat metric.
pub fn verify_adjoint(d: &DomainSpec, cfg: &AdjointConfig) -> Result<VerificationReport, QuadError> {
    let n = d.n;
    let cu = to_c(&cfg.center_u);
    let cv = to_c(&cfg.center_v);
    if cu.len() != n || cv.len() != n {
        return Err(QuadError::Refused("bump centres have the wrong dimension".into()));
    }
    let star = HodgeStar::flat(n);
    let u = |p: &[C64]| -> Jet {
        let m = n;
        let poly =
            Jet::real(1.0, m) + Jet::var(p[0], 0, m) + Jet::conj_var(p[n - 1], n - 1, m).scale(C64::new(0.0, 1.0));
        bump(p, &cu, cfg.radius) * poly
    };
    let v = |p: &[C64]| -> JetForm {
        let m = n;
        let b = bump(p, &cv, cfg.radius);
        let terms = (0..n)
            .map(|j| {
                let a = Jet::var(p[(j + 1) % n], (j + 1) % n, m) + Jet::real(0.5, m);
                let c = Jet::conj_var(p[j], j, m) * Jet::var(p[0], 0, m);
                (
                    1u32 << crate::dforms::bit(n, crate::dforms::Family::DZetaBar, j),
                    b * (a + c.scale(C64::new(0.0, 1.0))),
                )
            })
            .collect();
        JetForm::from_terms(n, terms)
    };
    let per_axis = (cfg.n_points as f64).powf(1.0 / (2 * n) as f64).round().max(2.0) as usize;
    let lo: Vec<f64> = (0..2 * n)
        .map(|k| {
            let (a, b) = (cu[k / 2], cv[k / 2]);
            let (x, y) = if k % 2 == 0 { (a.re, b.re) } else { (a.im, b.im) };
            x.min(y) - cfg.radius
        })
        .collect();
    let hi: Vec<f64> = (0..2 * n)
        .map(|k| {
            let (a, b) = (cu[k / 2], cv[k / 2]);
            let (x, y) = if k % 2 == 0 { (a.re, b.re) } else { (a.im, b.im) };
            x.max(y) + cfg.radius
        })
        .collect();
    let h: Vec<f64> = (0..2 * n).map(|k| (hi[k] - lo[k]) / per_axis as f64).collect();
    let cell = h.iter().product::<f64>();
    let total = per_axis.pow(2 * n as u32);
    let point = |idx: usize| -> Vec<C64> {
        let mut rest = idx;
        let mut x = vec![0.0; 2 * n];
        for k in 0..2 * n {
            x[k] = lo[k] + (rest % per_axis) as f64 * h[k] + 0.5 * h[k];
            rest /= per_axis;
        }
        (0..n).map(|j| C64::new(x[2 * j], x[2 * j + 1])).collect()
    };
    let parts: Vec<Result<(C64, C64, f64), QuadError>> = (0..total.div_ceil(SHARD))
        .into_par_iter()
        .map(|k| {
            let (mut a, mut b, mut worst) = (zero(), zero(), f64::NEG_INFINITY);
            for idx in k * SHARD..total.min((k + 1) * SHARD) {
                let p = point(idx);
                let uj = u(&p);
                let vj = v(&p);
                if uj.v == zero() && vj.terms().iter().all(|(_, x)| x.v == zero()) {
                    continue;
                }
                worst = worst.max(d.r(&p));
                let du = dbar_jet(&JetForm::scalar(n, uj));
                let vv = DoubleForm::from_terms(n, vj.terms().iter().map(|(m, x)| (*m, x.v)).collect());
                a += star.inner(&du, &vv);
                let th = formal_adjoint_theta(&vj, &star);
                b += uj.v * th.coeff(0).copied().unwrap_or(zero()).conj();
            }
            Ok((a, b, worst))
        })
        .collect();
    let (mut lhs, mut rhs, mut worst) = (zero(), zero(), f64::NEG_INFINITY);
    for p in parts {
        let (a, b, w) = p?;
        lhs += a;
        rhs += b;
        worst = worst.max(w);
    }
    if worst >= 0.0 {
        return Err(QuadError::Refused("test form supports leave the domain".into()));
    }
    lhs *= cell;
    rhs *= cell;
    let mut report = VerificationReport::new("verify adjoint", cfg);
    report.estimate(Estimate {
        label: "<dbar u, v>".into(),
        re: lhs.re,
        im: lhs.im,
        std_error: 0.0,
        n: total as u64,
        seed: 0,
    });
    report.estimate(Estimate {
        label: "<u, theta v>".into(),
        re: rhs.re,
        im: rhs.im,
        std_error: 0.0,
        n: total as u64,
        seed: 0,
    });
    let residual = (lhs - rhs).norm();
    let flipped = (lhs + rhs).norm();
    report.verdict(
        "integration by parts",
        residual <= cfg.tol,
        true,
        format!(
            "|<dbar u, v> - <u, theta v>| = {residual:.3e} (tolerance {:.0e}, {per_axis} points per axis)",
            cfg.tol
        ),
    );
    report.verdict(
        "opposite sign detectable",
        flipped > 100.0 * cfg.tol,
        true,
        format!("with theta = +*d* the residual would be {flipped:.3e}"),
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateConfig {
    pub domain: String,
    pub region: Region,
    /// `one`, `rho:<t>` for `|zeta - z|^t`, or a polynomial function.
    pub integrand: String,
    pub z: Option<Vec<[f64; 2]>>,
    pub n_samples: usize,
    pub seed: u64,
    pub stratified: bool,
    pub shells: Shells,
}

/// A single integral, plain or stratified.
pub fn run_integrate(d: &DomainSpec, cfg: &IntegrateConfig) -> Result<VerificationReport, QuadError> {
    let z = cfg.z.as_ref().map(|v| to_c(v));
    let f: Box<dyn Fn(&[C64]) -> Result<C64, QuadError> + Sync> = if cfg.integrand == "one" {
        Box::new(|_: &[C64]| Ok(C64::new(1.0, 0.0)))
    } else if let Some(t) = cfg.integrand.strip_prefix("rho:") {
        let t: f64 = t.parse().map_err(|_| QuadError::Refused(format!("bad exponent in `{}`", cfg.integrand)))?;
        let z = z.clone().ok_or_else(|| QuadError::Refused("`rho:` needs a point z".into()))?;
        Box::new(move |p: &[C64]| {
            let r2: f64 = p.iter().zip(&z).map(|(a, b)| (a - b).norm_sqr()).sum();
            Ok(C64::new(r2.powf(t / 2.0), 0.0))
        })
    } else {
        let form = parse_test_form(&cfg.integrand, d.n)?;
        if form.terms().iter().any(|(m, _)| *m != 0) {
            return Err(QuadError::Unsupported("integrands are functions".into()));
        }
        let p0 = form.coeff(0).cloned().unwrap_or_else(|| Poly::zero(d.n));
        Box::new(move |p: &[C64]| Ok(p0.eval(p)))
    };
    let e = if cfg.stratified {
        let z = z.ok_or_else(|| QuadError::Refused("stratification needs a point z".into()))?;
        shell_stratified(&*f, d, cfg.region, &z, cfg.shells, cfg.n_samples, cfg.seed)?
    } else {
        mc_integral(&*f, &sample(d, cfg.region, cfg.n_samples, cfg.seed)?)?
    };
    let mut report = VerificationReport::new("integrate", cfg);
    report.estimate(Estimate::from_integral("integral", &e));
    report.verdict(
        "finite",
        e.re.is_finite() && e.im.is_finite(),
        true,
        format!("value {:.6e} +- {:.1e}", e.re, e.std_error),
    );
    report.verdict(
        "variance",
        !e.high_variance,
        false,
        format!("largest single-sample share of the second moment {:.3e}", e.tail_share),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ball, pinched};

    #[test]
    fn disc_cauchy_formula() {
        let d = ball(1);
        let cfg = BmkConfig::new(&d, "z1^3", 0, 1);
        let r = verify_bmk(&d, &cfg).unwrap();
        assert!(r.pass, "{}", super::super::render_report(&r));
    }

    #[test]
    fn disc_pompeiu_formula() {
        let d = ball(1);
        let mut cfg = BmkConfig::new(&d, "zbar1*z1", 200_000, 3);
        cfg.tol = 2e-2;
        let r = verify_bmk(&d, &cfg).unwrap();
        assert!(r.pass, "{}", super::super::render_report(&r));
    }

    #[test]
    fn bmk_refuses_boundary_points_and_higher_degree() {
        let d = ball(2);
        let mut cfg = BmkConfig::new(&d, "1", 1000, 1);
        cfg.z = vec![vec![[0.999, 0.0], [0.0, 0.0]]];
        assert!(matches!(verify_bmk(&d, &cfg), Err(QuadError::Refused(_))));
        cfg.q = 1;
        assert!(matches!(verify_bmk(&d, &cfg), Err(QuadError::Unsupported(_))));
    }

    #[test]
    fn sweep_at_zero_lambda_is_the_volume() {
        let d = ball(2);
        let mut cfg = TypicalConfig::new(&d, 0.0, 20_000, 4).unwrap();
        cfg.panel.truncate(1);
        let r = verify_typical_sweep(&d, &cfg).unwrap();
        let s = &r.sweeps[0];
        for c in &s.cells {
            let vol = PI * PI / 2.0 * (1.0 - c.eps).powi(2);
            assert!((c.estimate.re - vol).abs() < 4.0 * c.estimate.std_error + 1e-9, "{c:?}");
        }
        assert!(r.pass);
    }

    #[test]
    fn c1diff_on_the_pinched_domain() {
        let d = pinched();
        let r = verify_c1diff(&d, &C1diffConfig::new(&d, 2)).unwrap();
        assert!(r.pass, "{}", super::super::render_report(&r));
    }

    #[test]
    fn phisymm_is_exact_on_the_ball() {
        let d = ball(2);
        let r = verify_phisymm(&d, &PhisymmConfig::new(&d, 500, 5)).unwrap();
        assert!(r.pass);
        assert!(r.estimates.iter().filter(|e| e.label.starts_with("C[")).all(|e| e.re == 0.0));
    }

    #[test]
    fn linf_scaling_and_zero_form() {
        let d = ball(2);
        let f = parse_test_form("zbar2*dzbar1", 2).unwrap();
        let f10 = parse_test_form("10*zbar2*dzbar1", 2).unwrap();
        let a = linf_sides(&d, &f, 0.05, 4000, 1).unwrap();
        let b = linf_sides(&d, &f10, 0.05, 4000, 1).unwrap();
        assert!(((b.lhs / b.rhs) - (a.lhs / a.rhs)).abs() <= 1e-12 * (a.lhs / a.rhs));
        assert!((b.lhs - 10.0 * a.lhs).abs() <= 1e-12 * b.lhs);
        let z = linf_sides(&d, &parse_test_form("0", 2).unwrap(), 0.05, 4000, 1).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }

    #[test]
    fn adjoint_on_a_coarse_grid() {
        let d = ball(2);
        let r = verify_adjoint(&d, &AdjointConfig::new(&d, 20usize.pow(4))).unwrap();
        assert!(r.pass, "{}", super::super::render_report(&r));
    }

    #[test]
    fn reports_are_reproducible() {
        let d = pinched();
        let cfg = PhiestConfig::new(&d, 300, 8);
        let a = verify_phiest(&d, &cfg).unwrap().to_json();
        let b = verify_phiest(&d, &cfg).unwrap().to_json();
        assert_eq!(a, b);
    }
}
