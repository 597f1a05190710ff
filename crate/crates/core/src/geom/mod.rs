//! Concrete domains and their geometry: defining function, exhaustion,
//! Levi metric, support function, singularity gauge, frames and Morse data.

mod poly;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use poly::{Monomial, Poly};

use crate::jet::{Jet, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("unknown builtin domain `{0}`")]
    UnknownDomain(String),
    #[error("invalid domain: {0}")]
    Invalid(String),
    #[error("Levi metric is not positive definite at {0:?}")]
    SingularMetric(Vec<C64>),
    #[error("gamma vanishes at {0:?}")]
    SingularWeight(Vec<C64>),
    #[error("gamma {gamma:.3e} is below the threshold {min:.3e}")]
    GammaBelowThreshold { gamma: f64, min: f64 },
    #[error("not a critical point: |grad r| = {0:.3e}")]
    NotCritical(f64),
    #[error("degenerate critical point: Hessian eigenvalue {0:.3e}")]
    Degenerate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaConvention {
    #[default]
    Euclid,
    LeviDual,
}

impl std::str::FromStr for GammaConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclid" => Ok(GammaConvention::Euclid),
            "levi_dual" | "levi-dual" => Ok(GammaConvention::LeviDual),
            _ => Err(format!("unknown gamma convention `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Width of the boundary strip `|r| < delta`.
    pub delta: f64,
    /// The support function is `F - r` for `rho^2 <= eps_patch/2` and
    /// `rho^2` for `rho^2 >= 3 eps_patch/4`.
    pub eps_patch: f64,
    pub xi_inner: f64,
    pub xi_outer: f64,
    /// Continuity order of the polynomial smoothstep.
    pub smooth_degree: u32,
}

impl PatchConfig {
    pub fn validate(&self) -> Result<(), GeomError> {
        let pos = [self.delta, self.eps_patch, self.xi_inner, self.xi_outer].iter().all(|v| *v > 0.0 && v.is_finite());
        if !pos {
            return Err(GeomError::Invalid("patch parameters must be positive".into()));
        }
        if self.xi_inner >= self.xi_outer {
            return Err(GeomError::Invalid("xi_inner must be below xi_outer".into()));
        }
        if self.smooth_degree < 2 {
            return Err(GeomError::Invalid("cutoffs must be at least C^2".into()));
        }
        Ok(())
    }
}

/// Polynomial smoothstep of continuity order `k`, clamped to `[0, 1]`.
pub fn smoothstep(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let n = k as u64;
    let mut s = 0.0;
    for j in 0..=n {
        s += binom(n + j, j) * binom(2 * n + 1, n - j) * (-x).powi(j as i32);
    }
    s * x.powi(k as i32 + 1)
}

pub fn smoothstep_deriv(k: u32, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let n = k as u64;
    (2 * n + 1) as f64 * binom(2 * n, n) * (x * (1.0 - x)).powi(k as i32)
}

pub fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Domain description as stored in a domain file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainFile {
    pub name: String,
    pub n: usize,
    pub r: Vec<Monomial>,
    pub bbox: Vec<[f64; 2]>,
    pub patch: PatchConfig,
}

#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub name: String,
    pub n: usize,
    pub bbox: Vec<[f64; 2]>,
    pub patch: PatchConfig,
    r: Poly,
    dr: Vec<Poly>,
    hol: Vec<Vec<Poly>>,
    levi: Vec<Vec<Poly>>,
    pair_r: Poly,
    pair_f: Poly,
    pair_r2: Poly,
    pair_rho2: Poly,
    pair_dr_zeta: Vec<Poly>,
    pair_dr_z: Vec<Poly>,
}

fn cplx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl DomainSpec {
    pub fn new(name: &str, r: Poly, bbox: Vec<[f64; 2]>, patch: PatchConfig) -> Result<DomainSpec, GeomError> {
        let n = r.nvars();
        if n == 0 || n > crate::jet::MAX_VARS / 2 {
            return Err(GeomError::Invalid(format!("dimension {n} is out of range")));
        }
        if !r.is_real(1e-12) {
            return Err(GeomError::Invalid("r is not real valued".into()));
        }
        if bbox.len() != 2 * n || bbox.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(GeomError::Invalid(format!("bounding box needs {} increasing intervals", 2 * n)));
        }
        patch.validate()?;
        let dr: Vec<Poly> = (0..n).map(|j| r.dz(j)).collect();
        let hol: Vec<Vec<Poly>> = (0..n).map(|j| (0..n).map(|k| dr[j].dz(k)).collect()).collect();
        let levi: Vec<Vec<Poly>> = (0..n).map(|j| (0..n).map(|k| dr[j].dzbar(k)).collect()).collect();
        let m = 2 * n;
        let w: Vec<Poly> = (0..n).map(|j| Poly::var(j, m).sub(&Poly::var(n + j, m))).collect();
        let wb: Vec<Poly> = w.iter().map(Poly::conj).collect();
        let half = cplx(0.5, 0.0);
        let mut f = Poly::zero(m);
        let mut r2a = Poly::zero(m);
        let mut r2b = Poly::zero(m);
        for j in 0..n {
            f = f.add(&dr[j].embed(m, 0).mul(&w[j]));
            for k in 0..n {
                f = f.sub(&hol[j][k].embed(m, 0).mul(&w[j]).mul(&w[k]).scale(half));
                let ww = w[j].mul(&wb[k]);
                r2a = r2a.add(&levi[j][k].embed(m, 0).mul(&ww));
                r2b = r2b.add(&levi[j][k].embed(m, n).mul(&ww));
            }
        }
        let pair_rho2 = r2a.add(&r2b).scale(half);
        let pair_r = r.embed(m, 0);
        let pair_dr_zeta = dr.iter().map(|p| p.embed(m, 0)).collect();
        let pair_dr_z = dr.iter().map(|p| p.embed(m, n)).collect();
        let d = DomainSpec {
            name: name.to_string(),
            n,
            bbox,
            patch,
            r,
            dr,
            hol,
            levi,
            pair_r,
            pair_f: f,
            pair_r2: r2a,
            pair_rho2,
            pair_dr_zeta,
            pair_dr_z,
        };
        d.check_pseudoconvex()?;
        Ok(d)
    }

    pub fn from_file(file: &DomainFile) -> Result<DomainSpec, GeomError> {
        let r = Poly::from_monomials(file.n, &file.r).map_err(GeomError::Invalid)?;
        DomainSpec::new(&file.name, r, file.bbox.clone(), file.patch)
    }

    pub fn to_file(&self) -> DomainFile {
        DomainFile {
            name: self.name.clone(),
            n: self.n,
            r: self.r.monomials(),
            bbox: self.bbox.clone(),
            patch: self.patch,
        }
    }

    pub fn with_patch(&self, patch: PatchConfig) -> Result<DomainSpec, GeomError> {
        patch.validate()?;
        let mut d = self.clone();
        d.patch = patch;
        Ok(d)
    }

    /// Complex Hessian positive definite on sampled points near `{r = 0}`.
    fn check_pseudoconvex(&self) -> Result<(), GeomError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let band = 0.1;
        let mut seen = 0;
        for _ in 0..20_000 {
            let z = self.random_box_point(&mut rng);
            if self.r(&z).abs() < band {
                seen += 1;
                if Cholesky::new(self.levi_matrix(&z)).is_none() {
                    return Err(GeomError::Invalid(format!("not strictly pseudoconvex near {z:?}")));
                }
                if seen >= 500 {
                    break;
                }
            }
        }
        if seen == 0 {
            return Err(GeomError::Invalid("no boundary points inside the bounding box".into()));
        }
        Ok(())
    }

    pub fn random_box_point(&self, rng: &mut impl Rng) -> Vec<C64> {
        (0..self.n)
            .map(|j| {
                let [a, b] = self.bbox[2 * j];
                let [c, d] = self.bbox[2 * j + 1];
                cplx(rng.gen_range(a..b), rng.gen_range(c..d))
            })
            .collect()
    }

    pub fn box_volume(&self) -> f64 {
        self.bbox.iter().map(|[a, b]| b - a).product()
    }

    pub fn in_box(&self, z: &[C64]) -> bool {
        z.iter().enumerate().all(|(j, w)| {
            let [a, b] = self.bbox[2 * j];
            let [c, d] = self.bbox[2 * j + 1];
            (a..=b).contains(&w.re) && (c..=d).contains(&w.im)
        })
    }

    pub fn r_poly(&self) -> &Poly {
        &self.r
    }

    pub fn r(&self, z: &[C64]) -> f64 {
        self.r.eval_real(z)
    }

    pub fn r_eps(&self, z: &[C64], eps: f64) -> f64 {
        self.r(z) + eps
    }

    /// `∂r/∂z_j`; independent of the exhaustion parameter.
    pub fn dr(&self, z: &[C64]) -> Vec<C64> {
        self.dr.iter().map(|p| p.eval(z)).collect()
    }

    /// `g_{jk} = ∂²r/∂z_j∂z̄_k`.
    pub fn levi_matrix(&self, z: &[C64]) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |j, k| self.levi[j][k].eval(z))
    }

    pub fn hol_hessian(&self, z: &[C64]) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |j, k| self.hol[j][k].eval(z))
    }

    /// Inner product of (1,0)-covectors under the dual Levi metric.
    pub fn dual_inner(&self, z: &[C64], a: &[C64], b: &[C64]) -> Result<C64, GeomError> {
        let h = self.levi_matrix(z).transpose();
        let chol = Cholesky::new(h).ok_or_else(|| GeomError::SingularMetric(z.to_vec()))?;
        let bb = nalgebra::DVector::from_iterator(self.n, b.iter().map(|x| x.conj()));
        let x = chol.solve(&bb);
        Ok(a.iter().zip(x.iter()).map(|(p, q)| p * q).sum())
    }

    /// `gamma = |∂r|`, the same for every `r_eps`.
    pub fn gamma(&self, z: &[C64], _eps: f64, conv: GammaConvention) -> Result<f64, GeomError> {
        let g = self.dr(z);
        match conv {
            GammaConvention::Euclid => Ok(g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()),
            GammaConvention::LeviDual => Ok(self.dual_inner(z, &g, &g)?.re.max(0.0).sqrt()),
        }
    }

    fn pair(&self, zeta: &[C64], z: &[C64]) -> Vec<C64> {
        let mut v = Vec::with_capacity(2 * self.n);
        v.extend_from_slice(zeta);
        v.extend_from_slice(z);
        v
    }

    pub fn levi_polynomial(&self, zeta: &[C64], z: &[C64]) -> C64 {
        self.pair_f.eval(&self.pair(zeta, z))
    }

    /// Hefer coefficients `h_j` with `Σ h_j (zeta_j - z_j) = F`.
    pub fn hefer(&self, zeta: &[C64], z: &[C64]) -> Vec<C64> {
        let d = self.dr(zeta);
        let h = self.hol_hessian(zeta);
        (0..self.n).map(|j| d[j] - 0.5 * (0..self.n).map(|k| h[(j, k)] * (zeta[k] - z[k])).sum::<C64>()).collect()
    }

    /// Symmetrized `R^2`; exactly symmetric in floating point.
    pub fn rho2(&self, zeta: &[C64], z: &[C64]) -> f64 {
        0.5 * (self.pair_r2.eval_real(&self.pair(zeta, z)) + self.pair_r2.eval_real(&self.pair(z, zeta)))
    }

    /// Cutoff that is 1 near the diagonal and 0 away from it.
    pub fn patch_weight(&self, rho2: f64) -> f64 {
        let e = self.patch.eps_patch;
        1.0 - smoothstep(self.patch.smooth_degree, (rho2 - e / 2.0) / (e / 4.0))
    }

    /// Boundary strip cutoff in `|r|`.
    pub fn xi(&self, r: f64) -> f64 {
        let p = &self.patch;
        1.0 - smoothstep(p.smooth_degree, (r.abs() - p.xi_inner) / (p.xi_outer - p.xi_inner))
    }

    pub fn phi_eps(&self, zeta: &[C64], z: &[C64], eps: f64) -> C64 {
        let rho2 = self.rho2(zeta, z);
        let w = self.patch_weight(rho2);
        let near = self.levi_polynomial(zeta, z) - self.r_eps(zeta, eps);
        near * w + (1.0 - w) * rho2
    }

    /// The swapped support function `conj(phi_eps(z, zeta))`.
    pub fn phi_star(&self, zeta: &[C64], z: &[C64], eps: f64) -> C64 {
        self.phi_eps(z, zeta, eps).conj()
    }

    pub fn p_eps(&self, zeta: &[C64], z: &[C64], eps: f64) -> Result<f64, GeomError> {
        let gz = self.gamma(zeta, eps, GammaConvention::Euclid)?;
        let gw = self.gamma(z, eps, GammaConvention::Euclid)?;
        if gz == 0.0 {
            return Err(GeomError::SingularWeight(zeta.to_vec()));
        }
        if gw == 0.0 {
            return Err(GeomError::SingularWeight(z.to_vec()));
        }
        Ok(self.rho2(zeta, z) + 2.0 * (self.r_eps(zeta, eps) / gz) * (self.r_eps(z, eps) / gw))
    }

    /// Jets over the pair `(zeta, z)`: `r(zeta)`, `F`, `rho^2`.
    pub fn pair_jets(&self, zeta: &[C64], z: &[C64]) -> PairJets {
        let p = self.pair(zeta, z);
        PairJets {
            r_zeta: self.pair_r.eval_jet(&p),
            f: self.pair_f.eval_jet(&p),
            rho2: self.pair_rho2.eval_jet(&p),
            dr_zeta: self.pair_dr_zeta.iter().map(|q| q.eval_jet(&p)).collect(),
            dr_z: self.pair_dr_z.iter().map(|q| q.eval_jet(&p)).collect(),
        }
    }

    /// `rho^2` as a polynomial in `(zeta, z)`.
    pub fn rho2_poly(&self) -> &Poly {
        &self.pair_rho2
    }

    /// `phi_eps` with first derivatives in `(zeta, z)`.
    pub fn phi_eps_jet(&self, jets: &PairJets, eps: f64) -> Jet {
        let m = 2 * self.n;
        let e = self.patch.eps_patch;
        let k = self.patch.smooth_degree;
        let x = (jets.rho2.v.re - e / 2.0) / (e / 4.0);
        let w = jets.rho2.map_real(1.0 - smoothstep(k, x), -smoothstep_deriv(k, x) / (e / 4.0));
        let near = jets.f - jets.r_zeta - Jet::real(eps, m);
        w * near + (Jet::real(1.0, m) - w) * jets.rho2
    }

    pub fn xi_jet(&self, r: &Jet) -> Jet {
        let p = &self.patch;
        let width = p.xi_outer - p.xi_inner;
        let x = (r.v.re.abs() - p.xi_inner) / width;
        let sign = if r.v.re < 0.0 { -1.0 } else { 1.0 };
        r.map_real(1.0 - smoothstep(p.smooth_degree, x), -smoothstep_deriv(p.smooth_degree, x) * sign / width)
    }

    /// Orthonormal (1,0)-coframe with `omega^n = ∂r / gamma` and its dual frame.
    pub fn frame_at(&self, zeta: &[C64], gamma_min: f64) -> Result<Frame, GeomError> {
        let gamma = self.gamma(zeta, 0.0, GammaConvention::LeviDual)?;
        if gamma < gamma_min {
            return Err(GeomError::GammaBelowThreshold { gamma, min: gamma_min });
        }
        let n = self.n;
        let ip = |a: &[C64], b: &[C64]| self.dual_inner(zeta, a, b);
        let normal: Vec<C64> = self.dr(zeta).iter().map(|x| x / gamma).collect();
        let mut basis: Vec<Vec<C64>> = vec![normal];
        let mut candidates: Vec<Vec<C64>> =
            (0..n).map(|j| (0..n).map(|k| if j == k { cplx(1.0, 0.0) } else { cplx(0.0, 0.0) }).collect()).collect();
        while basis.len() < n {
            let mut best: Option<(f64, usize, Vec<C64>)> = None;
            for (ci, c) in candidates.iter().enumerate() {
                let mut v = c.clone();
                for b in &basis {
                    let p = ip(&v, b)?;
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= p * y;
                    }
                }
                let norm = ip(&v, &v)?.re.max(0.0).sqrt();
                if best.as_ref().is_none_or(|(bn, _, _)| norm > *bn) {
                    best = Some((norm, ci, v));
                }
            }
            let (norm, ci, v) = best.expect("candidates remain");
            candidates.remove(ci);
            basis.push(v.iter().map(|x| x / norm).collect());
        }
        basis.rotate_left(1);
        let w = DMatrix::from_fn(n, n, |i, j| basis[i][j]);
        let inv = w.clone().try_inverse().ok_or_else(|| GeomError::SingularMetric(zeta.to_vec()))?;
        let fields = (0..n).map(|i| (0..n).map(|j| inv[(j, i)]).collect()).collect();
        Ok(Frame { coframe: basis, fields, gamma })
    }

    /// Gradient in real coordinates `(x_1, y_1, ..., x_n, y_n)`.
    pub fn real_gradient(&self, z: &[C64]) -> Vec<f64> {
        self.dr(z).iter().flat_map(|d| [2.0 * d.re, -2.0 * d.im]).collect()
    }

    pub fn real_hessian(&self, z: &[C64]) -> DMatrix<f64> {
        let n = self.n;
        let a = self.hol_hessian(z);
        let b = self.levi_matrix(z);
        let coef = |p: usize| -> (C64, C64) {
            if p % 2 == 0 {
                (cplx(1.0, 0.0), cplx(1.0, 0.0))
            } else {
                (cplx(0.0, 1.0), cplx(0.0, -1.0))
            }
        };
        DMatrix::from_fn(2 * n, 2 * n, |p, q| {
            let (j, k) = (p / 2, q / 2);
            let (c1p, c2p) = coef(p);
            let (c1q, c2q) = coef(q);
            let v =
                c1p * c1q * a[(j, k)] + c1p * c2q * b[(j, k)] + c2p * c1q * b[(k, j)] + c2p * c2q * a[(j, k)].conj();
            v.re
        })
    }

    /// Critical points of `r` found by Newton iteration from a seed grid.
    pub fn critical_points(&self) -> Vec<Vec<C64>> {
        let n = self.n;
        let per: usize = if n <= 2 { 7 } else { 4 };
        let total = per.pow(2 * n as u32);
        let mut found: Vec<Vec<C64>> = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let mut x = vec![0.0; 2 * n];
            for (p, xp) in x.iter_mut().enumerate() {
                let [a, b] = self.bbox[p];
                let t = (rem % per) as f64 + 0.5;
                rem /= per;
                *xp = a + (b - a) * t / per as f64;
            }
            let mut z: Vec<C64> = (0..n).map(|j| cplx(x[2 * j], x[2 * j + 1])).collect();
            let mut ok = false;
            for _ in 0..60 {
                let g = nalgebra::DVector::from_vec(self.real_gradient(&z));
                if g.norm() < 1e-13 {
                    ok = true;
                    break;
                }
                let Some(step) = self.real_hessian(&z).lu().solve(&g) else { break };
                for j in 0..n {
                    z[j] -= cplx(step[2 * j], step[2 * j + 1]);
                }
                if !self.in_box(&z) {
                    break;
                }
            }
            if ok && !found.iter().any(|p| p.iter().zip(&z).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() < 1e-12) {
                found.push(z);
            }
        }
        found.sort_by(|a, b| {
            let ka: Vec<f64> = a.iter().flat_map(|c| [c.re, c.im]).collect();
            let kb: Vec<f64> = b.iter().flat_map(|c| [c.re, c.im]).collect();
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        found
    }

    pub fn boundary_critical_points(&self) -> Vec<Vec<C64>> {
        self.critical_points().into_iter().filter(|p| self.r(p).abs() < 1e-9).collect()
    }

    /// Eigen-analysis of the real Hessian at a critical point.
    pub fn morse_normal_form(&self, p: &[C64]) -> Result<MorseForm, GeomError> {
        let g: f64 = self.real_gradient(p).iter().map(|x| x * x).sum::<f64>().sqrt();
        if g > 1e-8 {
            return Err(GeomError::NotCritical(g));
        }
        let eig = SymmetricEigen::new(self.real_hessian(p));
        let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..eig.eigenvalues.len())
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        if let Some((v, _)) = pairs.iter().find(|(v, _)| v.abs() < 1e-6 * scale) {
            return Err(GeomError::Degenerate(*v));
        }
        Ok(MorseForm {
            point: p.to_vec(),
            index: pairs.iter().filter(|(v, _)| *v < 0.0).count(),
            eigenvalues: pairs.iter().map(|(v, _)| *v).collect(),
            eigenvectors: pairs.into_iter().map(|(_, v)| v).collect(),
        })
    }

    /// Halves `eps_patch` until `Re(F - r(zeta)) >= c0 rho^2` on sampled
    /// pairs inside the patch region.
    pub fn calibrate_patch(&self, seed: u64, pairs: usize, c0: f64) -> Result<(DomainSpec, Calibration), GeomError> {
        let mut patch = self.patch;
        for halvings in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let radius = (0.75 * patch.eps_patch).sqrt();
            let mut worst = f64::INFINITY;
            let mut count = 0;
            let mut tries = 0;
            while count < pairs && tries < 200 * pairs {
                tries += 1;
                let zeta = self.random_box_point(&mut rng);
                let rz = self.r(&zeta);
                if !(rz < 0.0 && -rz < patch.delta) {
                    continue;
                }
                let z: Vec<C64> = zeta
                    .iter()
                    .map(|c| c + cplx(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)))
                    .collect();
                if !self.in_box(&z) || self.r(&z) >= 0.0 {
                    continue;
                }
                let rho2 = self.rho2(&zeta, &z);
                if rho2 > 0.75 * patch.eps_patch || rho2 == 0.0 {
                    continue;
                }
                count += 1;
                let ratio = (self.levi_polynomial(&zeta, &z).re - rz) / rho2;
                worst = worst.min(ratio);
            }
            if count == 0 {
                return Err(GeomError::Invalid("no calibration pairs in the patch region".into()));
            }
            if worst >= c0 {
                let cal = Calibration { eps_patch: patch.eps_patch, halvings, pairs: count, c0, min_ratio: worst };
                return Ok((self.with_patch(patch)?, cal));
            }
            patch.eps_patch /= 2.0;
        }
        Err(GeomError::Invalid("patch calibration did not converge".into()))
    }
}

#[derive(Clone, Debug)]
pub struct PairJets {
    pub r_zeta: Jet,
    pub f: Jet,
    pub rho2: Jet,
    pub dr_zeta: Vec<Jet>,
    pub dr_z: Vec<Jet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eps_patch: f64,
    pub halvings: u32,
    pub pairs: usize,
    pub c0: f64,
    pub min_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Rows are the coframe `omega^1..omega^n` in `dz` components.
    pub coframe: Vec<Vec<C64>>,
    /// `fields[i]` holds the components of `L_i`, dual to `omega^i`.
    pub fields: Vec<Vec<C64>>,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorseForm {
    pub point: Vec<C64>,
    /// Number of negative Hessian directions of `r`, the positive side of `-r`.
    pub index: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

/// The unit ball `|z|^2 < 1` in dimension `n`.
pub fn ball(n: usize) -> DomainSpec {
    let mut r = Poly::constant(cplx(-1.0, 0.0), n);
    for j in 0..n {
        r = r.add(&Poly::var(j, n).mul(&Poly::conj_var(j, n)));
    }
    let patch = PatchConfig { delta: 0.25, eps_patch: 0.5, xi_inner: 0.25, xi_outer: 0.375, smooth_degree: 4 };
    DomainSpec::new(if n == 1 { "disc" } else { "ball" }, r, vec![[-1.05, 1.05]; 2 * n], patch)
        .expect("ball is a valid domain")
}

/// `|z1|^2 + |z2|^2 - 2 Re(z1^2) + |z1|^4 < 0`: a Morse boundary critical point of
/// index 1 at the origin.
pub fn pinched() -> DomainSpec {
    let z1 = Poly::var(0, 2);
    let z1b = Poly::conj_var(0, 2);
    let z2 = Poly::var(1, 2);
    let z2b = Poly::conj_var(1, 2);
    let m1 = z1.mul(&z1b);
    let r = m1.add(&z2.mul(&z2b)).sub(&z1.mul(&z1)).sub(&z1b.mul(&z1b)).add(&m1.mul(&m1));
    let patch = PatchConfig { delta: 0.05, eps_patch: 0.02, xi_inner: 0.05, xi_outer: 0.075, smooth_degree: 4 };
    DomainSpec::new("pinched", r, vec![[-1.05, 1.05], [-0.32, 0.32], [-0.52, 0.52], [-0.52, 0.52]], patch)
        .expect("pinched is a valid domain")
}

/// `ball`, `pinched`, `disc` (the ball in one variable) or `ballN`.
pub fn builtin_domain(name: &str) -> Result<DomainSpec, GeomError> {
    match name {
        "ball" => Ok(ball(2)),
        "disc" => Ok(ball(1)),
        "pinched" => Ok(pinched()),
        _ => match name.strip_prefix("ball").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if (1..=crate::jet::MAX_VARS / 2).contains(&k) => Ok(ball(k)),
            _ => Err(GeomError::UnknownDomain(name.to_string())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[(f64, f64)]) -> Vec<C64> {
        v.iter().map(|&(a, b)| cplx(a, b)).collect()
    }

    #[test]
    fn ball_values() {
        let d = ball(2);
        let z = p(&[(0.5, 0.0), (0.0, 0.0)]);
        assert!((d.r(&z) + 0.75).abs() < 1e-15);
        assert!((d.gamma(&z, 0.0, GammaConvention::Euclid).unwrap() - 0.5).abs() < 1e-15);
        let b = p(&[(1.0, 0.0), (0.0, 0.0)]);
        for conv in [GammaConvention::Euclid, GammaConvention::LeviDual] {
            assert!((d.gamma(&b, 0.0, conv).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pinched_values() {
        let d = pinched();
        let o = p(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(d.r(&o), 0.0);
        assert_eq!(d.gamma(&o, 0.0, GammaConvention::Euclid).unwrap(), 0.0);
        let x = p(&[(0.1, 0.0), (0.0, 0.0)]);
        assert!((d.gamma(&x, 0.0, GammaConvention::Euclid).unwrap() - 0.098).abs() < 1e-12);
        let dual = d.gamma(&x, 0.0, GammaConvention::LeviDual).unwrap();
        assert!((dual - 0.098 / 1.04f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn levi_polynomial_examples() {
        let d = ball(2);
        let zeta = p(&[(0.5, 0.0), (0.0, 0.0)]);
        let z = p(&[(0.3, 0.0), (0.0, 0.0)]);
        assert!((d.levi_polynomial(&zeta, &z) - cplx(0.1, 0.0)).norm() < 1e-15);
        assert_eq!(d.levi_polynomial(&zeta, &zeta), cplx(0.0, 0.0));
        assert!((d.rho2(&zeta, &z) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn hefer_identity_on_pinched() {
        let d = pinched();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let zeta = d.random_box_point(&mut rng);
            let z = d.random_box_point(&mut rng);
            let h = d.hefer(&zeta, &z);
            let s: C64 = (0..2).map(|j| h[j] * (zeta[j] - z[j])).sum();
            let f = d.levi_polynomial(&zeta, &z);
            assert!((s - f).norm() <= 1e-14 * f.norm().max(1.0), "{s} vs {f}");
        }
    }

    #[test]
    fn diagonal_support_function() {
        let d = ball(2);
        let zeta = p(&[(0.5, 0.0), (0.0, 0.0)]);
        assert!((d.phi_eps(&zeta, &zeta, 0.0) - cplx(0.75, 0.0)).norm() < 1e-15);
        assert!((d.p_eps(&zeta, &zeta, 0.0).unwrap() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn p_eps_is_symmetric_and_singular_at_critical_point() {
        let d = pinched();
        let a = p(&[(0.4, 0.05), (0.1, -0.1)]);
        let b = p(&[(0.3, 0.0), (0.0, 0.2)]);
        assert_eq!(d.p_eps(&a, &b, 0.05).unwrap(), d.p_eps(&b, &a, 0.05).unwrap());
        let o = p(&[(0.0, 0.0), (0.0, 0.0)]);
        assert!(matches!(d.p_eps(&o, &b, 0.0), Err(GeomError::SingularWeight(_))));
    }

    #[test]
    fn ball_frame_at_pole() {
        let d = ball(2);
        let f = d.frame_at(&p(&[(1.0, 0.0), (0.0, 0.0)]), 1e-3).unwrap();
        assert_eq!(f.coframe[1], p(&[(1.0, 0.0), (0.0, 0.0)]));
        assert_eq!(f.coframe[0], p(&[(0.0, 0.0), (1.0, 0.0)]));
    }

    #[test]
    fn pinched_frame_refused_at_critical_point() {
        let d = pinched();
        let err = d.frame_at(&p(&[(0.0, 0.0), (0.0, 0.0)]), 1e-3).unwrap_err();
        assert!(matches!(err, GeomError::GammaBelowThreshold { .. }));
    }

    #[test]
    fn pinched_morse_data() {
        let d = pinched();
        let crit = d.boundary_critical_points();
        assert_eq!(crit.len(), 1);
        assert!(crit[0].iter().all(|c| c.norm() < 1e-10));
        let m = d.morse_normal_form(&crit[0]).unwrap();
        assert_eq!(m.index, 1);
        let want = [-2.0, 2.0, 2.0, 6.0];
        for (a, b) in m.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{:?}", m.eigenvalues);
        }
    }

    #[test]
    fn ball_has_no_boundary_critical_points() {
        assert!(ball(2).boundary_critical_points().is_empty());
    }

    #[test]
    fn degenerate_quadratic_rejected() {
        let z1 = Poly::var(0, 2);
        let z1b = Poly::conj_var(0, 2);
        let z2 = Poly::var(1, 2);
        let z2b = Poly::conj_var(1, 2);
        // |z1|^2 - Re(z1^2) = 2 y1^2 has no x1 curvature
        let half = cplx(0.5, 0.0);
        let r = z1.mul(&z1b).sub(&z1.mul(&z1).scale(half)).sub(&z1b.mul(&z1b).scale(half)).add(&z2.mul(&z2b));
        let r = r.add(&z1.mul(&z1b).mul(&z1.mul(&z1b)));
        let d = DomainSpec::new("flat", r, vec![[-1.0, 1.0]; 4], pinched().patch).unwrap();
        let err = d.morse_normal_form(&p(&[(0.0, 0.0), (0.0, 0.0)])).unwrap_err();
        assert!(matches!(err, GeomError::Degenerate(_)), "{err:?}");
    }

    #[test]
    fn smoothstep_is_c4() {
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let s = smoothstep(4, x);
            assert!((s + smoothstep(4, 1.0 - x) - 1.0).abs() < 1e-13);
        }
        let h = 1e-6;
        let fd = (smoothstep(4, 0.3 + h) - smoothstep(4, 0.3 - h)) / (2.0 * h);
        assert!((fd - smoothstep_deriv(4, 0.3)).abs() < 1e-8);
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(builtin_domain("torus"), Err(GeomError::UnknownDomain(_))));
        assert_eq!(builtin_domain("ball3").unwrap().n, 3);
    }

    #[test]
    fn domain_file_round_trip() {
        let d = pinched();
        let text = serde_json::to_string(&d.to_file()).unwrap();
        let back: DomainFile = serde_json::from_str(&text).unwrap();
        let e = DomainSpec::from_file(&back).unwrap();
        let z = p(&[(0.2, 0.1), (0.1, 0.0)]);
        assert_eq!(d.r(&z), e.r(&z));
    }

    #[test]
    fn non_real_r_rejected() {
        let r = Poly::var(0, 1);
        assert!(DomainSpec::new("bad", r, vec![[-1.0, 1.0]; 2], ball(1).patch).is_err());
    }
}
