//! Double forms at point pairs and numerical construction of the homotopy
//! kernels.

mod form;
mod parse;
mod star;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{binom, DomainSpec, GeomError, Poly};
use crate::jet::{Jet, C64};

pub use form::{bit, family_of, wedge_sign, zeta_bits, Coef, DoubleForm, Family, Form};
pub use parse::parse_test_form;
pub use star::{
    from_real, integrate_zeta_volume, real_metric, to_real, top_factor, volume_coefficient, BoundaryPairing, HodgeStar,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DformError {
    #[error("degree overflow: {0}")]
    DegreeOverflow(String),
    #[error("metric is not positive definite")]
    SingularMetric,
    #[error("kernel evaluated on the diagonal")]
    Diagonal,
    #[error("support function vanishes at the pair")]
    VanishingPhi,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn one() -> C64 {
    c(1.0, 0.0)
}

/// `(1/2πi)^n`.
pub fn cauchy_constant(n: usize) -> C64 {
    c(0.0, -1.0 / (2.0 * PI)).powu(n as u32)
}

/// A (1,0)-form in zeta, `sum a_j dzeta_j`, with coefficients carrying first
/// derivatives in `(zeta, z)`.
#[derive(Clone, Debug)]
pub struct OneForm {
    pub n: usize,
    pub coeffs: Vec<Jet>,
}

impl OneForm {
    pub fn value(&self) -> DoubleForm {
        let n = self.n;
        DoubleForm::from_terms(n, (0..n).map(|j| (1 << bit(n, Family::DZeta, j), self.coeffs[j].v)).collect())
    }

    fn dbar(&self, family: Family, slot0: usize) -> DoubleForm {
        let n = self.n;
        let mut out = DoubleForm::zero(n);
        for k in 0..n {
            for j in 0..n {
                let x = self.coeffs[j].dzbar(slot0 + k);
                if x == c(0.0, 0.0) {
                    continue;
                }
                let a = DoubleForm::from_terms(n, vec![(1 << bit(n, family, k), x)]);
                let b = DoubleForm::from_terms(n, vec![(1 << bit(n, Family::DZeta, j), one())]);
                out = out.add(&a.wedge(&b));
            }
        }
        out
    }

    pub fn dbar_zeta(&self) -> DoubleForm {
        self.dbar(Family::DZetaBar, 0)
    }

    pub fn dbar_z(&self) -> DoubleForm {
        self.dbar(Family::DZBar, self.n)
    }
}

/// The three pieces of a one-form entering the wedge powers.
struct Pieces {
    value: DoubleForm,
    dbz: DoubleForm,
    dz: DoubleForm,
}

impl Pieces {
    fn of(a: &OneForm) -> Pieces {
        Pieces { value: a.value(), dbz: a.dbar_zeta(), dz: a.dbar_z() }
    }
}

fn power(f: &DoubleForm, k: i64) -> DoubleForm {
    f.wedge_power(k.max(0) as u32, one())
}

/// `Omega_q(a) = (-1)^{q(q-1)/2} C(n-1,q) (1/2πi)^n a ∧ (∂̄_ζ a)^{n-q-1} ∧ (∂̄_z a)^q`.
pub fn omega_q(a: &OneForm, q: usize) -> DoubleForm {
    let n = a.n;
    let b = binom((n - 1) as u64, q as u64);
    if b == 0.0 || q + 1 > n {
        return DoubleForm::zero(n);
    }
    let p = Pieces::of(a);
    let sign = if (q * q.saturating_sub(1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    p.value
        .wedge(&power(&p.dbz, (n - q - 1) as i64))
        .wedge(&power(&p.dz, q as i64))
        .scale(cauchy_constant(n) * (sign * b))
}

fn binom_i(n: i64, k: i64) -> f64 {
    if n < 0 || k < 0 || k > n {
        0.0
    } else {
        binom(n as u64, k as u64)
    }
}

/// `a_{qμν} = (1/2πi)^n C(μ+ν, μ) C(n-2-μ-ν, q-μ)`.
pub fn a_coefficient(n: usize, q: usize, mu: usize, nu: usize) -> C64 {
    let (n, q, mu, nu) = (n as i64, q as i64, mu as i64, nu as i64);
    cauchy_constant(n as usize) * (binom_i(mu + nu, mu) * binom_i(n - 2 - mu - nu, q - mu))
}

fn c_qmunu_pieces(pa: &Pieces, pb: &Pieces, n: usize, q: usize, mu: usize, nu: usize) -> DoubleForm {
    let (n, q, mu, nu) = (n as i64, q as i64, mu as i64, nu as i64);
    if n - q - mu - 2 < 0 || q - nu < 0 {
        return DoubleForm::zero(n as usize);
    }
    pa.value
        .wedge(&pb.value)
        .wedge(&power(&pa.dbz, mu))
        .wedge(&power(&pb.dbz, n - q - mu - 2))
        .wedge(&power(&pa.dz, nu))
        .wedge(&power(&pb.dz, q - nu))
}

/// `alpha ∧ beta ∧ (∂̄_ζ alpha)^μ ∧ (∂̄_ζ beta)^{n-q-μ-2} ∧ (∂̄_z alpha)^ν ∧ (∂̄_z beta)^{q-ν}`.
pub fn c_qmunu(alpha: &OneForm, beta: &OneForm, q: usize, mu: usize, nu: usize) -> DoubleForm {
    c_qmunu_pieces(&Pieces::of(alpha), &Pieces::of(beta), alpha.n, q, mu, nu)
}

/// `C_q = sum_{μ<=n-q-2, ν<=q} a_{qμν} C_{qμν}`.
pub fn c_q(alpha: &OneForm, beta: &OneForm, q: usize) -> DoubleForm {
    let n = alpha.n;
    let (pa, pb) = (Pieces::of(alpha), Pieces::of(beta));
    let mut out = DoubleForm::zero(n);
    if n < q + 2 {
        return out;
    }
    for mu in 0..=(n - q - 2) {
        for nu in 0..=q {
            let term = c_qmunu_pieces(&pa, &pb, n, q, mu, nu);
            out = out.add(&term.scale(a_coefficient(n, q, mu, nu)));
        }
    }
    out
}

/// Which metric enters `beta = ∂_ζ rho^2 / rho^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BetaMetric {
    /// `rho^2` built from the Levi form of `r`.
    #[default]
    Levi,
    /// `rho^2 = |zeta - z|^2`.
    Flat,
}

/// Kernel evaluation on one domain, with the derivative polynomials cached.
#[derive(Clone, Debug)]
pub struct KernelContext {
    domain: DomainSpec,
    metric: BetaMetric,
    drho2: Vec<Poly>,
    drho2_bar: Vec<Poly>,
}

impl KernelContext {
    pub fn new(domain: &DomainSpec, metric: BetaMetric) -> KernelContext {
        let n = domain.n;
        let m = 2 * n;
        let rho2 = match metric {
            BetaMetric::Levi => domain.rho2_poly().clone(),
            BetaMetric::Flat => (0..n).fold(Poly::zero(m), |acc, j| {
                let w = Poly::var(j, m).sub(&Poly::var(n + j, m));
                acc.add(&w.mul(&w.conj()))
            }),
        };
        let drho2 = (0..n).map(|j| rho2.dz(j)).collect();
        let drho2_bar = (0..n).map(|j| rho2.dzbar(j)).collect();
        KernelContext { domain: domain.clone(), metric, drho2, drho2_bar }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn metric(&self) -> BetaMetric {
        self.metric
    }

    fn pair(zeta: &[C64], z: &[C64]) -> Vec<C64> {
        zeta.iter().chain(z.iter()).copied().collect()
    }

    /// `rho^2` at the pair.
    pub fn rho2(&self, zeta: &[C64], z: &[C64]) -> f64 {
        match self.metric {
            BetaMetric::Levi => self.domain.rho2(zeta, z),
            BetaMetric::Flat => zeta.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum(),
        }
    }

    /// `beta = ∂_ζ rho^2 / rho^2`.
    pub fn beta(&self, zeta: &[C64], z: &[C64]) -> Result<OneForm, DformError> {
        let n = self.domain.n;
        let m = 2 * n;
        let p = Self::pair(zeta, z);
        if zeta == z {
            return Err(DformError::Diagonal);
        }
        match self.metric {
            BetaMetric::Flat => {
                let w: Vec<Jet> = (0..n).map(|j| Jet::var(p[j], j, m) - Jet::var(p[n + j], n + j, m)).collect();
                let r2 = w.iter().fold(Jet::real(0.0, m), |acc, x| acc + *x * x.conj());
                if r2.v.re <= 0.0 {
                    return Err(DformError::Diagonal);
                }
                let inv = r2.recip();
                Ok(OneForm { n, coeffs: w.iter().map(|x| x.conj() * inv).collect() })
            }
            BetaMetric::Levi => {
                let r2 = self.domain.rho2_poly().eval_jet(&p);
                if r2.v.re <= 0.0 {
                    return Err(DformError::Diagonal);
                }
                let inv = r2.recip();
                Ok(OneForm { n, coeffs: self.drho2.iter().map(|d| d.eval_jet(&p) * inv).collect() })
            }
        }
    }

    /// `alpha_eps = xi(zeta) ∂r(zeta) / phi_eps(zeta, z)`.
    pub fn alpha(&self, zeta: &[C64], z: &[C64], eps: f64) -> Result<OneForm, DformError> {
        let d = &self.domain;
        let jets = d.pair_jets(zeta, z);
        let phi = d.phi_eps_jet(&jets, eps);
        if phi.v.norm() == 0.0 {
            return Err(DformError::VanishingPhi);
        }
        let scale = d.xi_jet(&jets.r_zeta) * phi.recip();
        Ok(OneForm { n: d.n, coeffs: jets.dr_zeta.iter().map(|x| *x * scale).collect() })
    }

    /// `Gamma_{0,q} = (n-2)!/(2π^n) rho^{2-2n} (∂̄_ζ ∂̄_z rho^2)^q`.
    pub fn gamma_0q(&self, zeta: &[C64], z: &[C64], q: usize) -> Result<DoubleForm, DformError> {
        let n = self.domain.n;
        if n < 2 {
            return Err(DformError::InvalidKernel("Gamma_0 needs n >= 2".into()));
        }
        let p = Self::pair(zeta, z);
        let r2 = self.rho2(zeta, z);
        if zeta == z || r2 <= 0.0 {
            return Err(DformError::Diagonal);
        }
        let m = 2 * n;
        let mut mixed = DoubleForm::zero(n);
        for j in 0..n {
            let jet = match self.metric {
                BetaMetric::Levi => self.drho2_bar[j].eval_jet(&p),
                BetaMetric::Flat => Jet::var(p[j], j, m) - Jet::var(p[n + j], n + j, m),
            };
            for k in 0..n {
                let x = jet.dzbar(n + k);
                let a = DoubleForm::from_terms(n, vec![(1 << bit(n, Family::DZetaBar, j), x)]);
                let b = DoubleForm::from_terms(n, vec![(1 << bit(n, Family::DZBar, k), one())]);
                mixed = mixed.add(&a.wedge(&b));
            }
        }
        let fact = (1..=(n - 2)).map(|k| k as f64).product::<f64>();
        let constant = fact / (2.0 * PI.powi(n as i32)) / r2.powi(n as i32 - 1);
        Ok(power(&mixed, q as i64).scale(c(constant, 0.0)))
    }

    pub fn eval(&self, id: &KernelId, zeta: &[C64], z: &[C64]) -> Result<DoubleForm, DformError> {
        id.validate(self.domain.n)?;
        let eps = id.eps;
        let q = id.q;
        match id.name {
            KernelName::B => Ok(omega_q(&self.beta(zeta, z)?, q)),
            KernelName::K => Ok(omega_q(&self.alpha(zeta, z, eps)?, q)),
            KernelName::Cmunu => Ok(c_qmunu(&self.alpha(zeta, z, eps)?, &self.beta(zeta, z)?, q, id.mu, id.nu)
                .scale(a_coefficient(self.domain.n, q, id.mu, id.nu))),
            KernelName::C => Ok(c_q(&self.alpha(zeta, z, eps)?, &self.beta(zeta, z)?, q)),
            KernelName::L => self.l_q(zeta, z, q, eps),
            KernelName::Gamma0 => self.gamma_0q(zeta, z, q),
            KernelName::Ta => self.t_a(zeta, z, q, eps),
            KernelName::Ti => self.t_i(zeta, z, q),
            KernelName::T => Ok(self.t_a(zeta, z, q, eps)?.add(&self.t_i(zeta, z, q)?)),
            KernelName::Q => self.q_kernel(zeta, z, q, eps),
            KernelName::P => {
                let qk = self.q_kernel(zeta, z, q, eps)?;
                let adj = self.q_kernel(z, zeta, q, eps)?.swap_variables().conj();
                Ok(qk.sub(&adj))
            }
        }
    }

    fn star_at(&self, zeta: &[C64]) -> Result<HodgeStar, DformError> {
        HodgeStar::new(&self.domain.levi_matrix(zeta))
    }

    /// `L_q = (-1)^{q+1} ∗_ζ conj(C_q)` with the Levi metric at `zeta`.
    pub fn l_q(&self, zeta: &[C64], z: &[C64], q: usize, eps: f64) -> Result<DoubleForm, DformError> {
        let cq = c_q(&self.alpha(zeta, z, eps)?, &self.beta(zeta, z)?, q);
        let sign = if q % 2 == 1 { 1.0 } else { -1.0 };
        Ok(self.star_at(zeta)?.apply(&cq.conj()).scale(c(sign, 0.0)))
    }

    /// `T_a = ϑ_ζ L_q - ∂_z L_{q-1}`.
    fn t_a(&self, zeta: &[C64], z: &[C64], q: usize, eps: f64) -> Result<DoubleForm, DformError> {
        let l = |a: &[C64], b: &[C64]| self.l_q(a, b, q, eps);
        let theta = theta_zeta_fd(self, &l, zeta, z)?;
        let lm = |a: &[C64], b: &[C64]| self.l_q(a, b, q - 1, eps);
        Ok(theta.sub(&d_fd(&lm, zeta, z, Family::DZ, FD_STEP)?))
    }

    /// `T_i = ∂̄_ζ Gamma_{0,q}`.
    fn t_i(&self, zeta: &[C64], z: &[C64], q: usize) -> Result<DoubleForm, DformError> {
        let g = |a: &[C64], b: &[C64]| self.gamma_0q(a, b, q);
        d_fd(&g, zeta, z, Family::DZetaBar, FD_STEP)
    }

    /// `Q_q = ϑ_ζ ∂_z L_{q-1}`.
    fn q_kernel(&self, zeta: &[C64], z: &[C64], q: usize, eps: f64) -> Result<DoubleForm, DformError> {
        let dl = |a: &[C64], b: &[C64]| {
            let lm = |x: &[C64], y: &[C64]| self.l_q(x, y, q - 1, eps);
            d_fd(&lm, a, b, Family::DZ, FD_STEP)
        };
        theta_zeta_fd(self, &dl, zeta, z)
    }
}

/// Default finite-difference step for the differentiated kernels.
pub const FD_STEP: f64 = 1e-3;

type PairFn<'a> = dyn Fn(&[C64], &[C64]) -> Result<DoubleForm, DformError> + 'a;

/// Derivative along a complex direction: `∂/∂v` or `∂/∂v̄` of one coordinate,
/// by central differences with one Richardson step.
pub fn partial_fd(
    f: &PairFn<'_>,
    zeta: &[C64],
    z: &[C64],
    on_zeta: bool,
    j: usize,
    barred: bool,
    h: f64,
) -> Result<DoubleForm, DformError> {
    let shifted = |dir: C64, t: f64| -> Result<DoubleForm, DformError> {
        let (mut a, mut b) = (zeta.to_vec(), z.to_vec());
        if on_zeta {
            a[j] += dir * t;
        } else {
            b[j] += dir * t;
        }
        f(&a, &b)
    };
    let central = |dir: C64, t: f64| -> Result<DoubleForm, DformError> {
        Ok(shifted(dir, t)?.sub(&shifted(dir, -t)?).scale(c(0.5 / t, 0.0)))
    };
    let rich = |dir: C64| -> Result<DoubleForm, DformError> {
        let coarse = central(dir, h)?;
        let fine = central(dir, h / 2.0)?;
        Ok(fine.scale(c(4.0 / 3.0, 0.0)).sub(&coarse.scale(c(1.0 / 3.0, 0.0))))
    };
    let dx = rich(c(1.0, 0.0))?;
    let dy = rich(c(0.0, 1.0))?;
    let i = if barred { c(0.0, 0.5) } else { c(0.0, -0.5) };
    Ok(dx.scale(c(0.5, 0.0)).add(&dy.scale(i)))
}

/// `sum_j d(family_j) ∧ ∂f/∂(family variable)_j`, for one of the four families.
pub fn d_fd(f: &PairFn<'_>, zeta: &[C64], z: &[C64], family: Family, h: f64) -> Result<DoubleForm, DformError> {
    let n = zeta.len();
    let (on_zeta, barred) = match family {
        Family::DZeta => (true, false),
        Family::DZetaBar => (true, true),
        Family::DZ => (false, false),
        Family::DZBar => (false, true),
    };
    let mut out = DoubleForm::zero(n);
    for j in 0..n {
        let d = partial_fd(f, zeta, z, on_zeta, j, barred, h)?;
        out = out.add(&DoubleForm::basis(n, family, j, one())?.wedge(&d));
    }
    Ok(out)
}

/// `ϑ_ζ = -∗ ∂_ζ ∗` with the Levi metric at each point.
fn theta_zeta_fd(ctx: &KernelContext, f: &PairFn<'_>, zeta: &[C64], z: &[C64]) -> Result<DoubleForm, DformError> {
    let starred = |a: &[C64], b: &[C64]| Ok(ctx.star_at(a)?.apply(&f(a, b)?));
    let d = d_fd(&starred, zeta, z, Family::DZeta, FD_STEP)?;
    Ok(ctx.star_at(zeta)?.apply(&d).scale(c(-1.0, 0.0)))
}

/// Zeta forms whose coefficients carry first derivatives in zeta.
pub type JetForm = Form<Jet>;

fn d_jet(a: &JetForm, family: Family) -> DoubleForm {
    let n = a.n();
    let mut out = DoubleForm::zero(n);
    for j in 0..n {
        let part = DoubleForm::from_terms(
            n,
            a.terms().iter().map(|(m, x)| (*m, if family == Family::DZeta { x.dz(j) } else { x.dzbar(j) })).collect(),
        );
        out = out.add(&DoubleForm::basis(n, family, j, one()).expect("index in range").wedge(&part));
    }
    out
}

/// `∂̄` of a zeta form with jet coefficients.
pub fn dbar_jet(a: &JetForm) -> DoubleForm {
    d_jet(a, Family::DZetaBar)
}

/// `∂` of a zeta form with jet coefficients.
pub fn partial_jet(a: &JetForm) -> DoubleForm {
    d_jet(a, Family::DZeta)
}

/// `ϑ = -∗ ∂ ∗` for a constant metric.
pub fn formal_adjoint_theta(a: &JetForm, star: &HodgeStar) -> DoubleForm {
    star.apply(&partial_jet(&star.apply(a))).scale(c(-1.0, 0.0))
}

/// Exact `∂̄` of a form with polynomial coefficients in the zeta variables.
pub fn dbar_poly(a: &Form<Poly>) -> Form<Poly> {
    let n = a.n();
    let mut out = Form::zero(n);
    for j in 0..n {
        let part = a.map(|p| p.dzbar(j));
        let one = Poly::constant(one(), a.terms().first().map(|(_, p)| p.nvars()).unwrap_or(n));
        out = out.add(&Form::basis(n, Family::DZetaBar, j, one).expect("index in range").wedge(&part));
    }
    out
}

/// Kernel families addressed by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelName {
    B,
    K,
    Cmunu,
    C,
    L,
    Gamma0,
    Ta,
    Ti,
    T,
    P,
    Q,
}

/// A kernel with its parameters, written `B(q)`, `C(q,mu,nu)`, `Gamma_0(q)`,
/// `T_a(q)` and so on, optionally followed by `@eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelId {
    pub name: KernelName,
    pub q: usize,
    pub mu: usize,
    pub nu: usize,
    pub eps: f64,
}

impl KernelId {
    pub fn new(name: KernelName, q: usize) -> KernelId {
        KernelId { name, q, mu: 0, nu: 0, eps: 0.0 }
    }

    pub fn validate(&self, n: usize) -> Result<(), DformError> {
        let bad = |m: String| Err(DformError::InvalidKernel(m));
        if self.q > n {
            return bad(format!("q = {} exceeds n = {n}", self.q));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps = {} must be non-negative", self.eps));
        }
        match self.name {
            KernelName::Cmunu => {
                if self.mu + self.q + 2 > n {
                    return bad(format!("mu = {} exceeds n - q - 2", self.mu));
                }
                if self.nu > self.q {
                    return bad(format!("nu = {} exceeds q", self.nu));
                }
            }
            KernelName::Ta | KernelName::T | KernelName::P | KernelName::Q if self.q == 0 => {
                return bad(format!("{self} needs q >= 1"));
            }
            _ => {}
        }
        Ok(())
    }

    fn base_name(&self) -> &'static str {
        match self.name {
            KernelName::B => "B",
            KernelName::K => "K",
            KernelName::Cmunu | KernelName::C => "C",
            KernelName::L => "L",
            KernelName::Gamma0 => "Gamma_0",
            KernelName::Ta => "T_a",
            KernelName::Ti => "T_i",
            KernelName::T => "T",
            KernelName::P => "P",
            KernelName::Q => "Q",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name {
            KernelName::Cmunu => write!(f, "C({},{},{})", self.q, self.mu, self.nu)?,
            _ => write!(f, "{}({})", self.base_name(), self.q)?,
        }
        if self.eps != 0.0 {
            write!(f, "@{}", self.eps)?;
        }
        Ok(())
    }
}

impl FromStr for KernelId {
    type Err = DformError;

    fn from_str(s: &str) -> Result<KernelId, DformError> {
        let bad = || DformError::InvalidKernel(format!("cannot parse `{s}`"));
        let (body, eps) = match s.trim().split_once('@') {
            Some((b, e)) => (b.trim(), e.trim().parse::<f64>().map_err(|_| bad())?),
            None => (s.trim(), 0.0),
        };
        let (head, args) = body.strip_suffix(')').and_then(|b| b.split_once('(')).ok_or_else(bad)?;
        let args: Vec<usize> =
            args.split(',').map(|a| a.trim().parse::<usize>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let name = match (head.trim(), args.len()) {
            ("B", 1) => KernelName::B,
            ("K", 1) => KernelName::K,
            ("C", 1) => KernelName::C,
            ("C", 3) => KernelName::Cmunu,
            ("L", 1) => KernelName::L,
            ("Gamma_0", 1) => KernelName::Gamma0,
            ("T_a", 1) => KernelName::Ta,
            ("T_i", 1) => KernelName::Ti,
            ("T", 1) => KernelName::T,
            ("P", 1) => KernelName::P,
            ("Q", 1) => KernelName::Q,
            _ => return Err(bad()),
        };
        let (mu, nu) = if args.len() == 3 { (args[1], args[2]) } else { (0, 0) };
        Ok(KernelId { name, q: args[0], mu, nu, eps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ball, pinched};
    use proptest::prelude::*;

    fn p(v: &[(f64, f64)]) -> Vec<C64> {
        v.iter().map(|&(a, b)| c(a, b)).collect()
    }

    #[test]
    fn antisymmetry_of_differentials() {
        let a = DoubleForm::basis(2, Family::DZeta, 0, one()).unwrap();
        let b = DoubleForm::basis(2, Family::DZeta, 1, one()).unwrap();
        assert_eq!(a.wedge(&b), b.wedge(&a).scale(c(-1.0, 0.0)));
        assert!(a.wedge(&a).is_zero());
        assert!(matches!(DoubleForm::basis(2, Family::DZ, 2, one()), Err(DformError::DegreeOverflow(_))));
    }

    #[test]
    fn dbar_squared_vanishes_on_polynomial_forms() {
        let n = 2;
        let z1 = Poly::var(0, n);
        let z2b = Poly::conj_var(1, n);
        let coeff = z1.mul(&z1).mul(&z2b).mul(&z2b).add(&z2b.mul(&Poly::conj_var(0, n)));
        let a = Form::from_terms(n, vec![(1 << bit(n, Family::DZeta, 1), coeff.clone()), (0, coeff)]);
        let dd = dbar_poly(&dbar_poly(&a));
        let pt = p(&[(0.3, -0.2), (0.1, 0.7)]);
        let worst = dd.terms().iter().map(|(_, q)| q.eval(&pt).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-12);
        assert!(!dbar_poly(&a).is_zero());
    }

    #[test]
    fn one_variable_omega_is_the_cauchy_kernel() {
        let ctx = KernelContext::new(&ball(1), BetaMetric::Levi);
        let zeta = p(&[(0.4, -0.7)]);
        let z = p(&[(0.1, 0.2)]);
        let b0 = omega_q(&ctx.beta(&zeta, &z).unwrap(), 0);
        let expect = cauchy_constant(1) / (zeta[0] - z[0]);
        assert_eq!(b0.terms().len(), 1);
        assert!((b0.coeff(1).unwrap() - expect).norm() <= 1e-14 * expect.norm());
    }

    #[test]
    fn omega_vanishes_for_q_equal_n() {
        let ctx = KernelContext::new(&ball(2), BetaMetric::Levi);
        let beta = ctx.beta(&p(&[(0.5, 0.0), (0.0, 0.0)]), &p(&[(0.3, 0.0), (0.0, 0.0)])).unwrap();
        assert!(omega_q(&beta, 2).is_zero());
        assert!(!omega_q(&beta, 1).is_zero());
    }

    #[test]
    fn bochner_martinelli_homogeneity() {
        for q in 0..2 {
            let ctx = KernelContext::new(&ball(2), BetaMetric::Levi);
            let z = p(&[(0.3, 0.0), (0.0, 0.0)]);
            let dir = p(&[(0.2, 0.1), (-0.1, 0.15)]);
            let at = |t: f64| {
                let zeta: Vec<C64> = z.iter().zip(&dir).map(|(a, d)| a + d * t).collect();
                omega_q(&ctx.beta(&zeta, &z).unwrap(), q).coeff_norm()
            };
            let (t1, t2) = (1e-2, 1e-3);
            let slope = (at(t2) / at(t1)).ln() / (t2 / t1).ln();
            assert!((slope - (1.0 - 4.0)).abs() < 0.05, "q={q} slope {slope}");
        }
    }

    #[test]
    fn omega_degrees() {
        let ctx = KernelContext::new(&ball(3), BetaMetric::Levi);
        let beta =
            ctx.beta(&p(&[(0.5, 0.0), (0.0, 0.1), (0.2, 0.0)]), &p(&[(0.3, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap();
        let b1 = omega_q(&beta, 1);
        assert_eq!(b1.degree(Family::DZeta), Some(3));
        assert_eq!(b1.degree(Family::DZetaBar), Some(1));
        assert_eq!(b1.degree(Family::DZBar), Some(1));
    }

    #[test]
    fn alpha_on_the_diagonal() {
        let d = pinched();
        let ctx = KernelContext::new(&d, BetaMetric::Levi);
        let zeta = p(&[(0.3, 0.0), (0.1, 0.05)]);
        let eps = 0.05;
        let a = ctx.alpha(&zeta, &zeta, eps).unwrap();
        let phi = d.phi_eps(&zeta, &zeta, eps);
        assert!((phi + d.r_eps(&zeta, eps)).norm() < 1e-14);
        let dr = d.dr(&zeta);
        let xi = d.xi(d.r(&zeta));
        for j in 0..2 {
            assert!((a.coeffs[j].v - dr[j] * xi / phi).norm() < 1e-12);
        }
    }

    #[test]
    fn gamma_kernel_scaling() {
        let ctx = KernelContext::new(&pinched(), BetaMetric::Levi);
        let zeta = p(&[(0.5, 0.0), (0.1, 0.0)]);
        let z = p(&[(0.4, 0.1), (0.1, 0.2)]);
        let rho2 = ctx.rho2(&zeta, &z);
        let g0 = ctx.gamma_0q(&zeta, &z, 0).unwrap();
        let expect = 1.0 / (2.0 * PI * PI) / rho2;
        assert!((g0.coeff(0).unwrap().re - expect).abs() < 1e-12 * expect);
        let g1 = ctx.gamma_0q(&zeta, &z, 1).unwrap();
        assert_eq!(g1.degree(Family::DZetaBar), Some(1));
        assert_eq!(g1.degree(Family::DZBar), Some(1));
        let flat = KernelContext::new(&pinched(), BetaMetric::Flat);
        assert!(flat.gamma_0q(&zeta, &z, 1).unwrap().is_zero());
    }

    #[test]
    fn theta_of_flat_forms() {
        let n = 2;
        let star = HodgeStar::flat(n);
        let z = p(&[(0.2, 0.1), (-0.3, 0.4)]);
        let dzb1 = 1 << bit(n, Family::DZetaBar, 0);
        let constant = JetForm::from_terms(n, vec![(dzb1, Jet::constant(c(0.7, -0.2), n))]);
        assert!(formal_adjoint_theta(&constant, &star).max_abs() < 1e-14);
        let linear = JetForm::from_terms(n, vec![(dzb1, Jet::var(z[0], 0, n))]);
        let th = formal_adjoint_theta(&linear, &star);
        assert!((th.coeff(0).copied().unwrap() - c(-2.0, 0.0)).norm() < 1e-14);
        let anti = JetForm::from_terms(n, vec![(dzb1, Jet::conj_var(z[0], 0, n))]);
        assert!(formal_adjoint_theta(&anti, &star).max_abs() < 1e-14);
    }

    #[test]
    fn kernel_ids_round_trip() {
        for s in
            ["B(0)", "K(1)", "C(0,0,0)", "C(1)", "L(0)", "Gamma_0(1)", "T_a(1)", "T_i(1)", "T(1)", "P(1)", "Q(1)@0.05"]
        {
            let id: KernelId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
            id.validate(2).unwrap();
        }
        assert!("C(1,1,0)".parse::<KernelId>().unwrap().validate(2).is_err());
        assert!("C(0,0,1)".parse::<KernelId>().unwrap().validate(2).is_err());
        assert!("B(3)".parse::<KernelId>().unwrap().validate(2).is_err());
        assert!("T(0)".parse::<KernelId>().unwrap().validate(2).is_err());
        assert!("X(1)".parse::<KernelId>().is_err());
    }

    #[test]
    fn differentiated_kernels_are_finite() {
        let ctx = KernelContext::new(&ball(2), BetaMetric::Levi);
        let zeta = p(&[(0.6, 0.1), (0.2, -0.3)]);
        let z = p(&[(0.1, 0.0), (0.0, 0.2)]);
        for s in ["L(0)@0.05", "T_a(1)@0.05", "T_i(1)", "Q(1)@0.05", "P(1)@0.05"] {
            let id: KernelId = s.parse().unwrap();
            let k = ctx.eval(&id, &zeta, &z).unwrap();
            assert!(k.terms().iter().all(|(_, x)| x.re.is_finite() && x.im.is_finite()), "{s}");
        }
        assert!(matches!(ctx.eval(&"B(0)".parse().unwrap(), &z, &z), Err(DformError::Diagonal)));
    }

    fn small_form(n: usize) -> impl Strategy<Value = DoubleForm> {
        let nbits = 4 * n as u32;
        prop::collection::vec((0u32..(1 << nbits), -3i32..=3, -3i32..=3), 0..5).prop_map(move |raw| {
            DoubleForm::from_terms(n, raw.into_iter().map(|(m, a, b)| (m, c(f64::from(a), f64::from(b)))).collect())
        })
    }

    fn parity(f: &DoubleForm) -> Option<u32> {
        let mut it = f.terms().iter().map(|(m, _)| m.count_ones() % 2);
        let first = it.next()?;
        it.all(|x| x == first).then_some(first)
    }

    proptest! {
        #[test]
        fn wedge_is_associative(a in small_form(2), b in small_form(2), c3 in small_form(2)) {
            prop_assert_eq!(a.wedge(&b).wedge(&c3), a.wedge(&b.wedge(&c3)));
        }

        #[test]
        fn wedge_is_graded_commutative(a in small_form(2), b in small_form(2)) {
            if let (Some(pa), Some(pb)) = (parity(&a), parity(&b)) {
                let sign = if pa * pb == 1 { -1.0 } else { 1.0 };
                prop_assert_eq!(a.wedge(&b), b.wedge(&a).scale(c(sign, 0.0)));
            }
        }

        #[test]
        fn star_sign_law_on_levi_metrics(x in -0.5f64..1.0, y in -0.3f64..0.3, u in -0.5f64..0.5, v in -0.5f64..0.5) {
            let d = pinched();
            let zeta = p(&[(x, y), (u, v)]);
            let star = HodgeStar::new(&d.levi_matrix(&zeta)).unwrap();
            for mask in 0..=zeta_bits(2) {
                let f = DoubleForm::from_terms(2, vec![(mask, one())]);
                let k = mask.count_ones() as i32;
                let sign = if (k * (4 - k)) % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!(star.apply(&star.apply(&f)).sub(&f.scale(c(sign, 0.0))).max_abs() <= 1e-10);
            }
        }
    }
}
