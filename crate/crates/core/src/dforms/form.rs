use std::ops::{Add, Mul, Sub};

use crate::geom::Poly;
use crate::jet::{Jet, C64};

use super::DformError;

/// Coefficient ring of a form.
pub trait Coef: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn scale(&self, c: C64) -> Self;
    fn is_zero(&self) -> bool;
    fn conj(&self) -> Self;
    /// The unit of the ring this value lives in.
    fn one_like(&self) -> Self;
}

impl Coef for C64 {
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn conj(&self) -> Self {
        C64::conj(self)
    }
    fn one_like(&self) -> Self {
        C64::new(1.0, 0.0)
    }
}

impl Coef for Jet {
    fn scale(&self, c: C64) -> Self {
        Jet::scale(self, c)
    }
    fn is_zero(&self) -> bool {
        false
    }
    fn conj(&self) -> Self {
        Jet::conj(self)
    }
    fn one_like(&self) -> Self {
        Jet::real(1.0, self.nvars())
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, o: Poly) -> Poly {
        Poly::add(&self, &o)
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, o: Poly) -> Poly {
        Poly::sub(&self, &o)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, o: Poly) -> Poly {
        Poly::mul(&self, &o)
    }
}

impl Coef for Poly {
    fn scale(&self, c: C64) -> Self {
        Poly::scale(self, c)
    }
    fn is_zero(&self) -> bool {
        self.monomials().is_empty()
    }
    fn conj(&self) -> Self {
        Poly::conj(self)
    }
    fn one_like(&self) -> Self {
        Poly::constant(C64::new(1.0, 0.0), self.nvars())
    }
}

/// The four families of differentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    DZeta,
    DZetaBar,
    DZ,
    DZBar,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::DZeta, Family::DZetaBar, Family::DZ, Family::DZBar];

    fn offset(self, n: usize) -> u32 {
        match self {
            Family::DZeta => 0,
            Family::DZetaBar => 1,
            Family::DZ => 2 * n as u32,
            Family::DZBar => 2 * n as u32 + 1,
        }
    }
}

/// Bit of the differential `family_j`. The zeta differentials occupy the low
/// `2n` bits, interleaved as `dzeta_1, dzetabar_1, dzeta_2, ...`.
pub fn bit(n: usize, family: Family, j: usize) -> u32 {
    family.offset(n) + 2 * j as u32
}

pub fn family_of(n: usize, b: u32) -> (Family, usize) {
    let side = b >= 2 * n as u32;
    let local = b - if side { 2 * n as u32 } else { 0 };
    let fam = match (side, local % 2) {
        (false, 0) => Family::DZeta,
        (false, _) => Family::DZetaBar,
        (true, 0) => Family::DZ,
        (true, _) => Family::DZBar,
    };
    (fam, (local / 2) as usize)
}

pub fn zeta_bits(n: usize) -> u32 {
    (1u32 << (2 * n)) - 1
}

/// Sign of `a ∧ b` relative to the sorted monomial `a | b`.
pub fn wedge_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let k = rest.trailing_zeros();
        swaps += (a >> (k + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A double form: sorted wedge monomials (bit masks) with coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Form<T> {
    n: usize,
    terms: Vec<(u32, T)>,
}

pub type DoubleForm = Form<C64>;

impl<T: Coef> Form<T> {
    pub fn zero(n: usize) -> Self {
        assert!(4 * n <= 32, "double forms support n <= 8");
        Form { n, terms: Vec::new() }
    }

    pub fn scalar(n: usize, c: T) -> Self {
        Form::from_terms(n, vec![(0, c)])
    }

    pub fn basis(n: usize, family: Family, j: usize, c: T) -> Result<Self, DformError> {
        if j >= n {
            return Err(DformError::DegreeOverflow(format!("index {} exceeds dimension {n}", j + 1)));
        }
        Ok(Form::from_terms(n, vec![(1 << bit(n, family, j), c)]))
    }

    /// Builds a form from unsorted terms, merging equal monomials.
    pub fn from_terms(n: usize, mut raw: Vec<(u32, T)>) -> Self {
        raw.sort_by_key(|(m, _)| *m);
        let mut terms: Vec<(u32, T)> = Vec::with_capacity(raw.len());
        for (m, c) in raw {
            match terms.last_mut() {
                Some((lm, lc)) if *lm == m => *lc = lc.clone() + c,
                _ => terms.push((m, c)),
            }
        }
        terms.retain(|(_, c)| !c.is_zero());
        Form { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(u32, T)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, mask: u32) -> Option<&T> {
        self.terms.iter().find(|(m, _)| *m == mask).map(|(_, c)| c)
    }

    /// Degree in one family of differentials, if homogeneous.
    pub fn degree(&self, family: Family) -> Option<u32> {
        let fam_mask = (0..self.n).fold(0u32, |acc, j| acc | 1 << bit(self.n, family, j));
        let mut degs = self.terms.iter().map(|(m, _)| (m & fam_mask).count_ones());
        let first = degs.next()?;
        degs.all(|d| d == first).then_some(first)
    }

    pub fn add(&self, o: &Self) -> Self {
        let raw = self.terms.iter().chain(o.terms.iter()).cloned().collect();
        Form::from_terms(self.n, raw)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        Form::from_terms(self.n, self.terms.iter().map(|(m, x)| (*m, x.scale(c))).collect())
    }

    pub fn mul_coef(&self, c: &T) -> Self {
        Form::from_terms(self.n, self.terms.iter().map(|(m, x)| (*m, x.clone() * c.clone())).collect())
    }

    pub fn wedge(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n, "forms over different dimensions");
        let mut raw = Vec::with_capacity(self.terms.len() * o.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                if ma & mb != 0 {
                    continue;
                }
                let c = ca.clone() * cb.clone();
                let s = wedge_sign(*ma, *mb);
                raw.push((ma | mb, if s > 0.0 { c } else { c.scale(C64::new(-1.0, 0.0)) }));
            }
        }
        Form::from_terms(self.n, raw)
    }

    pub fn wedge_power(&self, k: u32, one: T) -> Self {
        let mut out = Form::scalar(self.n, one);
        for _ in 0..k {
            out = out.wedge(self);
        }
        out
    }

    /// Replaces every differential by a one-form and re-expands.
    pub fn substitute(&self, image: &dyn Fn(u32) -> DoubleForm) -> Self {
        let mut raw = Vec::new();
        for (mask, c) in &self.terms {
            let mut acc = DoubleForm::scalar(self.n, C64::new(1.0, 0.0));
            let mut rest = *mask;
            while rest != 0 {
                let b = rest.trailing_zeros();
                acc = acc.wedge(&image(b));
                rest &= rest - 1;
            }
            for (m, x) in acc.terms {
                raw.push((m, c.scale(x)));
            }
        }
        Form::from_terms(self.n, raw)
    }

    /// Complex conjugate: coefficients conjugated, barred and unbarred
    /// differentials exchanged.
    pub fn conj(&self) -> Self {
        let n = self.n;
        let conj_coeffs = Form::from_terms(n, self.terms.iter().map(|(m, c)| (*m, c.conj())).collect());
        conj_coeffs.substitute(&|b| {
            let (fam, j) = family_of(n, b);
            let swapped = match fam {
                Family::DZeta => Family::DZetaBar,
                Family::DZetaBar => Family::DZeta,
                Family::DZ => Family::DZBar,
                Family::DZBar => Family::DZ,
            };
            DoubleForm::from_terms(n, vec![(1 << bit(n, swapped, j), C64::new(1.0, 0.0))])
        })
    }

    /// Exchanges the roles of `zeta` and `z` in the differentials.
    pub fn swap_variables(&self) -> Self {
        let n = self.n;
        self.substitute(&|b| {
            let (fam, j) = family_of(n, b);
            let swapped = match fam {
                Family::DZeta => Family::DZ,
                Family::DZetaBar => Family::DZBar,
                Family::DZ => Family::DZeta,
                Family::DZBar => Family::DZetaBar,
            };
            DoubleForm::from_terms(n, vec![(1 << bit(n, swapped, j), C64::new(1.0, 0.0))])
        })
    }

    pub fn map<U: Coef>(&self, f: impl Fn(&T) -> U) -> Form<U> {
        Form::from_terms(self.n, self.terms.iter().map(|(m, c)| (*m, f(c))).collect())
    }
}

impl DoubleForm {
    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.norm()))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn prune(&self, tol: f64) -> DoubleForm {
        DoubleForm { n: self.n, terms: self.terms.iter().filter(|(_, c)| c.norm() > tol).cloned().collect() }
    }

    /// Monomial text such as `dzeta1^dzetabar2^dzbar1`.
    pub fn monomial_name(n: usize, mask: u32) -> String {
        if mask == 0 {
            return "1".into();
        }
        let mut parts = Vec::new();
        let mut rest = mask;
        while rest != 0 {
            let b = rest.trailing_zeros();
            let (fam, j) = family_of(n, b);
            let name = match fam {
                Family::DZeta => "dzeta",
                Family::DZetaBar => "dzetabar",
                Family::DZ => "dz",
                Family::DZBar => "dzbar",
            };
            parts.push(format!("{name}{}", j + 1));
            rest &= rest - 1;
        }
        parts.join("^")
    }
}
