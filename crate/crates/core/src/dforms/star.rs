use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::jet::C64;

use super::form::{bit, family_of, wedge_sign, zeta_bits, Coef, DoubleForm, Family, Form};
use super::DformError;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Bits `2j`, `2j+1` read as `dx_j`, `dy_j` in real mode.
fn complex_to_real(n: usize) -> impl Fn(u32) -> DoubleForm {
    move |b| {
        let (fam, j) = family_of(n, b);
        let (x, y) = (1 << (2 * j), 1 << (2 * j + 1));
        match fam {
            Family::DZeta => DoubleForm::from_terms(n, vec![(x, c(1.0, 0.0)), (y, c(0.0, 1.0))]),
            Family::DZetaBar => DoubleForm::from_terms(n, vec![(x, c(1.0, 0.0)), (y, c(0.0, -1.0))]),
            _ => DoubleForm::from_terms(n, vec![(1 << b, c(1.0, 0.0))]),
        }
    }
}

fn real_to_complex(n: usize) -> impl Fn(u32) -> DoubleForm {
    move |b| {
        if b >= 2 * n as u32 {
            return DoubleForm::from_terms(n, vec![(1 << b, c(1.0, 0.0))]);
        }
        let j = (b / 2) as usize;
        let (dz, dzb) = (1 << bit(n, Family::DZeta, j), 1 << bit(n, Family::DZetaBar, j));
        if b % 2 == 0 {
            DoubleForm::from_terms(n, vec![(dz, c(0.5, 0.0)), (dzb, c(0.5, 0.0))])
        } else {
            DoubleForm::from_terms(n, vec![(dz, c(0.0, -0.5)), (dzb, c(0.0, 0.5))])
        }
    }
}

/// Rewrites the zeta part of a form in the real coframe `dx_1, dy_1, ...`.
pub fn to_real<T: Coef>(f: &Form<T>) -> Form<T> {
    f.substitute(&complex_to_real(f.n()))
}

pub fn from_real<T: Coef>(f: &Form<T>) -> Form<T> {
    f.substitute(&real_to_complex(f.n()))
}

/// Real symmetric matrix of a hermitian metric `sum g_jk dzeta_j dzetabar_k`
/// in the coordinates `x_1, y_1, ...`.
pub fn real_metric(g: &DMatrix<C64>) -> DMatrix<f64> {
    let n = g.nrows();
    let u = |p: usize| -> (usize, C64) { (p / 2, if p % 2 == 0 { c(1.0, 0.0) } else { c(0.0, 1.0) }) };
    DMatrix::from_fn(2 * n, 2 * n, |p, q| {
        let (j, a) = u(p);
        let (k, b) = u(q);
        (g[(j, k)] * a * b.conj()).re
    })
}

/// Hodge star on the zeta part for a constant hermitian metric, tabulated on
/// every zeta monomial.
#[derive(Clone, Debug)]
pub struct HodgeStar {
    n: usize,
    table: HashMap<u32, Vec<(u32, C64)>>,
    sqrt_det: f64,
}

impl HodgeStar {
    pub fn flat(n: usize) -> HodgeStar {
        HodgeStar::new(&DMatrix::identity(n, n)).expect("identity metric")
    }

    pub fn new(g: &DMatrix<C64>) -> Result<HodgeStar, DformError> {
        let n = g.nrows();
        let m = real_metric(g);
        let chol = m.clone().cholesky().ok_or(DformError::SingularMetric)?;
        let l = chol.l();
        let l_inv = l.clone().try_inverse().ok_or(DformError::SingularMetric)?;
        let sqrt_det = (0..2 * n).map(|i| l[(i, i)]).product::<f64>();
        let dim = 2 * n as u32;
        let full = zeta_bits(n);
        // e_a = sum_p L_pa theta_p and theta_p = sum_a Linv_ap e_a
        let theta_to_e = |b: u32| -> DoubleForm {
            if b >= dim {
                return DoubleForm::from_terms(n, vec![(1 << b, c(1.0, 0.0))]);
            }
            let p = b as usize;
            DoubleForm::from_terms(n, (0..2 * n).map(|a| (1u32 << a, c(l_inv[(a, p)], 0.0))).collect())
        };
        let e_to_theta = |b: u32| -> DoubleForm {
            let a = b as usize;
            DoubleForm::from_terms(n, (0..2 * n).map(|p| (1u32 << p, c(l[(p, a)], 0.0))).collect())
        };
        let mut table = HashMap::new();
        for mask in 0..=full {
            let f = DoubleForm::from_terms(n, vec![(mask, c(1.0, 0.0))]);
            let e = to_real(&f).substitute(&theta_to_e);
            let starred = DoubleForm::from_terms(
                n,
                e.terms().iter().map(|(em, x)| (full & !em, x * wedge_sign(*em, full & !em))).collect(),
            );
            let back = from_real(&starred.substitute(&e_to_theta)).prune(1e-15);
            table.insert(mask, back.terms().to_vec());
        }
        Ok(HodgeStar { n, table, sqrt_det })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Square root of the determinant of the real metric.
    pub fn volume_factor(&self) -> f64 {
        self.sqrt_det
    }

    pub fn apply<T: Coef>(&self, f: &Form<T>) -> Form<T> {
        let zb = zeta_bits(self.n);
        let mut raw = Vec::new();
        for (mask, x) in f.terms() {
            let (zm, rest) = (mask & zb, mask & !zb);
            for (im, s) in &self.table[&zm] {
                // the zeta monomial precedes the z part, so no sign change
                raw.push((im | rest, x.scale(*s)));
            }
        }
        Form::from_terms(self.n, raw)
    }

    /// Pointwise inner product of two zeta forms.
    pub fn inner(&self, a: &DoubleForm, b: &DoubleForm) -> C64 {
        let top = a.wedge(&self.apply(&b.conj()));
        volume_coefficient(&top) / self.sqrt_det
    }
}

/// Coefficient of `dx_1 ^ dy_1 ^ ... ^ dx_n ^ dy_n` in a top zeta form
/// without z part.
pub fn volume_coefficient(f: &DoubleForm) -> C64 {
    let n = f.n();
    let full = zeta_bits(n);
    f.coeff(full).map(|x| x * top_factor(n)).unwrap_or(c(0.0, 0.0))
}

/// `dzeta_1 ^ dzetabar_1 ^ ... = (-2i)^n dx_1 ^ dy_1 ^ ...`.
pub fn top_factor(n: usize) -> C64 {
    c(0.0, -2.0).powu(n as u32)
}

/// Splits a form into zeta-top pieces: the z part of every term whose zeta
/// part is the full volume form, with the real volume coefficient.
pub fn integrate_zeta_volume(f: &DoubleForm) -> DoubleForm {
    let n = f.n();
    let full = zeta_bits(n);
    let t = top_factor(n);
    DoubleForm::from_terms(
        n,
        f.terms().iter().filter(|(m, _)| m & full == full).map(|(m, x)| (m & !full, x * t)).collect(),
    )
}

/// Surface density of the zeta part on a hypersurface with outer unit real
/// normal `nu`: each `(2n-1)`-monomial `mu` contributes `(nu^flat ^ mu)` read
/// against the volume form.
#[derive(Clone, Debug)]
pub struct BoundaryPairing {
    n: usize,
    table: HashMap<u32, Vec<f64>>,
    imag: HashMap<u32, Vec<f64>>,
}

impl BoundaryPairing {
    pub fn new(n: usize) -> BoundaryPairing {
        let full = zeta_bits(n);
        let mut table = HashMap::new();
        let mut imag = HashMap::new();
        for k in 0..2 * n {
            let mask = full & !(1 << k);
            let real = to_real(&DoubleForm::from_terms(n, vec![(mask, c(1.0, 0.0))]));
            let mut re = vec![0.0; 2 * n];
            let mut im = vec![0.0; 2 * n];
            for (p, (r, i)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
                let v = DoubleForm::from_terms(n, vec![(1 << p, c(1.0, 0.0))]).wedge(&real);
                let x = v.coeff(full).copied().unwrap_or(c(0.0, 0.0));
                *r = x.re;
                *i = x.im;
            }
            table.insert(mask, re);
            imag.insert(mask, im);
        }
        BoundaryPairing { n, table, imag }
    }

    /// z part obtained by restricting the zeta part to the surface element.
    pub fn density(&self, f: &DoubleForm, nu: &[f64]) -> DoubleForm {
        let full = zeta_bits(self.n);
        let mut raw = Vec::new();
        for (mask, x) in f.terms() {
            let zm = mask & full;
            if zm.count_ones() as usize != 2 * self.n - 1 {
                continue;
            }
            let (re, im) = (&self.table[&zm], &self.imag[&zm]);
            let w: C64 = nu.iter().enumerate().map(|(p, v)| c(re[p], im[p]) * *v).sum();
            raw.push((mask & !full, x * w));
        }
        DoubleForm::from_terms(self.n, raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis_forms(n: usize) -> Vec<DoubleForm> {
        (0..=zeta_bits(n)).map(|m| DoubleForm::from_terms(n, vec![(m, c(1.0, 0.0))])).collect()
    }

    fn residual(a: &DoubleForm, b: &DoubleForm) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn star_of_one_is_volume() {
        for n in 1..=3 {
            let s = HodgeStar::flat(n);
            let vol = s.apply(&DoubleForm::scalar(n, c(1.0, 0.0)));
            assert!((volume_coefficient(&vol) - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn double_star_sign_law() {
        let g = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.5, 0.0)]);
        for s in [HodgeStar::flat(2), HodgeStar::new(&g).unwrap()] {
            for f in basis_forms(2) {
                let k = f.terms()[0].0.count_ones() as i32;
                let sign = if (k * (4 - k)) % 2 == 0 { 1.0 } else { -1.0 };
                assert!(residual(&s.apply(&s.apply(&f)), &f.scale(c(sign, 0.0))) < 1e-12);
            }
        }
    }

    #[test]
    fn flat_norm_of_differentials() {
        let s = HodgeStar::flat(1);
        let dzb = DoubleForm::from_terms(1, vec![(2, c(1.0, 0.0))]);
        assert!((s.inner(&dzb, &dzb) - c(2.0, 0.0)).norm() < 1e-14);
        let dx = from_real(&DoubleForm::from_terms(1, vec![(1, c(1.0, 0.0))]));
        assert!((s.inner(&dx, &dx) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn star_is_isometric_for_a_levi_like_metric() {
        let g = DMatrix::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.7, 0.0)]);
        let s = HodgeStar::new(&g).unwrap();
        let a = DoubleForm::from_terms(2, vec![(0b0010, c(1.0, 0.5)), (0b0100, c(-0.3, 0.0))]);
        let b = DoubleForm::from_terms(2, vec![(0b0001, c(0.2, 0.1)), (0b1000, c(0.0, 1.0))]);
        let lhs = s.inner(&a, &b);
        let rhs = s.inner(&s.apply(&a), &s.apply(&b));
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((s.inner(&a, &b) - s.inner(&b, &a).conj()).norm() < 1e-12);
    }

    #[test]
    fn boundary_density_of_the_unit_circle() {
        // on |zeta| = 1 the form dzeta restricts to i zeta ds
        let bp = BoundaryPairing::new(1);
        let t = 0.7f64;
        let nu = [t.cos(), t.sin()];
        let dz = DoubleForm::from_terms(1, vec![(1, c(1.0, 0.0))]);
        let d = bp.density(&dz, &nu);
        let expect = c(0.0, 1.0) * C64::from_polar(1.0, t);
        assert!((d.coeff(0).copied().unwrap() - expect).norm() < 1e-14);
    }
}
