use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::jet::{Jet, C64};

/// One monomial `c * z^a * z̄^b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub z: Vec<u32>,
    pub zbar: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Polynomial in `m` complex variables and their conjugates.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    m: usize,
    terms: Vec<(Vec<u32>, Vec<u32>, C64)>,
}

impl Poly {
    pub fn zero(m: usize) -> Poly {
        Poly { m, terms: Vec::new() }
    }

    pub fn constant(c: C64, m: usize) -> Poly {
        Poly::from_terms(m, vec![(vec![0; m], vec![0; m], c)])
    }

    pub fn var(i: usize, m: usize) -> Poly {
        let mut a = vec![0; m];
        a[i] = 1;
        Poly::from_terms(m, vec![(a, vec![0; m], C64::new(1.0, 0.0))])
    }

    pub fn conj_var(i: usize, m: usize) -> Poly {
        let mut b = vec![0; m];
        b[i] = 1;
        Poly::from_terms(m, vec![(vec![0; m], b, C64::new(1.0, 0.0))])
    }

    fn from_terms(m: usize, raw: Vec<(Vec<u32>, Vec<u32>, C64)>) -> Poly {
        let mut acc: BTreeMap<(Vec<u32>, Vec<u32>), C64> = BTreeMap::new();
        for (a, b, c) in raw {
            assert!(a.len() == m && b.len() == m, "monomial arity differs from {m}");
            *acc.entry((a, b)).or_insert(C64::new(0.0, 0.0)) += c;
        }
        let terms = acc.into_iter().filter(|(_, c)| *c != C64::new(0.0, 0.0)).map(|((a, b), c)| (a, b, c)).collect();
        Poly { m, terms }
    }

    pub fn from_monomials(m: usize, monos: &[Monomial]) -> Result<Poly, String> {
        let mut raw = Vec::new();
        for mono in monos {
            if mono.z.len() != m || mono.zbar.len() != m {
                return Err(format!("monomial has {} / {} exponents, expected {m}", mono.z.len(), mono.zbar.len()));
            }
            raw.push((mono.z.clone(), mono.zbar.clone(), C64::new(mono.re, mono.im)));
        }
        Ok(Poly::from_terms(m, raw))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms.iter().map(|(a, b, c)| Monomial { z: a.clone(), zbar: b.clone(), re: c.re, im: c.im }).collect()
    }

    pub fn nvars(&self) -> usize {
        self.m
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let raw = self.terms.iter().chain(o.terms.iter()).cloned().collect();
        Poly::from_terms(self.m, raw)
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Poly {
        Poly::from_terms(self.m, self.terms.iter().map(|(a, b, x)| (a.clone(), b.clone(), x * c)).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut raw = Vec::with_capacity(self.terms.len() * o.terms.len());
        for (a1, b1, c1) in &self.terms {
            for (a2, b2, c2) in &o.terms {
                let a = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let b = b1.iter().zip(b2).map(|(x, y)| x + y).collect();
                raw.push((a, b, c1 * c2));
            }
        }
        Poly::from_terms(self.m, raw)
    }

    /// Coefficient-wise conjugate, with `z` and `z̄` exponents swapped.
    pub fn conj(&self) -> Poly {
        Poly::from_terms(self.m, self.terms.iter().map(|(a, b, c)| (b.clone(), a.clone(), c.conj())).collect())
    }

    /// Real-valuedness: the polynomial equals its conjugate.
    pub fn is_real(&self, tol: f64) -> bool {
        let d = self.sub(&self.conj());
        d.terms.iter().all(|(_, _, c)| c.norm() <= tol)
    }

    pub fn dz(&self, i: usize) -> Poly {
        let raw = self
            .terms
            .iter()
            .filter(|(a, _, _)| a[i] > 0)
            .map(|(a, b, c)| {
                let mut a2 = a.clone();
                a2[i] -= 1;
                (a2, b.clone(), c * f64::from(a[i]))
            })
            .collect();
        Poly::from_terms(self.m, raw)
    }

    pub fn dzbar(&self, i: usize) -> Poly {
        let raw = self
            .terms
            .iter()
            .filter(|(_, b, _)| b[i] > 0)
            .map(|(a, b, c)| {
                let mut b2 = b.clone();
                b2[i] -= 1;
                (a.clone(), b2, c * f64::from(b[i]))
            })
            .collect();
        Poly::from_terms(self.m, raw)
    }

    /// Re-indexes into `m_new` variables, variable `i` going to `offset + i`.
    pub fn embed(&self, m_new: usize, offset: usize) -> Poly {
        let raw = self
            .terms
            .iter()
            .map(|(a, b, c)| {
                let mut a2 = vec![0; m_new];
                let mut b2 = vec![0; m_new];
                a2[offset..offset + self.m].copy_from_slice(a);
                b2[offset..offset + self.m].copy_from_slice(b);
                (a2, b2, *c)
            })
            .collect();
        Poly::from_terms(m_new, raw)
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(a, b, _)| a.iter().sum::<u32>() + b.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        debug_assert_eq!(z.len(), self.m);
        let mut s = C64::new(0.0, 0.0);
        for (a, b, c) in &self.terms {
            let mut t = *c;
            for i in 0..self.m {
                if a[i] > 0 {
                    t *= z[i].powu(a[i]);
                }
                if b[i] > 0 {
                    t *= z[i].conj().powu(b[i]);
                }
            }
            s += t;
        }
        s
    }

    pub fn eval_real(&self, z: &[C64]) -> f64 {
        self.eval(z).re
    }

    /// Value and first Wirtinger derivatives at `z`.
    pub fn eval_jet(&self, z: &[C64]) -> Jet {
        let m = self.m;
        let mut s = Jet::constant(C64::new(0.0, 0.0), m);
        for (a, b, c) in &self.terms {
            let mut t = Jet::constant(*c, m);
            for i in 0..m {
                if a[i] > 0 {
                    t = t * Jet::var(z[i], i, m).powi(a[i] as i32);
                }
                if b[i] > 0 {
                    t = t * Jet::conj_var(z[i], i, m).powi(b[i] as i32);
                }
            }
            s = s + t;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn derivative_of_modulus_fourth_power() {
        let z = Poly::var(0, 1);
        let zb = Poly::conj_var(0, 1);
        let p = z.mul(&zb).mul(&z.mul(&zb));
        let g = p.dz(0).dzbar(0);
        assert!((g.eval(&[c(0.5, 0.0)]).re - 1.0).abs() < 1e-15);
        assert!(p.is_real(0.0));
    }

    #[test]
    fn jet_matches_symbolic() {
        let z0 = Poly::var(0, 2);
        let z1b = Poly::conj_var(1, 2);
        let p = z0.mul(&z0).mul(&z1b).add(&Poly::constant(c(1.0, 2.0), 2));
        let pt = [c(0.3, -0.1), c(-0.2, 0.4)];
        let j = p.eval_jet(&pt);
        assert!((j.v - p.eval(&pt)).norm() < 1e-15);
        assert!((j.dz(0) - p.dz(0).eval(&pt)).norm() < 1e-15);
        assert!((j.dzbar(1) - p.dzbar(1).eval(&pt)).norm() < 1e-15);
        assert!(j.dz(1).norm() < 1e-15);
    }

    #[test]
    fn embed_moves_variables() {
        let p = Poly::var(0, 1).mul(&Poly::conj_var(0, 1));
        let q = p.embed(2, 1);
        assert!((q.eval(&[c(5.0, 0.0), c(0.0, 2.0)]).re - 4.0).abs() < 1e-15);
    }
}
