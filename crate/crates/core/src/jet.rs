//! First-order forward differentiation in Wirtinger form.
//!
//! A [`Jet`] over `m` complex variables carries a value together with the
//! `2m` derivatives `d/dv_i` (slots `0..m`) and `d/dv̄_i` (slots `m..2m`).

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

pub type C64 = Complex64;

pub const MAX_VARS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: C64,
    d: [C64; 2 * MAX_VARS],
    m: u8,
}

impl Jet {
    pub fn constant(v: C64, m: usize) -> Jet {
        assert!(m <= MAX_VARS, "at most {MAX_VARS} complex variables");
        Jet { v, d: [C64::new(0.0, 0.0); 2 * MAX_VARS], m: m as u8 }
    }

    pub fn real(v: f64, m: usize) -> Jet {
        Jet::constant(C64::new(v, 0.0), m)
    }

    /// The coordinate `v_i` itself.
    pub fn var(v: C64, i: usize, m: usize) -> Jet {
        let mut j = Jet::constant(v, m);
        j.d[i] = C64::new(1.0, 0.0);
        j
    }

    /// The conjugate coordinate `v̄_i`.
    pub fn conj_var(v: C64, i: usize, m: usize) -> Jet {
        let mut j = Jet::constant(v.conj(), m);
        j.d[m + i] = C64::new(1.0, 0.0);
        j
    }

    pub fn nvars(&self) -> usize {
        self.m as usize
    }

    /// `d/dv_i`.
    pub fn dz(&self, i: usize) -> C64 {
        self.d[i]
    }

    /// `d/dv̄_i`.
    pub fn dzbar(&self, i: usize) -> C64 {
        self.d[self.m as usize + i]
    }

    pub fn conj(&self) -> Jet {
        let m = self.m as usize;
        let mut out = Jet::constant(self.v.conj(), m);
        for i in 0..m {
            out.d[i] = self.d[m + i].conj();
            out.d[m + i] = self.d[i].conj();
        }
        out
    }

    pub fn scale(&self, c: C64) -> Jet {
        let mut out = *self;
        out.v *= c;
        for x in out.d.iter_mut().take(2 * self.m as usize) {
            *x *= c;
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let inv = self.v.inv();
        let f = -inv * inv;
        let mut out = Jet::constant(inv, self.m as usize);
        for k in 0..2 * self.m as usize {
            out.d[k] = f * self.d[k];
        }
        out
    }

    pub fn div(&self, other: &Jet) -> Jet {
        *self * other.recip()
    }

    pub fn powi(&self, k: i32) -> Jet {
        if k == 0 {
            return Jet::real(1.0, self.m as usize);
        }
        let f = C64::new(f64::from(k), 0.0) * self.v.powi(k - 1);
        let mut out = Jet::constant(self.v.powi(k), self.m as usize);
        for i in 0..2 * self.m as usize {
            out.d[i] = f * self.d[i];
        }
        out
    }

    /// Applies a real function with derivative `df` to a real-valued jet.
    pub fn map_real(&self, f: f64, df: f64) -> Jet {
        let mut out = Jet::constant(C64::new(f, 0.0), self.m as usize);
        for i in 0..2 * self.m as usize {
            out.d[i] = self.d[i] * df;
        }
        out
    }

    pub fn sqrt_real(&self) -> Jet {
        let s = self.v.re.sqrt();
        self.map_real(s, 0.5 / s)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..2 * self.m as usize {
            self.d[i] += o.d[i];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self.v -= o.v;
        for i in 0..2 * self.m as usize {
            self.d[i] -= o.d[i];
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v, self.m as usize);
        for i in 0..2 * self.m as usize {
            out.d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        out
    }
}
