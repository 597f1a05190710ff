//! Type arithmetic for admissible kernels and Lebesgue mapping exponents.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kexpr::{format, KernelAtom, KernelExpr, KernelTerm, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("term `{term}` is not admissible: phi exponents sum to {phi_sum} > 0")]
    NotAdmissible { term: String, phi_sum: i32 },
    #[error("term `{0}` carries a positive power of P")]
    PositivePower(String),
    #[error("no terms")]
    NoTerms,
    #[error("{0}")]
    OutOfRange(String),
}

/// `(tau, s)`: type and smooth type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DoubleType {
    pub tau: i32,
    pub s: i32,
}

impl DoubleType {
    pub fn new(tau: i32, s: i32) -> Self {
        DoubleType { tau, s }
    }

    pub fn min(self, other: DoubleType) -> DoubleType {
        DoubleType { tau: self.tau.min(other.tau), s: self.s.min(other.s) }
    }
}

impl fmt::Display for DoubleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.tau, self.s)
    }
}

/// Negative gamma weights that cannot be absorbed by the `R` factors,
/// i.e. the `(1/gamma)^a (1/gamma*)^b` in front of a kernel class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeightPrefix {
    pub gamma: i32,
    pub gamma_star: i32,
}

impl WeightPrefix {
    pub fn new(gamma: i32, gamma_star: i32) -> Self {
        WeightPrefix { gamma, gamma_star }
    }

    pub fn is_trivial(&self) -> bool {
        self.gamma == 0 && self.gamma_star == 0
    }

    /// At least as singular as `other` in both weights.
    pub fn covers(&self, other: &WeightPrefix) -> bool {
        self.gamma <= other.gamma && self.gamma_star <= other.gamma_star
    }

    /// Parses `1`, `1/Gamma`, `1/GammaStar^2`, `1/(Gamma*GammaStar)` and the
    /// like; the inverse of `Display`.
    pub fn parse(text: &str) -> Option<WeightPrefix> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "1" || t.is_empty() {
            return Some(WeightPrefix::default());
        }
        let rest = t.strip_prefix("1/")?;
        let rest = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
        let mut p = WeightPrefix::default();
        for f in rest.split('*') {
            let (base, e) = match f.split_once('^') {
                Some((b, e)) => (b, e.parse::<i32>().ok()?),
                None => (f, 1),
            };
            match base {
                "Gamma" => p.gamma -= e,
                "GammaStar" => p.gamma_star -= e,
                _ => return None,
            }
        }
        Some(p)
    }
}

impl fmt::Display for WeightPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (name, e) in [("Gamma", -self.gamma), ("GammaStar", -self.gamma_star)] {
            match e {
                0 => {}
                1 => parts.push(name.to_string()),
                e => parts.push(format!("{name}^{e}")),
            }
        }
        match parts.len() {
            0 => write!(f, "1"),
            1 => write!(f, "1/{}", parts[0]),
            _ => write!(f, "1/({})", parts.join("*")),
        }
    }
}

/// Exponents read off one product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TermExponents {
    pub n_r: i32,
    pub m_r: i32,
    pub j: i32,
    pub alpha: i32,
    pub k: i32,
    pub beta: i32,
    pub t: i32,
    pub t0: i32,
    pub l: i32,
    pub m: i32,
    pub prefix: WeightPrefix,
}

/// Classification of a single product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermClass {
    pub prefix: WeightPrefix,
    pub ty: DoubleType,
    /// `t - l - m < 0`: the `min{2, .}` term is applied as written.
    pub unusual_balance: bool,
    pub exponents: TermExponents,
}

/// Reads the exponents of a term directly from its atoms.
pub fn exponents(t: &KernelTerm) -> Result<TermExponents, TypeError> {
    let mut g = [0i32; 2];
    let mut r = [0i32; 2];
    let mut e = [(0i32, 0i32); 2];
    let mut orders = [0i32; 2];
    let mut phi_sum = 0i32;
    let mut t0 = 0i32;
    let mut d = [0i32; 2];
    for a in &t.atoms {
        match *a {
            KernelAtom::GammaWeight { starred, exponent } => g[starred as usize] += exponent,
            KernelAtom::RFactor { starred, count } => r[starred as usize] += count as i32,
            KernelAtom::EFactor { starred, j, k } => {
                let s = &mut e[starred as usize];
                s.0 += j;
                s.1 += k;
            }
            KernelAtom::PhiFactor { exponent, .. } => phi_sum += exponent,
            KernelAtom::PPower { t0: p } => t0 += p,
            KernelAtom::DefFn { starred, l } => d[starred as usize] += l as i32,
            KernelAtom::Named { sym, starred, exponent } => orders[starred as usize] += sym.order() * exponent as i32,
        }
    }
    if phi_sum > 0 {
        return Err(TypeError::NotAdmissible { term: term_text(t), phi_sum });
    }
    if t0 < 0 {
        return Err(TypeError::PositivePower(term_text(t)));
    }
    let mut prefix = [0i32; 2];
    let mut weight = [0i32; 2];
    for s in 0..2 {
        let net = e[s].1 + g[s];
        if r[s] + net < 0 {
            prefix[s] = r[s] + net;
            weight[s] = -r[s];
        } else {
            weight[s] = net;
        }
    }
    Ok(TermExponents {
        n_r: r[0],
        m_r: r[1],
        j: e[0].0 + orders[0],
        alpha: weight[0],
        k: e[1].0 + orders[1],
        beta: weight[1],
        t: -phi_sum,
        t0,
        l: d[0],
        m: d[1],
        prefix: WeightPrefix::new(prefix[0], prefix[1]),
    })
}

fn term_text(t: &KernelTerm) -> String {
    format(&KernelExpr::from_term(0, t.clone()))
}

fn smooth_from(x: &TermExponents, n: u32) -> i32 {
    let bal = x.t - x.l - x.m;
    2 * n as i32 + x.j + x.k + bal.min(2) - 2 * (x.t0 + bal)
}

pub fn classify_term(t: &KernelTerm, n: u32) -> Result<TermClass, TypeError> {
    let x = exponents(t)?;
    let s = smooth_from(&x, n);
    let tau = s - (2 - x.n_r - x.m_r - x.alpha - x.beta).max(0);
    Ok(TermClass { prefix: x.prefix, ty: DoubleType { tau, s }, unusual_balance: x.t - x.l - x.m < 0, exponents: x })
}

/// Smooth type `s = 2n + j + min{2, t-l-m} - 2(t0 + t - l - m)`.
///
/// `j` collects the vanishing orders on both sides (first indices of `E` and
/// `Es`, plus named comparable quantities).
pub fn smooth_type(t: &KernelTerm, n: u32) -> Result<i32, TypeError> {
    Ok(classify_term(t, n)?.ty.s)
}

/// Type `tau = s - max{0, 2 - N - M - alpha - beta}`.
pub fn op_type(t: &KernelTerm, n: u32) -> Result<i32, TypeError> {
    Ok(classify_term(t, n)?.ty.tau)
}

/// Worst `(tau, s)` per weight prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KernelClass {
    pub groups: BTreeMap<WeightPrefix, DoubleType>,
}

impl KernelClass {
    pub fn insert(&mut self, prefix: WeightPrefix, ty: DoubleType) {
        self.groups.entry(prefix).and_modify(|t| *t = DoubleType::min(*t, ty)).or_insert(ty);
    }

    pub fn merge(&mut self, other: &KernelClass) {
        for (p, t) in &other.groups {
            self.insert(*p, *t);
        }
    }

    /// Drops groups implied by a more singular group of no better type.
    pub fn reduced(&self) -> KernelClass {
        let items: Vec<_> = self.groups.iter().map(|(p, t)| (*p, *t)).collect();
        let mut out = KernelClass::default();
        for (i, (p, t)) in items.iter().enumerate() {
            let dominated = items
                .iter()
                .enumerate()
                .any(|(k, (q, u))| k != i && q.covers(p) && u.tau <= t.tau && u.s <= t.s && (q != p || u != t));
            if !dominated {
                out.insert(*p, *t);
            }
        }
        out
    }

    /// Every group of `self` is implied by a group of `claim`.
    pub fn within(&self, claim: &KernelClass) -> bool {
        self.groups.iter().all(|(p, t)| claim.groups.iter().any(|(q, u)| q.covers(p) && u.tau <= t.tau && u.s <= t.s))
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn overall(&self) -> Option<DoubleType> {
        self.groups.values().copied().reduce(DoubleType::min)
    }

    /// Parses the `Display` form, e.g. `1/Gamma*(-1,1) + 1/GammaStar*(-1,1)`.
    pub fn parse(text: &str) -> Option<KernelClass> {
        let mut out = KernelClass::default();
        let t = text.trim();
        if t == "0" {
            return Some(out);
        }
        for part in t.split('+') {
            let part = part.trim();
            let open = part.rfind('(')?;
            let ty = part[open..].strip_prefix('(')?.strip_suffix(')')?;
            let (tau, s) = ty.split_once(',')?;
            let ty = DoubleType::new(tau.trim().parse().ok()?, s.trim().parse().ok()?);
            let head = part[..open].trim();
            let prefix = match head.strip_suffix('*') {
                Some(h) => WeightPrefix::parse(h)?,
                None if head.is_empty() => WeightPrefix::default(),
                None => return None,
            };
            out.insert(prefix, ty);
        }
        Some(out)
    }
}

/// A single admissible term realizing the class `prefix * ty` in dimension
/// `n`: `E[s+1,.] * Phi^-1 * P^-n` with the weights needed to make
/// `s - tau` come out right. Fails when no such term exists (for instance
/// `s < -1`, or a two-sided prefix with `s - tau < 2`).
pub fn representative(prefix: WeightPrefix, ty: DoubleType, n: u32) -> Result<KernelTerm, TypeError> {
    use crate::kexpr::{Coeff, PhiKind};
    let gap = ty.s - ty.tau;
    let bad = || TypeError::OutOfRange(format!("no representative for {prefix}*{ty}"));
    if ty.s < -1 || !(0..=2).contains(&gap) || prefix.gamma > 0 || prefix.gamma_star > 0 {
        return Err(bad());
    }
    let mut atoms = Vec::new();
    let weight = 2 - gap;
    let mut e = (ty.s + 1, 0);
    let mut es = None;
    if weight > 0 {
        if prefix.gamma == 0 {
            e.1 = weight;
        } else if prefix.gamma_star == 0 {
            es = Some(weight);
        } else {
            return Err(bad());
        }
    }
    if prefix.gamma < 0 {
        atoms.push(KernelAtom::GammaWeight { starred: false, exponent: prefix.gamma });
    }
    if prefix.gamma_star < 0 {
        atoms.push(KernelAtom::GammaWeight { starred: true, exponent: prefix.gamma_star });
    }
    atoms.push(KernelAtom::EFactor { starred: false, j: e.0, k: e.1 });
    if let Some(k) = es {
        atoms.push(KernelAtom::EFactor { starred: true, j: 0, k });
    }
    atoms.push(KernelAtom::PhiFactor { kind: PhiKind::Phi, exponent: -1 });
    atoms.push(KernelAtom::PPower { t0: n as i32 });
    let t = KernelTerm::new(Coeff::Opaque, atoms).normalized().ok_or_else(bad)?;
    let c = classify_term(&t, n)?;
    if c.prefix != prefix || c.ty != ty {
        return Err(bad());
    }
    Ok(t)
}

impl fmt::Display for KernelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.groups.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .groups
            .iter()
            .rev()
            .map(|(p, t)| if p.is_trivial() { t.to_string() } else { format!("{p}*{t}") })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Classification of a whole expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprClass {
    /// Minimum over all terms.
    pub ty: DoubleType,
    /// Most singular weight prefix appearing in any term.
    pub prefix: WeightPrefix,
    pub class: KernelClass,
    pub unusual_balance: bool,
    pub terms: Vec<TermClass>,
}

pub fn classify(e: &KernelExpr) -> Result<ExprClass, TypeError> {
    if e.terms.is_empty() {
        return Err(TypeError::NoTerms);
    }
    let terms = e.terms.iter().map(|t| classify_term(t, e.n)).collect::<Result<Vec<_>, _>>()?;
    let mut class = KernelClass::default();
    let mut ty = terms[0].ty;
    let mut prefix = WeightPrefix::default();
    for c in &terms {
        class.insert(c.prefix, c.ty);
        ty = ty.min(c.ty);
        prefix.gamma = prefix.gamma.min(c.prefix.gamma);
        prefix.gamma_star = prefix.gamma_star.min(c.prefix.gamma_star);
    }
    Ok(ExprClass { ty, prefix, class, unusual_balance: terms.iter().any(|c| c.unusual_balance), terms })
}

/// `(min tau, min s)` over the terms together with the weight prefix.
pub fn double_type(e: &KernelExpr) -> Result<(DoubleType, WeightPrefix), TypeError> {
    let c = classify(e)?;
    Ok((c.ty, c.prefix))
}

/// A Lebesgue exponent in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exponent {
    Finite(Rational),
    Infinite,
}

impl Exponent {
    pub fn int(v: i64) -> Exponent {
        Exponent::Finite(Rational::from_integer(v))
    }

    pub fn reciprocal(&self) -> Rational {
        match self {
            Exponent::Finite(p) => p.recip(),
            Exponent::Infinite => Rational::zero(),
        }
    }

    pub fn from_reciprocal(r: Rational) -> Exponent {
        if r <= Rational::zero() {
            Exponent::Infinite
        } else {
            Exponent::Finite(r.recip())
        }
    }

    pub fn parse(text: &str) -> Option<Exponent> {
        let t = text.trim();
        if matches!(t, "inf" | "infinity" | "∞") {
            return Some(Exponent::Infinite);
        }
        let r = match t.split_once('/') {
            Some((a, b)) => Rational::new(a.trim().parse().ok()?, b.trim().parse().ok()?),
            None => Rational::from_integer(t.parse().ok()?),
        };
        if r < Rational::one() {
            return None;
        }
        Some(Exponent::Finite(r))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Exponent::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Exponent::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(r) => write!(f, "{r}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Supremum of target exponents `s` with `1/s > 1/p - j/(2n+2)` for an
/// operator of type `j`.
pub fn mapping(j: i32, n: u32, p: Exponent) -> Exponent {
    let gain = Rational::new(j as i64, 2 * n as i64 + 2);
    Exponent::from_reciprocal(p.reciprocal() - gain)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingProfile {
    pub n: u32,
    pub j: i32,
    pub entries: Vec<(Exponent, Exponent)>,
}

pub fn mapping_profile(j: i32, n: u32, ps: &[Exponent]) -> MappingProfile {
    MappingProfile { n, j, entries: ps.iter().map(|&p| (p, mapping(j, n, p))).collect() }
}

/// Isotropic kernel class `E_m` with `k` derivative-free factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IsotropicKernel {
    pub m: i32,
    pub k: u32,
}

impl IsotropicKernel {
    pub fn new(m: i32, k: u32, n: u32) -> Result<Self, TypeError> {
        if m - 2 * k as i32 >= 1 - 2 * n as i32 {
            Ok(IsotropicKernel { m, k })
        } else {
            Err(TypeError::OutOfRange(format!("isotropic kernel needs m - 2k >= 1 - 2n (m={m}, k={k}, n={n})")))
        }
    }
}

/// Reciprocal gain per application of a type-1 isotropic operator.
pub fn isotropic_gain(n: u32) -> Rational {
    Rational::new(1, 2 * n as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingRule {
    Admissible,
    Isotropic,
}

impl fmt::Display for BindingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingRule::Admissible => write!(f, "admissible"),
            BindingRule::Isotropic => write!(f, "isotropic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZChain {
    pub steps: u32,
    pub admissible_steps: u32,
    pub isotropic_steps: u32,
    pub binding: BindingRule,
}

fn steps_with_gain(start: Rational, gain: Rational) -> u32 {
    // Smallest k >= 1 with start - k*gain < 0.
    let q = (start / gain).floor().to_integer();
    (q + 1).max(1) as u32
}

/// Number of type-1 gains needed to pass from `L^p` into `L^inf`.
pub fn z_chain(n: u32, start_p: Exponent) -> ZChain {
    let start = start_p.reciprocal();
    let admissible_steps = steps_with_gain(start, Rational::new(1, 2 * n as i64 + 2));
    let isotropic_steps = steps_with_gain(start, isotropic_gain(n));
    let binding = if admissible_steps >= isotropic_steps { BindingRule::Admissible } else { BindingRule::Isotropic };
    ZChain { steps: admissible_steps.max(isotropic_steps), admissible_steps, isotropic_steps, binding }
}

/// Supremum `(2n+2)/(2n+2-j)` of integrability exponents of a type-`j` kernel.
pub fn integrability_threshold(j: i32, n: u32) -> Result<Rational, TypeError> {
    let d = 2 * n as i64 + 2;
    if j < 0 || j as i64 >= d {
        return Err(TypeError::OutOfRange(format!("type {j} outside 0..{d} for n={n}")));
    }
    Ok(Rational::new(d, d - j as i64))
}

/// True when the rational is a nonnegative integer.
pub fn is_whole(r: &Rational) -> bool {
    r.is_integer() && !r.is_negative()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::kexpr::strategies::{admissible_atom, term_with};
    use crate::kexpr::{Coeff, KernelAtom};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tau_le_s(t in term_with(admissible_atom()), n in 1u32..=5) {
            let c = classify_term(&t, n).unwrap();
            prop_assert!(c.ty.tau <= c.ty.s);
        }

        #[test]
        fn s_increases_with_j(t in term_with(admissible_atom()), n in 1u32..=5, extra in 1i32..=3) {
            let base = classify_term(&t, n).unwrap().ty.s;
            let mut t2 = t.clone();
            t2.atoms.push(KernelAtom::EFactor { starred: false, j: extra, k: 0 });
            let s2 = classify_term(&t2, n).unwrap().ty.s;
            prop_assert_eq!(s2, base + extra);
        }

        #[test]
        fn gamma_never_lowers_tau(t in term_with(admissible_atom()), n in 1u32..=5, a in 0i32..=3) {
            let t = t.normalized().unwrap_or(KernelTerm::constant(Coeff::one()));
            let before = classify_term(&t, n).unwrap();
            let mut t2 = t.clone();
            t2.atoms.push(KernelAtom::GammaWeight { starred: false, exponent: a });
            let t2 = t2.normalized().unwrap();
            let after = classify_term(&t2, n).unwrap();
            prop_assert!(after.ty.tau >= before.ty.tau);
            prop_assert_eq!(after.ty.s, before.ty.s);
            prop_assert!(before.prefix.covers(&after.prefix));
        }

        #[test]
        fn normalize_preserves_class(t in term_with(admissible_atom()), n in 1u32..=5) {
            if let Some(c) = t.normalized() {
                prop_assert_eq!(classify_term(&t, n).unwrap().ty, classify_term(&c, n).unwrap().ty);
            }
        }

        #[test]
        fn mapping_monotone(n in 1u32..=6, j in 0i32..12, p in 1i64..40) {
            let p = Exponent::int(p);
            let a = mapping(j, n, p).reciprocal();
            let b = mapping(j + 1, n, p).reciprocal();
            prop_assert!(b <= a);
            prop_assert_eq!(mapping(2 * n as i32 + 2, n, p), Exponent::Infinite);
        }
    }

    #[test]
    fn z_chain_n_plus_two() {
        for n in 1..=6 {
            assert_eq!(z_chain(n, Exponent::int(2)).steps, n + 2);
        }
    }
}
