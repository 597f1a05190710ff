//! Formal kernel products and their sums.
//!
//! A [`KernelExpr`] is a sum of [`KernelTerm`]s; each term is a coefficient
//! times a multiset of [`KernelAtom`]s such as `R^1 * E[1,0] * PhiBar^-1 * P^-1`.
//! The atoms are the building blocks of admissible kernels: products of first
//! derivatives of the defining function, `E[j,k]` class factors, powers of the
//! support function `phi` and its conjugates/adjoints, negative powers of the
//! gauge `P`, powers of `r`, explicit `gamma` weights and a few named
//! comparable quantities used by the rewrite engine.

mod format;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub use format::format;
pub use parse::{parse, parse_template, ParseError};

pub type Rational = Ratio<i64>;

/// Index carried by named quantities: a lowercase letter, with `n` reserved
/// for the normal direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Idx(pub char);

impl Idx {
    pub const NORMAL: Idx = Idx('n');

    pub fn is_normal(self) -> bool {
        self.0 == 'n'
    }
}

impl fmt::Display for Idx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhiKind {
    Phi,
    PhiBar,
    PhiStar,
    PhiBarStar,
}

impl PhiKind {
    pub const ALL: [PhiKind; 4] = [PhiKind::Phi, PhiKind::PhiBar, PhiKind::PhiStar, PhiKind::PhiBarStar];

    pub fn name(self) -> &'static str {
        match self {
            PhiKind::Phi => "Phi",
            PhiKind::PhiBar => "PhiBar",
            PhiKind::PhiStar => "PhiStar",
            PhiKind::PhiBarStar => "PhiBarStar",
        }
    }

    /// Adjoint: swap the variables and conjugate.
    pub fn star(self) -> PhiKind {
        match self {
            PhiKind::Phi => PhiKind::PhiStar,
            PhiKind::PhiStar => PhiKind::Phi,
            PhiKind::PhiBar => PhiKind::PhiBarStar,
            PhiKind::PhiBarStar => PhiKind::PhiBar,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Opaque comparable quantities. They are never expanded into coordinates;
/// the rewrite engine only knows the facts recorded in its rule base.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Named {
    /// The squared distance function.
    Rho2,
    /// `L_i rho^2`.
    Lrho(Idx),
    /// `conj(L_i) rho^2`.
    Lbarrho(Idx),
    /// `zeta_i - z_i` in frame coordinates.
    Coord(Idx),
    /// `conj(zeta_i - z_i)`.
    CoordBar(Idx),
    /// Kronecker delta of two indices.
    Delta(Idx, Idx),
    /// `sum_{j<n} |L_j rho^2|^2`.
    LrhoSq,
    /// `sum_{j<n} |zeta_j - z_j|^2`.
    CoordSqT,
}

impl Named {
    /// Order of vanishing in `|zeta - z|` of one factor.
    pub fn order(self) -> i32 {
        match self {
            Named::Rho2 | Named::LrhoSq | Named::CoordSqT => 2,
            Named::Lrho(_) | Named::Lbarrho(_) | Named::Coord(_) | Named::CoordBar(_) => 1,
            Named::Delta(..) => 0,
        }
    }

    pub fn base_name(self) -> &'static str {
        match self {
            Named::Rho2 => "Rho2",
            Named::Lrho(_) => "Lrho",
            Named::Lbarrho(_) => "Lbarrho",
            Named::Coord(_) => "Coord",
            Named::CoordBar(_) => "CoordBar",
            Named::Delta(..) => "Delta",
            Named::LrhoSq => "LrhoSq",
            Named::CoordSqT => "CoordSqT",
        }
    }

    /// Whether the adjoint is the same quantity (possibly up to sign) rather
    /// than the starred copy.
    fn star_image(self) -> Option<(Named, i64)> {
        match self {
            Named::Rho2 | Named::Delta(..) | Named::CoordSqT => Some((self, 1)),
            Named::Coord(i) => Some((Named::CoordBar(i), -1)),
            Named::CoordBar(i) => Some((Named::Coord(i), -1)),
            Named::Lrho(_) | Named::Lbarrho(_) | Named::LrhoSq => None,
        }
    }
}

/// One factor of a kernel product.
///
/// The declaration order of the variants is the canonical print order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelAtom {
    /// `gamma^a` (`GammaStar` when starred); `a` may be negative.
    GammaWeight {
        starred: bool,
        exponent: i32,
    },
    /// `R_N` (or `R*_M`).
    RFactor {
        starred: bool,
        count: u32,
    },
    /// `E[j,k]` (or `Es[j,k]`).
    EFactor {
        starred: bool,
        j: i32,
        k: i32,
    },
    PhiFactor {
        kind: PhiKind,
        exponent: i32,
    },
    /// `P^{-t0}`.
    PPower {
        t0: i32,
    },
    /// `r^l` (or `r*^m`).
    DefFn {
        starred: bool,
        l: u32,
    },
    Named {
        sym: Named,
        starred: bool,
        exponent: u32,
    },
}

impl KernelAtom {
    pub fn star(self) -> (KernelAtom, i64) {
        use KernelAtom::*;
        match self {
            GammaWeight { starred, exponent } => (GammaWeight { starred: !starred, exponent }, 1),
            RFactor { starred, count } => (RFactor { starred: !starred, count }, 1),
            EFactor { starred, j, k } => (EFactor { starred: !starred, j, k }, 1),
            PhiFactor { kind, exponent } => (PhiFactor { kind: kind.star(), exponent }, 1),
            PPower { t0 } => (PPower { t0 }, 1),
            DefFn { starred, l } => (DefFn { starred: !starred, l }, 1),
            Named { sym, starred, exponent } => match sym.star_image() {
                Some((image, sign)) => {
                    (Named { sym: image, starred, exponent }, if exponent % 2 == 1 { sign } else { 1 })
                }
                None => (Named { sym, starred: !starred, exponent }, 1),
            },
        }
    }

    /// Unknown-function class factors make a term's coefficient opaque.
    pub fn is_class_factor(&self) -> bool {
        matches!(self, KernelAtom::EFactor { .. } | KernelAtom::RFactor { .. })
    }
}

/// A rational multiple of a known quantity, or an unspecified constant.
///
/// Terms carrying class factors (`E`, `R`) stand for unknown functions of a
/// given class, so their coefficients are opaque and never cancel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coeff {
    Exact(Rational),
    Opaque,
}

impl Coeff {
    pub fn one() -> Coeff {
        Coeff::Exact(Rational::one())
    }

    pub fn int(v: i64) -> Coeff {
        Coeff::Exact(Rational::from_integer(v))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coeff::Exact(r) if r.is_zero())
    }

    pub fn add(self, other: Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a + b),
            _ => Coeff::Opaque,
        }
    }

    pub fn mul(self, other: Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a * b),
            (Coeff::Exact(a), Coeff::Opaque) | (Coeff::Opaque, Coeff::Exact(a)) if a.is_zero() => {
                Coeff::Exact(Rational::zero())
            }
            _ => Coeff::Opaque,
        }
    }

    pub fn div(self, other: Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) if !b.is_zero() => Coeff::Exact(a / b),
            _ => Coeff::Opaque,
        }
    }

    pub fn neg(self) -> Coeff {
        match self {
            Coeff::Exact(a) => Coeff::Exact(-a),
            Coeff::Opaque => Coeff::Opaque,
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, Coeff::Exact(r) if r.is_negative())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KernelTerm {
    pub coeff: Coeff,
    pub atoms: Vec<KernelAtom>,
}

impl KernelTerm {
    pub fn new(coeff: Coeff, atoms: Vec<KernelAtom>) -> Self {
        KernelTerm { coeff, atoms }
    }

    pub fn constant(coeff: Coeff) -> Self {
        KernelTerm { coeff, atoms: Vec::new() }
    }

    pub fn atom(atom: KernelAtom) -> Self {
        KernelTerm { coeff: Coeff::one(), atoms: vec![atom] }
    }

    pub fn mul(&self, other: &KernelTerm) -> KernelTerm {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        KernelTerm { coeff: self.coeff.mul(other.coeff), atoms }
    }

    pub fn scale(&self, c: Coeff) -> KernelTerm {
        KernelTerm { coeff: self.coeff.mul(c), atoms: self.atoms.clone() }
    }

    pub fn star(&self) -> KernelTerm {
        let mut coeff = self.coeff;
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let (s, sign) = a.star();
                if sign < 0 {
                    coeff = coeff.neg();
                }
                s
            })
            .collect();
        KernelTerm { coeff, atoms }
    }

    /// Canonical form of a single term, or `None` when it vanishes.
    pub fn normalized(&self) -> Option<KernelTerm> {
        let mono = Mono::from_atoms(&self.atoms)?;
        let mono = mono.folded();
        let atoms = mono.to_atoms();
        let mut coeff = self.coeff;
        if coeff.is_zero() {
            return None;
        }
        if atoms.iter().any(KernelAtom::is_class_factor) {
            coeff = Coeff::Opaque;
        }
        Some(KernelTerm { coeff, atoms })
    }

    /// Monomial quotient `self / pattern` (coefficients divided as well).
    ///
    /// Every atom kind present in the pattern must be present in the term with
    /// the same sign and at least the same magnitude; `E` and `R` factors are
    /// matched by index subtraction.
    pub fn divide(&self, pattern: &KernelTerm) -> Option<KernelTerm> {
        let t = Mono::from_atoms(&self.atoms)?;
        let p = Mono::from_atoms(&pattern.atoms)?;
        let q = t.quotient(&p)?;
        let coeff = self.coeff.div(pattern.coeff);
        Some(KernelTerm { coeff, atoms: q.to_atoms() })
    }

    pub fn has_class_factor(&self) -> bool {
        self.atoms.iter().any(KernelAtom::is_class_factor)
    }

    /// Atoms with every gamma power folded into a same-side `E` factor.
    /// Two class terms with equal keys denote the same class.
    pub fn class_key(&self) -> Option<Vec<KernelAtom>> {
        let mut m = Mono::from_atoms(&self.atoms)?;
        for s in 0..2 {
            if let Some((j, k)) = m.e[s] {
                m.e[s] = Some((j, k + m.gamma[s]));
                m.gamma[s] = 0;
            }
        }
        Some(m.to_atoms())
    }
}

/// Exponent bookkeeping for one product, used for merging and division.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Mono {
    gamma: [i32; 2],
    r: [u32; 2],
    e: [Option<(i32, i32)>; 2],
    phi: [i32; 4],
    p: i32,
    deffn: [u32; 2],
    named: BTreeMap<(Named, bool), u32>,
}

fn side(starred: bool) -> usize {
    usize::from(starred)
}

impl Mono {
    /// `None` if the product is identically zero (a Kronecker delta of two
    /// distinct fixed directions).
    fn from_atoms(atoms: &[KernelAtom]) -> Option<Mono> {
        let mut m = Mono::default();
        for a in atoms {
            match *a {
                KernelAtom::GammaWeight { starred, exponent } => m.gamma[side(starred)] += exponent,
                KernelAtom::RFactor { starred, count } => m.r[side(starred)] += count,
                KernelAtom::EFactor { starred, j, k } => {
                    let slot = &mut m.e[side(starred)];
                    *slot = Some(match *slot {
                        Some((j0, k0)) => (j0 + j, k0 + k),
                        None => (j, k),
                    });
                }
                KernelAtom::PhiFactor { kind, exponent } => m.phi[kind.slot()] += exponent,
                KernelAtom::PPower { t0 } => m.p += t0,
                KernelAtom::DefFn { starred, l } => m.deffn[side(starred)] += l,
                KernelAtom::Named { sym, starred, exponent } => {
                    if let Named::Delta(a, b) = sym {
                        if a == b {
                            continue;
                        }
                        if a.is_normal() || b.is_normal() {
                            return None;
                        }
                        let key = (Named::Delta(a.min(b), a.max(b)), false);
                        m.named.insert(key, 1);
                        continue;
                    }
                    *m.named.entry((sym, starred)).or_insert(0) += exponent;
                }
            }
        }
        m.named.retain(|_, e| *e > 0);
        Some(m)
    }

    /// Fold gamma weights into an existing same-side `E` factor as far as the
    /// weight allows.
    fn folded(mut self) -> Mono {
        for s in 0..2 {
            if let Some((j, k)) = self.e[s] {
                if self.gamma[s] > 0 {
                    self.e[s] = Some((j, k + self.gamma[s]));
                    self.gamma[s] = 0;
                } else if self.gamma[s] < 0 && k > 0 {
                    // 1/gamma cancels positive weight exactly
                    let m = k.min(-self.gamma[s]);
                    self.e[s] = Some((j, k - m));
                    self.gamma[s] += m;
                }
            }
        }
        self
    }

    fn quotient(&self, p: &Mono) -> Option<Mono> {
        fn signed_sub(t: i32, p: i32) -> Option<i32> {
            if p == 0 {
                return Some(t);
            }
            if t.signum() != p.signum() || t.abs() < p.abs() {
                return None;
            }
            Some(t - p)
        }
        let mut q = self.clone();
        for s in 0..2 {
            q.gamma[s] = signed_sub(self.gamma[s], p.gamma[s])?;
            q.r[s] = self.r[s].checked_sub(p.r[s])?;
            q.deffn[s] = self.deffn[s].checked_sub(p.deffn[s])?;
            if let Some((pj, pk)) = p.e[s] {
                let (tj, tk) = self.e[s]?;
                if tj < pj {
                    return None;
                }
                q.e[s] = Some((tj - pj, tk - pk));
            }
        }
        for i in 0..4 {
            q.phi[i] = signed_sub(self.phi[i], p.phi[i])?;
        }
        if p.p > 0 {
            if self.p < p.p {
                return None;
            }
            q.p = self.p - p.p;
        } else if p.p < 0 {
            q.p = self.p - p.p;
        }
        for (key, &e) in &p.named {
            let have = *self.named.get(key)?;
            if have < e {
                return None;
            }
            if have == e {
                q.named.remove(key);
            } else {
                q.named.insert(*key, have - e);
            }
        }
        Some(q)
    }

    fn to_atoms(&self) -> Vec<KernelAtom> {
        let mut out = Vec::new();
        for s in 0..2 {
            if self.gamma[s] != 0 {
                out.push(KernelAtom::GammaWeight { starred: s == 1, exponent: self.gamma[s] });
            }
        }
        for s in 0..2 {
            if self.r[s] != 0 {
                out.push(KernelAtom::RFactor { starred: s == 1, count: self.r[s] });
            }
        }
        for s in 0..2 {
            if let Some((j, k)) = self.e[s] {
                out.push(KernelAtom::EFactor { starred: s == 1, j, k });
            }
        }
        for kind in PhiKind::ALL {
            let e = self.phi[kind.slot()];
            if e != 0 {
                out.push(KernelAtom::PhiFactor { kind, exponent: e });
            }
        }
        if self.p != 0 {
            out.push(KernelAtom::PPower { t0: self.p });
        }
        for s in 0..2 {
            if self.deffn[s] != 0 {
                out.push(KernelAtom::DefFn { starred: s == 1, l: self.deffn[s] });
            }
        }
        for (&(sym, starred), &exponent) in &self.named {
            out.push(KernelAtom::Named { sym, starred, exponent });
        }
        out.sort();
        out
    }
}

/// A formal sum of kernel products in complex dimension `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KernelExpr {
    pub n: u32,
    pub terms: Vec<KernelTerm>,
}

impl KernelExpr {
    pub fn zero(n: u32) -> Self {
        KernelExpr { n, terms: Vec::new() }
    }

    pub fn from_terms(n: u32, terms: Vec<KernelTerm>) -> Self {
        KernelExpr { n, terms }
    }

    pub fn from_term(n: u32, term: KernelTerm) -> Self {
        KernelExpr { n, terms: vec![term] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &KernelExpr) -> KernelExpr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        KernelExpr { n: self.n, terms }.normalize()
    }

    pub fn sub(&self, other: &KernelExpr) -> KernelExpr {
        self.add(&other.scale(Coeff::int(-1)))
    }

    pub fn mul(&self, other: &KernelExpr) -> KernelExpr {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        KernelExpr { n: self.n, terms }.normalize()
    }

    pub fn scale(&self, c: Coeff) -> KernelExpr {
        KernelExpr { n: self.n, terms: self.terms.iter().map(|t| t.scale(c)).collect() }.normalize()
    }

    /// Adjoint: swap `zeta` and `z` and conjugate, atom by atom.
    pub fn star(&self) -> KernelExpr {
        KernelExpr { n: self.n, terms: self.terms.iter().map(KernelTerm::star).collect() }.normalize()
    }

    /// Canonical form: merged atoms, folded gamma weights, sorted
    /// atoms, like terms combined and sorted.
    pub fn normalize(&self) -> KernelExpr {
        let mut acc: BTreeMap<Vec<KernelAtom>, Coeff> = BTreeMap::new();
        for t in &self.terms {
            if let Some(t) = t.normalized() {
                acc.entry(t.atoms).and_modify(|c| *c = c.add(t.coeff)).or_insert(t.coeff);
            }
        }
        let terms =
            acc.into_iter().filter(|(_, c)| !c.is_zero()).map(|(atoms, coeff)| KernelTerm { coeff, atoms }).collect();
        KernelExpr { n: self.n, terms }
    }

    /// Checks the representability invariants (`P` only to nonpositive powers,
    /// nonnegative `E` first indices).
    pub fn validate(&self) -> Result<(), String> {
        for t in &self.terms {
            for a in &t.atoms {
                match *a {
                    KernelAtom::PPower { t0 } if t0 < 0 => {
                        return Err(format!("positive power of P in term `{}`", format::term_string(t)))
                    }
                    KernelAtom::EFactor { j, .. } if j < 0 => {
                        return Err(format!("negative E order in term `{}`", format::term_string(t)))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> KernelExpr {
        parse(s, 2).unwrap()
    }

    #[test]
    fn gamma_folds_into_existing_e() {
        assert_eq!(format(&p("Gamma^2 * E[1,0]").normalize()), "E[1,2]");
    }

    #[test]
    fn gamma_without_e_stays_explicit() {
        assert_eq!(format(&p("Gamma^1 * Coord[n]").normalize()), "Gamma^1 * Coord[n]");
    }

    #[test]
    fn e_indices_add() {
        assert_eq!(format(&p("E[1,0]*E[2,1]").normalize()), "E[3,1]");
    }

    #[test]
    fn negative_weight_kept() {
        assert_eq!(format(&p("Gamma^-1 * E[0,0]").normalize()), "Gamma^-1 * E[0,0]");
    }

    #[test]
    fn exact_cancellation_only_without_class_factors() {
        assert!(p("2*r^1 - 2*r^1").normalize().is_zero());
        let e = p("E[2,0]*P^-2 - E[2,0]*P^-2").normalize();
        assert_eq!(e.terms.len(), 1);
        assert_eq!(e.terms[0].coeff, Coeff::Opaque);
    }

    #[test]
    fn delta_rules() {
        assert_eq!(format(&p("Delta[mm] * Lrho[k]").normalize()), "Lrho[k]");
        assert!(p("Delta[nj] * Lrho[k]").normalize().is_zero());
        assert_eq!(format(&p("Delta[jm]").normalize()), "Delta[jm]");
    }

    #[test]
    fn star_is_involution_with_coord_sign() {
        let e = p("Coord[n] * Gamma^1 * PhiBar^-1 * P^-2");
        let s = e.star();
        assert_eq!(format(&s), "-GammaStar^1 * PhiBarStar^-1 * P^-2 * CoordBar[n]");
        assert_eq!(s.star(), e.normalize());
    }

    #[test]
    fn divide_requires_presence() {
        let t = p("r^1 * rs^1 * GammaStar^-2 * P^-2").normalize().terms[0].clone();
        let pat = p("r^1 * rs^1 * Gamma^-1 * GammaStar^-1 * P^-1").terms[0].clone();
        assert!(t.divide(&pat).is_none());
        let pat = p("r^1 * rs^1 * GammaStar^-1 * P^-1").terms[0].clone();
        let q = t.divide(&pat).unwrap();
        assert_eq!(format::term_string(&q), "GammaStar^-1 * P^-1");
    }
}

#[cfg(test)]
pub(crate) mod strategies {
    use super::*;
    use proptest::prelude::*;

    fn idx() -> impl Strategy<Value = Idx> {
        prop::sample::select(vec!['j', 'k', 'm', 'n']).prop_map(Idx)
    }

    fn named() -> impl Strategy<Value = Named> {
        prop_oneof![
            Just(Named::Rho2),
            idx().prop_map(Named::Lrho),
            idx().prop_map(Named::Lbarrho),
            idx().prop_map(Named::Coord),
            idx().prop_map(Named::CoordBar),
            (idx(), idx()).prop_map(|(a, b)| Named::Delta(a, b)),
            Just(Named::LrhoSq),
        ]
    }

    /// Atoms of admissible shape: nonpositive phi exponents and `P` powers.
    pub fn admissible_atom() -> impl Strategy<Value = KernelAtom> {
        prop_oneof![
            (any::<bool>(), -3i32..=3).prop_map(|(starred, exponent)| KernelAtom::GammaWeight { starred, exponent }),
            (any::<bool>(), 0u32..=3).prop_map(|(starred, count)| KernelAtom::RFactor { starred, count }),
            (any::<bool>(), 0i32..=4, -2i32..=2).prop_map(|(starred, j, k)| KernelAtom::EFactor { starred, j, k }),
            (prop::sample::select(PhiKind::ALL.to_vec()), -3i32..=0)
                .prop_map(|(kind, exponent)| KernelAtom::PhiFactor { kind, exponent }),
            (0i32..=4).prop_map(|t0| KernelAtom::PPower { t0 }),
            (any::<bool>(), 0u32..=3).prop_map(|(starred, l)| KernelAtom::DefFn { starred, l }),
        ]
    }

    pub fn any_atom() -> impl Strategy<Value = KernelAtom> {
        prop_oneof![
            4 => admissible_atom(),
            1 => (named(), any::<bool>(), 1u32..=3)
                .prop_map(|(sym, starred, exponent)| KernelAtom::Named { sym, starred, exponent }),
            1 => (prop::sample::select(PhiKind::ALL.to_vec()), 1i32..=2)
                .prop_map(|(kind, exponent)| KernelAtom::PhiFactor { kind, exponent }),
        ]
    }

    fn coeff() -> impl Strategy<Value = Coeff> {
        prop_oneof![
            4 => (-6i64..=6, 1i64..=4).prop_map(|(a, b)| Coeff::Exact(Rational::new(a, b))),
            1 => Just(Coeff::Opaque),
        ]
    }

    pub fn term_with(atom: impl Strategy<Value = KernelAtom>) -> impl Strategy<Value = KernelTerm> {
        (coeff(), prop::collection::vec(atom, 0..6)).prop_map(|(coeff, atoms)| KernelTerm { coeff, atoms })
    }

    pub fn expr() -> impl Strategy<Value = KernelExpr> {
        (1u32..=5, prop::collection::vec(term_with(any_atom()), 0..5)).prop_map(|(n, terms)| KernelExpr { n, terms })
    }
}

#[cfg(test)]
mod proptests {
    use super::strategies::*;
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(e in expr()) {
            let c = e.normalize();
            let back = parse(&format(&c), c.n).unwrap().normalize();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn normalize_idempotent(e in expr()) {
            let once = e.normalize();
            prop_assert_eq!(once.normalize(), once);
        }

        #[test]
        fn normalize_ignores_term_order(e in expr(), seed in any::<u64>()) {
            let mut shuffled = e.clone();
            let len = shuffled.terms.len();
            if len > 1 {
                shuffled.terms.rotate_left((seed as usize) % len);
                shuffled.terms.swap(0, len - 1);
            }
            prop_assert_eq!(shuffled.normalize(), e.normalize());
        }

        #[test]
        fn canonical_has_distinct_terms(e in expr()) {
            let c = e.normalize();
            for w in c.terms.windows(2) {
                prop_assert!(w[0].atoms < w[1].atoms);
            }
            prop_assert!(c.terms.iter().all(|t| !t.coeff.is_zero()));
        }

        #[test]
        fn star_involution(e in expr()) {
            let c = e.normalize();
            prop_assert_eq!(c.star().star(), c);
        }
    }
}
