use std::collections::BTreeSet;
use std::fmt;

use crate::kexpr::{parse_template, Coeff, Idx, KernelAtom, KernelExpr, KernelTerm, Named, PhiKind, Rational};

use super::RewriteError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    /// Frame field in `zeta`.
    L,
    /// Frame field in `z`.
    Lambda,
    /// Arbitrary smooth field in either variable.
    Generic,
}

/// A vector field acting on kernels. `definitional` fields expand `P` by its
/// definition instead of using the stored derivative of the gauge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldSymbol {
    pub kind: FieldKind,
    pub index: Option<Idx>,
    pub definitional: bool,
}

impl FieldSymbol {
    pub fn l(i: char) -> Self {
        FieldSymbol { kind: FieldKind::L, index: Some(Idx(i)), definitional: false }
    }

    pub fn lambda(i: char) -> Self {
        FieldSymbol { kind: FieldKind::Lambda, index: Some(Idx(i)), definitional: false }
    }

    pub fn generic() -> Self {
        FieldSymbol { kind: FieldKind::Generic, index: None, definitional: false }
    }

    pub fn is_normal(&self) -> bool {
        self.index.is_some_and(Idx::is_normal)
    }

    /// Accepts `X`, `L[m]`, `L[n]`, `Lambda[k]`, optionally prefixed by `def:`.
    pub fn parse(text: &str) -> Result<FieldSymbol, RewriteError> {
        let bad = || RewriteError::BadField(text.to_string());
        let t = text.trim();
        let (definitional, t) = match t.strip_prefix("def:") {
            Some(rest) => (true, rest.trim()),
            None => (false, t),
        };
        if t == "X" {
            return Ok(FieldSymbol { kind: FieldKind::Generic, index: None, definitional });
        }
        let (kind, rest) = if let Some(r) = t.strip_prefix("Lambda[") {
            (FieldKind::Lambda, r)
        } else if let Some(r) = t.strip_prefix("L[") {
            (FieldKind::L, r)
        } else {
            return Err(bad());
        };
        let inner = rest.strip_suffix(']').ok_or_else(bad)?;
        let mut chars = inner.chars();
        let c = chars.next().ok_or_else(bad)?;
        if chars.next().is_some() || !c.is_ascii_lowercase() {
            return Err(bad());
        }
        Ok(FieldSymbol { kind, index: Some(Idx(c)), definitional })
    }
}

impl fmt::Display for FieldSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.definitional {
            f.write_str("def:")?;
        }
        match (self.kind, self.index) {
            (FieldKind::Generic, _) => f.write_str("X"),
            (FieldKind::L, Some(i)) => write!(f, "L[{i}]"),
            (FieldKind::Lambda, Some(i)) => write!(f, "Lambda[{i}]"),
            (_, None) => f.write_str("?"),
        }
    }
}

/// Result of differentiating an expression, with the rules that fired.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldResult {
    pub expr: KernelExpr,
    pub rules: BTreeSet<&'static str>,
}

struct Ctx {
    field: FieldSymbol,
    n: u32,
    rules: BTreeSet<&'static str>,
}

fn tpl(text: &str, n: u32) -> KernelExpr {
    match parse_template(text, n) {
        Ok(e) => e.normalize(),
        Err(err) => panic!("rule template `{text}` does not parse: {err}"),
    }
}

fn e_atom(starred: bool, j: i32, k: i32) -> KernelAtom {
    KernelAtom::EFactor { starred, j, k }
}

impl Ctx {
    fn underived(&self, atom: &KernelAtom) -> RewriteError {
        let t = KernelExpr::from_term(self.n, KernelTerm::atom(*atom));
        RewriteError::UnderivedAtom { field: self.field.to_string(), atom: t.to_string() }
    }

    fn fire(&mut self, id: &'static str, text: &str) -> KernelExpr {
        self.rules.insert(id);
        tpl(text, self.n)
    }

    /// Whether the field differentiates functions of the given side
    /// (`starred` quantities live at `z`).
    fn acts_on(&self, starred: bool) -> bool {
        match self.field.kind {
            FieldKind::Generic => true,
            FieldKind::L => !starred,
            FieldKind::Lambda => starred,
        }
    }

    fn f(&self) -> char {
        self.field.index.map_or('x', |i| i.0)
    }

    /// Derivative of one atom taken to the first power.
    fn unit(&mut self, atom: &KernelAtom) -> Result<KernelExpr, RewriteError> {
        let n = self.n;
        let zero = KernelExpr::zero(n);
        let normal = self.field.is_normal();
        let kind = self.field.kind;
        Ok(match *atom {
            KernelAtom::GammaWeight { starred, .. } => {
                if self.acts_on(starred) {
                    self.rules.insert("gamma_deriv");
                    KernelExpr::from_term(n, KernelTerm::atom(e_atom(starred, 0, 0)))
                } else {
                    zero
                }
            }
            KernelAtom::DefFn { starred, .. } => match kind {
                FieldKind::Generic => {
                    self.rules.insert("r_deriv");
                    KernelExpr::from_term(n, KernelTerm::atom(e_atom(starred, 0, 1)))
                }
                _ if self.acts_on(starred) && normal => {
                    self.fire("r_deriv", if starred { "GammaStar^1" } else { "Gamma^1" })
                }
                _ => zero,
            },
            KernelAtom::PhiFactor { kind: pk, .. } => {
                let text = match (kind, pk, normal) {
                    (FieldKind::Generic, _, _) => {
                        return Ok(self.fire("x_phi", "E[1,0] + Gamma^1*E[0,0] + GammaStar^1*E[0,0]"))
                    }
                    (FieldKind::L, PhiKind::PhiBar, true) => "-Gamma^1 + E[1,0]",
                    (FieldKind::L, PhiKind::PhiBarStar, true) => "-GammaStar^1 + E[1,0]",
                    (FieldKind::Lambda, PhiKind::Phi, true) => "-Gamma^1 + E[1,0]",
                    (FieldKind::Lambda, PhiKind::PhiStar, true) => "-GammaStar^1 + E[1,0]",
                    _ => "E[1,0]",
                };
                self.fire("phi_fields", text)
            }
            KernelAtom::PPower { .. } => self.gauge()?,
            KernelAtom::Named { sym, starred, .. } => self.named(atom, sym, starred)?,
            KernelAtom::RFactor { .. } | KernelAtom::EFactor { .. } => unreachable!("handled by class rule"),
        })
    }

    fn gauge(&mut self) -> Result<KernelExpr, RewriteError> {
        let n = self.n;
        if self.field.definitional {
            let def = self.fire("pdef", "Rho2 + 2*r^1*rs^1*Gamma^-1*GammaStar^-1");
            let inner = FieldSymbol { definitional: false, ..self.field };
            let mut sub = Ctx { field: inner, n, rules: BTreeSet::new() };
            let out = sub.expr(&def)?;
            self.rules.extend(sub.rules);
            return Ok(out);
        }
        let normal = self.field.is_normal();
        let f = self.f();
        Ok(match self.field.kind {
            FieldKind::Generic => self.fire("xpe", "E[1,0] + Gamma^1*E[0,0] + GammaStar^1*E[0,0]"),
            FieldKind::Lambda if normal => self.fire(
                "proplnp_i",
                "-2*Gamma^-1*PhiBar^1 + GammaStar^-1*E[0,0]*P^1 + GammaStar^-1*E[2,0] + Gamma^-1*E[2,0]",
            ),
            FieldKind::L if normal => self.fire(
                "proplnp_ii",
                "-2*GammaStar^-1*PhiStar^1 + Gamma^-1*E[0,0]*P^1 + Gamma^-1*E[2,0] + GammaStar^-1*E[2,0]",
            ),
            FieldKind::L => self.fire("lmp", &format!("Lrho[{f}] + Gamma^-1*E[0,0]*P^1 + Gamma^-1*E[2,0]")),
            FieldKind::Lambda => self.fire(
                "lambdakp",
                &format!("-Lrho[{f}] + E[2,-1] + Es[2,-1] + GammaStar^-1*Es[0,0]*P^1 + GammaStar^-1*Es[2,0]"),
            ),
        })
    }

    fn named(&mut self, atom: &KernelAtom, sym: Named, starred: bool) -> Result<KernelExpr, RewriteError> {
        if let Named::Delta(..) = sym {
            return Ok(KernelExpr::zero(self.n));
        }
        if starred {
            return Err(self.underived(atom));
        }
        let f = self.f();
        let text = match (self.field.kind, sym) {
            (FieldKind::Generic, Named::Rho2) => return Ok(self.fire("x_rho2", "E[1,0]")),
            (FieldKind::Generic, _) => return Err(self.underived(atom)),
            (FieldKind::L, Named::Rho2) => format!("Lrho[{f}]"),
            (FieldKind::L, Named::Lrho(_)) => "E[1,-1] + E[2,-2]".to_string(),
            (FieldKind::L, Named::Lbarrho(j)) => format!("2*Delta[{f}{j}] + E[1,-1]"),
            (FieldKind::L, Named::Coord(i)) => {
                self.rules.insert("coord_deriv");
                format!("Delta[{f}{i}] + E[1,-1]")
            }
            (FieldKind::L, Named::CoordBar(_)) => {
                self.rules.insert("coord_deriv");
                "E[1,-1]".to_string()
            }
            (FieldKind::Lambda, Named::Rho2) => format!("-Lrho[{f}] + E[2,-1] + Es[2,-1]"),
            (FieldKind::Lambda, Named::Lrho(_)) => "E[1,-1] + Es[1,-1] + E[2,-2]".to_string(),
            (FieldKind::Lambda, Named::Lbarrho(j)) => format!("-2*Delta[{f}{j}] + E[1,-1] + Es[1,-1]"),
            (FieldKind::Lambda, Named::Coord(i)) => {
                self.rules.insert("coord_deriv");
                format!("-Delta[{f}{i}] + Es[1,-1]")
            }
            (FieldKind::Lambda, Named::CoordBar(_)) => {
                self.rules.insert("coord_deriv");
                "Es[1,-1]".to_string()
            }
            _ => return Err(self.underived(atom)),
        };
        let id = if self.field.kind == FieldKind::L { "rho2_zeta" } else { "rho2_z" };
        Ok(self.fire(id, &text))
    }

    /// Class factors are differentiated as a whole: `R^N -> N R^{N-1} E[0,0]`,
    /// `E[j,k] -> E[j-1,k] + E[j,k-1]` on the differentiated side.
    fn class_factor(&mut self, atom: &KernelAtom) -> Option<Vec<(Coeff, Vec<KernelAtom>)>> {
        match *atom {
            KernelAtom::RFactor { starred, count } => {
                if !self.acts_on(starred) || count == 0 {
                    return Some(Vec::new());
                }
                self.rules.insert("rfactor");
                Some(vec![(
                    Coeff::int(i64::from(count)),
                    vec![KernelAtom::RFactor { starred, count: count - 1 }, e_atom(starred, 0, 0)],
                )])
            }
            KernelAtom::EFactor { starred, j, k } => {
                self.rules.insert("r10");
                let mut out = Vec::new();
                if j > 0 {
                    out.push((Coeff::one(), vec![e_atom(starred, j - 1, k)]));
                }
                let weight_side = match self.field.kind {
                    FieldKind::Generic => true,
                    FieldKind::L => !starred,
                    FieldKind::Lambda => starred,
                };
                if weight_side {
                    out.push((Coeff::one(), vec![e_atom(starred, j, k - 1)]));
                }
                Some(out)
            }
            _ => None,
        }
    }

    fn term(&mut self, t: &KernelTerm) -> Result<Vec<KernelTerm>, RewriteError> {
        let mut out = Vec::new();
        for (i, a) in t.atoms.iter().enumerate() {
            let rest: Vec<KernelAtom> = t.atoms.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, a)| *a).collect();
            if let Some(parts) = self.class_factor(a) {
                for (c, atoms) in parts {
                    let mut all = rest.clone();
                    all.extend(atoms);
                    out.push(KernelTerm::new(t.coeff.mul(c), all));
                }
                continue;
            }
            let (power, lowered) = match *a {
                KernelAtom::GammaWeight { starred, exponent } => {
                    (exponent, KernelAtom::GammaWeight { starred, exponent: exponent - 1 })
                }
                KernelAtom::PhiFactor { kind, exponent } => {
                    (exponent, KernelAtom::PhiFactor { kind, exponent: exponent - 1 })
                }
                KernelAtom::PPower { t0 } => (-t0, KernelAtom::PPower { t0: t0 + 1 }),
                KernelAtom::DefFn { starred, l } => (l as i32, KernelAtom::DefFn { starred, l: l - 1 }),
                KernelAtom::Named { sym, starred, exponent } => {
                    if exponent == 1 {
                        (1, KernelAtom::GammaWeight { starred: false, exponent: 0 })
                    } else {
                        (exponent as i32, KernelAtom::Named { sym, starred, exponent: exponent - 1 })
                    }
                }
                _ => unreachable!(),
            };
            if power == 0 {
                continue;
            }
            let unit = match *a {
                KernelAtom::Named { sym, starred, .. } => KernelAtom::Named { sym, starred, exponent: 1 },
                other => other,
            };
            let d = self.unit(&unit)?;
            let coeff = t.coeff.mul(Coeff::Exact(Rational::from_integer(i64::from(power))));
            for dt in &d.terms {
                let mut all = rest.clone();
                all.push(lowered);
                all.extend(dt.atoms.iter().copied());
                out.push(KernelTerm::new(coeff.mul(dt.coeff), all));
            }
        }
        Ok(out)
    }

    fn expr(&mut self, e: &KernelExpr) -> Result<KernelExpr, RewriteError> {
        let mut terms = Vec::new();
        for t in &e.terms {
            terms.extend(self.term(t)?);
        }
        Ok(KernelExpr::from_terms(e.n, terms).normalize())
    }
}

/// Differentiates `e` along `field` by the product rule, each atom handled by
/// its rule in the rule base.
pub fn apply_field(field: &FieldSymbol, e: &KernelExpr) -> Result<FieldResult, RewriteError> {
    let mut ctx = Ctx { field: *field, n: e.n, rules: BTreeSet::new() };
    let expr = ctx.expr(&e.normalize())?;
    Ok(FieldResult { expr, rules: ctx.rules })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kexpr::{format, parse};

    fn d(field: &str, text: &str, n: u32) -> String {
        let f = FieldSymbol::parse(field).unwrap();
        format(&apply_field(&f, &parse(text, n).unwrap()).unwrap().expr)
    }

    #[test]
    fn field_parse_round_trip() {
        for s in ["X", "L[m]", "L[n]", "Lambda[k]", "def:Lambda[n]"] {
            assert_eq!(FieldSymbol::parse(s).unwrap().to_string(), s);
        }
        assert!(FieldSymbol::parse("L[mm]").is_err());
        assert!(FieldSymbol::parse("Y").is_err());
    }

    #[test]
    fn generic_field_on_inverse_gauge() {
        assert_eq!(d("X", "P^-1", 2), "GammaStar^1 * E[0,0] * P^-2 + E[0,1] * P^-2 + E[1,0] * P^-2");
    }

    #[test]
    fn generic_field_on_class_factor() {
        assert_eq!(d("X", "E[1,0]", 2), "E[0,0] + E[1,-1]");
    }

    #[test]
    fn tangential_field_on_henkin_denominator() {
        let f = FieldSymbol::parse("L[m]").unwrap();
        let e = apply_field(&f, &parse("PhiBar^-1 * P^-1", 2).unwrap()).unwrap().expr;
        let lead = parse("-PhiBar^-1 * P^-2 * Lrho[m]", 2).unwrap().normalize();
        assert!(e.terms.contains(&lead.terms[0]), "{e}");
        let rest = e.sub(&lead);
        let c = crate::ktype::classify(&rest).unwrap();
        assert_eq!(c.class.reduced().to_string(), "1/Gamma*(-1,1)");
    }

    #[test]
    fn normal_zeta_field_on_conjugate_phi() {
        assert_eq!(d("L[n]", "PhiBar^1", 2), "-Gamma^1 + E[1,0]");
    }

    #[test]
    fn missing_rule_names_atom() {
        let f = FieldSymbol::parse("X").unwrap();
        let err = apply_field(&f, &parse("Lbarrho[j]", 2).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "underived atom `Lbarrho[j]` under field X");
    }

    #[test]
    fn definitional_and_stored_gauge_rules_agree_in_class() {
        let stored =
            apply_field(&FieldSymbol::parse("Lambda[n]").unwrap(), &parse("Gamma^1*P^-3", 2).unwrap()).unwrap();
        assert!(stored.rules.contains("proplnp_i"));
        let def =
            apply_field(&FieldSymbol::parse("def:Lambda[n]").unwrap(), &parse("Gamma^1*P^-3", 2).unwrap()).unwrap();
        assert!(def.rules.contains("pdef"));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::kexpr::strategies::{admissible_atom, term_with};
    use proptest::prelude::*;

    fn field() -> impl Strategy<Value = FieldSymbol> {
        prop_oneof![
            Just(FieldSymbol::generic()),
            Just(FieldSymbol::l('m')),
            Just(FieldSymbol::l('n')),
            Just(FieldSymbol::lambda('k')),
            Just(FieldSymbol::lambda('n')),
        ]
    }

    proptest! {
        #[test]
        fn leibniz(f in field(), a in term_with(admissible_atom()), b in term_with(admissible_atom())) {
            let n = 3;
            let ea = KernelExpr::from_term(n, a.clone()).normalize();
            let eb = KernelExpr::from_term(n, b.clone()).normalize();
            let ab = ea.mul(&eb);
            let lhs = apply_field(&f, &ab).unwrap().expr;
            let da = apply_field(&f, &ea).unwrap().expr;
            let db = apply_field(&f, &eb).unwrap().expr;
            let rhs = da.mul(&eb).add(&ea.mul(&db));
            // Class factors absorb constants, so E - E does not cancel: the
            // product rule side may only add opaque terms. Class terms are
            // compared up to gamma^a * E[j,k] = E[j,k+a].
            let key = |t: &KernelTerm| t.class_key();
            for x in &lhs.terms {
                let y = rhs.terms.iter().find(|y| key(y) == key(x));
                prop_assert!(y.is_some(), "missing {}", KernelExpr::from_term(n, x.clone()));
                if let (Coeff::Exact(_), Some(y)) = (x.coeff, y) {
                    prop_assert_eq!(x.coeff, y.coeff);
                }
            }
            for y in &rhs.terms {
                if !lhs.terms.iter().any(|x| key(x) == key(y)) {
                    prop_assert_eq!(y.coeff, Coeff::Opaque);
                }
            }
        }
    }
}
