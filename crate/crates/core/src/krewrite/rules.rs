use std::fmt;

use crate::kexpr::{parse_template, Idx, KernelExpr, KernelTerm};

use super::RewriteError;

/// What a rule rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RulePattern {
    /// A field applied to an atom or named quantity, e.g. `X` on `P`.
    Field { field: &'static str, target: &'static str },
    /// A monomial that may be divided out of a term and replaced.
    Monomial(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub id: &'static str,
    pub pattern: RulePattern,
    /// Replacement template; `[i]` is the index placeholder of
    /// parametrized monomial rules, `f` stands for the field index.
    pub replacement: &'static str,
    pub source: &'static str,
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pattern {
            RulePattern::Field { field, target } => {
                write!(f, "{}: {field}({target}) = {}", self.id, self.replacement)
            }
            RulePattern::Monomial(m) => write!(f, "{}: {m} = {}", self.id, self.replacement),
        }
    }
}

const fn field(
    id: &'static str,
    field: &'static str,
    target: &'static str,
    replacement: &'static str,
    source: &'static str,
) -> RewriteRule {
    RewriteRule { id, pattern: RulePattern::Field { field, target }, replacement, source }
}

const fn mono(id: &'static str, lhs: &'static str, replacement: &'static str, source: &'static str) -> RewriteRule {
    RewriteRule { id, pattern: RulePattern::Monomial(lhs), replacement, source }
}

pub const RULE_BASE_VERSION: u32 = 1;

static RULES: &[RewriteRule] = &[
    field(
        "xpe",
        "X",
        "P",
        "E[1,0] + Gamma^1*E[0,0] + GammaStar^1*E[0,0]",
        "derivative of the gauge along an arbitrary field in either variable",
    ),
    field(
        "proplnp_i",
        "Lambda[n]",
        "P",
        "-2*Gamma^-1*PhiBar^1 + GammaStar^-1*E[0,0]*P^1 + GammaStar^-1*E[2,0] + Gamma^-1*E[2,0]",
        "normal derivative of the gauge in z, replayed by the script proplnp_i",
    ),
    field(
        "proplnp_ii",
        "L[n]",
        "P",
        "-2*GammaStar^-1*PhiStar^1 + Gamma^-1*E[0,0]*P^1 + Gamma^-1*E[2,0] + GammaStar^-1*E[2,0]",
        "normal derivative of the gauge in zeta, replayed by the script proplnp_ii",
    ),
    field(
        "lmp",
        "L[m]",
        "P",
        "Lrho[m] + Gamma^-1*E[0,0]*P^1 + Gamma^-1*E[2,0]",
        "tangential derivative of the gauge in zeta",
    ),
    field(
        "lambdakp",
        "Lambda[k]",
        "P",
        "-Lrho[k] + E[2,-1] + Es[2,-1] + GammaStar^-1*Es[0,0]*P^1 + GammaStar^-1*Es[2,0]",
        "tangential derivative of the gauge in z, mirror of lmp",
    ),
    field(
        "r10",
        "X",
        "E[j,k]",
        "E[j-1,k] + E[j,k-1]",
        "one derivative of a class factor costs one order or one weight",
    ),
    field(
        "rfactor",
        "X",
        "R^N",
        "N*R^(N-1)*E[0,0]",
        "derivative of a product of first derivatives of the defining function",
    ),
    field("gamma_deriv", "X", "Gamma", "E[0,0]", "gamma is Lipschitz"),
    field("r_deriv", "L[n]", "r", "Gamma^1", "the normal field is dual to the gradient of r"),
    field(
        "phi_fields",
        "L[n]",
        "PhiBar",
        "-Gamma^1 + E[1,0]",
        "first derivatives of the support function and its conjugates",
    ),
    field(
        "x_phi",
        "X",
        "Phi",
        "E[1,0] + Gamma^1*E[0,0] + GammaStar^1*E[0,0]",
        "derivative of a support function along an arbitrary field",
    ),
    field(
        "rho2_zeta",
        "L[f]",
        "Rho2",
        "Lrho[f]; L[f] Lbarrho[j] = 2*Delta[fj] + E[1,-1]; L[f] Lrho[k] = E[1,-1] + E[2,-2]",
        "derivatives of the distance function along the zeta frame",
    ),
    field(
        "rho2_z",
        "Lambda[f]",
        "Rho2",
        "-Lrho[f] + E[2,-1] + Es[2,-1]; Lambda[f] Lbarrho[j] = -2*Delta[fj] + E[1,-1] + Es[1,-1]",
        "derivatives of the distance function along the z frame",
    ),
    field(
        "coord_deriv",
        "L[f]",
        "Coord[i]",
        "Delta[fi] + E[1,-1]",
        "frame coordinates differ from the dual frame by a Lipschitz change",
    ),
    field("x_rho2", "X", "Rho2", "E[1,0]", "the distance function is comparable to a square"),
    mono("r_over_gamma", "r^1*Gamma^-1", "E[0,1]", "r/gamma = gamma E[0,0] near the critical point"),
    mono("gamma_shift", "GammaStar^1", "Gamma^1 + E[1,0]", "gamma is Lipschitz"),
    mono("inv_gamma_diff", "GammaStar^-1", "Gamma^-1 + E[1,-2]", "difference of reciprocal weights"),
    mono(
        "inv_gamma_split",
        "GammaStar^-1",
        "Gamma^-1 + Gamma^-1*GammaStar^-1*E[1,0]",
        "exact form of the difference of reciprocal weights",
    ),
    mono("phisymm", "Phi^1", "PhiStar^1 + E[3,0]", "the support function is symmetric to third order"),
    mono("phisymm_inv", "Phi^-1", "PhiStar^-1 + E[3,0]*Phi^-1*PhiStar^-1", "reciprocal form of phisymm"),
    mono("phisymm_bar", "PhiBar^1", "PhiBarStar^1 + E[3,0]", "conjugate of phisymm"),
    mono(
        "phisymm_bar_inv",
        "PhiBar^-1",
        "PhiBarStar^-1 + E[3,0]*PhiBar^-1*PhiBarStar^-1",
        "reciprocal form of phisymm_bar",
    ),
    mono(
        "phi_ratio",
        "PhiStar^1*PhiBar^-1",
        "E[0,0]",
        "the ratio of adjoint and conjugate support functions is bounded near the diagonal",
    ),
    mono("pdef", "P^1", "Rho2 + 2*r^1*rs^1*Gamma^-1*GammaStar^-1", "definition of the gauge"),
    mono(
        "rr_over_gg",
        "r^1*rs^1*GammaStar^-1",
        "1/2*Gamma^1*P^1 - 1/2*Gamma^1*Rho2",
        "definition of the gauge solved for the product of defining functions",
    ),
    mono("phicoor", "Gamma^1*Coord[n]", "Phi^1 + r^1 + E[2,0]", "support function in frame coordinates"),
    mono(
        "phicoor_bar",
        "Gamma^1*CoordBar[n]",
        "PhiBar^1 + r^1 + E[2,0]",
        "conjugate support function in frame coordinates",
    ),
    mono("phi_coords", "Phi^1", "Gamma^1*Coord[n] - r^1 + E[2,0]", "phicoor solved for the support function"),
    mono(
        "phibar_coords",
        "PhiBar^1",
        "Gamma^1*CoordBar[n] - r^1 + E[2,0]",
        "phicoor_bar solved for the conjugate support function",
    ),
    mono(
        "phistar_phibar",
        "PhiStar^1",
        "-PhiBar^1 - r^1 - rs^1 + E[2,0]",
        "adjoint and conjugate support functions agree up to the defining functions",
    ),
    mono("phibar_phistar", "PhiBar^1", "-PhiStar^1 - r^1 - rs^1 + E[2,0]", "phistar_phibar solved for the conjugate"),
    mono("lrho_coords", "Lrho[i]", "2*CoordBar[i] + E[2,-1]", "first derivatives of the distance function"),
    mono("lbarrho_coords", "Lbarrho[i]", "2*Coord[i] + E[2,-1]", "first derivatives of the distance function"),
    mono(
        "rho2_coords",
        "Rho2",
        "2*CoordSqT + 2*Coord[n]*CoordBar[n] + E[3,0]",
        "the distance function in frame coordinates",
    ),
    mono(
        "lrhosq_coords",
        "LrhoSq",
        "4*CoordSqT + E[3,-1] + E[4,-2]",
        "tangential gradient of the distance function in frame coordinates",
    ),
    mono(
        "lrho_star",
        "LrhoStar[i]",
        "-Lbarrho[i] + E[2,-1] + Es[2,-1]",
        "adjoint of a frame derivative of the symmetric distance function",
    ),
    mono(
        "lbarrho_star",
        "LbarrhoStar[i]",
        "-Lrho[i] + E[2,-1] + Es[2,-1]",
        "adjoint of a conjugate frame derivative of the distance function",
    ),
    mono(
        "2p-l2",
        "Gamma^1*GammaStar^1*LrhoSq",
        "2*Gamma^1*GammaStar^1*P^1 - 4*Phi^1*PhiBar^1 + r^1*E[2,0] + E[3,1] + Es[3,1] + Gamma^-1*GammaStar^1*E[4,0]",
        "gauge against the tangential gradient, replayed by the script 2p-l2",
    ),
];

pub fn rule_base() -> &'static [RewriteRule] {
    RULES
}

pub fn lookup(id: &str) -> Result<&'static RewriteRule, RewriteError> {
    RULES.iter().find(|r| r.id == id).ok_or_else(|| RewriteError::UnknownRule(id.to_string()))
}

/// A monomial rule instantiated at an index and optionally starred.
#[derive(Clone, Debug)]
pub struct Substitution {
    pub id: &'static str,
    pub lhs: KernelTerm,
    pub rhs: KernelExpr,
}

impl Substitution {
    pub fn new(id: &str, index: Option<Idx>, starred: bool, n: u32) -> Result<Substitution, RewriteError> {
        let rule = lookup(id)?;
        let RulePattern::Monomial(lhs) = rule.pattern else {
            return Err(RewriteError::NotSubstitution(id.to_string()));
        };
        let param = lhs.contains("[i]");
        let (lhs, rhs) = match (param, index) {
            (true, Some(i)) => {
                (lhs.replace("[i]", &format!("[{i}]")), rule.replacement.replace("[i]", &format!("[{i}]")))
            }
            (true, None) => return Err(RewriteError::MissingIndex(id.to_string())),
            (false, Some(_)) => return Err(RewriteError::UnexpectedIndex(id.to_string())),
            (false, None) => (lhs.to_string(), rule.replacement.to_string()),
        };
        let lhs = parse_template(&lhs, n).map_err(RewriteError::Parse)?;
        let rhs = parse_template(&rhs, n).map_err(RewriteError::Parse)?;
        let (mut lhs, mut rhs) = (lhs, rhs.normalize());
        if starred {
            lhs = lhs.star();
            rhs = rhs.star();
        }
        let lhs = lhs.terms.into_iter().next().ok_or_else(|| RewriteError::NotSubstitution(id.to_string()))?;
        Ok(Substitution { id: rule.id, lhs, rhs })
    }

    /// Rewrites one term, or `None` if the pattern does not divide it.
    pub fn rewrite_term(&self, t: &KernelTerm, n: u32) -> Option<KernelExpr> {
        let q = t.divide(&self.lhs)?;
        Some(KernelExpr::from_term(n, q).mul(&self.rhs))
    }
}

/// Which terms of the current expression a rule is applied to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    Terms(Vec<usize>),
}

/// Applies a substitution to the selected terms. Selecting all terms
/// requires at least one match; explicit term positions must all match.
pub fn apply_substitution(e: &KernelExpr, sub: &Substitution, sel: &Selection) -> Result<KernelExpr, RewriteError> {
    let mut out = Vec::new();
    let mut hits = 0usize;
    for (i, t) in e.terms.iter().enumerate() {
        let chosen = match sel {
            Selection::All => true,
            Selection::Terms(v) => v.contains(&i),
        };
        match chosen.then(|| sub.rewrite_term(t, e.n)).flatten() {
            Some(r) => {
                hits += 1;
                out.extend(r.terms);
            }
            None => {
                if chosen && matches!(sel, Selection::Terms(_)) {
                    return Err(RewriteError::NoMatch { rule: sub.id.to_string(), target: format!("term {i}") });
                }
                out.push(t.clone());
            }
        }
    }
    if let Selection::Terms(v) = sel {
        if let Some(bad) = v.iter().find(|&&i| i >= e.terms.len()) {
            return Err(RewriteError::NoMatch { rule: sub.id.to_string(), target: format!("term {bad}") });
        }
    }
    if hits == 0 {
        return Err(RewriteError::NoMatch { rule: sub.id.to_string(), target: "any term".into() });
    }
    Ok(KernelExpr::from_terms(e.n, out).normalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kexpr::{format, parse};

    #[test]
    fn lookup_known_and_unknown() {
        assert_eq!(lookup("xpe").unwrap().replacement, "E[1,0] + Gamma^1*E[0,0] + GammaStar^1*E[0,0]");
        assert_eq!(lookup("phisymm").unwrap().pattern, RulePattern::Monomial("Phi^1"));
        assert!(matches!(lookup("nope"), Err(RewriteError::UnknownRule(_))));
    }

    #[test]
    fn ids_unique_and_templates_parse() {
        let mut ids: Vec<_> = rule_base().iter().map(|r| r.id).collect();
        ids.sort_unstable();
        let len = ids.len();
        ids.dedup();
        assert_eq!(ids.len(), len);
        for r in rule_base() {
            if let RulePattern::Monomial(_) = r.pattern {
                let idx = r.replacement.contains("[i]").then_some(Idx('k'));
                Substitution::new(r.id, idx, false, 3).unwrap();
            }
        }
    }

    #[test]
    fn phicoor_bar_cancels_r() {
        let e = parse("-2*Gamma^1*CoordBar[n]*P^-2 + 2*r^1*P^-2", 2).unwrap().normalize();
        let s = Substitution::new("phicoor_bar", None, false, 2).unwrap();
        let out = apply_substitution(&e, &s, &Selection::All).unwrap();
        assert_eq!(format(&out), "E[2,0] * P^-2 - 2 * PhiBar^1 * P^-2");
    }

    #[test]
    fn starred_rule_carries_sign() {
        let s = Substitution::new("phicoor", None, true, 2).unwrap();
        assert_eq!(format(&KernelExpr::from_term(2, s.lhs.clone())), "-GammaStar^1 * CoordBar[n]");
        let e = parse("GammaStar^1*CoordBar[n]*P^-1", 2).unwrap().normalize();
        let out = apply_substitution(&e, &s, &Selection::All).unwrap();
        assert_eq!(format(&out), "Es[2,0] * P^-1 - PhiStar^1 * P^-1 - P^-1 * rs^1");
    }

    #[test]
    fn no_match_is_an_error() {
        let e = parse("E[1,0]*P^-1", 2).unwrap();
        let s = Substitution::new("phisymm", None, false, 2).unwrap();
        assert!(matches!(apply_substitution(&e, &s, &Selection::All), Err(RewriteError::NoMatch { .. })));
    }
}
