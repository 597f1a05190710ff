use num_traits::{One, Signed};

use super::{Coeff, KernelAtom, KernelExpr, KernelTerm, Named};

fn atom_string(a: &KernelAtom) -> String {
    match *a {
        KernelAtom::GammaWeight { starred, exponent } => {
            format!("{}^{}", if starred { "GammaStar" } else { "Gamma" }, exponent)
        }
        KernelAtom::RFactor { starred, count } => {
            format!("{}^{}", if starred { "Rs" } else { "R" }, count)
        }
        KernelAtom::EFactor { starred, j, k } => {
            format!("{}[{},{}]", if starred { "Es" } else { "E" }, j, k)
        }
        KernelAtom::PhiFactor { kind, exponent } => format!("{}^{}", kind.name(), exponent),
        KernelAtom::PPower { t0 } => format!("P^{}", -t0),
        KernelAtom::DefFn { starred, l } => format!("{}^{}", if starred { "rs" } else { "r" }, l),
        KernelAtom::Named { sym, starred, exponent } => {
            let mut s = sym.base_name().to_string();
            if starred {
                s.push_str("Star");
            }
            match sym {
                Named::Lrho(i) | Named::Lbarrho(i) | Named::Coord(i) | Named::CoordBar(i) => {
                    s.push_str(&format!("[{i}]"))
                }
                Named::Delta(a, b) => s.push_str(&format!("[{a}{b}]")),
                _ => {}
            }
            if exponent != 1 {
                s.push_str(&format!("^{exponent}"));
            }
            s
        }
    }
}

/// Prints a term without its sign; returns whether the sign is negative.
fn unsigned_term(t: &KernelTerm) -> (bool, String) {
    let body: Vec<String> = t.atoms.iter().map(atom_string).collect();
    let (neg, prefix) = match t.coeff {
        Coeff::Exact(r) => {
            let a = r.abs();
            let p = if a.is_one() {
                None
            } else if *a.denom() == 1 {
                Some(a.numer().to_string())
            } else {
                Some(format!("{}/{}", a.numer(), a.denom()))
            };
            (r.is_negative(), p)
        }
        Coeff::Opaque if t.has_class_factor() => (false, None),
        Coeff::Opaque => (false, Some("C".to_string())),
    };
    let s = match (prefix, body.is_empty()) {
        (Some(p), true) => p,
        (None, true) => "1".to_string(),
        (Some(p), false) => format!("{p} * {}", body.join(" * ")),
        (None, false) => body.join(" * "),
    };
    (neg, s)
}

pub(crate) fn term_string(t: &KernelTerm) -> String {
    let (neg, s) = unsigned_term(t);
    if neg {
        format!("-{s}")
    } else {
        s
    }
}

/// Deterministic text form; round-trips through [`super::parse`].
pub fn format(e: &KernelExpr) -> String {
    if e.terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, t) in e.terms.iter().enumerate() {
        let (neg, s) = unsigned_term(t);
        match (i, neg) {
            (0, false) => {}
            (0, true) => out.push('-'),
            (_, false) => out.push_str(" + "),
            (_, true) => out.push_str(" - "),
        }
        out.push_str(&s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn canonical_single_term() {
        let e = parse("P^-1 * PhiBar^-1 * E[1,0] * R^1", 2).unwrap().normalize();
        assert_eq!(format(&e), "R^1 * E[1,0] * PhiBar^-1 * P^-1");
    }

    #[test]
    fn empty_sum() {
        assert_eq!(format(&KernelExpr::zero(2)), "0");
    }

    #[test]
    fn sum_order_is_canonical() {
        let a = parse("E[3,0]*Phi^-1*P^-2 + Gamma^-1 * E[2,0]*Phi^-1*P^-2", 2).unwrap().normalize();
        let b = parse("Gamma^-1 * E[2,0]*Phi^-1*P^-2 + E[3,0]*Phi^-1*P^-2", 2).unwrap().normalize();
        assert_eq!(format(&a), format(&b));
        assert_eq!(format(&a), "Gamma^-1 * E[2,0] * Phi^-1 * P^-2 + E[3,0] * Phi^-1 * P^-2");
    }

    #[test]
    fn signed_coefficients() {
        let e = parse("-2*PhiBar^1*P^-2 + 1/2*r^1 - C", 2).unwrap().normalize();
        assert_eq!(format(&e), "C - 2 * PhiBar^1 * P^-2 + 1/2 * r^1");
    }
}
