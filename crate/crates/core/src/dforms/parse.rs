use crate::geom::Poly;
use crate::jet::C64;

use super::form::{Family, Form};
use super::DformError;

/// Parses a polynomial test form such as `2*z1^3 - i*zbar2*dzbar1` in `n`
/// variables. Differentials wedge in order of appearance.
pub fn parse_test_form(src: &str, n: usize) -> Result<Form<Poly>, DformError> {
    let bad = |m: String| DformError::InvalidKernel(format!("test form `{src}`: {m}"));
    let mut text: String = src.chars().filter(|c| !c.is_whitespace()).collect();
    for (from, to) in [("+-", "-"), ("-+", "-"), ("--", "+"), ("++", "+")] {
        while text.contains(from) {
            text = text.replace(from, to);
        }
    }
    if text.is_empty() {
        return Err(bad("empty".into()));
    }
    let mut terms: Vec<(bool, &str)> = Vec::new();
    let mut start = 0;
    let mut negative = false;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b'+' || b == b'-') && i > 0 && bytes[i - 1] != b'e' && bytes[i - 1] != b'^' {
            terms.push((negative, &text[start..i]));
            negative = b == b'-';
            start = i + 1;
        } else if i == 0 && (b == b'-' || b == b'+') {
            negative = b == b'-';
            start = 1;
        }
    }
    terms.push((negative, &text[start..]));
    let mut out = Form::zero(n);
    for (neg, term) in terms {
        if term.is_empty() {
            return Err(bad("empty term".into()));
        }
        let mut coeff = Poly::constant(C64::new(if neg { -1.0 } else { 1.0 }, 0.0), n);
        let mut diff = Form::scalar(n, Poly::constant(C64::new(1.0, 0.0), n));
        for factor in term.split('*') {
            let (base, power) = match factor.split_once('^') {
                Some((b, p)) => (b, p.parse::<u32>().map_err(|_| bad(format!("bad exponent in `{factor}`")))?),
                None => (factor, 1),
            };
            let index = |prefix: &str| -> Result<Option<usize>, DformError> {
                match base.strip_prefix(prefix) {
                    Some(k) if !k.is_empty() && k.chars().all(|c| c.is_ascii_digit()) => {
                        let k: usize = k.parse().map_err(|_| bad(format!("bad index in `{base}`")))?;
                        if k == 0 || k > n {
                            return Err(DformError::DegreeOverflow(format!("`{base}` in dimension {n}")));
                        }
                        Ok(Some(k - 1))
                    }
                    _ => Ok(None),
                }
            };
            let mut p = if let Some(k) = index("dzbar")? {
                diff = diff.wedge(&Form::basis(n, Family::DZetaBar, k, Poly::constant(C64::new(1.0, 0.0), n))?);
                continue;
            } else if let Some(k) = index("dz")? {
                diff = diff.wedge(&Form::basis(n, Family::DZeta, k, Poly::constant(C64::new(1.0, 0.0), n))?);
                continue;
            } else if let Some(k) = index("zbar")? {
                Poly::conj_var(k, n)
            } else if let Some(k) = index("z")? {
                Poly::var(k, n)
            } else if base == "i" {
                Poly::constant(C64::new(0.0, 1.0), n)
            } else {
                let v: f64 = base.parse().map_err(|_| bad(format!("unknown factor `{base}`")))?;
                Poly::constant(C64::new(v, 0.0), n)
            };
            let base_p = p.clone();
            for _ in 1..power {
                p = p.mul(&base_p);
            }
            if power == 0 {
                p = Poly::constant(C64::new(1.0, 0.0), n);
            }
            coeff = coeff.mul(&p);
        }
        out = out.add(&diff.mul_coef(&coeff));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dforms::bit;

    fn zeta_mask(family: Family, n: usize, j: usize) -> u32 {
        1 << bit(n, family, j)
    }

    #[test]
    fn parses_functions_and_forms() {
        let f = parse_test_form("z1^3", 1).unwrap();
        let x = C64::new(0.3, 0.4);
        assert!((f.coeff(0).unwrap().eval(&[x]) - x.powu(3)).norm() < 1e-15);
        let g = parse_test_form("zbar2*dzbar1 - 2*i*z1*dzbar2", 2).unwrap();
        let pt = [C64::new(0.1, 0.2), C64::new(-0.3, 0.5)];
        let c1 = g.coeff(zeta_mask(Family::DZetaBar, 2, 0)).unwrap().eval(&pt);
        let c2 = g.coeff(zeta_mask(Family::DZetaBar, 2, 1)).unwrap().eval(&pt);
        assert!((c1 - pt[1].conj()).norm() < 1e-15);
        assert!((c2 - C64::new(0.0, -2.0) * pt[0]).norm() < 1e-15);
        assert!(parse_test_form("0", 2).unwrap().is_zero());
        assert!(parse_test_form("1e-3*z1", 2).is_ok());
        let h = parse_test_form("z1 + -2*z2 - -z1", 2).unwrap();
        assert!((h.coeff(0).unwrap().eval(&pt) - (2.0 * pt[0] - 2.0 * pt[1])).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_test_form("z3", 2).is_err());
        assert!(parse_test_form("w1", 2).is_err());
        assert!(parse_test_form("", 2).is_err());
        assert!(parse_test_form("z1+", 2).is_err());
    }
}
