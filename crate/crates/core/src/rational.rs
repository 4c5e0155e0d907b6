//! Exact-rational helpers shared across modules.
//!
//! Probabilities coming from topology files are decimal literals. Converting
//! the shortest round-trip decimal form of an `f64` back to a `BigRational`
//! recovers the intended decimal exactly (`0.8 -> 4/5` rather than the binary
//! expansion of the nearest double), which keeps min-cut and capacity
//! computations free of float ambiguity.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Parse a decimal literal (optionally signed, with fraction and exponent)
/// into an exact rational.
pub fn rational_from_decimal_str(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => {
            let (m, e) = s.split_at(pos);
            (m, e[1..].parse::<i64>().ok()?)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => {
            let (i, f) = mantissa.split_at(pos);
            (i, &f[1..])
        }
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits: String = format!("{int_part}{frac_part}");
    let value: BigInt = digits.parse().ok()?;
    let scale = frac_part.len() as i64 - exp;
    let ten = BigInt::from(10);
    let rational = if scale >= 0 {
        BigRational::new(value, ten.pow(scale as u32))
    } else {
        BigRational::from_integer(value * ten.pow((-scale) as u32))
    };
    Some(rational)
}

/// Exact rational from the shortest round-trip decimal form of `x`.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    rational_from_decimal_str(&format!("{x}"))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rational representable as f64")
}

pub fn big_ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact binomial coefficient with the combinatorial convention:
/// zero when `k < 0`, `n < 0`, or `n < k`.
pub fn binomial_big(n: i64, k: i64) -> BigInt {
    if k < 0 || n < 0 || n < k {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for step in 0..k {
        acc = acc * BigInt::from(n - step) / BigInt::from(step + 1);
    }
    acc
}

/// Format with `sig` significant digits, `printf %g` style: plain decimal for
/// moderate exponents, exponent notation otherwise, trailing zeros trimmed.
/// Locale-independent by construction.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let formatted = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp_str) = formatted.split_once('e').expect("exponent form");
    let exp: i32 = exp_str.parse().expect("numeric exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    if exp < -4 || exp >= sig as i32 + 4 {
        let trimmed = {
            let t = digits.trim_end_matches('0');
            if t.is_empty() { "0" } else { t }
        };
        let mut m = String::new();
        if negative {
            m.push('-');
        }
        m.push_str(&trimmed[..1]);
        if trimmed.len() > 1 {
            m.push('.');
            m.push_str(&trimmed[1..]);
        }
        return format!("{m}e{exp}");
    }

    // Plain decimal: place the point after position exp+1 of the digit string.
    let point = exp + 1;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        for _ in 0..(-point) {
            out.push('0');
        }
        out.push_str(digits.trim_end_matches('0'));
    } else if (point as usize) >= digits.len() {
        out.push_str(&digits);
        for _ in 0..(point as usize - digits.len()) {
            out.push('0');
        }
    } else {
        out.push_str(&digits[..point as usize]);
        let rest = digits[point as usize..].trim_end_matches('0');
        if !rest.is_empty() {
            out.push('.');
            out.push_str(rest);
        }
    }
    // "0." with everything trimmed means the value rounded to zero digits.
    if out.ends_with('.') {
        out.pop();
    }
    out
}

/// True when `|a - b| <= tol` with `tol` given as a decimal like 1e-12.
pub fn rational_close(a: &BigRational, b: &BigRational, tol: &BigRational) -> bool {
    (a - b).abs() <= *tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parse_is_exact() {
        assert_eq!(rational_from_decimal_str("0.8").unwrap(), big_ratio(4, 5));
        assert_eq!(rational_from_decimal_str("0.25").unwrap(), big_ratio(1, 4));
        assert_eq!(rational_from_decimal_str("-1.5").unwrap(), big_ratio(-3, 2));
        assert_eq!(rational_from_decimal_str("2e-3").unwrap(), big_ratio(1, 500));
        assert_eq!(rational_from_decimal_str("3").unwrap(), big_ratio(3, 1));
    }

    #[test]
    fn f64_roundtrip_recovers_short_decimals() {
        for (x, num, den) in [(0.8, 4, 5), (0.1, 1, 10), (0.3333, 3333, 10000), (1.0, 1, 1)] {
            assert_eq!(rational_from_f64(x).unwrap(), big_ratio(num, den));
        }
    }

    #[test]
    fn binomial_convention() {
        assert_eq!(binomial_big(5, 2), BigInt::from(10));
        assert_eq!(binomial_big(-1, 3), BigInt::zero());
        assert_eq!(binomial_big(3, 5), BigInt::zero());
        assert_eq!(binomial_big(7, 0), BigInt::one());
    }

    #[test]
    fn format_sig_cases() {
        assert_eq!(format_sig(0.5, 12), "0.5");
        assert_eq!(format_sig(2.0 / 3.0, 12), "0.666666666667");
        assert_eq!(format_sig(160.0, 12), "160");
        assert_eq!(format_sig(0.0, 12), "0");
        assert_eq!(format_sig(-4.1666666666666, 6), "-4.16667");
        assert_eq!(format_sig(1e-30, 12), "1e-30");
        assert_eq!(format_sig(5.5238095238095, 12), "5.52380952381");
    }

    #[test]
    fn format_sig_parses_back() {
        for x in [0.123456789012345, 263.2455532034, 1.9e-7, 123456.789, -0.001_5] {
            let s = format_sig(x, 12);
            let y: f64 = s.parse().unwrap();
            assert!((x - y).abs() <= x.abs() * 1e-11);
        }
    }
}
