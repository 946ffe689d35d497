//! C-style `%.17g` formatting. Seventeen significant digits always round-trip
//! an `f64` through `str::parse` bit-exactly.

/// Formats `x` the way C's `printf("%.17g", x)` does.
pub fn g17(x: f64) -> String {
    fmt_g(x, 17)
}

/// `%.{precision}g` formatting.
pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let p = precision.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    // Scientific rendering fixes the decimal exponent after rounding to p digits.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");

    if exp < -4 || exp >= p as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", mantissa, sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a number written by [`g17`] (or any Rust-parsable float, plus `nan`/`inf`).
pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" | "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matches_c_printf() {
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(-0.579), "-0.57899999999999996");
        assert_eq!(g17(250.0), "250");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(0.0001), "0.0001");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(12345678901234567.0), "12345678901234568");
        assert_eq!(g17(0.0), "0");
        assert_eq!(g17(-2.5), "-2.5");
        assert_eq!(fmt_g(3.14159, 3), "3.14");
    }

    proptest! {
        #[test]
        fn round_trips_bit_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let y = parse_f64(&g17(x)).unwrap();
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
