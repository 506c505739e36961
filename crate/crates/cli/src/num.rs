/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed,
/// exponent form outside `[1e-4, 1e9)`. Independent of locale.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // exponent after rounding to 9 digits, e.g. 9.999999999 → 1.00000000e1
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn formats() {
        assert_eq!(sig9(0.5), "0.5");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(2.4205584583201643), "2.42055846");
        assert_eq!(sig9(123456789.4), "123456789");
        assert_eq!(sig9(1234567894.0), "1.23456789e+09");
        assert_eq!(sig9(9.9999999999), "10");
        assert_eq!(sig9(1e-5), "1e-05");
        assert_eq!(sig9(0.00012345678912), "0.000123456789");
        assert_eq!(sig9(f64::NAN), "nan");
    }
}
