//! C99-style hexadecimal float literals (`0x1.8p+1`), used for lossless
//! parameter files.

/// Format `x` as a hex-float literal. Non-finite values are written as
/// `inf`, `-inf` and `nan`.
pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_field = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_field == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_field == 0 { (0, -1022) } else { (1, exp_field - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let exp_sign = if exp >= 0 { "+" } else { "-" };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{exp_sign}{}", exp.abs())
    }
}

/// Parse a hex-float literal. Plain decimal literals are accepted as well.
pub fn parse(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) else {
        return t.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"));
    };
    let (mant_part, exp_part) = match hex.find(['p', 'P']) {
        Some(i) => (&hex[..i], &hex[i + 1..]),
        None => (hex, "0"),
    };
    let exp: i64 = exp_part.parse().map_err(|_| format!("bad exponent in `{s}`"))?;
    let (int_digits, frac_digits) = match mant_part.find('.') {
        Some(i) => (&mant_part[..i], &mant_part[i + 1..]),
        None => (mant_part, ""),
    };
    if int_digits.is_empty() && frac_digits.is_empty() {
        return Err(format!("no digits in `{s}`"));
    }
    let all: String = [int_digits, frac_digits].concat();
    let trimmed = all.trim_start_matches('0');
    if trimmed.len() > 14 {
        return Err(format!("too many significant digits in `{s}`"));
    }
    let mant = if trimmed.is_empty() {
        0
    } else {
        u64::from_str_radix(trimmed, 16).map_err(|_| format!("bad hex digits in `{s}`"))?
    };
    if mant >= 1u64 << 53 {
        return Err(format!("significand too wide in `{s}`"));
    }
    let mut value = mant as f64;
    let mut e = exp - 4 * frac_digits.len() as i64;
    // Scale in steps that stay inside the normal range until the last one,
    // so at most one rounding happens.
    while e > 1000 {
        value *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 && value != 0.0 {
        value *= 2f64.powi(-1000);
        e += 1000;
    }
    value *= 2f64.powi(e as i32);
    Ok(if neg { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_literals() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(-0.25), "-0x1p-2");
        assert_eq!(format(0.0), "0x0p+0");
        assert_eq!(parse("0x1.8p+1").unwrap(), 3.0);
        assert_eq!(parse("-2.5").unwrap(), -2.5);
        assert_eq!(parse("0x.8p1").unwrap(), 1.0);
        assert!(parse("0xzz").is_err());
    }

    #[test]
    fn extremes_round_trip() {
        for x in [f64::MAX, f64::MIN_POSITIVE, f64::from_bits(1), -f64::from_bits(0xfffff), -0.0] {
            assert_eq!(parse(&format(x)).unwrap().to_bits(), x.to_bits(), "{x:e}");
        }
    }

    proptest! {
        #[test]
        fn round_trips_every_finite_value(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            prop_assert_eq!(parse(&format(x)).unwrap().to_bits(), bits);
        }
    }
}
