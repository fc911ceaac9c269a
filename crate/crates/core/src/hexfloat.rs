//! C99 hexadecimal float literals (`%a`), used for bit-exact coefficients.

/// Formats `v` as `[-]0x1.<hex>p<exp>`, or `0x0.<hex>p-1022` for subnormals.
/// Infinities and NaN are written as `inf`, `-inf` and `nan`.
pub fn format(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let digits = format!("{mantissa:013x}");
    let digits = digits.trim_end_matches('0');
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    let esign = if exp >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{esign}{}", exp.abs())
}

fn scale(mut x: f64, mut e: i64) -> f64 {
    // steps of 2^±600 keep intermediates exact until the final rounding
    while e > 600 {
        x *= 2f64.powi(600);
        e -= 600;
    }
    while e < -600 {
        x *= 2f64.powi(-600);
        e += 600;
    }
    x * 2f64.powi(e as i32)
}

/// Parses a hexadecimal float literal. Accepts at most 13 fractional hex
/// digits, which covers every value produced by [`format`].
pub fn parse(s: &str) -> Option<f64> {
    let s = s.trim();
    match s {
        "inf" | "+inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        "nan" => return Some(f64::NAN),
        _ => {}
    }
    let (negative, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let (body, exp) = rest.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() || int_part.len() > 1 || frac_part.len() > 13 {
        return None;
    }
    let mut mant: u64 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        mant = mant * 16 + c.to_digit(16)? as u64;
    }
    let value = scale(mant as f64, exp - 4 * frac_part.len() as i64);
    Some(if negative { -value } else { value })
}
