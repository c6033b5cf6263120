//! Number formatting for text outputs.

/// Round to 9 significant digits and print the shortest representation of
/// the rounded value. Very large or small magnitudes use exponent form.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if rounded == 0.0 || (1e-6..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.1 + 0.2), "0.3");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789012.0), "123456789000");
        assert_eq!(sig9(-2.5e-9), "-2.5e-9");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(f64::NEG_INFINITY), "-inf");
    }
}
