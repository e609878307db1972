/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Exact integers print as integers, everything else with 17 significant digits.
pub fn fmt_count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        format!("{}", x as i64)
    } else {
        fmt_sig17(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_sig17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_count(500.0), "500");
        assert_eq!(fmt_count(0.25).parse::<f64>().unwrap(), 0.25);
    }
}
