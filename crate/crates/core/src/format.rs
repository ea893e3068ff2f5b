//! Fixed float formatting for data files.

/// Shortest round-trip-safe scientific form with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number carrying exactly the [`fmt17`] digits; non-finite becomes null.
pub fn json_f64(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::from_str::<serde_json::Number>(&fmt17(x))
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    } else {
        serde_json::Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.0, 1.0, -1.0 / 3.0, 1e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(json_f64(0.5).to_string(), "5.0000000000000000e-1");
        assert!(json_f64(f64::NAN).is_null());
    }
}
