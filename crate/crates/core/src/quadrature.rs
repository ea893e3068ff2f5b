//! Composite rules on uniform nodes.

/// Composite Simpson weights for `count` (odd) nodes with spacing `h`.
pub fn simpson_weights(count: usize, h: f64) -> Vec<f64> {
    assert!(count >= 3 && count % 2 == 1, "Simpson needs an odd node count >= 3");
    (0..count)
        .map(|i| {
            let c = if i == 0 || i == count - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_cubics() {
        let count = 101;
        let h = 2.0 / (count - 1) as f64;
        let w = simpson_weights(count, h);
        let s: f64 = w
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let x = i as f64 * h;
                w * (x * x * x - 2.0 * x + 1.0)
            })
            .sum();
        assert!((s - 2.0).abs() < 1e-13);
    }
}
