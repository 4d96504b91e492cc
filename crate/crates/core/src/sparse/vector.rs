/// Dense vectors are plain `Vec<f64>`; kernels take slices.
pub type DenseVector = Vec<f64>;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "dot: length mismatch");
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "axpy: length mismatch");
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

/// Maximum absolute entry; 0 for an empty slice. NaN entries propagate.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| {
        let a = v.abs();
        if a.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(a)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_ops() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(axpy(2.0, &[1.0, -1.0], &[0.5, 0.5]), vec![2.5, -1.5]);
        assert_eq!(inf_norm(&[3.0, -4.0]), 4.0);
        assert_eq!(inf_norm(&[]), 0.0);
        assert!(inf_norm(&[1.0, f64::NAN]).is_nan());
    }
}
