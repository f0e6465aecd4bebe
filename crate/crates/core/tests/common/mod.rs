#![allow(dead_code)]

use proptest::prelude::*;
use wtc_core::Q16Matrix;

/// Mostly zeros and a small alphabet so blocks repeat, plus the odd full-range value.
pub fn q16_value() -> impl Strategy<Value = i16> {
    prop_oneof![
        6 => Just(0i16),
        3 => -3i16..=3,
        1 => any::<i16>(),
    ]
}

pub fn q16_matrix(max_dim: usize) -> impl Strategy<Value = Q16Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(q16_value(), r * c).prop_map(move |d| Q16Matrix::from_vec(r, c, d))
    })
}

/// Plain row-major matrix-vector product, skipping zeros.
pub fn naive_spmv(m: &Q16Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| {
            let mut acc = 0.0;
            for (c, &xc) in x.iter().enumerate() {
                let v = m.get(r, c);
                if v != 0 {
                    acc += v as f64 * xc;
                }
            }
            acc
        })
        .collect()
}

pub fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
