use proptest::prelude::*;
use wtc_core::reduce::{effective_threshold, prune, pruned_count, quantize, PruneSpec, QuantGrid, Rounding};
use wtc_core::{DenseTensor, LayerKind};

fn tensor(values: Vec<f32>) -> DenseTensor {
    let n = values.len();
    DenseTensor::f32("t", vec![1, n], LayerKind::FullyConnected, values).unwrap()
}

fn on_grid_values(bits: u32) -> impl Strategy<Value = (Vec<f32>, f32)> {
    let max = ((1i32 << (bits - 1)) - 1) as f32;
    (1e-3f32..1.0).prop_flat_map(move |scale| {
        (prop::collection::vec(-max..max, 1..80), Just(scale))
            .prop_map(|(ks, s)| (ks.into_iter().map(|k| k * s).collect(), s))
    })
}

proptest! {
    #[test]
    fn quantization_error_is_bounded(bits in 2u32..=16, seed in on_grid_values(16)) {
        let (values, scale) = seed;
        let cap = ((1i64 << (bits - 1)) - 1) as f32 * scale;
        let values: Vec<f32> = values.into_iter().map(|v| v.clamp(-cap, cap)).collect();
        let t = tensor(values.clone());
        for rounding in [Rounding::Truncate, Rounding::Nearest] {
            let grid = QuantGrid::new(bits, scale, rounding).unwrap();
            let q = quantize(&t, &grid).unwrap();
            let (idx, s) = q.q16_values().unwrap();
            prop_assert_eq!(s.to_bits(), scale.to_bits());
            for (&v, &k) in values.iter().zip(idx) {
                let err = v as f64 - k as f64 * scale as f64;
                match rounding {
                    Rounding::Truncate => {
                        prop_assert!(err.abs() < scale as f64);
                        prop_assert!(err == 0.0 || err.signum() == (v as f64).signum());
                    }
                    Rounding::Nearest => prop_assert!(err.abs() <= scale as f64 / 2.0),
                }
            }
            prop_assert_eq!(quantize(&q, &grid).unwrap(), q.clone());
        }
    }

    #[test]
    fn target_sparsity_zeroes_the_smallest(values in prop::collection::vec(-10.0f32..10.0, 1..100), s in 0.0f64..=1.0) {
        let t = tensor(values.clone());
        let spec = PruneSpec::target_sparsity(s).unwrap();
        let p = prune(&t, spec).unwrap();
        let out = p.f32_values().unwrap();
        let k = pruned_count(s, values.len());
        prop_assert!(p.count_zeros() >= k);
        let cut = effective_threshold(&t, spec).unwrap();
        for (&v, &o) in values.iter().zip(out) {
            prop_assert!(o == 0.0 || o == v);
            if v.abs() > cut {
                prop_assert_eq!(o, v);
            }
        }
        prop_assert_eq!(k, (s * values.len() as f64 - 1e-9).ceil().max(0.0) as usize);
    }

    #[test]
    fn threshold_is_strict(values in prop::collection::vec(-4.0f32..4.0, 1..100), th in 0.0f32..4.0) {
        let p = prune(&tensor(values.clone()), PruneSpec::threshold(th).unwrap()).unwrap();
        for (&v, &o) in values.iter().zip(p.f32_values().unwrap()) {
            prop_assert_eq!(o, if v.abs() < th { 0.0 } else { v });
        }
    }
}

#[test]
fn out_of_range_values_are_rejected() {
    let grid = QuantGrid::new(4, 1.0, Rounding::Nearest).unwrap();
    assert!(quantize(&tensor(vec![0.0, 8.0]), &grid).is_err());
    assert!(quantize(&tensor(vec![-8.0, 7.0]), &grid).is_ok());
    assert!(QuantGrid::new(1, 1.0, Rounding::Nearest).is_err());
    assert!(QuantGrid::new(17, 1.0, Rounding::Nearest).is_err());
    assert!(QuantGrid::new(8, 0.0, Rounding::Nearest).is_err());
}
