use ifsthermo_core::family::{validate, IfsInstance};
use ifsthermo_core::sweep::{preset, PRESETS};
use proptest::prelude::*;

fn grid_sup(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..=n).map(|j| f(j as f64 / n as f64)).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn contraction_constant_is_sum_of_grid_sups() {
    for name in PRESETS {
        let spec = preset(name).unwrap();
        let inst = spec.family.bind_default().unwrap();
        for grid in [16, 257, 4096] {
            let report = validate(&inst, grid).unwrap();
            let mut oracle = 0.0;
            for i in 0..inst.k() {
                let g = grid_sup(grid, |x| inst.weight(i, x).unwrap());
                let d = grid_sup(grid, |x| inst.deriv(i, x).unwrap().abs());
                assert_eq!(report.weight_sup[i], g, "{name}");
                assert_eq!(report.lipschitz[i], d, "{name}");
                oracle += g * d;
            }
            assert_eq!(report.contraction, oracle, "{name} at grid {grid}");
        }
    }
}

proptest! {
    #[test]
    fn affine_lipschitz_is_exact(
        ratios in prop::collection::vec(-0.45f64..0.45, 2..5),
        grid in 2usize..5000,
    ) {
        let k = ratios.len();
        let offsets: Vec<f64> = (0..k).map(|i| i as f64 / k as f64 + if ratios[i] < 0.0 { -ratios[i] } else { 0.0 }).collect();
        let weights = vec![1.0 / k as f64; k];
        let inst = IfsInstance::affine(&ratios, &offsets, &weights).unwrap();
        let report = validate(&inst, grid).unwrap();
        for (lip, r) in report.lipschitz.iter().zip(&ratios) {
            prop_assert_eq!(*lip, r.abs());
        }
        let l: f64 = ratios.iter().map(|r| r.abs() / k as f64).sum();
        prop_assert!((report.contraction - l).abs() <= 1e-15);
    }
}
