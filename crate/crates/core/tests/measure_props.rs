use ifsthermo_core::family::{validate, IfsInstance};
use ifsthermo_core::measure::{
    chaos_mean, depth_integrals, depth_n_measure, markov_step, w1_distance, DiscreteMeasure, EvolveConfig,
};
use ifsthermo_core::sweep::preset;
use ifsthermo_core::DEFAULT_GRID;
use proptest::prelude::*;

fn bound(name: &str) -> IfsInstance {
    preset(name).unwrap().family.bind_default().unwrap()
}

/// Presets whose weights are constant, where the Markov operator is an
/// `L`-contraction in W1.
const CONSTANT_WEIGHT: [&str; 2] = ["simple_4_1", "cantor"];

fn measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0f64..=1.0, 0.01f64..1.0), 1..=100)
        .prop_map(|atoms| DiscreteMeasure::from_atoms(atoms).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn markov_operator_contracts(mu in measure(), nu in measure()) {
        let cfg = EvolveConfig::default();
        for name in CONSTANT_WEIGHT {
            let inst = bound(name);
            let l = validate(&inst, DEFAULT_GRID).unwrap().contraction;
            let before = w1_distance(&mu, &nu);
            let after = w1_distance(&markov_step(&inst, &mu, &cfg).unwrap(), &markov_step(&inst, &nu, &cfg).unwrap());
            prop_assert!(after <= l * before * (1.0 + 1e-9), "{name}: {after} > {l} * {before}");
        }
    }

    #[test]
    fn random_affine_systems_contract(
        r in 0.05f64..0.45,
        s in 0.05f64..0.45,
        p in 0.05f64..0.95,
        mu in measure(),
        nu in measure(),
    ) {
        let inst = IfsInstance::affine(&[r, s], &[0.0, 1.0 - s], &[p, 1.0 - p]).unwrap();
        let l = validate(&inst, DEFAULT_GRID).unwrap().contraction;
        let cfg = EvolveConfig::default();
        let after = w1_distance(&markov_step(&inst, &mu, &cfg).unwrap(), &markov_step(&inst, &nu, &cfg).unwrap());
        prop_assert!(after <= l * w1_distance(&mu, &nu) * (1.0 + 1e-9));
    }
}

#[test]
fn depth_expansion_equals_iterated_markov_steps() {
    let cfg = EvolveConfig::default();
    for name in ["simple_4_1", "cantor", "ex_4_3", "ex_4_4"] {
        let inst = bound(name);
        for x0 in [0.0, 0.5, 1.0] {
            let mut nu = markov_step(&inst, &DiscreteMeasure::dirac(x0).unwrap(), &cfg).unwrap();
            for n in 1..=10 {
                let direct = depth_n_measure(&inst, x0, n, &cfg).unwrap();
                assert_eq!(direct.len(), nu.len(), "{name} n={n}");
                for ((a, wa), (b, wb)) in direct.atoms().zip(nu.atoms()) {
                    assert!((a - b).abs() <= 1e-12 && (wa - wb).abs() <= 1e-12, "{name} n={n}");
                }
                nu = markov_step(&inst, &nu, &cfg).unwrap();
            }
        }
    }
}

#[test]
fn cauchy_decay() {
    let cfg = EvolveConfig::default();
    for name in CONSTANT_WEIGHT {
        let inst = bound(name);
        let l = validate(&inst, DEFAULT_GRID).unwrap().contraction;
        let mut prev = DiscreteMeasure::dirac(0.5).unwrap();
        let mut next = markov_step(&inst, &prev, &cfg).unwrap();
        let first = w1_distance(&prev, &next);
        for n in 0..=12 {
            let d = w1_distance(&prev, &next);
            assert!(d <= l.powi(n) * first * (1.0 + 1e-9), "{name} n={n}: {d}");
            prev = next;
            next = markov_step(&inst, &prev, &cfg).unwrap();
        }
    }
}

#[test]
fn limit_is_independent_of_start() {
    let cfg = EvolveConfig::default();
    for name in CONSTANT_WEIGHT {
        let inst = bound(name);
        let l = validate(&inst, DEFAULT_GRID).unwrap().contraction;
        let m: Vec<DiscreteMeasure> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&x0| depth_n_measure(&inst, x0, 14, &cfg).unwrap())
            .collect();
        for a in &m {
            for b in &m {
                assert!(w1_distance(a, b) <= 2.0 * l.powi(14), "{name}");
            }
        }
    }
}

#[test]
fn chaos_game_agrees_with_depth_expansion() {
    let f = |x: f64| x;
    for name in ["simple_4_1", "cantor", "ex_4_3", "ex_4_4"] {
        let inst = bound(name);
        let sums = depth_integrals(&inst, 0.5, 16, &f, 1 << 20).unwrap();
        let tail = (sums[16] - sums[15]).abs() * 3.0;
        let (mean, se) = chaos_mean(&inst, 0.5, 1000, 200_000, 7, &f).unwrap();
        assert!((mean - sums[16]).abs() <= 6.0 * se + tail, "{name}: {mean} vs {}", sums[16]);
    }
}
