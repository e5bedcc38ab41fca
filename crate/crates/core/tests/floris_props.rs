use hybridloc::floris::{solve_floris, solve_floris_reduced, FlorisProblem};
use hybridloc::network::{flatten, NetworkProblem};
use hybridloc::refine::{refine_flat, RefineConfig};
use hybridloc::simlab::{generate_scenario, synthesize_measurements, AnchorCounts, NoiseModel, ScenarioKind};
use proptest::prelude::*;

const TOL: f64 = 1e-8;

fn instance(dim: usize, range: usize, visual: usize, seed: u64, eta: f64) -> (NetworkProblem, FlorisProblem, Vec<f64>) {
    let counts = AnchorCounts { range, visual, nodes: 1 };
    let s = generate_scenario(ScenarioKind::SingleSourceRandom, dim, counts, seed).unwrap();
    let ms = synthesize_measurements(&s, NoiseModel { eta, seed }).unwrap();
    let p = NetworkProblem::from_scenario(&s, &ms).unwrap();
    let fp = p.to_floris().unwrap();
    (p, fp, flatten(&s.truth().unwrap()))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noiseless_instances_are_recovered_exactly(
        seed in 0u64..100_000,
        dim in 2usize..=3,
        range in 0usize..=8,
        visual in 0usize..=4,
    ) {
        prop_assume!(range + visual >= dim + 2);
        let (_, fp, truth) = instance(dim, range, visual, seed, 0.0);
        let sol = solve_floris(&fp, TOL).unwrap();
        prop_assert!(dist(sol.x_hat.as_slice(), &truth) <= 1e-3);
        prop_assert!(sol.rank1_ratio >= 1e3, "ratio {}", sol.rank1_ratio);
    }

    #[test]
    fn relaxation_bounds_the_refined_cost(seed in 0u64..100_000, dim in 2usize..=3, eta in 0.0f64..0.1) {
        let (p, fp, _) = instance(dim, 8, 4, seed, eta);
        let sol = solve_floris(&fp, TOL).unwrap();
        let refined = refine_flat(sol.x_hat.as_slice(), &p, &RefineConfig::default()).unwrap();
        prop_assert!(sol.sdp_objective <= refined.cost + 1e-9, "{} > {}", sol.sdp_objective, refined.cost);
    }

    #[test]
    fn reduced_variant_tracks_full(seed in 0u64..100_000, dim in 2usize..=3, eta in 0.0f64..0.1) {
        let (_, fp, _) = instance(dim, 8, 4, seed, eta);
        let full = solve_floris(&fp, TOL).unwrap();
        let reduced = solve_floris_reduced(&fp, TOL).unwrap();
        prop_assert!(dist(full.x_hat.as_slice(), reduced.x_hat.as_slice()) <= 1e-3);
    }
}
