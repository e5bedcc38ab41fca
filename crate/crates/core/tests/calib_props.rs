use hybridloc::calib::{
    calibrate, is_rotation, pair_indices, pairwise_differences, pairwise_objective, PairPolicy, PoseSample, DEFAULT_EPS,
    DEFAULT_MAX_ITERS,
};
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rotation(a: [f64; 3]) -> Matrix3<f64> {
    Rotation3::from_euler_angles(a[0], a[1], a[2]).into_inner()
}

/// `count` samples of the rig model with isotropic noise `sigma` on `x_r`.
fn samples(r: &Matrix3<f64>, t_0: &Vector3<f64>, t_g: &Vector3<f64>, count: usize, sigma: f64, seed: u64) -> Vec<PoseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    (0..count)
        .map(|_| {
            let r_v = rotation([g(), g(), g()]);
            let t_v = Vector3::new(g(), g(), g());
            let noise = Vector3::new(g(), g(), g()) * sigma;
            PoseSample::new(r * (r_v * t_0 + t_v) + t_g + noise, r_v, t_v).unwrap()
        })
        .collect()
}

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-2.0f64..2.0).prop_map(Vector3::from)
}

fn angles() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-3.0f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairwise_residual_vanishes_at_truth_whatever_the_translation(
        a in angles(), t_0 in vec3(), t_g in vec3(), seed in 0u64..1000,
    ) {
        let r = rotation(a);
        let s = samples(&r, &t_0, &(t_g * 100.0), 12, 0.0, seed);
        let diffs = pairwise_differences(&s, PairPolicy::AllPairs).unwrap();
        prop_assert!(pairwise_objective(&r, &t_0, &diffs) < 1e-20);
    }

    #[test]
    fn output_is_a_rotation_and_residual_is_consistent(
        a in angles(), t_0 in vec3(), t_g in vec3(), seed in 0u64..1000, sigma in 0.0f64..0.05, count in 3usize..40,
    ) {
        let s = samples(&rotation(a), &t_0, &t_g, count, sigma, seed);
        let c = calibrate(&s, DEFAULT_EPS, DEFAULT_MAX_ITERS).unwrap();
        prop_assert!(is_rotation(&c.r_g_v, 1e-9));
        prop_assert!((c.r_g_v.determinant() - 1.0).abs() < 1e-9);
        let ss: f64 = s.iter().map(|p| (p.x_r - c.predict(p)).norm_squared()).sum();
        prop_assert!(((ss / count as f64).sqrt() - c.residual_rms).abs() <= 1e-12 * (1.0 + c.residual_rms));
        for w in c.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-24);
        }
    }
}

#[test]
fn pair_policy_covers_every_sample() {
    for count in [2, 25, 26, 100] {
        let pairs = pair_indices(count, PairPolicy::Auto { seed: 4 }).unwrap();
        let mut seen = vec![false; count];
        for (i, j) in pairs {
            assert!(i < j && j < count);
            seen[i] = true;
            seen[j] = true;
        }
        assert!(seen.iter().all(|&b| b), "count {count}");
    }
}
