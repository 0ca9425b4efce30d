use std::f64::consts::PI;
use std::sync::Arc;

use noisestab::discrete::{discrete_noise_stability, DiscreteFunction, NoiseParameter};
use noisestab::mc::stream_rng;
use noisestab::ou::{ou_apply, Integrand};
use noisestab::partitions::{boundary_sample, gaussian_measure, random_rotation, PartitionSpec, SetSpec, Transform};
use noisestab::special::norm_cdf;
use noisestab::stability::{
    bilinear_stability, half_space_stability_closed_form, noise_stability, partition_stability, propeller_functional,
};
use noisestab::variation::{g_form, BoundaryField};
use noisestab::{Budget, Correlation, GaussianVector};
use proptest::prelude::*;

fn corr(r: f64) -> Correlation {
    Correlation::new(r).unwrap()
}

/// Three sorted angles at least 0.3 apart around the circle.
fn three_angles() -> impl Strategy<Value = Vec<f64>> {
    (0.0..2.0 * PI, 0.3..2.0f64, 0.3..2.0f64).prop_filter_map("wraps", |(a, b, c)| {
        let v = vec![a, a + b, a + b + c];
        (2.0 * PI - b - c > 0.3).then_some(v)
    })
}

fn planar_cones(angles: &[f64]) -> PartitionSpec {
    let gens = angles.iter().map(|t| vec![t.cos(), t.sin()]).collect();
    PartitionSpec::from_generators(gens, None).unwrap()
}

fn unit(v: [f64; 3]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.2).then(|| v.iter().map(|x| x / n).collect())
}

/// Four unit generators in R^3, pairwise separated so every cone is a real cell.
fn four_generators() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::array::uniform4(prop::array::uniform3(-1.0..1.0f64)).prop_filter_map("degenerate", |raw| {
        let g: Vec<Vec<f64>> = raw.into_iter().map(unit).collect::<Option<_>>()?;
        let separated = (0..4).all(|i| (i + 1..4).all(|j| g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum::<f64>() < 0.9));
        separated.then_some(g)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_composes(rho in 0.1..0.95f64, tau in 0.1..0.95f64, a in -1.5..1.5f64, x in -2.0..2.0f64) {
        let st = (1.0 - tau * tau).sqrt();
        let inner = Integrand::OneDim { axis: 0, g: Arc::new(move |y| norm_cdf((a - tau * y) / st)) };
        let point = GaussianVector::new(vec![x, 0.3]).unwrap();
        let lhs = ou_apply(&inner, corr(rho), &point, &Budget::quadrature()).unwrap();
        let rt = rho * tau;
        let rhs = norm_cdf((a - rt * x) / (1.0 - rt * rt).sqrt());
        prop_assert!((lhs.value - rhs).abs() < 1e-9, "{} vs {}", lhs.value, rhs);
    }

    #[test]
    fn reflecting_one_side_flips_the_correlation(angles in three_angles(), rho in -0.9..0.9f64) {
        prop_assume!(rho.abs() > 1e-3);
        let p = planar_cones(&angles);
        let b = Budget::quadrature();
        let direct = bilinear_stability(&p, &p, corr(rho), &b).unwrap();
        let reflected = bilinear_stability(&p, &p.negate(), corr(-rho), &b).unwrap();
        prop_assert!((direct.value - reflected.value).abs() < 1e-10);
    }

    #[test]
    fn random_cones_cover_and_normals_point_across(gens in four_generators(), seed in 0u64..1000) {
        let p = PartitionSpec::from_generators(gens, None).unwrap();
        prop_assert_eq!(p.coverage(4000, seed), 1.0);
        prop_assert_eq!(p.overlap(4000, seed), 0.0);
        for i in 0..4 {
            for j in i + 1..4 {
                for b in boundary_sample(&p, i, j, 20, seed).unwrap() {
                    let step = |s: f64| -> Vec<f64> { b.location.iter().zip(&b.normal).map(|(x, n)| x + s * n).collect() };
                    prop_assert_eq!(p.membership(&step(-1e-6)), i);
                    prop_assert_eq!(p.membership(&step(1e-6)), j);
                }
            }
        }
    }

    #[test]
    fn rotation_leaves_stability_unchanged(angles in three_angles(), rho in 0.05..0.95f64, seed in 0u64..1000) {
        let p = planar_cones(&angles);
        let q = random_rotation(2, &mut stream_rng(seed, 0));
        let turned = p.transform(&Transform::Rotate(q)).unwrap();
        let b = Budget::quadrature();
        let (s0, s1) = (partition_stability(&p, corr(rho), &b).unwrap(), partition_stability(&turned, corr(rho), &b).unwrap());
        prop_assert!((s0.value - s1.value).abs() < 1e-10);
    }

    #[test]
    fn extra_coordinates_change_nothing(angles in three_angles(), rho in -0.9..0.95f64, k in 1usize..4) {
        let p = planar_cones(&angles);
        let b = Budget::quadrature();
        let s0 = partition_stability(&p, corr(rho), &b).unwrap();
        let s1 = partition_stability(&p.cylinder_extend(k).unwrap(), corr(rho), &b).unwrap();
        prop_assert!((s0.value - s1.value).abs() < 1e-10);
    }

    #[test]
    fn complement_identity(start in 0.0..2.0 * PI, width in 0.2..6.0f64, rho in -0.9..0.95f64) {
        let b = Budget::quadrature();
        let a = SetSpec::Sector { start, end: start + width };
        let rest = SetSpec::Sector { start: start + width, end: start + 2.0 * PI };
        let g = gaussian_measure(&a, &b).unwrap().value;
        let sa = noise_stability(&a, corr(rho), &b).unwrap().value;
        let sc = noise_stability(&rest, corr(rho), &b).unwrap().value;
        prop_assert!((sc - (1.0 - 2.0 * g + sa)).abs() < 1e-10);
    }

    #[test]
    fn half_spaces_beat_sectors_of_equal_measure(start in 0.0..2.0 * PI, width in 0.2..6.0f64, rho in 0.05..0.95f64) {
        let b = Budget::quadrature();
        let sector = SetSpec::Sector { start, end: start + width };
        let s = noise_stability(&sector, corr(rho), &b).unwrap().value;
        let h = half_space_stability_closed_form(width / (2.0 * PI), corr(rho)).unwrap();
        prop_assert!(s <= h + 1e-10, "sector {} above half-space {}", s, h);
    }

    #[test]
    fn g_form_is_nonnegative(c in prop::array::uniform4(-1.0..1.0f64), rho in 0.1..0.9f64) {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let f = Arc::new(move |x: &[f64], _: &[f64]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1]);
        let g = g_form(&p, corr(rho), &BoundaryField::NormalScalar(f), &Budget::quadrature()).unwrap();
        prop_assert!(g.value >= -3.0 * g.std_error - 1e-12, "{:?}", g);
    }

    #[test]
    fn relabeling_candidates_preserves_stability(
        outcomes in prop::collection::vec(0usize..3, 27),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        rho in -0.45..0.95f64,
    ) {
        let idx = |w: &[usize]| w[0] + 3 * w[1] + 9 * w[2];
        let onehot = |k: usize| { let mut v = vec![0.0; 3]; v[k] = 1.0; v };
        let f = DiscreteFunction::tabulate(3, 3, |w| onehot(outcomes[idx(w)])).unwrap();
        let g = DiscreteFunction::tabulate(3, 3, |w| {
            let back: Vec<usize> = w.iter().map(|&x| perm.iter().position(|&p| p == x).unwrap()).collect();
            onehot(perm[outcomes[idx(&back)]])
        }).unwrap();
        let r = NoiseParameter::new(3, rho).unwrap();
        let (a, b) = (discrete_noise_stability(&f, &r).unwrap(), discrete_noise_stability(&g, &r).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn four_cones_in_space_respect_the_propeller_bound(gens in four_generators()) {
        let p = PartitionSpec::from_generators(gens, None).unwrap();
        let v = propeller_functional(&p, &Budget::quadrature()).unwrap();
        prop_assert!(v.value <= 9.0 / (8.0 * PI) + 1e-9, "{:?}", v);
    }
}
