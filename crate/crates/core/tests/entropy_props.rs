use liescale::entropy::{entropy_between_scales, smoothed_entropy};
use liescale::knn::knn_entropy_oracle;
use liescale::measure::Weight;
use liescale::oracle::{entropy_1d, gap_1d, group_kernel_entropy, kl_1d, mixture_breakpoints, mixture_density_1d, moments_1d};
use liescale::{AlgebraVector, FinSuppMeasure, GroupElement, LieGroupModel, RngStream, SmoothingKernel};
use proptest::prelude::*;

fn gaussian(m: f64, s: f64) -> impl Fn(f64) -> f64 + Copy {
    move |x| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// `H(λ) = ‖λ‖ H(λ/‖λ‖)` for a finite measure with density `f` and mass `m`.
fn finite_entropy(f: impl Fn(f64) -> f64, m: f64, bps: &[f64]) -> f64 {
    m * entropy_1d(|x| f(x) / m, bps)
}

fn line(points: &[f64], weights: &[f64]) -> FinSuppMeasure {
    let m = LieGroupModel::Abelian(1);
    let atoms = points.iter().map(|&p| GroupElement::from_f64(m, &[p]).unwrap()).collect();
    FinSuppMeasure::new(m, atoms, weights.iter().map(|&w| Weight::Float(w)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_is_superadditive_over_pieces(p in 0.05f64..0.95, d in 0.0f64..2.0, a in 1.0f64..4.0, r in 0.05f64..1.0) {
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), a, r).unwrap();
        let l1 = |x: f64| p * k.radial_density(x.abs());
        let l2 = |x: f64| (1.0 - p) * k.radial_density((x - d).abs());
        let bps = mixture_breakpoints(&[0.0, d], a, r);
        let whole = entropy_1d(|x| l1(x) + l2(x), &bps);
        let parts = finite_entropy(l1, p, &bps) + finite_entropy(l2, 1.0 - p, &bps);
        prop_assert!(whole >= parts - 1e-10, "{whole} vs {parts}");
    }

    #[test]
    fn divergence_shift_is_bounded_by_log_ratio(
        c in -1.0f64..1.0, a in 1.0f64..3.0, r in 0.05f64..0.5,
        m2 in -1.0f64..1.0, s2 in 0.3f64..2.0, m3 in -1.0f64..1.0, s3 in 0.3f64..2.0,
    ) {
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), a, r).unwrap();
        let f = |x: f64| k.radial_density((x - c).abs());
        let bps = mixture_breakpoints(&[c], a, r);
        let (g2, g3) = (gaussian(m2, s2), gaussian(m3, s3));
        let shift = kl_1d(f, g2, &bps) - kl_1d(f, g3, &bps);
        // log(g2/g3) is quadratic: its extremes on U are at the ends or the vertex
        let log_ratio = |x: f64| g2(x).ln() - g3(x).ln();
        let (lo, hi) = (c - a * r, c + a * r);
        let mut sup = log_ratio(lo).abs().max(log_ratio(hi).abs());
        let curvature = 1.0 / (s3 * s3) - 1.0 / (s2 * s2);
        if curvature != 0.0 {
            let vertex = (m2 / (s2 * s2) - m3 / (s3 * s3)) / (1.0 / (s2 * s2) - 1.0 / (s3 * s3));
            if (lo..=hi).contains(&vertex) {
                sup = sup.max(log_ratio(vertex).abs());
            }
        }
        prop_assert!(shift.abs() <= sup + 1e-9, "{shift} vs {sup}");
    }

    #[test]
    fn gaussian_maximizes_entropy_for_its_variance(
        pts in prop::collection::vec(-1.0f64..1.0, 1..4), a in 1.0f64..4.0, r in 0.05f64..0.5,
    ) {
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let f = mixture_density_1d(&pts, &w, a, r);
        let bps = mixture_breakpoints(&pts, a, r);
        let (mass, _, var) = moments_1d(&f, &bps);
        prop_assert!((mass - 1.0).abs() < 1e-9);
        let bound = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln();
        prop_assert!(entropy_1d(&f, &bps) <= bound + 1e-10);
    }
}

#[test]
fn resubstitution_agrees_with_nearest_neighbours() {
    let cases: Vec<(FinSuppMeasure, SmoothingKernel)> = vec![
        (line(&[0.0, 0.3], &[0.5, 0.5]), SmoothingKernel::new(LieGroupModel::Abelian(1), 3.0, 0.1).unwrap()),
        (line(&[0.0, 0.1, 1.0], &[0.2, 0.3, 0.5]), SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 0.2).unwrap()),
        (FinSuppMeasure::dirac(LieGroupModel::SO3.identity()), SmoothingKernel::new(LieGroupModel::SO3, 2.0, 0.5).unwrap()),
        (FinSuppMeasure::dirac(LieGroupModel::SL2R.identity()), SmoothingKernel::new(LieGroupModel::SL2R, 2.0, 0.2).unwrap()),
    ];
    for (i, (mu, k)) in cases.iter().enumerate() {
        let rng = RngStream::new(40 + i as u64, 0);
        let est = smoothed_entropy(mu, k, 50_000, &rng).unwrap();
        // chart samples of the mixture, all atoms sit at the origin of one chart
        let mut s = rng.derive(99);
        let cumulative: Vec<f64> = mu.weights().iter().scan(0.0, |acc, w| { *acc += w; Some(*acc) }).collect();
        let xs: Vec<AlgebraVector> = (0..50_000)
            .map(|_| {
                let j = mu.sample_index(&cumulative, &mut s);
                mu.atoms()[j].multiply(&k.sample_group(&mut s)).unwrap().log().unwrap()
            })
            .collect();
        let knn = knn_entropy_oracle(&xs).unwrap();
        let knn_error = 0.02;
        let combined = (est.tolerance().powi(2) + knn_error * knn_error).sqrt();
        assert!((est.value - knn).abs() <= 3.0 * combined, "case {i}: {} vs {knn}", est.value);
    }
}

#[test]
fn smoothed_identity_has_kernel_entropy() {
    for (model, a, r) in [(LieGroupModel::SO3, 2.0, 0.5), (LieGroupModel::SL2R, 3.0, 0.1), (LieGroupModel::Heisenberg3, 2.0, 0.3)] {
        let k = SmoothingKernel::new(model, a, r).unwrap();
        let est = smoothed_entropy(&FinSuppMeasure::dirac(model.identity()), &k, 100_000, &RngStream::new(3, 0)).unwrap();
        let exact = group_kernel_entropy(&k);
        assert!((est.value - exact).abs() <= est.tolerance(), "{model}: {} vs {exact}", est.value);
    }
}

#[test]
fn entropy_is_right_translation_invariant() {
    let m = LieGroupModel::SO3;
    let atoms: Vec<GroupElement> = [[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.2, 0.1]]
        .iter()
        .map(|c| AlgebraVector::new(m, c).unwrap().exp())
        .collect();
    let shift = AlgebraVector::new(m, &[0.4, -0.7, 0.2]).unwrap().exp();
    let moved: Vec<GroupElement> = atoms.iter().map(|g| g.multiply(&shift).unwrap()).collect();
    let k = SmoothingKernel::new(m, 2.0, 0.1).unwrap();
    let h1 = smoothed_entropy(&FinSuppMeasure::uniform(m, atoms).unwrap(), &k, 40_000, &RngStream::new(1, 0)).unwrap();
    let h2 = smoothed_entropy(&FinSuppMeasure::uniform(m, moved).unwrap(), &k, 40_000, &RngStream::new(2, 0)).unwrap();
    assert!((h1.value - h2.value).abs() <= 4.0 * h1.std_error.hypot(h2.std_error) + h1.bias_budget + h2.bias_budget);
}

#[test]
fn gap_between_scales_matches_quadrature() {
    let r1 = 0.05;
    let (d, r2, a) = (3.0 * r1, 10.0 * r1, 3.0);
    let est = entropy_between_scales(&line(&[0.0, d], &[0.5, 0.5]), a, r1, r2, 100_000, &RngStream::new(8, 0)).unwrap();
    let exact = gap_1d(&[0.0, d], &[0.5, 0.5], a, r1, r2);
    assert!((est.value - exact).abs() <= est.tolerance(), "{} vs {exact}", est.value);
}
