mod common;

use std::collections::BTreeMap;

use common::{exact_key, q, sl2};
use liescale::conditioning::{conditional_trace, posterior_given_smoothed, trace_about, trace_at_scale_witness};
use liescale::measure::{convolve, Weight};
use liescale::oracle::conditional_trace_1d;
use liescale::{AlgebraVector, FinSuppMeasure, GroupElement, LieGroupModel, RngStream, SmoothingKernel};
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

fn float_measure(model: LieGroupModel, coords: &[[f64; 3]], weights: &[f64]) -> FinSuppMeasure {
    let atoms = coords.iter().map(|c| AlgebraVector::new(model, &c[..model.dim()]).unwrap().exp()).collect();
    FinSuppMeasure::new(model, atoms, weights.iter().map(|&w| Weight::Float(w)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posterior_is_a_local_probability_vector(
        pts in prop::collection::vec(prop::array::uniform3(-0.2f64..0.2), 1..6),
        z in prop::array::uniform3(-1.0f64..1.0),
        which in 0usize..6,
    ) {
        let model = LieGroupModel::SO3;
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let mu = float_measure(model, &pts, &w);
        let k = SmoothingKernel::new(model, 2.0, 0.05).unwrap();
        // an observation that certainly has positive density
        let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let y = mu.atoms()[which % mu.len()].multiply(&AlgebraVector::new(model, &z.map(|v| 0.09 * v / zn)).unwrap().exp()).unwrap();
        let post = posterior_given_smoothed(&mu, &k, &y).unwrap();
        let total: f64 = post.entries.iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for &(i, p) in &post.entries {
            prop_assert!(p > 0.0);
            prop_assert!(mu.atoms()[i].distance(&y).unwrap().lower_bound() <= 2.0 * k.support_radius());
        }
    }
}

#[test]
fn conditional_laws_of_products_convolve() {
    // condition c ∈ {0, 1}; given c, g and h are independent
    let gs = [sl2([1, 2, 0, 1]), sl2([1, 0, 2, 1]), sl2([1, 1, 0, 1])];
    let law_g = [[q(1) / q(2), q(1) / q(2), q(0)], [q(1) / q(4), q(0), q(3) / q(4)]];
    let law_h = [[q(0), q(1) / q(3), q(2) / q(3)], [q(1), q(0), q(0)]];
    let p_c = [q(2) / q(5), q(3) / q(5)];
    for c in 0..2 {
        // joint enumeration of (c, g, h), then conditioning by division
        let mut joint: BTreeMap<Vec<BigRational>, BigRational> = BTreeMap::new();
        let mut p_cond = BigRational::zero();
        for (i, g) in gs.iter().enumerate() {
            for (j, h) in gs.iter().enumerate() {
                let p = &p_c[c] * &law_g[c][i] * &law_h[c][j];
                if p.is_zero() {
                    continue;
                }
                p_cond += p.clone();
                *joint.entry(exact_key(&g.multiply(h).unwrap())).or_insert_with(BigRational::zero) += p;
            }
        }
        let by_enumeration: BTreeMap<_, _> = joint.into_iter().map(|(k, p)| (k, p / &p_cond)).collect();

        let measure = |w: &[BigRational; 3]| {
            let (atoms, ws): (Vec<GroupElement>, Vec<Weight>) =
                gs.iter().zip(w).filter(|(_, p)| !p.is_zero()).map(|(g, p)| (g.clone(), Weight::Exact(p.clone()))).unzip();
            FinSuppMeasure::new(LieGroupModel::SL2R, atoms, ws).unwrap()
        };
        let conv = convolve(&measure(&law_g[c]), &measure(&law_h[c])).unwrap();
        assert_eq!(common::exact_law(&conv), by_enumeration);
    }
}

#[test]
fn conditioning_reduces_trace() {
    let cases = [
        (LieGroupModel::Abelian(1), vec![[0.0; 3], [0.2, 0.0, 0.0]], vec![0.5, 0.5]),
        (LieGroupModel::Abelian(2), vec![[0.0; 3], [0.1, 0.1, 0.0], [-0.1, 0.05, 0.0]], vec![0.2, 0.3, 0.5]),
        (LieGroupModel::SO3, vec![[0.0; 3], [0.1, 0.0, 0.05], [0.0, -0.1, 0.0]], vec![0.4, 0.3, 0.3]),
        (LieGroupModel::SL2R, vec![[0.0; 3], [0.05, 0.0, 0.0], [0.0, 0.0, 0.05]], vec![0.5, 0.25, 0.25]),
    ];
    for (i, (model, pts, w)) in cases.into_iter().enumerate() {
        let mu = float_measure(model, &pts, &w);
        let k2 = SmoothingKernel::new(model, 2.0, 0.05).unwrap();
        let est = conditional_trace(&mu, &k2, 20_000, &RngStream::new(i as u64, 0)).unwrap();
        let total = (0..mu.len()).map(|j| trace_about(&mu.atoms()[j], &mu).unwrap()).fold(f64::INFINITY, f64::min);
        assert!(est.value <= total + 4.0 * est.std_error, "{model}: {} vs {total}", est.value);
    }
}

#[test]
fn witness_matches_quadrature() {
    for r in [0.02, 0.05] {
        let mu = float_measure(LieGroupModel::Abelian(1), &[[0.0; 3], [3.0 * r, 0.0, 0.0]], &[0.5, 0.5]);
        let w = trace_at_scale_witness(&mu, 3.0, r, 40_000, &RngStream::new(6, 0)).unwrap();
        assert!(w.t > 0.0);
        let scale = w.radius * w.radius;
        let oracle = conditional_trace_1d(&[0.0, 3.0 * r], &[0.5, 0.5], 3.0, 2.0 * r);
        assert!((w.t * scale - oracle).abs() <= 4.0 * w.std_error * scale, "{} vs {oracle}", w.t * scale);
    }
}
