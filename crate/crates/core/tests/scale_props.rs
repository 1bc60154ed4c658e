use liescale::scales::{geometric_grid, log_integral, select_scales, TraceProfile};
use proptest::prelude::*;

/// Random increasing grid whose log spacing never exceeds `max_step`.
fn grid(max_step: f64) -> impl Strategy<Value = Vec<f64>> {
    (0.01f64..10.0, prop::collection::vec(0.05f64..1.0, 8..80))
        .prop_map(move |(u1, steps)| steps.iter().scan(u1, |u, s| { let v = *u; *u *= (s * max_step).exp(); Some(v) }).collect())
}

fn profile(grid: Vec<f64>, values: Vec<f64>) -> TraceProfile {
    let n = grid.len();
    TraceProfile::new(grid, values, vec![0.0; n], 1.0, "synthetic").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn selection_respects_spacing_and_guarantee(
        a_factor in 1.1f64..4.0,
        (g, values) in grid(1.0).prop_flat_map(|g| { let n = g.len(); (Just(g), prop::collection::vec(0.0f64..1.0, n)) }),
    ) {
        let g: Vec<f64> = g.iter().map(|u| u.powf(a_factor.ln())).collect();
        let p = profile(g.clone(), values);
        let Ok(sel) = select_scales(&p, a_factor) else {
            prop_assert!(g[g.len() - 1] / g[0] <= a_factor * a_factor);
            return Ok(());
        };
        prop_assert!(sel.spacing_holds());
        prop_assert!(sel.scales.iter().all(|s| (g[0]..=g[g.len() - 1]).contains(s)));
        prop_assert!(sel.max_log_spacing <= a_factor.ln() * (1.0 + 1e-12));
        let bound = log_integral(&p) / (4.0 * a_factor.ln());
        prop_assert!(sel.trace_sum >= bound * (1.0 - 1e-12), "{} < {bound}", sel.trace_sum);
        prop_assert_eq!(sel.slack, 0.0);
    }

    #[test]
    fn spacing_holds_on_coarse_grids(
        a_factor in 1.1f64..4.0,
        (g, values) in grid(3.0).prop_flat_map(|g| { let n = g.len(); (Just(g), prop::collection::vec(0.0f64..1.0, n)) }),
    ) {
        if let Ok(sel) = select_scales(&profile(g, values), a_factor) {
            prop_assert!(sel.spacing_holds());
        }
    }

    #[test]
    fn log_integral_is_monotone(
        lo in 0.01f64..1.0, k in 8usize..64,
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 64),
    ) {
        let g = geometric_grid(lo, lo * 50.0, k);
        let small: Vec<f64> = pairs[..k].iter().map(|p| p.0 * p.1).collect();
        let big: Vec<f64> = pairs[..k].iter().map(|p| p.0).collect();
        prop_assert!(log_integral(&profile(g.clone(), small)) <= log_integral(&profile(g, big)));
    }
}
