use critex::evolve::{run, SolveConfig};
use critex::exponents::{gap_polynomial, p_star, verify_scaling_identities};
use critex::{derive, make_bump, BumpKind, Field, ForcingSpec, Grid, Params, Propagator};
use proptest::prelude::*;

/// Signed sum of Gaussians wide enough to be resolved on `g`.
fn smooth_field(g: &Grid, bumps: &[(f64, f64, f64, f64)]) -> Field {
    let mut values = vec![0.0; g.len()];
    for &(cx, cy, s, a) in bumps {
        let b = make_bump(g, BumpKind::Gaussian, &[cx, cy], s, a).unwrap();
        for (v, x) in values.iter_mut().zip(b.values()) {
            *v += x;
        }
    }
    Field::new(*g, values).unwrap()
}

fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 1.0..1.5f64, -2.0..2.0f64), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn supercritical_exponent_algebra(dim in 2u32..5, sigma in -0.95..-0.01f64, excess in 0.0..6.0f64) {
        let ps = p_star(dim, sigma);
        prop_assume!(!ps.is_infinite());
        let params = Params::new(dim, ps.value() + excess, sigma).unwrap();
        prop_assert!(gap_polynomial(&params) < 0.0);
        let d = derive(&params);
        let q = d.q_default.expect("window nonempty");
        let rep = verify_scaling_identities(&params, q).unwrap();
        prop_assert!(rep.all_hold(1e-12), "{rep:?}");
        prop_assert!(rep.ordering);
        prop_assert!(rep.q_gt_p);
    }

    #[test]
    fn p_star_increasing_in_sigma(dim in 3u32..6, a in -0.95..-0.01f64, b in -0.95..-0.01f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(p_star(dim, lo).value() < p_star(dim, hi).value());
        prop_assert!(p_star(dim, hi).value() < dim as f64 / (dim as f64 - 2.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norms_interpolate(b in bumps()) {
        let g = Grid::new(2, 8.0, 32).unwrap();
        let f = smooth_field(&g, &b);
        let (l1, l2, li) = (f.lr_norm(1.0).unwrap(), f.lr_norm(2.0).unwrap(), f.lr_norm(f64::INFINITY).unwrap());
        prop_assert_eq!(li, f.sup_norm());
        prop_assert!(l2 * l2 <= l1 * li * (1.0 + 1e-12));
    }

    #[test]
    fn heat_flow_contracts(b in bumps(), t in 1e-3..5.0f64) {
        let g = Grid::new(2, 16.0, 128).unwrap();
        let f = smooth_field(&g, &b);
        let prop = Propagator::new(g);
        for q in [1.0, 2.0, 3.5, f64::INFINITY] {
            prop_assert!(prop.verify_contraction(&f, t, q).unwrap(), "q = {q}, t = {t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn comparison_principle_and_determinism(
        a in 0.0..0.5f64,
        extra in 0.0..0.5f64,
        w_amp in 0.0..0.3f64,
        p in prop_oneof![Just(2.0), Just(3.0), 1.5..4.0f64],
    ) {
        let g = Grid::new(1, 8.0, 32).unwrap();
        let base = make_bump(&g, BumpKind::Gaussian, &[0.0], 1.5, 1.0).unwrap();
        let u0 = base.scaled(a).unwrap();
        let v0 = base.scaled(a + extra).unwrap();
        let w = ForcingSpec::new(base.scaled(w_amp).unwrap());
        let mut cfg = SolveConfig::new(Params::new(1, p, -0.5).unwrap(), 1.0);
        cfg.output_times = vec![0.5, 1.0];
        cfg.tol_step = 1e-9;
        let tu = run(&u0, &w, &cfg).unwrap();
        let tv = run(&v0, &w, &cfg).unwrap();
        for ((_, fu), (_, fv)) in tu.snapshots.iter().zip(&tv.snapshots) {
            for (x, y) in fu.values().iter().zip(fv.values()) {
                prop_assert!(*x <= *y + 1e-9 * (1.0 + y.abs()), "{x} > {y}");
            }
        }
        let again = run(&u0, &w, &cfg).unwrap();
        prop_assert_eq!(tu.times, again.times);
        prop_assert_eq!(tu.final_field.values(), again.final_field.values());
    }
}
