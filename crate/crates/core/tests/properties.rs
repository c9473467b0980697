use kdpinn::metrics::{accuracy, pearson, transfer_bounds, TransferBoundInputs};
use kdpinn::net::{mac_count, LayerSpec};
use kdpinn::perf::{
    amdahl_bound, combined_bound, median, memory_bound_cap, roofline_factor, SpeedupBounds,
};
use kdpinn::sampling::SobolStream;
use proptest::prelude::*;

fn values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, n)
}

proptest! {
    #[test]
    fn combined_bound_never_exceeds_its_parts(r in 1.0f64..1e3, f in 0.0f64..0.99, factor in 0.0f64..4.0) {
        let s = combined_bound(r, f, factor).unwrap();
        let a = amdahl_bound(r, f).unwrap();
        prop_assert!(s <= r * (1.0 + 1e-15));
        prop_assert!(s <= a * (1.0 + 1e-15));
        prop_assert!(s <= r * factor.min(1.0) + 1e-12);
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn amdahl_is_monotone_and_capped(r in 1.0f64..1e3, dr in 0.0f64..10.0, f in 0.001f64..0.99) {
        let a = amdahl_bound(r, f).unwrap();
        let b = amdahl_bound(r + dr, f).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-15));
        prop_assert!(a <= 1.0 / f * (1.0 + 1e-12));
        prop_assert!(a >= 1.0 - 1e-15);
    }

    #[test]
    fn roofline_factor_is_one_for_equal_intensity(ai in 1e-3f64..1e3, bw in 1e-2f64..1e3, peak in 1e-2f64..1e4) {
        prop_assert!((roofline_factor(ai, ai, bw, peak).unwrap() - 1.0).abs() < 1e-15);
        prop_assert!(memory_bound_cap(ai, ai).unwrap() == 1.0);
    }

    #[test]
    fn bounds_from_specs_use_mac_ratio(h1 in 1usize..64, h2 in 1usize..64, f in 0.0f64..0.5) {
        let t = LayerSpec::tanh(&[2, h1.max(h2), h1.max(h2), 1]);
        let s = LayerSpec::tanh(&[2, h1.min(h2), h1.min(h2), 1]);
        let hw = kdpinn::perf::HardwareParams { f, ..Default::default() };
        let b = SpeedupBounds::for_specs(&t, &s, &hw).unwrap();
        prop_assert!((b.r_flops - mac_count(&t) as f64 / mac_count(&s) as f64).abs() < 1e-12);
        prop_assert!(b.s_max <= b.r_flops + 1e-12);
    }

    #[test]
    fn median_ignores_order(v in values(1..60)) {
        let m = median(&v).unwrap();
        let mut rev = v.clone();
        rev.reverse();
        let mut rot = v.clone();
        rot.rotate_left(v.len() / 3);
        prop_assert_eq!(median(&rev).unwrap(), m);
        prop_assert_eq!(median(&rot).unwrap(), m);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn median_splits_the_sample(v in values(1..60)) {
        let m = median(&v).unwrap();
        let below = v.iter().filter(|&&x| x < m).count();
        let above = v.iter().filter(|&&x| x > m).count();
        prop_assert!(below <= v.len() / 2 && above <= v.len() / 2);
    }

    #[test]
    fn accuracy_is_permutation_invariant(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..80), k in 0usize..80) {
        let (p, r): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let a = accuracy(&p, &r).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.rotate_left(k % pairs.len());
        shuffled.swap(0, pairs.len() - 1);
        let (ps, rs): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let b = accuracy(&ps, &rs).unwrap();
        prop_assert!((a.rmse - b.rmse).abs() <= 1e-12 * a.rmse.max(1.0));
        prop_assert_eq!(a.n_points, b.n_points);
        prop_assert!(a.rmse >= 0.0);
    }

    #[test]
    fn rel_l2_is_scale_invariant(pairs in prop::collection::vec((-1e2f64..1e2, 1.0f64..1e2), 1..50), k in 1e-3f64..1e3) {
        let (p, r): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let a = accuracy(&p, &r).unwrap().rel_l2.unwrap();
        let ps: Vec<f64> = p.iter().map(|x| k * x).collect();
        let rs: Vec<f64> = r.iter().map(|x| k * x).collect();
        let b = accuracy(&ps, &rs).unwrap().rel_l2.unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
    }

    #[test]
    fn pearson_is_bounded_and_symmetric(a in values(2..40), b in values(2..40)) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ab = pearson(a, b).unwrap();
        prop_assert_eq!(ab, pearson(b, a).unwrap());
        if let Some(rho) = ab {
            prop_assert!((-1.0..=1.0).contains(&rho));
        }
    }

    #[test]
    fn transfer_bounds_grow_with_each_input(
        eps_t in 0.0f64..1.0, delta_t in 0.0f64..1.0, eps_d in 0.0f64..1.0,
        l in 0.0f64..100.0, kappa in 0.1f64..10.0, d in 0.0f64..1.0,
    ) {
        let base = TransferBoundInputs { eps_t, delta_t, eps_d, lipschitz: l, kappa };
        let b0 = transfer_bounds(&base).unwrap();
        let b1 = transfer_bounds(&TransferBoundInputs { eps_d: eps_d + d, ..base }).unwrap();
        prop_assert!(b1.residual_bound >= b0.residual_bound);
        prop_assert!(b1.error_bound >= b0.error_bound);
        prop_assert!(b0.error_bound >= eps_t);
    }

    #[test]
    fn scrambled_points_stay_in_the_unit_cube(seed in any::<u64>(), dim in 1usize..=3, n in 1usize..300) {
        let pts = SobolStream::new(dim, seed).unwrap().next_points(n).unwrap();
        prop_assert!(pts.iter().all(|&x| (0.0..1.0).contains(&x)));
    }
}
