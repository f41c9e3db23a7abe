use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use spheroest::model::{folded_polar_cdf, polar_cdf, polar_quantile};
use spheroest::qle::{from_phi, to_phi};
use spheroest::rng::rng_from_seed;
use spheroest::sectioning::intersect;
use spheroest::study::{ks_test_mc, rmse};
use spheroest::unfold::{em_unfold, BinningSpec, EmConfig, Histogram3D, KernelMatrix};
use spheroest::{ModelParams, SectionPlane, Spheroid};

fn params() -> impl Strategy<Value = ModelParams> {
    (-4.0..2.0f64, -3.0..3.0f64, 0.01..2.0f64, 0.01..2.0f64, -0.95..0.95f64, 0.05..20.0f64)
        .prop_map(|(a, b, c, d, e, f)| ModelParams::new(a, b, c, d, e, f).unwrap())
}

fn unit() -> impl Strategy<Value = [f64; 3]> {
    (0.0..1.0f64, 0.0..2.0 * PI).prop_map(|(u, phi)| {
        let z = 2.0 * u - 1.0;
        let r = (1.0 - z * z).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    })
}

proptest! {
    #[test]
    fn phi_round_trip(p in params()) {
        let back = from_phi(&to_phi(&p)).unwrap();
        let (a, b) = (p.to_array(), back.to_array());
        for k in 0..6 {
            prop_assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
        }
    }

    #[test]
    fn sections_are_bounded_by_the_spheroid(
        center in prop::array::uniform3(-2.0..2.0f64),
        axis in unit(),
        a in 0.01..3.0f64,
        s in 0.01..1.0f64,
    ) {
        let sph = Spheroid::new(center, axis, a, a * s).unwrap();
        if let Some(e) = intersect(&sph, &SectionPlane::vertical()) {
            prop_assert!(e.minor <= sph.c * (1.0 + 1e-12) && e.major <= sph.a * (1.0 + 1e-12));
            prop_assert!(e.minor <= e.major);
            prop_assert!(e.shape > 0.0 && e.shape <= 1.0);
            prop_assert!((0.0..=FRAC_PI_2).contains(&e.alpha));
        }
    }

    #[test]
    fn polar_quantile_inverts_the_cdf(beta in 0.05..50.0f64, q in 1e-6..(1.0 - 1e-6)) {
        let t = polar_quantile(beta, q).unwrap();
        prop_assert!((0.0..=PI).contains(&t));
        prop_assert!((polar_cdf(beta, t).unwrap() - q).abs() < 1e-12);
    }

    #[test]
    fn folded_cdf_is_monotone(beta in 0.05..50.0f64, a in 0.0..FRAC_PI_2, b in 0.0..FRAC_PI_2) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (f_lo, f_hi) = (folded_polar_cdf(beta, lo).unwrap(), folded_polar_cdf(beta, hi).unwrap());
        prop_assert!(f_lo <= f_hi && (0.0..=1.0).contains(&f_lo) && f_hi <= 1.0);
    }

    #[test]
    fn em_is_monotone_and_stays_a_probability_vector(
        seed in any::<u64>(),
        counts in prop::collection::vec(0u32..50, 8),
    ) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        use rand::Rng;
        let binning = BinningSpec::new(2, 2, 2, 1.0).unwrap();
        let n = binning.len();
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| 0.05 + rng.random::<f64>()).collect()).collect();
        let kernel = KernelMatrix::from_dense(binning, &rows).unwrap();
        let g = Histogram3D::from_values(binning, counts.iter().map(|&c| c as f64).collect(), false).unwrap();
        let em = em_unfold(&g, &kernel, &EmConfig { max_iter: 200, rel_tol: 0.0 }).unwrap();
        for w in em.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0));
        }
        prop_assert!((em.h.values.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(em.h.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rmse_is_scale_equivariant(
        errors in prop::collection::vec(prop::array::uniform6(-5.0..5.0f64), 1..30),
        scale in -10.0..10.0f64,
    ) {
        let truth = [1.0, -2.0, 0.5, 0.3, 0.0, 4.0];
        let shift = |e: &[f64; 6], k: f64| -> [f64; 6] { std::array::from_fn(|i| truth[i] + k * e[i]) };
        let base = rmse(&errors.iter().map(|e| shift(e, 1.0)).collect::<Vec<_>>(), &truth).unwrap();
        let scaled = rmse(&errors.iter().map(|e| shift(e, scale)).collect::<Vec<_>>(), &truth).unwrap();
        for k in 0..6 {
            prop_assert!(base[k] >= 0.0);
            prop_assert!((scaled[k] - scale.abs() * base[k]).abs() <= 1e-9 * (1.0 + base[k] * scale.abs()));
        }
        let exact = rmse(&vec![truth; errors.len()], &truth).unwrap();
        prop_assert!(exact.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ks_p_values_lie_on_the_rank_grid(seed in any::<u64>(), m in 19usize..60, shift in 0.0..1.0f64) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let data: Vec<f64> = (0..40).map(|_| rng.random::<f64>() + shift).collect();
        let t = ks_test_mc(&data, |r| Ok((0..40).map(|_| r.random::<f64>()).collect()), m, &mut rng).unwrap();
        let k = t.p_value * (m + 1) as f64;
        prop_assert!((k - k.round()).abs() < 1e-9);
        prop_assert!(k.round() >= 1.0 && k.round() <= (m + 1) as f64);
        prop_assert!((0.0..=1.0).contains(&t.statistic));
    }
}
