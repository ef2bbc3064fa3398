use kcdm_core::contourlet::{build_filter_bank, decompose, reconstruct};
use kcdm_core::numerics::{pca_fit, pca_inverse, pca_transform, reflect_index, sample_complex_gaussian, ComplexImage, RngStream};
use kcdm_core::polsar::{from_channels, is_hermitian_psd, multilook, pauli_vectorize, to_channels, CoherencyField, ScatteringSample};
use kcdm_core::Complex;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contourlet_reconstructs_any_size(h in 16usize..40, w in 16usize..40, levels in 1usize..4, j in 1u32..4, seed in 0u64..1000) {
        let bank = build_filter_bank(levels, j, h, w).unwrap();
        let x: ComplexImage<f64> = sample_complex_gaussian((h, w, 2), &mut RngStream::new(seed)).unwrap();
        let p = decompose(&x, &bank).unwrap();
        prop_assert_eq!(p.subbands().count(), 1 + levels * (1 << j));
        prop_assert!(reconstruct(&p).unwrap().max_abs_diff(&x) <= 1e-10);
    }

    #[test]
    fn reflect_index_stays_in_range(i in -200isize..200, n in 2isize..50) {
        let r = reflect_index(i, n);
        prop_assert!((r as isize) < n);
        if (0..n).contains(&i) {
            prop_assert_eq!(r as isize, i);
        }
    }

    #[test]
    fn multilook_is_hermitian_psd(looks in 1usize..12, seed in 0u64..1000) {
        let mut rng = RngStream::new(seed);
        let vs: Vec<_> = (0..looks)
            .map(|_| {
                let mut z = || Complex::new(rng.normal(), rng.normal());
                pauli_vectorize(&ScatteringSample { s_hh: z(), s_hv: z(), s_vv: z() })
            })
            .collect();
        let t = multilook(&vs).unwrap();
        prop_assert!(is_hermitian_psd(&t, 1e-10, 1e-9));
        let field = CoherencyField { height: 1, width: 1, looks: looks as u8, t: vec![t] };
        let back = from_channels(&to_channels(&field), field.looks).unwrap();
        prop_assert!((back.t[0] - t).norm() <= 1e-12);
    }

    #[test]
    fn full_rank_pca_round_trips(n in 12usize..40, dim in 2usize..6, seed in 0u64..1000) {
        let mut rng = RngStream::new(seed);
        let samples: Vec<f64> = (0..n * dim).map(|_| rng.normal()).collect();
        let model = pca_fit(&samples, dim, dim).unwrap();
        let z = pca_transform(&model, &samples).unwrap();
        let back = pca_inverse(&model, &z).unwrap();
        for (a, b) in back.iter().zip(&samples) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
