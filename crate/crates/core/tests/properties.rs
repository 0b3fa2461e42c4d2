use nalgebra::DMatrix;
use proptest::prelude::*;
use tai_core::deep::{fit_classifier, pca_projection};
use tai_core::dp::{dp_perturb, dp_quantile, DpParams};
use tai_core::io::{decode_classifier, encode_classifier, json_number, load_matrix_csv, write_matrix_csv};
use tai_core::mm::{choose_bandwidths, kernel_matrix, KernelParams};
use tai_core::pipeline::{build_subspace_maps, default_subspace_dim};

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e3f64..1e3, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trip(m in matrix(1..=12, 1..=6), scale in -20i32..20) {
        let m = m * 10f64.powi(scale);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&m, &path).unwrap();
        let back = load_matrix_csv(&path).unwrap();
        write_matrix_csv(&back, &path).unwrap();
        let again = load_matrix_csv(&path).unwrap();
        for (a, b) in m.iter().zip(again.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn json_numbers_keep_nine_digits(x in prop::num::f64::NORMAL) {
        let v = json_number(x).as_f64().unwrap();
        prop_assert!((v - x).abs() <= 5e-9 * x.abs());
        prop_assert_eq!(json_number(v).as_f64().unwrap(), v);
    }

    #[test]
    fn quantile_is_odd_and_monotone(k in 1u64..(1 << 31), k2 in 1u64..(1 << 31), eps in 0.01f64..10.0, delta in 0.0f64..0.5) {
        let p = DpParams::new(1.0, eps, delta).unwrap();
        let (r, r2) = (k as f64 / (1u64 << 32) as f64, k2 as f64 / (1u64 << 32) as f64);
        prop_assert_eq!(dp_quantile(1.0 - r, &p).unwrap(), -dp_quantile(r, &p).unwrap());
        let (lo, hi) = if r <= r2 { (r, r2) } else { (r2, r) };
        prop_assert!(dp_quantile(lo, &p).unwrap() <= dp_quantile(hi, &p).unwrap());
    }

    #[test]
    fn perturbation_is_seeded(m in matrix(1..=8, 1..=4), seed in any::<u64>()) {
        let p = DpParams::new(1.0, 1.0, 1e-3).unwrap();
        prop_assert_eq!(dp_perturb(&m, &p, seed), dp_perturb(&m, &p, seed));
        let clean = DpParams::new(1.0, f64::INFINITY, 1e-3).unwrap();
        prop_assert_eq!(dp_perturb(&m, &clean, seed), m);
    }

    #[test]
    fn pca_rows_orthonormal(m in matrix(2..=20, 1..=12), frac in 0.0f64..1.0) {
        let k = 1 + ((m.ncols() - 1) as f64 * frac) as usize;
        let p = pca_projection(&m, k).unwrap();
        let dev = (&p * p.transpose() - DMatrix::identity(k, k)).abs().max();
        prop_assert!(dev <= 1e-8, "deviation {}", dev);
    }

    #[test]
    fn gram_matrices_are_psd(x in matrix(1..=30, 1..=5), s2 in 0.01f64..100.0) {
        let k = KernelParams::new(s2, choose_bandwidths(&x), 2.1).unwrap();
        let g = kernel_matrix(&x, &x, &k).unwrap();
        prop_assert!((&g - g.transpose()).abs().max() == 0.0);
        prop_assert!(g.symmetric_eigenvalues().min() >= -1e-8 * g.trace());
        prop_assert!(g.diagonal().iter().all(|&d| (d - s2).abs() <= 1e-12 * s2));
    }

    #[test]
    fn alignment_identity_and_contraction(src in matrix(4..=15, 2..=6), tgt in matrix(4..=15, 1..=6), y in prop::collection::vec(-10f64..10.0, 6)) {
        let n_st = default_subspace_dim(src.ncols(), tgt.ncols()).min(src.ncols()).min(tgt.ncols());
        let maps = build_subspace_maps(&src, &tgt, n_st).unwrap();
        let y = &y[..tgt.ncols()];
        let out = tai_core::pipeline::align_target(y, &maps).unwrap();
        if src.ncols() == tgt.ncols() {
            prop_assert_eq!(out, y.to_vec());
        } else {
            let n_in: f64 = y.iter().map(|v| v * v).sum();
            let n_out: f64 = out.iter().map(|v| v * v).sum();
            prop_assert!(n_out <= n_in * (1.0 + 1e-10) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn classifier_labels_and_persistence(a in matrix(4..=12, 2..=3), shift in 5.0f64..50.0, seed in any::<u64>()) {
        let b = a.add_scalar(shift);
        let model = fit_classifier(&[a.clone(), b], a.ncols(), 0.5, 2, seed).unwrap();
        let labels = model.classify_batch(&a).unwrap();
        prop_assert!(labels.iter().all(|&l| l == 1 || l == 2));
        for i in 0..a.nrows() {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            prop_assert_eq!(model.classify(&row).unwrap(), labels[i]);
        }
        let bytes = encode_classifier(&model);
        prop_assert_eq!(&decode_classifier(&bytes).unwrap(), &model);
    }
}
