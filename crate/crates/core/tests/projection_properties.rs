use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinphonon::projection::{project, scale_to_field, svd_coupling, RawVibrationalModel, DEFAULT_RANK_TOL};

fn random_model(seed: u64, m: usize) -> RawVibrationalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs = (0..m).map(|_| rng.gen_range(20.0..1600.0)).collect();
    let coupling = DMatrix::from_fn(3, m, |_, _| rng.gen_range(-2.0..2.0));
    RawVibrationalModel::new(freqs, coupling, 1.0).unwrap()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn projection_invariants(seed in any::<u64>(), m in 3usize..=50) {
        let model = random_model(seed, m);
        let res = project(&model, DEFAULT_RANK_TOL).unwrap();
        let p = res.num_primary();
        prop_assert_eq!(p, 3);

        // orthogonality
        let r = &res.rotation;
        prop_assert!((r.transpose() * r - DMatrix::identity(m, m)).amax() < 1e-10);

        // spin couples only to primaries
        let projected = &model.coupling_cm1 * r;
        prop_assert!(projected.columns(p, m - p).amax() < 1e-10);
        prop_assert!((projected.columns(0, p) - &res.primary_couplings_cm1).amax() < 1e-10);

        // spectrum of the rotated force constants equals {ω_n²}
        let k = res.force_constants();
        let got = sorted(SymmetricEigen::new(k).eigenvalues.iter().copied().collect());
        let want = sorted(model.frequencies_cm1.iter().map(|w| w * w).collect());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8 * w, "{g} vs {w}");
        }

        // Frobenius norm of the coupling is preserved
        let before = model.coupling_cm1.norm_squared();
        let after = res.primary_couplings_cm1.norm_squared();
        prop_assert!((before - after).abs() < 1e-10 * before.max(1.0));

        // residual block is diagonal (no residual-residual coupling)
        let diag_q: DMatrix<f64> = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            m - p,
            res.residual_freqs_cm1.iter().map(|w| w * w),
        ));
        let kq = (r.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            m,
            model.frequencies_cm1.iter().map(|w| w * w),
        )) * r).view((p, p), (m - p, m - p)).into_owned();
        prop_assert!((kq - diag_q).amax() < 1e-8 * 1600.0f64.powi(2));

        // deterministic
        prop_assert_eq!(project(&model, DEFAULT_RANK_TOL).unwrap(), res);
    }

    #[test]
    fn singular_values_match_gram_spectrum(seed in any::<u64>(), m in 3usize..=40) {
        let model = random_model(seed, m);
        let svd = svd_coupling(&model.coupling_cm1).unwrap();
        let gram = &model.coupling_cm1 * model.coupling_cm1.transpose();
        let eig = sorted(SymmetricEigen::new(gram).eigenvalues.iter().copied().collect());
        let sq = sorted(svd.singular_values.iter().map(|s| s * s).collect());
        for (a, b) in eig.iter().zip(&sq) {
            prop_assert!((a - b).abs() < 1e-10 * eig[2].max(1.0));
        }
        prop_assert!((svd.reconstruct() - &model.coupling_cm1).amax() < 1e-12);
        for col in svd.v.column_iter() {
            let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            prop_assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn field_scaling_is_linear(seed in any::<u64>(), factor in 0.1f64..300.0) {
        let model = random_model(seed, 8);
        let res = project(&model, DEFAULT_RANK_TOL).unwrap();
        let scaled = scale_to_field(&res, factor, 1.0).unwrap();
        prop_assert_eq!(&scaled.primary_freqs_cm1, &res.primary_freqs_cm1);
        prop_assert_eq!(&scaled.bilinear_couplings_cm2, &res.bilinear_couplings_cm2);
        prop_assert!((scaled.primary_couplings_cm1 - &res.primary_couplings_cm1 * factor).amax() < 1e-12 * factor);
    }
}

#[test]
fn rank_deficient_coupling_gives_fewer_primaries() {
    // only x and y rows carry coupling
    let freqs = vec![100.0, 150.0, 220.0, 300.0, 410.0];
    let g = DMatrix::from_row_slice(3, 5, &[1.0, 0.5, 0.0, 0.2, 0.1, 0.0, 0.3, 0.7, 0.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let res = project(&RawVibrationalModel::new(freqs, g, 1.0).unwrap(), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(res.num_primary(), 2);
    assert_eq!(res.num_residual(), 3);
}

#[test]
fn diagonal_three_mode_fixture_has_no_residual_bath() {
    let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5]);
    let res = project(&RawVibrationalModel::new(vec![195.0, 240.0, 320.0], g, 1.0).unwrap(), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(res.num_primary(), 3);
    assert_eq!(res.num_residual(), 0);
    let mut freqs = res.primary_freqs_cm1.clone();
    freqs.sort_by(f64::total_cmp);
    for (a, b) in freqs.iter().zip([195.0, 240.0, 320.0]) {
        assert!((a - b).abs() < 1e-9);
    }
}
