mod common;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use steerers::descriptor::{describe, upsift_steerer, DescriptorMatrix};
use steerers::error::Error;
use steerers::fit::{
    eval_match_likelihood, fit_generator, fit_steerer_orthogonal, prune_by_eigenvalue, recover_orthogonal_from_gram,
    CorrespondenceBatch, PruneSource, Relation, TAU_GRAM,
};
use steerers::group_reps::{
    build_fixed_generator, build_fixed_steerer, decompose_irreps, exp_generator, steerer_power, FixedGeneratorKind,
    FixedSteererKind, GroupKind, PlanarRotation, Steerer,
};
use steerers::image::rotate_image_quarter;
use steerers::keypoints::{detect_keypoints, rotate_keypoints};
use steerers::matcher::MatcherConfig;

use common::*;

fn batch_from(truth: &Steerer, steps: &[i64], n_each: usize, seed: u64) -> CorrespondenceBatch {
    let mut r = rng(seed);
    let d = truth.dim();
    let mut batch = CorrespondenceBatch::new();
    for &k in steps {
        let x = unit_columns(gaussian(d, n_each, &mut r));
        let after = steerer_power(truth, k) * &x;
        batch
            .push(DescriptorMatrix::new(x), DescriptorMatrix::new(after), Relation::Steps(k))
            .unwrap();
    }
    batch
}

fn angle_batch(gen: &DMatrix<f64>, degrees: &[f64], n_each: usize, seed: u64) -> CorrespondenceBatch {
    let g = steerers::group_reps::LieGenerator::new(gen.clone()).unwrap();
    let mut r = rng(seed);
    let d = gen.nrows();
    let mut batch = CorrespondenceBatch::new();
    for &deg in degrees {
        let a = deg.to_radians();
        let x = unit_columns(gaussian(d, n_each, &mut r));
        let after = exp_generator(&g, a).unwrap() * &x;
        batch
            .push(DescriptorMatrix::new(x), DescriptorMatrix::new(after), Relation::Angle(a))
            .unwrap();
    }
    batch
}

#[test]
fn plant_and_recover_all_kinds_and_dimensions() {
    for d in [4, 8, 64, 128, 256] {
        for kind in [FixedSteererKind::Inv, FixedSteererKind::Freq1, FixedSteererKind::Perm] {
            let truth = build_fixed_steerer(kind, d).unwrap();
            let fit = fit_steerer_orthogonal(&batch_from(&truth, &[1], d + 4, d as u64), 4).unwrap();
            assert!((fit.steerer.matrix() - truth.matrix()).norm() < 1e-8, "{kind:?} D={d}");
            assert!(fit.orthogonality_defect < 1e-10);
            assert!(fit.residual < 1e-10);
        }
    }
}

#[test]
fn freq1_generator_is_recovered_from_three_angles() {
    let truth = build_fixed_generator(FixedGeneratorKind::Freq1, 16, false).unwrap();
    let fit = fit_generator(&angle_batch(truth.matrix(), &[10.0, 20.0, 30.0], 24, 5)).unwrap();
    assert!((fit.generator.matrix() - truth.matrix()).norm() < 1e-6);
    assert_eq!(fit.per_angle.len(), 3);
}

#[test]
fn spread_generator_frequencies_survive_fitting() {
    let truth = build_fixed_generator(FixedGeneratorKind::Spread, 256, false).unwrap();
    let degrees: Vec<f64> = (1..=17).map(|i| 10.0 * i as f64).collect();
    let fit = fit_generator(&angle_batch(truth.matrix(), &degrees, 260, 8)).unwrap();
    let hist = decompose_irreps(fit.generator.matrix(), GroupKind::So2Generator)
        .unwrap()
        .frequency_histogram();
    let mut want = BTreeMap::from([(0, 40)]);
    for j in 1..=6 {
        want.insert(j, 36);
    }
    assert_eq!(hist, want);
    assert!((fit.generator.matrix() - truth.matrix()).norm() < 1e-6);
}

#[test]
fn angles_beyond_pi_are_ambiguous() {
    let truth = build_fixed_generator(FixedGeneratorKind::Freq1, 4, false).unwrap();
    let err = fit_generator(&angle_batch(truth.matrix(), &[30.0, 190.0], 8, 1)).unwrap_err();
    assert!(matches!(err, Error::BranchAmbiguity { .. }), "{err}");
}

#[test]
fn likelihood_closed_form_for_orthonormal_columns() {
    let n = 3;
    let y = DescriptorMatrix::normalized(DMatrix::identity(n, n)).unwrap();
    let cfg = MatcherConfig::default();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let nll = eval_match_likelihood(&y, &y, &DMatrix::identity(n, n), 0, &pairs, &cfg).unwrap();
    // Y = I: each softmax is e^ι / (e^ι + n − 1)
    let iota: f64 = 20.0;
    let denom = iota.exp() + (n as f64 - 1.0);
    let want = 2.0 * (denom.ln() - iota);
    assert!((nll - want).abs() < 1e-12, "{nll} vs {want}");
}

#[test]
fn upsift_likelihood_is_smallest_at_true_power() {
    let p = upsift_steerer();
    let cfg = MatcherConfig::default();
    for (name, img) in bundled_textures().iter().take(3) {
        let kps = detect_keypoints(img, 64);
        let y1 = describe(img, &kps).unwrap();
        for true_k in 0..4 {
            let rot = rotate_image_quarter(img, true_k).unwrap();
            let y2 = describe(&rot, &rotate_keypoints(&kps, &PlanarRotation::quarter(true_k))).unwrap();
            let pairs: Vec<(usize, usize)> = (0..y1.len()).map(|i| (i, i)).collect();
            let nll: Vec<f64> = (0..4)
                .map(|k| eval_match_likelihood(&y1, &y2, p.matrix(), k, &pairs, &cfg).unwrap())
                .collect();
            let best = nll[true_k as usize];
            assert!(nll.iter().all(|&v| best <= v), "{name} k={true_k}: {nll:?}");
        }
    }
}

#[test]
fn gram_recovery_reproduces_upsift_on_samples() {
    let p = upsift_steerer();
    let (_, img) = &bundled_textures()[5];
    let kps = detect_keypoints(img, 200);
    let a = describe(img, &kps).unwrap();
    let rot = rotate_image_quarter(img, 1).unwrap();
    let b = describe(&rot, &rotate_keypoints(&kps, &PlanarRotation::quarter(1))).unwrap();
    let rec = recover_orthogonal_from_gram(a.data(), b.data(), TAU_GRAM).unwrap();
    assert!((&rec.q * a.data() - p.matrix() * a.data()).amax() < 1e-9);
}

#[test]
fn gram_recovery_from_full_rank_samples_is_orthogonal() {
    for seed in 0..200 {
        for d in [2, 3, 5, 8] {
            let mut r = rng(seed);
            let q = random_orthogonal(d, &mut r);
            let a = gaussian(d, d, &mut r);
            let rec = recover_orthogonal_from_gram(&a, &(&q * &a), TAU_GRAM).unwrap();
            assert_eq!(rec.rank, d);
            assert!((&rec.q - &q).norm() < 1e-8, "seed {seed}, D={d}");
        }
    }
}

#[test]
fn full_pruning_preserves_cosines() {
    let d = 16;
    let s = build_fixed_steerer(FixedSteererKind::Perm, d).unwrap();
    let y = DescriptorMatrix::normalized(gaussian(d, 10, &mut rng(4))).unwrap();
    let pruned = prune_by_eigenvalue(s.matrix(), PruneSource::Steerer { group_order: 4 }, &y, 1.0).unwrap();
    assert_eq!(pruned.basis.shape(), (d, d));
    let before = y.data().tr_mul(y.data());
    let after = pruned.projected.data().tr_mul(pruned.projected.data());
    assert!((before - after).amax() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conjugated_steerers_are_recovered_with_mixed_steps(seed in 0u64..10_000, d4 in 1usize..8) {
        let d = 4 * d4;
        let q = random_orthogonal(d, &mut rng(seed));
        let perm = build_fixed_steerer(FixedSteererKind::Perm, d).unwrap();
        let truth = Steerer::new(&q * perm.matrix() * q.transpose(), 4).unwrap();
        let fit = fit_steerer_orthogonal(&batch_from(&truth, &[1, 2, 3, -1], d, seed + 1), 4).unwrap();
        prop_assert!((fit.steerer.matrix() - truth.matrix()).norm() < 1e-8);
        prop_assert!(fit.orthogonality_defect < 1e-10);
    }

    #[test]
    fn likelihood_is_minimized_at_true_power(seed in 0u64..10_000, true_k in 0usize..4) {
        let (d, n) = (16, 8);
        let s = build_fixed_steerer(FixedSteererKind::Perm, d).unwrap();
        let y1 = DescriptorMatrix::normalized(gaussian(d, n, &mut rng(seed))).unwrap();
        let y2 = DescriptorMatrix::normalized(steerer_power(&s, true_k as i64) * y1.data()).unwrap();
        let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        let cfg = MatcherConfig::default();
        let nll: Vec<f64> = (0..4)
            .map(|k| eval_match_likelihood(&y1, &y2, s.matrix(), k, &pairs, &cfg).unwrap())
            .collect();
        for (k, v) in nll.iter().enumerate() {
            if k != true_k {
                prop_assert!(nll[true_k] < *v, "{:?}", nll);
            }
        }
    }

    #[test]
    fn gram_recovery_maps_samples_and_fixes_complement(seed in 0u64..10_000, d in 3usize..12, m_frac in 0.2f64..1.0) {
        let mut r = rng(seed);
        let m = ((d as f64 * m_frac).ceil() as usize).clamp(1, d);
        let q = random_orthogonal(d, &mut r);
        let a = gaussian(d, m, &mut r);
        let b = &q * &a;
        let rec = recover_orthogonal_from_gram(&a, &b, TAU_GRAM).unwrap();
        let eye = DMatrix::<f64>::identity(d, d);
        prop_assert!((rec.q.tr_mul(&rec.q) - &eye).norm() < 1e-8);
        prop_assert!((&rec.q * &a - &b).norm() <= 1e-6 * (d as f64).sqrt());
        prop_assert!(rec.rank == m);

        // a rotation inside the sample span: the complement is left alone
        if m < d {
            let a2 = gaussian(d, m, &mut r);
            let u = a2.clone().qr().q();
            let inside = &u * random_orthogonal(m, &mut r) * u.transpose() + (&eye - &u * u.transpose());
            let b2 = &inside * &a2;
            let rec2 = recover_orthogonal_from_gram(&a2, &b2, TAU_GRAM).unwrap();
            let comp = (&eye - &u * u.transpose()) * gaussian(d, 1, &mut r);
            prop_assert!((&rec2.q * &comp - &comp).norm() < 1e-8 * (1.0 + comp.norm()));
            prop_assert!((&rec2.q - &inside).norm() < 1e-8);
        }
    }

    #[test]
    fn scaled_sample_violates_gram_hypothesis(seed in 0u64..10_000, d in 2usize..10) {
        let mut r = rng(seed);
        let a = gaussian(d, d, &mut r);
        let mut b = &random_orthogonal(d, &mut r) * &a;
        let c = b.column(0) * 2.0;
        b.set_column(0, &c);
        let is_violation = matches!(
            recover_orthogonal_from_gram(&a, &b, TAU_GRAM),
            Err(Error::HypothesisViolated { .. })
        );
        prop_assert!(is_violation);
    }
}
