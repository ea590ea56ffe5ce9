use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::solver::Momentum;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

fn quick() -> TrainOptions {
    TrainOptions {
        infer_opts: SolverOptions {
            max_iter: 300,
            tol: 1e-10,
            momentum: Momentum::Fista,
            ..SolverOptions::default()
        },
        ..TrainOptions::default()
    }
}

#[test]
fn single_sample_is_learned_by_one_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = randn(&mut rng, 16);
    let samples = vec![x.clone(); 400];
    let model = train_sparse_coding(&samples, 1, 0.1, &quick()).unwrap();
    let col = model.w.column(0);
    let cos = col.dot(&x) / x.dot(&x).sqrt();
    assert!(cos.abs() >= 0.99, "cos = {cos}");
}

#[test]
fn columns_stay_unit_after_every_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = init_dictionary(9, 12, &mut rng).unwrap();
    let a = init_pooling(12, 4, &mut rng).unwrap();
    let model = Model::new(ModelKind::Unified, w, Some(a), 0.5, 0.3, 2).unwrap();
    let mut trainer = Trainer::new(model, TrainOptions { learning_rate: 0.5, ..quick() }).unwrap();
    for _ in 0..100 {
        let frames = vec![randn(&mut rng, 9), randn(&mut rng, 9)];
        trainer.unified_step(&frames).unwrap();
        let m = trainer.model();
        assert!(m.w.max_norm_deviation() <= 1e-9);
        let a = m.a.as_ref().unwrap();
        assert!(a.max_norm_deviation() <= 1e-9);
        assert!(a.min_entry() >= 0.0);
    }
    assert_eq!(trainer.model().step, 100);
}

#[test]
fn pooling_is_unchanged_when_no_invariant_unit_fires() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layer1 = Model::new(ModelKind::SplitLayer1, init_dictionary(6, 8, &mut rng).unwrap(), None, 0.5, 0.0, 1).unwrap();
    let pooled: Vec<Array1<f64>> = (0..50).map(|_| randn(&mut rng, 8).mapv(f64::abs)).collect();
    let opts = quick();
    let model = train_invariant(&pooled, &layer1, 3, 1e6, &opts).unwrap();
    let initial = init_pooling(8, 3, &mut ChaCha8Rng::seed_from_u64(opts.seed)).unwrap();
    let diff = model.a.as_ref().unwrap().matrix() - initial.matrix();
    assert!(diff.iter().all(|d| d.abs() < 1e-14));
}

#[test]
fn pooling_stays_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer1 = Model::new(ModelKind::SplitLayer1, init_dictionary(6, 8, &mut rng).unwrap(), None, 0.5, 0.0, 1).unwrap();
    let a = init_pooling(8, 3, &mut rng).unwrap();
    let model = Model::new(ModelKind::SplitLayer2, layer1.w.clone(), Some(a), 0.5, 0.05, 1).unwrap();
    let mut trainer = Trainer::new(model, TrainOptions { learning_rate: 1.0, ..quick() }).unwrap();
    let mut fired = 0;
    for _ in 0..200 {
        let zs = randn(&mut rng, 8).mapv(|v| 3.0 * v.abs());
        let before = trainer.model().a.clone();
        trainer.invariant_step(&zs).unwrap();
        let a = trainer.model().a.as_ref().unwrap();
        assert!(a.min_entry() >= 0.0);
        assert!(a.max_norm_deviation() <= 1e-9);
        if before.as_ref() != Some(a) {
            fired += 1;
        }
    }
    assert!(fired > 0);
}

#[test]
fn unified_with_silent_invariant_layer_matches_sparse_coding() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Array1<f64>> = (0..60).map(|_| randn(&mut rng, 10)).collect();
    let opts = TrainOptions {
        seed: 9,
        infer_opts: SolverOptions {
            max_iter: 200,
            tol: 1e-8,
            ..SolverOptions::default()
        },
        ..TrainOptions::default()
    };
    let mut init = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = init_dictionary(10, 14, &mut init).unwrap();
    let a = init_pooling(14, 4, &mut init).unwrap();
    let mut sparse = Trainer::new(
        Model::new(ModelKind::SplitLayer1, w.clone(), None, 0.4, 0.0, 1).unwrap(),
        opts.clone(),
    )
    .unwrap();
    let mut joint = Trainer::new(Model::new(ModelKind::Unified, w, Some(a), 0.4, 1e9, 1).unwrap(), opts.clone()).unwrap();
    for x in &samples {
        sparse.sparse_step(x).unwrap();
        joint.unified_step(std::slice::from_ref(x)).unwrap();
        let d = sparse.model().w.matrix() - joint.model().w.matrix();
        assert!(d.iter().all(|v| v.abs() <= 1e-10));
    }
    // The entry points agree with the trainers.
    let direct = train_sparse_coding(&samples, 14, 0.4, &opts).unwrap();
    assert_eq!(&direct.w, &sparse.into_model().w);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let seqs: Vec<Vec<Array1<f64>>> = (0..40).map(|_| vec![randn(&mut rng, 8), randn(&mut rng, 8)]).collect();
    let opts = quick();
    let a = train_unified(&seqs, 10, 3, 0.5, 0.3, &opts).unwrap();
    let b = train_unified(&seqs, 10, 3, 0.5, 0.3, &opts).unwrap();
    assert_eq!(a, b);

    let half = train_unified(&seqs[..20], 10, 3, 0.5, 0.3, &opts).unwrap();
    let mut bytes = Vec::new();
    write_model(&half, &mut bytes).unwrap();
    let restored = read_model(bytes.as_slice()).unwrap();
    assert_eq!(restored, half);
    let mut trainer = Trainer::new(restored, opts).unwrap();
    for s in &seqs[20..] {
        trainer.unified_step(s).unwrap();
    }
    assert_eq!(trainer.into_model(), a);
}

#[test]
fn batches_average_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<Array1<f64>> = (0..30).map(|_| randn(&mut rng, 6)).collect();
    let opts = TrainOptions { batch: 10, ..quick() };
    let model = train_sparse_coding(&samples, 5, 0.3, &opts).unwrap();
    assert_eq!(model.step, 3);
    assert!(model.w.max_norm_deviation() <= 1e-9);
}

#[test]
fn corrupt_model_files_are_rejected_with_diagnostics() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = Model::new(ModelKind::SplitLayer1, init_dictionary(4, 3, &mut rng).unwrap(), None, 0.5, 0.0, 1).unwrap();
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes).unwrap();
    assert_eq!(read_model(bytes.as_slice()).unwrap(), model);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_model(bad.as_slice()), Err(Error::Format(m)) if m.contains("magic")));
    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(read_model(bad.as_slice()), Err(Error::Format(m)) if m.contains("version")));
    let truncated = &bytes[..bytes.len() - 5];
    assert!(matches!(read_model(truncated), Err(Error::Format(m)) if m.contains("truncated")));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(read_model(long.as_slice()), Err(Error::Format(m)) if m.contains("trailing")));
}

#[test]
fn full_mask_inpainting_is_plain_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let w = init_dictionary(12, 20, &mut rng).unwrap();
    let model = Model::new(ModelKind::SplitLayer1, w, None, 0.2, 0.0, 1).unwrap();
    let x = randn(&mut rng, 12);
    let opts = SolverOptions {
        max_iter: 5000,
        tol: 1e-14,
        momentum: Momentum::Fista,
        ..SolverOptions::default()
    };
    let recon = inpaint(&model, &x, &[true; 12], &opts).unwrap();
    let codes = infer(&model, std::slice::from_ref(&x), &opts).unwrap();
    let plain = model.w.matrix().dot(&codes.z[0]);
    assert!((&recon - &plain).iter().all(|d| d.abs() < 1e-9));
    assert!(inpaint(&model, &x, &[false; 12], &opts).is_err());
}

#[test]
fn a_dictionary_atom_is_recovered_from_partial_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = init_dictionary(50, 30, &mut rng).unwrap();
    let x = w.column(7).to_owned() * 3.0;
    let model = Model::new(ModelKind::SplitLayer1, w, None, 0.01, 0.0, 1).unwrap();
    let observed: Vec<bool> = (0..50).map(|i| i % 5 != 0).collect();
    let opts = SolverOptions {
        max_iter: 20_000,
        tol: 1e-14,
        momentum: Momentum::Fista,
        ..SolverOptions::default()
    };
    let rms = inpaint_rms(&model, &x, &observed, &opts).unwrap();
    assert!(rms <= 0.05, "hidden rms {rms}");
}

#[test]
fn model_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = init_dictionary(4, 3, &mut rng).unwrap();
    let a = init_pooling(3, 2, &mut rng).unwrap();
    assert!(Model::new(ModelKind::SplitLayer1, w.clone(), Some(a.clone()), 0.5, 0.3, 1).is_err());
    assert!(Model::new(ModelKind::Unified, w.clone(), None, 0.5, 0.3, 1).is_err());
    assert!(Model::new(ModelKind::Unified, w.clone(), Some(a.clone()), 0.5, 0.0, 1).is_err());
    assert!(Model::new(ModelKind::Unified, w.clone(), Some(a), 0.0, 0.3, 1).is_err());
    let wrong = init_pooling(5, 2, &mut rng).unwrap();
    assert!(Model::new(ModelKind::Unified, w.clone(), Some(wrong), 0.5, 0.3, 1).is_err());
    assert!(TrainOptions { learning_rate: 0.0, ..TrainOptions::default() }.validate().is_err());
    assert!(TrainOptions { batch: 0, ..TrainOptions::default() }.validate().is_err());
    let model = Model::new(ModelKind::SplitLayer1, w, None, 0.5, 0.0, 1).unwrap();
    let mut t = Trainer::new(model, TrainOptions::default()).unwrap();
    assert!(t.invariant_step(&Array1::zeros(3)).is_err());
}

#[test]
fn learning_rate_decays() {
    let o = TrainOptions::default();
    assert_eq!(o.rate(0), 0.1);
    assert!((o.rate(10_000) - 0.05).abs() < 1e-15);
    assert_eq!(TrainOptions { decay: 0.0, ..o }.rate(1_000_000), 0.1);
}
