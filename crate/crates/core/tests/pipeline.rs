use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinv_core::analysis::ResponseGrid;
use spinv_core::experiments::{
    held_out_sequences, random_mask, random_unified, synthetic_images, train_split, training_sequences, width_summary, VideoSetup,
};
use spinv_core::learning::{infer, inpaint, read_model, train_unified, write_model};
use spinv_core::solver::{check_stationarity, solve_hierarchical};
use spinv_core::{CodeState, ModelKind, SolverOptions};

fn small_setup() -> VideoSetup {
    VideoSetup {
        n_train: 80,
        code_dim: 16,
        inv_dim: 4,
        n_images: 2,
        image_size: 48,
        ..VideoSetup::default()
    }
}

#[test]
fn split_pipeline_survives_a_save_and_reload() {
    let setup = small_setup();
    let images = synthetic_images(&setup).unwrap();
    let run = train_split(&training_sequences(&images, &setup).unwrap(), &setup).unwrap();
    assert_eq!(run.layer2.kind, ModelKind::SplitLayer2);
    assert_eq!(run.pooled.len(), setup.n_train);

    let mut bytes = Vec::new();
    write_model(&run.layer2, &mut bytes).unwrap();
    let back = read_model(bytes.as_slice()).unwrap();

    let opts = &setup.train.infer_opts;
    for frames in held_out_sequences(&images, &setup, 5).unwrap() {
        let a = infer(&run.layer2, &frames, opts).unwrap();
        let b = infer(&back, &frames, opts).unwrap();
        assert_eq!(a, b);
        assert!(a.u.unwrap().iter().all(|&v| v >= 0.0));
    }

    let grid = ResponseGrid::uniform((-6.0, 6.0), 13, 8, 1.0);
    let (widths, simple, invariant) = width_summary(&run.layer2, &grid, opts).unwrap();
    assert_eq!(simple.len(), setup.code_dim);
    assert_eq!(invariant.len(), setup.inv_dim);
    assert!(widths.simple.iter().flatten().all(|w| w.is_finite() && *w >= 0.0));
}

#[test]
fn converged_unified_codes_are_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = SolverOptions {
        max_iter: 20_000,
        tol: 1e-14,
        ..SolverOptions::fista()
    };
    for _ in 0..20 {
        let h = random_unified(&mut rng).unwrap().to_hierarchical();
        let (state, trace) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), &opts).unwrap();
        assert!(trace.final_energy() <= trace.initial_energy);
        for a in 0..h.len() {
            assert!(check_stationarity(&h, &state.z, a, 1e-4).unwrap(), "layer {a}");
        }
    }
}

#[test]
fn hidden_pixels_do_not_leak_into_inpainting() {
    let setup = small_setup();
    let images = synthetic_images(&setup).unwrap();
    let seqs = training_sequences(&images, &setup).unwrap();
    let model = train_unified(&seqs[..20], 16, 4, setup.alpha, setup.beta, &setup.train).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Array1<f64> = seqs[0][0].clone();
    let observed = random_mask(x.len(), 0.4, &mut rng).unwrap();
    let mut scrambled = x.clone();
    for (v, &seen) in scrambled.iter_mut().zip(&observed) {
        if !seen {
            *v = 100.0;
        }
    }
    let opts = &setup.train.infer_opts;
    assert_eq!(inpaint(&model, &x, &observed, opts).unwrap(), inpaint(&model, &scrambled, &observed, opts).unwrap());
}
