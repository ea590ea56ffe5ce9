use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use spinv_core::analysis::{
    grouping_report, response_maps, RateKind, ResponseGrid, ResponseMap, UnitKind,
};
use spinv_core::datagen::read_pgm;
use spinv_core::experiments::{
    beta_sweep, compare_inpainting, descent_table, held_out_sequences, monotone_table, nondecreasing, prepare_images,
    random_mask, rate_table, run_toy, stream_rng, synthetic_images, toy_inpainting, training_sequences, InpaintSummary,
    SplitRun, ToyMode, VideoSetup,
};
use spinv_core::learning::{
    initial_invariant_model, initial_unified_model, load_model, pooled_codes, save_model, train_sparse_coding, Model,
    ModelKind, Trainer,
};

use crate::config::RunConfig;
use crate::output::{num, opt, write_csv, write_mosaic};
use crate::{CliError, Outcome};

fn mode(cfg: &RunConfig) -> Result<ToyMode, CliError> {
    match cfg.raw("mode") {
        "split" => Ok(ToyMode::Split),
        "unified" => Ok(ToyMode::Unified),
        other => Err(CliError::Usage(format!("bad mode `{other}`; expected split or unified"))),
    }
}

fn columns(model: &Model, units: impl IntoIterator<Item = usize>) -> Vec<Array1<f64>> {
    units.into_iter().map(|i| model.w.column(i).to_owned()).collect()
}

/// Filters of every simple unit, then one row per invariant unit with its
/// strongest `per_group` simple units.
fn write_filters(dir: &Path, model: &Model, per_group: usize) -> Result<(), CliError> {
    let per_row = (model.code_dim() as f64).sqrt().ceil() as usize;
    write_mosaic(&dir.join("filters.pgm"), &columns(model, 0..model.code_dim()), per_row)?;
    if model.a.is_some() {
        let report = grouping_report(model, per_group)?;
        let ordered = report.groups.iter().flat_map(|g| g.iter().map(|&(i, _)| i));
        write_mosaic(&dir.join("groups.pgm"), &columns(model, ordered), per_group.min(model.code_dim()))?;
    }
    Ok(())
}

pub fn toy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let setup = cfg.toy_setup()?;
    let mode = mode(cfg)?;
    let min_purity: f64 = cfg.get("min_purity")?;
    let dir = cfg.out_dir()?;
    let run = run_toy(&setup, mode)?;

    save_model(&run.model, &dir.join("model.bin"))?;
    write_filters(&dir, &run.model, setup.cfg.n_positions)?;
    let report = grouping_report(&run.model, setup.cfg.n_positions)?;
    write_csv(
        &dir.join("grouping.csv"),
        &["invariant_unit", "rank", "simple_unit", "weight", "orientation", "template_cosine"],
        report.groups.iter().enumerate().flat_map(|(j, group)| {
            let orientations = &run.orientations;
            group.iter().enumerate().map(move |(rank, &(i, w))| {
                vec![
                    j.to_string(),
                    rank.to_string(),
                    i.to_string(),
                    num(w),
                    orientations[i].0.to_string(),
                    num(orientations[i].1),
                ]
            })
        }),
    )?;
    write_csv(
        &dir.join("purity.csv"),
        &["unit", "frequency", "active", "orientation", "purity"],
        run.purity.frequencies.iter().enumerate().map(|(j, &f)| {
            let active = run.purity.active.iter().find(|u| u.unit == j);
            vec![
                j.to_string(),
                num(f),
                active.is_some().to_string(),
                active.map(|u| u.orientation.to_string()).unwrap_or_default(),
                opt(active.map(|u| u.purity)),
            ]
        }),
    )?;
    let passed = run.purity.passes(setup.cfg.n_orientations, min_purity);
    println!(
        "active invariant units: {} (want {}), lowest purity: {}",
        run.purity.n_active(),
        setup.cfg.n_orientations,
        opt(run.purity.active.iter().map(|u| u.purity).reduce(f64::min)),
    );
    Ok(Outcome::from_bool(passed))
}

/// Preprocessed training images: synthetic dead leaves, or every `.pgm`
/// file of `image_dir` in name order.
fn images(cfg: &RunConfig, setup: &VideoSetup) -> Result<Vec<Array2<f64>>, CliError> {
    match cfg.raw("source") {
        "leaves" => Ok(synthetic_images(setup)?),
        "images" => {
            let dir = cfg
                .path("image_dir")
                .ok_or_else(|| CliError::Usage("source = images needs image_dir".into()))?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| CliError::Usage(format!("cannot read image_dir {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::Usage(format!("no .pgm images in {}", dir.display())));
            }
            let raw = paths
                .iter()
                .map(|p| read_pgm(p).map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(prepare_images(&raw, setup)?)
        }
        other => Err(CliError::Usage(format!("bad source `{other}`; expected leaves or images"))),
    }
}

fn model_path(cfg: &RunConfig, dir: &Path) -> PathBuf {
    match cfg.raw("model") {
        "model.bin" => dir.join("model.bin"),
        other => PathBuf::from(other),
    }
}

/// Feeds samples `start..` of the epoch-concatenated stream to `step` until
/// the stream ends or `max_steps` updates have been applied in total.
fn run_stage(
    trainer: &mut Trainer,
    n_samples: usize,
    epochs: usize,
    max_steps: Option<u64>,
    mut step: impl FnMut(&mut Trainer, usize) -> spinv_core::error::Result<f64>,
) -> Result<(), CliError> {
    let batch = trainer.options().batch;
    let start = trainer.model().step as usize * batch;
    for position in start..n_samples * epochs {
        if max_steps.is_some_and(|m| trainer.model().step >= m) {
            break;
        }
        step(trainer, position % n_samples)?;
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let setup = cfg.video_setup()?;
    let mode = mode(cfg)?;
    let max_steps: Option<u64> = cfg.optional("max_steps")?;
    let dir = cfg.out_dir()?;
    let resume = cfg.path("resume").map(|p| load_model(&p)).transpose()?;
    let seqs = training_sequences(&images(cfg, &setup)?, &setup)?;
    let n_frames = setup.seq.n_frames;

    let model = match mode {
        ToyMode::Split => {
            let start = match resume {
                Some(m) if m.kind == ModelKind::SplitLayer2 => m,
                Some(m) => return Err(CliError::Usage(format!("cannot resume split training from a {:?} model", m.kind))),
                None => {
                    let frames: Vec<Array1<f64>> = seqs.iter().flatten().cloned().collect();
                    let mut layer1 = train_sparse_coding(&frames, setup.code_dim, setup.alpha, &setup.train)?;
                    layer1.n_frames = n_frames;
                    initial_invariant_model(&layer1, setup.inv_dim, setup.beta, setup.train.seed)?
                }
            };
            let layer1 = Model::new(ModelKind::SplitLayer1, start.w.clone(), None, start.alpha, 0.0, start.n_frames)?;
            let pooled = pooled_codes(&layer1, &seqs, &setup.train.infer_opts)?;
            let mut trainer = Trainer::new(start, setup.pooling_train())?;
            run_stage(&mut trainer, pooled.len(), setup.pooling_epochs, max_steps, |t, i| {
                t.invariant_step(&pooled[i])
            })?;
            trainer.into_model()
        }
        ToyMode::Unified => {
            let start = match resume {
                Some(m) if m.kind == ModelKind::Unified => m,
                Some(m) => return Err(CliError::Usage(format!("cannot resume unified training from a {:?} model", m.kind))),
                None => initial_unified_model(
                    setup.seq.window * setup.seq.window,
                    setup.code_dim,
                    setup.inv_dim,
                    setup.alpha,
                    setup.beta,
                    n_frames,
                    setup.train.seed,
                )?,
            };
            let mut trainer = Trainer::new(start, setup.train.clone())?;
            run_stage(&mut trainer, seqs.len(), setup.train.epochs, max_steps, |t, i| t.unified_step(&seqs[i]))?;
            trainer.into_model()
        }
    };
    let path = model_path(cfg, &dir);
    save_model(&model, &path)?;
    write_filters(&dir, &model, 10)?;
    println!("wrote {} after {} updates", path.display(), model.step);
    Ok(Outcome::Passed)
}

fn selected_units(cfg: &RunConfig, n: usize) -> Result<Vec<usize>, CliError> {
    let units = match cfg.raw("units") {
        "all" => (0..n).collect(),
        "none" => Vec::new(),
        _ => cfg.list::<usize>("units")?,
    };
    if let Some(&bad) = units.iter().find(|&&u| u >= n) {
        return Err(CliError::Usage(format!("unit {bad} out of range (model has {n} simple units)")));
    }
    Ok(units)
}

fn response_rows(maps: &[ResponseMap]) -> impl Iterator<Item = Vec<String>> + '_ {
    maps.iter().flat_map(|m| {
        let kind = match m.kind {
            UnitKind::Simple => "simple",
            UnitKind::Invariant => "invariant",
        };
        m.grid.indexed_iter().map(move |((ib, it), &v)| {
            vec![
                kind.to_string(),
                m.unit_id.to_string(),
                num(m.b_samples[ib]),
                num(m.theta_samples[it]),
                if v.is_nan() { String::new() } else { num(v) },
            ]
        })
    })
}

fn median_width(maps: &[ResponseMap]) -> Option<f64> {
    spinv_core::analysis::median(&maps.iter().filter_map(ResponseMap::tuning_width).collect::<Vec<_>>())
}

pub fn responses(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = cfg.out_dir()?;
    let grid = ResponseGrid::uniform(
        (cfg.get("b_min")?, cfg.get("b_max")?),
        cfg.get("b_steps")?,
        cfg.get("theta_steps")?,
        cfg.get("k")?,
    );
    let opts = cfg.solver()?;
    let min_ratio: f64 = cfg.get("min_width_ratio")?;
    let betas: Vec<f64> = cfg.list("beta_sweep")?;
    let path = model_path(cfg, &dir);
    let model = load_model(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;

    let units = selected_units(cfg, model.code_dim())?;
    let inv_units: Vec<usize> = match model.inv_dim() {
        Some(m) => units.iter().copied().filter(|&u| u < m).collect(),
        None => Vec::new(),
    };
    let simple = response_maps(&model, UnitKind::Simple, &units, &grid, &opts)?;
    let invariant = if inv_units.is_empty() {
        Vec::new()
    } else {
        response_maps(&model, UnitKind::Invariant, &inv_units, &grid, &opts)?
    };
    write_csv(
        &dir.join("responses.csv"),
        &["kind", "unit", "b", "theta", "response"],
        response_rows(&simple).chain(response_rows(&invariant)),
    )?;
    write_csv(
        &dir.join("widths.csv"),
        &["kind", "unit", "width"],
        simple
            .iter()
            .map(|m| ("simple", m))
            .chain(invariant.iter().map(|m| ("invariant", m)))
            .map(|(kind, m)| vec![kind.to_string(), m.unit_id.to_string(), opt(m.tuning_width())]),
    )?;

    let (simple_median, invariant_median) = (median_width(&simple), median_width(&invariant));
    let ratio = match (invariant_median, simple_median) {
        (Some(i), Some(s)) if s > 0.0 => Some(i / s),
        _ => None,
    };
    // Nothing to compare without maps of both kinds.
    let mut passed = invariant.is_empty() || ratio.is_some_and(|r| r >= min_ratio);
    write_csv(
        &dir.join("summary.csv"),
        &["simple_median_width", "invariant_median_width", "ratio", "required_ratio"],
        [vec![opt(simple_median), opt(invariant_median), opt(ratio), num(min_ratio)]],
    )?;
    println!(
        "median width: simple {}, invariant {}, ratio {} (required {min_ratio})",
        opt(simple_median),
        opt(invariant_median),
        opt(ratio)
    );

    if !betas.is_empty() {
        let setup = cfg.video_setup()?;
        let seqs = training_sequences(&images(cfg, &setup)?, &setup)?;
        let layer1 = Model::new(ModelKind::SplitLayer1, model.w.clone(), None, model.alpha, 0.0, model.n_frames)?;
        let pooled = pooled_codes(&layer1, &seqs, &setup.train.infer_opts)?;
        let inv_dim = model.inv_dim().unwrap_or(setup.inv_dim);
        let run = SplitRun {
            layer2: model.clone(),
            layer1,
            pooled,
        };
        let rows = beta_sweep(&run, &betas, inv_dim, &setup.pooling_train(), &grid, &opts)?;
        write_csv(
            &dir.join("beta_sweep.csv"),
            &["beta", "overlap", "responding_units"],
            rows.iter()
                .map(|r| vec![num(r.beta), num(r.overlap), r.n_responding.to_string()]),
        )?;
        let mut by_beta: Vec<_> = rows.iter().map(|r| (r.beta, r.overlap)).collect();
        by_beta.sort_by(|a, b| b.0.total_cmp(&a.0));
        let trend = nondecreasing(&by_beta.iter().map(|r| r.1).collect::<Vec<_>>());
        println!("overlap nondecreasing as beta decreases: {trend}");
        passed &= trend;
    }
    Ok(Outcome::from_bool(passed))
}

pub fn bench(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = cfg.out_dir()?;
    let seed: u64 = cfg.get("seed")?;
    let n: usize = cfg.get("instances")?;
    let iterations: usize = cfg.get("iterations")?;
    let pairs: usize = cfg.get("descent_pairs")?;
    let mut passed = true;

    let mut rate_rows = Vec::new();
    for (name, kind) in [("fista", RateKind::Fista), ("ista", RateKind::Ista)] {
        let rows = rate_table(n, seed, kind, iterations)?;
        let holding = rows.iter().filter(|r| r.holds).count();
        println!("{name} rate bound: {holding}/{} instances", rows.len());
        passed &= holding == rows.len();
        rate_rows.extend(rows.into_iter().map(|r| {
            vec![
                name.to_string(),
                r.instance.to_string(),
                r.rows.to_string(),
                r.cols.to_string(),
                r.holds.to_string(),
                num(r.worst_ratio),
                r.worst_k.to_string(),
            ]
        }));
    }
    write_csv(
        &dir.join("rates.csv"),
        &["method", "instance", "rows", "cols", "holds", "worst_ratio", "worst_k"],
        rate_rows,
    )?;

    let descent = descent_table(pairs, seed)?;
    let holding = descent.iter().filter(|r| r.holds).count();
    println!("descent lemma: {holding}/{} sampled pairs", descent.len());
    passed &= holding == descent.len();
    write_csv(
        &dir.join("descent.csv"),
        &["family", "instance", "slack", "holds"],
        descent
            .iter()
            .map(|r| vec![r.family.to_string(), r.instance.to_string(), num(r.slack), r.holds.to_string()]),
    )?;

    let monotone = monotone_table(n, seed, iterations)?;
    let holding = monotone.iter().filter(|r| r.monotone).count();
    println!("monotone descent: {holding}/{} runs", monotone.len());
    passed &= holding == monotone.len();
    write_csv(
        &dir.join("monotone.csv"),
        &["family", "instance", "max_increase", "monotone"],
        monotone.iter().map(|r| {
            vec![
                r.family.to_string(),
                r.instance.to_string(),
                num(r.max_increase),
                r.monotone.to_string(),
            ]
        }),
    )?;
    Ok(Outcome::from_bool(passed))
}

pub fn inpaint(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ratio: f64 = cfg.get("mask_ratio")?;
    let n_patches: usize = cfg.get("n_patches")?;
    let seed: u64 = cfg.get("seed")?;
    let opts = cfg.solver()?;
    let dir = cfg.out_dir()?;
    let paths = (cfg.path("one_layer_model"), cfg.path("two_layer_model"));

    let summary: InpaintSummary = match paths {
        (None, None) => {
            let setup = cfg.toy_setup()?;
            check_mask(setup.cfg.pixels(), ratio)?;
            toy_inpainting(&setup, n_patches, ratio)?
        }
        (Some(one), Some(two)) => {
            let load = |p: &Path| load_model(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
            let (one, two) = (load(&one)?, load(&two)?);
            if one.input_dim() != two.input_dim() {
                return Err(CliError::Usage(format!(
                    "models disagree on patch size: {} vs {} pixels",
                    one.input_dim(),
                    two.input_dim()
                )));
            }
            check_mask(one.input_dim(), ratio)?;
            let mut setup = cfg.video_setup()?;
            setup.seq.window = (one.input_dim() as f64).sqrt().round() as usize;
            if setup.seq.window * setup.seq.window != one.input_dim() {
                return Err(CliError::Usage("in-painting needs square patches".into()));
            }
            let imgs = images(cfg, &setup)?;
            let seqs = held_out_sequences(&imgs, &setup, n_patches)?;
            let patches: Vec<Array1<f64>> = seqs.into_iter().map(|s| s[0].clone()).collect();
            compare_inpainting(&one, &two, &patches, ratio, seed, &opts)?
        }
        _ => return Err(CliError::Usage("give both one_layer_model and two_layer_model, or neither".into())),
    };
    write_csv(
        &dir.join("inpaint.csv"),
        &["patch", "one_layer_rms", "two_layer_rms"],
        summary
            .rows
            .iter()
            .map(|r| vec![r.index.to_string(), num(r.one_layer), num(r.two_layer)]),
    )?;
    write_csv(
        &dir.join("inpaint_summary.csv"),
        &["mask_ratio", "patches", "median_one_layer_rms", "median_two_layer_rms"],
        [vec![
            num(ratio),
            summary.rows.len().to_string(),
            num(summary.median_one_layer),
            num(summary.median_two_layer),
        ]],
    )?;
    println!(
        "median hidden-pixel RMS: one layer {}, two layers {}",
        num(summary.median_one_layer),
        num(summary.median_two_layer)
    );
    Ok(Outcome::from_bool(summary.two_layer_wins()))
}

/// Rejects a mask ratio that would hide every pixel before any work is done.
fn check_mask(pixels: usize, ratio: f64) -> Result<(), CliError> {
    random_mask(pixels, ratio, &mut stream_rng(0, 0))
        .map(|_| ())
        .map_err(|e| CliError::Usage(format!("mask_ratio {ratio}: {e}")))
}
