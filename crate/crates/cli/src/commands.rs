use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use scsr::baselines::{
    Baseline, BaselineFile, BlrModel, GamModel, GamlssFitOptions, GamlssModel, ParcelData,
    PopRefModel, BASELINE_FORMAT_VERSION, BLR_PRIOR_PRECISION, BRACKET_WIDTH_YEARS,
};
use scsr::cohort::{split_cohort, synth_cohort, Cohort, CohortConfig, Diagnosis};
use scsr::engine::mask::{MaskSampler, SamplingStrategy};
use scsr::engine::{self, Reconstructor, ScsrConfig};
use scsr::geometry::{build_icosphere, generate_parcellation, Parcellation};
use scsr::io::{self, MapSidecar, ModelMeta, MAP_FORMAT_VERSION};
use scsr::nn::{train, TrainConfig};
use scsr::ScsrError;

use crate::error::{CliError, CliResult};
use crate::grid::parse_grid;
use crate::layered::{flag, resolve, Resolved};
use crate::manifest::{manifest_path, Recorder};
use crate::report::{self, EvalOptions};
use crate::*;

pub fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let threads = cli.threads;
    engine::with_threads(threads, move || dispatch(cli.command, threads))?
}

fn dispatch(command: Command, threads: usize) -> CliResult<()> {
    match command {
        Command::MakeMesh(a) => make_mesh(a, threads),
        Command::Parcellate(a) => parcellate(a, threads),
        Command::Synth(a) => synth(a, threads),
        Command::Split(a) => split(a, threads),
        Command::Train(a) => train_model(a, threads),
        Command::Sigma(a) => sigma(a, threads),
        Command::Deviate(a) => deviate(a, threads),
        Command::Baseline(a) => baseline(a, threads),
        Command::Evaluate(a) => evaluate(a, threads),
        Command::Sweep(a) => sweep(a, threads),
    }
}

/// Relative output paths are placed under `SCSR_OUT_DIR` when it is set.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("SCSR_OUT_DIR") {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn strategy(s: StrategyArg) -> SamplingStrategy {
    match s {
        StrategyArg::Vertex => SamplingStrategy::Vertex,
        StrategyArg::Parcel => SamplingStrategy::Parcel,
    }
}

fn read_cohort(rec: &mut Recorder, path: &Path) -> CliResult<Cohort> {
    let c = io::read_cohort(path)?;
    rec.input(path)?;
    Ok(c)
}

fn read_parcellation(rec: &mut Recorder, path: Option<&Path>) -> CliResult<Option<Parcellation>> {
    path.map(|p| {
        let parc = io::read_parcellation(p)?;
        rec.input(p)?;
        Ok(parc)
    })
    .transpose()
}

fn read_model(rec: &mut Recorder, path: &Path) -> CliResult<scsr::nn::Mlp<f32>> {
    let (model, _) = io::read_model(path)?;
    rec.input(path)?;
    Ok(model)
}

fn write_text(rec: &mut Recorder, path: &Path, text: &str) -> CliResult<()> {
    io::write_atomic(path, text.as_bytes())?;
    rec.output(path)
}

fn make_mesh(a: MakeMeshArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("make-mesh", threads);
    let out = out_path(&a.out);
    let mesh = build_icosphere(a.order)?;
    io::write_mesh_ply(&out, &mesh, None)?;
    rec.config(&json!({ "order": a.order }), BTreeMap::new());
    rec.output(&out)?;
    rec.finish(&manifest_path(&out, None))?;
    println!(
        "{}: order {}, {} vertices, {} faces",
        out.display(),
        a.order,
        mesh.n_vertices(),
        mesh.faces.len()
    );
    Ok(())
}

fn parse_roi(spec: &str) -> CliResult<(String, BTreeSet<usize>)> {
    let bad = || CliError::usage(format!("invalid --roi {spec:?}, expected NAME=ID,ID,..."));
    let (name, ids) = spec.split_once('=').ok_or_else(bad)?;
    if name.is_empty() {
        return Err(bad());
    }
    let ids = ids
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<CliResult<BTreeSet<_>>>()?;
    Ok((name.to_string(), ids))
}

fn parcellate(a: ParcellateArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("parcellate", threads);
    let out = out_path(&a.out);
    let (mesh, _) = io::read_mesh_ply(&a.mesh)?;
    rec.input(&a.mesh)?;
    let mut parc = generate_parcellation(&mesh, a.k, a.seed)?;
    let rois = a
        .rois
        .iter()
        .map(|r| parse_roi(r))
        .collect::<CliResult<Vec<_>>>()?;
    for (name, ids) in &rois {
        parc = parc.define_roi(name, ids)?;
    }
    io::write_parcellation(&out, &parc)?;
    rec.config(&json!({ "k": a.k, "rois": parc.roi_sets }), BTreeMap::new());
    rec.seed("parcellation", a.seed);
    rec.output(&out)?;
    rec.output(&out.with_extension("json"))?;
    rec.finish(&manifest_path(&out, None))?;
    println!(
        "{}: {} parcels over {} vertices",
        out.display(),
        parc.k,
        parc.n_vertices()
    );
    Ok(())
}

fn synth(a: SynthArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("synth", threads);
    let out = out_path(&a.out);
    let (mesh, _) = io::read_mesh_ply(&a.mesh)?;
    rec.input(&a.mesh)?;
    let parc = read_parcellation(&mut rec, Some(&a.parcellation))?.expect("path given");
    let Resolved {
        mut value,
        mut sources,
    } = resolve::<CohortConfig>(a.config.as_deref(), vec![("seed", flag(&a.seed))])?;
    if sources.get("mesh_order") == Some(&"default") {
        value.mesh_order = mesh.order;
        sources.insert("mesh_order".into(), "mesh");
    }
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    let cohort = synth_cohort(&value, &mesh, &parc)?;
    io::write_cohort(&out, &cohort)?;
    rec.seed("cohort", value.seed);
    rec.config(&value, sources);
    rec.output(&out)?;
    rec.finish(&manifest_path(&out, None))?;
    let counts: Vec<String> = Diagnosis::ALL
        .iter()
        .filter(|d| cohort.count(**d) > 0)
        .map(|d| format!("{} {d}", cohort.count(*d)))
        .collect();
    println!(
        "{}: {} subjects ({})",
        out.display(),
        cohort.len(),
        counts.join(", ")
    );
    Ok(())
}

fn split(a: SplitArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("split", threads);
    let out_dir = out_path(&a.out_dir);
    let fractions: Vec<f64> = a
        .fractions
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("invalid --fractions {:?}", a.fractions)))?;
    let [f0, f1, f2] = fractions[..] else {
        return Err(CliError::usage(
            "--fractions needs three comma-separated values",
        ));
    };
    let cohort = read_cohort(&mut rec, &a.cohort)?;
    let (train, val, test) = split_cohort(&cohort, [f0, f1, f2], a.seed)?;
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let path = out_dir.join(format!("{name}.scb"));
        io::write_cohort(&path, part)?;
        rec.output(&path)?;
    }
    rec.config(&json!({ "fractions": [f0, f1, f2] }), BTreeMap::new());
    rec.seed("split", a.seed);
    rec.finish(&manifest_path(&out_dir, Some("split")))?;
    println!(
        "train {}, val {}, test {}",
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn train_model(a: TrainArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("train", threads);
    let out = out_path(&a.out);
    let Resolved {
        value: cfg,
        sources,
    } = resolve::<TrainConfig>(
        a.config.as_deref(),
        vec![
            ("epochs", flag(&a.epochs)),
            ("seed", flag(&a.seed)),
            ("lr", flag(&a.lr)),
            ("batch_size", flag(&a.batch_size)),
            ("hidden", flag(&a.hidden)),
            ("sampling_rate", flag(&a.sampling_rate)),
        ],
    )?;
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    let train_set = read_cohort(&mut rec, &a.train)?.filter_diagnosis(Diagnosis::CN);
    let val_set = read_cohort(&mut rec, &a.val)?.filter_diagnosis(Diagnosis::CN);
    let parc = read_parcellation(&mut rec, a.parcellation.as_deref())?;
    let sampler = MaskSampler::new(
        train_set.p(),
        cfg.sampling_rate,
        strategy(a.strategy),
        parc.as_ref(),
        a.exclude_roi.as_deref(),
    )?;
    let outcome = train(&train_set, &val_set, &cfg, &sampler)?;
    let meta = ModelMeta {
        train_config: Some(cfg.clone()),
        best_epoch: Some(outcome.best_epoch),
    };
    io::write_model(&out, &outcome.model, &meta)?;
    rec.seed("train", cfg.seed);
    rec.config(&cfg, sources);
    rec.manifest.extra = json!({
        "strategy": a.strategy,
        "excluded_roi": a.exclude_roi,
        "train_subjects": train_set.len(),
        "val_subjects": val_set.len(),
        "best_epoch": outcome.best_epoch,
        "history": outcome.history,
    });
    rec.output(&out)?;
    rec.finish(&manifest_path(&out, None))?;
    let best_loss = outcome
        .history
        .iter()
        .find(|e| e.epoch == outcome.best_epoch)
        .map_or(f64::NAN, |e| e.val_loss);
    println!(
        "{}: best epoch {} of {}, validation loss {best_loss:.6}",
        out.display(),
        outcome.best_epoch,
        outcome.history.len(),
    );
    Ok(())
}

fn scsr_config(
    recon: &ReconArgs,
    centile: Option<&CentileArgs>,
) -> CliResult<Resolved<ScsrConfig>> {
    resolve(
        recon.config.as_deref(),
        vec![
            ("sampling_rate", centile.and_then(|c| flag(&c.s))),
            ("centile", centile.and_then(|c| flag(&c.q))),
            ("iterations", flag(&recon.m)),
            ("base_seed", flag(&recon.seed)),
            ("strategy", flag(&recon.strategy)),
            ("excluded_roi", flag(&recon.exclude_roi)),
        ],
    )
}

fn sigma(a: SigmaArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("sigma", threads);
    let out = out_path(&a.out);
    let Resolved {
        value: cfg,
        sources,
    } = scsr_config(&a.recon, Some(&a.centile))?;
    let model = read_model(&mut rec, &a.model)?;
    let healthy = read_cohort(&mut rec, &a.val)?.filter_diagnosis(Diagnosis::CN);
    let parc = read_parcellation(&mut rec, a.recon.parcellation.as_deref())?;
    let reconstructor = Reconstructor::new(&model, parc.as_ref(), cfg.clone())?;
    let sigma = reconstructor.residual_sigma(&healthy)?;
    io::write_sigma(&out, &sigma)?;
    rec.seed("reconstruction", cfg.base_seed);
    rec.config(&cfg, sources);
    rec.manifest.extra = json!({ "healthy_subjects": healthy.len() });
    rec.output(&out)?;
    rec.finish(&manifest_path(&out, None))?;
    println!(
        "{}: sigma for {} vertices from {} subjects",
        out.display(),
        sigma.len(),
        healthy.len()
    );
    Ok(())
}

fn roi_lists(
    parc: Option<&Parcellation>,
    names: &[String],
) -> CliResult<Vec<(String, Vec<usize>)>> {
    if names.is_empty() {
        return Ok(Vec::new());
    }
    let parc = parc.ok_or_else(|| ScsrError::Config("--rois requires --parcellation".into()))?;
    names
        .iter()
        .map(|n| Ok((n.clone(), parc.roi_vertices(n)?)))
        .collect()
}

fn deviate(a: DeviateArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("deviate", threads);
    let out_dir = out_path(&a.out_dir);
    let Resolved {
        value: cfg,
        sources,
    } = scsr_config(&a.recon, Some(&a.centile))?;
    let model = read_model(&mut rec, &a.model)?;
    let sigma = io::read_sigma(&a.sigma)?;
    rec.input(&a.sigma)?;
    let cohort = read_cohort(&mut rec, &a.cohort)?;
    let parc = read_parcellation(&mut rec, a.recon.parcellation.as_deref())?;
    let rois = roi_lists(parc.as_ref(), &a.rois)?;
    let subjects = match &a.subject_id {
        Some(id) => {
            let s = cohort.find(id).ok_or_else(|| {
                ScsrError::Config(format!("subject {id:?} not in {}", a.cohort.display()))
            })?;
            cohort.with_subjects(vec![s.clone()])
        }
        None => cohort,
    };
    if let Some(bad) = subjects
        .subjects
        .iter()
        .find(|s| s.id.contains(['/', '\\']) || s.id.is_empty())
    {
        return Err(ScsrError::Config(format!(
            "subject id {:?} is not usable as a file name",
            bad.id
        ))
        .into());
    }
    let mesh = match &a.mesh {
        Some(p) => {
            let (mesh, _) = io::read_mesh_ply(p)?;
            rec.input(p)?;
            if mesh.n_vertices() != model.p() {
                return Err(ScsrError::Shape {
                    context: "mesh vertex count",
                    expected: model.p(),
                    actual: mesh.n_vertices(),
                }
                .into());
            }
            Some(mesh)
        }
        None => None,
    };

    let reconstructor = Reconstructor::new(&model, parc.as_ref(), cfg.clone())?;
    let maps = reconstructor.deviation_maps(&subjects, &sigma, &rois)?;
    let seeds: Vec<u64> = (0..cfg.iterations)
        .map(|i| engine::iteration_seed(cfg.base_seed, i))
        .collect();
    for map in &maps {
        let (csv, json_path) = io::map_paths(&out_dir, &map.subject_id);
        let sidecar = MapSidecar {
            format_version: MAP_FORMAT_VERSION,
            subject_id: map.subject_id.clone(),
            q: cfg.centile,
            s: cfg.sampling_rate,
            m: cfg.iterations,
            base_seed: cfg.base_seed,
            strategy: cfg.strategy,
            excluded_roi: cfg.excluded_roi.clone(),
            seeds: seeds.clone(),
            roi_means: map.roi_means.clone(),
            fallback_rows: map.fallback_rows.clone(),
        };
        io::write_map(&csv, map, &sidecar)?;
        rec.output(&csv)?;
        rec.output(&json_path)?;
        if let Some(mesh) = &mesh {
            let ply = out_dir.join(format!("{}.ply", map.subject_id));
            io::write_mesh_ply(&ply, mesh, Some(("z", &map.z)))?;
            rec.output(&ply)?;
        }
    }
    rec.seed("reconstruction", cfg.base_seed);
    rec.config(&cfg, sources);
    rec.finish(&manifest_path(&out_dir, Some("deviate")))?;
    println!("{}: {} deviation maps", out_dir.display(), maps.len());
    Ok(())
}

fn baseline(a: BaselineArgs, threads: usize) -> CliResult<()> {
    let (kind, cmd) = match a.kind {
        BaselineKind::Popref(c) => ("popref", c),
        BaselineKind::Gam(c) => ("gam", c),
        BaselineKind::Gamlss(c) => ("gamlss", c),
        BaselineKind::Blr(c) => ("blr", c),
    };
    match cmd.action {
        BaselineAction::Fit(f) => baseline_fit(kind, f, threads),
        BaselineAction::Apply(f) => baseline_apply(kind, f, threads),
    }
}

fn baseline_fit(kind: &str, a: BaselineFitArgs, threads: usize) -> CliResult<()> {
    let misplaced = [
        ("--bracket-width", a.bracket_width.is_some(), "popref"),
        ("--max-iterations", a.max_iterations.is_some(), "gamlss"),
        ("--tolerance", a.tolerance.is_some(), "gamlss"),
        ("--prior-precision", a.prior_precision.is_some(), "blr"),
    ];
    if let Some((name, _, owner)) = misplaced
        .iter()
        .find(|(_, given, owner)| *given && *owner != kind)
    {
        return Err(CliError::usage(format!(
            "{name} applies to {owner}, not {kind}"
        )));
    }
    let mut rec = Recorder::start(&format!("baseline {kind} fit"), threads);
    let out = out_path(&a.out);
    let healthy = read_cohort(&mut rec, &a.train)?.filter_diagnosis(Diagnosis::CN);
    let parc = read_parcellation(&mut rec, a.parcellation.as_deref())?;
    let parcel_data = || -> CliResult<ParcelData> {
        let parc = parc
            .as_ref()
            .ok_or_else(|| ScsrError::Config(format!("{kind} needs --parcellation")))?;
        Ok(ParcelData::from_cohort(&healthy, parc)?)
    };
    let (model, config) = match kind {
        "popref" => {
            let width = a.bracket_width.unwrap_or(BRACKET_WIDTH_YEARS);
            (
                Baseline::PopRef(PopRefModel::fit(&healthy, width)?),
                json!({ "bracket_width": width }),
            )
        }
        "gam" => (Baseline::Gam(GamModel::fit(&parcel_data()?)?), json!({})),
        "gamlss" => {
            let mut opts = GamlssFitOptions::default();
            if let Some(n) = a.max_iterations {
                opts.max_iterations = n;
            }
            if let Some(t) = a.tolerance {
                opts.tolerance = t;
            }
            let cfg = json!(opts);
            (
                Baseline::Gamlss(GamlssModel::fit(&parcel_data()?, opts)?),
                cfg,
            )
        }
        "blr" => {
            let prior = a.prior_precision.unwrap_or(BLR_PRIOR_PRECISION);
            (
                Baseline::Blr(BlrModel::fit(&parcel_data()?, prior)?),
                json!({ "prior_precision": prior }),
            )
        }
        _ => unreachable!("kinds come from the subcommand"),
    };
    io::write_baseline(
        &out,
        &BaselineFile {
            format_version: BASELINE_FORMAT_VERSION,
            model,
        },
    )?;
    rec.config(&config, BTreeMap::new());
    rec.manifest.extra = json!({ "healthy_subjects": healthy.len() });
    rec.output(&out)?;
    rec.finish(&manifest_path(&out, None))?;
    println!(
        "{}: {kind} fitted on {} subjects",
        out.display(),
        healthy.len()
    );
    Ok(())
}

fn baseline_apply(kind: &str, a: BaselineApplyArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start(&format!("baseline {kind} apply"), threads);
    let out = out_path(&a.out);
    let file = io::read_baseline(&a.model)?;
    rec.input(&a.model)?;
    if file.model.name() != kind {
        return Err(ScsrError::Config(format!(
            "{} holds a {} model, not {kind}",
            a.model.display(),
            file.model.name()
        ))
        .into());
    }
    let cohort = read_cohort(&mut rec, &a.cohort)?;
    let parc = read_parcellation(&mut rec, Some(&a.parcellation))?.expect("path given");
    let roi: Vec<usize> = parc
        .roi_sets
        .get(&a.roi)
        .ok_or_else(|| ScsrError::Config(format!("unknown ROI {:?}", a.roi)))?
        .iter()
        .copied()
        .collect();
    let mut text = String::from("subject_id,score,age_clamped\n");
    for s in &cohort.subjects {
        let scored = file.model.score(s, &parc)?;
        let z = file.model.roi_mean(&scored, &parc, &roi)?;
        writeln!(text, "{},{z},{}", s.id, scored.clamped).unwrap();
    }
    write_text(&mut rec, &out, &text)?;
    rec.config(&json!({ "roi": a.roi }), BTreeMap::new());
    rec.finish(&manifest_path(&out, None))?;
    println!("{}: {} scores", out.display(), cohort.len());
    Ok(())
}

fn read_scores(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let text = io::read_text(path)?;
    let malformed = |line: usize, what: &str| ScsrError::Malformed {
        path: path.to_path_buf(),
        detail: format!("line {line}: {what}"),
    };
    let mut lines = text.lines();
    if !lines
        .next()
        .is_some_and(|h| h.starts_with("subject_id,score"))
    {
        return Err(malformed(1, "expected header subject_id,score").into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut cols = l.split(',');
            let id = cols.next().unwrap_or_default().to_string();
            let score = cols
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| malformed(i + 2, "missing or non-numeric score"))?;
            Ok((id, score))
        })
        .collect()
}

fn read_map_scores(rec: &mut Recorder, dir: &Path, roi: &str) -> CliResult<Vec<(String, f64)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| ScsrError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(ScsrError::InsufficientData(format!("no maps in {}", dir.display())).into());
    }
    csvs.iter()
        .map(|p| {
            let (map, _) = io::read_map(p)?;
            rec.input(p)?;
            let z = map
                .roi_means
                .get(roi)
                .ok_or_else(|| ScsrError::Config(format!("{} has no ROI {roi:?}", p.display())))?;
            Ok((map.subject_id, *z))
        })
        .collect()
}

fn evaluate(a: EvaluateArgs, threads: usize) -> CliResult<()> {
    if a.name.contains([',', '\n']) {
        return Err(CliError::usage(
            "--name must not contain commas or newlines",
        ));
    }
    let mut rec = Recorder::start("evaluate", threads);
    let out = out_path(&a.out);
    let scores = match (&a.maps_dir, &a.scores) {
        (Some(dir), _) => read_map_scores(&mut rec, dir, &a.roi)?,
        (None, Some(path)) => {
            rec.input(path)?;
            read_scores(path)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let labels = read_cohort(&mut rec, &a.labels)?;
    let opts = EvalOptions {
        n_perm: a.n_perm,
        seed: a.seed,
    };
    let report = report::evaluate(&a.name, &a.roi, &scores, &labels, &opts)?;
    write_text(&mut rec, &out, &report::to_csv(&report))?;
    let summary = out.with_extension("json");
    io::write_json(&summary, &report)?;
    rec.output(&summary)?;
    rec.config(
        &json!({ "roi": a.roi, "n_perm": a.n_perm, "dataset": a.name }),
        BTreeMap::new(),
    );
    rec.seed("permutation", a.seed);
    rec.finish(&manifest_path(&out, None))?;
    for r in report
        .rows
        .iter()
        .filter(|r| r.metric == "auc" || r.metric == "spearman")
    {
        println!("{} {} {}: {:.4}", r.dataset, r.metric, r.groups, r.value);
    }
    Ok(())
}

fn sweep(a: SweepArgs, threads: usize) -> CliResult<()> {
    let mut rec = Recorder::start("sweep", threads);
    let out = out_path(&a.out);
    let s_grid = parse_grid(&a.s_grid)?;
    let q_grid = parse_grid(&a.q_grid)?;
    let Resolved {
        value: cfg,
        sources,
    } = scsr_config(&a.recon, None)?;
    let model = read_model(&mut rec, &a.model)?;
    let val = read_cohort(&mut rec, &a.val)?;
    let healthy = match &a.healthy {
        Some(p) => read_cohort(&mut rec, p)?.filter_diagnosis(Diagnosis::CN),
        None => val.filter_diagnosis(Diagnosis::CN),
    };
    let parc = read_parcellation(&mut rec, a.recon.parcellation.as_deref())?
        .ok_or_else(|| ScsrError::Config("sweep needs --parcellation for the ROI".into()))?;
    let roi = parc.roi_vertices(&a.roi)?;
    let rows = engine::sweep(
        &model,
        Some(&parc),
        &cfg,
        &healthy,
        &val,
        &roi,
        &s_grid,
        &q_grid,
    )?;
    let mut text = String::from("sampling_rate,centile,rec_error_cn,rec_error_ad,auc\n");
    for r in &rows {
        writeln!(
            text,
            "{:.4},{:.4},{:.6e},{:.6e},{:.6}",
            r.sampling_rate, r.centile, r.rec_error_cn, r.rec_error_ad, r.auc
        )
        .unwrap();
    }
    write_text(&mut rec, &out, &text)?;
    rec.seed("reconstruction", cfg.base_seed);
    rec.config(&cfg, sources);
    rec.manifest.extra = json!({ "s_grid": s_grid, "q_grid": q_grid, "roi": a.roi });
    rec.finish(&manifest_path(&out, None))?;
    println!("{}: {} grid points", out.display(), rows.len());
    Ok(())
}
