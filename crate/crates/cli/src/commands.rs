//! One function per subcommand. Every artifact is written atomically under the
//! configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pcrseg::dataset::{holdout_split, load_case, read_labels};
use pcrseg::featselect::{correlation_filter, drop_log_csv, parse_selection_csv, selection_csv, sequential_forward_select, stratified_folds};
use pcrseg::io_util::{atomic_write, fmt_f64};
use pcrseg::mednext::infer::{mean_probability, threshold};
use pcrseg::mednext::train::predict_prepared;
use pcrseg::mednext::{build_network_with, fit, load_model, prepare_case, save_model, train_segmenter, PreparedCase};
use pcrseg::metrics::{dice_score, expected_calibration_error, norm_hausdorff, subgroup_report, Metadata};
use pcrseg::phantom::{generate_dataset_with, rule_summary};
use pcrseg::radiomics::{extract_all_with, schema, FeatureTable};
use pcrseg::snn::{load_snn, predict_pcr, save_snn, temperature_scale, train_snn};
use pcrseg::upkern::transfer_model;
use pcrseg::volume::{write_mask, Volume3D};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenPhantoms,
    TrainSeg,
    UpkernFinetune,
    PredictEval,
    Radiomics,
    SelectFeatures,
    TrainPcr,
    EvalPcr,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenPhantoms => "gen-phantoms",
            Command::TrainSeg => "train-seg",
            Command::UpkernFinetune => "upkern-finetune",
            Command::PredictEval => "predict-eval",
            Command::Radiomics => "radiomics",
            Command::SelectFeatures => "select-features",
            Command::TrainPcr => "train-pcr",
            Command::EvalPcr => "eval-pcr",
        }
    }
}

/// Runs `cmd` on a pool of `cfg.threads` workers; returns a one-line summary.
pub fn run(cmd: Command, cfg: &PipelineConfig) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::GenPhantoms => gen_phantoms(cfg),
        Command::TrainSeg => train_seg(cfg),
        Command::UpkernFinetune => upkern_finetune(cfg),
        Command::PredictEval => predict_eval(cfg),
        Command::Radiomics => radiomics(cfg),
        Command::SelectFeatures => select_features(cfg),
        Command::TrainPcr => train_pcr(cfg),
        Command::EvalPcr => eval_pcr(cfg),
    })
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("missing input {}", path.display())))
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

fn seg_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("seg")
}

fn pcr_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("pcr")
}

/// Labels plus the `(train, test)` id split.
fn split(cfg: &PipelineConfig) -> Result<(Vec<(String, u8)>, Vec<String>, Vec<String>), CliError> {
    require(&cfg.data_dir.join("labels.csv"))?;
    let labels = read_labels(&cfg.data_dir)?;
    let ids: Vec<String> = labels.iter().map(|(id, _)| id.clone()).collect();
    let (train, test) = holdout_split(&ids, cfg.holdout, cfg.seed)?;
    Ok((labels, train, test))
}

fn prepare(cfg: &PipelineConfig, ids: &[String]) -> Result<Vec<PreparedCase>, CliError> {
    let out: pcrseg::Result<Vec<PreparedCase>> =
        ids.par_iter().map(|id| prepare_case(&load_case(&cfg.data_dir, id)?)).collect();
    Ok(out?)
}

fn losses_csv(header: &str, rows: &[(String, Vec<f64>)]) -> String {
    let mut s = format!("{header},epoch,loss\n");
    for (key, losses) in rows {
        for (e, l) in losses.iter().enumerate() {
            s.push_str(&format!("{key},{e},{}\n", fmt_f64(*l)));
        }
    }
    s
}

fn gen_phantoms(cfg: &PipelineConfig) -> Result<String, CliError> {
    let n = cfg.phantom.n_cases;
    let rule = generate_dataset_with(&cfg.phantom, &cfg.data_dir, |f| (0..n).into_par_iter().map(f).collect())?;
    write(&cfg.data_dir.join("rule.txt"), &rule_summary(&rule))?;
    Ok(format!("{n} cases written to {}", cfg.data_dir.display()))
}

fn train_seg(cfg: &PipelineConfig) -> Result<String, CliError> {
    let (_, train, _) = split(cfg)?;
    let cases = prepare(cfg, &train)?;
    let template = build_network_with::<f32>(cfg.arch, cfg.loss, cfg.seed)?;
    let report = train_segmenter(&cases, &cfg.plan, &template)?;
    let dir = seg_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    for (i, m) in report.fold_models.iter().enumerate() {
        save_model(m, &dir.join(format!("fold_{i}.mdl")))?;
    }
    save_model(report.best_model(), &dir.join(format!("m{}.mdl", cfg.arch.kernel)))?;
    write(&dir.join("best_fold.txt"), &format!("fold={}\n", report.best_fold))?;
    write(&dir.join("fold_report.csv"), &report.table())?;
    let rows: Vec<(String, Vec<f64>)> =
        report.fold_losses.iter().enumerate().map(|(i, l)| (i.to_string(), l.clone())).collect();
    write(&dir.join("fold_losses.csv"), &losses_csv("fold", &rows))?;
    Ok(format!(
        "{} folds on {} cases, best fold {} (Dice {:.3})",
        cfg.plan.folds,
        cases.len(),
        report.best_fold,
        report.fold_dice[report.best_fold]
    ))
}

fn upkern_finetune(cfg: &PipelineConfig) -> Result<String, CliError> {
    let input = cfg.upkern.input.clone().unwrap_or_else(|| seg_dir(cfg).join("m3.mdl"));
    require(&input)?;
    let small = load_model(&input)?;
    if small.arch.kernel >= cfg.upkern.target_k {
        return Err(CliError::usage(format!(
            "{} already has kernel {} (target {})",
            input.display(),
            small.arch.kernel,
            cfg.upkern.target_k
        )));
    }
    let mut model = transfer_model(&small, cfg.upkern.target_k, cfg.upkern.loss)?;
    let (_, train, _) = split(cfg)?;
    let cases = prepare(cfg, &train)?;
    let refs: Vec<&PreparedCase> = cases.iter().collect();
    let plan = pcrseg::mednext::TrainPlan {
        epochs: cfg.upkern.epochs,
        eta_max: cfg.upkern.eta_max,
        ..cfg.plan.clone()
    };
    // a run id outside the fold range keeps fine-tuning patches distinct
    let run = 100 + cfg.upkern.loss as u64;
    let losses = fit(&mut model, &refs, &plan, run)?;
    let name = format!("m{}_{}", cfg.upkern.target_k, cfg.upkern.loss);
    let dir = seg_dir(cfg);
    save_model(&model, &dir.join(format!("{name}.mdl")))?;
    write(&dir.join(format!("{name}_losses.csv")), &losses_csv("model", &[(name.clone(), losses)]))?;
    Ok(format!("{name} fine-tuned on {} cases", cases.len()))
}

struct SegRow {
    case_id: String,
    dice: f64,
    norm_hd: f64,
}

fn score(cfg: &PipelineConfig, probs: &[Volume3D], cases: &[PreparedCase], masks_dir: &Path) -> Result<Vec<SegRow>, CliError> {
    fs::create_dir_all(masks_dir).map_err(|e| CliError::runtime(format!("{}: {e}", masks_dir.display())))?;
    let rows: pcrseg::Result<Vec<SegRow>> = probs
        .par_iter()
        .zip(cases.par_iter())
        .map(|(p, c)| {
            let pred = threshold(p, cfg.eval.threshold);
            write_mask(&pred, c.spacing, &masks_dir.join(format!("{}_pred.vol", c.case_id)))?;
            Ok(SegRow {
                case_id: c.case_id.clone(),
                dice: dice_score(&pred, &c.mask)?,
                norm_hd: norm_hausdorff(&pred, &c.mask, c.spacing, cfg.eval.hd_percentile)?,
            })
        })
        .collect();
    Ok(rows?)
}

fn predict_eval(cfg: &PipelineConfig) -> Result<String, CliError> {
    for p in &cfg.eval.models {
        require(p)?;
    }
    if cfg.eval.ensemble && cfg.eval.models.len() < 2 {
        return Err(CliError::usage("ensembling needs at least two models in eval.models"));
    }
    let (_, _, test) = split(cfg)?;
    if test.is_empty() {
        return Err(CliError::usage("hold-out split is empty"));
    }
    let cases = prepare(cfg, &test)?;
    let eval_dir = cfg.output_dir.join("eval");
    let mut results: Vec<(String, Vec<SegRow>)> = Vec::new();
    let mut all_probs: Vec<Vec<Volume3D>> = Vec::new();
    for path in &cfg.eval.models {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let model = load_model(path)?;
        let probs: pcrseg::Result<Vec<Volume3D>> = cases.par_iter().map(|c| predict_prepared(&model, c)).collect();
        let probs = probs?;
        results.push((name.clone(), score(cfg, &probs, &cases, &eval_dir.join("masks").join(&name))?));
        all_probs.push(probs);
    }
    if cfg.eval.ensemble {
        let mean: pcrseg::Result<Vec<Volume3D>> = (0..cases.len())
            .map(|i| mean_probability(&all_probs.iter().map(|p| p[i].clone()).collect::<Vec<_>>()))
            .collect();
        let mean = mean?;
        results.push(("ensemble".into(), score(cfg, &mean, &cases, &eval_dir.join("masks").join("ensemble"))?));
    }
    let mut per_case = String::from("model_config,case_id,dice,norm_hd\n");
    let mut report = String::from("model_config,dice,norm_hd\n");
    let mut summary = format!("{:<24} {:>10} {:>10}\n", "Model Configuration", "Dice Score", "NormHD");
    for (name, rows) in &results {
        let n = rows.len() as f64;
        let dice = rows.iter().map(|r| r.dice).sum::<f64>() / n;
        let hd = rows.iter().map(|r| r.norm_hd).sum::<f64>() / n;
        for r in rows {
            per_case.push_str(&format!("{name},{},{},{}\n", r.case_id, fmt_f64(r.dice), fmt_f64(r.norm_hd)));
        }
        report.push_str(&format!("{name},{},{}\n", fmt_f64(dice), fmt_f64(hd)));
        summary.push_str(&format!("{name:<24} {dice:>10.3} {hd:>10.3}\n"));
    }
    write(&eval_dir.join("seg_cases.csv"), &per_case)?;
    write(&eval_dir.join("seg_report.csv"), &report)?;
    write(&eval_dir.join("seg_summary.txt"), &summary)?;
    Ok(format!("{} model configurations on {} held-out cases", results.len(), cases.len()))
}

fn radiomics(cfg: &PipelineConfig) -> Result<String, CliError> {
    let (labels, _, _) = split(cfg)?;
    let rows: pcrseg::Result<Vec<Vec<f64>>> = labels
        .par_iter()
        .map(|(id, _)| {
            let c = load_case(&cfg.data_dir, id)?;
            Ok(extract_all_with(&c.phases[cfg.radiomics.phase], &c.mask, cfg.radiomics.ng)?.values)
        })
        .collect();
    let mut table = FeatureTable::new(schema());
    for ((id, _), row) in labels.iter().zip(rows?) {
        table.push(id, row)?;
    }
    write(&pcr_dir(cfg).join("features.csv"), &table.to_csv())?;
    Ok(format!("{} features for {} cases", table.names.len(), table.rows.len()))
}

fn read_features(cfg: &PipelineConfig) -> Result<FeatureTable, CliError> {
    let path = pcr_dir(cfg).join("features.csv");
    require(&path)?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(FeatureTable::parse_csv(&text)?)
}

/// Rows of `t` restricted to `ids` (in `ids` order) with their labels.
fn rows_for(t: &FeatureTable, ids: &[String], labels: &[(String, u8)]) -> Result<(FeatureTable, Vec<u8>), CliError> {
    let mut out = FeatureTable::new(t.names.clone());
    let mut y = Vec::with_capacity(ids.len());
    for id in ids {
        let i = t
            .case_ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| CliError::runtime(format!("features.csv has no row for {id}")))?;
        out.push(id, t.rows[i].clone())?;
        y.push(labels.iter().find(|(c, _)| c == id).map(|l| l.1).unwrap_or(0));
    }
    Ok((out, y))
}

fn select_features(cfg: &PipelineConfig) -> Result<String, CliError> {
    let (labels, train, _) = split(cfg)?;
    let all = read_features(cfg)?;
    let (t, y) = rows_for(&all, &train, &labels)?;
    let (kept, log) = correlation_filter(&t, cfg.select.threshold)?;
    let k = cfg.select.k.min(kept.names.len());
    let steps = sequential_forward_select(&kept, &y, k, cfg.seed)?;
    let dir = pcr_dir(cfg);
    write(&dir.join("correlation_drops.csv"), &drop_log_csv(&log))?;
    write(&dir.join("selection.csv"), &selection_csv(&steps))?;
    Ok(format!("{} of {} features kept, {} selected", kept.names.len(), t.names.len(), steps.len()))
}

fn selected(cfg: &PipelineConfig) -> Result<Vec<String>, CliError> {
    let path = pcr_dir(cfg).join("selection.csv");
    require(&path)?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(parse_selection_csv(&text)?)
}

fn train_pcr(cfg: &PipelineConfig) -> Result<String, CliError> {
    let (labels, train, _) = split(cfg)?;
    let names = selected(cfg)?;
    let (t, y) = rows_for(&read_features(cfg)?.select(&names)?, &train, &labels)?;
    let folds = (1.0 / cfg.calibration_fraction).round().max(2.0) as usize;
    let fold = stratified_folds(&t.case_ids, &y, folds, cfg.seed);
    let (mut xf, mut yf, mut xc, mut yc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..y.len() {
        if fold[i] == 0 {
            xc.push(t.rows[i].clone());
            yc.push(y[i]);
        } else {
            xf.push(t.rows[i].clone());
            yf.push(y[i]);
        }
    }
    let (mut model, losses) = train_snn(&xf, &yf, &names, &cfg.snn)?;
    let cal = temperature_scale(&mut model, &xc, &yc)?;
    let dir = pcr_dir(cfg);
    save_snn(&model, &dir.join("snn.mdl"))?;
    write(&dir.join("snn_losses.csv"), &losses_csv("model", &[("snn".into(), losses)]))?;
    write(
        &dir.join("calibration.csv"),
        &format!(
            "temperature,ece_before,ece_after,bce_before,bce_after\n{},{},{},{},{}\n",
            fmt_f64(cal.temperature),
            fmt_f64(cal.ece_before),
            fmt_f64(cal.ece_after),
            fmt_f64(cal.bce_before),
            fmt_f64(cal.bce_after)
        ),
    )?;
    Ok(format!("SNN trained on {} cases, T = {:.3} from {} calibration cases", xf.len(), cal.temperature, xc.len()))
}

fn eval_pcr(cfg: &PipelineConfig) -> Result<String, CliError> {
    let (labels, _, test) = split(cfg)?;
    let path = pcr_dir(cfg).join("snn.mdl");
    require(&path)?;
    let model = load_snn(&path)?;
    let (t, y) = rows_for(&read_features(cfg)?.select(&model.features)?, &test, &labels)?;
    let md_path = cfg.data_dir.join("metadata.csv");
    require(&md_path)?;
    let md = Metadata::parse_csv(&fs::read_to_string(&md_path).map_err(|e| CliError::runtime(e.to_string()))?)?;
    let preds = predict_pcr(&model, &t.rows)?;
    let hard: Vec<u8> = preds.iter().map(|p| p.1).collect();
    let probs: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let report = subgroup_report(&t.case_ids, &hard, &y, &md)?;
    let ece = expected_calibration_error(&probs, &y, cfg.ece_bins)?;
    let mut per_case = String::from("case_id,probability,predicted,label\n");
    for (i, id) in t.case_ids.iter().enumerate() {
        per_case.push_str(&format!("{id},{},{},{}\n", fmt_f64(probs[i]), hard[i], y[i]));
    }
    let ba = match report.overall {
        Some(b) => fmt_f64(b),
        None => "insufficient".into(),
    };
    let dir = pcr_dir(cfg);
    write(&dir.join("predictions.csv"), &per_case)?;
    write(&dir.join("pcr_report.csv"), &report.to_csv())?;
    write(&dir.join("pcr_summary.csv"), &format!("n,balanced_accuracy,ece\n{},{ba},{}\n", report.n, fmt_f64(ece)))?;
    Ok(format!("balanced accuracy {ba} on {} held-out cases", report.n))
}
