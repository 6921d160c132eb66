//! Training loop: seeded patch sampling, deep-supervised loss, cosine-annealed
//! SGD and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mednext::infer::{predict_logits, threshold};
use crate::mednext::loss::{deep_supervision_weights, segmentation_loss, target_pyramid, FocalParams};
use crate::mednext::network::SegModel;
use crate::metrics::dice_score;
use crate::nn::act::sigmoid_scalar;
use crate::nn::{OptimState, Tensor};
use crate::rng::{hash_str, mix64, rng_for, stream};
use crate::volume::{znormalize, CaseBundle, Mask3D, Volume3D};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patch: [usize; 3],
    pub seed: u64,
    pub eta_max: f64,
    pub eta_min: f64,
    pub momentum: f64,
    /// Per-level loss weights; `None` uses `2^-l` renormalized.
    pub ds_weights: Option<Vec<f64>>,
    pub focal: FocalParams,
    /// Window overlap for validation inference.
    pub overlap: f64,
    /// Probability that a training patch is centred on a random tumor voxel
    /// rather than placed uniformly.
    pub fg_fraction: f64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            folds: 5,
            epochs: 4,
            batch_size: 2,
            patch: [32; 3],
            seed: 0,
            eta_max: 0.05,
            eta_min: 0.0,
            momentum: 0.9,
            ds_weights: None,
            focal: FocalParams::default(),
            overlap: 0.5,
            fg_fraction: 0.5,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds {} must be >= 2", self.folds)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fg_fraction) {
            return Err(Error::InvalidArgument(format!("fg_fraction {} outside [0,1]", self.fg_fraction)));
        }
        Ok(())
    }

    fn weights(&self, levels: usize) -> Result<Vec<f64>> {
        match &self.ds_weights {
            Some(w) if w.len() == levels => Ok(w.clone()),
            Some(w) => Err(Error::InvalidArgument(format!(
                "{} deep-supervision weights for {levels} levels",
                w.len()
            ))),
            None => Ok(deep_supervision_weights(levels)),
        }
    }
}

/// A case ready for the network: z-scored phases stacked as `(1, 3, ...)`.
#[derive(Clone, Debug)]
pub struct PreparedCase {
    pub case_id: String,
    pub input: Tensor<f32>,
    pub mask: Mask3D,
    pub spacing: [f32; 3],
}

/// Whole-volume z-score normalization of every phase.
pub fn prepare_case(case: &CaseBundle) -> Result<PreparedCase> {
    let phases: Vec<Volume3D> = case.phases.iter().map(|p| znormalize(p, None)).collect::<Result<_>>()?;
    let d = case.dims();
    let mut data = Vec::with_capacity(3 * phases[0].len());
    for p in &phases {
        data.extend_from_slice(p.voxels());
    }
    Ok(PreparedCase {
        case_id: case.case_id.clone(),
        input: Tensor::from_vec([1, 3, d[0], d[1], d[2]], data)?,
        mask: case.mask.clone(),
        spacing: case.spacing(),
    })
}

/// Smallest window covering `dims` that the network accepts.
pub fn whole_case_patch(dims: [usize; 3], levels: usize) -> [usize; 3] {
    let f = 1usize << (levels - 1);
    dims.map(|n| n.div_ceil(f) * f)
}

fn crop_mask(m: &Mask3D, origin: [usize; 3], size: [usize; 3]) -> Mask3D {
    Mask3D::from_fn(size, |x, y, z| m.get(origin[0] + x, origin[1] + y, origin[2] + z))
}

fn sample_origin(rng: &mut impl Rng, c: &PreparedCase, fg: &[usize], plan: &TrainPlan) -> [usize; 3] {
    let d = c.input.spatial();
    let u: f64 = rng.random();
    if u < plan.fg_fraction && !fg.is_empty() {
        let v = fg[rng.random_range(0..fg.len())];
        let p = [v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1])];
        std::array::from_fn(|a| p[a].saturating_sub(plan.patch[a] / 2).min(d[a] - plan.patch[a]))
    } else {
        std::array::from_fn(|a| rng.random_range(0..=d[a] - plan.patch[a]))
    }
}

/// Trains `model` in place on `cases`; returns the mean loss of every epoch.
/// `run` separates the random streams of independent runs sharing a seed.
pub fn fit(model: &mut SegModel<f32>, cases: &[&PreparedCase], plan: &TrainPlan, run: u64) -> Result<Vec<f64>> {
    plan.validate()?;
    if cases.is_empty() {
        return Err(Error::InvalidArgument("no training cases".into()));
    }
    model.arch.check_input(plan.patch)?;
    for c in cases {
        let d = c.input.spatial();
        if (0..3).any(|a| d[a] < plan.patch[a]) {
            return Err(Error::ShapeMismatch(format!(
                "case {} with dims {d:?} smaller than patch {:?}",
                c.case_id, plan.patch
            )));
        }
    }
    let levels = model.arch.levels;
    let weights = plan.weights(levels)?;
    let steps_per_epoch = cases.len().div_ceil(plan.batch_size);
    let total = plan.epochs * steps_per_epoch;
    let mut opt = OptimState::<f32>::new(plan.eta_max, plan.eta_min, total, plan.momentum)?;
    let run_seed = mix64(plan.seed ^ mix64(run));
    let fg: Vec<Vec<usize>> = cases
        .iter()
        .map(|c| c.mask.labels().iter().enumerate().filter(|(_, &m)| m != 0).map(|(i, _)| i).collect())
        .collect();
    let mut log = Vec::with_capacity(plan.epochs);
    let mut step = 0;
    for epoch in 0..plan.epochs {
        let mut order: Vec<usize> = (0..cases.len()).collect();
        order.shuffle(&mut rng_for(run_seed, epoch as u64, stream::EPOCH_ORDER));
        let mut patch_rng = rng_for(run_seed, epoch as u64, stream::PATCH);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(plan.batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            let mut masks = Vec::with_capacity(batch.len());
            for &i in batch {
                let c = cases[i];
                let origin = sample_origin(&mut patch_rng, c, &fg[i], plan);
                inputs.push(c.input.crop(origin, plan.patch)?);
                masks.push(crop_mask(&c.mask, origin, plan.patch));
            }
            let x = Tensor::stack(&inputs)?;
            let targets = target_pyramid::<f32>(&masks.iter().collect::<Vec<_>>(), levels)?;
            let (logits, cache) = model.forward_cached(&x)?;
            let (loss, grad_logits) =
                segmentation_loss(&logits, &targets, &weights, model.loss_variant, plan.focal)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {step}, lr {:.6}",
                    opt.learning_rate(step)
                )));
            }
            let (grads, _) = model.backward(&grad_logits, &cache)?;
            let gslices: Vec<&[f32]> = grads.param_slices().into_iter().map(|(_, _, s)| s).collect();
            let mut pslices = model.param_slices_mut();
            opt.sgd_step(&mut pslices, &gslices, step)?;
            step += 1;
            epoch_loss += loss;
        }
        log.push(epoch_loss / steps_per_epoch as f64);
    }
    model.epochs += plan.epochs;
    Ok(log)
}

/// Foreground probabilities of a prepared case using one whole-case window.
pub fn predict_prepared(model: &SegModel<f32>, case: &PreparedCase) -> Result<Volume3D> {
    let patch = whole_case_patch(case.input.spatial(), model.arch.levels);
    let logits = predict_logits(model, &case.input, patch, 0.0)?;
    let probs = logits.into_iter().map(|z| sigmoid_scalar(z) as f32).collect();
    Volume3D::new(case.input.spatial(), case.spacing, probs)
}

/// Mean Dice of thresholded predictions against the reference masks.
pub fn mean_dice(model: &SegModel<f32>, cases: &[&PreparedCase]) -> Result<f64> {
    let mut total = 0.0;
    for c in cases {
        let p = predict_prepared(model, c)?;
        total += dice_score(&threshold(&p, 0.5), &c.mask)?;
    }
    Ok(total / cases.len().max(1) as f64)
}

/// Fold index per case: cases sorted by seeded hash of their id, then dealt
/// round-robin.
pub fn fold_assignment(ids: &[&str], folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (hash_str(seed, ids[i]), ids[i]));
    let mut fold = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

#[derive(Clone, Debug)]
pub struct CvReport {
    pub fold_models: Vec<SegModel<f32>>,
    pub fold_dice: Vec<f64>,
    pub fold_losses: Vec<Vec<f64>>,
    pub best_fold: usize,
}

impl CvReport {
    pub fn best_model(&self) -> &SegModel<f32> {
        &self.fold_models[self.best_fold]
    }

    pub fn mean_dice(&self) -> f64 {
        self.fold_dice.iter().sum::<f64>() / self.fold_dice.len() as f64
    }

    /// Fold table with rows `Fold 0..k-1` and `Average`.
    pub fn table(&self) -> String {
        let mut s = String::from("Fold,Dice Score\n");
        for (i, d) in self.fold_dice.iter().enumerate() {
            s.push_str(&format!("Fold {i},{d:.3}\n"));
        }
        s.push_str(&format!("Average,{:.3}\n", self.mean_dice()));
        s
    }
}

/// K-fold cross-validation starting every fold from `template`. The best fold
/// is the one with the highest validation Dice (lowest index on ties).
pub fn train_segmenter(cases: &[PreparedCase], plan: &TrainPlan, template: &SegModel<f32>) -> Result<CvReport> {
    plan.validate()?;
    if cases.is_empty() {
        return Err(Error::InvalidArgument("empty training data".into()));
    }
    if cases.len() < plan.folds {
        return Err(Error::InvalidArgument(format!(
            "{} cases for {} folds",
            cases.len(),
            plan.folds
        )));
    }
    let ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let assign = fold_assignment(&ids, plan.folds, plan.seed);
    let mut report = CvReport {
        fold_models: Vec::new(),
        fold_dice: Vec::new(),
        fold_losses: Vec::new(),
        best_fold: 0,
    };
    for fold in 0..plan.folds {
        let train: Vec<&PreparedCase> = cases.iter().zip(&assign).filter(|(_, &f)| f != fold).map(|(c, _)| c).collect();
        let val: Vec<&PreparedCase> = cases.iter().zip(&assign).filter(|(_, &f)| f == fold).map(|(c, _)| c).collect();
        let mut model = template.clone();
        model.seed = plan.seed;
        let losses = fit(&mut model, &train, plan, fold as u64)?;
        let dice = mean_dice(&model, &val)?;
        report.fold_models.push(model);
        report.fold_dice.push(dice);
        report.fold_losses.push(losses);
    }
    let mut best = 0;
    for (i, &d) in report.fold_dice.iter().enumerate() {
        if d > report.fold_dice[best] {
            best = i;
        }
    }
    report.best_fold = best;
    Ok(report)
}
