//! MDL1 serialization of segmentation models.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mdl::ModelFile;
use crate::mednext::network::{LossVariant, SegArch, SegModel};

pub fn to_model_file(m: &SegModel<f32>) -> ModelFile {
    let mut f = ModelFile::new();
    f.push("kind", "mednext");
    f.push("in_channels", m.arch.in_channels);
    f.push("levels", m.arch.levels);
    f.push("base_channels", m.arch.base_channels);
    f.push("ratio", m.arch.ratio);
    f.push("k", m.arch.kernel);
    f.push("loss_variant", m.loss_variant);
    f.push("seed", m.seed);
    f.push("epochs", m.epochs);
    f.payload = m.flat_params();
    f
}

pub fn from_model_file(f: &ModelFile) -> Result<SegModel<f32>> {
    if f.get("kind")? != "mednext" {
        return Err(Error::MalformedModel(format!("kind {} is not mednext", f.get("kind")?)));
    }
    let arch = SegArch {
        in_channels: f.parse("in_channels")?,
        levels: f.parse("levels")?,
        base_channels: f.parse("base_channels")?,
        ratio: f.parse("ratio")?,
        kernel: f.parse("k")?,
    };
    let loss: LossVariant = f.get("loss_variant")?.parse()?;
    let mut m = SegModel::zeros(arch, loss)?;
    m.seed = f.parse("seed")?;
    m.epochs = f.parse("epochs")?;
    if f.payload.len() != m.param_count() {
        return Err(Error::MalformedModel(format!(
            "payload has {} values, architecture needs {}",
            f.payload.len(),
            m.param_count()
        )));
    }
    m.set_flat_params(&f.payload)?;
    Ok(m)
}

pub fn save_model(m: &SegModel<f32>, path: &Path) -> Result<()> {
    to_model_file(m).write(path)
}

pub fn load_model(path: &Path) -> Result<SegModel<f32>> {
    from_model_file(&ModelFile::read(path)?)
}
