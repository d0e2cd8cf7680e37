use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetConfig, Params, SiameseModel};
use crate::error::{Error, Result};

const FORMAT: &str = "eegsiam-snn";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: NetConfig,
    input_shape: (usize, usize),
    params: Params,
}

/// JSON checkpoint holding the configuration and every parameter tensor.
pub fn save_checkpoint(model: &SiameseModel, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        config: model.config().clone(),
        input_shape: model.input_shape(),
        params: model.params.clone(),
    };
    let json = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SiameseModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    if ckpt.format != FORMAT || ckpt.version != VERSION {
        return Err(Error::data(format!(
            "{} is not a v{VERSION} {FORMAT} checkpoint (found {} v{})",
            path.display(),
            ckpt.format,
            ckpt.version
        )));
    }
    SiameseModel::from_params(ckpt.config, ckpt.input_shape, ckpt.params)
}
