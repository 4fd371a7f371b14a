use std::path::Path;

use lookahead_core::stargraph::StarParams;
use lookahead_core::TaskSpec;
use lookahead_lab::ExperimentManifest;
use lookahead_model::Dtype;

/// A star-graph experiment small enough to train in well under a second.
pub fn tiny_manifest(name: &str, out: &Path, p: f64) -> ExperimentManifest {
    let mut m = ExperimentManifest::new(name, TaskSpec::Star(StarParams::new(2, 4)), out.to_path_buf());
    m.seed = 5;
    m.train_count = 48;
    m.test_count = 8;
    m.aug.p = p;
    m.model.n_layers = 1;
    m.model.n_heads = 2;
    m.model.d_model = 16;
    m.model.d_ff = 32;
    m.model.dtype = Dtype::F64;
    m.train.batch_size = 16;
    m.train.warmup = 2;
    m.train.epochs = 2;
    m
}
