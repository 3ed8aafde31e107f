//! One interface over all five classifiers, plus the model file format.
//!
//! A model file is JSON with `format_version`, `arch`, `window_seconds`,
//! `seed` and one body field: `layers` (networks), `svm` or `forest`.
//! Weight arrays are flat and row-major; numbers use shortest round-trip
//! decimal form, so save then load reproduces every bit.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classical::{
    flatten, train_linear_svm, train_random_forest, FlatExample, ForestConfig, ForestModel, SvmConfig, SvmModel,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    build_model_with, predict_layers, train_model, Arch, Layer, ModelDims, Network, Prediction, TrainConfig,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArch {
    Cnn,
    Lstm,
    LstmCnn,
    Svm,
    Forest,
}

impl ModelArch {
    pub const ALL: [ModelArch; 5] = [
        ModelArch::Cnn,
        ModelArch::Lstm,
        ModelArch::LstmCnn,
        ModelArch::Svm,
        ModelArch::Forest,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelArch::Cnn => "cnn",
            ModelArch::Lstm => "lstm",
            ModelArch::LstmCnn => "lstm-cnn",
            ModelArch::Svm => "svm",
            ModelArch::Forest => "forest",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelArch::Cnn => "CNN",
            ModelArch::Lstm => "LSTM",
            ModelArch::LstmCnn => "LSTM-CNN",
            ModelArch::Svm => "SVM",
            ModelArch::Forest => "Random forest",
        }
    }

    pub fn network(self) -> Option<Arch> {
        match self {
            ModelArch::Cnn => Some(Arch::Cnn),
            ModelArch::Lstm => Some(Arch::Lstm),
            ModelArch::LstmCnn => Some(Arch::LstmCnn),
            ModelArch::Svm | ModelArch::Forest => None,
        }
    }
}

impl From<Arch> for ModelArch {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Cnn => ModelArch::Cnn,
            Arch::Lstm => ModelArch::Lstm,
            Arch::LstmCnn => ModelArch::LstmCnn,
        }
    }
}

impl fmt::Display for ModelArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        ModelArch::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::param(format!("unknown model '{s}' (cnn, lstm, lstm-cnn, svm, forest)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBody {
    Layers(Vec<Layer>),
    Svm(SvmModel),
    Forest(ForestModel),
}

/// A trained classifier for `window_seconds`-second windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub format_version: u32,
    pub arch: ModelArch,
    pub window_seconds: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub body: ModelBody,
}

/// Settings for every model family; each trainer reads its own part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    pub nn: TrainConfig,
    pub dims: ModelDims,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
}

impl TrainOptions {
    /// Published defaults with `seed` propagated to every trainer.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            nn: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            dims: ModelDims::default(),
            svm: SvmConfig {
                seed,
                ..SvmConfig::default()
            },
            forest: ForestConfig {
                seed,
                ..ForestConfig::default()
            },
        }
    }
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Per-epoch loss (networks) or objective (SVM); empty for the forest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub history: Vec<f64>,
}

impl Classifier {
    pub fn from_network(net: Network) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            arch: net.arch.into(),
            window_seconds: net.window_seconds,
            seed: net.seed,
            body: ModelBody::Layers(net.layers),
        }
    }

    pub fn train(arch: ModelArch, data: &Dataset, opts: &TrainOptions) -> Result<(Self, TrainReport)> {
        if data.is_empty() {
            return Err(Error::param("cannot train on an empty dataset"));
        }
        let s = data.window_seconds();
        let wrap = |body| Self {
            format_version: MODEL_FORMAT_VERSION,
            arch,
            window_seconds: s,
            seed: opts.seed,
            body,
        };
        match arch.network() {
            Some(a) => {
                let net = build_model_with(a, s, opts.seed, opts.dims)?;
                let out = train_model(net, data, &opts.nn)?;
                Ok((
                    Self::from_network(out.model),
                    TrainReport {
                        history: out.loss_history,
                    },
                ))
            }
            None => {
                let flat: Vec<FlatExample> = data.examples.iter().map(flatten).collect();
                if arch == ModelArch::Svm {
                    let out = train_linear_svm(&flat, &opts.svm)?;
                    Ok((
                        wrap(ModelBody::Svm(out.model)),
                        TrainReport {
                            history: out.objective,
                        },
                    ))
                } else {
                    let m = train_random_forest(&flat, &opts.forest)?;
                    Ok((wrap(ModelBody::Forest(m)), TrainReport::default()))
                }
            }
        }
    }

    /// Values in one input window, `20 * S * 6`.
    pub fn input_len(&self) -> usize {
        120 * self.window_seconds
    }

    pub fn network(&self) -> Option<Network> {
        match (&self.body, self.arch.network()) {
            (ModelBody::Layers(layers), Some(arch)) => Some(Network {
                arch,
                window_seconds: self.window_seconds,
                seed: self.seed,
                layers: layers.clone(),
            }),
            _ => None,
        }
    }

    pub fn predict(&self, window: &[f64]) -> Result<Prediction> {
        Ok(self.predict_batch(&[window])?[0])
    }

    pub fn predict_batch(&self, windows: &[&[f64]]) -> Result<Vec<Prediction>> {
        for w in windows {
            if w.len() != self.input_len() {
                return Err(Error::shape(format!(
                    "window has {} values, {} model for S={} expects {}",
                    w.len(),
                    self.arch,
                    self.window_seconds,
                    self.input_len()
                )));
            }
        }
        match &self.body {
            ModelBody::Layers(layers) => predict_layers(self.window_seconds, layers, windows),
            ModelBody::Svm(m) => windows.iter().map(|w| m.predict(w)).collect(),
            ModelBody::Forest(m) => windows.iter().map(|w| m.predict(w)).collect(),
        }
    }

    /// Structural checks run after loading.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.window_seconds == 0 {
            return Err(Error::format("window_seconds must be positive"));
        }
        let body_ok = matches!(
            (&self.body, self.arch),
            (ModelBody::Layers(_), ModelArch::Cnn | ModelArch::Lstm | ModelArch::LstmCnn)
                | (ModelBody::Svm(_), ModelArch::Svm)
                | (ModelBody::Forest(_), ModelArch::Forest)
        );
        if !body_ok {
            return Err(Error::format(format!("model body does not match arch '{}'", self.arch)));
        }
        let fmt_err = |e: Error| Error::format(format!("inconsistent {} model: {e}", self.arch));
        match &self.body {
            ModelBody::Layers(_) => {
                let net = self.network().expect("checked above");
                net.validate().map_err(fmt_err)?;
                let expected = build_model_with(net.arch, self.window_seconds, 0, ModelDims::default())
                    .map_err(fmt_err)?;
                let kinds = |layers: &[Layer]| layers.iter().map(Layer::name).collect::<Vec<_>>();
                if kinds(&net.layers) != kinds(&expected.layers) {
                    return Err(Error::format(format!("layer sequence is not a {} network", self.arch)));
                }
            }
            ModelBody::Svm(m) => {
                let d = self.input_len();
                if m.weights.len() != d || m.scaler.mean.len() != d || m.scaler.std.len() != d {
                    return Err(Error::format(format!("svm expects {d} weights and scaler entries")));
                }
            }
            ModelBody::Forest(m) => {
                if m.n_features != self.input_len() || m.trees.is_empty() {
                    return Err(Error::format("forest feature count or tree list is invalid"));
                }
                for t in &m.trees {
                    check_tree(t, m.n_features)?;
                }
            }
        }
        Ok(())
    }
}

/// Nodes must form a tree rooted at 0 with in-range children and features.
fn check_tree(t: &crate::classical::Tree, d: usize) -> Result<()> {
    use crate::classical::Node;
    let n = t.nodes.len();
    if n == 0 {
        return Err(Error::format("empty tree"));
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::format("tree nodes do not form a tree"));
        }
        match &t.nodes[i] {
            Node::Leaf { counts } if counts[0] + counts[1] == 0 => return Err(Error::format("empty leaf")),
            Node::Leaf { .. } => {}
            Node::Split { feature, left, right, .. } => {
                if *feature >= d {
                    return Err(Error::format("split feature out of range"));
                }
                stack.push(*left);
                stack.push(*right);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::format("unreachable tree nodes"));
    }
    Ok(())
}

pub fn write_model<W: Write>(m: &Classifier, out: W) -> Result<()> {
    serde_json::to_writer(out, m).map_err(|e| Error::format(format!("cannot encode model: {e}")))
}

pub fn save_model(m: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(m, &mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<Classifier> {
    let m: Classifier = serde_json::from_reader(reader).map_err(|e| {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::format(format!("malformed model file: {e}"))
        }
    })?;
    m.validate()?;
    Ok(m)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    read_model(BufReader::new(File::open(path)?))
}

/// Like [`load_model`], but the file must hold an `expected` model.
pub fn load_model_as(path: impl AsRef<Path>, expected: ModelArch) -> Result<Classifier> {
    let m = load_model(path)?;
    if m.arch != expected {
        return Err(Error::format(format!(
            "model file holds a {} model, expected {expected}",
            m.arch
        )));
    }
    Ok(m)
}
