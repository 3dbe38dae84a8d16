//! Experiment configuration documents.

use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use refbench_core::clifford::NamedGate;
use refbench_core::ensemble::{GateSpec, LayerEnsemble};
use refbench_core::fit::DecayModel;
use refbench_core::protocol::{
    ErrorSource, Protocol, DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_CIRCUITS_PER_DEPTH, DEFAULT_DEPTHS,
    DEFAULT_VERDICT_CIRCUITS,
};
use refbench_core::simulator::LocalNoiseModel;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::tables::Format;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
    pub noise: Option<Spanned<NoiseSection>>,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Spanned<ExperimentSection>>,
    pub interleave: Option<InterleaveSection>,
    pub dist_test: Option<DistTestSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Per-qubit error rates `e_i = 1 − p_i`.
    pub errors: Option<Vec<f64>>,
    /// Per-qubit depolarizing parameters.
    pub p: Option<Vec<f64>>,
    /// Two-qubit depolarizing parameter of the interleaved gate.
    pub gate_p: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub depths: Option<Spanned<Vec<usize>>>,
    #[serde(default = "default_circuits")]
    pub circuits_per_depth: usize,
    /// 0 selects exact probabilities.
    #[serde(default)]
    pub shots: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            depths: None,
            circuits_per_depth: DEFAULT_CIRCUITS_PER_DEPTH,
            shots: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Exponential,
    FSingle,
    FSingleShared,
    Additive,
}

impl ModelName {
    pub fn model(self, qubits: usize) -> DecayModel {
        match self {
            Self::Exponential => DecayModel::Exponential,
            Self::FSingle => DecayModel::FSingle { qubits, shared: false },
            Self::FSingleShared => DecayModel::FSingle { qubits, shared: true },
            Self::Additive => DecayModel::Additive,
        }
    }
}

/// `"cz"` or `{ gate = "cz", targets = [1, 2] }` or
/// `{ gate = [[[re, im], ...], ...] }`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TargetEntry {
    Name(NamedGate),
    Spec(GateSpec),
}

impl TargetEntry {
    pub fn spec(&self) -> GateSpec {
        match self {
            Self::Name(g) => GateSpec::named(*g),
            Self::Spec(s) => s.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// File stem of the curve file; defaults to the protocol name.
    pub label: Option<String>,
    pub protocol: Protocol,
    pub layers: Option<LayerEnsemble>,
    pub models: Option<Vec<ModelName>>,
    pub target: Option<TargetEntry>,
    pub m_min: Option<usize>,
    #[serde(default)]
    pub verdict_circuits: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterleaveSection {
    pub target: TargetEntry,
    #[serde(default = "default_m_min")]
    pub m_min: usize,
    #[serde(default = "default_error_source")]
    pub error_source: ErrorSource,
    pub supplied_errors: Option<Vec<f64>>,
    #[serde(default)]
    pub include_irb: bool,
    #[serde(default = "default_verdict_circuits")]
    pub verdict_circuits: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistTestSection {
    #[serde(default = "default_dist_circuits")]
    pub circuits: usize,
    #[serde(rename = "ensemble")]
    pub ensembles: Vec<Spanned<EnsembleSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub label: String,
    pub qubits: usize,
    pub layers: LayerEnsemble,
    #[serde(default = "default_ensemble_depth")]
    pub depth: usize,
    pub target: Option<TargetEntry>,
    /// Overrides the section-wide circuit count.
    pub circuits: Option<usize>,
}

fn default_circuits() -> usize {
    DEFAULT_CIRCUITS_PER_DEPTH
}

fn default_resamples() -> usize {
    DEFAULT_BOOTSTRAP_RESAMPLES
}

fn default_m_min() -> usize {
    refbench_core::fit::DEFAULT_M_MIN
}

fn default_error_source() -> ErrorSource {
    ErrorSource::Isolated
}

fn default_verdict_circuits() -> usize {
    DEFAULT_VERDICT_CIRCUITS
}

fn default_dist_circuits() -> usize {
    10_000
}

fn default_ensemble_depth() -> usize {
    1
}

/// A parsed config with its source text, for diagnostics.
pub struct LoadedConfig {
    pub path: PathBuf,
    pub source: String,
    pub doc: ConfigDocument,
}

/// 1-based line of a byte offset.
pub fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(path, source)
    }

    pub fn parse(path: &Path, source: String) -> Result<Self> {
        let doc: ConfigDocument = toml::from_str(&source).map_err(|e| {
            let line = e
                .span()
                .map(|s| format!(":{}", line_of(&source, s.start)))
                .unwrap_or_default();
            anyhow!("{}{line}: {}", path.display(), e.message())
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            source,
            doc,
        })
    }

    /// Error located at `span`.
    pub fn error_at(&self, span: Range<usize>, msg: impl std::fmt::Display) -> anyhow::Error {
        anyhow!("{}:{}: {msg}", self.path.display(), line_of(&self.source, span.start))
    }

    pub fn noise(&self) -> Result<LocalNoiseModel> {
        let section = self
            .doc
            .noise
            .as_ref()
            .ok_or_else(|| anyhow!("{}: missing [noise] section", self.path.display()))?;
        let span = section.span();
        let n = section.get_ref();
        let model = match (&n.errors, &n.p) {
            (Some(e), None) => LocalNoiseModel::from_errors(e, n.gate_p),
            (None, Some(p)) => LocalNoiseModel::new(p.clone(), n.gate_p),
            _ => return Err(self.error_at(span, "[noise] needs exactly one of `errors` or `p`")),
        };
        model.map_err(|e| self.error_at(span, e))
    }

    pub fn depths(&self) -> Result<Vec<usize>> {
        match &self.doc.sampling.depths {
            None => Ok(DEFAULT_DEPTHS.to_vec()),
            Some(d) => {
                let v = d.get_ref();
                if v.is_empty() {
                    bail!(self.error_at(d.span(), "depth list is empty"));
                }
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    bail!(self.error_at(d.span(), "depths must be strictly increasing"));
                }
                Ok(v.clone())
            }
        }
    }

    /// Experiments with their 1-based source lines.
    pub fn experiments(&self) -> impl Iterator<Item = (usize, &ExperimentSection)> {
        self.doc
            .experiments
            .iter()
            .map(|e| (line_of(&self.source, e.span().start), e.get_ref()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<LoadedConfig> {
        LoadedConfig::parse(Path::new("test.toml"), src.to_string())
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse("seed = 1\n[sampling]\nshots = 0\nbogus = 3\n")
            .err()
            .unwrap()
            .to_string();
        assert!(err.starts_with("test.toml:4:"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn empty_depth_list_is_located() {
        let cfg = parse("[noise]\nerrors = [0.01]\n\n[sampling]\ndepths = []\n").unwrap();
        let err = cfg.depths().unwrap_err().to_string();
        assert_eq!(err, "test.toml:5: depth list is empty");
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = parse("[noise]\np = [0.99, 0.98]\n").unwrap();
        assert_eq!(cfg.depths().unwrap(), DEFAULT_DEPTHS.to_vec());
        assert_eq!(cfg.doc.sampling.circuits_per_depth, DEFAULT_CIRCUITS_PER_DEPTH);
        assert_eq!(cfg.noise().unwrap().per_qubit_p, vec![0.99, 0.98]);
    }

    #[test]
    fn noise_needs_one_parametrization() {
        let cfg = parse("seed = 2\n[noise]\np = [0.99]\nerrors = [0.01]\n").unwrap();
        assert!(cfg.noise().unwrap_err().to_string().starts_with("test.toml:2:"));
    }

    #[test]
    fn targets_parse_by_name_or_table() {
        let cfg = parse(
            "[[experiment]]\nprotocol = \"irb-clifford\"\ntarget = \"cz\"\n\n\
             [[experiment]]\nprotocol = \"xeb-interleaved\"\ntarget = { gate = \"cnot\", targets = [1, 0] }\n",
        )
        .unwrap();
        let lines: Vec<usize> = cfg.experiments().map(|(l, _)| l).collect();
        assert_eq!(lines, vec![1, 5]);
        let spec = cfg.doc.experiments[1].get_ref().target.as_ref().unwrap().spec();
        assert_eq!(spec.targets, Some(vec![1, 0]));
    }
}
