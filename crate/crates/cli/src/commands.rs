use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use refbench_core::distributions::{
    classify_sample, clifford_step_cdf, factorized_cdf, factorized_clifford_step, porter_thomas_cdf, sample_ensemble,
    DistributionVerdict, StepDistribution,
};
use refbench_core::ensemble::{LayerEnsemble, ReferenceEnsemble};
use refbench_core::fit::{fit_decay, DecayModel, FitOptions};
use refbench_core::protocol::{
    analyze, interleaved_gate_estimate, run_experiment, Analysis, ErrorSource, ExperimentPlan, ExperimentResult,
    FitSummary, GateFidelity, Protocol, ReferenceErrors,
};
use refbench_core::rng::derive_seed;
use refbench_core::study::{run_interleaved_study, InterleavedStudy, StudyResult};
use refbench_core::StepWeight;
use serde::Serialize;

use crate::config::{LoadedConfig, ModelName};
use crate::report::{write_report, Metadata, Report};
use crate::tables::{curve_rows, read_dataset, write_table, CdfRow, Dataset, Format};

const DEFAULT_OUT_DIR: &str = "refbench-out";
const IRB_NOTE: &str = "Clifford IRB layers are applied as atomic two-qubit Clifford elements with the same \
                        per-layer noise as the reference layers; the gate-decomposition overhead of real \
                        hardware is not modeled, so simulated IRB precision is optimistic.";
const UNCERTAINTY_NOTE: &str = "Every estimate names the method behind its stderr: bootstrap (circuits \
                                resampled within each depth), fit-covariance, propagated (first order, \
                                in quadrature) or unavailable.";

/// Flags shared by every command.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

struct Target {
    dir: PathBuf,
    format: Format,
    seed: u64,
}

fn resolve(cfg: &LoadedConfig, opts: &RunOptions) -> Result<Target> {
    let dir = match (&opts.out, &cfg.doc.output.dir) {
        (Some(d), _) => d.clone(),
        // relative to the config file
        (None, Some(d)) => cfg.path.parent().unwrap_or(Path::new(".")).join(d),
        (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(Target {
        dir,
        format: opts.format.or(cfg.doc.output.format).unwrap_or_default(),
        seed: opts.seed.unwrap_or(cfg.doc.seed),
    })
}

#[derive(Serialize)]
struct ExperimentEntry {
    label: String,
    curve_file: PathBuf,
    result: ExperimentResult,
}

#[derive(Serialize)]
struct SimulateBody {
    experiments: Vec<ExperimentEntry>,
}

pub fn simulate(config: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = LoadedConfig::load(config)?;
    if cfg.doc.experiments.is_empty() {
        bail!("{}: no [[experiment]] entries", cfg.path.display());
    }
    let noise = cfg.noise()?;
    let depths = cfg.depths()?;
    let out = resolve(&cfg, opts)?;
    let mut labels = BTreeSet::new();
    let mut entries = Vec::new();
    let mut files = Vec::new();
    let mut notes = vec![UNCERTAINTY_NOTE.to_string()];
    for (i, (line, e)) in cfg.experiments().enumerate() {
        let at = |err: &dyn std::fmt::Display| anyhow!("{}:{line}: {err}", cfg.path.display());
        let label = e.label.clone().unwrap_or_else(|| e.protocol.name().to_string());
        if !labels.insert(label.clone()) {
            return Err(at(&format!("duplicate experiment label {label:?}")));
        }
        let qubits = noise.qubits();
        let plan = ExperimentPlan {
            shots: cfg.doc.sampling.shots,
            seed: derive_seed(out.seed, &[i as u64]),
            target_gate: e.target.as_ref().map(|t| t.spec()),
            m_min: e.m_min,
            layers: e.layers,
            models: e.models.as_ref().map(|m| m.iter().map(|m| m.model(qubits)).collect()),
            bootstrap_resamples: cfg.doc.bootstrap.resamples,
            verdict_circuits: e.verdict_circuits,
            ..ExperimentPlan::new(
                e.protocol,
                noise.clone(),
                depths.clone(),
                cfg.doc.sampling.circuits_per_depth,
            )
        };
        plan.validate().map_err(|err| at(&err))?;
        if plan.protocol == Protocol::IrbClifford && !notes.iter().any(|n| n == IRB_NOTE) {
            notes.push(IRB_NOTE.to_string());
        }
        let result = run_experiment(&plan).map_err(|err| at(&format!("experiment {label}: {err}")))?;
        let curve_file = write_table(
            &out.dir,
            &label,
            out.format,
            &curve_rows(&result.fidelity_curve, &result.fits),
        )?;
        files.push(curve_file.clone());
        entries.push(ExperimentEntry {
            label,
            curve_file,
            result,
        });
    }
    write_report(
        &out.dir,
        &Report {
            metadata: Metadata::new("simulate", out.seed, &[config])?,
            notes,
            files,
            body: SimulateBody { experiments: entries },
        },
    )
}

#[derive(Serialize)]
struct InterleaveBody {
    result: StudyResult,
}

pub fn interleave(config: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = LoadedConfig::load(config)?;
    let section = cfg
        .doc
        .interleave
        .as_ref()
        .ok_or_else(|| anyhow!("{}: missing [interleave] section", cfg.path.display()))?;
    let noise = cfg.noise()?;
    let depths = cfg.depths()?;
    let out = resolve(&cfg, opts)?;
    let study = InterleavedStudy {
        shots: cfg.doc.sampling.shots,
        seed: out.seed,
        m_min: section.m_min,
        bootstrap_resamples: cfg.doc.bootstrap.resamples,
        verdict_circuits: section.verdict_circuits,
        error_source: section.error_source,
        supplied_errors: section.supplied_errors.clone(),
        include_irb: section.include_irb,
        ..InterleavedStudy::new(
            noise,
            section.target.spec(),
            depths,
            cfg.doc.sampling.circuits_per_depth,
        )
    };
    let result = run_interleaved_study(&study).with_context(|| format!("{}: interleaved study", cfg.path.display()))?;

    let mut curves = vec![("reference", &result.reference), ("interleaved", &result.interleaved)];
    if let Some(irb) = &result.irb {
        curves.push(("irb_reference", &irb.reference));
        curves.push(("irb_interleaved", &irb.interleaved));
    }
    let files = curves
        .into_iter()
        .map(|(stem, r)| write_table(&out.dir, stem, out.format, &curve_rows(&r.fidelity_curve, &r.fits)))
        .collect::<Result<Vec<_>>>()?;
    let mut notes = vec![
        UNCERTAINTY_NOTE.to_string(),
        format!(
            "Per-qubit error rates e_i in the refined estimate come from {}; see \
             result.gate.reference_errors.",
            match study.error_source {
                ErrorSource::Isolated => "separate single-qubit experiments on each qubit",
                ErrorSource::Simultaneous => "the per-qubit fit of the simultaneous reference decay",
                ErrorSource::Supplied => "the config's supplied_errors",
            }
        ),
    ];
    if study.include_irb {
        notes.push(IRB_NOTE.to_string());
    }
    write_report(
        &out.dir,
        &Report {
            metadata: Metadata::new("interleave", out.seed, &[config])?,
            notes,
            files,
            body: InterleaveBody { result },
        },
    )
}

#[derive(Serialize)]
struct EnsembleEntry {
    label: String,
    layers: LayerEnsemble,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    empirical_file: PathBuf,
    verdict: DistributionVerdict,
}

#[derive(Serialize)]
struct DistTestBody {
    ensembles: Vec<EnsembleEntry>,
    analytic_files: Vec<PathBuf>,
}

const ANALYTIC_GRID: usize = 1000;

fn grid_rows(cdf: impl Fn(f64) -> f64) -> Vec<CdfRow> {
    (0..=ANALYTIC_GRID)
        .map(|i| {
            let p_x = i as f64 / ANALYTIC_GRID as f64;
            CdfRow { p_x, cdf: cdf(p_x) }
        })
        .collect()
}

fn step_rows(step: &StepDistribution) -> Vec<CdfRow> {
    let mut acc = StepWeight::from_integer(0);
    step.atoms
        .iter()
        .map(|(v, w)| {
            acc += w;
            CdfRow {
                p_x: *v.numer() as f64 / *v.denom() as f64,
                cdf: *acc.numer() as f64 / *acc.denom() as f64,
            }
        })
        .collect()
}

fn write_analytic(dir: &Path, format: Format, qubits: usize) -> Result<Vec<PathBuf>> {
    let dim = 1usize << qubits;
    let mut files = vec![
        write_table(
            dir,
            &format!("analytic_porter_thomas_n{qubits}"),
            format,
            &grid_rows(|p| porter_thomas_cdf(p, dim)),
        )?,
        write_table(
            dir,
            &format!("analytic_factorized_n{qubits}"),
            format,
            &grid_rows(|p| factorized_cdf(p, qubits)),
        )?,
    ];
    if qubits <= 2 {
        files.push(write_table(
            dir,
            &format!("analytic_clifford_step_n{qubits}"),
            format,
            &step_rows(&clifford_step_cdf(qubits)?),
        )?);
        files.push(write_table(
            dir,
            &format!("analytic_factorized_clifford_step_n{qubits}"),
            format,
            &step_rows(&factorized_clifford_step(qubits)?),
        )?);
    }
    Ok(files)
}

pub fn dist_test(config: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = LoadedConfig::load(config)?;
    let section = cfg
        .doc
        .dist_test
        .as_ref()
        .ok_or_else(|| anyhow!("{}: missing [dist_test] section", cfg.path.display()))?;
    if section.ensembles.is_empty() {
        bail!("{}: [dist_test] lists no ensembles", cfg.path.display());
    }
    let out = resolve(&cfg, opts)?;
    let mut labels = BTreeSet::new();
    let mut qubit_counts = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, spanned) in section.ensembles.iter().enumerate() {
        let e = spanned.get_ref();
        let at = |err: &dyn std::fmt::Display| cfg.error_at(spanned.span(), err);
        if !labels.insert(e.label.clone()) {
            return Err(at(&format!("duplicate ensemble label {:?}", e.label)));
        }
        if e.qubits == 0 || e.qubits > refbench_core::simulator::MAX_QUBITS {
            return Err(at(&format!("qubit count {} out of range", e.qubits)));
        }
        let mut ensemble = ReferenceEnsemble::new(e.qubits, e.layers);
        let mut clifford_type = e.layers.is_clifford();
        if let Some(t) = &e.target {
            let spec = t.spec();
            let gate = spec.resolve(e.qubits).map_err(|err| at(&err))?;
            clifford_type &= gate.unitary.is_clifford();
            ensemble = ensemble.with_interleaved(spec);
        }
        let circuits = e.circuits.unwrap_or(section.circuits);
        if circuits == 0 {
            return Err(at(&"circuit count must be positive"));
        }
        let sample = sample_ensemble(&ensemble, e.depth, circuits, derive_seed(out.seed, &[i as u64]))
            .map_err(|err| at(&err))?;
        let verdict = classify_sample(&sample, clifford_type, e.depth).map_err(|err| at(&err))?;
        let rows: Vec<CdfRow> = sample
            .empirical_cdf()
            .into_iter()
            .map(|(p_x, cdf)| CdfRow { p_x, cdf })
            .collect();
        let empirical_file = write_table(&out.dir, &format!("{}_empirical", e.label), out.format, &rows)?;
        qubit_counts.insert(e.qubits);
        entries.push(EnsembleEntry {
            label: e.label.clone(),
            layers: e.layers,
            target: e.target.as_ref().map(|t| t.spec().gate.label()),
            empirical_file,
            verdict,
        });
    }
    let mut analytic_files = Vec::new();
    for n in qubit_counts {
        analytic_files.extend(write_analytic(&out.dir, out.format, n)?);
    }
    let files = entries
        .iter()
        .map(|e| e.empirical_file.clone())
        .chain(analytic_files.iter().cloned())
        .collect();
    write_report(
        &out.dir,
        &Report {
            metadata: Metadata::new("dist-test", out.seed, &[config])?,
            notes: vec![
                "Haar-type ensembles are compared by one-sample KS distance against 1.63/sqrt(N) with N \
                 pooled values; Clifford-type ensembles by total-variation distance against \
                 1.63/sqrt(C) with C circuits."
                    .to_string(),
            ],
            files,
            body: DistTestBody {
                ensembles: entries,
                analytic_files,
            },
        },
    )
}

/// Arguments of the `fit` command beyond the shared flags.
#[derive(Clone, Debug, Default)]
pub struct FitRequest {
    pub data: PathBuf,
    pub ideal: Option<PathBuf>,
    pub models: Vec<ModelName>,
    pub qubits: Option<usize>,
    pub m_min: usize,
    pub bootstrap: Option<usize>,
    pub ref_errors: Option<Vec<f64>>,
    pub gate_dim: usize,
}

#[derive(Serialize)]
struct FitBody {
    data_kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    qubits: Option<usize>,
    m_min: usize,
    analysis: Analysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    gate: Option<GateFidelity>,
}

pub fn fit(req: &FitRequest, opts: &RunOptions) -> Result<PathBuf> {
    let dataset = read_dataset(&req.data, req.ideal.as_deref())?;
    let qubits = match (&dataset, req.qubits) {
        (Dataset::Circuits { qubits, .. }, Some(q)) if *qubits != q => {
            bail!("data has {qubits}-qubit bitstrings but --qubits is {q}")
        }
        (Dataset::Circuits { qubits, .. }, _) => Some(*qubits),
        (Dataset::Points(_), q) => q,
    };
    let mut names = req.models.clone();
    if names.is_empty() {
        if qubits.is_some() {
            names.push(ModelName::FSingle);
        }
        names.extend([ModelName::Exponential, ModelName::Additive]);
    }
    if req.ref_errors.is_some() && !names.contains(&ModelName::Exponential) {
        names.push(ModelName::Exponential);
    }
    let models = names
        .iter()
        .map(|&m| match (m, qubits) {
            (ModelName::FSingle | ModelName::FSingleShared, None) => {
                bail!("the f-single model needs --qubits for fidelity-point data")
            }
            (m, q) => Ok(m.model(q.unwrap_or(1))),
        })
        .collect::<Result<Vec<DecayModel>>>()?;
    let options = FitOptions::with_m_min(req.m_min);
    let seed = opts.seed.unwrap_or(0);

    let (data_kind, analysis, inputs) = match &dataset {
        Dataset::Points(points) => {
            if req.bootstrap.is_some_and(|b| b > 0) {
                bail!("--bootstrap needs per-circuit counts; fidelity-point data has none");
            }
            let fits = models
                .iter()
                .map(|m| {
                    Ok(FitSummary {
                        fit: fit_decay(points, m, &options)?,
                        bootstrap_stderr: None,
                        bootstrap_fits: 0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let analysis = Analysis {
                fidelity_curve: points.clone(),
                fits,
                bootstrap: None,
            };
            ("fidelity-points", analysis, vec![req.data.clone()])
        }
        Dataset::Circuits { data, .. } => {
            let resamples = req
                .bootstrap
                .unwrap_or(refbench_core::protocol::DEFAULT_BOOTSTRAP_RESAMPLES);
            let analysis = analyze(data, &models, &options, resamples, seed)?;
            let ideal = req
                .ideal
                .clone()
                .unwrap_or_else(|| crate::tables::ideal_sibling(&req.data));
            ("counts", analysis, vec![req.data.clone(), ideal])
        }
    };

    let gate = match &req.ref_errors {
        None => None,
        Some(e) => {
            if let Some(n) = qubits {
                if e.len() != n {
                    bail!("--ref-errors lists {} rates for {n}-qubit data", e.len());
                }
            }
            let interleaved = analysis
                .fit(&DecayModel::Exponential)
                .expect("exponential model is always fitted with --ref-errors");
            Some(interleaved_gate_estimate(
                interleaved,
                &ReferenceErrors::supplied(e)?,
                req.gate_dim,
            )?)
        }
    };

    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let format = opts.format.unwrap_or_default();
    let curve = write_table(
        &dir,
        "fit_curve",
        format,
        &curve_rows(&analysis.fidelity_curve, &analysis.fits),
    )?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut notes = vec![UNCERTAINTY_NOTE.to_string()];
    if gate.is_some() {
        notes.push("Per-qubit error rates e_i were supplied with --ref-errors.".to_string());
    }
    write_report(
        &dir,
        &Report {
            metadata: Metadata::new("fit", seed, &input_refs)?,
            notes,
            files: vec![curve],
            body: FitBody {
                data_kind,
                qubits,
                m_min: req.m_min,
                analysis,
                gate,
            },
        },
    )
}
