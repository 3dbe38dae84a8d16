//! Plot-ready tables and external data files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so any
//! table read back reproduces the written values bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use refbench_core::fit::ModelId;
use refbench_core::protocol::{CircuitOutcomes, DepthData, FitSummary};
use refbench_core::xeb::circuit_record;
use refbench_core::FidelityPoint64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// One row of a fidelity curve file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub depth: usize,
    pub fidelity: f64,
    pub stderr: Option<f64>,
    pub model_prediction_f_single: Option<f64>,
    pub model_prediction_exponential: Option<f64>,
    pub model_prediction_additive: Option<f64>,
}

pub fn curve_rows(curve: &[FidelityPoint64], fits: &[FitSummary]) -> Vec<CurveRow> {
    let predict = |id: ModelId, m: usize| fits.iter().find(|f| f.fit.model_id == id).map(|f| f.fit.predict(m));
    curve
        .iter()
        .map(|p| CurveRow {
            depth: p.depth,
            fidelity: p.fidelity,
            stderr: p.stderr,
            model_prediction_f_single: predict(ModelId::FSingle, p.depth),
            model_prediction_exponential: predict(ModelId::Exponential, p.depth),
            model_prediction_additive: predict(ModelId::Additive, p.depth),
        })
        .collect()
}

/// One row of a CDF table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    #[serde(rename = "P_x")]
    pub p_x: f64,
    pub cdf: f64,
}

/// Writes `rows` to `dir/stem.<ext>` and returns the path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, format: Format, rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let bytes = match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(vec![]);
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| anyhow!("{e}"))?
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows)?;
            s.push('\n');
            s.into_bytes()
        }
    };
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Measurement data accepted by `fit`.
#[derive(Debug)]
pub enum Dataset {
    /// Aggregated fidelities, one per depth.
    Points(Vec<FidelityPoint64>),
    /// Per-circuit records built from counts, with the register size.
    Circuits { qubits: usize, data: Vec<DepthData> },
}

/// Reads a fidelity-point file (CSV with `depth,fidelity[,stderr]` columns,
/// extra columns ignored, or the JSON curve format) or a counts file with
/// its ideal-probability companion.
pub fn read_dataset(path: &Path, ideal: Option<&Path>) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let rows: Vec<PointRow> =
            serde_json::from_str(&text).with_context(|| format!("{}: not a fidelity-point table", path.display()))?;
        return Ok(Dataset::Points(rows.into_iter().map(PointRow::point).collect()));
    }
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let has = |name: &str| headers.iter().any(|h| h == name);
    if has("bitstring") && has("count") {
        let ideal_path = ideal.map(Path::to_path_buf).unwrap_or_else(|| ideal_sibling(path));
        read_counts(path, &ideal_path)
    } else if has("depth") && has("fidelity") {
        let mut points = Vec::new();
        for (i, row) in reader.deserialize::<PointRow>().enumerate() {
            // header is line 1
            let row = row.map_err(|e| anyhow!("{}:{}: malformed row: {e}", path.display(), i + 2))?;
            points.push(row.point());
        }
        Ok(Dataset::Points(points))
    } else {
        bail!(
            "{}:1: unrecognized header; expected depth,fidelity[,stderr] or depth,circuit,bitstring,count",
            path.display()
        )
    }
}

/// `counts.csv` pairs with `counts_ideal.csv`.
pub fn ideal_sibling(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_ideal.csv"))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))
}

#[derive(Deserialize)]
struct PointRow {
    depth: usize,
    fidelity: f64,
    #[serde(default)]
    stderr: Option<f64>,
}

impl PointRow {
    fn point(self) -> FidelityPoint64 {
        FidelityPoint64 {
            stderr: self.stderr,
            ..FidelityPoint64::new(self.depth, self.fidelity)
        }
    }
}

#[derive(Deserialize)]
struct CountRow {
    depth: usize,
    circuit: usize,
    bitstring: String,
    count: u64,
}

#[derive(Deserialize)]
struct IdealRow {
    depth: usize,
    circuit: usize,
    bitstring: String,
    ideal_prob: f64,
}

type CircuitKey = (usize, usize);

/// Collects `(depth, circuit) → bitstring index → value` with a shared
/// qubit count across both files.
struct Collector<'a> {
    path: &'a Path,
    qubits: &'a mut Option<usize>,
}

impl Collector<'_> {
    fn index(&mut self, line: usize, bits: &str) -> Result<usize> {
        if bits.is_empty() || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            bail!(
                "{}:{line}: bitstring {bits:?} is not a string of 0/1",
                self.path.display()
            );
        }
        match *self.qubits {
            None => *self.qubits = Some(bits.len()),
            Some(n) if n != bits.len() => bail!(
                "{}:{line}: bitstring {bits:?} has {} qubits, earlier rows have {n}; mixed qubit counts",
                self.path.display(),
                bits.len()
            ),
            _ => {}
        }
        if bits.len() > refbench_core::simulator::MAX_QUBITS {
            bail!(
                "{}:{line}: more than {} qubits",
                self.path.display(),
                refbench_core::simulator::MAX_QUBITS
            );
        }
        // qubit 0 is the leftmost, most significant bit
        Ok(usize::from_str_radix(bits, 2)?)
    }
}

fn read_counts(path: &Path, ideal_path: &Path) -> Result<Dataset> {
    let mut qubits = None;
    let mut counts: BTreeMap<CircuitKey, BTreeMap<usize, u64>> = BTreeMap::new();
    let mut ideal: BTreeMap<CircuitKey, BTreeMap<usize, f64>> = BTreeMap::new();
    {
        let mut c = Collector {
            path,
            qubits: &mut qubits,
        };
        for (i, row) in csv_reader(path)?.deserialize::<CountRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| anyhow!("{}:{line}: malformed row: {e}", path.display()))?;
            let idx = c.index(line, &row.bitstring)?;
            if counts
                .entry((row.depth, row.circuit))
                .or_default()
                .insert(idx, row.count)
                .is_some()
            {
                bail!("{}:{line}: duplicate bitstring {}", path.display(), row.bitstring);
            }
        }
    }
    {
        let mut c = Collector {
            path: ideal_path,
            qubits: &mut qubits,
        };
        for (i, row) in csv_reader(ideal_path)?.deserialize::<IdealRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| anyhow!("{}:{line}: malformed row: {e}", ideal_path.display()))?;
            let idx = c.index(line, &row.bitstring)?;
            if ideal
                .entry((row.depth, row.circuit))
                .or_default()
                .insert(idx, row.ideal_prob)
                .is_some()
            {
                bail!("{}:{line}: duplicate bitstring {}", ideal_path.display(), row.bitstring);
            }
        }
    }
    let n = qubits.ok_or_else(|| anyhow!("{}: no data rows", path.display()))?;
    let dim = 1usize << n;
    let mut by_depth: BTreeMap<usize, Vec<refbench_core::CircuitRecord64>> = BTreeMap::new();
    for (&(depth, circuit), c) in &counts {
        let p = ideal.get(&(depth, circuit)).ok_or_else(|| {
            anyhow!(
                "{}: no ideal probabilities for depth {depth}, circuit {circuit}",
                ideal_path.display()
            )
        })?;
        let total: u64 = c.values().sum();
        if total == 0 {
            bail!("{}: depth {depth}, circuit {circuit} has zero counts", path.display());
        }
        let measured: Vec<f64> = (0..dim)
            .map(|b| *c.get(&b).unwrap_or(&0) as f64 / total as f64)
            .collect();
        let ideal_probs: Vec<f64> = (0..dim).map(|b| *p.get(&b).unwrap_or(&0.0)).collect();
        let record = circuit_record(&ideal_probs, &measured, depth)
            .with_context(|| format!("depth {depth}, circuit {circuit}"))?;
        by_depth.entry(depth).or_default().push(record);
    }
    if let Some(&(depth, circuit)) = ideal.keys().find(|k| !counts.contains_key(k)) {
        bail!("{}: no counts for depth {depth}, circuit {circuit}", path.display());
    }
    Ok(Dataset::Circuits {
        qubits: n,
        data: by_depth
            .into_iter()
            .map(|(depth, records)| DepthData {
                depth,
                outcomes: CircuitOutcomes::Xeb(records),
            })
            .collect(),
    })
}
