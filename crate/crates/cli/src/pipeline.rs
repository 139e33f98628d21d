// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Pipeline stages over a results directory.
//!
//! ```text
//! <input>/<subject>.csv, metadata.json, systems.json
//!   dfc        -> dfc/<subject>.json
//!   static-mod -> density_curve.csv
//!   detect     -> assignments/<subject>.csv
//!   measures   -> measures.csv
//!   stats      -> stats.csv, boxplot.csv
//! ```
//!
//! Every stage after `dfc` reads from the input directory, which defaults to
//! the output directory, so stages can be run one at a time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dynmod::connectivity::{dfc_estimate, make_taper, static_fc, ConnectivityKind, ConnectivityMatrix};
use dynmod::io::{self, MeasureRow, StatsRow};
use dynmod::measures::{self, SystemPartition};
use dynmod::multilayer::{build_supra, run_ensemble, ModularityParams};
use dynmod::static_mod::modularity_density_sweep;
use dynmod::stats::{self, CohortMetadata, Group, Posthoc, TestResult};
use dynmod::{atlas, seed, ClampWarning, DynamicConnectivity};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Correction, NullMode, PipelineConfig, StatsValue};
use crate::output::{sha256_file, write_atomic, Failure, Manifest, StageRecord};
use crate::CliError;

pub const METADATA: &str = "metadata.json";
pub const SYSTEMS: &str = "systems.json";
pub const DFC_DIR: &str = "dfc";
pub const ASSIGN_DIR: &str = "assignments";
pub const DENSITY_CURVE: &str = "density_curve.csv";
pub const MEASURES: &str = "measures.csv";
pub const STATS: &str = "stats.csv";
pub const BOXPLOT: &str = "boxplot.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dfc,
    StaticMod,
    Detect,
    Measures,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Dfc, Stage::StaticMod, Stage::Detect, Stage::Measures, Stage::Stats];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Dfc => "dfc",
            Stage::StaticMod => "static-mod",
            Stage::Detect => "detect",
            Stage::Measures => "measures",
            Stage::Stats => "stats",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|k| k.name() == s)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Resolved run settings.
pub struct Run {
    pub cfg: PipelineConfig,
    pub input: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub hash: String,
}

impl Run {
    pub fn new(cfg: PipelineConfig, input: PathBuf, out: PathBuf, jobs: usize) -> Self {
        let hash = cfg.hash();
        Run { cfg, input, out, jobs, hash }
    }

    fn comment(&self) -> String {
        format!("config_hash={}", self.hash)
    }

    /// Seed for one subject in one stage; independent of processing order.
    fn subject_seed(&self, id: &str, stage: Stage) -> u64 {
        seed::derive(seed::derive(self.cfg.seed, seed::hash_str(id)), stage.tag())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// Dynamic and full-scan connectivity of one subject, upper triangles only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfcRecord {
    pub subject: String,
    pub region_labels: Vec<String>,
    pub window_width: usize,
    pub step: usize,
    pub static_fc: Vec<f64>,
    pub layers: Vec<Vec<f64>>,
    pub warnings: Vec<ClampWarning>,
}

fn upper(m: &ConnectivityMatrix) -> Vec<f64> {
    let n = m.n();
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push(m.get(i, j));
        }
    }
    v
}

impl DfcRecord {
    fn n(&self) -> usize {
        self.region_labels.len()
    }

    pub fn static_matrix(&self) -> Result<ConnectivityMatrix, CliError> {
        ConnectivityMatrix::from_upper(self.n(), &self.static_fc, ConnectivityKind::FisherZPositive)
            .map_err(|e| CliError::format(&self.subject, "static_fc", e))
    }

    pub fn dynamic(&self) -> Result<DynamicConnectivity, CliError> {
        let layers = self
            .layers
            .iter()
            .map(|u| ConnectivityMatrix::from_upper(self.n(), u, ConnectivityKind::FisherZPositive))
            .collect::<dynmod::Result<Vec<_>>>()
            .map_err(|e| CliError::format(&self.subject, "layers", e))?;
        let d = DynamicConnectivity {
            layers,
            window_width: self.window_width,
            step: self.step,
            region_labels: self.region_labels.clone(),
            warnings: self.warnings.clone(),
        };
        d.validate().map_err(|e| CliError::format(&self.subject, "layers", e))?;
        Ok(d)
    }
}

fn read_dir_sorted(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == ext) {
            let stem = p.file_stem().expect("file has a stem").to_string_lossy().into_owned();
            out.push((stem, p));
        }
    }
    out.sort();
    Ok(out)
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    io::read_json(std::io::BufReader::new(f), &path.display().to_string()).map_err(|e| CliError::input(path, e))
}

fn load_systems(dir: &Path) -> Result<SystemPartition, CliError> {
    let path = dir.join(SYSTEMS);
    let sys: SystemPartition = read_json_file(&path)?;
    sys.validate().map_err(|e| CliError::input(&path, e))?;
    Ok(sys)
}

fn load_metadata(dir: &Path) -> Result<CohortMetadata, CliError> {
    let path = dir.join(METADATA);
    let meta: CohortMetadata = read_json_file(&path)?;
    meta.validate().map_err(|e| CliError::input(&path, e))?;
    Ok(meta)
}

/// Process subjects in parallel, keeping input order in the output.
fn per_subject<T, F>(run: &Run, items: &[(String, PathBuf)], f: F) -> Result<Vec<(String, Result<T, CliError>)>, CliError>
where
    T: Send,
    F: Fn(&str, &Path) -> Result<T, CliError> + Sync,
{
    let pool = run.pool()?;
    Ok(pool.install(|| {
        items
            .par_iter()
            .map(|(id, path)| (id.clone(), f(id, path)))
            .collect()
    }))
}

fn split<T>(results: Vec<(String, Result<T, CliError>)>, record: &mut StageRecord) -> Vec<(String, T)> {
    let mut ok = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => {
                record.subjects.push(id.clone());
                ok.push((id, v));
            }
            Err(e) => {
                log::warn!("subject {id}: {e}");
                record.failures.push(Failure {
                    subject: id,
                    error: e.to_string(),
                });
            }
        }
    }
    ok
}

fn finish_stage(run: &Run, stage: Stage, mut record: StageRecord, outputs: &[PathBuf]) -> Result<StageRecord, CliError> {
    for p in outputs {
        record.outputs.insert(run.rel(p), sha256_file(p)?);
    }
    let mut manifest = Manifest::load_matching(&run.out, &run.hash)
        .unwrap_or_else(|| Manifest::new(run.hash.clone(), run.cfg.seed, run.cfg.to_toml_string()));
    manifest.stages.insert(stage.name().to_string(), record.clone());
    manifest.save(&run.out)?;
    Ok(record)
}

fn require_nonempty<T>(items: &[T], what: &str, dir: &Path) -> Result<(), CliError> {
    if items.is_empty() {
        return Err(CliError::Input(format!("no {what} found in {}", dir.display())));
    }
    Ok(())
}

pub fn run_stage(run: &Run, stage: Stage) -> Result<StageRecord, CliError> {
    match stage {
        Stage::Dfc => stage_dfc(run),
        Stage::StaticMod => stage_static(run),
        Stage::Detect => stage_detect(run),
        Stage::Measures => stage_measures(run),
        Stage::Stats => stage_stats(run),
    }
}

/// All stages in order. The first stage reads `run.input`; the rest read
/// the results directory.
pub fn run_pipeline(run: &Run) -> Result<Vec<StageRecord>, CliError> {
    if !run.input.join(METADATA).is_file() {
        return Err(CliError::Input(format!("{} is missing {METADATA}", run.input.display())));
    }
    let mut records = vec![stage_dfc(run)?];
    let chained = Run::new(run.cfg.clone(), run.out.clone(), run.out.clone(), run.jobs);
    for stage in &Stage::ALL[1..] {
        records.push(run_stage(&chained, *stage)?);
    }
    Ok(records)
}

fn stage_dfc(run: &Run) -> Result<StageRecord, CliError> {
    let subjects = read_dir_sorted(&run.input, "csv").map_err(|_| {
        CliError::Input(format!("cannot read input directory {}", run.input.display()))
    })?;
    require_nonempty(&subjects, "subject CSV files", &run.input)?;
    let sys = if run.input.join(SYSTEMS).is_file() {
        load_systems(&run.input)?
    } else {
        atlas::default_systems()
    };
    let meta = if run.input.join(METADATA).is_file() {
        Some(load_metadata(&run.input)?)
    } else {
        None
    };
    let taper = make_taper(run.cfg.window_width, run.cfg.taper_sigma).map_err(|e| CliError::Usage(e.to_string()))?;
    let dfc_dir = run.out.join(DFC_DIR);
    let results = per_subject(run, &subjects, |id, path| {
        let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let ts = io::read_timeseries_csv(std::io::BufReader::new(f), run.cfg.sample_period)
            .map_err(|e| CliError::input(path, e))?;
        if ts.region_labels() != sys.region_labels.as_slice() {
            return Err(CliError::Input(format!(
                "{}: region labels do not match {SYSTEMS}",
                path.display()
            )));
        }
        let (stat, mut warnings) = static_fc(&ts).map_err(|e| CliError::input(path, e))?;
        let dyn_fc = dfc_estimate(&ts, &taper, run.cfg.step).map_err(|e| CliError::input(path, e))?;
        warnings.extend(dyn_fc.warnings.iter().cloned());
        for w in &warnings {
            log::warn!("subject {id}: correlation clamped at ({}, {}) r = {}", w.i, w.j, w.r);
        }
        let rec = DfcRecord {
            subject: id.to_string(),
            region_labels: dyn_fc.region_labels.clone(),
            window_width: dyn_fc.window_width,
            step: dyn_fc.step,
            static_fc: upper(&stat),
            layers: dyn_fc.layers.iter().map(upper).collect(),
            warnings,
        };
        let out = dfc_dir.join(format!("{id}.json"));
        write_atomic(&out, |w| io::write_json(w, &rec).map_err(CliError::from))?;
        Ok(out)
    })?;
    let mut record = StageRecord::default();
    let mut outputs: Vec<PathBuf> = split(results, &mut record).into_iter().map(|(_, p)| p).collect();
    let sys_out = run.out.join(SYSTEMS);
    write_atomic(&sys_out, |w| io::write_json(w, &sys).map_err(CliError::from))?;
    outputs.push(sys_out);
    if let Some(meta) = meta {
        let meta_out = run.out.join(METADATA);
        write_atomic(&meta_out, |w| io::write_json(w, &meta).map_err(CliError::from))?;
        outputs.push(meta_out);
    }
    finish_stage(run, Stage::Dfc, record, &outputs)
}

fn dfc_inputs(run: &Run) -> Result<Vec<(String, PathBuf)>, CliError> {
    let dir = run.input.join(DFC_DIR);
    let items = read_dir_sorted(&dir, "json")
        .map_err(|_| CliError::Input(format!("missing {}; run the dfc stage first", dir.display())))?;
    require_nonempty(&items, "connectivity records", &dir)?;
    Ok(items)
}

fn load_dfc(id: &str, path: &Path) -> Result<DfcRecord, CliError> {
    let rec: DfcRecord = read_json_file(path)?;
    if rec.subject != id {
        return Err(CliError::format(id, "subject", format!("record names subject `{}`", rec.subject)));
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub subject: String,
    pub density: f64,
    pub q: f64,
}

fn stage_static(run: &Run) -> Result<StageRecord, CliError> {
    let items = dfc_inputs(run)?;
    let results = per_subject(run, &items, |id, path| {
        let rec = load_dfc(id, path)?;
        let c = rec.static_matrix()?;
        modularity_density_sweep(
            &c,
            &run.cfg.densities,
            run.cfg.gamma,
            run.subject_seed(id, Stage::StaticMod),
            run.cfg.restarts,
        )
        .map_err(|e| CliError::input(path, e))
    })?;
    let mut record = StageRecord::default();
    let curves = split(results, &mut record);
    let rows: Vec<DensityRow> = curves
        .iter()
        .flat_map(|(id, c)| {
            c.densities.iter().zip(&c.q_values).map(move |(d, q)| DensityRow {
                subject: id.clone(),
                density: *d,
                q: *q,
            })
        })
        .collect();
    let out = run.out.join(DENSITY_CURVE);
    let comment = run.comment();
    write_atomic(&out, |w| {
        write_csv_rows(w, &rows, &["subject", "density", "q"], &comment)
    })?;
    finish_stage(run, Stage::StaticMod, record, &[out])
}

fn write_csv_rows<T: Serialize>(w: &mut dyn std::io::Write, rows: &[T], header: &[&str], comment: &str) -> Result<(), CliError> {
    writeln!(w, "# {comment}").map_err(|e| CliError::Io(e.to_string()))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn read_csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(std::io::BufReader::new(f))
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| CliError::Format {
                file: path.display().to_string(),
                field: "row".into(),
                message: format!("row {i}: {e}"),
            })
        })
        .collect()
}

fn modularity_params(run: &Run, id: &str) -> ModularityParams {
    ModularityParams {
        gamma: run.cfg.gamma,
        omega: run.cfg.omega,
        restarts: run.cfg.restarts,
        seed: run.subject_seed(id, Stage::Detect),
    }
}

fn stage_detect(run: &Run) -> Result<StageRecord, CliError> {
    let items = dfc_inputs(run)?;
    let dir = run.out.join(ASSIGN_DIR);
    let comment = run.comment();
    let results = per_subject(run, &items, |id, path| {
        let rec = load_dfc(id, path)?;
        let ml = build_supra(&rec.dynamic()?, run.cfg.gamma, run.cfg.omega).map_err(|e| CliError::input(path, e))?;
        let cas = run_ensemble(&ml, &modularity_params(run, id)).map_err(|e| CliError::input(path, e))?;
        let out = dir.join(format!("{id}.csv"));
        write_atomic(&out, |w| {
            io::write_ensemble_csv(w, &cas, &rec.region_labels, Some(&comment)).map_err(CliError::from)
        })?;
        Ok(out)
    })?;
    let mut record = StageRecord::default();
    let outputs: Vec<PathBuf> = split(results, &mut record).into_iter().map(|(_, p)| p).collect();
    finish_stage(run, Stage::Detect, record, &outputs)
}

fn stage_measures(run: &Run) -> Result<StageRecord, CliError> {
    let dir = run.input.join(ASSIGN_DIR);
    let items = read_dir_sorted(&dir, "csv")
        .map_err(|_| CliError::Input(format!("missing {}; run the detect stage first", dir.display())))?;
    require_nonempty(&items, "assignment files", &dir)?;
    let sys = load_systems(&run.input)?;
    let results = per_subject(run, &items, |id, path| {
        let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let (cas, labels) = io::read_ensemble_csv(std::io::BufReader::new(f)).map_err(|e| CliError::input(path, e))?;
        if labels != sys.region_labels {
            return Err(CliError::format(id, "header", "node labels do not match systems.json"));
        }
        let raw = measures::ensemble_measures(&cas, &sys).map_err(|e| CliError::input(path, e))?;
        let null_seed = run.subject_seed(id, Stage::Measures);
        let null = match run.cfg.null_mode {
            NullMode::Relabel => measures::permutation_null(&cas, &sys, run.cfg.n_perm, null_seed),
            NullMode::Redetect => {
                let dfc_path = run.input.join(DFC_DIR).join(format!("{id}.json"));
                let rec = load_dfc(id, &dfc_path)?;
                let ml = build_supra(&rec.dynamic()?, run.cfg.gamma, run.cfg.omega)
                    .map_err(|e| CliError::input(&dfc_path, e))?;
                measures::permutation_null_redetect(&ml, &sys, run.cfg.n_perm, null_seed)
            }
        }
        .map_err(|e| CliError::input(path, e))?;
        let table = measures::normalize(&raw, &null).map_err(|e| CliError::input(path, e))?;
        let notes: Vec<String> = table
            .normalization_errors(&sys)
            .into_iter()
            .map(|e| format!("subject {id}: {e}"))
            .collect();
        Ok((io::measure_rows(id, &table, &sys), notes))
    })?;
    let mut record = StageRecord::default();
    let mut rows = Vec::new();
    for (_, (r, notes)) in split(results, &mut record) {
        rows.extend(r);
        record.notes.extend(notes);
    }
    let out = run.out.join(MEASURES);
    let comment = run.comment();
    write_atomic(&out, |w| io::write_measures_csv(w, &rows, Some(&comment)).map_err(CliError::from))?;
    finish_stage(run, Stage::Measures, record, &[out])
}

/// One tested quantity: name plus per-subject values.
struct Variable {
    target: String,
    family: String,
    correction: Correction,
    values: BTreeMap<String, f64>,
}

fn measure_family(row: &MeasureRow) -> String {
    let level = row.target.split(':').next().unwrap_or("");
    format!("{}:{level}", row.measure)
}

fn collect_variables(run: &Run, measures_rows: &[MeasureRow], notes: &mut Vec<String>) -> Vec<Variable> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut vars: BTreeMap<(String, String), Variable> = BTreeMap::new();
    let mut missing: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in measures_rows {
        let key = (r.measure.clone(), r.target.clone());
        let v = vars.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Variable {
                target: format!("{}:{}", r.measure, r.target),
                family: measure_family(r),
                correction: run.cfg.correction.measures,
                values: BTreeMap::new(),
            }
        });
        let value = match run.cfg.stats_value {
            StatsValue::Raw => Some(r.raw),
            StatsValue::Normalized => r.normalized,
        };
        match value {
            Some(x) => {
                v.values.insert(r.subject.clone(), x);
            }
            None => *missing.entry(key).or_default() += 1,
        }
    }
    for ((m, t), n) in &missing {
        notes.push(format!("{m}:{t}: {n} subject(s) without a normalized value excluded"));
    }
    order.into_iter().map(|k| vars.remove(&k).expect("variable present")).collect()
}

fn static_variable(run: &Run, rows: &[DensityRow]) -> Result<Variable, CliError> {
    let subset: Vec<f64> = if run.cfg.density_subset.is_empty() {
        run.cfg.densities.clone()
    } else {
        run.cfg.density_subset.clone()
    };
    let mut per: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        per.entry(r.subject.clone()).or_default().push((r.density, r.q));
    }
    let mut values = BTreeMap::new();
    for (id, pts) in per {
        let curve = dynmod::DensityCurve {
            densities: pts.iter().map(|p| p.0).collect(),
            q_values: pts.iter().map(|p| p.1).collect(),
        };
        let q = curve
            .mean_over(&subset)
            .map_err(|e| CliError::format(&id, "density", e))?;
        values.insert(id, q);
    }
    Ok(Variable {
        target: "static_modularity:q_mean".into(),
        family: "static_modularity".into(),
        correction: run.cfg.correction.static_modularity,
        values,
    })
}

struct Pending {
    contrast: String,
    target: String,
    family: String,
    correction: Correction,
    result: TestResult,
}

fn test_variable(run: &Run, var: &Variable, meta: &CohortMetadata, out: &mut Vec<Pending>) -> dynmod::Result<()> {
    let subjects: Vec<_> = meta
        .subjects
        .iter()
        .filter(|s| var.values.contains_key(&s.id))
        .cloned()
        .collect();
    let sub = CohortMetadata { subjects };
    let y: Vec<f64> = sub.subjects.iter().map(|s| var.values[&s.id]).collect();
    let gate = run.cfg.posthoc_gate.then_some(run.cfg.gate_alpha);
    let posthoc = stats::posthoc_ttests(&y, &sub, gate, run.cfg.ttest)?;
    let anova = match &posthoc {
        Posthoc::GateSkipped { anova } => anova.clone(),
        Posthoc::Ran { anova: Some(a), .. } => a.clone(),
        Posthoc::Ran { anova: None, .. } => stats::group_anova(&y, &sub)?,
    };
    let mut push = |result: TestResult| {
        out.push(Pending {
            contrast: result.contrast.clone(),
            target: var.target.clone(),
            family: var.family.clone(),
            correction: var.correction,
            result,
        })
    };
    push(anova);
    for t in posthoc.tests() {
        push(t.clone());
    }
    Ok(())
}

/// Five-number summary per tested quantity and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub target: String,
    pub group: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn boxplot_rows(var: &Variable, meta: &CohortMetadata) -> Vec<BoxplotRow> {
    let mut rows = Vec::new();
    for g in Group::ALL {
        let mut v: Vec<f64> = meta
            .subjects
            .iter()
            .filter(|s| s.group == g)
            .filter_map(|s| var.values.get(&s.id).copied())
            .collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        rows.push(BoxplotRow {
            target: var.target.clone(),
            group: g.name().to_string(),
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        });
    }
    rows
}

/// Fill corrected p-values and rejection flags per (contrast, family).
fn correct(run: &Run, pending: Vec<Pending>) -> Result<Vec<StatsRow>, CliError> {
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, p) in pending.iter().enumerate() {
        groups.entry((p.contrast.clone(), p.family.clone())).or_default().push(i);
    }
    let mut rows: Vec<StatsRow> = pending
        .iter()
        .map(|p| StatsRow {
            contrast: p.contrast.clone(),
            target: p.target.clone(),
            statistic: p.result.statistic,
            dof: p.result.dof,
            p_raw: p.result.p,
            p_fdr: f64::NAN,
            p_bonferroni: f64::NAN,
            rejected: false,
        })
        .collect();
    for idx in groups.values() {
        let p: Vec<f64> = idx.iter().map(|i| pending[*i].result.p).collect();
        let (fdr_reject, fdr_adj) = stats::fdr_bh(&p, run.cfg.fdr_q)?;
        let (bon_reject, bon_adj) = stats::bonferroni(&p, run.cfg.alpha)?;
        for (k, i) in idx.iter().enumerate() {
            rows[*i].p_fdr = fdr_adj[k];
            rows[*i].p_bonferroni = bon_adj[k];
            rows[*i].rejected = match pending[*i].correction {
                Correction::Fdr => fdr_reject[k],
                Correction::Bonferroni => bon_reject[k],
            };
        }
    }
    Ok(rows)
}

fn stage_stats(run: &Run) -> Result<StageRecord, CliError> {
    let measures_path = run.input.join(MEASURES);
    if !measures_path.is_file() {
        return Err(CliError::Input(format!(
            "missing {}; run the measures stage first",
            measures_path.display()
        )));
    }
    let meta = load_metadata(&run.input)?;
    let f = fs::File::open(&measures_path).map_err(|e| CliError::io(&measures_path, e))?;
    let measure_rows = io::read_measures_csv(std::io::BufReader::new(f)).map_err(|e| CliError::input(&measures_path, e))?;
    require_nonempty(&measure_rows, "measure rows", &run.input)?;

    let mut record = StageRecord::default();
    let mut vars = Vec::new();
    let density_path = run.input.join(DENSITY_CURVE);
    if density_path.is_file() {
        let rows: Vec<DensityRow> = read_csv_rows(&density_path)?;
        if !rows.is_empty() {
            vars.push(static_variable(run, &rows)?);
        }
    }
    vars.extend(collect_variables(run, &measure_rows, &mut record.notes));

    let mut pending = Vec::new();
    let mut boxes = Vec::new();
    for var in &vars {
        if let Err(e) = test_variable(run, var, &meta, &mut pending) {
            record.notes.push(format!("{}: not tested: {e}", var.target));
        }
        boxes.extend(boxplot_rows(var, &meta));
    }
    record.subjects = meta
        .subjects
        .iter()
        .filter(|s| vars.iter().any(|v| v.values.contains_key(&s.id)))
        .map(|s| s.id.clone())
        .collect();
    let rows = correct(run, pending)?;
    let comment = run.comment();
    let out = run.out.join(STATS);
    write_atomic(&out, |w| io::write_stats_csv(w, &rows, Some(&comment)).map_err(CliError::from))?;
    let box_out = run.out.join(BOXPLOT);
    write_atomic(&box_out, |w| {
        write_csv_rows(w, &boxes, &["target", "group", "n", "min", "q1", "median", "q3", "max"], &comment)
    })?;
    finish_stage(run, Stage::Stats, record, &[out, box_out])
}
