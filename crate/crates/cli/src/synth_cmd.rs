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

//! `dynmod synth`: write a synthetic cohort or a single planted subject.

use std::path::{Path, PathBuf};

use dynmod::io;
use dynmod::synth::{self, CohortSpec, PlantedDynamics};
use dynmod::{atlas, CohortMetadata, TimeSeries};
use serde::Serialize;

use crate::output::{sha256_file, write_atomic};
use crate::pipeline::{METADATA, SYSTEMS};
use crate::CliError;

#[derive(Debug, Clone)]
pub enum SynthSource {
    /// The built-in 15/6/9 cohort.
    DefaultCohort,
    Cohort(PathBuf),
    Subject(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<(String, String)>,
}

fn read_spec<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    io::read_json(std::io::BufReader::new(f), &path.display().to_string()).map_err(|e| CliError::input(path, e))
}

fn write_subject(out: &Path, id: &str, ts: &TimeSeries, comment: &str) -> Result<PathBuf, CliError> {
    let path = out.join(format!("{id}.csv"));
    write_atomic(&path, |w| io::write_timeseries_csv(w, ts, Some(comment)).map_err(CliError::from))?;
    Ok(path)
}

/// Writes `<id>.csv` per subject plus `metadata.json` and `systems.json`
/// (cohorts only) and returns a manifest of file hashes.
pub fn cmd_synth(source: &SynthSource, out: &Path, seed: u64, config_hash: &str) -> Result<SynthManifest, CliError> {
    let comment = format!("config_hash={config_hash}");
    let mut paths = Vec::new();
    match source {
        SynthSource::Subject(p) => {
            let spec: PlantedDynamics = read_spec(p)?;
            let ts = synth::generate_subject(&spec, seed).map_err(|e| CliError::input(p, e))?;
            paths.push(write_subject(out, &synth::subject_id(0), &ts, &comment)?);
        }
        SynthSource::DefaultCohort | SynthSource::Cohort(_) => {
            let spec: CohortSpec = match source {
                SynthSource::Cohort(p) => read_spec(p)?,
                _ => synth::default_cohort_spec(),
            };
            let (subjects, meta): (_, CohortMetadata) = synth::generate_cohort(&spec, seed).map_err(|e| match source {
                SynthSource::Cohort(p) => CliError::input(p, e),
                _ => CliError::from(e),
            })?;
            let n = subjects.first().map_or(0, |s| s.series.n_regions());
            let sys = atlas::default_systems();
            for s in &subjects {
                paths.push(write_subject(out, &s.id, &s.series, &comment)?);
            }
            let meta_path = out.join(METADATA);
            write_atomic(&meta_path, |w| io::write_json(w, &meta).map_err(CliError::from))?;
            paths.push(meta_path);
            if n == sys.n_regions() && subjects[0].series.region_labels() == sys.region_labels.as_slice() {
                let sys_path = out.join(SYSTEMS);
                write_atomic(&sys_path, |w| io::write_json(w, &sys).map_err(CliError::from))?;
                paths.push(sys_path);
            }
        }
    }
    let mut files = Vec::new();
    for p in &paths {
        let name = p.file_name().expect("file name").to_string_lossy().into_owned();
        files.push((name, sha256_file(p)?));
    }
    Ok(SynthManifest {
        seed,
        config_hash: config_hash.to_string(),
        files,
    })
}
