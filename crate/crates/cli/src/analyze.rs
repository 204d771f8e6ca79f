//! Loads a cohort from a simulation or export directory and writes the
//! analysis artifacts.

use std::path::{Path, PathBuf};

use rubricflow_core::analytics::{analyze_cohort, Analysis, AnalyticsError, CohortMatrix, ExpertScores};
use rubricflow_core::{Scenario, Store, StoreError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("{0} holds neither sessions.jsonl nor cohort.csv")]
    NoInput(PathBuf),
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: StoreError },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: AnalyticsError },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl AnalyzeError {
    /// The analytics error underneath, if any.
    pub fn analytics(&self) -> Option<&AnalyticsError> {
        match self {
            AnalyzeError::Input { source, .. } | AnalyzeError::Analytics(source) => Some(source),
            _ => None,
        }
    }
}

fn read(path: &Path) -> Result<String, AnalyzeError> {
    std::fs::read_to_string(path).map_err(|source| AnalyzeError::Io { path: path.to_path_buf(), source })
}

/// Cohort from `dir/sessions.jsonl` (finalized sessions with reports),
/// falling back to `dir/cohort.csv`. `input` may also name either file
/// directly.
pub fn load_cohort(input: &Path, scenario: &Scenario) -> Result<CohortMatrix, AnalyzeError> {
    let (log, csv) = if input.is_dir() {
        (input.join("sessions.jsonl"), input.join("cohort.csv"))
    } else if input.extension().is_some_and(|e| e == "csv") {
        (PathBuf::new(), input.to_path_buf())
    } else {
        (input.to_path_buf(), PathBuf::new())
    };
    if log.is_file() {
        let store = Store::in_memory();
        store.register_scenario(scenario);
        let ids = store.load_log(&read(&log)?).map_err(|source| AnalyzeError::Log { path: log.clone(), source })?;
        return CohortMatrix::from_store(&store, scenario, &ids)
            .map_err(|source| AnalyzeError::Input { path: log, source });
    }
    if csv.is_file() {
        return CohortMatrix::from_csv(&read(&csv)?).map_err(|source| AnalyzeError::Input { path: csv, source });
    }
    Err(AnalyzeError::NoInput(input.to_path_buf()))
}

pub fn load_expert(path: &Path) -> Result<ExpertScores, AnalyzeError> {
    ExpertScores::from_csv(&read(path)?).map_err(|source| AnalyzeError::Input { path: path.to_path_buf(), source })
}

/// Runs the analysis and writes every artifact under `out`. Returns the
/// analysis for reporting.
pub fn analyze_dir(
    input: &Path,
    expert: Option<&Path>,
    out: &Path,
    scenario: &Scenario,
    seed: u64,
) -> Result<Analysis, AnalyzeError> {
    let cohort = load_cohort(input, scenario)?;
    let expert = expert.map(load_expert).transpose()?;
    let analysis = analyze_cohort(&cohort, expert.as_ref(), seed)?;
    write_artifacts(&analysis, out)?;
    Ok(analysis)
}

pub fn write_artifacts(analysis: &Analysis, out: &Path) -> Result<(), AnalyzeError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AnalyzeError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    for (name, body) in &analysis.files {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}
