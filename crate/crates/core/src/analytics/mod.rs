//! Cohort statistics: descriptive summaries, Welch comparisons, agreement
//! with expert scores, k-means with silhouette selection, and PCA.

mod cluster;
mod cohort;
mod pca;
pub mod plots;
pub mod special;
mod stats;
pub mod synthetic;

use serde::Serialize;
use thiserror::Error;

pub use cluster::{
    cluster, kmeans, kmeans_once, restart_seed, select_k, silhouette, standardize, ClusterAssignment, KMeansRun,
    KScore, MAX_ITERATIONS, RESTARTS,
};
pub use cohort::{classify_paths, compare_groups, fmt_num, CohortMatrix, CohortRow, ExpertScores, PathGroups};
pub use pca::{pca, Pca};
pub use stats::{
    agreement, average_ranks, bland_altman, describe, mae, mean, pearson, quantile_sorted, rmse, sample_variance,
    spearman, welch_from_summary, welch_t, AgreementStats, BlandAltman, DescriptiveStats, GroupComparison,
};

use crate::store::StoreError;

/// Default path-completion threshold: share of gradable segments correct.
pub const PATH_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("empty input")]
    EmptyInput,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("need at least {needed} values, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("variance is zero")]
    DegenerateVariance,
    #[error("all rows are identical")]
    DegenerateData,
    #[error("{rows} rows are too few; need {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("{0}")]
    InvalidRange(String),
    #[error("{0}")]
    OutOfRange(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RubricSummary {
    pub rubric: String,
    pub stats: DescriptiveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub mean_silhouette: f64,
    pub sizes: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub scores_by_k: Vec<KScore>,
    pub pca_components: Vec<Vec<f64>>,
    pub pca_eigenvalues: Vec<f64>,
    pub pca_explained_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub threshold: f64,
    pub path_completed: usize,
    pub keystone_success: usize,
    pub combined: usize,
    /// Overall score of members vs non-members.
    pub path_completed_comparison: Option<GroupComparison>,
    pub keystone_comparison: Option<GroupComparison>,
    pub combined_comparison: Option<GroupComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementSummary {
    /// Over every (learner, rubric) cell.
    pub all_cells: AgreementStats,
    pub per_rubric: Vec<AgreementStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsDoc {
    pub n: usize,
    pub overall: DescriptiveStats,
    pub rubrics: Vec<RubricSummary>,
    pub clustering: Option<ClusterSummary>,
    pub clustering_note: Option<String>,
    pub paths: PathSummary,
    pub agreement: Option<AgreementSummary>,
}

/// Stats document plus every artifact file, as (file name, contents).
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub stats: StatsDoc,
    pub files: Vec<(String, String)>,
}

/// Runs the full analysis over a cohort. Clustering failures (for example
/// a cohort too small for k ≥ 2) are reported in the document rather than
/// aborting the run.
pub fn analyze_cohort(
    cohort: &CohortMatrix,
    expert: Option<&ExpertScores>,
    seed: u64,
) -> Result<Analysis, AnalyticsError> {
    if cohort.len() < 2 {
        return Err(AnalyticsError::InsufficientData { needed: 2, found: cohort.len() });
    }
    let overall = describe(&cohort.overall())?;
    let rubrics: Vec<RubricSummary> = (0..cohort.rubric_count())
        .map(|j| Ok(RubricSummary { rubric: format!("r{}", j + 1), stats: describe(&cohort.rubric_column(j))? }))
        .collect::<Result<_, AnalyticsError>>()?;

    let k_max = 8.min(cohort.len().saturating_sub(1));
    let (clusters, clustering_note) = match cluster(&cohort.score_rows(), 2..=k_max.max(2), seed) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let groups = classify_paths(cohort, PATH_THRESHOLD);
    let scores = cohort.overall();
    let count = |v: &[bool]| v.iter().filter(|b| **b).count();
    let paths = PathSummary {
        threshold: PATH_THRESHOLD,
        path_completed: count(&groups.path_completed),
        keystone_success: count(&groups.keystone_success),
        combined: count(&groups.combined),
        path_completed_comparison: compare_groups(&scores, &groups.path_completed),
        keystone_comparison: compare_groups(&scores, &groups.keystone_success),
        combined_comparison: compare_groups(&scores, &groups.combined),
    };

    let mut files = Vec::new();
    let agreement_summary = match expert {
        Some(e) => {
            let (model, reference) = e.paired_with(cohort)?;
            let all_cells = agreement(&model, &reference)?;
            let k = cohort.rubric_count();
            let per_rubric = (0..k)
                .map(|j| {
                    let m: Vec<f64> = model.iter().skip(j).step_by(k).copied().collect();
                    let r: Vec<f64> = reference.iter().skip(j).step_by(k).copied().collect();
                    agreement(&m, &r)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let ba = bland_altman(&model, &reference)?;
            files.push((
                "bland_altman.svg".to_string(),
                plots::bland_altman_svg("Model vs expert rubric scores", &ba.points, ba.bias, ba.loa_low, ba.loa_high),
            ));
            let mut csv = String::from("scope,n,bias,mae,rmse,pearson_r,spearman_rho,loa_low,loa_high\n");
            let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
            for (scope, a) in std::iter::once(("all".to_string(), &all_cells))
                .chain(per_rubric.iter().enumerate().map(|(j, a)| (format!("r{}", j + 1), a)))
            {
                csv.push_str(&format!(
                    "{scope},{},{},{},{},{},{},{},{}\n",
                    a.n,
                    fmt_num(a.bias),
                    fmt_num(a.mae),
                    fmt_num(a.rmse),
                    opt(a.pearson_r),
                    opt(a.spearman_rho),
                    fmt_num(a.loa_low),
                    fmt_num(a.loa_high)
                ));
            }
            files.push(("agreement.csv".to_string(), csv));
            Some(AgreementSummary { all_cells, per_rubric })
        }
        None => None,
    };

    let mut rubric_csv = String::from("rubric,n,mean,sd,min,q1,median,q3,max\n");
    for r in &rubrics {
        let s = &r.stats;
        rubric_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.rubric,
            s.n,
            fmt_num(s.mean),
            fmt_num(s.sd),
            fmt_num(s.min),
            fmt_num(s.q1),
            fmt_num(s.median),
            fmt_num(s.q3),
            fmt_num(s.max)
        ));
    }
    files.push(("rubric_summary.csv".to_string(), rubric_csv));

    let mut path_csv = String::from("learner,overall,frac,path_completed,keystone_success,combined\n");
    for (i, r) in cohort.rows.iter().enumerate() {
        let b = |v: bool| if v { "1" } else { "0" };
        path_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.learner,
            fmt_num(r.overall),
            fmt_num(r.fraction_correct),
            b(groups.path_completed[i]),
            b(groups.keystone_success[i]),
            b(groups.combined[i])
        ));
    }
    files.push(("path_groups.csv".to_string(), path_csv));

    files.push(("histogram.svg".to_string(), plots::histogram_svg("Overall score distribution", &scores, 10.0)));
    let labels: Vec<String> = rubrics.iter().map(|r| r.rubric.to_uppercase()).collect();
    let means: Vec<f64> = rubrics.iter().map(|r| r.stats.mean).collect();
    let sds: Vec<f64> = rubrics.iter().map(|r| r.stats.sd).collect();
    files.push(("rubric_bars.svg".to_string(), plots::rubric_bars_svg("Rubric means (±1 sd)", &labels, &means, &sds)));

    let clustering = clusters.map(|c| {
        let mut csv = String::from("learner,cluster,pc1,pc2\n");
        for (i, r) in cohort.rows.iter().enumerate() {
            let p = &c.pca.projection[i];
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.learner,
                c.labels[i],
                fmt_num(p[0]),
                fmt_num(p.get(1).copied().unwrap_or(0.0))
            ));
        }
        files.push(("clusters.csv".to_string(), csv));
        files.push((
            "pca_scatter.svg".to_string(),
            plots::pca_scatter_svg(&format!("PCA projection, k = {}", c.k), &c.pca.projection, &c.labels),
        ));
        let mut sizes = vec![0; c.k];
        for l in &c.labels {
            sizes[*l] += 1;
        }
        ClusterSummary {
            k: c.k,
            mean_silhouette: c.mean_silhouette,
            sizes,
            centroids: c.centroids,
            scores_by_k: c.scores_by_k,
            pca_components: c.pca.components,
            pca_eigenvalues: c.pca.eigenvalues,
            pca_explained_ratio: c.pca.explained_ratio,
        }
    });

    let stats = StatsDoc {
        n: cohort.len(),
        overall,
        rubrics,
        clustering,
        clustering_note,
        paths,
        agreement: agreement_summary,
    };
    let mut json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    json.push('\n');
    files.push(("stats.json".to_string(), json));
    files.sort();
    Ok(Analysis { stats, files })
}
