use std::time::Instant;

use rubricflow_core::analytics::synthetic::planted_cohort;
use rubricflow_core::analytics::{
    analyze_cohort, cluster, kmeans, standardize, AnalyticsError, CohortMatrix, ExpertScores,
};

#[test]
fn planted_personas_are_recovered() {
    let started = Instant::now();
    let (m, truth) = planted_cohort(7, 4.0, 7);
    assert_eq!(m.len(), 42);
    let c = cluster(&m.score_rows(), 2..=8, 7).unwrap();
    assert_eq!(c.k, 6, "scores by k: {:?}", c.scores_by_k);
    assert!(c.mean_silhouette > 0.4);
    // Same partition as the planted one, up to relabelling.
    for i in 0..truth.len() {
        for j in 0..truth.len() {
            assert_eq!(truth[i] == truth[j], c.labels[i] == c.labels[j]);
        }
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn recovery_holds_across_seeds() {
    for seed in 0..10 {
        let (m, _) = planted_cohort(7, 4.0, seed);
        assert_eq!(cluster(&m.score_rows(), 2..=8, seed).unwrap().k, 6, "seed {seed}");
    }
}

#[test]
fn inertia_never_increases_and_runs_repeat() {
    let (m, _) = planted_cohort(7, 12.0, 3);
    let z = standardize(&m.score_rows());
    for k in 2..=8 {
        let run = kmeans(&z, k, 11).unwrap();
        for w in run.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "k={k}: {:?}", run.inertia_history);
        }
        assert!(run.iterations <= 100);
        assert_eq!(run, kmeans(&z, k, 11).unwrap());
        let mut sizes = vec![0; k];
        run.labels.iter().for_each(|l| sizes[*l] += 1);
        assert!(sizes.iter().all(|s| *s > 0));
    }
}

#[test]
fn analysis_is_deterministic_and_complete() {
    let (m, _) = planted_cohort(7, 4.0, 7);
    let a = analyze_cohort(&m, None, 7).unwrap();
    let b = analyze_cohort(&m, None, 7).unwrap();
    assert_eq!(a.files, b.files);
    let names: Vec<&str> = a.files.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "stats.json",
        "rubric_summary.csv",
        "clusters.csv",
        "path_groups.csv",
        "histogram.svg",
        "pca_scatter.svg",
        "rubric_bars.svg",
    ] {
        assert!(names.contains(&want), "missing {want}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&a.files.iter().find(|f| f.0 == "stats.json").unwrap().1).unwrap();
    for section in ["overall", "rubrics", "clustering", "paths"] {
        assert!(!json[section].is_null(), "section {section}");
    }
    assert!(json["agreement"].is_null());
}

#[test]
fn expert_scores_equal_to_model_agree_perfectly() {
    let (m, _) = planted_cohort(4, 4.0, 1);
    let expert = ExpertScores { rows: m.rows.iter().map(|r| (r.learner.clone(), r.rubric_scores.clone())).collect() };
    let back = ExpertScores::from_csv(&expert.to_csv()).unwrap();
    let a = analyze_cohort(&m, Some(&back), 1).unwrap();
    let ag = a.stats.agreement.unwrap();
    assert!((ag.all_cells.pearson_r.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!((ag.all_cells.bias, ag.all_cells.mae), (0.0, 0.0));
    assert!(a.files.iter().any(|f| f.0 == "bland_altman.svg"));
}

#[test]
fn cohort_csv_round_trips() {
    let (m, _) = planted_cohort(3, 4.0, 5);
    let text = m.to_csv();
    assert!(text.starts_with("learner,r1,r2,r3,r4,r5,overall,frac,key1,key2\n"));
    assert_eq!(CohortMatrix::from_csv(&text).unwrap(), m);
}

#[test]
fn single_learner_is_insufficient() {
    let (m, _) = planted_cohort(1, 4.0, 5);
    let one = CohortMatrix::new(m.rows[..1].to_vec()).unwrap();
    assert!(matches!(analyze_cohort(&one, None, 1), Err(AnalyticsError::InsufficientData { needed: 2, found: 1 })));
    let two = CohortMatrix::new(m.rows[..2].to_vec()).unwrap();
    let a = analyze_cohort(&two, None, 1).unwrap();
    assert!(a.stats.clustering.is_none() && a.stats.clustering_note.is_some());
}
