use serde::{Deserialize, Serialize};

use super::stats::welch_t;
use super::{AnalyticsError, GroupComparison};
use crate::grading::AnswerStatus;
use crate::scenario::Scenario;
use crate::store::{Latest, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub learner: String,
    /// Rubric scores in rubric-id order.
    pub rubric_scores: Vec<f64>,
    pub overall: f64,
    /// Share of gradable segments answered correctly.
    pub fraction_correct: f64,
    /// Whether each keystone segment was answered correctly, in scenario order.
    pub keystones: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortMatrix {
    pub rows: Vec<CohortRow>,
}

impl CohortMatrix {
    pub fn new(rows: Vec<CohortRow>) -> Result<CohortMatrix, AnalyticsError> {
        let m = CohortMatrix { rows };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let Some(first) = self.rows.first() else { return Ok(()) };
        for r in &self.rows {
            if r.rubric_scores.len() != first.rubric_scores.len() {
                return Err(AnalyticsError::LengthMismatch {
                    left: first.rubric_scores.len(),
                    right: r.rubric_scores.len(),
                });
            }
            if r.keystones.len() != first.keystones.len() {
                return Err(AnalyticsError::LengthMismatch { left: first.keystones.len(), right: r.keystones.len() });
            }
            let in_range = |v: f64| (0.0..=100.0).contains(&v);
            if !r.rubric_scores.iter().all(|v| in_range(*v)) || !in_range(r.overall) {
                return Err(AnalyticsError::OutOfRange(format!("learner {} has a score outside 0..100", r.learner)));
            }
            if !(0.0..=1.0).contains(&r.fraction_correct) {
                return Err(AnalyticsError::OutOfRange(format!("learner {} has a fraction outside 0..1", r.learner)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rubric_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.rubric_scores.len())
    }

    pub fn rubric_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.rubric_scores[j]).collect()
    }

    pub fn overall(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.overall).collect()
    }

    pub fn score_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.rubric_scores.clone()).collect()
    }

    /// Builds the matrix from finalized sessions that have a report. Rows
    /// follow `session_ids` order; other sessions are skipped.
    pub fn from_store(
        store: &Store,
        scenario: &Scenario,
        session_ids: &[String],
    ) -> Result<CohortMatrix, AnalyticsError> {
        let gradable: Vec<_> = scenario.gradable_segments().collect();
        let mut rows = Vec::new();
        for id in session_ids {
            let Some(report) = store.report(id)? else { continue };
            let session = store.session(id)?;
            let mut rubric: Vec<_> = report.rubric_rows.iter().map(|r| (r.rubric_id, r.score as f64)).collect();
            rubric.sort_by_key(|(rid, _)| *rid);
            let solved = |seg: &crate::scenario::SegmentId| -> Result<bool, AnalyticsError> {
                Ok(matches!(
                    store.latest_submission(id, seg)?,
                    Latest::Submitted(r) if r.answer_status == AnswerStatus::Correct
                ))
            };
            let mut correct = 0usize;
            for s in &gradable {
                if solved(&s.id)? {
                    correct += 1;
                }
            }
            let keystones = scenario.keystones.iter().map(&solved).collect::<Result<Vec<_>, _>>()?;
            rows.push(CohortRow {
                learner: session.learner_alias,
                rubric_scores: rubric.into_iter().map(|(_, s)| s).collect(),
                overall: report.overall_score as f64,
                fraction_correct: if gradable.is_empty() { 0.0 } else { correct as f64 / gradable.len() as f64 },
                keystones,
            });
        }
        CohortMatrix::new(rows)
    }

    /// CSV with header `learner,r1..rK,overall,frac,key1..keyM`; flags are
    /// written as 0/1.
    pub fn to_csv(&self) -> String {
        let k = self.rubric_count();
        let m = self.rows.first().map_or(0, |r| r.keystones.len());
        let mut header = vec!["learner".to_string()];
        header.extend((1..=k).map(|i| format!("r{i}")));
        header.push("overall".into());
        header.push("frac".into());
        header.extend((1..=m).map(|i| format!("key{i}")));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.learner.clone()];
            rec.extend(r.rubric_scores.iter().map(|v| fmt_num(*v)));
            rec.push(fmt_num(r.overall));
            rec.push(fmt_num(r.fraction_correct));
            rec.extend(r.keystones.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<CohortMatrix, AnalyticsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let numbered = |prefix: &str| -> Vec<usize> {
            (1..).map(|i| col(&format!("{prefix}{i}"))).take_while(Option::is_some).flatten().collect()
        };
        let learner = col("learner").ok_or_else(|| AnalyticsError::Csv("missing column learner".into()))?;
        let overall = col("overall").ok_or_else(|| AnalyticsError::Csv("missing column overall".into()))?;
        let frac = col("frac").ok_or_else(|| AnalyticsError::Csv("missing column frac".into()))?;
        let rubric_cols = numbered("r");
        let key_cols = numbered("key");
        if rubric_cols.is_empty() {
            return Err(AnalyticsError::Csv("no rubric columns r1..".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let num = |c: usize| -> Result<f64, AnalyticsError> {
                rec.get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| AnalyticsError::Csv(format!("line {line}, column {}: {e}", header[c])))
            };
            let flag = |c: usize| -> Result<bool, AnalyticsError> {
                match rec.get(c).unwrap_or("") {
                    "1" | "true" => Ok(true),
                    "0" | "false" => Ok(false),
                    other => {
                        Err(AnalyticsError::Csv(format!("line {line}, column {}: {other:?} is not a flag", header[c])))
                    }
                }
            };
            rows.push(CohortRow {
                learner: rec.get(learner).unwrap_or("").to_string(),
                rubric_scores: rubric_cols.iter().map(|&c| num(c)).collect::<Result<_, _>>()?,
                overall: num(overall)?,
                fraction_correct: num(frac)?,
                keystones: key_cols.iter().map(|&c| flag(c)).collect::<Result<_, _>>()?,
            });
        }
        CohortMatrix::new(rows)
    }
}

fn csv_err(e: csv::Error) -> AnalyticsError {
    AnalyticsError::Csv(e.to_string())
}

/// Shortest decimal form that round-trips.
pub fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Expert scores per learner: `learner,r1..rK`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpertScores {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ExpertScores {
    pub fn from_csv(text: &str) -> Result<ExpertScores, AnalyticsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("learner") {
            return Err(AnalyticsError::Csv("first column must be learner".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let scores = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| AnalyticsError::Csv(format!("line {}: {e}", i + 2))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((rec.get(0).unwrap_or("").to_string(), scores));
        }
        Ok(ExpertScores { rows })
    }

    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.1.len());
        let mut out = String::from("learner");
        for i in 1..=k {
            out.push_str(&format!(",r{i}"));
        }
        out.push('\n');
        for (learner, scores) in &self.rows {
            out.push_str(learner);
            for s in scores {
                out.push(',');
                out.push_str(&fmt_num(*s));
            }
            out.push('\n');
        }
        out
    }

    /// Pairs model and expert scores per (learner, rubric) cell, in cohort
    /// order. Every cohort learner must have an expert row of equal width.
    pub fn paired_with(&self, cohort: &CohortMatrix) -> Result<(Vec<f64>, Vec<f64>), AnalyticsError> {
        let mut model = Vec::new();
        let mut expert = Vec::new();
        for row in &cohort.rows {
            let (_, scores) = self
                .rows
                .iter()
                .find(|(l, _)| *l == row.learner)
                .ok_or_else(|| AnalyticsError::Csv(format!("no expert scores for learner {}", row.learner)))?;
            if scores.len() != row.rubric_scores.len() {
                return Err(AnalyticsError::LengthMismatch { left: row.rubric_scores.len(), right: scores.len() });
            }
            model.extend(&row.rubric_scores);
            expert.extend(scores);
        }
        Ok((model, expert))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGroups {
    pub path_completed: Vec<bool>,
    pub keystone_success: Vec<bool>,
    pub combined: Vec<bool>,
}

/// Group memberships: path completion is `fraction >= threshold`,
/// keystone success requires every keystone, combined is both.
pub fn classify_paths(m: &CohortMatrix, threshold: f64) -> PathGroups {
    let path_completed: Vec<bool> = m.rows.iter().map(|r| r.fraction_correct >= threshold).collect();
    let keystone_success: Vec<bool> = m.rows.iter().map(|r| r.keystones.iter().all(|k| *k)).collect();
    let combined = path_completed.iter().zip(&keystone_success).map(|(a, b)| *a && *b).collect();
    PathGroups { path_completed, keystone_success, combined }
}

/// Welch comparison of `values` between members and non-members of a
/// group. `None` when either side is too small or has no variance.
pub fn compare_groups(values: &[f64], members: &[bool]) -> Option<GroupComparison> {
    let inside: Vec<f64> = values.iter().zip(members).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let outside: Vec<f64> = values.iter().zip(members).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    welch_t(&inside, &outside).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(learner: &str, frac: f64, keys: [bool; 2]) -> CohortRow {
        CohortRow {
            learner: learner.into(),
            rubric_scores: vec![50.0, 60.5, 70.0, 80.0, 90.0],
            overall: 70.0,
            fraction_correct: frac,
            keystones: keys.to_vec(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let m = CohortMatrix::new(vec![row("a", 0.7, [true, false]), row("b", 0.25, [true, true])]).unwrap();
        let text = m.to_csv();
        assert!(text.starts_with("learner,r1,r2,r3,r4,r5,overall,frac,key1,key2\n"));
        assert_eq!(CohortMatrix::from_csv(&text).unwrap(), m);
    }

    #[test]
    fn path_rules() {
        let m = CohortMatrix::new(vec![
            row("a", 0.7, [true, false]),
            row("b", 0.9, [true, true]),
            row("c", 0.69, [true, true]),
        ])
        .unwrap();
        let g = classify_paths(&m, 0.7);
        assert_eq!(g.path_completed, vec![true, true, false]);
        assert_eq!(g.keystone_success, vec![false, true, true]);
        assert_eq!(g.combined, vec![false, true, false]);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut r = row("a", 0.5, [true, true]);
        r.rubric_scores[0] = 101.0;
        assert!(CohortMatrix::new(vec![r]).is_err());
    }

    #[test]
    fn expert_pairs() {
        let m = CohortMatrix::new(vec![row("a", 0.7, [true, false])]).unwrap();
        let e = ExpertScores::from_csv("learner,r1,r2,r3,r4,r5\na,1,2,3,4,5\n").unwrap();
        let (x, y) = e.paired_with(&m).unwrap();
        assert_eq!(x.len(), 5);
        assert_eq!(y, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(ExpertScores::from_csv(&e.to_csv()).unwrap(), e);
    }
}
