//! Core engine for multi-stage algebra assessment.
//!
//! The crate is organised around the path evidence takes through the system:
//!
//! * [`scenario`] describes the task graph: stages, segments, rubrics and the
//!   many-to-many mapping between segments and rubric subcategories.
//! * [`block`] is the block-coding mini-language (AST, XML form, interpreter,
//!   template matching) plus the closed-form consecutive-number solver.
//! * [`grading`] grades one submission per segment and applies the tiered
//!   feedback policy.
//! * [`store`] is the append-only record of sessions, submissions and
//!   evaluations, with JSONL interchange.
//! * [`rubric`] collects per-rubric evidence and turns it into leveled
//!   judgments through an [`llm::LlmClient`], with a deterministic fallback.
//! * [`analytics`] holds the cohort statistics: descriptive summaries, Welch
//!   tests, agreement metrics, k-means with silhouette selection, and PCA.

pub mod analytics;
pub mod block;
pub mod grading;
pub mod llm;
pub mod rubric;
pub mod scenario;
pub mod store;

pub use block::{BlockError, BlockProgram, BlockTemplate, Expr, Stmt};
pub use grading::{AnswerStatus, Feedback, FeedbackTier, Grader, SegmentEvaluation, SubmissionRecord};
pub use llm::{LlmClient, LlmError, LlmRequest, StubLlm};
pub use rubric::{BandConfig, Level, OverallReport, RubricEvaluation, SelfCheck};
pub use scenario::{Scenario, ScenarioError, Segment, SegmentId};
pub use store::{SessionId, Store, StoreError};
