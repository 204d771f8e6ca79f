//! Gateway and tooling around `rubricflow-core`: the HTTP API, the HTTP
//! model client, log replay, the persona simulator and the analysis driver.

pub mod analyze;
pub mod api;
pub mod llm_http;
pub mod replay;
pub mod simulate;
