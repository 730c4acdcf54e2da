//! Experiment runner: TOML configs, per-seed artifacts under
//! `<out>/<config-hash>/<seed>/`, and seed sweeps.

pub mod config;
pub mod run;

pub use config::{CorpusConfig, ExperimentConfig};
pub use run::{Data, Experiment, Manifest, MetricSummary, SweepSummary};

/// Machine-readable failure line: `{"error": <kind>, "message": <text>}`.
pub fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| {
            if let Some(e) = e.downcast_ref::<uneven::Error>() {
                Some(e.kind())
            } else if e.is::<toml::de::Error>() {
                Some("invalid_config")
            } else if e.is::<std::io::Error>() {
                Some("io")
            } else {
                None
            }
        })
        .unwrap_or("error");
    let message: Vec<String> = err.chain().map(ToString::to_string).collect();
    serde_json::json!({ "error": kind, "message": message.join(": ") }).to_string()
}
