use std::time::Instant;

use serde::Serialize;

/// Provenance written into every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub version: &'static str,
    /// Omitted from CSV headers so reruns reproduce them byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

pub struct Recorder {
    subcommand: &'static str,
    flags: serde_json::Value,
    seed: Option<u64>,
    start: Instant,
}

impl Recorder {
    pub fn start<A: Serialize>(subcommand: &'static str, args: &A, seed: Option<u64>) -> Self {
        Recorder {
            subcommand,
            flags: serde_json::to_value(args).unwrap_or(serde_json::Value::Null),
            seed,
            start: Instant::now(),
        }
    }

    /// Manifest without the wall time.
    pub fn reproducible(&self) -> RunManifest {
        RunManifest {
            subcommand: self.subcommand,
            flags: self.flags.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: None,
        }
    }

    pub fn finish(&self) -> RunManifest {
        RunManifest {
            wall_time_s: Some(self.start.elapsed().as_secs_f64()),
            ..self.reproducible()
        }
    }

    /// Single-line comment for CSV headers.
    pub fn csv_comment(&self) -> String {
        format!(
            "# manifest: {}",
            serde_json::to_string(&self.reproducible()).expect("manifest serializes")
        )
    }
}
