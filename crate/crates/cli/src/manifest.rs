//! Run manifest: the config echo, code version, policy constants in force,
//! wall-clock per phase, and produced files. Serialized into every report.

use serde::{Deserialize, Serialize};

use lindblad_egorov::correspondence::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConstants {
    /// Garding constant in the semigroup exponent
    pub c0: f64,
    /// boundary amplitude ratio flagged as a box violation
    pub box_floor: f64,
    /// fraction of [0, T] used to fit the envelope constant
    pub fit_fraction: f64,
    /// allowed deviation of the matrix-side vs symbol-side distance
    pub crosscheck_tol: f64,
    /// slack on semigroup envelope checks
    pub contraction_tol: f64,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub parse_s: f64,
    pub compute_s: f64,
    pub emit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_path: Option<String>,
    pub config: Option<ExperimentConfig>,
    pub policy: PolicyConstants,
    pub timings: Timings,
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let m = RunManifest {
            version: "0.1.0".into(),
            command: "run".into(),
            config_path: Some("cfg.json".into()),
            config: None,
            policy: PolicyConstants {
                c0: 1.0,
                box_floor: 1e-8,
                fit_fraction: 0.5,
                crosscheck_tol: 1e-9,
                contraction_tol: 1e-6,
                seed: 42,
                threads: 1,
            },
            timings: Timings {
                parse_s: 0.001,
                compute_s: 12.5,
                emit_s: 0.02,
            },
            outputs: vec!["out/run.csv".into()],
        };
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}
