//! Command-line front end for the delta-power-variation toolkit.
//!
//! The library half of the binary: experiment configuration ([`config`]),
//! Monte Carlo orchestration and CLT validation ([`experiment`]), and
//! deterministic serialization ([`io`]). The binary in `main.rs` is a thin
//! argument-parsing shell over these modules so that integration tests can
//! drive the same code paths in-process.

pub mod config;
pub mod experiment;
pub mod io;

/// Errors raised by the front end itself (as opposed to the numerics
/// library underneath).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Command-line arguments or a configuration file violate a documented
    /// requirement. Maps to exit code 2, like invalid parameters from the
    /// numerics library.
    #[error("{0}")]
    InvalidArguments(String),

    /// More than the tolerated share of Monte Carlo replications failed.
    /// Maps to exit code 4; the partial outputs are still written.
    #[error(
        "experiment failed: {failed} of {total} replication estimates errored, \
         exceeding the 10% failure budget"
    )]
    ExperimentFailed {
        /// Number of failed (replication, resolution) estimates.
        failed: usize,
        /// Total number of (replication, resolution) estimates attempted.
        total: usize,
    },
}

/// Process exit code for an error, mirroring the documented contract:
///
/// * `2` — invalid parameters, malformed input data, or indexing errors
///   (anything the caller can fix by changing arguments);
/// * `3` — numerical failure or a diverging simulation;
/// * `4` — a Monte Carlo experiment exceeded its failure budget;
/// * `1` — everything else (I/O errors and other environmental problems).
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(cli) = err.downcast_ref::<CliError>() {
        return match cli {
            CliError::InvalidArguments(_) => 2,
            CliError::ExperimentFailed { .. } => 4,
        };
    }
    if let Some(lib) = err.downcast_ref::<deltavar::error::Error>() {
        use deltavar::error::Error;
        return match lib {
            Error::InvalidParameter(_) | Error::InvalidData(_) | Error::IndexOutOfRange(_) => 2,
            Error::Numerical(_) | Error::SimulationDiverged { .. } => 3,
        };
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;
    use deltavar::error::Error;

    #[test]
    fn exit_codes_follow_the_documented_contract() {
        let cases: Vec<(anyhow::Error, u8)> = vec![
            (CliError::InvalidArguments("bad".into()).into(), 2),
            (CliError::ExperimentFailed { failed: 3, total: 10 }.into(), 4),
            (Error::invalid("x").into(), 2),
            (Error::InvalidData("x".into()).into(), 2),
            (Error::IndexOutOfRange("x".into()).into(), 2),
            (Error::numerical("x").into(), 3),
            (Error::SimulationDiverged { step: 7 }.into(), 3),
            (std::io::Error::other("disk on fire").into(), 1),
        ];
        for (err, want) in cases {
            assert_eq!(exit_code_for(&err), want, "error: {err}");
        }
    }

    #[test]
    fn exit_codes_see_through_anyhow_context() {
        let err = anyhow::Error::from(Error::SimulationDiverged { step: 3 })
            .context("while simulating replication 5");
        assert_eq!(exit_code_for(&err), 3);
    }
}
