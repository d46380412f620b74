// Licensed under the Apache-2.0 license

//! Attack drivers run against the simulator: the IKEK-swap code execution
//! exploit, the two fuse-burner attacks and report forging.

mod badfuse;
mod forge;
mod milanlaunchy;
mod search;

pub use badfuse::{
    attacker_flash, badfuse_custom_pk, badfuse_oracle, AttackIRun, OracleDecision, OracleRun, OracleState,
    CUSTOM_BL_PAYLOAD_ID,
};
pub use forge::{forge_report, vcek_seed_for, ExtractedMaterial, SeedMaterial};
pub use milanlaunchy::{
    exfil_payload, parse_exfil, plan_milanlaunchy, run_milanlaunchy, MilanLaunchyOptions, MilanLaunchyPlan,
    MilanLaunchyRun, MILANLAUNCHY_PAYLOAD_ID,
};
pub use search::{
    milanlaunchy_search, milanlaunchy_search_landing, prefix_matches, CandidateStream, CollisionFound,
    CollisionSearchSpec,
};

use thiserror::Error;

use crate::boot::{BootOutcome, BootStage, PayloadError};
use crate::firmware::FirmwareError;
use crate::fuse::FuseError;
use crate::vcek::VcekError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("collision search gave up after {trials} trials")]
    SearchBudgetExceeded { trials: u64 },
    #[error("WriteProtected: burner rejected fuse bit {0}")]
    WriteProtected(u32),
    #[error("{0}")]
    FuseAbort(String),
    #[error("boot did not reach the payload (stage {0:?})")]
    NoCodeExec(BootStage),
    #[error("payload failed: {0}")]
    PayloadFault(String),
    #[error("payload left no seed material in DRAM")]
    MissingExfil,
    #[error("material captured at SVN {cur} cannot reach bootloader SVN {target}")]
    Unreachable { cur: u8, target: u8 },
    #[error(transparent)]
    Firmware(#[from] FirmwareError),
    #[error(transparent)]
    Fuse(#[from] FuseError),
    #[error(transparent)]
    Vcek(#[from] VcekError),
}

impl From<PayloadError> for AttackError {
    fn from(e: PayloadError) -> Self {
        match e {
            PayloadError::Fuse(FuseError::WriteProtected(bit)) => AttackError::WriteProtected(bit),
            other => AttackError::PayloadFault(other.to_string()),
        }
    }
}

/// Fails unless attacker code ran and returned cleanly.
pub(crate) fn require_code_exec(outcome: &BootOutcome) -> Result<(), AttackError> {
    if outcome.stage_reached == BootStage::FuseAbort {
        return Err(AttackError::FuseAbort(
            outcome.abort_reason.clone().unwrap_or_else(|| "FuseAbort".into()),
        ));
    }
    if !outcome.attacker_code_ran() {
        return Err(AttackError::NoCodeExec(outcome.stage_reached));
    }
    if let Some(e) = &outcome.payload_error {
        return Err(e.clone().into());
    }
    Ok(())
}
