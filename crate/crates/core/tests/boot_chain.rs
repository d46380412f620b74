// Licensed under the Apache-2.0 license

use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use aspforge::attack::{plan_milanlaunchy, MilanLaunchyOptions, MILANLAUNCHY_PAYLOAD_ID};
use aspforge::boot::{boot_with_sram, BootStage, PayloadError, PayloadRegistry, Sram};
use aspforge::crypto::sha384;
use aspforge::firmware::{AuthScheme, EntryType, FlashImage};
use aspforge::fuse::layout::CUSTOM_PK_SHA384;
use aspforge::fuse::{provision_with_redundancy, Region, SmnBus, FUSE_WINDOW_BASE};
use aspforge::platform::{ScenarioConfig, Testbed, PRISTINE_TCB};
use aspforge::vcek::{derive_tcb_seed, Seed};

fn testbed() -> Testbed {
    Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 21)).unwrap()
}

fn attack_flash(tb: &Testbed) -> FlashImage {
    plan_milanlaunchy(
        &tb.platform.flash,
        &tb.legacy_recovery().unwrap(),
        &tb.world.bootrom_key,
        MilanLaunchyOptions {
            match_bits: 16,
            rng_seed: 3,
            max_trials: None,
        },
    )
    .unwrap()
    .image
}

// Layer-1 seed straight from the definition, for the handoff checks.
fn layer1_ref(root: &Seed, svn: u8) -> Seed {
    let mut t = *root;
    for _ in 0..(255 - svn as u32) {
        t = Sha256::digest(t).into();
    }
    let mut h = Sha256::new();
    h.update([0u8; 8]);
    h.update(t);
    h.finalize().into()
}

#[test]
fn pristine_platform_reaches_full_boot() {
    let mut tb = testbed();
    let out = tb.platform.boot(&PayloadRegistry::new());
    assert_eq!(out.stage_reached, BootStage::FullBoot);
    assert!(out.x86_boot_ok);
    assert_eq!(out.tcb(), Some(PRISTINE_TCB));
    assert_eq!(out.executed_entry, Some(EntryType::PrimaryBootloader));
    assert!(out.code_exec_event.is_none());
    assert_eq!(out.vcek_seed, Some(derive_tcb_seed(&tb.vcek_root, PRISTINE_TCB)));
    assert_eq!(out.handoff.as_ref().unwrap().chip_id, tb.chip_id);
}

#[test]
fn latch_engages_before_any_flash_read() {
    let mut tb = testbed();
    tb.platform.flash = attack_flash(&tb);
    let out = tb.platform.boot(&PayloadRegistry::new());
    let latch = out.event_position("latch_engaged").unwrap();
    let first_flash = out
        .event_log
        .iter()
        .position(|e| e.name.starts_with("ikek_") || e.name.starts_with("module_") || e.name == "entry_absent")
        .unwrap();
    assert!(latch < first_flash);
}

#[test]
fn payload_cannot_read_secrets_after_latch() {
    let mut tb = testbed();
    tb.platform.flash = attack_flash(&tb);
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, |ctx| {
        for i in 0..0x400 {
            ctx.mmio_read(FUSE_WINDOW_BASE + 4 * i)?;
        }
        Ok(())
    });
    let out = tb.platform.boot(&hooks);
    assert!(out.attacker_code_ran());
    assert_eq!(out.secret_reads.len(), 0x400);
    assert!(out.secret_reads.iter().all(|r| r.latched && r.value == 0));
}

#[test]
fn stale_primary_body_stays_in_sram_for_recovery() {
    let mut tb = testbed();
    let flash = attack_flash(&tb);
    let primary = flash.module(EntryType::PrimaryBootloader).unwrap().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen2 = seen.clone();
    let (addr, len) = (primary.header.load_addr, primary.header.image_size as usize);
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, move |ctx| {
        *seen2.lock().unwrap() = ctx.read_sram(addr, len)?;
        ctx.request_reboot();
        Ok(())
    });
    let mut sram = Sram::default();
    let out = boot_with_sram(&mut tb.platform.fuses, &flash, &tb.platform.config, &hooks, &mut sram);
    assert_eq!(out.executed_entry, Some(EntryType::RecoveryBootloader));
    assert!(out.event_log.iter().any(|e| e.name == "module_rejected"));
    assert_eq!(*seen.lock().unwrap(), primary.body);
    assert_eq!(sram.read(addr, len).unwrap(), primary.body.as_slice());
}

#[test]
fn handoff_is_layer_one_only() {
    let mut tb = testbed();
    let out = tb.platform.boot(&PayloadRegistry::new());
    let h = out.handoff.clone().unwrap();
    assert_eq!(h.layer1_seed, layer1_ref(&tb.vcek_root, PRISTINE_TCB.bl_svn));
    assert_ne!(h.layer1_seed, tb.vcek_root);
    assert_ne!(h.rollback_seed, Some(tb.vcek_root));
    let json = out.to_json();
    assert!(!json.contains(&hex::encode(tb.vcek_root)));
}

#[test]
fn legacy_layer1_never_equals_a_higher_svn() {
    let mut scenario = ScenarioConfig::new(AuthScheme::Zen3Milan, 21);
    scenario.distribute_encrypted_fw = false;
    let mut tb = Testbed::new(scenario).unwrap();
    tb.platform.flash = attack_flash(&tb);
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, |ctx| {
        ctx.request_reboot();
        Ok(())
    });
    let out = tb.platform.boot(&hooks);
    assert!(out.attacker_code_ran());
    let cur = out.svns.bl_svn.unwrap();
    let l1 = out.handoff.unwrap().layer1_seed;
    for s in 0..=255u8 {
        assert_eq!(l1 == layer1_ref(&tb.vcek_root, s), s == cur, "svn {s}");
    }
}

#[test]
fn tampered_primary_falls_back_to_recovery() {
    let mut tb = testbed();
    let mut bl = tb.platform.flash.module(EntryType::PrimaryBootloader).unwrap().unwrap();
    bl.body[40] ^= 1;
    tb.platform.flash = tb.platform.flash.with_entry(EntryType::PrimaryBootloader, bl.to_bytes());
    let out = tb.platform.boot(&PayloadRegistry::new());
    assert_eq!(out.executed_entry, Some(EntryType::RecoveryBootloader));
    assert_eq!(out.stage_reached, BootStage::FullBoot);
}

#[test]
fn no_valid_bootloader_is_no_bootable() {
    let mut tb = testbed();
    for t in [EntryType::PrimaryBootloader, EntryType::RecoveryBootloader] {
        let mut bl = tb.platform.flash.module(t).unwrap().unwrap();
        bl.header.svn ^= 1;
        tb.platform.flash = tb.platform.flash.with_entry(t, bl.to_bytes());
    }
    let out = tb.platform.boot(&PayloadRegistry::new());
    assert_eq!(out.stage_reached, BootStage::NoBootable);
    assert!(out.handoff.is_none());
}

#[test]
fn corrupt_redundant_seed_aborts() {
    let mut scenario = ScenarioConfig::new(AuthScheme::Zen3Milan, 21);
    scenario.ecc_fletcher_enforced = true;
    let mut tb = Testbed::new(scenario).unwrap();
    assert_eq!(tb.platform.boot(&PayloadRegistry::new()).stage_reached, BootStage::FullBoot);
    // Two zero bits of one byte: past SEC-DED.
    let zeros: Vec<u32> = (0..8).filter(|k| tb.vcek_root[0] >> k & 1 == 0).collect();
    assert!(zeros.len() >= 2, "fixture seed byte 0 needs two zero bits");
    let base = aspforge::fuse::layout::VCEK_ROOT_SEED.first_bit();
    for &k in &zeros[..2] {
        aspforge::fuse::program_fuse_bit(&mut tb.platform.fuses, base + k).unwrap();
    }
    let out = tb.platform.boot(&PayloadRegistry::new());
    assert_eq!(out.stage_reached, BootStage::FuseAbort);
    assert!(out.abort_reason.unwrap().starts_with("FuseAbort"));
}

#[test]
fn custom_pk_displaces_vendor_key() {
    let mut tb = testbed();
    provision_with_redundancy(&mut tb.platform.fuses, Region::CustomPk, &sha384(b"someone else"), true, true)
        .unwrap();
    let out = tb.platform.boot(&PayloadRegistry::new());
    assert_eq!(out.stage_reached, BootStage::NoBootable);
    let sel = &out.event_log[out.event_position("root_pk_selected").unwrap()];
    assert_eq!(sel.detail["source"], "custom_pk");
    assert_eq!(
        tb.platform.fuses.physical_field(CUSTOM_PK_SHA384),
        sha384(b"someone else").to_vec()
    );
}

#[test]
fn reboot_request_stops_before_layer_two() {
    let mut tb = testbed();
    tb.platform.flash = attack_flash(&tb);
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, |ctx| {
        ctx.request_reboot();
        Ok(())
    });
    let out = tb.platform.boot(&hooks);
    assert!(out.reboot_requested);
    assert_eq!(out.stage_reached, BootStage::BootloaderRunning);
    assert!(out.vcek_seed.is_none());
}

#[test]
fn attack_image_keeps_host_booting() {
    // SEV firmware decrypts to garbage under the swapped IKEK, but its
    // ciphertext signature still holds, so the host comes up.
    let mut tb = testbed();
    tb.platform.flash = attack_flash(&tb);
    let out = tb.platform.boot(&PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, |_| Ok(())));
    assert!(out.attacker_code_ran());
    assert_eq!(out.stage_reached, BootStage::FullBoot);
    assert!(out.x86_boot_ok);
}

#[test]
fn payload_fault_is_reported() {
    let mut tb = testbed();
    tb.platform.flash = attack_flash(&tb);
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, |ctx| {
        ctx.read_sram(u32::MAX - 4, 16)?;
        Ok(())
    });
    let out = tb.platform.boot(&hooks);
    assert!(matches!(out.payload_error, Some(PayloadError::SramBounds { .. })));
    assert!(out.event_position("payload_fault").is_some());
}

#[test]
fn event_log_is_jsonl_with_sequential_steps() {
    let mut tb = testbed();
    let out = tb.platform.boot(&PayloadRegistry::new());
    let lines: Vec<serde_json::Value> = out
        .event_log_jsonl()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), out.event_log.len());
    for (i, v) in lines.iter().enumerate() {
        assert_eq!(v["step"], i);
        assert!(v["name"].is_string());
    }
    assert_eq!(lines.last().unwrap()["name"], "x86_boot");
}
