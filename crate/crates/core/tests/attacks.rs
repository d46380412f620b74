// Licensed under the Apache-2.0 license

use aspforge::attack::{
    badfuse_custom_pk, badfuse_oracle, forge_report, parse_exfil, plan_milanlaunchy, run_milanlaunchy,
    vcek_seed_for, AttackError, MilanLaunchyOptions, SeedMaterial, MILANLAUNCHY_PAYLOAD_ID,
};
use aspforge::boot::{BootStage, PayloadRegistry};
use aspforge::crypto::{sha384, SignatureKeyPair};
use aspforge::firmware::AuthScheme;
use aspforge::fuse::layout::CUSTOM_PK_SHA384;
use aspforge::platform::{ScenarioConfig, Testbed, PRISTINE_TCB};
use aspforge::vcek::{derive_tcb_seed, TcbVersion};

fn attacked(scenario: ScenarioConfig) -> Testbed {
    let mut tb = Testbed::new(scenario).unwrap();
    tb.platform.flash = plan_milanlaunchy(
        &tb.platform.flash,
        &tb.legacy_recovery().unwrap(),
        &tb.world.bootrom_key,
        MilanLaunchyOptions {
            rng_seed: 5,
            ..Default::default()
        },
    )
    .unwrap()
    .image;
    tb
}

fn milan(seed: u64) -> ScenarioConfig {
    ScenarioConfig::new(AuthScheme::Zen3Milan, seed)
}

#[test]
fn oracle_recovers_root_bit_by_bit() {
    let mut tb = attacked(milan(31));
    let run = badfuse_oracle(&mut tb.platform).unwrap();
    assert_eq!(run.recovered_seed, tb.vcek_root);
    assert_eq!(run.chip_id, tb.chip_id);
    assert_eq!(run.reboots, 256);
    assert_eq!(run.stages.len(), 257);
    assert!(run.stages.iter().all(|s| *s == BootStage::BootloaderRunning));
    let zeros: u32 = tb.vcek_root.iter().map(|b| b.count_zeros()).sum();
    assert_eq!(run.baseline_updates, zeros);
    for d in &run.decisions {
        assert_eq!(d.value, tb.vcek_root[d.bit as usize / 8] >> (d.bit % 8) & 1);
        assert_eq!(d.changed, d.value == 0);
    }
    assert!(run.secret_reads.iter().all(|r| r.latched && r.value == 0));
    // Every seed bit is now blown.
    assert_eq!(tb.platform.fuses.physical_field(aspforge::fuse::layout::VCEK_ROOT_SEED), vec![0xFF; 32]);
}

#[test]
fn oracle_material_forges_any_tcb() {
    let mut tb = attacked(milan(32));
    let kds = tb.kds.clone();
    let run = badfuse_oracle(&mut tb.platform).unwrap();
    let material = run.material();
    for t in [TcbVersion::new(0, 0, 0), PRISTINE_TCB, TcbVersion::new(255, 255, 255)] {
        let report = forge_report(&material, t, [4; 48], [5; 64]).unwrap();
        assert!(kds.verify_report(&report, &kds.issue(&tb.chip_id, t).unwrap()));
    }
}

#[test]
fn custom_pk_attack_extracts_top_svn_material() {
    let attacker = SignatureKeyPair::generate_rsa(0x5EED);
    let mut tb = attacked(milan(33));
    let run = badfuse_custom_pk(&mut tb.platform, &attacker, &tb.world.bootrom_key).unwrap();
    assert_eq!(run.attacker_pk_digest, sha384(&attacker.public_bytes()));
    assert_eq!(tb.platform.fuses.physical_field(CUSTOM_PK_SHA384), run.attacker_pk_digest.to_vec());
    assert!(run.exfil_outcome.attacker_code_ran());
    let SeedMaterial::Layer { cur, rollback_seed, .. } = run.material.material else {
        panic!("expected layer material");
    };
    assert_eq!(cur, 255);
    assert!(rollback_seed.is_some());
    for t in [TcbVersion::new(0, 1, 2), PRISTINE_TCB, TcbVersion::new(254, 9, 9), TcbVersion::new(255, 0, 0)] {
        assert_eq!(vcek_seed_for(&run.material.material, t).unwrap(), derive_tcb_seed(&tb.vcek_root, t));
    }
    let t = PRISTINE_TCB;
    let report = forge_report(&run.material, t, [1; 48], [2; 64]).unwrap();
    assert!(tb.kds.verify_report(&report, &tb.kds.issue(&tb.chip_id, t).unwrap()));
}

#[test]
fn milanlaunchy_exfil_layout() {
    let mut tb = Testbed::new(milan(34)).unwrap();
    let legacy = tb.legacy_recovery().unwrap();
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, aspforge::attack::exfil_payload);
    let run = run_milanlaunchy(&mut tb.platform, &legacy, &tb.world.bootrom_key, &hooks, Default::default()).unwrap();
    assert!(run.outcome.attacker_code_ran());
    let (l1, rb) = parse_exfil(&run.outcome.dram_out).unwrap();
    assert_eq!(rb, None, "legacy recovery runs at SVN 0");
    let t = TcbVersion::new(0, PRISTINE_TCB.sevfw_svn, PRISTINE_TCB.ucode_svn);
    let m = SeedMaterial::Layer {
        cur: 0,
        layer1_seed: l1,
        rollback_seed: rb,
    };
    assert_eq!(vcek_seed_for(&m, t).unwrap(), derive_tcb_seed(&tb.vcek_root, t));
    assert_eq!(
        vcek_seed_for(&m, PRISTINE_TCB),
        Err(AttackError::Unreachable { cur: 0, target: PRISTINE_TCB.bl_svn })
    );
}

#[test]
fn oracle_needs_code_exec() {
    // Vendor flash: the probe never runs.
    let mut tb = Testbed::new(milan(35)).unwrap();
    assert_eq!(
        badfuse_oracle(&mut tb.platform).unwrap_err(),
        AttackError::NoCodeExec(BootStage::FullBoot)
    );
    assert_eq!(tb.platform.fuses.burn_count(), 0);
}

#[test]
fn other_generations_resist_the_ikek_swap() {
    let attacker = SignatureKeyPair::generate_rsa(0x5EED);
    for arch in [AuthScheme::Zen1, AuthScheme::Zen45] {
        let mut tb = attacked(ScenarioConfig::new(arch, 36));
        let before = tb.platform.fuses.physical_window().to_vec();
        assert!(matches!(badfuse_oracle(&mut tb.platform), Err(AttackError::NoCodeExec(_))), "{arch:?}");
        assert!(matches!(
            badfuse_custom_pk(&mut tb.platform, &attacker, &tb.world.bootrom_key),
            Err(AttackError::NoCodeExec(_))
        ));
        assert_eq!(tb.platform.fuses.physical_window(), before.as_slice());
    }
}

#[test]
fn write_protect_stops_both_burners() {
    let attacker = SignatureKeyPair::generate_rsa(0x5EED);
    let mut tb = attacked(ScenarioConfig {
        write_protect: true,
        ..milan(37)
    });
    let before = tb.platform.fuses.physical_window().to_vec();
    assert!(matches!(badfuse_oracle(&mut tb.platform), Err(AttackError::WriteProtected(_))));
    assert!(matches!(
        badfuse_custom_pk(&mut tb.platform, &attacker, &tb.world.bootrom_key),
        Err(AttackError::WriteProtected(_))
    ));
    assert_eq!(tb.platform.fuses.physical_window(), before.as_slice());
}

#[test]
fn enforced_redundancy_breaks_the_oracle() {
    let mut tb = attacked(ScenarioConfig {
        ecc_fletcher_enforced: true,
        ..milan(38)
    });
    match badfuse_oracle(&mut tb.platform) {
        Err(AttackError::FuseAbort(reason)) => assert!(reason.starts_with("FuseAbort")),
        Ok(run) => assert_ne!(run.recovered_seed, tb.vcek_root),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn search_budget_is_enforced() {
    let tb = Testbed::new(milan(39)).unwrap();
    let err = plan_milanlaunchy(
        &tb.platform.flash,
        &tb.legacy_recovery().unwrap(),
        &tb.world.bootrom_key,
        MilanLaunchyOptions {
            match_bits: 32,
            rng_seed: 0,
            max_trials: Some(100),
        },
    )
    .unwrap_err();
    assert_eq!(err, AttackError::SearchBudgetExceeded { trials: 100 });
}
