// Licensed under the Apache-2.0 license

//! Runs the oracle against each hardening toggle: burner write protection,
//! enforced ECC plus Fletcher on the VCEK seed, and plaintext firmware.

use aspforge::attack::{badfuse_oracle, plan_milanlaunchy, vcek_seed_for, MilanLaunchyOptions, SeedMaterial,
    MILANLAUNCHY_PAYLOAD_ID};
use aspforge::boot::PayloadRegistry;
use aspforge::firmware::AuthScheme;
use aspforge::platform::{ScenarioConfig, Testbed, PRISTINE_TCB};

fn attacked(scenario: ScenarioConfig) -> Result<Testbed, Box<dyn std::error::Error>> {
    let mut tb = Testbed::new(scenario)?;
    let plan = plan_milanlaunchy(&tb.platform.flash, &tb.legacy_recovery()?, &tb.world.bootrom_key, MilanLaunchyOptions::default())?;
    tb.platform.flash = plan.image;
    Ok(tb)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ScenarioConfig::new(AuthScheme::Zen3Milan, 6);
    let toggles = [
        ("none", base),
        ("write protect", ScenarioConfig { write_protect: true, ..base }),
        ("ecc+fletcher", ScenarioConfig { ecc_fletcher_enforced: true, ..base }),
    ];
    for (name, scenario) in toggles {
        let mut tb = attacked(scenario)?;
        match badfuse_oracle(&mut tb.platform) {
            Ok(run) => println!("{name:<14} oracle recovered root: {}", run.recovered_seed == tb.vcek_root),
            Err(e) => println!("{name:<14} oracle failed: {e}"),
        }
    }

    // Plaintext firmware: code exec still works, but it runs at SVN 0 and
    // the ladder only leads down.
    let mut tb = attacked(ScenarioConfig { distribute_encrypted_fw: false, ..base })?;
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, aspforge::attack::exfil_payload);
    let out = tb.platform.boot(&hooks);
    let (layer1_seed, rollback_seed) = aspforge::attack::parse_exfil(&out.dram_out).ok_or("no exfil")?;
    let m = SeedMaterial::Layer {
        cur: out.svns.bl_svn.unwrap_or(0),
        layer1_seed,
        rollback_seed,
    };
    println!("{:<14} forging {PRISTINE_TCB}: {:?}", "plaintext fw", vcek_seed_for(&m, PRISTINE_TCB).map(|_| "ok"));
    Ok(())
}
