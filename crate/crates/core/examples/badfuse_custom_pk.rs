// Licensed under the Apache-2.0 license

//! Burns an attacker key hash into Custom_PK from the MilanLaunchy payload,
//! boots an attacker-signed SVN-255 bootloader and forges a report for the
//! platform's current TCB.

use aspforge::attack::{badfuse_custom_pk, forge_report, plan_milanlaunchy, MilanLaunchyOptions};
use aspforge::crypto::SignatureKeyPair;
use aspforge::firmware::AuthScheme;
use aspforge::platform::{ScenarioConfig, Testbed, PRISTINE_TCB};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut tb = Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 4))?;
    let attacker = SignatureKeyPair::generate_rsa(0xBAD);
    let plan = plan_milanlaunchy(&tb.platform.flash, &tb.legacy_recovery()?, &tb.world.bootrom_key, MilanLaunchyOptions::default())?;
    tb.platform.flash = plan.image;

    let run = badfuse_custom_pk(&mut tb.platform, &attacker, &tb.world.bootrom_key)?;
    println!("custom pk {}", hex::encode(run.attacker_pk_digest));
    println!("exfil boot: {:?}", run.exfil_outcome.code_exec_event);
    println!("material {}", serde_json::to_string_pretty(&run.material)?);

    let report = forge_report(&run.material, PRISTINE_TCB, [0x11; 48], [0; 64])?;
    let cert = tb.kds.issue(&tb.chip_id, PRISTINE_TCB)?;
    println!("forged report for {PRISTINE_TCB} verifies: {}", tb.kds.verify_report(&report, &cert));
    Ok(())
}
