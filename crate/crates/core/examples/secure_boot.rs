// Licensed under the Apache-2.0 license

//! Cold-boots a pristine platform and prints the event log, then boots
//! again with a corrupted primary bootloader.

use aspforge::boot::PayloadRegistry;
use aspforge::firmware::{AuthScheme, EntryType};
use aspforge::platform::{ScenarioConfig, Testbed};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut tb = Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 1))?;
    let out = tb.platform.boot(&PayloadRegistry::new());
    for e in &out.event_log {
        println!("{:>2} {:<28} {}", e.step, e.name, e.detail);
    }
    println!("stage {:?}, tcb {:?}", out.stage_reached, out.tcb());

    let mut bl = tb.platform.flash.module(EntryType::PrimaryBootloader).unwrap()?;
    bl.body[0] ^= 0x80;
    tb.platform.flash = tb.platform.flash.with_entry(EntryType::PrimaryBootloader, bl.to_bytes());
    let out = tb.platform.boot(&PayloadRegistry::new());
    println!(
        "tampered primary: ran {:?}, stage {:?}",
        out.executed_entry, out.stage_reached
    );
    Ok(())
}
