// Licensed under the Apache-2.0 license

//! Builds a vendor release, round-trips it through the flash binary
//! format and dumps the directory.

use aspforge::firmware::{AuthScheme, EntryType, FlashImage};
use aspforge::platform::World;
use aspforge::vcek::TcbVersion;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = World::from_seed(1);
    let flash = world
        .vendor
        .release_flash(&world.bootrom_key, AuthScheme::Zen3Milan, TcbVersion::new(4, 10, 44))?;
    let bytes = flash.serialize();
    let parsed = FlashImage::parse(&bytes)?;
    assert_eq!(parsed.serialize(), bytes);
    println!("flash image: {} octets", bytes.len());
    for e in parsed.entries() {
        println!("  {e:?}");
    }
    for t in [EntryType::PrimaryBootloader, EntryType::RecoveryBootloader, EntryType::SevFirmware, EntryType::Microcode] {
        if let Some(m) = parsed.module(t) {
            let m = m?;
            println!(
                "{t:?}: svn {} load {:#x} size {:#x} encrypted {}",
                m.header.svn,
                m.header.load_addr,
                m.header.image_size,
                m.header.encrypted()
            );
        }
    }
    let ikek = parsed.ikek_entry().expect("release carries an IKEK")?;
    println!("wrapped IKEK tag valid: {}", ikek.tag_valid(&world.bootrom_key));
    Ok(())
}
