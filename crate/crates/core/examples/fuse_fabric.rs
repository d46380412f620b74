// Licensed under the Apache-2.0 license

//! Drives the fuse burner over MMIO: provisions a redundancy-protected
//! region, blows one payload bit and shows how validation reacts.

use aspforge::fuse::layout::VCEK_ROOT_SEED;
use aspforge::fuse::{program_fuse_bit, provision_with_redundancy, FuseArray, Region, SmnBus, FUSE_WINDOW_BASE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: [u8; 32] = std::array::from_fn(|i| (i as u8).wrapping_mul(29) ^ 0x5C);

    for (ecc, fletcher) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut f = FuseArray::blank();
        provision_with_redundancy(&mut f, Region::VcekSeed, &seed, ecc, fletcher)?;
        let fresh = f.validate_region(Region::VcekSeed).status;
        let zero = (0..256).find(|b| seed[b / 8] >> (b % 8) & 1 == 0).unwrap() as u32;
        program_fuse_bit(&mut f, VCEK_ROOT_SEED.first_bit() + zero)?;
        let check = f.validate_region(Region::VcekSeed);
        println!(
            "ecc={ecc:<5} fletcher={fletcher:<5} fresh={fresh:?} after burn of bit {zero}: {:?}, payload intact {}",
            check.status,
            check.payload == seed
        );
    }

    let mut f = FuseArray::factory(seed, [0; 32]);
    let addr = VCEK_ROOT_SEED.smn_address();
    println!("word at {addr:#x} before latch: {:#010x}", f.mmio_read(addr)?);
    f.engage_latch();
    println!("word at {addr:#x} after latch:  {:#010x}", f.mmio_read(addr)?);
    program_fuse_bit(&mut f, 0)?;
    println!("burns still land while latched: bit 0 = {}", f.physical_bit(0));
    println!("window base {FUSE_WINDOW_BASE:#x}, {} bits set", f.popcount());
    Ok(())
}
