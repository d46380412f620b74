// Licensed under the Apache-2.0 license

//! Walks the SVN hash ladder: derives the VCEK seed for a TCB, then shows
//! which TCBs a captured layer-1 handoff can and cannot reach.

use aspforge::attack::{vcek_seed_for, SeedMaterial};
use aspforge::vcek::{derive_layer_seed, derive_tcb_seed, SeedChain, TcbVersion};

fn main() {
    let root = [0x42u8; 32];
    let tcb = TcbVersion::new(4, 10, 44);
    let chain = SeedChain::derive(&root, tcb);
    println!("tcb {tcb}");
    for (layer, seed) in chain.layer_seeds.iter().enumerate() {
        println!("  layer {} seed {}", layer + 1, hex::encode(seed));
    }
    assert_eq!(chain.vcek_seed(), derive_tcb_seed(&root, tcb));

    let captured = derive_layer_seed(&root, tcb.bl_svn);
    let material = SeedMaterial::Layer {
        cur: tcb.bl_svn,
        layer1_seed: captured.layer_seed,
        rollback_seed: captured.rollback_seed,
    };
    for bl in [0, 3, 4, 5, 255] {
        let t = TcbVersion::new(bl, 10, 44);
        match vcek_seed_for(&material, t) {
            Ok(s) => println!("bl_svn {bl:>3}: reachable, matches = {}", s == derive_tcb_seed(&root, t)),
            Err(e) => println!("bl_svn {bl:>3}: {e}"),
        }
    }
}
