// Licensed under the Apache-2.0 license

//! Per-layer versioned seed ladder.
//!
//! Each layer walks its input seed down a SHA-256 chain starting at index
//! 255: `TmpSeed[255] = input`, `TmpSeed[i-1] = H(TmpSeed[i])`. The layer
//! seed for SVN `cur` is `H(pad || TmpSeed[cur])` and `TmpSeed[cur-1]` is
//! handed on for rollback. Anyone holding `TmpSeed[cur-1]` can reach every
//! lower SVN but none above `cur`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VcekError;
use crate::crypto::sha256;

pub type Seed = [u8; 32];

/// Prepended to the chain value before the final layer hash.
pub const SEED_PAD: [u8; 8] = [0; 8];

/// SVNs of layers 1..=3 (bootloader, SEV firmware, microcode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TcbVersion {
    pub bl_svn: u8,
    pub sevfw_svn: u8,
    pub ucode_svn: u8,
}

impl TcbVersion {
    pub const fn new(bl_svn: u8, sevfw_svn: u8, ucode_svn: u8) -> Self {
        TcbVersion {
            bl_svn,
            sevfw_svn,
            ucode_svn,
        }
    }

    pub fn to_bytes(self) -> [u8; 3] {
        [self.bl_svn, self.sevfw_svn, self.ucode_svn]
    }

    pub fn from_bytes(b: [u8; 3]) -> Self {
        TcbVersion::new(b[0], b[1], b[2])
    }
}

impl fmt::Display for TcbVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.bl_svn, self.sevfw_svn, self.ucode_svn)
    }
}

impl FromStr for TcbVersion {
    type Err = VcekError;

    /// Parses `bl,sevfw,ucode`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || VcekError::BadTcb(s.to_string());
        if parts.len() != 3 {
            return Err(bad());
        }
        let n = |p: &str| p.parse::<u8>().map_err(|_| bad());
        Ok(TcbVersion::new(n(parts[0])?, n(parts[1])?, n(parts[2])?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSeeds {
    pub layer_seed: Seed,
    /// `TmpSeed[cur-1]`; absent at `cur == 0`.
    pub rollback_seed: Option<Seed>,
}

/// `steps` applications of SHA-256.
pub fn hashstick(seed: &Seed, steps: u32) -> Seed {
    let mut s = *seed;
    for _ in 0..steps {
        s = sha256(&s);
    }
    s
}

fn pad_hash(tmp: &Seed) -> Seed {
    let mut buf = [0u8; 40];
    buf[..8].copy_from_slice(&SEED_PAD);
    buf[8..].copy_from_slice(tmp);
    sha256(&buf)
}

pub fn derive_layer_seed(input: &Seed, cur: u8) -> LayerSeeds {
    let tmp_cur = hashstick(input, 255 - cur as u32);
    LayerSeeds {
        layer_seed: pad_hash(&tmp_cur),
        rollback_seed: (cur > 0).then(|| sha256(&tmp_cur)),
    }
}

/// Layer-3 seed for `tcb`; this is the VCEK seed.
pub fn derive_tcb_seed(root: &Seed, tcb: TcbVersion) -> Seed {
    let l1 = derive_layer_seed(root, tcb.bl_svn).layer_seed;
    tcb_seed_from_layer1(&l1, tcb.sevfw_svn, tcb.ucode_svn)
}

/// Chains layers 2 and 3 on top of a known layer-1 seed.
pub fn tcb_seed_from_layer1(layer1: &Seed, sevfw_svn: u8, ucode_svn: u8) -> Seed {
    let l2 = derive_layer_seed(layer1, sevfw_svn).layer_seed;
    derive_layer_seed(&l2, ucode_svn).layer_seed
}

/// Layer-1 seed for `target < cur` from `TmpSeed[cur-1]`.
pub fn layer1_from_rollback(rollback: &Seed, cur: u8, target: u8) -> Result<Seed, VcekError> {
    if target >= cur {
        return Err(VcekError::RollbackTarget { cur, target });
    }
    Ok(pad_hash(&hashstick(rollback, (cur - 1 - target) as u32)))
}

/// VCEK seed for `target` from rollback material captured at `cur`.
/// Requires `target.bl_svn < cur`.
pub fn derive_from_rollback(rollback: &Seed, cur: u8, target: TcbVersion) -> Result<Seed, VcekError> {
    let l1 = layer1_from_rollback(rollback, cur, target.bl_svn)?;
    Ok(tcb_seed_from_layer1(&l1, target.sevfw_svn, target.ucode_svn))
}

/// Materialized ladder for one TCB: every TmpSeed touched per layer, the
/// layer seeds and the rollback seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedChain {
    pub root_seed: Seed,
    pub tcb: TcbVersion,
    /// Per layer, `svn -> TmpSeed[svn]` for `svn` in `cur..=255`.
    pub tmp: [BTreeMap<u8, Seed>; 3],
    pub layer_seeds: [Seed; 3],
    pub rollback_seeds: [Option<Seed>; 3],
}

impl SeedChain {
    pub fn derive(root_seed: &Seed, tcb: TcbVersion) -> Self {
        let svns = tcb.to_bytes();
        let mut tmp: [BTreeMap<u8, Seed>; 3] = Default::default();
        let mut layer_seeds = [[0u8; 32]; 3];
        let mut rollback_seeds = [None; 3];
        let mut input = *root_seed;
        for layer in 0..3 {
            let cur = svns[layer];
            let mut t = input;
            tmp[layer].insert(255, t);
            for i in (cur..255).rev() {
                t = sha256(&t);
                tmp[layer].insert(i, t);
            }
            layer_seeds[layer] = pad_hash(&t);
            rollback_seeds[layer] = (cur > 0).then(|| sha256(&t));
            input = layer_seeds[layer];
        }
        SeedChain {
            root_seed: *root_seed,
            tcb,
            tmp,
            layer_seeds,
            rollback_seeds,
        }
    }

    pub fn vcek_seed(&self) -> Seed {
        self.layer_seeds[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use sha2::{Digest, Sha256};

    // Reference ladder: materialize all 256 chain values, then index.
    fn oracle_layer(input: &Seed, cur: u8) -> (Seed, Option<Seed>) {
        let mut chain = vec![[0u8; 32]; 256];
        chain[255] = *input;
        for i in (0..255).rev() {
            chain[i] = Sha256::digest(chain[i + 1]).into();
        }
        let mut h = Sha256::new();
        h.update([0u8; 8]);
        h.update(chain[cur as usize]);
        let rollback = if cur == 0 { None } else { Some(chain[cur as usize - 1]) };
        (h.finalize().into(), rollback)
    }

    #[test]
    fn cur_255_and_cur_0() {
        let input = [7u8; 32];
        let top = derive_layer_seed(&input, 255);
        let mut padded = vec![0u8; 8];
        padded.extend_from_slice(&input);
        assert_eq!(top.layer_seed, sha256(&padded));
        assert_eq!(top.rollback_seed, Some(sha256(&input)));

        let bottom = derive_layer_seed(&input, 0);
        assert_eq!(bottom.rollback_seed, None);
        assert_eq!((bottom.layer_seed, None), oracle_layer(&input, 0));
    }

    #[test]
    fn zero_input_cur_254() {
        let got = derive_layer_seed(&[0; 32], 254);
        let (l, r) = oracle_layer(&[0; 32], 254);
        assert_eq!(got.layer_seed, l);
        assert_eq!(got.rollback_seed, r);
    }

    #[test]
    fn rollback_single_step() {
        let root = [0x5Cu8; 32];
        let at5 = derive_layer_seed(&root, 5);
        let l4 = layer1_from_rollback(&at5.rollback_seed.unwrap(), 5, 4).unwrap();
        assert_eq!(l4, derive_layer_seed(&root, 4).layer_seed);
        assert_eq!(
            layer1_from_rollback(&at5.rollback_seed.unwrap(), 5, 5),
            Err(VcekError::RollbackTarget { cur: 5, target: 5 })
        );
    }

    #[test]
    fn chain_struct_agrees_with_functions() {
        let root = [0x11u8; 32];
        let tcb = TcbVersion::new(4, 10, 44);
        let chain = SeedChain::derive(&root, tcb);
        assert_eq!(chain.vcek_seed(), derive_tcb_seed(&root, tcb));
        assert_eq!(chain.tmp[0].len(), 252);
        for layer in 0..3 {
            for (&i, v) in &chain.tmp[layer] {
                if i < 255 {
                    assert_eq!(*v, sha256(&chain.tmp[layer][&(i + 1)]));
                }
            }
        }
        assert_eq!(chain.rollback_seeds[0], derive_layer_seed(&root, 4).rollback_seed);
    }

    #[test]
    fn tcb_parse() {
        assert_eq!("4,10,44".parse::<TcbVersion>().unwrap(), TcbVersion::new(4, 10, 44));
        assert!("4,10".parse::<TcbVersion>().is_err());
        assert!("4,10,256".parse::<TcbVersion>().is_err());
        assert_eq!(TcbVersion::new(1, 2, 3).to_string(), "1,2,3");
    }

    proptest! {
        #[test]
        fn layer_matches_oracle(input in any::<[u8; 32]>(), cur in any::<u8>()) {
            let got = derive_layer_seed(&input, cur);
            prop_assert_eq!((got.layer_seed, got.rollback_seed), oracle_layer(&input, cur));
        }

        #[test]
        fn rollback_reaches_every_lower_svn(root in any::<[u8; 32]>(), cur in 1u8..=255, t in any::<u8>(), a in any::<u8>(), b in any::<u8>()) {
            let target = t % cur;
            let rb = derive_layer_seed(&root, cur).rollback_seed.unwrap();
            let tcb = TcbVersion::new(target, a, b);
            prop_assert_eq!(derive_from_rollback(&rb, cur, tcb).unwrap(), derive_tcb_seed(&root, tcb));
        }
    }
}
