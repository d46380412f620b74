// Licensed under the Apache-2.0 license

//! The one instruction pattern the simulator understands: an ARM
//! unconditional `b`/`bl` with a 24-bit signed word offset.

const OP_B: u32 = 0xEA;
const OP_BL: u32 = 0xEB;

/// Target of `word` executed at `pc`, if it is an unconditional branch.
pub fn decode_branch(word: u32, pc: u32) -> Option<u32> {
    let op = word >> 24;
    if op != OP_B && op != OP_BL {
        return None;
    }
    let offset = ((word << 8) as i32) >> 8;
    let target = pc as i64 + 8 + 4 * offset as i64;
    u32::try_from(target).ok()
}

/// `b target` placed at `pc`. None if unaligned or out of reach.
pub fn encode_branch(pc: u32, target: u32) -> Option<u32> {
    let delta = target as i64 - pc as i64 - 8;
    if delta % 4 != 0 {
        return None;
    }
    let offset = delta / 4;
    if !(-(1 << 23)..(1 << 23)).contains(&offset) {
        return None;
    }
    Some(OP_B << 24 | (offset as u32 & 0x00FF_FFFF))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_to_stale_region() {
        let off = (0x20000u32 - 0x1000 - 8) / 4;
        let word = 0xEA00_0000 | off;
        assert_eq!(encode_branch(0x1000, 0x20000), Some(word));
        assert_eq!(decode_branch(word, 0x1000), Some(0x20000));
        assert_eq!(decode_branch(0xEB00_0000 | off, 0x1000), Some(0x20000));
    }

    #[test]
    fn non_branches() {
        assert_eq!(decode_branch(0, 0x1000), None);
        assert_eq!(decode_branch(0xE1A0_0000, 0x1000), None);
        assert_eq!(decode_branch(0x0A00_0000, 0x1000), None);
        assert_eq!(encode_branch(0x1000, 0x1002), None);
    }

    #[test]
    fn backward_branch() {
        let w = encode_branch(0x2000, 0x1000).unwrap();
        assert_eq!(decode_branch(w, 0x2000), Some(0x1000));
        // Before address zero.
        assert_eq!(decode_branch(0xEAFF_FFF0, 0), None);
    }

    proptest! {
        #[test]
        fn round_trip(pc in (0u32..0x20000).prop_map(|x| x * 4), t in (0u32..0x20000).prop_map(|x| x * 4)) {
            let w = encode_branch(pc, t).unwrap();
            prop_assert_eq!(decode_branch(w, pc), Some(t));
        }
    }
}
