// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{derive_tcb_seed, verify_report, AttestationReport, ChipId, MockKdsCert, Seed, TcbVersion, VcekError};
use crate::crypto::{keypair_from_seed, sha256, PublicKey, SignatureKeyPair};

pub const VCEK_LABEL: &[u8] = b"VCEK";
pub const CEK_LABEL: &[u8] = b"CEK";
pub const ARK_LABEL: &[u8] = b"ARK";

/// SHA-256 of the CEK public key encoding.
pub fn chip_id_from_cek_seed(cek_seed: &Seed) -> ChipId {
    sha256(&keypair_from_seed(cek_seed, CEK_LABEL).public_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Enrollment {
    #[serde(with = "hex")]
    chip_id: ChipId,
    #[serde(with = "hex")]
    root_seed: Seed,
}

/// Manufacturer-side registry: knows every enrolled chip's root seed and
/// signs VCEK certificates with a single root key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockKds {
    #[serde(with = "hex")]
    ark_seed: Seed,
    chips: Vec<Enrollment>,
    #[serde(skip)]
    index: BTreeMap<ChipId, usize>,
}

impl MockKds {
    pub fn new(ark_seed: Seed) -> Self {
        MockKds {
            ark_seed,
            chips: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn ark_keypair(&self) -> SignatureKeyPair {
        keypair_from_seed(&self.ark_seed, ARK_LABEL)
    }

    pub fn ark_public(&self) -> PublicKey {
        self.ark_keypair().public().clone()
    }

    /// Registers a chip; re-enrolling replaces the stored root.
    pub fn enroll(&mut self, root_seed: Seed, cek_seed: Seed) -> ChipId {
        let chip_id = chip_id_from_cek_seed(&cek_seed);
        match self.index.get(&chip_id) {
            Some(&i) => self.chips[i].root_seed = root_seed,
            None => {
                self.index.insert(chip_id, self.chips.len());
                self.chips.push(Enrollment { chip_id, root_seed });
            }
        }
        chip_id
    }

    pub fn is_enrolled(&self, chip_id: &ChipId) -> bool {
        self.index.contains_key(chip_id)
    }

    pub fn issue(&self, chip_id: &ChipId, tcb: TcbVersion) -> Result<MockKdsCert, VcekError> {
        let i = *self.index.get(chip_id).ok_or(VcekError::UnknownChip(*chip_id))?;
        let vcek = keypair_from_seed(&derive_tcb_seed(&self.chips[i].root_seed, tcb), VCEK_LABEL);
        let mut cert = MockKdsCert {
            vcek_public: vcek.public_bytes(),
            tcb,
            chip_id: *chip_id,
            ark_signature: Vec::new(),
        };
        cert.ark_signature = self.ark_keypair().sign(&cert.signed_bytes())?;
        Ok(cert)
    }

    pub fn verify_report(&self, report: &AttestationReport, cert: &MockKdsCert) -> bool {
        verify_report(report, cert, &self.ark_public())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut kds: MockKds = serde_json::from_str(s)?;
        kds.index = kds.chips.iter().enumerate().map(|(i, e)| (e.chip_id, i)).collect();
        Ok(kds)
    }
}
