// Licensed under the Apache-2.0 license

//! Versioned seed derivation, attestation reports and a mock key
//! distribution service.
//!
//! Binary layouts (little-endian):
//!
//! ```text
//! report: "ASRP" | version u8 | tcb (bl, sevfw, ucode) | measurement (48)
//!         | chip_id (32) | report_data (64) | u16 sig_len | signature
//! cert:   "ASKC" | u16 key_len | vcek public (SEC1) | tcb (3) | chip_id (32)
//!         | u16 sig_len | ark signature
//! ```
//!
//! Signatures are ECDSA-P384/SHA-384 over every octet before `sig_len`.

mod kds;
mod seeds;

pub use kds::{chip_id_from_cek_seed, MockKds, ARK_LABEL, CEK_LABEL, VCEK_LABEL};
pub use seeds::{
    derive_from_rollback, derive_layer_seed, derive_tcb_seed, hashstick, layer1_from_rollback,
    tcb_seed_from_layer1, LayerSeeds, Seed, SeedChain, TcbVersion, SEED_PAD,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{keypair_from_seed, CryptoError, PublicKey, SignatureScheme};

pub type ChipId = [u8; 32];

pub const REPORT_MAGIC: [u8; 4] = *b"ASRP";
pub const CERT_MAGIC: [u8; 4] = *b"ASKC";
pub const REPORT_VERSION: u8 = 1;
const REPORT_SIGNED_LEN: usize = 4 + 1 + 3 + 48 + 32 + 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VcekError {
    #[error("rollback target SVN {target} is not below {cur}")]
    RollbackTarget { cur: u8, target: u8 },
    #[error("bad TCB version {0:?} (expected bl,sevfw,ucode)")]
    BadTcb(String),
    #[error("chip {} is not enrolled", hex::encode(.0))]
    UnknownChip(ChipId),
    #[error("bad magic")]
    BadMagic,
    #[error("input truncated")]
    Truncated,
    #[error("trailing octets after structure")]
    TrailingData,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Fields covered by the report signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBody {
    pub version: u8,
    #[serde(with = "hex")]
    pub measurement: [u8; 48],
    pub tcb: TcbVersion,
    #[serde(with = "hex")]
    pub chip_id: ChipId,
    #[serde(with = "hex")]
    pub report_data: [u8; 64],
}

impl ReportBody {
    pub fn new(measurement: [u8; 48], tcb: TcbVersion, chip_id: ChipId, report_data: [u8; 64]) -> Self {
        ReportBody {
            version: REPORT_VERSION,
            measurement,
            tcb,
            chip_id,
            report_data,
        }
    }

    fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REPORT_SIGNED_LEN);
        out.extend_from_slice(&REPORT_MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.tcb.to_bytes());
        out.extend_from_slice(&self.measurement);
        out.extend_from_slice(&self.chip_id);
        out.extend_from_slice(&self.report_data);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    #[serde(flatten)]
    pub body: ReportBody,
    #[serde(with = "hex")]
    pub signature: Vec<u8>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VcekError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(VcekError::Truncated)?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], VcekError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn prefixed(&mut self) -> Result<&'a [u8], VcekError> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        self.take(len)
    }

    fn finish(self) -> Result<(), VcekError> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(VcekError::TrailingData)
        }
    }
}

fn push_prefixed(out: &mut Vec<u8>, data: &[u8]) {
    out.extend_from_slice(&(data.len() as u16).to_le_bytes());
    out.extend_from_slice(data);
}

impl AttestationReport {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body.signed_bytes();
        push_prefixed(&mut out, &self.signature);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, VcekError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != REPORT_MAGIC {
            return Err(VcekError::BadMagic);
        }
        let version = r.array::<1>()?[0];
        let tcb = TcbVersion::from_bytes(r.array()?);
        let measurement = r.array()?;
        let chip_id = r.array()?;
        let report_data = r.array()?;
        let signature = r.prefixed()?.to_vec();
        r.finish()?;
        Ok(AttestationReport {
            body: ReportBody {
                version,
                measurement,
                tcb,
                chip_id,
                report_data,
            },
            signature,
        })
    }
}

/// Signs with the key derived from `vcek_seed`.
pub fn sign_report(vcek_seed: &Seed, body: ReportBody) -> AttestationReport {
    let kp = keypair_from_seed(vcek_seed, VCEK_LABEL);
    let signature = kp.sign(&body.signed_bytes()).expect("derived pairs carry a private key");
    AttestationReport { body, signature }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockKdsCert {
    #[serde(with = "hex")]
    pub vcek_public: Vec<u8>,
    pub tcb: TcbVersion,
    #[serde(with = "hex")]
    pub chip_id: ChipId,
    #[serde(with = "hex")]
    pub ark_signature: Vec<u8>,
}

impl MockKdsCert {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut out = CERT_MAGIC.to_vec();
        push_prefixed(&mut out, &self.vcek_public);
        out.extend_from_slice(&self.tcb.to_bytes());
        out.extend_from_slice(&self.chip_id);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        push_prefixed(&mut out, &self.ark_signature);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, VcekError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != CERT_MAGIC {
            return Err(VcekError::BadMagic);
        }
        let vcek_public = r.prefixed()?.to_vec();
        let tcb = TcbVersion::from_bytes(r.array()?);
        let chip_id = r.array()?;
        let ark_signature = r.prefixed()?.to_vec();
        r.finish()?;
        Ok(MockKdsCert {
            vcek_public,
            tcb,
            chip_id,
            ark_signature,
        })
    }

    pub fn ark_signature_valid(&self, ark: &PublicKey) -> bool {
        ark.verify(&self.signed_bytes(), &self.ark_signature)
    }
}

/// Accepts iff the cert chains to `ark`, binds the report's TCB and chip
/// and its key verifies the report signature.
pub fn verify_report(report: &AttestationReport, cert: &MockKdsCert, ark: &PublicKey) -> bool {
    if cert.tcb != report.body.tcb || cert.chip_id != report.body.chip_id || !cert.ark_signature_valid(ark) {
        return false;
    }
    match PublicKey::from_bytes(SignatureScheme::EcdsaP384Sha384, &cert.vcek_public) {
        Ok(vcek) => vcek.verify(&report.body.signed_bytes(), &report.signature),
        Err(_) => false,
    }
}
