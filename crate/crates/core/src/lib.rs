// Licensed under the Apache-2.0 license

pub mod attack;
pub mod boot;
pub mod cli;
pub mod crypto;
pub mod firmware;
pub mod fuse;
pub mod platform;
pub mod vcek;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Fuse(#[from] fuse::FuseError),
    #[error(transparent)]
    Firmware(#[from] firmware::FirmwareError),
    #[error(transparent)]
    Vcek(#[from] vcek::VcekError),
    #[error(transparent)]
    Crypto(#[from] crypto::CryptoError),
    #[error(transparent)]
    Attack(#[from] attack::AttackError),
}
