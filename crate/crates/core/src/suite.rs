//! Byte-size models of the cryptographic suites compared in the experiments.
//!
//! Nothing here performs real cryptography. Each algorithm is reduced to the
//! sizes of the objects it puts on the wire, and the engine fills those
//! slots with deterministic opaque bytes from a [`MaterialProvider`].

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuiteError {
    #[error("algorithm {name}: key_length must be positive")]
    ZeroKeyLength { name: String },
    #[error("algorithm {name}: {role} algorithms carry no public object")]
    UnexpectedPublicObject { name: String, role: Role },
    #[error("algorithm {name} has role {found} but is in the {slot} slot")]
    RoleMismatch {
        name: String,
        found: Role,
        slot: Role,
    },
    #[error("suite needs at least one key establishment")]
    NoKeyEstablishment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encryption,
    Integrity,
    KeyEstablishment,
    Authentication,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Encryption => "encryption",
            Role::Integrity => "integrity",
            Role::KeyEstablishment => "key_establishment",
            Role::Authentication => "authentication",
        })
    }
}

/// Which sized object of an algorithm is being materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaterialField {
    /// Secret key bytes (`key_length`).
    Key,
    /// Initiator-direction object: KE public value or certificate public key.
    PublicObject,
    /// Responder-direction KE object (DH public value or KEM ciphertext).
    ResponseObject,
    Signature,
}

impl MaterialField {
    fn tag(self) -> u64 {
        match self {
            MaterialField::Key => 0x6b,
            MaterialField::PublicObject => 0x70,
            MaterialField::ResponseObject => 0x72,
            MaterialField::Signature => 0x73,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub role: Role,
    pub key_length: usize,
    pub public_object_size: usize,
    /// Size of the object the responder returns for a key establishment.
    /// Equal to `public_object_size` for DH groups.
    pub response_object_size: usize,
    pub signature_size: usize,
}

impl AlgorithmSpec {
    pub fn symmetric(name: &str, role: Role, key_length: usize) -> Self {
        Self {
            name: name.to_owned(),
            role,
            key_length,
            public_object_size: 0,
            response_object_size: 0,
            signature_size: 0,
        }
    }

    pub fn key_exchange(name: &str, public: usize, response: usize) -> Self {
        Self {
            name: name.to_owned(),
            role: Role::KeyEstablishment,
            key_length: public,
            public_object_size: public,
            response_object_size: response,
            signature_size: 0,
        }
    }

    pub fn signer(name: &str, key_length: usize, public_key: usize, signature: usize) -> Self {
        Self {
            name: name.to_owned(),
            role: Role::Authentication,
            key_length,
            public_object_size: public_key,
            response_object_size: 0,
            signature_size: signature,
        }
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.key_length == 0 {
            return Err(SuiteError::ZeroKeyLength {
                name: self.name.clone(),
            });
        }
        if matches!(self.role, Role::Encryption | Role::Integrity)
            && (self.public_object_size != 0 || self.response_object_size != 0)
        {
            return Err(SuiteError::UnexpectedPublicObject {
                name: self.name.clone(),
                role: self.role,
            });
        }
        Ok(())
    }

    pub fn size_of(&self, field: MaterialField) -> usize {
        match field {
            MaterialField::Key => self.key_length,
            MaterialField::PublicObject => self.public_object_size,
            MaterialField::ResponseObject => self.response_object_size,
            MaterialField::Signature => self.signature_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteId {
    Classical,
    Qrc,
    Custom,
}

impl SuiteId {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteId::Classical => "classical",
            SuiteId::Qrc => "qrc",
            SuiteId::Custom => "custom",
        }
    }
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoSuite {
    pub suite_id: SuiteId,
    pub encryption: AlgorithmSpec,
    pub integrity: AlgorithmSpec,
    pub key_establishments: Vec<AlgorithmSpec>,
    pub authentication: AlgorithmSpec,
}

impl CryptoSuite {
    pub fn new(
        suite_id: SuiteId,
        encryption: AlgorithmSpec,
        integrity: AlgorithmSpec,
        key_establishments: Vec<AlgorithmSpec>,
        authentication: AlgorithmSpec,
    ) -> Result<Self, SuiteError> {
        let suite = Self {
            suite_id,
            encryption,
            integrity,
            key_establishments,
            authentication,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.key_establishments.is_empty() {
            return Err(SuiteError::NoKeyEstablishment);
        }
        let slots = [
            (&self.encryption, Role::Encryption),
            (&self.integrity, Role::Integrity),
            (&self.authentication, Role::Authentication),
        ]
        .into_iter()
        .chain(
            self.key_establishments
                .iter()
                .map(|ke| (ke, Role::KeyEstablishment)),
        );
        for (spec, slot) in slots {
            if spec.role != slot {
                return Err(SuiteError::RoleMismatch {
                    name: spec.name.clone(),
                    found: spec.role,
                    slot,
                });
            }
            spec.validate()?;
        }
        Ok(())
    }
}

/// Authentication and KEM sizes the key-length table leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSizes {
    pub ml_dsa_signature_bytes: usize,
    pub ml_kem_ciphertext_bytes: usize,
    pub ecdsa_signature_bytes: usize,
    pub classical_cert_public_key_bytes: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            ml_dsa_signature_bytes: 4627,
            ml_kem_ciphertext_bytes: 2400,
            ecdsa_signature_bytes: 64,
            classical_cert_public_key_bytes: 91,
        }
    }
}

pub const DH_MODP_2048_BYTES: usize = 256;
pub const ML_KEM_768_BYTES: usize = 2400;
pub const ML_DSA_87_PUBLIC_KEY_BYTES: usize = 2592;
pub const AES_256_KEY_BYTES: usize = 32;
pub const HMAC_SHA256_KEY_BYTES: usize = 32;
const ECDSA_P256_PRIVATE_KEY_BYTES: usize = 32;

pub fn dh_modp_2048() -> AlgorithmSpec {
    AlgorithmSpec::key_exchange("DHKE-MODP-2048", DH_MODP_2048_BYTES, DH_MODP_2048_BYTES)
}

pub fn classical_suite() -> CryptoSuite {
    classical_suite_with(&SuiteSizes::default())
}

pub fn classical_suite_with(sizes: &SuiteSizes) -> CryptoSuite {
    CryptoSuite {
        suite_id: SuiteId::Classical,
        encryption: AlgorithmSpec::symmetric("AES-256-CBC", Role::Encryption, AES_256_KEY_BYTES),
        integrity: AlgorithmSpec::symmetric(
            "SHA-256-HMAC",
            Role::Integrity,
            HMAC_SHA256_KEY_BYTES,
        ),
        key_establishments: vec![dh_modp_2048()],
        authentication: AlgorithmSpec::signer(
            "ECDSA-P256",
            ECDSA_P256_PRIVATE_KEY_BYTES,
            sizes.classical_cert_public_key_bytes,
            sizes.ecdsa_signature_bytes,
        ),
    }
}

pub fn qrc_suite() -> CryptoSuite {
    qrc_suite_with(&SuiteSizes::default())
}

pub fn qrc_suite_with(sizes: &SuiteSizes) -> CryptoSuite {
    CryptoSuite {
        suite_id: SuiteId::Qrc,
        encryption: AlgorithmSpec::symmetric("AES-256-CBC", Role::Encryption, AES_256_KEY_BYTES),
        integrity: AlgorithmSpec::symmetric(
            "SHA-256-HMAC",
            Role::Integrity,
            HMAC_SHA256_KEY_BYTES,
        ),
        key_establishments: vec![AlgorithmSpec::key_exchange(
            "ML-KEM-768",
            ML_KEM_768_BYTES,
            sizes.ml_kem_ciphertext_bytes,
        )],
        authentication: AlgorithmSpec::signer(
            "ML-DSA-87",
            ML_DSA_87_PUBLIC_KEY_BYTES,
            ML_DSA_87_PUBLIC_KEY_BYTES,
            sizes.ml_dsa_signature_bytes,
        ),
    }
}

/// Deterministic stand-in bytes for one sized field of an algorithm.
///
/// The output length is always `spec.size_of(field)` and the content is a
/// pure function of `(spec.name, field, seed)`.
pub fn opaque_material(spec: &AlgorithmSpec, field: MaterialField, seed: u64) -> Vec<u8> {
    let mut out = vec![0u8; spec.size_of(field)];
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&spec.name, field.tag(), seed));
    rng.fill_bytes(&mut out);
    out
}

fn mix_seed(name: &str, tag: u64, seed: u64) -> u64 {
    // FNV-1a over the name, then fold in the field tag and seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ tag.rotate_left(48) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Source of the bytes placed into key-exchange, certificate and
/// signature payloads. Swap in a real KEM/signature backend here.
pub trait MaterialProvider: Send + Sync {
    fn material(&self, spec: &AlgorithmSpec, field: MaterialField, seed: u64) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OpaqueMaterial;

impl MaterialProvider for OpaqueMaterial {
    fn material(&self, spec: &AlgorithmSpec, field: MaterialField, seed: u64) -> Vec<u8> {
        opaque_material(spec, field, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_preset_sizes() {
        let s = classical_suite();
        assert_eq!(s.key_establishments.len(), 1);
        assert_eq!(s.key_establishments[0].public_object_size, 256);
        assert_eq!(s.encryption.key_length, 32);
        assert_eq!(s.integrity.key_length, 32);
        assert_eq!(s.authentication.public_object_size, 91);
        assert_eq!(s.authentication.signature_size, 64);
        s.validate().unwrap();
    }

    #[test]
    fn qrc_preset_sizes() {
        let s = qrc_suite();
        assert!(!s.key_establishments.is_empty());
        assert_eq!(s.key_establishments[0].public_object_size, 2400);
        assert_eq!(s.key_establishments[0].response_object_size, 2400);
        assert_eq!(s.authentication.key_length, 2592);
        assert_eq!(s.authentication.public_object_size, 2592);
        assert_eq!(s.authentication.signature_size, 4627);
        assert_eq!(s.encryption.key_length, 32);
        s.validate().unwrap();
    }

    #[test]
    fn material_is_deterministic_and_sized() {
        let dh = dh_modp_2048();
        let a = opaque_material(&dh, MaterialField::PublicObject, 7);
        assert_eq!(a.len(), 256);
        assert_eq!(a, opaque_material(&dh, MaterialField::PublicObject, 7));

        let kem = &qrc_suite().key_establishments[0];
        assert_eq!(opaque_material(kem, MaterialField::PublicObject, 7).len(), 2400);
    }

    #[test]
    fn material_differs_across_seeds() {
        let dh = dh_modp_2048();
        let a = opaque_material(&dh, MaterialField::PublicObject, 1);
        let b = opaque_material(&dh, MaterialField::PublicObject, 2);
        let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differing > 200, "only {differing} bytes differ");
    }

    #[test]
    fn role_mismatch_rejected() {
        let mut s = classical_suite();
        s.key_establishments.push(s.encryption.clone());
        assert!(matches!(
            s.validate(),
            Err(SuiteError::RoleMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_with_public_object_rejected() {
        let mut aes = AlgorithmSpec::symmetric("AES", Role::Encryption, 32);
        aes.public_object_size = 4;
        assert!(matches!(
            aes.validate(),
            Err(SuiteError::UnexpectedPublicObject { .. })
        ));
        let zero = AlgorithmSpec::symmetric("AES", Role::Encryption, 0);
        assert!(zero.validate().is_err());
    }

    #[test]
    fn empty_key_establishments_rejected() {
        let mut s = qrc_suite();
        s.key_establishments.clear();
        assert_eq!(s.validate(), Err(SuiteError::NoKeyEstablishment));
    }
}
