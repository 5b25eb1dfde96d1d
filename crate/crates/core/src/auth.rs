//! Stored user credentials.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;

const SALT_LEN: usize = 16;
const DIGEST_LEN: usize = 32;
const ROUNDS: u32 = 10_000;

/// PBKDF2-HMAC-SHA256 digest of a password plus the salt it was computed with.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordDigest {
    salt: [u8; SALT_LEN],
    digest: [u8; DIGEST_LEN],
}

impl PasswordDigest {
    pub fn new(password: &str) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rand::thread_rng().fill_bytes(&mut salt);
        Self::with_salt(password, salt)
    }

    pub fn with_salt(password: &str, salt: [u8; SALT_LEN]) -> Self {
        let mut digest = [0u8; DIGEST_LEN];
        pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, ROUNDS, &mut digest);
        PasswordDigest { salt, digest }
    }

    pub fn verify(&self, password: &str) -> bool {
        let candidate = Self::with_salt(password, self.salt);
        candidate.digest.ct_eq(&self.digest).into()
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }
}

impl fmt::Debug for PasswordDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PasswordDigest(..)")
    }
}

impl fmt::Display for PasswordDigest {
    /// `<salt-hex>:<digest-hex>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", hex::encode(self.salt), hex::encode(self.digest))
    }
}

impl FromStr for PasswordDigest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (salt, digest) = s
            .split_once(':')
            .ok_or_else(|| "digest must be <salt-hex>:<digest-hex>".to_string())?;
        let mut out = PasswordDigest {
            salt: [0; SALT_LEN],
            digest: [0; DIGEST_LEN],
        };
        hex::decode_to_slice(salt, &mut out.salt).map_err(|e| format!("bad salt: {e}"))?;
        hex::decode_to_slice(digest, &mut out.digest).map_err(|e| format!("bad digest: {e}"))?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub username: String,
    pub password: PasswordDigest,
}

impl User {
    pub fn new(username: impl Into<String>, password: &str) -> Self {
        User {
            username: username.into(),
            password: PasswordDigest::new(password),
        }
    }
}

/// Burns the same work as a real verification so unknown users cost the same as
/// wrong passwords.
pub fn verify_against_nothing(password: &str) -> bool {
    let _ = PasswordDigest::with_salt(password, [0; SALT_LEN]);
    false
}
