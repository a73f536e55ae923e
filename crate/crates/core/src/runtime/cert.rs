use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::AgentId;

/// A CA's signature over an agent's identity triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub triple: AgentId,
    pub issuer: String,
    /// Hex-encoded ed25519 signature over the triple's canonical JSON.
    pub signature: String,
}

/// A certificate authority holding an ed25519 signing key.
#[derive(Clone)]
pub struct CertAuthority {
    id: String,
    key: SigningKey,
}

impl std::fmt::Debug for CertAuthority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertAuthority").field("id", &self.id).field("public", &self.public_hex()).finish()
    }
}

impl CertAuthority {
    pub fn from_seed(id: &str, seed: [u8; 32]) -> Self {
        CertAuthority { id: id.to_string(), key: SigningKey::from_bytes(&seed) }
    }

    /// A CA whose key is derived from `label`; for simulations and tests.
    pub fn deterministic(label: &str) -> Self {
        let seed: [u8; 32] = Sha256::digest(label.as_bytes()).into();
        Self::from_seed(label, seed)
    }

    pub fn from_secret_hex(id: &str, secret: &str) -> Option<Self> {
        let bytes: [u8; 32] = hex::decode(secret).ok()?.try_into().ok()?;
        Some(Self::from_seed(id, bytes))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn secret_hex(&self) -> String {
        hex::encode(self.key.to_bytes())
    }

    pub fn public_hex(&self) -> String {
        hex::encode(self.key.verifying_key().to_bytes())
    }

    pub fn issue(&self, triple: &AgentId) -> Certificate {
        let sig = self.key.sign(&triple.canonical_bytes());
        Certificate { triple: triple.clone(), issuer: self.id.clone(), signature: hex::encode(sig.to_bytes()) }
    }
}

/// True iff `cert` carries a valid signature by the key `public_hex`.
pub fn verify_certificate(cert: &Certificate, public_hex: &str) -> bool {
    let Some(key) = hex::decode(public_hex).ok().and_then(|b| <[u8; 32]>::try_from(b).ok()).and_then(|b| VerifyingKey::from_bytes(&b).ok())
    else {
        return false;
    };
    let Some(sig) = hex::decode(&cert.signature).ok().and_then(|b| <[u8; 64]>::try_from(b).ok()) else {
        return false;
    };
    key.verify(&cert.triple.canonical_bytes(), &Signature::from_bytes(&sig)).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Layer;

    #[test]
    fn issued_certificates_verify() {
        let ca = CertAuthority::deterministic("acme-ca");
        let cert = ca.issue(&AgentId::new("buyer1", "store7", Layer::B));
        assert!(verify_certificate(&cert, &ca.public_hex()));
        let other = CertAuthority::deterministic("other");
        assert!(!verify_certificate(&cert, &other.public_hex()));
    }

    #[test]
    fn tampering_breaks_the_signature() {
        let ca = CertAuthority::deterministic("acme-ca");
        let mut cert = ca.issue(&AgentId::new("buyer1", "store7", Layer::B));
        cert.triple.layer = Layer::M;
        assert!(!verify_certificate(&cert, &ca.public_hex()));
        let mut cert = ca.issue(&AgentId::new("buyer1", "store7", Layer::B));
        cert.signature.replace_range(0..2, if &cert.signature[0..2] == "00" { "01" } else { "00" });
        assert!(!verify_certificate(&cert, &ca.public_hex()));
        cert.signature = "zz".into();
        assert!(!verify_certificate(&cert, &ca.public_hex()));
    }

    #[test]
    fn secret_round_trip() {
        let ca = CertAuthority::deterministic("x");
        let again = CertAuthority::from_secret_hex("x", &ca.secret_hex()).unwrap();
        assert_eq!(ca.public_hex(), again.public_hex());
    }
}
