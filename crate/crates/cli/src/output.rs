use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance embedded in every output file.
#[derive(Clone, Debug, Serialize)]
pub struct Stamp {
    pub version: &'static str,
    pub config_hash: String,
}

impl Stamp {
    pub fn new(config_hash: String) -> Self {
        Stamp { version: VERSION, config_hash }
    }

    /// SHA-256 of the canonical JSON form of `input`, defaults filled in.
    pub fn of<T: Serialize>(input: &T) -> Self {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(input).expect("input serializes");
        Stamp::new(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn csv_comment(&self) -> String {
        format!("# qobs {} config {}\n", self.version, self.config_hash)
    }
}
