//! Opaque identifiers.

use rand::RngCore;

/// 128 random bits, hex-encoded (32 lowercase characters).
pub fn new_id() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}
