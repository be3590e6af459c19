use sha2::{Digest, Sha256};

/// Derives an independent RNG seed from a base seed and a list of tags.
///
/// Stable across platforms and compiler versions, so synthetic outputs are a
/// pure function of their inputs.
pub fn stream_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_tag_sensitive() {
        assert_eq!(stream_seed(1, &[b"a"]), stream_seed(1, &[b"a"]));
        assert_ne!(stream_seed(1, &[b"a"]), stream_seed(2, &[b"a"]));
        assert_ne!(stream_seed(1, &[b"ab"]), stream_seed(1, &[b"a", b"b"]));
    }
}
