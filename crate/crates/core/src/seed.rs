//! Named sub-seeds derived from a single root seed.

/// Mix `root` with a stream name so unrelated consumers draw independent streams.
pub fn derive_seed(root: u64, stream: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ h)
}

/// Sub-seed for the `index`-th member of a stream (e.g. one per layer).
pub fn derive_indexed(root: u64, stream: &str, index: usize) -> u64 {
    splitmix64(derive_seed(root, stream).wrapping_add(index as u64))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub batching: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            data: derive_seed(root, "data"),
            init: derive_seed(root, "init"),
            batching: derive_seed(root, "batching"),
        }
    }
}
