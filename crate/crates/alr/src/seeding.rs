//! Stable seed derivation for reproducible experiment pipelines.
//!
//! Every random decision in a run is driven by a `u64` seed derived from the
//! experiment base seed plus a context path (dataset name, repetition index,
//! strategy tag, iteration number). The mixer is a fixed splitmix64 chain so
//! derived seeds are identical across platforms and releases — `std`'s
//! `DefaultHasher` makes no such promise.

/// splitmix64 finalizer; full-period bijection on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds one component into a seed.
pub fn mix(seed: u64, component: u64) -> u64 {
    splitmix64(seed ^ splitmix64(component))
}

/// Folds a string component (e.g. a dataset name) into a seed.
pub fn mix_str(seed: u64, component: &str) -> u64 {
    // FNV-1a over the bytes, then mixed like any other component.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in component.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(seed, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: a change here silently breaks reproducibility of
        // every archived run, so the constants are pinned.
        assert_eq!(mix(0, 0), 0xa706_dd2f_4d19_7e6f);
        assert_eq!(mix(42, 7), 0x6eab_8625_df26_8fbc);
        assert_eq!(mix_str(1, "yacht"), 0x6049_9f4d_0533_f501);
        assert_ne!(mix(42, 7), mix(42, 8));
        assert_ne!(mix(42, 7), mix(43, 7));
        assert_ne!(mix_str(1, "yacht"), mix_str(1, "Yacht"));
    }

    #[test]
    fn mix_order_matters() {
        assert_ne!(mix(mix(0, 1), 2), mix(mix(0, 2), 1));
    }
}
