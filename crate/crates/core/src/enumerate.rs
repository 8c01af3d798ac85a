//! Exhaustive enumeration of short `Y` paths.
//!
//! Every `±1` prefix of a fixed length is extended by an all-forward suffix,
//! which makes every regeneration decision inside the prefix exact. For each
//! prefix whose first positive regeneration time `tau1` falls inside it, the
//! pair `(|B|, tau1)` is tallied, where `|B|` counts backward steps up to
//! `tau1`. The table tells which windows `tau1 <= w |B| + 1` hold.
//!
//! This module deliberately does not reuse the online or batch detectors: it
//! evaluates the definition directly and serves as their oracle.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::regen::RegenMode;

pub const MAX_ENUMERATION_LEN: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnumerationTable {
    pub max_len: u32,
    pub mode: RegenMode,
    pub prefixes: u64,
    /// Prefixes whose first positive regeneration time lies inside them.
    pub resolved: u64,
    /// Prefix counts by `(|B|, tau1)`.
    pub counts: BTreeMap<(u32, u32), u64>,
    /// The same restricted to prefixes on which time 0 is a regeneration
    /// time.
    pub zero_sr_counts: BTreeMap<(u32, u32), u64>,
}

impl EnumerationTable {
    pub fn max_tau_by_b(&self) -> BTreeMap<u32, u32> {
        let mut out = BTreeMap::new();
        for &(b, tau) in self.counts.keys() {
            let e = out.entry(b).or_insert(0);
            *e = (*e).max(tau);
        }
        out
    }

    /// Prefixes with `tau1 > w |B| + 1`.
    pub fn window_exceptions(&self, w: u32) -> u64 {
        self.counts
            .iter()
            .filter(|(&(b, tau), _)| tau > w * b + 1)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Smallest window coefficient with no exceptions in the table.
    pub fn validated_window(&self) -> u32 {
        (0..)
            .find(|&w| self.window_exceptions(w) == 0)
            .expect("a finite table has a finite window")
    }

    pub fn contains(&self, b: u32, tau: u32) -> bool {
        self.counts.contains_key(&(b, tau))
    }
}

/// First positive regeneration time of `y` (with `y[0] = 0`) under an
/// all-forward continuation, together with `|B|` up to it.
pub fn first_regeneration(y: &[i64], mode: RegenMode) -> Option<(u32, u32)> {
    let n = y.len() - 1;
    let mut past_max = y[0];
    let mut back = 0u32;
    for t in 1..=n {
        if y[t] < y[t - 1] {
            back += 1;
        }
        let fresh_max = y[t] > past_max;
        past_max = past_max.max(y[t]);
        if !fresh_max {
            continue;
        }
        // The continuation after the prefix only climbs above y[n] >= min.
        let future_ok = y[t + 1..].iter().all(|&s| !mode.breaks(s, y[t]));
        if future_ok {
            return Some((back, t as u32));
        }
    }
    None
}

/// Whether time 0 is a regeneration time of the prefix under an all-forward
/// continuation.
pub fn origin_regenerates(y: &[i64], mode: RegenMode) -> bool {
    y[1..].iter().all(|&s| !mode.breaks(s, 0))
}

pub fn enumerate_paths(max_len: u32, mode: RegenMode) -> Result<EnumerationTable> {
    if max_len == 0 || max_len > MAX_ENUMERATION_LEN {
        return Err(Error::EnumerationTooLong(max_len));
    }
    let n = max_len as usize;
    let mut y = vec![0i64; n + 1];
    let mut table = EnumerationTable {
        max_len,
        mode,
        prefixes: 1u64 << max_len,
        resolved: 0,
        counts: BTreeMap::new(),
        zero_sr_counts: BTreeMap::new(),
    };
    for mask in 0u64..(1u64 << max_len) {
        // Bit i set means step i+1 goes backward.
        for i in 0..n {
            y[i + 1] = y[i] + if mask >> i & 1 == 1 { -1 } else { 1 };
        }
        if let Some(key) = first_regeneration(&y, mode) {
            table.resolved += 1;
            *table.counts.entry(key).or_default() += 1;
            if origin_regenerates(&y, mode) {
                *table.zero_sr_counts.entry(key).or_default() += 1;
            }
        }
    }
    Ok(table)
}
