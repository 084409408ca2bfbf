//! Compact marking storage for state-space exploration.
//!
//! Markings are bit-packed with a per-place width derived from a structural
//! bound and interned into an open-addressing table, so each state costs a
//! few machine words instead of one integer per place.

use crate::lp::{LinearProgram, Relation};
use crate::net::PetriNet;

/// Per-place structural bound: `max m(p)` over `m = m0 + C s >= 0, s >= 0`.
/// `None` when the LP is unbounded (the place may be unbounded).
pub fn structural_place_bounds(net: &PetriNet) -> Vec<Option<u32>> {
    let c = net.incidence();
    let (np, nt) = (net.num_places(), net.num_transitions());
    let m0 = net.initial_marking();
    (0..np)
        .map(|p| {
            if nt == 0 {
                return Some(m0[p]);
            }
            let mut lp = LinearProgram::maximize(c[p].iter().map(|&v| v as f64).collect());
            for q in 0..np {
                if c[q].iter().all(|&v| v >= 0) {
                    continue;
                }
                let row: Vec<f64> = c[q].iter().map(|&v| -(v as f64)).collect();
                lp.constraint(row, Relation::Le, f64::from(m0[q]))
                    .expect("row width matches");
            }
            match lp.solve() {
                Ok(sol) => Some((f64::from(m0[p]) + sol.value + 1e-6).floor().max(0.0) as u32),
                Err(_) => None,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StateEncoding {
    /// (word, shift, width) per place
    slots: Vec<(usize, u32, u32)>,
    words: usize,
}

impl StateEncoding {
    /// Bits needed per place given optional bounds; unbounded places get 16 bits.
    pub fn from_bounds(bounds: &[Option<u32>]) -> Self {
        let mut slots = Vec::with_capacity(bounds.len());
        let (mut word, mut shift) = (0usize, 0u32);
        for b in bounds {
            let width = match b {
                Some(0) => 1,
                Some(k) => 32 - k.leading_zeros(),
                None => 16,
            }
            .min(32);
            if shift + width > 64 {
                word += 1;
                shift = 0;
            }
            slots.push((word, shift, width));
            shift += width;
        }
        let words = if bounds.is_empty() { 1 } else { word + 1 };
        StateEncoding { slots, words }
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn width(&self, p: usize) -> u32 {
        self.slots[p].2
    }

    pub fn capacity(&self, p: usize) -> u64 {
        (1u64 << self.slots[p].2) - 1
    }

    /// Packs `m`; returns `None` if some place exceeds its slot.
    pub fn encode(&self, m: &[u32], out: &mut [u64]) -> Option<()> {
        out.iter_mut().for_each(|w| *w = 0);
        for (p, &(w, s, width)) in self.slots.iter().enumerate() {
            let v = u64::from(m[p]);
            if v >> width != 0 {
                return None;
            }
            out[w] |= v << s;
        }
        Some(())
    }

    pub fn decode(&self, packed: &[u64], out: &mut [u32]) {
        for (p, &(w, s, width)) in self.slots.iter().enumerate() {
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            out[p] = ((packed[w] >> s) & mask) as u32;
        }
    }
}

const EMPTY: u32 = u32::MAX;

/// Interning table from packed markings to dense indices (insertion order).
#[derive(Debug, Clone)]
pub struct StateStore {
    enc: StateEncoding,
    arena: Vec<u64>,
    table: Vec<u32>,
    len: usize,
}

fn hash_words(words: &[u64]) -> u64 {
    // FxHash-style mixing; deterministic across runs.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &w in words {
        h = (h.rotate_left(5) ^ w).wrapping_mul(0x517c_c1b7_2722_0a95);
    }
    h ^ (h >> 29)
}

impl StateStore {
    pub fn new(enc: StateEncoding) -> Self {
        StateStore {
            enc,
            arena: Vec::new(),
            table: vec![EMPTY; 1024],
            len: 0,
        }
    }

    pub fn encoding(&self) -> &StateEncoding {
        &self.enc
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn packed(&self, idx: usize) -> &[u64] {
        let w = self.enc.words;
        &self.arena[idx * w..(idx + 1) * w]
    }

    pub fn decode(&self, idx: usize, out: &mut [u32]) {
        self.enc.decode(self.packed(idx), out);
    }

    pub fn marking(&self, idx: usize) -> Vec<u32> {
        let mut out = vec![0; self.enc.slots.len()];
        self.decode(idx, &mut out);
        out
    }

    fn grow(&mut self) {
        let cap = self.table.len() * 2;
        let mut table = vec![EMPTY; cap];
        let mask = cap - 1;
        for idx in 0..self.len {
            let mut slot = (hash_words(self.packed(idx)) as usize) & mask;
            while table[slot] != EMPTY {
                slot = (slot + 1) & mask;
            }
            table[slot] = idx as u32;
        }
        self.table = table;
    }

    /// Returns `(index, inserted)` for the packed marking.
    pub fn intern(&mut self, packed: &[u64]) -> (usize, bool) {
        if (self.len + 1) * 2 > self.table.len() {
            self.grow();
        }
        let mask = self.table.len() - 1;
        let mut slot = (hash_words(packed) as usize) & mask;
        let w = self.enc.words;
        loop {
            let e = self.table[slot];
            if e == EMPTY {
                let idx = self.len;
                self.table[slot] = idx as u32;
                self.arena.extend_from_slice(packed);
                self.len += 1;
                return (idx, true);
            }
            let e = e as usize;
            if &self.arena[e * w..(e + 1) * w] == packed {
                return (e, false);
            }
            slot = (slot + 1) & mask;
        }
    }

    pub fn find(&self, packed: &[u64]) -> Option<usize> {
        let mask = self.table.len() - 1;
        let mut slot = (hash_words(packed) as usize) & mask;
        let w = self.enc.words;
        loop {
            let e = self.table[slot];
            if e == EMPTY {
                return None;
            }
            let e = e as usize;
            if &self.arena[e * w..(e + 1) * w] == packed {
                return Some(e);
            }
            slot = (slot + 1) & mask;
        }
    }

    /// Approximate heap usage in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.arena.capacity() * 8 + self.table.capacity() * 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip() {
        let enc = StateEncoding::from_bounds(&[Some(1), Some(3), None, Some(0), Some(200)]);
        let m = [1, 3, 40000, 0, 199];
        let mut packed = vec![0; enc.words()];
        enc.encode(&m, &mut packed).unwrap();
        let mut back = [0; 5];
        enc.decode(&packed, &mut back);
        assert_eq!(back, m);
    }

    #[test]
    fn overflow_detected() {
        let enc = StateEncoding::from_bounds(&[Some(1)]);
        let mut packed = vec![0; 1];
        assert!(enc.encode(&[2], &mut packed).is_none());
    }

    #[test]
    fn interning_is_stable() {
        let enc = StateEncoding::from_bounds(&vec![Some(7); 40]);
        let mut store = StateStore::new(enc.clone());
        let mut buf = vec![0; enc.words()];
        for i in 0..5000u32 {
            let m: Vec<u32> = (0..40).map(|p| (i >> (p % 13)) & 7).collect();
            enc.encode(&m, &mut buf).unwrap();
            store.intern(&buf);
        }
        let n = store.len();
        for i in 0..5000u32 {
            let m: Vec<u32> = (0..40).map(|p| (i >> (p % 13)) & 7).collect();
            enc.encode(&m, &mut buf).unwrap();
            let (idx, inserted) = store.intern(&buf);
            assert!(!inserted);
            assert_eq!(store.marking(idx), m);
        }
        assert_eq!(store.len(), n);
    }

    #[test]
    fn cycle_bounds() {
        let mut n = PetriNet::new();
        n.add_place("a", 2).unwrap();
        n.add_place("b", 0).unwrap();
        n.add_simple_transition("t", &["a"], &["b"]).unwrap();
        n.add_simple_transition("u", &["b"], &["a"]).unwrap();
        assert_eq!(structural_place_bounds(&n), vec![Some(2), Some(2)]);
        n.add_place("sink", 0).unwrap();
        n.add_output_arc("t", "sink", 1).unwrap();
        assert_eq!(structural_place_bounds(&n)[2], None);
    }
}
