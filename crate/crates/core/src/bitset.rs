//! Growable bit set with value equality (trailing zero words are trimmed).

use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, Default)]
pub struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new() -> Self {
        BitSet { words: Vec::new() }
    }

    pub fn contains(&self, i: u32) -> bool {
        let w = (i / 64) as usize;
        w < self.words.len() && self.words[w] & (1 << (i % 64)) != 0
    }

    pub fn insert(&mut self, i: u32) {
        let w = (i / 64) as usize;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: u32) {
        let w = (i / 64) as usize;
        if w < self.words.len() {
            self.words[w] &= !(1 << (i % 64));
            while self.words.last() == Some(&0) {
                self.words.pop();
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64u32).filter(move |b| w & (1 << b) != 0).map(move |b| wi as u32 * 64 + b)
        })
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn union_with(&mut self, other: &BitSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }
}

impl PartialEq for BitSet {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
    }
}

impl Eq for BitSet {}

impl Hash for BitSet {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.words.hash(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn behaves_like_a_set(ops in proptest::collection::vec((any::<bool>(), 0u32..300), 0..60)) {
            let mut b = BitSet::new();
            let mut s = std::collections::BTreeSet::new();
            for (ins, i) in ops {
                if ins { b.insert(i); s.insert(i); } else { b.remove(i); s.remove(&i); }
            }
            prop_assert_eq!(b.iter().collect::<Vec<_>>(), s.iter().copied().collect::<Vec<_>>());
            let mut c = BitSet::new();
            for i in &s { c.insert(*i); }
            prop_assert_eq!(b, c);
        }
    }
}
