use std::fmt;

use smallvec::{smallvec, SmallVec};

use crate::span::Span;

/// Fixed-width bitset over source positions.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coverage {
    words: SmallVec<[u64; 2]>,
    len: usize,
}

impl Coverage {
    pub fn new(len: usize) -> Self {
        Coverage {
            words: smallvec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, pos: usize) -> bool {
        debug_assert!(pos < self.len);
        self.words[pos / 64] >> (pos % 64) & 1 == 1
    }

    pub fn set(&mut self, pos: usize) {
        debug_assert!(pos < self.len);
        self.words[pos / 64] |= 1 << (pos % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len
    }

    pub fn is_span_free(&self, span: Span) -> bool {
        (span.start..span.end).all(|p| !self.get(p))
    }

    pub fn with_span(&self, span: Span) -> Coverage {
        let mut next = self.clone();
        for p in span.start..span.end {
            next.set(p);
        }
        next
    }

    pub fn uncovered(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&p| !self.get(p))
    }

    /// True when every bit set in `other` is also set here.
    pub fn contains(&self, other: &Coverage) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == *b)
    }
}

impl fmt::Debug for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = (0..self.len).map(|p| if self.get(p) { '1' } else { '0' }).collect();
        write!(f, "Coverage({bits})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_and_query_across_word_boundary() {
        let mut c = Coverage::new(130);
        c.set(0);
        c.set(64);
        c.set(129);
        assert!(c.get(64) && c.get(129) && !c.get(63));
        assert_eq!(c.count(), 3);
        assert!(!c.is_span_free(Span::new(60, 70)));
        assert!(c.is_span_free(Span::new(65, 129)));
        let d = c.with_span(Span::new(1, 4));
        assert_eq!(d.count(), 6);
        assert!(d.contains(&c) && !c.contains(&d));
        assert_eq!(d.uncovered().count(), 124);
    }
}
