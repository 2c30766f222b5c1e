//! Plain bit storage with a rank directory.
//!
//! Absolute rank samples every 512 bits plus word popcounts give constant
//! time `rank1`. The directory is rebuilt from the raw bits on load; only the
//! bits themselves are serialized.

const BLOCK_BITS: usize = 512;
const WORDS_PER_BLOCK: usize = BLOCK_BITS / 64;

/// Append-only bit buffer used while constructing a tree level.
#[derive(Debug, Default, Clone)]
pub struct BitBuf {
    words: Vec<u64>,
    len: usize,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        let word = self.len / 64;
        if word == self.words.len() {
            self.words.push(0);
        }
        if bit {
            self.words[word] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bits packed least-significant-first into bytes, padded to whole bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = vec![0u8; nbytes];
        for (i, byte) in out.iter_mut().enumerate() {
            let word = self.words[i / 8];
            *byte = (word >> ((i % 8) * 8)) as u8;
        }
        out
    }

    /// Rebuild from the byte layout produced by [`BitBuf::to_bytes`].
    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << ((i % 8) * 8);
        }
        // Reject stray bits in the final partial byte so the layout stays
        // canonical and byte-for-byte reproducible.
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last() {
                if last >> (len % 64) != 0 {
                    return None;
                }
            }
        }
        Some(BitBuf { words, len })
    }
}

/// Immutable bits plus the rank directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankBits {
    words: Vec<u64>,
    len: usize,
    /// Ones strictly before each 512-bit block.
    blocks: Vec<u64>,
}

impl RankBits {
    pub fn build(buf: BitBuf) -> Self {
        let nblocks = buf.len.div_ceil(BLOCK_BITS).max(1);
        let mut blocks = Vec::with_capacity(nblocks);
        let mut acc = 0u64;
        for b in 0..nblocks {
            blocks.push(acc);
            let start = b * WORDS_PER_BLOCK;
            let end = ((b + 1) * WORDS_PER_BLOCK).min(buf.words.len());
            for w in &buf.words[start..end] {
                acc += w.count_ones() as u64;
            }
        }
        RankBits {
            words: buf.words,
            len: buf.len,
            blocks,
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

    /// Number of ones in `[0, pos)`.
    pub fn rank1(&self, pos: usize) -> u64 {
        debug_assert!(pos <= self.len);
        // pos == len on a block boundary walks the last block's words.
        let block = (pos / BLOCK_BITS).min(self.blocks.len() - 1);
        let mut rank = self.blocks[block];
        let word = pos / 64;
        for w in &self.words[block * WORDS_PER_BLOCK..word] {
            rank += w.count_ones() as u64;
        }
        if !pos.is_multiple_of(64) {
            rank += (self.words[word] & ((1u64 << (pos % 64)) - 1)).count_ones() as u64;
        }
        rank
    }

    pub fn count_ones(&self) -> u64 {
        self.rank1(self.len)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = vec![0u8; nbytes];
        for (i, byte) in out.iter_mut().enumerate() {
            let word = self.words[i / 8];
            *byte = (word >> ((i % 8) * 8)) as u8;
        }
        out
    }
}
