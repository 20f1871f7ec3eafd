//! Order-0 adaptive arithmetic coding of byte strings.
//!
//! The coder is the classic integer arithmetic coder with 32-bit bounds and
//! deferred underflow bits. Symbol statistics start uniform and adapt after
//! every byte, so no table is transmitted.
//!
//! Stream layout: `u64` decoded length, coded bits (MSB first, zero padded),
//! `u32` CRC32 of the decoded bytes. All integers little endian.

use crate::error::{Error, Result};

const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const MASK: u64 = (1 << 32) - 1;
const INCREMENT: u32 = 32;
const MAX_TOTAL: u32 = 1 << 16;

struct Model {
    freq: [u32; 256],
    total: u32,
}

impl Model {
    fn new() -> Self {
        Self {
            freq: [1; 256],
            total: 256,
        }
    }

    fn range_of(&self, sym: u8) -> (u32, u32) {
        let lo: u32 = self.freq[..sym as usize].iter().sum();
        (lo, lo + self.freq[sym as usize])
    }

    fn find(&self, target: u32) -> (u8, u32, u32) {
        let mut lo = 0;
        for (s, &f) in self.freq.iter().enumerate() {
            if target < lo + f {
                return (s as u8, lo, lo + f);
            }
            lo += f;
        }
        unreachable!("target below total")
    }

    fn update(&mut self, sym: u8) {
        self.freq[sym as usize] += INCREMENT;
        self.total += INCREMENT;
        if self.total > MAX_TOTAL {
            self.total = 0;
            for f in &mut self.freq {
                *f = (*f).div_ceil(2);
                self.total += *f;
            }
        }
    }
}

struct BitWriter {
    out: Vec<u8>,
    cur: u8,
    n: u8,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        self.cur = (self.cur << 1) | u8::from(bit);
        self.n += 1;
        if self.n == 8 {
            self.out.push(self.cur);
            self.cur = 0;
            self.n = 0;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.out.push(self.cur << (8 - self.n));
        }
        self.out
    }
}

/// Compresses `data`. The empty input produces a valid 12-byte stream.
pub fn entropy_encode(data: &[u8]) -> Vec<u8> {
    let mut model = Model::new();
    let mut bits = BitWriter {
        out: Vec::with_capacity(data.len() / 2 + 16),
        cur: 0,
        n: 0,
    };
    let (mut low, mut high): (u64, u64) = (0, MASK);
    let mut pending = 0u64;
    let emit = |bits: &mut BitWriter, bit: bool, pending: &mut u64| {
        bits.push(bit);
        for _ in 0..*pending {
            bits.push(!bit);
        }
        *pending = 0;
    };
    for &sym in data {
        let (lo, hi) = model.range_of(sym);
        let range = high - low + 1;
        let total = u64::from(model.total);
        high = low + range * u64::from(hi) / total - 1;
        low += range * u64::from(lo) / total;
        loop {
            if high < HALF {
                emit(&mut bits, false, &mut pending);
            } else if low >= HALF {
                emit(&mut bits, true, &mut pending);
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                pending += 1;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
        }
        model.update(sym);
    }
    pending += 1;
    emit(&mut bits, low >= QUARTER, &mut pending);

    let body = bits.finish();
    let mut out = Vec::with_capacity(body.len() + 12);
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc32fast::hash(data).to_le_bytes());
    out
}

/// Inverse of [`entropy_encode`]. Corruption is reported as a checksum
/// mismatch (or truncation when the framing itself is damaged).
pub fn entropy_decode(coded: &[u8]) -> Result<Vec<u8>> {
    if coded.len() < 12 {
        return Err(Error::Truncated(format!("entropy stream of {} bytes", coded.len())));
    }
    let n = u64::from_le_bytes(coded[..8].try_into().unwrap());
    let body = &coded[8..coded.len() - 4];
    let stored = u32::from_le_bytes(coded[coded.len() - 4..].try_into().unwrap());
    // Every symbol costs at least a few millibits, so a huge claimed length
    // on a short body is corruption, not data.
    if n > (body.len() as u64 + 1) * 8 * 4096 {
        return Err(Error::Format(format!(
            "entropy stream claims {n} bytes from a {}-byte body",
            body.len()
        )));
    }
    let mut bit_pos = 0usize;
    let mut next_bit = || {
        let byte = body.get(bit_pos / 8).copied().unwrap_or(0);
        let bit = (byte >> (7 - bit_pos % 8)) & 1;
        bit_pos += 1;
        u64::from(bit)
    };
    let mut model = Model::new();
    let (mut low, mut high): (u64, u64) = (0, MASK);
    let mut value = 0u64;
    for _ in 0..32 {
        value = (value << 1) | next_bit();
    }
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let range = high - low + 1;
        let total = u64::from(model.total);
        if value < low || value > high {
            return Err(Error::Checksum {
                stored,
                computed: crc32fast::hash(&out),
            });
        }
        let target = ((value - low + 1) * total - 1) / range;
        if target >= total {
            return Err(Error::Checksum {
                stored,
                computed: crc32fast::hash(&out),
            });
        }
        let (sym, lo, hi) = model.find(target as u32);
        high = low + range * u64::from(hi) / total - 1;
        low += range * u64::from(lo) / total;
        loop {
            if high < HALF {
            } else if low >= HALF {
                value -= HALF;
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < HALF + QUARTER {
                value -= QUARTER;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | next_bit();
        }
        model.update(sym);
        out.push(sym);
    }
    let computed = crc32fast::hash(&out);
    if computed != stored {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(out)
}
