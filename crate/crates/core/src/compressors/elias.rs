//! Bit-level writer/reader with Elias-gamma codes for positive integers.

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn write_bit(&mut self, bit: bool) {
        let byte = (self.bits / 8) as usize;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 1 << (self.bits % 8);
        }
        self.bits += 1;
    }

    /// Low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn write_gamma(&mut self, value: u64) {
        assert!(value >= 1, "Elias gamma codes positive integers");
        let len = 63 - value.leading_zeros();
        for _ in 0..len {
            self.write_bit(false);
        }
        self.write_bits(value, len + 1);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], limit: u64) -> Self {
        Self {
            bytes,
            pos: 0,
            limit: limit.min(bytes.len() as u64 * 8),
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.limit {
            return None;
        }
        let b = (self.bytes[(self.pos / 8) as usize] >> (self.pos % 8)) & 1;
        self.pos += 1;
        Some(b == 1)
    }

    pub fn read_bits(&mut self, n: u32) -> Option<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Some(v)
    }

    pub fn read_gamma(&mut self) -> Option<u64> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 63 {
                return None;
            }
        }
        let rest = self.read_bits(zeros)?;
        Some((1u64 << zeros) | rest)
    }
}

/// Length in bits of the gamma code of `value`.
pub fn gamma_len(value: u64) -> u64 {
    assert!(value >= 1);
    2 * u64::from(63 - value.leading_zeros()) + 1
}
