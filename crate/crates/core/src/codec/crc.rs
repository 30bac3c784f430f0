//! CRC-32 frame check sequence (polynomial 0x04C11DB7, reflected, init and
//! final XOR all-ones).
//!
//! Bit strings are fed to the register in sequence order. A byte string
//! transmitted least-significant bit first therefore yields the familiar
//! byte-oriented CRC-32 value.

use bitvec::prelude::*;

const POLY_REFLECTED: u32 = 0xEDB8_8320;

/// CRC of any frame followed by its own FCS.
pub const FCS_RESIDUE: u32 = 0x2144_DF1C;

const TABLE: [u32; 256] = build_table();

const fn build_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut k = 0;
        while k < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ POLY_REFLECTED } else { crc >> 1 };
            k += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-32 over bytes, each byte taken least-significant bit first.
pub fn crc32(bytes: &[u8]) -> u32 {
    !bytes.iter().fold(!0u32, |crc, &b| (crc >> 8) ^ TABLE[((crc ^ b as u32) & 0xFF) as usize])
}

/// CRC-32 over a bit string in sequence order.
pub fn fcs32(bits: &BitSlice<u8, Msb0>) -> u32 {
    let mut crc = !0u32;
    let chunks = bits.chunks_exact(8);
    let tail = chunks.remainder();
    for chunk in chunks {
        // first bit of the chunk is the first one shifted in
        let byte = chunk.iter().by_vals().rev().fold(0u8, |acc, b| (acc << 1) | b as u8);
        crc = (crc >> 8) ^ TABLE[((crc ^ byte as u32) & 0xFF) as usize];
    }
    for bit in tail.iter().by_vals() {
        crc ^= bit as u32;
        crc = if crc & 1 != 0 { (crc >> 1) ^ POLY_REFLECTED } else { crc >> 1 };
    }
    !crc
}

/// Bit string of `bytes` in transmission order (LSB of each byte first).
pub fn bits_lsb_first(bytes: &[u8]) -> BitVec<u8, Msb0> {
    let mut out = BitVec::with_capacity(bytes.len() * 8);
    for &b in bytes {
        for i in 0..8 {
            out.push((b >> i) & 1 == 1);
        }
    }
    out
}

/// Appends `fcs` so the coefficient of x^31 goes first, which keeps the
/// residue of the protected frame constant.
pub fn push_fcs(bits: &mut BitVec<u8, Msb0>, fcs: u32) {
    for i in 0..32 {
        bits.push((fcs >> i) & 1 == 1);
    }
}

/// Reads back a field written by [`push_fcs`].
pub fn read_fcs(bits: &BitSlice<u8, Msb0>) -> u32 {
    bits.iter().by_vals().enumerate().fold(0u32, |acc, (i, b)| acc | ((b as u32) << i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(fcs32(&bits_lsb_first(b"123456789")), 0xCBF4_3926);
    }

    #[test]
    fn empty_input() {
        // init and final XOR cancel out on no data
        assert_eq!(crc32(&[]), 0);
        assert_eq!(fcs32(BitSlice::empty()), 0);
    }

    #[test]
    fn residue_is_constant() {
        for msg in [&b""[..], b"a", b"123456789", &[0u8; 37], &[0xFF; 5]] {
            let mut bits = bits_lsb_first(msg);
            let fcs = fcs32(&bits);
            push_fcs(&mut bits, fcs);
            assert_eq!(fcs32(&bits), FCS_RESIDUE);
            assert_eq!(read_fcs(&bits[bits.len() - 32..]), fcs);
        }
    }

    #[test]
    fn odd_length_bit_strings() {
        let mut bits: BitVec<u8, Msb0> = bitvec![u8, Msb0; 1, 0, 1];
        let a = fcs32(&bits);
        bits.push(false);
        assert_ne!(a, fcs32(&bits));
    }
}
