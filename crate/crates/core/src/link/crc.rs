//! CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.

pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Long division of the message (with the init value folded into the first
    /// 16 bits) followed by 16 zero bits, one message bit at a time. Needs >= 2 bytes.
    fn crc_by_division(data: &[u8]) -> u16 {
        let mut bits: Vec<u8> = data
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
            .collect();
        for (i, bit) in bits.iter_mut().take(16).enumerate() {
            *bit ^= ((0xFFFFu16 >> (15 - i)) & 1) as u8;
        }
        bits.extend([0u8; 16]);
        let poly: u32 = 0x1_1021;
        let mut reg: u32 = 0;
        for bit in bits {
            reg = (reg << 1) | bit as u32;
            if reg & 0x1_0000 != 0 {
                reg ^= poly;
            }
        }
        reg as u16
    }

    #[test]
    fn check_value() {
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
        assert_eq!(crc_by_division(b"123456789"), 0x29B1);
        assert_eq!(crc16_ccitt_false(b""), 0xFFFF);
    }

    #[test]
    fn matches_division_oracle() {
        let mut x: u32 = 12345;
        for len in 2..64 {
            let data: Vec<u8> = (0..len)
                .map(|_| {
                    x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
                    (x >> 16) as u8
                })
                .collect();
            assert_eq!(crc16_ccitt_false(&data), crc_by_division(&data), "len {len}");
        }
    }
}
