//! Occurrence (rank) structure over the BWT: per-symbol checkpoint counts
//! every `BLOCK` rows, with the tail counted by scanning the block.

/// Rows per checkpoint block.
pub const BLOCK: usize = 64;

/// Symbol id meaning "byte not present in the indexed text".
const ABSENT: u8 = 0xFF;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankStructure {
    /// Dense symbol id for each byte value; `ABSENT` when the byte never occurs.
    sym_of_byte: Vec<u8>,
    /// Byte value for each dense symbol id, ascending.
    byte_of_sym: Vec<u8>,
    /// `less[s]` = number of text symbols strictly smaller than symbol `s`;
    /// `less[sigma]` = text length.
    less: Vec<u32>,
    /// `ck[b * sigma + s]` = occurrences of symbol `s` in `bwt[..b * BLOCK]`.
    ck: Vec<u32>,
}

impl RankStructure {
    pub fn new(bwt: &[u8]) -> Self {
        let mut counts = [0u32; 256];
        for &b in bwt {
            counts[b as usize] += 1;
        }
        let mut sym_of_byte = vec![ABSENT; 256];
        let mut byte_of_sym = Vec::new();
        for b in 0..256usize {
            if counts[b] > 0 {
                sym_of_byte[b] = byte_of_sym.len() as u8;
                byte_of_sym.push(b as u8);
            }
        }
        let sigma = byte_of_sym.len();
        let mut less = Vec::with_capacity(sigma + 1);
        let mut acc = 0u32;
        for &b in &byte_of_sym {
            less.push(acc);
            acc += counts[b as usize];
        }
        less.push(acc);

        let blocks = bwt.len() / BLOCK + 1;
        let mut ck = vec![0u32; blocks * sigma];
        let mut running = vec![0u32; sigma];
        for block in 0..blocks {
            ck[block * sigma..(block + 1) * sigma].copy_from_slice(&running);
            let end = ((block + 1) * BLOCK).min(bwt.len());
            for &b in &bwt[block * BLOCK..end] {
                running[sym_of_byte[b as usize] as usize] += 1;
            }
        }

        RankStructure {
            sym_of_byte,
            byte_of_sym,
            less,
            ck,
        }
    }

    pub fn sigma(&self) -> usize {
        self.byte_of_sym.len()
    }

    pub fn symbol(&self, byte: u8) -> Option<u8> {
        let s = self.sym_of_byte[byte as usize];
        (s != ABSENT).then_some(s)
    }

    /// Bytes present in the indexed text, ascending.
    pub fn alphabet(&self) -> &[u8] {
        &self.byte_of_sym
    }

    /// Number of text symbols strictly smaller than `byte`'s symbol.
    pub fn less(&self, sym: u8) -> u32 {
        self.less[sym as usize]
    }

    /// Occurrences of `byte` in `bwt[..row]`.
    pub fn occ(&self, bwt: &[u8], byte: u8, row: u32) -> u32 {
        let sym = self.sym_of_byte[byte as usize];
        if sym == ABSENT {
            return 0;
        }
        let row = row as usize;
        let block = row / BLOCK;
        let mut count = self.ck[block * self.sigma() + sym as usize];
        for &b in &bwt[block * BLOCK..row] {
            if b == byte {
                count += 1;
            }
        }
        count
    }

    pub(crate) fn parts(&self) -> (&[u8], &[u32], &[u32]) {
        (&self.byte_of_sym, &self.less, &self.ck)
    }

    pub(crate) fn from_parts(byte_of_sym: Vec<u8>, less: Vec<u32>, ck: Vec<u32>) -> Self {
        let mut sym_of_byte = vec![ABSENT; 256];
        for (s, &b) in byte_of_sym.iter().enumerate() {
            sym_of_byte[b as usize] = s as u8;
        }
        RankStructure {
            sym_of_byte,
            byte_of_sym,
            less,
            ck,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occ_matches_naive_scan() {
        let bwt: Vec<u8> = (0..1000u64)
            .map(|i| match (i * 2654435761) % 4 {
                0 => 0u8,
                1 => b'a',
                2 => b'b',
                _ => b'z',
            })
            .collect();
        let rs = RankStructure::new(&bwt);
        for byte in [0u8, b'a', b'b', b'z', b'q'] {
            for row in [0u32, 1, 63, 64, 65, 500, 999, 1000] {
                let naive = bwt[..row as usize].iter().filter(|&&b| b == byte).count() as u32;
                assert_eq!(rs.occ(&bwt, byte, row), naive, "byte {byte} row {row}");
            }
        }
    }

    #[test]
    fn less_is_cumulative_over_sorted_alphabet() {
        let bwt = b"cabab\x00".to_vec();
        let rs = RankStructure::new(&bwt);
        assert_eq!(rs.alphabet(), &[0u8, b'a', b'b', b'c']);
        let sym_a = rs.symbol(b'a').unwrap();
        let sym_c = rs.symbol(b'c').unwrap();
        assert_eq!(rs.less(sym_a), 1); // one sentinel below 'a'
        assert_eq!(rs.less(sym_c), 5);
        assert_eq!(*rs.parts().1.last().unwrap(), 6);
    }
}
