//! Digital PIM multiply lowered entirely to NOR gates, and the SFU
//! throughput balance.

/// Fixed accounting for one INT8×INT8 product in the digital arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NorCost {
    pub nor_ops: u32,
    pub columns: u32,
    pub cycles: u32,
}

impl NorCost {
    pub const NORS_PER_PRODUCT: u32 = 64;
    pub const COLUMNS_PER_NOR: u32 = 3;
    /// Four write cycles and one read cycle.
    pub const CYCLES_PER_ROW_OP: u32 = 5;

    pub const fn per_product() -> Self {
        Self {
            nor_ops: Self::NORS_PER_PRODUCT,
            columns: Self::NORS_PER_PRODUCT * Self::COLUMNS_PER_NOR,
            cycles: Self::CYCLES_PER_ROW_OP,
        }
    }
}

/// Gate-level evaluator that counts every NOR it fires.
#[derive(Default)]
struct NorNet {
    gates: u64,
}

impl NorNet {
    #[inline]
    fn nor(&mut self, a: bool, b: bool) -> bool {
        self.gates += 1;
        !(a || b)
    }

    #[inline]
    fn not(&mut self, a: bool) -> bool {
        self.nor(a, a)
    }

    #[inline]
    fn and(&mut self, a: bool, b: bool) -> bool {
        let na = self.not(a);
        let nb = self.not(b);
        self.nor(na, nb)
    }

    #[inline]
    fn or(&mut self, a: bool, b: bool) -> bool {
        let n = self.nor(a, b);
        self.not(n)
    }

    #[inline]
    fn xor(&mut self, a: bool, b: bool) -> bool {
        let n1 = self.nor(a, b);
        let n2 = self.nor(a, n1);
        let n3 = self.nor(b, n1);
        let xnor = self.nor(n2, n3);
        self.not(xnor)
    }

    fn full_add(&mut self, a: bool, b: bool, c: bool) -> (bool, bool) {
        let p = self.xor(a, b);
        let sum = self.xor(p, c);
        let g1 = self.and(a, b);
        let g2 = self.and(p, c);
        (sum, self.or(g1, g2))
    }

    /// Array multiplier; returns the low `width` bits of `a·b`.
    fn multiply(&mut self, a: u32, b: u32, width: u32) -> u32 {
        let bit = |v: u32, i: u32| (v >> i) & 1 == 1;
        let mut acc = [false; 32];
        for j in 0..width {
            let mut carry = false;
            for i in 0..(width - j) {
                let pp = self.and(bit(a, i), bit(b, j));
                let (s, c) = self.full_add(acc[(i + j) as usize], pp, carry);
                acc[(i + j) as usize] = s;
                carry = c;
            }
        }
        acc.iter()
            .take(width as usize)
            .enumerate()
            .fold(0u32, |v, (i, &b)| v | (b as u32) << i)
    }
}

/// Unsigned 8-bit product through the NOR netlist, with the fixed per-output
/// cost.
pub fn nor_multiply(a: u8, b: u8) -> (u16, NorCost) {
    let mut net = NorNet::default();
    let p = net.multiply(a as u32, b as u32, 16);
    (p as u16, NorCost::per_product())
}

/// NOR gates the functional netlist fires for one unsigned 8-bit product.
/// The array-multiplier netlist is larger than the fixed per-output
/// accounting, which assumes a dedicated in-array multiply sequence.
pub fn nor_netlist_gates() -> u64 {
    let mut net = NorNet::default();
    net.multiply(0xff, 0xff, 16);
    net.gates
}

/// Signed variant: operands are sign-extended to 16 bits and the low 16 bits
/// of the product are kept, which is exact for INT8 inputs.
pub fn nor_multiply_signed(a: i8, b: i8) -> (i16, NorCost) {
    let mut net = NorNet::default();
    let p = net.multiply(a as i16 as u16 as u32, b as i16 as u16 as u32, 16);
    (p as u16 as i16, NorCost::per_product())
}

/// Outputs per cycle the digital arrays can feed:
/// `arrays·row_bits / (64 NORs · 3 columns) / 5 cycles`, floored.
pub fn sfu_balance(arrays: u64, row_bits: u64) -> u64 {
    let per_output = (NorCost::NORS_PER_PRODUCT * NorCost::COLUMNS_PER_NOR * NorCost::CYCLES_PER_ROW_OP) as u64;
    arrays * row_bits / per_output
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        assert_eq!(nor_multiply(0, 200).0, 0);
        assert_eq!(nor_multiply(13, 11).0, 143);
        assert_eq!(nor_multiply(255, 255).0, 65025);
        assert_eq!(nor_multiply_signed(-128, -128).0, 16384);
        assert_eq!(nor_multiply_signed(-7, 9).0, -63);
        assert_eq!(nor_multiply_signed(127, -128).0, -16256);
    }

    #[test]
    fn cost_accounting() {
        let (_, c) = nor_multiply(3, 4);
        assert_eq!((c.nor_ops, c.columns, c.cycles), (64, 192, 5));
    }

    #[test]
    fn sfu_examples() {
        assert_eq!(sfu_balance(256, 1024), 273);
        assert_eq!(sfu_balance(256, 192), 51);
        assert_eq!(sfu_balance(1, 960), 1);
    }
}
