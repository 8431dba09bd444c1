//! Gray-mapped square QAM with unit average energy.
//!
//! Each symbol carries `log2(order)` bits: the first half select the in-phase
//! level, the second half the quadrature level. Per axis the first bit is the
//! sign (0 → positive) and the remaining bits Gray-code the magnitude from
//! the inside out, so 4-QAM bits `00` map to `(1+j)/√2`.

use alloc::vec::Vec;

use crate::error::bail;
use crate::grid::DelayDopplerGrid;
use crate::{CMatrix, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QamOrder(u32);

impl QamOrder {
    pub fn new(order: u32) -> Result<Self> {
        match order {
            4 | 16 | 64 => Ok(QamOrder(order)),
            _ => bail!(Unsupported, "QAM order {order} (supported: 4, 16, 64)"),
        }
    }

    pub fn order(self) -> u32 {
        self.0
    }

    pub fn bits_per_symbol(self) -> usize {
        self.0.trailing_zeros() as usize
    }

    fn bits_per_axis(self) -> usize {
        self.bits_per_symbol() / 2
    }

    /// `1/sqrt(2(L²−1)/3)` for `L` levels per axis.
    fn scale(self) -> f64 {
        let levels = (1u32 << self.bits_per_axis()) as f64;
        1.0 / libm::sqrt(2.0 * (levels * levels - 1.0) / 3.0)
    }

    fn axis_level(self, bits: &[u8]) -> f64 {
        let sign = if bits[0] == 0 { 1.0 } else { -1.0 };
        let mut gray = 0u32;
        for &b in &bits[1..] {
            gray = (gray << 1) | b as u32;
        }
        let mut idx = gray;
        let mut shift = gray >> 1;
        while shift != 0 {
            idx ^= shift;
            shift >>= 1;
        }
        sign * (2 * idx + 1) as f64
    }

    fn axis_bits(self, v: f64, out: &mut Vec<u8>) {
        let k = self.bits_per_axis();
        let max_idx = (1u32 << (k - 1)) - 1;
        out.push(if v >= 0.0 { 0 } else { 1 });
        let mag = libm::fabs(v);
        let idx = (libm::floor(mag / 2.0) as u32).min(max_idx);
        let gray = idx ^ (idx >> 1);
        for i in (0..k - 1).rev() {
            out.push(((gray >> i) & 1) as u8);
        }
    }

    pub fn map_symbol(self, bits: &[u8]) -> C64 {
        let h = self.bits_per_axis();
        C64::new(self.axis_level(&bits[..h]), self.axis_level(&bits[h..])) * self.scale()
    }

    /// Minimum-distance hard decision.
    pub fn demap_symbol(self, s: C64, out: &mut Vec<u8>) {
        let s = s / self.scale();
        self.axis_bits(s.re, out);
        self.axis_bits(s.im, out);
    }

    /// All constellation points in bit-label order.
    pub fn constellation(self) -> Vec<C64> {
        let b = self.bits_per_symbol();
        (0..self.0)
            .map(|v| {
                let bits: Vec<u8> = (0..b).rev().map(|i| ((v >> i) & 1) as u8).collect();
                self.map_symbol(&bits)
            })
            .collect()
    }
}

/// Maps `rows·cols·log2(order)` bits onto a grid, delay index fastest.
pub fn qam_map(bits: &[u8], order: QamOrder, rows: usize, cols: usize) -> Result<DelayDopplerGrid> {
    let b = order.bits_per_symbol();
    if bits.len() != rows * cols * b {
        bail!(Dimension, "{} bits do not fill a {rows}×{cols} grid at {b} bits/symbol", bits.len());
    }
    let syms: Vec<C64> = bits.chunks_exact(b).map(|c| order.map_symbol(c)).collect();
    Ok(DelayDopplerGrid::new(CMatrix::from_column_slice(rows, cols, &syms)))
}

pub fn qam_demap(grid: &DelayDopplerGrid, order: QamOrder) -> Vec<u8> {
    let mut out = Vec::with_capacity(grid.symbols.len() * order.bits_per_symbol());
    for &s in grid.symbols.iter() {
        order.demap_symbol(s, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_qam_corner() {
        let q = QamOrder::new(4).unwrap();
        let s = q.map_symbol(&[0, 0]);
        let r = 1.0 / libm::sqrt(2.0);
        assert!((s - C64::new(r, r)).norm() < 1e-15);
    }

    #[test]
    fn unit_energy_and_gray_neighbours() {
        for order in [4, 16, 64] {
            let q = QamOrder::new(order).unwrap();
            let pts = q.constellation();
            let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((e - 1.0).abs() < 1e-12);
            let dmin = 2.0 * q.scale();
            for (a, pa) in pts.iter().enumerate() {
                for (b, pb) in pts.iter().enumerate() {
                    if (pa - pb).norm() < dmin * 1.0001 && a != b {
                        assert_eq!((a ^ b).count_ones(), 1, "order {order}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip() {
        let q = QamOrder::new(64).unwrap();
        let bits: Vec<u8> = (0..6 * 32).map(|i| ((i * 7 + i / 3) % 2) as u8).collect();
        let g = qam_map(&bits, q, 8, 4).unwrap();
        assert_eq!(qam_demap(&g, q), bits);
        assert!(QamOrder::new(8).is_err());
    }
}
