//! Bit-exact crossbar GEMV for SLC and 2-bit MLC arrays.
//!
//! A programmed matrix is stored input-major: physical row `i` carries input
//! `i`, and each output owns a group of adjacent columns holding the bit
//! slices of its 8-bit offset-encoded word. Inputs are streamed one two's
//! complement bit per cycle, LSB first; every occupied column is converted by
//! a saturating ADC and recombined digitally by shift-and-add.

mod ber;
mod nor;

pub use ber::{ber, calibrate_sigma, DEFAULT_ON_OFF_RATIO};
pub use nor::{nor_multiply, nor_netlist_gates, nor_multiply_signed, sfu_balance, NorCost};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::quant::{offset_correct, EncodedMatrix, QuantVector, WEIGHT_OFFSET};
use crate::rng;

/// Input precision streamed through the array, one bit per cycle.
pub const INPUT_BITS: u32 = 8;
/// Stored weight precision.
pub const WORD_BITS: u32 = 8;
/// Noise level used for unprotected weights unless configured otherwise.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CellMode {
    Slc,
    Mlc2,
}

impl CellMode {
    #[inline]
    pub fn bits_per_cell(self) -> u32 {
        match self {
            CellMode::Slc => 1,
            CellMode::Mlc2 => 2,
        }
    }

    /// Columns needed for one 8-bit word.
    #[inline]
    pub fn slices_per_word(self) -> usize {
        (WORD_BITS / self.bits_per_cell()) as usize
    }

    #[inline]
    pub fn max_level(self) -> u8 {
        ((1u32 << self.bits_per_cell()) - 1) as u8
    }

    #[inline]
    pub fn levels(self) -> usize {
        1 << self.bits_per_cell()
    }
}

/// `⌈log₂ rows⌉ + bits_per_cell − 1`.
pub fn adc_bits(rows: usize, bits_per_cell: u32) -> u32 {
    assert!(rows >= 1 && bits_per_cell >= 1, "adc_bits needs positive inputs");
    let log2 = usize::BITS - (rows - 1).leading_zeros();
    log2 + bits_per_cell - 1
}

/// Physical array size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl Default for TileGeometry {
    fn default() -> Self {
        Self { rows: 64, cols: 128 }
    }
}

impl TileGeometry {
    /// Words per physical row.
    #[inline]
    pub fn word_capacity(&self, mode: CellMode) -> usize {
        self.cols / mode.slices_per_word()
    }
}

/// Ideal saturating ADC with a conversion counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcModel {
    bits: u32,
    conversions: u64,
    saturations: u64,
}

impl AdcModel {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::invalid(alloc::format!("unsupported ADC resolution {bits}")));
        }
        Ok(Self {
            bits,
            conversions: 0,
            saturations: 0,
        })
    }

    /// Resolution the precision formula assigns to `mode` on `rows` rows.
    pub fn for_mode(mode: CellMode, rows: usize) -> Self {
        Self {
            bits: adc_bits(rows, mode.bits_per_cell()),
            conversions: 0,
            saturations: 0,
        }
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn saturation_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    #[inline]
    pub fn conversions(&self) -> u64 {
        self.conversions
    }

    #[inline]
    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn reset(&mut self) {
        self.conversions = 0;
        self.saturations = 0;
    }

    /// Converts one analog column sum.
    #[inline]
    pub fn convert(&mut self, s: f64) -> u32 {
        self.conversions += 1;
        let sat = self.saturation_code() as f64;
        if s > sat {
            self.saturations += 1;
            return sat as u32;
        }
        let code = math::round(s);
        if code <= 0.0 {
            0
        } else {
            code as u32
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NoisePlacement {
    /// One `η` per logical weight.
    #[default]
    PerWeight,
    /// Independent `η` per physical cell, offset included.
    PerCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    pub sigma: f64,
    pub placement: NoisePlacement,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, placement: NoisePlacement, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and non-negative"));
        }
        Ok(Self {
            sigma,
            placement,
            seed,
        })
    }

    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            placement: NoisePlacement::PerWeight,
            seed: 0,
        }
    }
}

/// One programmed array.
///
/// `cells` holds the ideal levels, `word_rows × word_cols·slices`, and
/// `noise` the multiplicative read factors: per word for
/// [`NoisePlacement::PerWeight`], per cell otherwise, all exactly 1 when the
/// tile is protected or noise-free.
///
/// With per-weight placement the factor stored for a word `c = w + 128` is
/// chosen so that the offset-corrected weight reads back as `w·(1+η)`; the
/// offset itself carries no noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarTile {
    pub mode: CellMode,
    pub geometry: TileGeometry,
    pub word_rows: usize,
    pub word_cols: usize,
    pub placement: NoisePlacement,
    cells: Vec<u8>,
    noise: Vec<f64>,
    // cell × factor, row-major over occupied cells
    effective: Vec<f64>,
}

impl CrossbarTile {
    #[inline]
    pub fn occupied_columns(&self) -> usize {
        self.word_cols * self.mode.slices_per_word()
    }

    /// Physical `(row, col)` of bit slice `slice` of word `(word_row, word_col)`.
    #[inline]
    pub fn cell_position(&self, word_row: usize, word_col: usize, slice: usize) -> (usize, usize) {
        (word_row, word_col * self.mode.slices_per_word() + slice)
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.occupied_columns() + col]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn noise_factors(&self) -> &[f64] {
        &self.noise
    }

    pub fn is_noise_free(&self) -> bool {
        self.noise.iter().all(|&f| f == 1.0)
    }

    /// The stored word, reassembled from its cells.
    pub fn word(&self, word_row: usize, word_col: usize) -> u8 {
        let bpc = self.mode.bits_per_cell();
        (0..self.mode.slices_per_word()).fold(0u32, |acc, s| {
            let (r, c) = self.cell_position(word_row, word_col, s);
            acc | (self.cell(r, c) as u32) << (s as u32 * bpc)
        }) as u8
    }
}

/// Splits an 8-bit word into `slices_per_word` cell levels, least significant
/// first.
pub fn word_to_cells(word: u8, mode: CellMode) -> Vec<u8> {
    let bpc = mode.bits_per_cell();
    let mask = mode.max_level();
    (0..mode.slices_per_word())
        .map(|s| (word >> (s as u32 * bpc)) & mask)
        .collect()
}

/// Programs one block of words (`≤ geometry.rows` rows, `≤` word capacity
/// columns) into a tile.
///
/// `stream` selects the random stream for this tile so that tiles can be
/// programmed in any order with identical results. `protected` tiles are
/// always noise-free.
pub fn program_tile(
    block: &EncodedMatrix,
    mode: CellMode,
    geometry: TileGeometry,
    noise: &NoiseSpec,
    protected: bool,
    stream: u64,
) -> Result<CrossbarTile> {
    let cap = geometry.word_capacity(mode);
    if block.rows > geometry.rows || block.cols > cap {
        return Err(Error::invalid(alloc::format!(
            "block {}x{} exceeds tile capacity {}x{} words",
            block.rows,
            block.cols,
            geometry.rows,
            cap
        )));
    }
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::invalid("noise sigma must be finite and non-negative"));
    }
    let slices = mode.slices_per_word();
    let width = block.cols * slices;
    let mut cells = vec![0u8; block.rows * width];
    for r in 0..block.rows {
        for c in 0..block.cols {
            for (s, level) in word_to_cells(block.get(r, c), mode).into_iter().enumerate() {
                cells[r * width + c * slices + s] = level;
            }
        }
    }

    let noisy = !protected && noise.sigma > 0.0;
    let mut g = rng::stream(noise.seed, stream);
    let noise_len = match noise.placement {
        NoisePlacement::PerWeight => block.rows * block.cols,
        NoisePlacement::PerCell => cells.len(),
    };
    let factors: Vec<f64> = if noisy {
        (0..noise_len)
            .map(|_| 1.0 + noise.sigma * rng::standard_normal(&mut g))
            .collect()
    } else {
        vec![1.0; noise_len]
    };

    let mut effective = vec![0.0; cells.len()];
    for r in 0..block.rows {
        for c in 0..block.cols {
            let word = block.get(r, c);
            for s in 0..slices {
                let idx = r * width + c * slices + s;
                let f = match noise.placement {
                    NoisePlacement::PerWeight => {
                        per_weight_cell_factor(word, factors[r * block.cols + c])
                    }
                    NoisePlacement::PerCell => factors[idx],
                };
                effective[idx] = cells[idx] as f64 * f;
            }
        }
    }

    Ok(CrossbarTile {
        mode,
        geometry,
        word_rows: block.rows,
        word_cols: block.cols,
        placement: noise.placement,
        cells,
        noise: factors,
        effective,
    })
}

/// Conductance scale that makes word `w + 128` read back as `w·(1+η)` after
/// offset correction. Word 0 stores no charge and cannot be perturbed.
#[inline]
fn per_weight_cell_factor(word: u8, factor: f64) -> f64 {
    if factor == 1.0 || word == 0 {
        return 1.0;
    }
    let w = word as f64 - WEIGHT_OFFSET as f64;
    (WEIGHT_OFFSET as f64 + w * factor) / word as f64
}

/// A matrix tiled over a grid of arrays, ready for GEMV.
///
/// `in_dim × out_dim` words, input-major. To apply a logical `M×N` weight
/// `W` to an `N`-vector, program `Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgrammedMatrix {
    pub mode: CellMode,
    pub geometry: TileGeometry,
    pub in_dim: usize,
    pub out_dim: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
    /// Row-major over `(row_tile, col_tile)`.
    pub tiles: Vec<CrossbarTile>,
}

impl ProgrammedMatrix {
    /// Tiles and programs `enc`. Tile `(rt, ct)` uses random stream
    /// `stream_base + rt·col_tiles + ct`.
    pub fn program(
        enc: &EncodedMatrix,
        mode: CellMode,
        geometry: TileGeometry,
        noise: &NoiseSpec,
        protected: bool,
        stream_base: u64,
    ) -> Result<Self> {
        let cap = geometry.word_capacity(mode);
        if geometry.rows == 0 || cap == 0 {
            return Err(Error::invalid("tile geometry cannot hold a single word"));
        }
        let row_tiles = enc.rows.div_ceil(geometry.rows);
        let col_tiles = enc.cols.div_ceil(cap);
        let mut tiles = Vec::with_capacity(row_tiles * col_tiles);
        for rt in 0..row_tiles {
            let r0 = rt * geometry.rows;
            let r1 = (r0 + geometry.rows).min(enc.rows);
            for ct in 0..col_tiles {
                let c0 = ct * cap;
                let c1 = (c0 + cap).min(enc.cols);
                let mut words = Vec::with_capacity((r1 - r0) * (c1 - c0));
                for r in r0..r1 {
                    words.extend_from_slice(&enc.words[r * enc.cols + c0..r * enc.cols + c1]);
                }
                let block = EncodedMatrix {
                    rows: r1 - r0,
                    cols: c1 - c0,
                    words,
                };
                let stream = stream_base + (rt * col_tiles + ct) as u64;
                tiles.push(program_tile(&block, mode, geometry, noise, protected, stream)?);
            }
        }
        Ok(Self {
            mode,
            geometry,
            in_dim: enc.rows,
            out_dim: enc.cols,
            row_tiles,
            col_tiles,
            tiles,
        })
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    /// Columns that are converted on every input-bit cycle, summed over tiles.
    pub fn active_columns(&self) -> usize {
        self.tiles.iter().map(|t| t.occupied_columns()).sum()
    }

    /// Conversions one GEMV performs.
    pub fn conversions_per_gemv(&self) -> u64 {
        self.active_columns() as u64 * INPUT_BITS as u64
    }

    pub fn adc(&self) -> AdcModel {
        AdcModel::for_mode(self.mode, self.geometry.rows)
    }
}

/// Counters from one or more GEMVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaturationReport {
    pub conversions: u64,
    pub saturated: u64,
}

impl SaturationReport {
    #[inline]
    pub fn is_clean(&self) -> bool {
        self.saturated == 0
    }

    pub fn merge(&mut self, other: SaturationReport) {
        self.conversions += other.conversions;
        self.saturated += other.saturated;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GemvOutput {
    pub values: Vec<i64>,
    pub report: SaturationReport,
}

/// Bit-serial GEMV of `x` through `m`, including the offset correction.
///
/// With zero noise and a clean report the result equals the exact signed
/// integer product.
pub fn bitserial_gemv(m: &ProgrammedMatrix, x: &QuantVector, adc: &mut AdcModel) -> Result<GemvOutput> {
    if x.len() != m.in_dim {
        return Err(Error::invalid(alloc::format!(
            "input length {} does not match programmed rows {}",
            x.len(),
            m.in_dim
        )));
    }
    if m.tiles.len() != m.row_tiles * m.col_tiles {
        return Err(Error::invalid("programmed matrix tile grid is inconsistent"));
    }
    let before = (adc.conversions(), adc.saturations());
    let slices = m.mode.slices_per_word();
    let bpc = m.mode.bits_per_cell();
    let cap = m.geometry.word_capacity(m.mode);
    let mut acc = vec![0i64; m.out_dim];
    let mut sums = Vec::new();

    for rt in 0..m.row_tiles {
        let r0 = rt * m.geometry.rows;
        for ct in 0..m.col_tiles {
            let tile = &m.tiles[rt * m.col_tiles + ct];
            let width = tile.occupied_columns();
            if tile.mode != m.mode || r0 + tile.word_rows > m.in_dim {
                return Err(Error::invalid("tile geometry does not match its matrix"));
            }
            let inputs = &x.data[r0..r0 + tile.word_rows];
            for t in 0..INPUT_BITS {
                sums.clear();
                sums.resize(width, 0.0);
                for (r, &a) in inputs.iter().enumerate() {
                    if (a as u8 >> t) & 1 == 1 {
                        let row = &tile.effective[r * width..(r + 1) * width];
                        for (s, &e) in sums.iter_mut().zip(row) {
                            *s += e;
                        }
                    }
                }
                let cycle_weight: i64 = if t == INPUT_BITS - 1 { -(1i64 << t) } else { 1i64 << t };
                for (col, &s) in sums.iter().enumerate() {
                    let code = adc.convert(s) as i64;
                    let word = col / slices;
                    let slice = (col % slices) as u32;
                    acc[ct * cap + word] += (code << (slice * bpc)) * cycle_weight;
                }
            }
        }
    }

    let input_sum: i64 = x.data.iter().map(|&a| a as i64).sum();
    for v in acc.iter_mut() {
        *v = offset_correct(*v, input_sum);
    }
    Ok(GemvOutput {
        values: acc,
        report: SaturationReport {
            conversions: adc.conversions() - before.0,
            saturated: adc.saturations() - before.1,
        },
    })
}

/// `w ⊙ (1 + η)`, `η ~ N(0, σ²)` drawn row-major from stream `(seed, 0)`.
pub fn apply_weight_noise(w: &DenseMatrix, sigma: f64, seed: u64) -> Result<DenseMatrix> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("noise sigma must be finite and non-negative"));
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let mut g = rng::stream(seed, 0);
    Ok(DenseMatrix::from_fn(w.rows(), w.cols(), |r, c| {
        w[(r, c)] * (1.0 + sigma * rng::standard_normal(&mut g))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{offset_encode, QuantMatrix};

    fn program_logical(w: &QuantMatrix, mode: CellMode, noise: &NoiseSpec) -> ProgrammedMatrix {
        let enc = offset_encode(&w.transpose());
        ProgrammedMatrix::program(&enc, mode, TileGeometry::default(), noise, false, 0).unwrap()
    }

    #[test]
    fn adc_precision_formula() {
        assert_eq!(adc_bits(64, 1), 6);
        assert_eq!(adc_bits(64, 2), 7);
        assert_eq!(adc_bits(2, 1), 1);
        assert_eq!(adc_bits(65, 1), 7);
        assert_eq!(adc_bits(1, 1), 0);
    }

    #[test]
    fn word_slicing() {
        assert_eq!(word_to_cells(0b1011_0001, CellMode::Slc), vec![1, 0, 0, 0, 1, 1, 0, 1]);
        assert_eq!(word_to_cells(0b1011_0001, CellMode::Mlc2), vec![1, 0, 3, 2]);
    }

    #[test]
    fn programmed_tile_layout() {
        let enc = EncodedMatrix::from_words(1, 2, &[0b1011_0001, 255]).unwrap();
        let t = program_tile(&enc, CellMode::Mlc2, TileGeometry::default(), &NoiseSpec::none(), false, 0).unwrap();
        assert_eq!(t.occupied_columns(), 8);
        assert_eq!(t.cell_position(0, 1, 2), (0, 6));
        assert_eq!(t.word(0, 0), 0b1011_0001);
        assert_eq!(t.word(0, 1), 255);
        assert!(t.is_noise_free());
        assert!(EncodedMatrix::from_words(1, 1, &[256]).is_err());
        assert!(EncodedMatrix::from_words(1, 1, &[-1]).is_err());
    }

    #[test]
    fn protected_and_zero_sigma_tiles_are_noise_free() {
        let enc = EncodedMatrix::from_words(2, 2, &[1, 2, 3, 4]).unwrap();
        let noisy = NoiseSpec::new(0.1, NoisePlacement::PerWeight, 3).unwrap();
        let t = program_tile(&enc, CellMode::Mlc2, TileGeometry::default(), &noisy, true, 0).unwrap();
        assert!(t.is_noise_free());
        let zero = NoiseSpec::new(0.0, NoisePlacement::PerCell, 3).unwrap();
        let t = program_tile(&enc, CellMode::Mlc2, TileGeometry::default(), &zero, false, 0).unwrap();
        assert!(t.is_noise_free());
        let t = program_tile(&enc, CellMode::Mlc2, TileGeometry::default(), &noisy, false, 0).unwrap();
        assert!(!t.is_noise_free());
    }

    #[test]
    fn small_gemv_example() {
        let w = QuantMatrix::new(2, 2, vec![1, 2, 3, 4], 1.0).unwrap();
        let x = QuantVector { data: vec![1, 1], scale: 1.0 };
        for mode in [CellMode::Slc, CellMode::Mlc2] {
            let p = program_logical(&w.transpose(), mode, &NoiseSpec::none());
            let mut adc = p.adc();
            let out = bitserial_gemv(&p, &x, &mut adc).unwrap();
            assert_eq!(out.values, vec![4, 6]);
            assert!(out.report.is_clean());
        }
    }

    #[test]
    fn exhaustive_2x2_small_values() {
        let vals = [-2i8, -1, 0, 1, 2];
        for &a in &vals {
            for &b in &vals {
                for &c in &vals {
                    for &d in &vals {
                        let w = QuantMatrix::new(2, 2, vec![a, b, c, d], 1.0).unwrap();
                        for &x0 in &vals {
                            for &x1 in &vals {
                                let x = QuantVector { data: vec![x0, x1], scale: 1.0 };
                                let want = w.gemv_exact(&x.data).unwrap();
                                for mode in [CellMode::Slc, CellMode::Mlc2] {
                                    let p = program_logical(&w, mode, &NoiseSpec::none());
                                    let out = bitserial_gemv(&p, &x, &mut p.adc()).unwrap();
                                    assert_eq!(out.values, want);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_output_even_with_noise() {
        let w = QuantMatrix::new(3, 70, (0..210).map(|i| (i % 255) as i8).collect(), 1.0).unwrap();
        let noise = NoiseSpec::new(0.2, NoisePlacement::PerCell, 1).unwrap();
        for mode in [CellMode::Slc, CellMode::Mlc2] {
            let p = program_logical(&w, mode, &noise);
            let x = QuantVector { data: vec![0; 70], scale: 1.0 };
            let out = bitserial_gemv(&p, &x, &mut p.adc()).unwrap();
            assert!(out.values.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn saturation_is_reported() {
        // 64 rows of word 255 driven by all-ones input bits.
        let w = QuantMatrix::new(1, 64, vec![127; 64], 1.0).unwrap();
        let p = program_logical(&w, CellMode::Slc, &NoiseSpec::none());
        let x = QuantVector { data: vec![-1; 64], scale: 1.0 };
        let out = bitserial_gemv(&p, &x, &mut p.adc()).unwrap();
        assert!(!out.report.is_clean());
        assert_eq!(out.report.conversions, 64);
    }

    #[test]
    fn mlc_halves_conversions() {
        let w = QuantMatrix::new(40, 100, vec![3; 4000], 1.0).unwrap();
        let slc = program_logical(&w, CellMode::Slc, &NoiseSpec::none());
        let mlc = program_logical(&w, CellMode::Mlc2, &NoiseSpec::none());
        assert_eq!(slc.conversions_per_gemv(), 2 * mlc.conversions_per_gemv());
    }

    #[test]
    fn per_weight_noise_scales_the_signed_weight() {
        // A single weight driven by input 1: the result is w·(1+η) up to ADC rounding.
        let w = QuantMatrix::new(1, 1, vec![100], 1.0).unwrap();
        let noise = NoiseSpec::new(0.05, NoisePlacement::PerWeight, 11).unwrap();
        let p = program_logical(&w, CellMode::Slc, &noise);
        let factor = p.tiles[0].noise_factors()[0];
        let out = bitserial_gemv(&p, &QuantVector { data: vec![1], scale: 1.0 }, &mut p.adc()).unwrap();
        assert!((out.values[0] as f64 - 100.0 * factor).abs() <= 4.0, "{} vs {}", out.values[0], 100.0 * factor);
    }

    #[test]
    fn weight_noise_determinism() {
        let w = DenseMatrix::from_fn(4, 4, |r, c| (r + c) as f64);
        assert_eq!(apply_weight_noise(&w, 0.0, 1).unwrap(), w);
        assert_eq!(apply_weight_noise(&w, 0.1, 5).unwrap(), apply_weight_noise(&w, 0.1, 5).unwrap());
        assert_ne!(apply_weight_noise(&w, 0.1, 5).unwrap(), apply_weight_noise(&w, 0.1, 6).unwrap());
    }
}
