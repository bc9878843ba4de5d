//! Count sketch: a linear, mergeable `v x w` table that compresses a dense
//! vector and decodes each coordinate as the median of its signed cells.
//!
//! With `block_size > 1` the tensor trick is applied: the vector is viewed as
//! a matrix and a whole row (or column) of it shares one hash evaluation, so
//! each hashed entry occupies `block_size` adjacent table cells.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::numerics::HashFamily;

/// Storage precision of a sketch table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Full,
    Half,
}

impl Precision {
    /// Nominal bytes per stored value (fp32 / fp16).
    pub fn bytes(self) -> usize {
        match self {
            Precision::Full => 4,
            Precision::Half => 2,
        }
    }
}

/// Which coordinates share a hash when `block_size > 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// Consecutive runs of `block_size` coordinates (rows of the matrix view).
    #[default]
    Row,
    /// Coordinates congruent modulo `ceil(d / block_size)` (columns).
    Column,
}

#[derive(Clone, Debug, PartialEq)]
enum Table {
    Full(Vec<f64>),
    Half(Vec<f16>),
}

impl Table {
    fn zeros(len: usize, precision: Precision) -> Self {
        match precision {
            Precision::Full => Table::Full(vec![0.0; len]),
            Precision::Half => Table::Half(vec![f16::ZERO; len]),
        }
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            Table::Full(t) => t[i],
            Table::Half(t) => t[i].to_f64(),
        }
    }

    /// Round-to-nearest-even on every half-precision write.
    #[inline]
    fn set(&mut self, i: usize, v: f64) {
        match self {
            Table::Full(t) => t[i] = v,
            Table::Half(t) => t[i] = f16::from_f64(v),
        }
    }

    #[inline]
    fn add(&mut self, i: usize, v: f64) {
        match self {
            Table::Full(t) => t[i] += v,
            Table::Half(t) => t[i] = f16::from_f64(t[i].to_f64() + v),
        }
    }

    fn len(&self) -> usize {
        match self {
            Table::Full(t) => t.len(),
            Table::Half(t) => t.len(),
        }
    }
}

/// Construction parameters for a sketch; `width` is the total number of
/// table columns and must be a multiple of `block_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchShape {
    pub rows: usize,
    pub width: usize,
    pub block_size: usize,
    pub layout: BlockLayout,
    pub precision: Precision,
}

impl SketchShape {
    pub fn new(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            block_size: 1,
            layout: BlockLayout::Row,
            precision: Precision::Full,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_blocks(mut self, block_size: usize, layout: BlockLayout) -> Self {
        self.block_size = block_size;
        self.layout = layout;
        self
    }

    pub fn buckets(&self) -> usize {
        self.width / self.block_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.width == 0 {
            return Err(contract("sketch needs rows >= 1 and width >= 1"));
        }
        if self.block_size == 0 || self.width % self.block_size != 0 {
            return Err(contract(format!(
                "sketch width {} is not a multiple of block size {}",
                self.width, self.block_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountSketch {
    family: HashFamily,
    dim: usize,
    block_size: usize,
    layout: BlockLayout,
    precision: Precision,
    table: Table,
}

impl CountSketch {
    /// Empty sketch for vectors of length `dim` under `family`, whose width
    /// is the bucket count (`shape.width / shape.block_size`).
    pub fn zeros(family: HashFamily, dim: usize, shape: &SketchShape) -> Result<Self> {
        shape.validate()?;
        if family.rows() != shape.rows || family.width() != shape.buckets() {
            return Err(contract(format!(
                "hash family is {}x{}, sketch expects {}x{} buckets",
                family.rows(),
                family.width(),
                shape.rows,
                shape.buckets()
            )));
        }
        let entries = dim.div_ceil(shape.block_size);
        if let Some(limit) = family.coord_limit() {
            if entries > limit {
                return Err(contract(format!(
                    "hash family covers {limit} entries, sketch needs {entries}"
                )));
            }
        }
        Ok(Self {
            family,
            dim,
            block_size: shape.block_size,
            layout: shape.layout,
            precision: shape.precision,
            table: Table::zeros(shape.rows * shape.width, shape.precision),
        })
    }

    /// Keyed-hash sketch with family seed `seed`.
    pub fn keyed(seed: u64, dim: usize, shape: &SketchShape) -> Result<Self> {
        shape.validate()?;
        Self::zeros(HashFamily::new(seed, shape.rows, shape.buckets()), dim, shape)
    }

    /// Compress `vec`: one insert per nonzero coordinate into a fresh table.
    pub fn compress(vec: &[f64], family: HashFamily, shape: &SketchShape) -> Result<Self> {
        let mut s = Self::zeros(family, vec.len(), shape)?;
        s.insert_all(vec)?;
        Ok(s)
    }

    /// Same family and shape, zero table.
    pub fn empty_like(&self) -> Self {
        Self {
            table: Table::zeros(self.table.len(), self.precision),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            family: self.family.clone(),
            dim: self.dim,
            block_size: self.block_size,
            layout: self.layout,
            precision: self.precision,
            table: Table::Full(Vec::new()),
        }
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.family.rows()
    }

    /// Total table columns.
    pub fn width(&self) -> usize {
        self.family.width() * self.block_size
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn shape(&self) -> SketchShape {
        SketchShape {
            rows: self.rows(),
            width: self.width(),
            block_size: self.block_size,
            layout: self.layout,
            precision: self.precision,
        }
    }

    /// Row-major table values.
    pub fn table(&self) -> Vec<f64> {
        (0..self.table.len()).map(|i| self.table.get(i)).collect()
    }

    /// Stored bytes: `v * w * (4 | 2)`; hash seeds are a constant and excluded.
    pub fn bytes(&self) -> usize {
        self.rows() * self.width() * self.precision.bytes()
    }

    /// (hashed entry, offset within the entry's block) for `coord`.
    #[inline]
    fn locate(&self, coord: usize) -> (usize, usize) {
        if self.block_size == 1 {
            return (coord, 0);
        }
        match self.layout {
            BlockLayout::Row => (coord / self.block_size, coord % self.block_size),
            BlockLayout::Column => {
                let stride = self.dim.div_ceil(self.block_size);
                (coord % stride, coord / stride)
            }
        }
    }

    #[inline]
    fn cell(&self, row: usize, entry: usize, offset: usize) -> usize {
        let bucket = self.family.hash_index(row, entry);
        row * self.width() + bucket * self.block_size + offset
    }

    fn check_coord(&self, coord: usize) -> Result<()> {
        if coord >= self.dim {
            Err(Error::OutOfRange {
                index: coord,
                len: self.dim,
            })
        } else {
            Ok(())
        }
    }

    /// Adds `s_i(coord) * value` to cell `(i, h_i(coord))` of every row.
    pub fn insert(&mut self, coord: usize, value: f64) -> Result<()> {
        self.check_coord(coord)?;
        self.insert_unchecked(coord, value);
        Ok(())
    }

    #[inline]
    fn insert_unchecked(&mut self, coord: usize, value: f64) {
        let (entry, offset) = self.locate(coord);
        for row in 0..self.rows() {
            let sign = self.family.hash_sign(row, entry);
            let cell = self.cell(row, entry, offset);
            self.table.add(cell, sign * value);
        }
    }

    /// Inserts every nonzero coordinate of `vec`.
    pub fn insert_all(&mut self, vec: &[f64]) -> Result<()> {
        if vec.len() != self.dim {
            return Err(contract(format!(
                "vector length {} does not match sketch dim {}",
                vec.len(),
                self.dim
            )));
        }
        for (coord, &v) in vec.iter().enumerate() {
            if v != 0.0 {
                self.insert_unchecked(coord, v);
            }
        }
        Ok(())
    }

    /// Median over rows of `s_i(coord) * S[i, h_i(coord)]`; even row counts
    /// average the two central values.
    pub fn decode(&self, coord: usize) -> Result<f64> {
        self.check_coord(coord)?;
        let mut buf = Vec::with_capacity(self.rows());
        Ok(self.decode_with(coord, &mut buf))
    }

    fn decode_with(&self, coord: usize, buf: &mut Vec<f64>) -> f64 {
        let (entry, offset) = self.locate(coord);
        let rows = self.rows();
        if rows == 1 {
            return self.family.hash_sign(0, entry) * self.table.get(self.cell(0, entry, offset));
        }
        buf.clear();
        for row in 0..rows {
            buf.push(self.family.hash_sign(row, entry) * self.table.get(self.cell(row, entry, offset)));
        }
        median_in_place(buf)
    }

    pub fn decode_all(&self) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.rows());
        (0..self.dim).map(|c| self.decode_with(c, &mut buf)).collect()
    }

    fn check_compatible(&self, other: &CountSketch) -> Result<()> {
        if self.dim != other.dim
            || self.precision != other.precision
            || self.block_size != other.block_size
            || self.layout != other.layout
            || self.family != other.family
        {
            return Err(contract("sketches differ in family, dim, precision or layout"));
        }
        Ok(())
    }

    /// `table <- alpha * table + other.table`.
    pub fn axpy(&mut self, other: &CountSketch, alpha: f64) -> Result<()> {
        self.check_compatible(other)?;
        for i in 0..self.table.len() {
            let v = alpha * self.table.get(i) + other.table.get(i);
            self.table.set(i, v);
        }
        Ok(())
    }

    /// `table <- table + other.table`.
    pub fn merge(&mut self, other: &CountSketch) -> Result<()> {
        self.check_compatible(other)?;
        for i in 0..self.table.len() {
            let v = self.table.get(i) + other.table.get(i);
            self.table.set(i, v);
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for i in 0..self.table.len() {
            let v = alpha * self.table.get(i);
            self.table.set(i, v);
        }
    }

    /// Elementwise mean, accumulated in list order.
    pub fn merge_mean(sketches: &[CountSketch]) -> Result<CountSketch> {
        let first = sketches
            .first()
            .ok_or_else(|| contract("merge_mean of an empty list"))?;
        for s in &sketches[1..] {
            first.check_compatible(s)?;
        }
        let n = sketches.len() as f64;
        let mut out = first.empty_like();
        for i in 0..first.table.len() {
            let mut acc = 0.0;
            for s in sketches {
                acc += s.table.get(i);
            }
            out.table.set(i, acc / n);
        }
        Ok(out)
    }

    /// Header words: `v, w, dim, tag, seed` (little-endian u64), then the
    /// row-major table as f32 (full) or f16 (half).
    ///
    /// `tag` packs precision (bits 0..8), hash kind (8..16), block layout
    /// (16..24) and block size (32..64).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.family.is_explicit() {
            return Err(Error::Unsupported(
                "sketches with explicit hash tables cannot be serialized".into(),
            ));
        }
        let mut out = Vec::with_capacity(40 + self.bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.width() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&self.tag().to_le_bytes());
        out.extend_from_slice(&self.family.seed().to_le_bytes());
        match &self.table {
            Table::Full(t) => t
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Table::Half(t) => t.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
        Ok(out)
    }

    fn tag(&self) -> u64 {
        let precision = match self.precision {
            Precision::Full => 0u64,
            Precision::Half => 1,
        };
        let kind = u64::from(self.family.is_injective());
        let layout = match self.layout {
            BlockLayout::Row => 0u64,
            BlockLayout::Column => 1,
        };
        precision | (kind << 8) | (layout << 16) | ((self.block_size as u64) << 32)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 40 {
            return Err(Error::Decode("sketch header truncated".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        let (rows, width, dim, tag, seed) = (
            word(0) as usize,
            word(1) as usize,
            word(2) as usize,
            word(3),
            word(4),
        );
        let precision = match tag & 0xff {
            0 => Precision::Full,
            1 => Precision::Half,
            t => return Err(Error::Decode(format!("unknown precision tag {t}"))),
        };
        let injective = match (tag >> 8) & 0xff {
            0 => false,
            1 => true,
            t => return Err(Error::Decode(format!("unknown hash kind {t}"))),
        };
        let layout = match (tag >> 16) & 0xff {
            0 => BlockLayout::Row,
            1 => BlockLayout::Column,
            t => return Err(Error::Decode(format!("unknown block layout {t}"))),
        };
        let block_size = (tag >> 32) as usize;
        let shape = SketchShape {
            rows,
            width,
            block_size,
            layout,
            precision,
        };
        shape.validate().map_err(|e| Error::Decode(e.to_string()))?;
        let cells = rows
            .checked_mul(width)
            .ok_or_else(|| Error::Decode("table size overflows".into()))?;
        let body = &bytes[40..];
        if body.len() != cells * precision.bytes() {
            return Err(Error::Decode(format!(
                "table has {} bytes, header implies {}",
                body.len(),
                cells * precision.bytes()
            )));
        }
        let family = if injective {
            HashFamily::injective(seed, rows, shape.buckets())
        } else {
            HashFamily::new(seed, rows, shape.buckets())
        };
        let mut s = Self::zeros(family, dim, &shape).map_err(|e| Error::Decode(e.to_string()))?;
        match &mut s.table {
            Table::Full(t) => {
                for (dst, chunk) in t.iter_mut().zip(body.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
                }
            }
            Table::Half(t) => {
                for (dst, chunk) in t.iter_mut().zip(body.chunks_exact(2)) {
                    *dst = f16::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        Ok(s)
    }
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}
