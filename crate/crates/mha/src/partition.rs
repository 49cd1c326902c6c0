//! Nested dyadic partitions of the observation cube, the quantizer, context
//! strings over sliding windows, and the incremental context index.
//!
//! At level `h` each axis of `[-D, D]` is split into `2^h` equal half-open
//! cells, the last cell closed, for `2^(h*d)` cells in total. Cell ids are
//! the lexicographic (row-major, first axis most significant) integer of the
//! per-axis indices. Every cell of level `h+1` is contained in exactly one
//! cell of level `h`, and the maximum cell diameter `2*D*sqrt(d)/2^h`
//! vanishes as `h` grows.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::ProblemGeometry;

/// Maximum usable total resolution: `h * d` axis bits must fit in a `u64` id.
pub const MAX_LEVEL_BITS: u32 = 62;

/// The nested family of dyadic grids over `[-D, D]^d`.
#[derive(Debug, Clone)]
pub struct PartitionFamily {
    obs_dim: usize,
    half_width: f64,
}

impl PartitionFamily {
    pub fn new(geometry: &ProblemGeometry) -> Self {
        PartitionFamily {
            obs_dim: geometry.obs_dim,
            half_width: geometry.obs_half_width,
        }
    }

    /// Number of cells per axis at level `h`.
    pub fn cells_per_axis(&self, h: u32) -> u64 {
        1u64 << h
    }

    /// Total number of cells `m_h = 2^(h*d)` at level `h`.
    pub fn cell_count(&self, h: u32) -> u64 {
        1u64 << (h * self.obs_dim as u32)
    }

    /// Cell id of `x` at level `h`. Boundary points belong to the upper cell
    /// except at `+D`, which belongs to the last cell.
    pub fn quantize(&self, x: &[f64], h: u32) -> Result<u64> {
        if h == 0 || h * self.obs_dim as u32 > MAX_LEVEL_BITS {
            return Err(Error::Config(format!(
                "partition level {h} out of range for dimension {}",
                self.obs_dim
            )));
        }
        if x.len() != self.obs_dim {
            return Err(Error::OutOfRange(format!(
                "point of dimension {} in a {}-dimensional cube",
                x.len(),
                self.obs_dim
            )));
        }
        let d2 = 2.0 * self.half_width;
        let cells = self.cells_per_axis(h);
        let mut id: u64 = 0;
        for &coord in x {
            if coord < -self.half_width || coord > self.half_width {
                return Err(Error::OutOfRange(format!(
                    "coordinate {coord} outside [-{}, {}]",
                    self.half_width, self.half_width
                )));
            }
            let frac = (coord + self.half_width) / d2;
            let idx = ((frac * cells as f64).floor() as u64).min(cells - 1);
            id = id * cells + idx;
        }
        Ok(id)
    }

    /// Cell id at level `h` of the parent cell containing cell `id` of level
    /// `h + 1`.
    pub fn parent_id(&self, id: u64, h_child: u32) -> u64 {
        let child_cells = self.cells_per_axis(h_child);
        let parent_cells = child_cells >> 1;
        let mut rest = id;
        let mut axis_indices = vec![0u64; self.obs_dim];
        for i in (0..self.obs_dim).rev() {
            axis_indices[i] = rest % child_cells;
            rest /= child_cells;
        }
        let mut parent = 0u64;
        for idx in axis_indices {
            parent = parent * parent_cells + idx / 2;
        }
        parent
    }
}

/// A `k`-long quantized window: the sequence of cell ids of the last `k`
/// observations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContextString {
    ids: Vec<u64>,
}

impl ContextString {
    pub fn new(ids: Vec<u64>) -> Self {
        ContextString { ids }
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Canonical little-endian byte encoding, stable across platforms.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.ids.len() * 8);
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }
}

/// Quantizes the window `x_{n-k} .. x_{n-1}` at level `h`. Returns `None`
/// when fewer than `k` observations precede round `n`.
pub fn quantize_window(
    family: &PartitionFamily,
    history: &[Vec<f64>],
    n: usize,
    k: usize,
    h: u32,
) -> Result<Option<ContextString>> {
    debug_assert!(history.len() >= n - 1);
    if n < k + 1 {
        return Ok(None);
    }
    let mut ids = Vec::with_capacity(k);
    for x in &history[n - 1 - k..n - 1] {
        ids.push(family.quantize(x, h)?);
    }
    Ok(Some(ContextString::new(ids)))
}

/// Direct-scan reference for the matched set
/// `{ i | k < i < n, Q_h(x_{i-k} .. x_{i-1}) = w }` with `n = len + 1`.
pub fn match_set_scan(
    family: &PartitionFamily,
    history: &[Vec<f64>],
    n: usize,
    k: usize,
    h: u32,
    w: &ContextString,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let upper = n.min(history.len() + 1);
    for i in k + 1..upper {
        let mut matches = true;
        for (j, x) in history[i - 1 - k..i - 1].iter().enumerate() {
            if family.quantize(x, h)? != w.ids()[j] {
                matches = false;
                break;
            }
        }
        if matches {
            out.push(i);
        }
    }
    Ok(out)
}

/// Incremental index from context strings to matched round indices for one
/// `(k, h)` pair. Appended once per round by the round loop; observationally
/// identical to [`match_set_scan`].
#[derive(Debug, Clone)]
pub struct ContextIndex {
    k: usize,
    h: u32,
    map: HashMap<ContextString, Vec<usize>>,
    rounds_seen: usize,
}

impl ContextIndex {
    pub fn new(k: usize, h: u32) -> Self {
        ContextIndex {
            k,
            h,
            map: HashMap::new(),
            rounds_seen: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    /// Registers rounds up to `history.len()`; call after each new
    /// observation is appended.
    pub fn sync(&mut self, family: &PartitionFamily, history: &[Vec<f64>]) -> Result<()> {
        while self.rounds_seen < history.len() {
            let i = self.rounds_seen + 1; // 1-based round of observation x_i
            if i > self.k {
                let ids: Result<Vec<u64>> = history[i - 1 - self.k..i - 1]
                    .iter()
                    .map(|x| family.quantize(x, self.h))
                    .collect();
                self.map.entry(ContextString::new(ids?)).or_default().push(i);
            }
            self.rounds_seen = i;
        }
        Ok(())
    }

    /// Matched indices for context `w` among rounds `k < i < n`.
    pub fn match_set(&self, w: &ContextString, n: usize) -> Vec<usize> {
        match self.map.get(w) {
            Some(indices) => indices.iter().copied().filter(|&i| i < n).collect(),
            None => Vec::new(),
        }
    }
}
