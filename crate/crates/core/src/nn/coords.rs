//! Coordinate sets and kernel maps.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `(batch, x, y, z)` lattice coordinate.
pub type Coord = [i32; 4];

/// The occupied coordinates of a sparse tensor, with a hashed row index.
/// Spatial coordinates are in input-lattice units and divisible by `stride`.
#[derive(Clone, Debug)]
pub struct CoordSet {
    coords: Vec<Coord>,
    stride: i32,
    index: HashMap<Coord, u32>,
}

impl PartialEq for CoordSet {
    fn eq(&self, other: &Self) -> bool {
        self.stride == other.stride && self.coords == other.coords
    }
}

impl CoordSet {
    pub fn new(coords: Vec<Coord>, stride: i32) -> Result<Self> {
        if stride < 1 {
            return Err(Error::invalid(format!("stride {stride} must be positive")));
        }
        if coords.is_empty() {
            return Err(Error::Empty("sparse tensor without coordinates".into()));
        }
        if coords.len() > u32::MAX as usize {
            return Err(Error::invalid("too many coordinates"));
        }
        let mut index = HashMap::with_capacity(coords.len());
        for (row, c) in coords.iter().enumerate() {
            if c[0] < 0 {
                return Err(Error::invalid(format!("negative batch index in {c:?}")));
            }
            if c[1..].iter().any(|v| v.rem_euclid(stride) != 0) {
                return Err(Error::invalid(format!(
                    "coordinate {c:?} not divisible by stride {stride}"
                )));
            }
            if index.insert(*c, row as u32).is_some() {
                return Err(Error::invalid(format!("duplicate coordinate {c:?}")));
            }
        }
        Ok(Self {
            coords,
            stride,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn stride(&self) -> i32 {
        self.stride
    }

    pub fn row_of(&self, c: &Coord) -> Option<usize> {
        self.index.get(c).map(|&r| r as usize)
    }

    /// Batch element of each row.
    pub fn batch_indices(&self) -> Vec<usize> {
        self.coords.iter().map(|c| c[0] as usize).collect()
    }

    /// `1 + max batch index`.
    pub fn batch_size(&self) -> usize {
        self.coords.iter().map(|c| c[0] as usize + 1).max().unwrap_or(0)
    }

    /// Coordinates at twice the stride: `floor(c / 2s) * 2s` per spatial
    /// axis, deduplicated, sorted lexicographically.
    pub fn downsampled(&self) -> Self {
        let s2 = self.stride * 2;
        let mut out: Vec<Coord> = self
            .coords
            .iter()
            .map(|c| [c[0], c[1].div_euclid(s2) * s2, c[2].div_euclid(s2) * s2, c[3].div_euclid(s2) * s2])
            .collect();
        out.sort_unstable();
        out.dedup();
        Self::new(out, s2).expect("downsampled coordinates are valid")
    }
}

/// Kernel offsets in lexicographic `(dz, dy, dx)` order, stored as `[dx, dy, dz]`.
pub fn kernel_offsets(kernel_size: usize) -> Result<Vec<[i32; 3]>> {
    if kernel_size.is_multiple_of(2) || !(kernel_size == 1 || kernel_size == 3) {
        return Err(Error::invalid(format!(
            "kernel size {kernel_size} unsupported (use 1 or 3)"
        )));
    }
    let r = (kernel_size / 2) as i32;
    let mut offsets = Vec::with_capacity(kernel_size.pow(3));
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                offsets.push([dx, dy, dz]);
            }
        }
    }
    Ok(offsets)
}

/// Per kernel offset, the `(input_row, output_row)` pairs of a sparse
/// convolution, sorted by output row.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMap {
    pub offsets: Vec<[i32; 3]>,
    pub pairs: Vec<Vec<(u32, u32)>>,
    pub n_in: usize,
    pub n_out: usize,
}

impl KernelMap {
    pub fn num_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    /// The same pairs with input and output roles swapped, re-sorted by
    /// (new) output row. Drives transposed convolutions.
    pub fn transposed(&self) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                let mut t: Vec<(u32, u32)> = p.iter().map(|&(i, o)| (o, i)).collect();
                t.sort_unstable_by_key(|&(i, o)| (o, i));
                t
            })
            .collect();
        Self {
            offsets: self.offsets.clone(),
            pairs,
            n_in: self.n_out,
            n_out: self.n_in,
        }
    }
}

/// Builds the kernel map of a convolution over `input`.
///
/// Stride 1 is submanifold: outputs sit on the input coordinates. Stride 2
/// outputs sit on [`CoordSet::downsampled`] coordinates. In both cases the
/// pair `(i, o)` exists for offset `d` iff `coord(i) = coord(o) + d * s`,
/// with `s` the input tensor stride.
pub fn build_kernel_map(
    input: &CoordSet,
    kernel_size: usize,
    stride: usize,
) -> Result<(KernelMap, Arc<CoordSet>)> {
    let offsets = kernel_offsets(kernel_size)?;
    let output = match stride {
        1 => input.clone(),
        2 => input.downsampled(),
        _ => return Err(Error::invalid(format!("conv stride {stride} unsupported (use 1 or 2)"))),
    };
    let s = input.stride();
    let pairs = offsets
        .iter()
        .map(|d| {
            output
                .coords()
                .iter()
                .enumerate()
                .filter_map(|(o, c)| {
                    let src = [c[0], c[1] + d[0] * s, c[2] + d[1] * s, c[3] + d[2] * s];
                    input.row_of(&src).map(|i| (i as u32, o as u32))
                })
                .collect()
        })
        .collect();
    let map = KernelMap {
        offsets,
        pairs,
        n_in: input.len(),
        n_out: output.len(),
    };
    Ok((map, Arc::new(output)))
}

/// Single-offset map sending every voxel to its floor-halved cell, so a
/// shared `C_in × C_out` weight sums each 2³ cell before projecting.
pub fn build_cell_map(input: &CoordSet) -> (KernelMap, Arc<CoordSet>) {
    let output = input.downsampled();
    let cell = 2 * input.stride();
    let mut pairs: Vec<(u32, u32)> = input
        .coords()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let q = [
                c[0],
                c[1].div_euclid(cell) * cell,
                c[2].div_euclid(cell) * cell,
                c[3].div_euclid(cell) * cell,
            ];
            let o = output.row_of(&q).expect("downsampled set holds every cell");
            (i as u32, o as u32)
        })
        .collect();
    pairs.sort_unstable_by_key(|&(i, o)| (o, i));
    let map = KernelMap {
        offsets: vec![[0, 0, 0]],
        pairs: vec![pairs],
        n_in: input.len(),
        n_out: output.len(),
    };
    (map, Arc::new(output))
}

/// Coordinate pyramid of one batch with the kernel maps every level needs.
/// Level `l` has stride `2^l`.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub levels: Vec<Arc<CoordSet>>,
    /// Kernel-3 submanifold map per level.
    pub sub3: Vec<Arc<KernelMap>>,
    /// Kernel-3 stride-2 map from level `l` to `l + 1`.
    pub down3: Vec<Arc<KernelMap>>,
    /// Cell-membership map from level `l` to `l + 1` (see [`build_cell_map`]).
    pub down1: Vec<Arc<KernelMap>>,
    /// Transposed `down3`: level `l + 1` back onto level `l`.
    pub up3: Vec<Arc<KernelMap>>,
}

impl Lattice {
    pub fn build(base: CoordSet, num_levels: usize) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::invalid("lattice needs at least one level"));
        }
        let mut levels = vec![Arc::new(base)];
        let mut sub3 = Vec::new();
        let mut down3 = Vec::new();
        let mut down1 = Vec::new();
        let mut up3 = Vec::new();
        for l in 0..num_levels {
            let cur = levels[l].clone();
            sub3.push(Arc::new(build_kernel_map(&cur, 3, 1)?.0));
            if l + 1 < num_levels {
                let (d3, next) = build_kernel_map(&cur, 3, 2)?;
                let (d1, _) = build_cell_map(&cur);
                up3.push(Arc::new(d3.transposed()));
                down3.push(Arc::new(d3));
                down1.push(Arc::new(d1));
                levels.push(next);
            }
        }
        Ok(Self {
            levels,
            sub3,
            down3,
            down1,
            up3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(coords: &[Coord]) -> CoordSet {
        CoordSet::new(coords.to_vec(), 1).unwrap()
    }

    #[test]
    fn offsets_are_dz_major() {
        let o = kernel_offsets(3).unwrap();
        assert_eq!(o.len(), 27);
        assert_eq!(o[0], [-1, -1, -1]);
        assert_eq!(o[1], [0, -1, -1]);
        assert_eq!(o[3], [-1, 0, -1]);
        assert_eq!(o[9], [-1, -1, 0]);
        assert_eq!(o[13], [0, 0, 0]);
        assert!(kernel_offsets(2).is_err());
        assert!(kernel_offsets(5).is_err());
    }

    #[test]
    fn kernel_one_is_identity() {
        let s = set(&[[0, 0, 0, 0], [0, 3, 1, 2], [1, 0, 0, 0]]);
        let (m, out) = build_kernel_map(&s, 1, 1).unwrap();
        assert_eq!(m.num_offsets(), 1);
        assert_eq!(m.pairs[0], vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(*out, s);
    }

    #[test]
    fn two_neighbours_hand_enumerated() {
        let s = set(&[[0, 0, 0, 0], [0, 1, 0, 0]]);
        let (m, _) = build_kernel_map(&s, 3, 1).unwrap();
        let plus_x = m.offsets.iter().position(|o| *o == [1, 0, 0]).unwrap();
        let minus_x = m.offsets.iter().position(|o| *o == [-1, 0, 0]).unwrap();
        let centre = m.offsets.iter().position(|o| *o == [0, 0, 0]).unwrap();
        // input (1,0,0) feeds output (0,0,0) through offset +x
        assert_eq!(m.pairs[plus_x], vec![(1, 0)]);
        assert_eq!(m.pairs[minus_x], vec![(0, 1)]);
        assert_eq!(m.pairs[centre], vec![(0, 0), (1, 1)]);
        assert_eq!(m.num_pairs(), 4);
        assert_eq!(m.pairs.iter().filter(|p| !p.is_empty()).count(), 3);
    }

    #[test]
    fn dense_block_pair_count_matches_enumeration() {
        let mut coords = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    coords.push([0, x, y, z]);
                }
            }
        }
        let (m, _) = build_kernel_map(&set(&coords), 3, 1).unwrap();
        // dense receptive field count, dropping neighbours outside the block
        let mut expected = 0;
        for &[_, x, y, z] in &coords {
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let inside = |v: i32| (0..4).contains(&v);
                        if inside(x + dx) && inside(y + dy) && inside(z + dz) {
                            expected += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(expected, 1000);
        assert_eq!(m.num_pairs(), expected);
    }

    #[test]
    fn downsampling_halves_and_keeps_batches_apart() {
        let s = set(&[[0, 0, 0, 0], [0, 1, 1, 1], [0, -1, 0, 0], [1, 1, 0, 0]]);
        let (m, out) = build_kernel_map(&s, 3, 2).unwrap();
        assert_eq!(out.stride(), 2);
        assert_eq!(out.coords(), &[[0, -2, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]]);
        for p in &m.pairs {
            for &(i, o) in p {
                assert_eq!(s.coords()[i as usize][0], out.coords()[o as usize][0]);
            }
        }
        let single = set(&[[0, 0, 0, 0]]);
        let (_, out) = build_kernel_map(&single, 3, 2).unwrap();
        assert_eq!(out.coords(), &[[0, 0, 0, 0]]);
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(CoordSet::new(vec![[0, 0, 0, 0], [0, 0, 0, 0]], 1).is_err());
        assert!(CoordSet::new(vec![[0, 1, 0, 0]], 2).is_err());
        assert!(CoordSet::new(vec![], 1).is_err());
        assert!(build_kernel_map(&set(&[[0, 0, 0, 0]]), 3, 3).is_err());
    }

    #[test]
    fn transposed_map_swaps_roles() {
        let s = set(&[[0, 0, 0, 0], [0, 1, 0, 0], [0, 2, 0, 0]]);
        let (m, _) = build_kernel_map(&s, 3, 2).unwrap();
        let t = m.transposed();
        assert_eq!((t.n_in, t.n_out), (m.n_out, m.n_in));
        assert_eq!(t.num_pairs(), m.num_pairs());
        assert_eq!(t.transposed(), m);
    }
}
