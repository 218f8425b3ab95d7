//! Block-sparse storage for DG operators and sparse direct solves.
//!
//! DG matrices couple each element only with itself and its face
//! neighbours, so the operator is stored as 12×12 dense blocks on the
//! element adjacency graph. Factorizations go through faer's sparse LU with
//! partial pivoting, which handles the nonsymmetric NIPG/IIPG operators and
//! the zero diagonal block of bordered systems.

use std::io::{self, Write};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::space::LOCAL_DOFS;

pub const BLOCK: usize = LOCAL_DOFS;
pub type Block = [f64; BLOCK * BLOCK];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("solution is not finite or residual {residual:e} exceeds tolerance")]
    Singular { residual: f64 },
}

/// Square matrix of 12×12 blocks with a symmetric block pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparse {
    n_blocks: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Block>,
}

impl BlockSparse {
    /// Zero matrix on the element adjacency pattern of `mesh` (self plus
    /// neighbours across interior edges).
    pub fn for_mesh(mesh: &Mesh) -> Self {
        let nt = mesh.num_triangles();
        let mut row_ptr = Vec::with_capacity(nt + 1);
        let mut cols = Vec::with_capacity(4 * nt);
        row_ptr.push(0);
        for t in 0..nt {
            let mut row = vec![t];
            for &e in &mesh.triangle_edges(t) {
                let edge = &mesh.edges()[e];
                for &(s, _) in &edge.triangles {
                    if s != t {
                        row.push(s);
                    }
                }
            }
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let blocks = vec![[0.0; BLOCK * BLOCK]; cols.len()];
        Self {
            n_blocks: nt,
            row_ptr,
            cols,
            blocks,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_blocks * BLOCK
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()]
            .binary_search(&col)
            .ok()
            .map(|k| range.start + k)
    }

    /// Adds `block` into block position `(row, col)`.
    ///
    /// Panics if the position is outside the pattern.
    pub fn add_block(&mut self, row: usize, col: usize, block: &Block) {
        let k = self
            .slot(row, col)
            .unwrap_or_else(|| panic!("block ({row}, {col}) outside the pattern"));
        for (a, b) in self.blocks[k].iter_mut().zip(block.iter()) {
            *a += b;
        }
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&Block> {
        self.slot(row, col).map(|k| &self.blocks[k])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.block(i / BLOCK, j / BLOCK)
            .map(|b| b[(i % BLOCK) * BLOCK + j % BLOCK])
            .unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; self.dim()];
        for r in 0..self.n_blocks {
            let yr = &mut y[r * BLOCK..(r + 1) * BLOCK];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                let xc = &x[c * BLOCK..(c + 1) * BLOCK];
                let b = &self.blocks[k];
                for i in 0..BLOCK {
                    let row = &b[i * BLOCK..(i + 1) * BLOCK];
                    yr[i] += row.iter().zip(xc).map(|(a, v)| a * v).sum::<f64>();
                }
            }
        }
        y
    }

    /// `vᵀ A w`.
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        dot(v, &self.matvec(w))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n_blocks {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                let other = self.block(c, r).expect("symmetric pattern");
                let b = &self.blocks[k];
                for i in 0..BLOCK {
                    for j in 0..BLOCK {
                        worst = worst.max((b[i * BLOCK + j] - other[j * BLOCK + i]).abs());
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `self - other`; both must share the pattern.
    pub fn difference(&self, other: &BlockSparse) -> BlockSparse {
        assert_eq!(self.cols, other.cols, "patterns differ");
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x -= y;
            }
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_blocks).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).flat_map(move |k| {
                let c = self.cols[k];
                let b = &self.blocks[k];
                (0..BLOCK * BLOCK).filter_map(move |idx| {
                    let v = b[idx];
                    (v != 0.0).then_some((r * BLOCK + idx / BLOCK, c * BLOCK + idx % BLOCK, v))
                })
            })
        })
    }

    /// Matrix Market coordinate format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        let entries: Vec<_> = self.triplets().collect();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.dim(), self.dim(), entries.len())?;
        for (i, j, v) in entries {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A sparse row `Σ_k coeff_k x_{index_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, c)| c * x[i]).sum()
    }
}

/// Solves `[A Cᵀ; C 0] [x; λ] = [b; g]` for the given constraint rows.
/// With no rows this is a plain solve of `A x = b`.
pub fn solve_bordered(
    a: &BlockSparse,
    rows: &[&SparseRow],
    b: &[f64],
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let n = a.dim();
    let m = rows.len();
    assert_eq!(b.len(), n);
    assert_eq!(g.len(), m);
    let mut trip: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    for (r, row) in rows.iter().enumerate() {
        for &(j, c) in &row.entries {
            trip.push(Triplet::new(n + r, j, c));
            trip.push(Triplet::new(j, n + r, c));
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n + m, n + m, &trip)
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
    let rhs = Mat::<f64>::from_fn(n + m, 1, |i, _| if i < n { b[i] } else { g[i - n] });
    let sol = lu.solve(&rhs);
    let z: Vec<f64> = (0..n + m).map(|i| sol[(i, 0)]).collect();

    // residual check guards against silently singular pivots
    let x = &z[..n];
    let lam = &z[n..];
    let mut r = a.matvec(x);
    for (k, row) in rows.iter().enumerate() {
        for &(j, c) in &row.entries {
            r[j] += c * lam[k];
        }
    }
    let mut residual = r.iter().zip(b).fold(0.0f64, |m, (ri, bi)| m.max((ri - bi).abs()));
    for (k, row) in rows.iter().enumerate() {
        residual = residual.max((row.apply(x) - g[k]).abs());
    }
    let scale = 1.0 + max_abs(b) + max_abs(g) + a.max_abs() * max_abs(x);
    if !z.iter().all(|v| v.is_finite()) || residual > 1e-8 * scale {
        return Err(SolveError::Singular { residual });
    }
    Ok((x.to_vec(), lam.to_vec()))
}
