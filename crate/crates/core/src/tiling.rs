//! Row-strip partitioning for per-pixel and neighborhood operators.
//!
//! Every operator in this crate writes each output pixel from immutable inputs only,
//! so the strip height changes scheduling but never the result.

use rayon::prelude::*;

/// How an operator splits the raster into horizontal strips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    /// Rows per strip; clamped to at least 1.
    pub rows_per_tile: usize,
    /// Run strips on the rayon pool. When false, strips run in order on the caller's thread.
    pub parallel: bool,
}

impl Default for Tiling {
    fn default() -> Self {
        Self {
            rows_per_tile: 64,
            parallel: true,
        }
    }
}

impl Tiling {
    pub fn serial() -> Self {
        Self {
            rows_per_tile: usize::MAX,
            parallel: false,
        }
    }

    pub fn strips(rows_per_tile: usize) -> Self {
        Self {
            rows_per_tile,
            parallel: true,
        }
    }

    /// Fills a row-major `width * height` buffer by calling `pixel(row, col)` for every pixel.
    pub(crate) fn map_pixels<T, F>(&self, width: usize, height: usize, pixel: F) -> Vec<T>
    where
        T: Send + Default + Clone,
        F: Fn(usize, usize) -> T + Sync,
    {
        let mut out = vec![T::default(); width * height];
        if width == 0 || height == 0 {
            return out;
        }
        let rows = self.rows_per_tile.clamp(1, height);
        let fill = |(tile, chunk): (usize, &mut [T])| {
            let first_row = tile * rows;
            for (i, row) in chunk.chunks_mut(width).enumerate() {
                let r = first_row + i;
                for (c, v) in row.iter_mut().enumerate() {
                    *v = pixel(r, c);
                }
            }
        };
        if self.parallel {
            out.par_chunks_mut(rows * width).enumerate().for_each(fill);
        } else {
            out.chunks_mut(rows * width).enumerate().for_each(fill);
        }
        out
    }
}
