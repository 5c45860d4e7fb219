//! FFT-backed discrete convolution of a cell-centred source with a
//! translation-invariant kernel, evaluated on a (possibly larger) target
//! lattice aligned with the source cell centres.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// `out[t] = Σ_s kernel(t + offset − s) · src[s]` on two aligned lattices.
pub struct Convolver {
    src: (usize, usize),
    dst: (usize, usize),
    size: (usize, usize),
    kernel_hat: Vec<Complex64>,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("src", &self.src)
            .field("dst", &self.dst)
            .field("size", &self.size)
            .finish()
    }
}

fn good_size(n: usize) -> usize {
    // Smallest 2^a·3^b ≥ n.
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < 2 * best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

impl Convolver {
    /// `kernel(di, dj)` receives the lattice offset target − source.
    /// `offset` is the source-lattice index of target cell `(0, 0)`.
    pub fn new(
        src: (usize, usize),
        dst: (usize, usize),
        offset: (isize, isize),
        kernel: impl Fn(isize, isize) -> f64 + Sync,
    ) -> Self {
        let lx = src.0 + dst.0 - 1;
        let ly = src.1 + dst.1 - 1;
        let size = (good_size(lx), good_size(ly));
        let dmin = (offset.0 - (src.0 as isize - 1), offset.1 - (src.1 as isize - 1));
        let mut planner = FftPlanner::<f64>::new();
        let fwd_x = planner.plan_fft_forward(size.0);
        let fwd_y = planner.plan_fft_forward(size.1);
        let inv_x = planner.plan_fft_inverse(size.0);
        let inv_y = planner.plan_fft_inverse(size.1);
        let mut buf = vec![Complex64::new(0.0, 0.0); size.0 * size.1];
        use rayon::prelude::*;
        buf.par_chunks_mut(size.0).enumerate().take(ly).for_each(|(ey, row)| {
            for (ex, v) in row.iter_mut().enumerate().take(lx) {
                *v = Complex64::new(kernel(ex as isize + dmin.0, ey as isize + dmin.1), 0.0);
            }
        });
        let mut c = Convolver { src, dst, size, kernel_hat: Vec::new(), fwd_x, fwd_y, inv_x, inv_y };
        c.transform(&mut buf, true);
        c.kernel_hat = buf;
        c
    }

    pub fn src_dims(&self) -> (usize, usize) {
        self.src
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        self.dst
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        let (px, py) = self.size;
        let (fx, fy) = if forward { (&self.fwd_x, &self.fwd_y) } else { (&self.inv_x, &self.inv_y) };
        for row in buf.chunks_mut(px) {
            fx.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); py];
        for i in 0..px {
            for j in 0..py {
                col[j] = buf[j * px + i];
            }
            fy.process(&mut col);
            for j in 0..py {
                buf[j * px + i] = col[j];
            }
        }
    }

    /// Convolve a row-major source (`src.0` fastest) into a row-major target.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        assert_eq!(src.len(), self.src.0 * self.src.1);
        let (px, py) = self.size;
        let mut buf = vec![Complex64::new(0.0, 0.0); px * py];
        for j in 0..self.src.1 {
            for i in 0..self.src.0 {
                buf[j * px + i] = Complex64::new(src[j * self.src.0 + i], 0.0);
            }
        }
        self.transform(&mut buf, true);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, false);
        let norm = 1.0 / (px * py) as f64;
        let (sx, sy) = (self.src.0 - 1, self.src.1 - 1);
        let mut out = vec![0.0; self.dst.0 * self.dst.1];
        for j in 0..self.dst.1 {
            for i in 0..self.dst.0 {
                out[j * self.dst.0 + i] = buf[(j + sy) * px + (i + sx)].re * norm;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum_with_offset() {
        let src = (5usize, 4usize);
        let dst = (7usize, 6usize);
        let off = (-1isize, -1isize);
        let k = |di: isize, dj: isize| ((di * 3 + dj * 7) as f64).sin() + 0.1 * di as f64;
        let conv = Convolver::new(src, dst, off, k);
        let s: Vec<f64> = (0..20).map(|v| (v as f64 * 0.37).cos()).collect();
        let out = conv.apply(&s);
        for tj in 0..dst.1 {
            for ti in 0..dst.0 {
                let mut direct = 0.0;
                for sj in 0..src.1 {
                    for si in 0..src.0 {
                        let di = ti as isize + off.0 - si as isize;
                        let dj = tj as isize + off.1 - sj as isize;
                        direct += k(di, dj) * s[sj * src.0 + si];
                    }
                }
                assert!((direct - out[tj * dst.0 + ti]).abs() < 1e-10);
            }
        }
    }
}
