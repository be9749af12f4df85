//! Strided single-precision matrix multiply with a fixed accumulation order.
//!
//! Every output element is accumulated over the inner dimension in ascending
//! order, starting from either zero or the element's current value, with one
//! fused multiply-add (a single rounding) per term. The result is therefore
//! bitwise identical to the textbook triple loop
//!
//! ```text
//! for i, j: acc = c[i][j] (or 0); for p in 0..k: acc = fma(a[i][p], b[p][j], acc)
//! ```
//!
//! no matter which instruction set the kernel was compiled for. Blocking and
//! panel packing only change the memory traffic, never the arithmetic.

/// A read-only strided view of a matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f32], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of a row-major `rows × cols` buffer, viewed as `cols × rows`.
    pub fn transposed(data: &'a [f32], rows: usize, cols: usize) -> Self {
        Self { data, rows: cols, cols: rows, row_stride: 1, col_stride: cols }
    }

    fn fits(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }

    #[cfg(test)]
    fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.row_stride + c * self.col_stride]
    }
}

const MR: usize = 6;
const NR: usize = 32;
const KC: usize = 256;
const MC: usize = 192;
const NC: usize = 512;

/// `c (m×n, row-major) = a · b`, or `c += a · b` when `accumulate` is set.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "inner extents must agree");
    assert_eq!(c.len(), a.rows * b.cols, "output buffer has the wrong length");
    assert!(a.fits() && b.fits(), "strided view runs past its buffer");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") {
            if a.rows <= SHORT_M && b.col_stride == 1 {
                // SAFETY: avx512f was detected above.
                unsafe { gemm_short_avx512(a, b, c, accumulate) };
                return;
            }
            if b.cols <= NARROW_N && a.col_stride == 1 {
                // SAFETY: avx512f was detected above.
                unsafe { gemm_narrow_avx512(a, b, c, accumulate) };
                return;
            }
            gemm_blocked(a, b, c, accumulate, Kernel::Avx512);
            return;
        }
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            gemm_blocked(a, b, c, accumulate, Kernel::Avx2);
            return;
        }
    }
    gemm_blocked(a, b, c, accumulate, Kernel::Portable);
}

const SHORT_M: usize = 8;
const NARROW_N: usize = 8;
const SHORT_CHUNK: usize = 1024;
const SHORT_AHEAD: usize = 16;

/// Few rows of `a`: stream `b` row by row past a block of `c` that stays in cache.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn gemm_short_avx512(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], accumulate: bool) {
    use std::arch::x86_64::*;
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if !accumulate {
        c.fill(0.0);
    }
    for j0 in (0..n).step_by(SHORT_CHUNK) {
        let nc = SHORT_CHUNK.min(n - j0);
        let vec_end = nc - nc % 16;
        for p in 0..k {
            let b_row = &b.data[p * b.row_stride + j0..][..nc];
            if p + SHORT_AHEAD < k {
                let ahead = b_row.as_ptr().add(SHORT_AHEAD * b.row_stride);
                for j in (0..nc).step_by(16) {
                    _mm_prefetch::<_MM_HINT_T0>(ahead.add(j).cast());
                }
            }
            for i in 0..m {
                let av = a.data[i * a.row_stride + p * a.col_stride];
                let c_row = &mut c[i * n + j0..][..nc];
                let splat = _mm512_set1_ps(av);
                for j in (0..vec_end).step_by(16) {
                    let cp = c_row.as_mut_ptr().add(j);
                    _mm512_storeu_ps(cp, _mm512_fmadd_ps(splat, _mm512_loadu_ps(b_row.as_ptr().add(j)), _mm512_loadu_ps(cp)));
                }
                for j in vec_end..nc {
                    c_row[j] = av.mul_add(b_row[j], c_row[j]);
                }
            }
        }
    }
}

/// Few columns of `b`: sixteen rows of `a` at a time. Each 16×16 block of `a` is
/// transposed in registers so one vector holds one column of the block.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn gemm_narrow_avx512(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], accumulate: bool) {
    use std::arch::x86_64::*;
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let full = m - m % 16;
    let k_vec = k - k % 16;
    let mut lanes = [[0.0f32; 16]; NARROW_N];
    let mut idx = [[_mm512_setzero_si512(); 2]; 4];
    for (bit, pair) in idx.iter_mut().enumerate() {
        let s = 1 << bit;
        let lo: [i32; 16] = std::array::from_fn(|c| if c & s == 0 { c as i32 } else { 16 + (c ^ s) as i32 });
        let hi: [i32; 16] = std::array::from_fn(|c| if c & s == 0 { (c | s) as i32 } else { 16 + c as i32 });
        *pair = [_mm512_loadu_si512(lo.as_ptr().cast()), _mm512_loadu_si512(hi.as_ptr().cast())];
    }
    for i0 in (0..full).step_by(16) {
        let mut acc = [_mm512_setzero_ps(); NARROW_N];
        if accumulate {
            for r in 0..16 {
                for j in 0..n {
                    lanes[j][r] = c[(i0 + r) * n + j];
                }
            }
            for j in 0..n {
                acc[j] = _mm512_loadu_ps(lanes[j].as_ptr());
            }
        }
        let base = a.data[i0 * a.row_stride..].as_ptr();
        let next = i0 + 16 < full;
        for p0 in (0..k_vec).step_by(16) {
            if next {
                for r in 0..16 {
                    _mm_prefetch::<_MM_HINT_T0>(base.add((16 + r) * a.row_stride + p0).cast());
                }
            }
            let mut t: [__m512; 16] = std::array::from_fn(|r| _mm512_loadu_ps(base.add(r * a.row_stride + p0)));
            for (bit, pair) in idx.iter().enumerate() {
                let s = 1 << bit;
                for r in (0..16).filter(|r| r & s == 0) {
                    let (lo, hi) = (t[r], t[r | s]);
                    t[r] = _mm512_permutex2var_ps(lo, pair[0], hi);
                    t[r | s] = _mm512_permutex2var_ps(lo, pair[1], hi);
                }
            }
            for (q, &av) in t.iter().enumerate() {
                let b_row = (p0 + q) * b.row_stride;
                for j in 0..n {
                    let bv = _mm512_set1_ps(*b.data.get_unchecked(b_row + j * b.col_stride));
                    acc[j] = _mm512_fmadd_ps(av, bv, acc[j]);
                }
            }
        }
        for j in 0..n {
            _mm512_storeu_ps(lanes[j].as_mut_ptr(), acc[j]);
        }
        for p in k_vec..k {
            for r in 0..16 {
                let av = a.data[(i0 + r) * a.row_stride + p];
                for j in 0..n {
                    lanes[j][r] = av.mul_add(b.data[p * b.row_stride + j * b.col_stride], lanes[j][r]);
                }
            }
        }
        for r in 0..16 {
            for j in 0..n {
                c[(i0 + r) * n + j] = lanes[j][r];
            }
        }
    }
    for i in full..m {
        for j in 0..n {
            let mut acc = if accumulate { c[i * n + j] } else { 0.0 };
            for p in 0..k {
                acc = a.data[i * a.row_stride + p].mul_add(b.data[p * b.row_stride + j * b.col_stride], acc);
            }
            c[i * n + j] = acc;
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kernel {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn gemm_blocked(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], accumulate: bool, kernel: Kernel) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let direct_b = b.col_stride == 1 && n == NR;
    let mut b_block = if direct_b { Vec::new() } else { vec![0.0f32; KC * NC.min(n.div_ceil(NR) * NR)] };
    let mut tile = [[0.0f32; NR]; MR];
    for jc in (0..n).step_by(NC) {
        let nc = NC.min(n - jc);
        for pc in (0..k).step_by(KC) {
            let kc = KC.min(k - pc);
            let load_c = accumulate || pc > 0;
            if !direct_b {
                pack_b(&b, pc, kc, jc, nc, &mut b_block);
            }
            for ic in (0..m).step_by(MC) {
                let mc = MC.min(m - ic);
                for jp in 0..nc.div_ceil(NR) {
                    let j0 = jc + jp * NR;
                    let nr = NR.min(n - j0);
                    let (b_ptr, b_step) = if direct_b {
                        (b.data[pc * b.row_stride + j0..].as_ptr(), b.row_stride)
                    } else {
                        (b_block[jp * kc * NR..].as_ptr(), NR)
                    };
                    for i0 in (ic..ic + mc).step_by(MR) {
                        let mr = MR.min(m - i0);
                        let a_rows = std::array::from_fn(|r| {
                            let row = i0 + r.min(mr - 1);
                            a.data[row * a.row_stride + pc * a.col_stride..].as_ptr()
                        });
                        let full = mr == MR && nr == NR;
                        let (c_ptr, c_step) = if full {
                            (c[i0 * n + j0..].as_mut_ptr(), n)
                        } else {
                            for (r, row) in tile.iter_mut().enumerate() {
                                if load_c && r < mr {
                                    let at = (i0 + r) * n + j0;
                                    row[..nr].copy_from_slice(&c[at..at + nr]);
                                } else {
                                    row.fill(0.0);
                                }
                            }
                            (tile.as_mut_ptr().cast::<f32>(), NR)
                        };
                        let operands = Operands {
                            a_rows,
                            a_step: a.col_stride,
                            b: b_ptr,
                            b_step,
                            kc,
                            c: c_ptr,
                            c_step,
                            load_c: load_c || !full,
                        };
                        // SAFETY: every row pointer addresses a row of `a` that has at least
                        // `kc` entries from column `pc` on (strided by `a_step`), and `b`
                        // addresses `kc` rows of `NR` readable values: either a packed
                        // panel or, for `direct_b`, a full-width slice of `b` itself.
                        // `c` addresses `MR` rows of `NR` writable values, inside `c` for
                        // full tiles and inside `tile` otherwise. The vector variants are
                        // only chosen after runtime feature detection.
                        unsafe {
                            match kernel {
                                Kernel::Portable => tile_kernel(&operands),
                                #[cfg(target_arch = "x86_64")]
                                Kernel::Avx2 => tile_kernel_avx2(&operands),
                                #[cfg(target_arch = "x86_64")]
                                Kernel::Avx512 => tile_kernel_avx512(&operands),
                            }
                        }
                        if !full {
                            for (r, row) in tile.iter().enumerate().take(mr) {
                                let at = (i0 + r) * n + j0;
                                c[at..at + nr].copy_from_slice(&row[..nr]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Inputs of one `MR × NR` tile update over `kc` inner steps.
///
/// Row `r` of the `a` sliver at step `p` is `*a_rows[r].add(p * a_step)`; row `p`
/// of the `b` panel starts at `b.add(p * b_step)` and holds `NR` values. Row `r`
/// of the output tile starts at `c.add(r * c_step)`; it is read first when
/// `load_c` is set and treated as zero otherwise.
struct Operands {
    a_rows: [*const f32; MR],
    a_step: usize,
    b: *const f32,
    b_step: usize,
    kc: usize,
    c: *mut f32,
    c_step: usize,
    load_c: bool,
}

/// Packs `b[pc..pc+kc, jc..jc+nc]` as consecutive `kc × NR` panels, zero padded.
fn pack_b(b: &MatRef<'_>, pc: usize, kc: usize, jc: usize, nc: usize, block: &mut [f32]) {
    let panels = nc.div_ceil(NR);
    let block = &mut block[..panels * kc * NR];
    if nc % NR != 0 {
        block[(panels - 1) * kc * NR..].fill(0.0);
    }
    if b.col_stride == 1 {
        for p in 0..kc {
            let row = &b.data[(pc + p) * b.row_stride + jc..][..nc];
            for (jp, src) in row.chunks(NR).enumerate() {
                let at = (jp * kc + p) * NR;
                block[at..at + src.len()].copy_from_slice(src);
            }
        }
    } else {
        for j in 0..nc {
            let (jp, jj) = (j / NR, j % NR);
            let base = pc * b.row_stride + (jc + j) * b.col_stride;
            for p in 0..kc {
                block[(jp * kc + p) * NR + jj] = b.data[base + p * b.row_stride];
            }
        }
    }
}

#[inline(always)]
unsafe fn tile_kernel(op: &Operands) {
    let mut acc = [[0.0f32; NR]; MR];
    if op.load_c {
        for (r, row) in acc.iter_mut().enumerate() {
            row.copy_from_slice(std::slice::from_raw_parts(op.c.add(r * op.c_step), NR));
        }
    }
    for p in 0..op.kc {
        let b_row = std::slice::from_raw_parts(op.b.add(p * op.b_step), NR);
        for r in 0..MR {
            let av = *op.a_rows[r].add(p * op.a_step);
            for j in 0..NR {
                acc[r][j] = av.mul_add(b_row[j], acc[r][j]);
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        std::slice::from_raw_parts_mut(op.c.add(r * op.c_step), NR).copy_from_slice(row);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_kernel_avx2(op: &Operands) {
    tile_kernel(op);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn tile_kernel_avx512(op: &Operands) {
    use std::arch::x86_64::*;
    let mut acc = [[_mm512_setzero_ps(); 2]; MR];
    if op.load_c {
        for (r, row) in acc.iter_mut().enumerate() {
            let c = op.c.add(r * op.c_step);
            row[0] = _mm512_loadu_ps(c);
            row[1] = _mm512_loadu_ps(c.add(16));
        }
    }
    let mut a = op.a_rows;
    let mut b = op.b;
    for _ in 0..op.kc {
        let b0 = _mm512_loadu_ps(b);
        let b1 = _mm512_loadu_ps(b.add(16));
        for r in 0..MR {
            let av = _mm512_set1_ps(*a[r]);
            acc[r][0] = _mm512_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm512_fmadd_ps(av, b1, acc[r][1]);
            a[r] = a[r].wrapping_add(op.a_step);
        }
        b = b.wrapping_add(op.b_step);
    }
    for (r, row) in acc.iter().enumerate() {
        let c = op.c.add(r * op.c_step);
        _mm512_storeu_ps(c, row[0]);
        _mm512_storeu_ps(c.add(16), row[1]);
    }
}
