//! Single-precision matrix multiply.
//!
//! Every output element is accumulated as `((0 + a0*b0) + a1*b1) + ...` with the
//! inner index ascending and no fused multiply-add, so results are bitwise
//! identical to a naive triple loop. Vector width only changes how many
//! independent accumulators run side by side; it never changes the order of
//! any single sum. That is what lets the wide kernels below be selected at
//! runtime without breaking reproducibility across machines.

/// Computes `c = a · b` for row-major `a: [m, k]`, `b: [k, n]`, `c: [m, n]`.
///
/// `c` is overwritten.
///
/// # Panics
///
/// Panics if a slice length disagrees with the stated dimensions.
pub fn gemm(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k, "lhs length");
    assert_eq!(b.len(), k * n, "rhs length");
    assert_eq!(c.len(), m * n, "output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }

    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { gemm_avx512(a, b, c, m, k, n) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { gemm_avx2(a, b, c, m, k, n) };
            return;
        }
    }
    gemm_tiled::<4, 8>(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn gemm_avx512(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    gemm_tiled::<4, 64>(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    gemm_tiled::<4, 32>(a, b, c, m, k, n);
}

/// Inner-dimension block. Partial sums are parked in `c` between blocks and
/// reloaded, which is exact, so blocking leaves every sum's order intact.
const KC: usize = 256;

/// Walks `b` in column panels of width `NR` and row blocks of height `KC`,
/// packing each piece contiguously, then sweeps all rows of `a` against it
/// in groups of `MR`.
#[inline(always)]
fn gemm_tiled<const MR: usize, const NR: usize>(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    let mut packed = vec![0.0f32; KC.min(k) * NR];
    let mut j0 = 0;
    while j0 < n {
        let width = NR.min(n - j0);
        let mut k0 = 0;
        while k0 < k {
            let depth = KC.min(k - k0);
            let panel = &mut packed[..depth * NR];
            for (kk, dst) in panel.chunks_exact_mut(NR).enumerate() {
                let src = &b[(k0 + kk) * n + j0..(k0 + kk) * n + j0 + width];
                dst[..width].copy_from_slice(src);
                dst[width..].fill(0.0);
            }
            let panel = &packed[..depth * NR];
            let first = k0 == 0;

            let mut i = 0;
            while i + MR <= m {
                let mut acc = [[0.0f32; NR]; MR];
                if !first {
                    for (r, acc_r) in acc.iter_mut().enumerate() {
                        let row = (i + r) * n + j0;
                        acc_r[..width].copy_from_slice(&c[row..row + width]);
                    }
                }
                let rows: [&[f32]; MR] = std::array::from_fn(|r| &a[(i + r) * k + k0..(i + r) * k + k0 + depth]);
                for (kk, bp) in panel.chunks_exact(NR).enumerate() {
                    let bp: &[f32; NR] = bp.try_into().unwrap();
                    for r in 0..MR {
                        let av = rows[r][kk];
                        let acc_r = &mut acc[r];
                        for j in 0..NR {
                            acc_r[j] += av * bp[j];
                        }
                    }
                }
                for (r, acc_r) in acc.iter().enumerate() {
                    let row = (i + r) * n + j0;
                    c[row..row + width].copy_from_slice(&acc_r[..width]);
                }
                i += MR;
            }
            while i < m {
                let row = i * n + j0;
                let mut acc = [0.0f32; NR];
                if !first {
                    acc[..width].copy_from_slice(&c[row..row + width]);
                }
                let row_a = &a[i * k + k0..i * k + k0 + depth];
                for (kk, bp) in panel.chunks_exact(NR).enumerate() {
                    let bp: &[f32; NR] = bp.try_into().unwrap();
                    let av = row_a[kk];
                    for j in 0..NR {
                        acc[j] += av * bp[j];
                    }
                }
                c[row..row + width].copy_from_slice(&acc[..width]);
                i += 1;
            }
            k0 += depth;
        }
        j0 += NR;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f32;
                for kk in 0..k {
                    s += a[i * k + kk] * b[kk * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn all_tilings_match_naive_bitwise() {
        let dims = [(1, 1, 1), (3, 5, 7), (9, 13, 70), (5, 2, 129), (17, 33, 64), (6, 700, 9)];
        for &(m, k, n) in &dims {
            let a: Vec<f32> = (0..m * k).map(|i| ((i * 37 % 23) as f32 - 11.0) * 0.173).collect();
            let b: Vec<f32> = (0..k * n).map(|i| ((i * 17 % 29) as f32 - 14.0) * 0.091).collect();
            let expect = naive(&a, &b, m, k, n);
            let mut c = vec![f32::NAN; m * n];
            gemm(&a, &b, &mut c, m, k, n);
            assert_eq!(c, expect);
            gemm_tiled::<4, 8>(&a, &b, &mut c, m, k, n);
            assert_eq!(c, expect);
            gemm_tiled::<2, 16>(&a, &b, &mut c, m, k, n);
            assert_eq!(c, expect);
        }
    }
}
