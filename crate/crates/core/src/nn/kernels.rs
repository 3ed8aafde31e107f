//! Hot loops of the LSTM: an unpacked gemm for the recurrence, where the
//! batch is only a few rows and packing the `H x 4H` weight every step costs
//! as much as the math, and vectorized gate nonlinearities.

/// In place `v = 1 / (1 + exp(-v))`.
pub(crate) fn sigmoid_inplace(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: features detected.
        unsafe { avx::sigmoid_inplace(v) };
        return;
    }
    v.iter_mut().for_each(|x| *x = scalar_sigmoid(*x));
}

/// In place `v = tanh(v)`, computed as `2 sigmoid(2v) - 1`.
pub(crate) fn tanh_inplace(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: features detected.
        unsafe { avx::tanh_inplace(v) };
        return;
    }
    v.iter_mut().for_each(|x| *x = 2.0 * scalar_sigmoid(2.0 * *x) - 1.0);
}

#[inline]
fn scalar_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-EXP_LIMIT, EXP_LIMIT)).exp())
}

/// Inputs to `exp` are clamped here so `2^n` stays a normal number.
const EXP_LIMIT: f64 = 708.0;

/// `c += a * b`; `a` is `m x k`, `b` is `k x n`, `c` is `m x n`, row-major.
pub(crate) fn small_gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU features were just detected; bounds asserted above.
            unsafe { avx512::gemm_acc(m, k, n, a, b, c) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { avx::gemm_acc(m, k, n, a, b, c) };
            return;
        }
    }
    scalar_acc(0, m, 0, n, k, n, a, b, c);
}

/// Scalar `c += a * b` over rows `i0..i1` and columns `j0..j1`.
#[allow(clippy::too_many_arguments)]
fn scalar_acc(i0: usize, i1: usize, j0: usize, j1: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in i0..i1 {
        for p in 0..k {
            let s = a[i * k + p];
            for j in j0..j1 {
                c[i * n + j] += s * b[p * n + j];
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use std::arch::x86_64::*;

    use super::EXP_LIMIT;

    const NR: usize = 8;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    /// 1.5 * 2^52: adding it leaves an integral double's value in the low mantissa bits.
    const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

    /// `exp(x)` for `|x| <= 708`: `x = n ln2 + r`, degree-12 Taylor series in
    /// `r` (truncation below 2e-16 relative), scaled by `2^n` through the
    /// exponent bits.
    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn exp_pd(x: __m256d) -> __m256d {
        let x = _mm256_max_pd(_mm256_min_pd(x, _mm256_set1_pd(EXP_LIMIT)), _mm256_set1_pd(-EXP_LIMIT));
        let n = _mm256_round_pd::<{ _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC }>(_mm256_mul_pd(
            x,
            _mm256_set1_pd(std::f64::consts::LOG2_E),
        ));
        let r = _mm256_fnmadd_pd(n, _mm256_set1_pd(LN2_HI), x);
        let r = _mm256_fnmadd_pd(n, _mm256_set1_pd(LN2_LO), r);
        let mut p = _mm256_set1_pd(INV_FACT[12]);
        for &c in INV_FACT[..12].iter().rev() {
            p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c));
        }
        let magic = _mm256_set1_pd(ROUND_MAGIC);
        let ni = _mm256_sub_epi64(
            _mm256_castpd_si256(_mm256_add_pd(n, magic)),
            _mm256_castpd_si256(magic),
        );
        let scale = _mm256_castsi256_pd(_mm256_slli_epi64::<52>(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023))));
        _mm256_mul_pd(p, scale)
    }

    const INV_FACT: [f64; 13] = {
        let mut t = [1.0; 13];
        let mut i = 1;
        while i < 13 {
            t[i] = t[i - 1] / i as f64;
            i += 1;
        }
        t
    };

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn sigmoid_pd(x: __m256d) -> __m256d {
        let one = _mm256_set1_pd(1.0);
        let e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), x));
        _mm256_div_pd(one, _mm256_add_pd(one, e))
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn sigmoid_inplace(v: &mut [f64]) {
        let mut chunks = v.chunks_exact_mut(4);
        for c in &mut chunks {
            let x = _mm256_loadu_pd(c.as_ptr());
            _mm256_storeu_pd(c.as_mut_ptr(), sigmoid_pd(x));
        }
        for x in chunks.into_remainder() {
            *x = super::scalar_sigmoid(*x);
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn tanh_inplace(v: &mut [f64]) {
        let two = _mm256_set1_pd(2.0);
        let one = _mm256_set1_pd(1.0);
        let mut chunks = v.chunks_exact_mut(4);
        for c in &mut chunks {
            let x = _mm256_loadu_pd(c.as_ptr());
            let s = sigmoid_pd(_mm256_mul_pd(two, x));
            _mm256_storeu_pd(c.as_mut_ptr(), _mm256_fmsub_pd(two, s, one));
        }
        for x in chunks.into_remainder() {
            *x = 2.0 * super::scalar_sigmoid(2.0 * *x) - 1.0;
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        let mut i = 0;
        while i < m {
            let rows = (m - i).min(4);
            match rows {
                4 => block::<4>(i, k, n, a, b, c),
                3 => block::<3>(i, k, n, a, b, c),
                2 => block::<2>(i, k, n, a, b, c),
                _ => block::<1>(i, k, n, a, b, c),
            }
            i += rows;
        }
    }

    /// Rows `i0..i0+MR`, all columns: full 8-wide column panels in registers,
    /// the ragged tail in scalar code.
    #[target_feature(enable = "avx2,fma")]
    unsafe fn block<const MR: usize>(i0: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        let ap = a.as_ptr();
        let bp = b.as_ptr();
        let cp = c.as_mut_ptr();
        let panels = n / NR;
        for jp in 0..panels {
            let j = jp * NR;
            let mut acc = [[_mm256_setzero_pd(); 2]; MR];
            for p in 0..k {
                let b0 = _mm256_loadu_pd(bp.add(p * n + j));
                let b1 = _mm256_loadu_pd(bp.add(p * n + j + 4));
                for (r, acc_r) in acc.iter_mut().enumerate() {
                    let av = _mm256_broadcast_sd(&*ap.add((i0 + r) * k + p));
                    acc_r[0] = _mm256_fmadd_pd(av, b0, acc_r[0]);
                    acc_r[1] = _mm256_fmadd_pd(av, b1, acc_r[1]);
                }
            }
            for (r, acc_r) in acc.iter().enumerate() {
                let dst = cp.add((i0 + r) * n + j);
                _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), acc_r[0]));
                let dst = dst.add(4);
                _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), acc_r[1]));
            }
        }
        let mut j = panels * NR;
        if j + 4 <= n {
            let mut acc = [_mm256_setzero_pd(); MR];
            for p in 0..k {
                let b0 = _mm256_loadu_pd(bp.add(p * n + j));
                for (r, acc_r) in acc.iter_mut().enumerate() {
                    let av = _mm256_broadcast_sd(&*ap.add((i0 + r) * k + p));
                    *acc_r = _mm256_fmadd_pd(av, b0, *acc_r);
                }
            }
            for (r, acc_r) in acc.iter().enumerate() {
                let dst = cp.add((i0 + r) * n + j);
                _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), *acc_r));
            }
            j += 4;
        }
        if j < n {
            super::scalar_acc(i0, i0 + MR, j, n, k, n, a, b, c);
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx512 {
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        let mut i = 0;
        while i < m {
            let rows = (m - i).min(4);
            match rows {
                4 => block::<4>(i, k, n, a, b, c),
                3 => block::<3>(i, k, n, a, b, c),
                2 => block::<2>(i, k, n, a, b, c),
                _ => block::<1>(i, k, n, a, b, c),
            }
            i += rows;
        }
    }

    fn lane_mask(remaining: usize) -> __mmask8 {
        if remaining >= 8 {
            0xff
        } else {
            ((1u16 << remaining) - 1) as __mmask8
        }
    }

    /// Rows `i0..i0+MR` in 16-column panels; ragged columns use masked lanes.
    #[target_feature(enable = "avx512f")]
    unsafe fn block<const MR: usize>(i0: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        let ap = a.as_ptr();
        let bp = b.as_ptr();
        let cp = c.as_mut_ptr();
        let mut j = 0;
        while j < n {
            let m0 = lane_mask(n - j);
            let m1 = lane_mask((n - j).saturating_sub(8));
            let mut acc = [[_mm512_setzero_pd(); 2]; MR];
            for p in 0..k {
                let row = bp.add(p * n + j);
                let b0 = _mm512_maskz_loadu_pd(m0, row);
                let b1 = _mm512_maskz_loadu_pd(m1, row.add(8));
                for (r, acc_r) in acc.iter_mut().enumerate() {
                    let av = _mm512_set1_pd(*ap.add((i0 + r) * k + p));
                    acc_r[0] = _mm512_fmadd_pd(av, b0, acc_r[0]);
                    acc_r[1] = _mm512_fmadd_pd(av, b1, acc_r[1]);
                }
            }
            for (r, acc_r) in acc.iter().enumerate() {
                let dst = cp.add((i0 + r) * n + j);
                _mm512_mask_storeu_pd(dst, m0, _mm512_add_pd(_mm512_maskz_loadu_pd(m0, dst), acc_r[0]));
                let dst = dst.add(8);
                _mm512_mask_storeu_pd(dst, m1, _mm512_add_pd(_mm512_maskz_loadu_pd(m1, dst), acc_r[1]));
            }
            j += 16;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_nonlinearities_match_std() {
        let xs: Vec<f64> = (-4000..=4000)
            .map(|i| i as f64 * 0.01)
            .chain([1e-12, -1e-12, 0.0, 750.0, -750.0, 1e300, -1e300])
            .collect();
        let mut s = xs.clone();
        sigmoid_inplace(&mut s);
        let mut t = xs.clone();
        tanh_inplace(&mut t);
        for ((x, s), t) in xs.iter().zip(&s).zip(&t) {
            let want = 1.0 / (1.0 + (-x).exp());
            assert!((s - want).abs() <= 1e-15 + 1e-14 * want, "sigmoid({x}) = {s}, want {want}");
            assert!((t - x.tanh()).abs() <= 4e-16 + 1e-14 * x.tanh().abs(), "tanh({x}) = {t}");
        }
    }

    #[test]
    fn kernel_matches_naive_for_ragged_shapes() {
        for (m, k, n) in [(1, 1, 1), (3, 19, 11), (6, 100, 400), (5, 7, 16), (9, 4, 23)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.7).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.3).cos()).collect();
            let mut c = vec![0.5; m * n];
            small_gemm_acc(m, k, n, &a, &b, &mut c);
            for i in 0..m {
                for j in 0..n {
                    let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                    assert!((c[i * n + j] - 0.5 - want).abs() < 1e-11, "{m}x{k}x{n}");
                }
            }
        }
    }
}
