//! Dense symmetric positive-definite solves for the kernel models.
//!
//! The factorization works on a row-major `n × n` buffer of which only the
//! lower triangle is read and written. It is the hot loop of importance
//! sampling, so the inner products are blocked four rows by two columns and
//! an AVX2/FMA build of the same code is picked at runtime when available.

/// In-place lower Cholesky factor. Returns `false` when a pivot is not
/// strictly positive.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    assert_eq!(a.len(), n * n);
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were just detected.
        return unsafe { cholesky_avx2(a, n) };
    }
    cholesky_generic(a, n)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn cholesky_avx2(a: &mut [f64], n: usize) -> bool {
    cholesky_generic(a, n)
}

#[inline(always)]
fn cholesky_generic(a: &mut [f64], n: usize) -> bool {
    let mut rj = Vec::with_capacity(n);
    let mut r1 = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        rj.clear();
        rj.extend_from_slice(&a[j * n..j * n + j]);
        let d0 = a[j * n + j] - dot(&rj, &rj);
        if !(d0 > 0.0) {
            return false;
        }
        let l00 = d0.sqrt();
        a[j * n + j] = l00;
        if j + 1 == n {
            break;
        }
        r1.clear();
        r1.extend_from_slice(&a[(j + 1) * n..(j + 1) * n + j]);
        let l10 = (a[(j + 1) * n + j] - dot(&r1, &rj)) / l00;
        a[(j + 1) * n + j] = l10;
        let d1 = a[(j + 1) * n + j + 1] - dot(&r1, &r1) - l10 * l10;
        if !(d1 > 0.0) {
            return false;
        }
        let l11 = d1.sqrt();
        a[(j + 1) * n + j + 1] = l11;
        let (inv0, inv1) = (1.0 / l00, 1.0 / l11);

        let mut i = j + 2;
        while i + 4 <= n {
            let base = i * n;
            let s = {
                let blk = &a[base..base + 4 * n];
                dot_4x2(
                    &rj,
                    &r1,
                    [&blk[..j], &blk[n..n + j], &blk[2 * n..2 * n + j], &blk[3 * n..3 * n + j]],
                )
            };
            for (q, sq) in s.iter().enumerate() {
                let idx = base + q * n + j;
                let li0 = (a[idx] - sq[0]) * inv0;
                a[idx] = li0;
                a[idx + 1] = (a[idx + 1] - sq[1] - li0 * l10) * inv1;
            }
            i += 4;
        }
        while i < n {
            let idx = i * n + j;
            let (s0, s1) = {
                let ri = &a[i * n..i * n + j];
                (dot(ri, &rj), dot(ri, &r1))
            };
            let li0 = (a[idx] - s0) * inv0;
            a[idx] = li0;
            a[idx + 1] = (a[idx + 1] - s1 - li0 * l10) * inv1;
            i += 1;
        }
        j += 2;
    }
    true
}

#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// Inner products of four rows against two vectors in one pass.
#[inline(always)]
fn dot_4x2(u: &[f64], v: &[f64], rows: [&[f64]; 4]) -> [[f64; 2]; 4] {
    let m = u.len();
    let full = m / 4 * 4;
    let mut acc = [[[0.0f64; 4]; 2]; 4];
    let mut k = 0;
    while k < full {
        let uu: &[f64; 4] = u[k..k + 4].try_into().unwrap();
        let vv: &[f64; 4] = v[k..k + 4].try_into().unwrap();
        for q in 0..4 {
            let x: &[f64; 4] = rows[q][k..k + 4].try_into().unwrap();
            for l in 0..4 {
                acc[q][0][l] += uu[l] * x[l];
                acc[q][1][l] += vv[l] * x[l];
            }
        }
        k += 4;
    }
    let mut out = [[0.0; 2]; 4];
    for q in 0..4 {
        for c in 0..2 {
            let a = &acc[q][c];
            out[q][c] = (a[0] + a[1]) + (a[2] + a[3]);
        }
        for k in full..m {
            out[q][0] += u[k] * rows[q][k];
            out[q][1] += v[k] * rows[q][k];
        }
    }
    out
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_cholesky(a: &[f64], n: usize) -> Vec<f64> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                l[i * n + j] = if i == j {
                    (a[i * n + i] - s).sqrt()
                } else {
                    (a[i * n + j] - s) / l[j * n + j]
                };
            }
        }
        l
    }

    fn random_spd(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>() + if i == j { n as f64 } else { 0.0 };
            }
        }
        a
    }

    #[test]
    fn matches_textbook_factorization() {
        for n in [1, 2, 3, 5, 8, 13, 31] {
            let a = random_spd(n, n as u64);
            let expected = naive_cholesky(&a, n);
            let mut l = a.clone();
            assert!(cholesky_in_place(&mut l, n));
            for i in 0..n {
                for j in 0..=i {
                    assert!((l[i * n + j] - expected[i * n + j]).abs() < 1e-10, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn solve_recovers_rhs() {
        let n = 17;
        let a = random_spd(n, 99);
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 8.0).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|k| a[i * n + k] * x[k]).sum()).collect();
        let mut l = a.clone();
        assert!(cholesky_in_place(&mut l, n));
        cholesky_solve(&l, n, &mut b);
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }
}
