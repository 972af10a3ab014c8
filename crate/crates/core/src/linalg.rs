//! Small dense linear algebra on rank-2 tensors: GEMM kernels, LU solves and
//! the matrix exponential.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `out[m,n] += a[m,k] · b[k,n]`
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] · b[n,k]ᵀ`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[m,n] += a[k,m]ᵀ · b[k,n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, t.shape(), &[0, 0])),
    }
}

fn square(op: &'static str, t: &Tensor) -> Result<usize> {
    let (r, c) = dims2(op, t)?;
    if r != c {
        return Err(Error::shape(op, t.shape(), &[r, r]));
    }
    Ok(r)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = dims2("matmul", a)?;
    let (k2, n) = dims2("matmul", b)?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm_nn(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new([m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = dims2("transpose", a)?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data()[i * c + j];
        }
    }
    Tensor::new([c, r], out)
}

fn axpy(alpha: f64, x: &Tensor, y: &mut Tensor) {
    y.data_mut()
        .iter_mut()
        .zip(x.data())
        .for_each(|(yv, xv)| *yv += alpha * xv);
}

/// Maximum absolute column sum.
pub fn norm_1(a: &Tensor) -> Result<f64> {
    let (r, c) = dims2("norm_1", a)?;
    Ok((0..c)
        .map(|j| (0..r).map(|i| a.data()[i * c + j].abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// LU factorization with partial pivoting, stored compactly.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Tensor) -> Result<Lu> {
        let n = square("lu", a)?;
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Singular);
            }
            if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let p = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / p;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= factor * lu[col * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    fn solve(&self, b: &Tensor) -> Result<Tensor> {
        let n = self.n;
        let (rows, m) = dims2("solve", b)?;
        if rows != n {
            return Err(Error::shape("solve", &[n, n], b.shape()));
        }
        let mut x = vec![0.0; n * m];
        for (i, &src) in self.perm.iter().enumerate() {
            x[i * m..(i + 1) * m].copy_from_slice(&b.data()[src * m..(src + 1) * m]);
        }
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    for j in 0..m {
                        x[i * m + j] -= l * x[k * m + j];
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    for j in 0..m {
                        x[i * m + j] -= u * x[k * m + j];
                    }
                }
            }
            let d = self.lu[i * n + i];
            for j in 0..m {
                x[i * m + j] /= d;
            }
        }
        Tensor::new([n, m], x)
    }
}

/// Solves `a · x = b` for `x`, where `b` is `[n, m]`.
pub fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Lu::factor(a)?.solve(b)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &Tensor) -> Result<Tensor> {
    let n = square("expm", a)?;
    if !a.is_finite() {
        return Err(Error::invalid("expm of a matrix with non-finite entries"));
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = norm_1(a)?;
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.map(|v| v / 2f64.powi(squarings));
    let ident = Tensor::identity(n);
    let a2 = matmul(&scaled, &scaled)?;
    let a4 = matmul(&a2, &a2)?;
    let a6 = matmul(&a4, &a2)?;
    let b = &PADE13;

    let mut inner_u = a6.map(|v| b[13] * v);
    axpy(b[11], &a4, &mut inner_u);
    axpy(b[9], &a2, &mut inner_u);
    let mut u = matmul(&a6, &inner_u)?;
    axpy(b[7], &a6, &mut u);
    axpy(b[5], &a4, &mut u);
    axpy(b[3], &a2, &mut u);
    axpy(b[1], &ident, &mut u);
    let u = matmul(&scaled, &u)?;

    let mut inner_v = a6.map(|v| b[12] * v);
    axpy(b[10], &a4, &mut inner_v);
    axpy(b[8], &a2, &mut inner_v);
    let mut v = matmul(&a6, &inner_v)?;
    axpy(b[6], &a6, &mut v);
    axpy(b[4], &a4, &mut v);
    axpy(b[2], &a2, &mut v);
    axpy(b[0], &ident, &mut v);

    let mut denom = v.clone();
    axpy(-1.0, &u, &mut denom);
    let mut numer = v;
    axpy(1.0, &u, &mut numer);
    let mut result = solve(&denom, &numer)?;
    for _ in 0..squarings {
        result = matmul(&result, &result)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Taylor series, summed term by term.
    fn taylor_expm(a: &Tensor, terms: usize) -> Tensor {
        let n = a.shape()[0];
        let mut sum = Tensor::identity(n);
        let mut term = Tensor::identity(n);
        for k in 1..terms {
            term = matmul(&term, a).unwrap().map(|v| v / k as f64);
            axpy(1.0, &term, &mut sum);
        }
        sum
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> Tensor {
        let raw = Tensor::new([n, n], (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let scale = max_norm / norm_1(&raw).unwrap();
        let shrink = rng.random_range(0.2..1.0);
        raw.map(|v| v * scale * shrink)
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&Tensor::zeros([5, 5])).unwrap();
        assert_eq!(e, Tensor::identity(5));
    }

    #[test]
    fn expm_diagonal() {
        let a = Tensor::new([2, 2], vec![0.7, 0.0, 0.0, -2.3]).unwrap();
        let e = expm(&a).unwrap();
        let want = Tensor::new([2, 2], vec![0.7f64.exp(), 0.0, 0.0, (-2.3f64).exp()]).unwrap();
        assert!(e.max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 4, 1.0);
            let diff = expm(&a).unwrap().max_abs_diff(&taylor_expm(&a, 30)).unwrap();
            assert!(diff < 1e-10, "diff {diff}");
        }
    }

    #[test]
    fn expm_large_norm_matches_squared_series() {
        // exp(A) = exp(A/16)^16, with the small factor from the series.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 5, 10.0);
            let mut reference = taylor_expm(&a.map(|v| v / 16.0), 40);
            for _ in 0..4 {
                reference = matmul(&reference, &reference).unwrap();
            }
            let got = expm(&a).unwrap();
            let scale = norm_1(&reference).unwrap().max(1.0);
            let diff = got.max_abs_diff(&reference).unwrap() / scale;
            assert!(diff < 1e-10, "diff {diff}");
        }
    }

    #[test]
    fn expm_inverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..8 {
            let a = random_matrix(&mut rng, n, 2.0);
            let prod = matmul(&expm(&a).unwrap(), &expm(&a.map(|v| -v)).unwrap()).unwrap();
            assert!(prod.max_abs_diff(&Tensor::identity(n)).unwrap() < 1e-8);
        }
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(
            expm(&Tensor::zeros([2, 3])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn solve_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 6, 3.0);
        let a = {
            let mut a = a;
            for i in 0..6 {
                a.data_mut()[i * 6 + i] += 2.0;
            }
            a
        };
        let x = Tensor::new([6, 2], (0..12).map(|i| i as f64 - 4.0).collect()).unwrap();
        let b = matmul(&a, &x).unwrap();
        assert!(solve(&a, &b).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
        assert!(matches!(solve(&Tensor::zeros([3, 3]), &Tensor::zeros([3, 1])), Err(Error::Singular)));
    }

    #[test]
    fn gemm_variants_agree() {
        let a = Tensor::new([2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new([3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let ab = matmul(&a, &b).unwrap();
        assert_eq!(ab.data(), &[58., 64., 139., 154.]);
        let bt = transpose(&b).unwrap();
        let mut nt = vec![0.0; 4];
        gemm_nt(a.data(), bt.data(), &mut nt, 2, 3, 2);
        assert_eq!(nt, ab.data());
        let at = transpose(&a).unwrap();
        let mut tn = vec![0.0; 4];
        gemm_tn(at.data(), b.data(), &mut tn, 2, 3, 2);
        assert_eq!(tn, ab.data());
    }
}
