//! Legendre Memory Unit state-space mathematics and the recurrent cell.

use std::fmt;
use std::str::FromStr;

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::linalg::{expm, matmul, solve};
use crate::tensor::Tensor;

/// Continuous delay-line system `(A, B)` of order `d` over a window of
/// `theta` steps. `B` is returned as a `[d, 1]` column.
///
/// `A[i][j] = (2i+1)/θ · (−1 if i < j, else (−1)^(i−j+1))` and
/// `B[i] = (2i+1)(−1)^i / θ`.
pub fn lmu_matrices(d: usize, theta: f64) -> Result<(Tensor, Tensor)> {
    if d == 0 || !(theta > 0.0) {
        return Err(Error::invalid(format!("lmu order must be >= 1 and theta > 0 (got d={d}, theta={theta})")));
    }
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        let scale = (2 * i + 1) as f64 / theta;
        for j in 0..d {
            let sign = if i < j || (i - j) % 2 == 0 { -1.0 } else { 1.0 };
            a[i * d + j] = scale * sign;
        }
        b[i] = scale * if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    Ok((Tensor::new([d, d], a)?, Tensor::new([d, 1], b)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Discretization {
    /// Zero-order hold with unit step.
    #[default]
    Zoh,
    /// Forward Euler with unit step.
    Euler,
}

impl FromStr for Discretization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zoh" => Ok(Discretization::Zoh),
            "euler" => Ok(Discretization::Euler),
            other => Err(Error::invalid(format!("unknown discretization `{other}`"))),
        }
    }
}

impl fmt::Display for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Discretization::Zoh => "zoh",
            Discretization::Euler => "euler",
        })
    }
}

/// Discrete-time `(Abar, Bbar)` for a unit step.
///
/// Under ZOH, `Bbar = A⁻¹(Abar − I)B`; when `A` is singular the integral
/// `∫₀¹ expm(As) ds · B` is read off the exponential of the block matrix
/// `[[A, B], [0, 0]]`.
pub fn discretize(a: &Tensor, b: &Tensor, method: Discretization) -> Result<(Tensor, Tensor)> {
    let n = match *a.shape() {
        [r, c] if r == c => r,
        _ => return Err(Error::shape("discretize", a.shape(), &[0, 0])),
    };
    let m = match *b.shape() {
        [r, m] if r == n => m,
        [r] if r == n => 1,
        _ => return Err(Error::shape("discretize", a.shape(), b.shape())),
    };
    let b = b.clone().reshape([n, m])?;
    match method {
        Discretization::Euler => {
            let mut abar = Tensor::identity(n);
            abar.data_mut().iter_mut().zip(a.data()).for_each(|(x, y)| *x += y);
            Ok((abar, b))
        }
        Discretization::Zoh => {
            let abar = expm(a)?;
            let mut shifted = abar.clone();
            for i in 0..n {
                shifted.data_mut()[i * n + i] -= 1.0;
            }
            match solve(a, &matmul(&shifted, &b)?) {
                Ok(bbar) => Ok((abar, bbar)),
                Err(Error::Singular) => Ok((abar, zoh_input_by_block(a, &b)?)),
                Err(e) => Err(e),
            }
        }
    }
}

fn zoh_input_by_block(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, m) = (a.shape()[0], b.shape()[1]);
    let size = n + m;
    let mut block = vec![0.0; size * size];
    for i in 0..n {
        block[i * size..i * size + n].copy_from_slice(&a.data()[i * n..(i + 1) * n]);
        block[i * size + n..i * size + size].copy_from_slice(&b.data()[i * m..(i + 1) * m]);
    }
    let e = expm(&Tensor::new([size, size], block)?)?;
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        out.extend_from_slice(&e.data()[i * size + n..i * size + size]);
    }
    Tensor::new([n, m], out)
}

/// `P̃_0(x) … P̃_{d−1}(x)`, shifted Legendre polynomials on `[0, 1]`.
pub fn shifted_legendre(d: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(d);
    let y = 2.0 * x - 1.0;
    for i in 0..d {
        let v = match i {
            0 => 1.0,
            1 => y,
            _ => {
                let k = (i - 1) as f64;
                ((2.0 * k + 1.0) * y * p[i - 1] - k * p[i - 2]) / (k + 1.0)
            }
        };
        p.push(v);
    }
    p
}

/// Estimate of the memory's input `r·θ` steps ago: `Σ P̃_i(r)·m_i`.
/// `r = 0` is the newest input and `r = 1` the oldest in the window.
pub fn delay_reconstruct(m: &[f64], r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("lag fraction {r} outside [0, 1]")));
    }
    Ok(shifted_legendre(m.len(), r)
        .iter()
        .zip(m)
        .map(|(p, v)| p * v)
        .sum())
}

/// The trainable part of an LMU cell. `x` has `f` features, the hidden
/// state `n` units and the memory `d` dimensions.
#[derive(Clone, Copy, Debug)]
pub struct LmuWeights<'t> {
    /// `[f, 1]`
    pub e_x: Var<'t>,
    /// `[n, 1]`
    pub e_h: Var<'t>,
    /// `[d, 1]`
    pub e_m: Var<'t>,
    /// `[f, n]`
    pub w_x: Var<'t>,
    /// `[n, n]`
    pub w_h: Var<'t>,
    /// `[d, n]`
    pub w_m: Var<'t>,
}

/// One LMU update on a batch of row vectors.
///
/// `u = x·e_x + h·e_h + m·e_m`, `m' = m·Abarᵀ + u·Bbarᵀ`,
/// `h' = tanh(x·W_x + h·W_h + m'·W_m)`. `abar_t` is `Abarᵀ` (`[d, d]`) and
/// `bbar_t` is `Bbarᵀ` (`[1, d]`).
pub fn lmu_step<'t>(
    abar_t: Var<'t>,
    bbar_t: Var<'t>,
    w: &LmuWeights<'t>,
    x: Var<'t>,
    h: Var<'t>,
    m: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let u = x.matmul(w.e_x)?.add(h.matmul(w.e_h)?)?.add(m.matmul(w.e_m)?)?;
    let m_next = m.matmul(abar_t)?.add(u.matmul(bbar_t)?)?;
    let h_next = x
        .matmul(w.w_x)?
        .add(h.matmul(w.w_h)?)?
        .add(m_next.matmul(w.w_m)?)?
        .tanh();
    Ok((h_next, m_next))
}
