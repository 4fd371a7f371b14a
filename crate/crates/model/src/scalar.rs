//! Floating-point element type shared by every kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::config::Dtype;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;
    const BYTES: usize;

    /// `C <- alpha * A B + beta * C` over strided row/column views.
    /// When `beta == 0`, `C` is not read.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], rsa: usize, csa: usize, b: &[Self], rsb: usize, csb: usize, beta: Self, c: &mut [Self], rsc: usize, csc: usize);

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Elementwise exponential used by the activation kernels. The f32
    /// version is a branch-free polynomial that vectorizes; f64 defers to
    /// the standard library.
    fn exp_kernel(self) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// Range-reduced degree-6 polynomial exp (Cephes coefficients), within a
/// few ulp over the clamped domain. Rounds with the 1.5 * 2^23 shift trick
/// so the whole body stays branch-free.
#[inline(always)]
fn expf_poly(x: f32) -> f32 {
    const SHIFT: f32 = 12_582_912.0;
    let x = x.clamp(-87.3, 88.3);
    let biased = x * std::f32::consts::LOG2_E + SHIFT;
    let fx = biased - SHIFT;
    let n = biased.to_bits() as i32 - SHIFT.to_bits() as i32;
    let r = x - fx * 0.693_359_4 + fx * 2.121_944_4e-4;
    let mut y = 1.987_569_2e-4f32;
    y = y * r + 1.398_2e-3;
    y = y * r + 8.333_452e-3;
    y = y * r + 4.166_579_6e-2;
    y = y * r + 1.666_666_5e-1;
    y = y * r + 5e-1;
    let y = y * r * r + r + 1.0;
    y * f32::from_bits(((n + 127) as u32) << 23)
}

macro_rules! impl_scalar {
    ($t:ty, $dtype:expr, $gemm:path, $exp:path) => {
        impl Scalar for $t {
            const DTYPE: Dtype = $dtype;
            const BYTES: usize = std::mem::size_of::<$t>();

            fn gemm_raw(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], rsa: usize, csa: usize, b: &[Self], rsb: usize, csb: usize, beta: Self, c: &mut [Self], rsc: usize, csc: usize) {
                assert!(span(m, k, rsa, csa) <= a.len(), "gemm: A view out of bounds");
                assert!(span(k, n, rsb, csb) <= b.len(), "gemm: B view out of bounds");
                assert!(span(m, n, rsc, csc) <= c.len(), "gemm: C view out of bounds");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the three views were bounds-checked above and `c`
                // is uniquely borrowed.
                unsafe {
                    $gemm(
                        m, k, n, alpha,
                        a.as_ptr(), rsa as isize, csa as isize,
                        b.as_ptr(), rsb as isize, csb as isize,
                        beta,
                        c.as_mut_ptr(), rsc as isize, csc as isize,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("exact element width"))
            }

            #[inline(always)]
            fn exp_kernel(self) -> Self {
                $exp(self)
            }
        }
    };
}

impl_scalar!(f32, Dtype::F32, matrixmultiply::sgemm, expf_poly);
impl_scalar!(f64, Dtype::F64, matrixmultiply::dgemm, f64::exp);

/// Row-major `C[m,n] (+)= A[m,k] B[k,n]`, with optional transposes expressed
/// through strides.
pub struct Mat<'a, S> {
    pub data: &'a [S],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, S> Mat<'a, S> {
    /// Row-major matrix with `cols` columns.
    pub fn rows(data: &'a [S], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn t(data: &'a [S], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }

    pub fn strided(data: &'a [S], rs: usize, cs: usize) -> Self {
        Self { data, rs, cs }
    }
}

/// `c[m, n] = alpha * a b + beta * c` with `c` row-major, row stride `rsc`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<S: Scalar>(m: usize, k: usize, n: usize, alpha: S, a: Mat<'_, S>, b: Mat<'_, S>, beta: S, c: &mut [S], rsc: usize) {
    S::gemm_raw(m, k, n, alpha, a.data, a.rs, a.cs, b.data, b.rs, b.cs, beta, c, rsc, 1);
}
