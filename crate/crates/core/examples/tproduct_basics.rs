//! T-product, transpose, identity and inverse on a small tensor.

use trtls::algebra::{identity_tensor, tinv, tprod, ttranspose};
use trtls::DenseTensor3;

fn main() -> trtls::Result<()> {
    let a = DenseTensor3::from_fn(3, 3, 4, |i, j, k| if i == j && k == 0 { 4.0 } else { ((i + 2 * j + 3 * k) % 5) as f64 * 0.1 });
    let b = DenseTensor3::from_fn(3, 2, 4, |i, j, k| (i as f64 - j as f64) + 0.25 * k as f64);

    let fast = tprod(&a, &b)?;
    let slow = DenseTensor3::fold(&(a.bcirc()? * b.unfold()), a.rows(), a.depth())?;
    println!("T-product vs block-circulant product: {:.2e}", (&fast - &slow).fnorm());

    let lhs = ttranspose(&fast);
    let rhs = tprod(&ttranspose(&b), &ttranspose(&a))?;
    println!("(A*B)^T - B^T*A^T: {:.2e}", (&lhs - &rhs).fnorm());

    let inv = tinv(&a)?;
    println!("A*inv(A) - I: {:.2e}", (&tprod(&a, &inv)? - &identity_tensor(3, 4)).fnorm());
    Ok(())
}
