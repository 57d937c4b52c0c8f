//! T-SVD of a rank-deficient tensor and its Moore-Penrose inverse.

use trtls::algebra::{spectral_singular_values, tpinv, tprod, tsvd, ttranspose};
use trtls::DenseTensor3;

fn main() -> trtls::Result<()> {
    // The third column copies the first, so every spectral slice has rank 2.
    let a = DenseTensor3::from_fn(4, 3, 5, |i, j, k| {
        let j = if j == 2 { 0 } else { j };
        ((3 * i + 5 * j + 7 * k) % 11) as f64 / 11.0 - 0.5
    });

    let f = tsvd(&a)?;
    let back = tprod(&tprod(&f.u, &f.s)?, &ttranspose(&f.v))?;
    println!("reconstruction error: {:.2e}", (&back - &a).fnorm());
    for (i, sv) in spectral_singular_values(&a).iter().enumerate() {
        let shown: Vec<String> = sv.iter().map(|v| format!("{v:.3e}")).collect();
        println!("slice {i}: {}", shown.join(" "));
    }

    let pinv = tpinv(&a)?;
    let apa = tprod(&tprod(&a, &pinv)?, &a)?;
    let pap = tprod(&tprod(&pinv, &a)?, &pinv)?;
    println!("A*P*A - A: {:.2e}", (&apa - &a).fnorm());
    println!("P*A*P - P: {:.2e}", (&pap - &pinv).fnorm());
    Ok(())
}
