//! Inverse square root of d1^2 + d2^2 + 1 by the spectral and contour routes.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use smallvec::smallvec;

use nctorus::power::{power_contour, power_spectral, ContourOptions};
use nctorus::quant::quantize;
use nctorus::symbol::ClassicalSymbol;
use nctorus::{NcElement, ThetaMatrix};

fn main() -> nctorus::Result<()> {
    let theta = Arc::new(ThetaMatrix::two(0.25));
    // d1^2 + d2^2 + 1
    let mut terms = BTreeMap::new();
    terms.insert(smallvec![2, 0], NcElement::one(&theta));
    terms.insert(smallvec![0, 2], NcElement::one(&theta));
    terms.insert(smallvec![0, 0], NcElement::one(&theta));
    let p = ClassicalSymbol::differential(&theta, &terms)?;

    let t = quantize(&p, 4)?;
    let z = Complex64::new(-0.5, 0.0);
    let a = power_spectral(&t, z)?;
    let b = power_contour(&t, z, &ContourOptions::default())?;
    println!("{:e}", (a.matrix() - b.op.matrix()).norm());
    Ok(())
}
