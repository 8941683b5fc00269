//! Five-point stencils against a least-squares polynomial fit.

use denoiser_posterior::numdiff::{central_derivatives, polyfit_derivatives, PolyFitConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = |xs: &[f64]| Ok(xs.iter().map(|x| (0.3 + x).tanh()).collect::<Vec<_>>());
    let fd = central_derivatives(f, 3, 1e-2)?;
    let fit = polyfit_derivatives(f, &PolyFitConfig::default(), 3)?;
    let t = 0.3f64.tanh();
    let s2 = 1.0 - t * t;
    let exact = [s2, -2.0 * t * s2, -2.0 * s2 * (1.0 - 3.0 * t * t)];
    for (k, e) in exact.iter().enumerate() {
        println!(
            "f^({}) stencil {:+.10} fit {:+.10} exact {e:+.10}",
            k + 1,
            fd.derivatives[k],
            fit.derivatives[k],
        );
    }
    Ok(())
}
