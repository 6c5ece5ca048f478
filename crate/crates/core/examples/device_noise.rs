//! Forms a 128x128 crossbar, compares the conductance spread with the fitted
//! write distribution, then shows how write noise degrades a programmed
//! vector-matrix product.

use memfield::device::{form_random_matrix, vmm, CellState, ConverterSpec, NoiseModel};
use memfield::rng;

fn main() -> memfield::Result<()> {
    let noise = NoiseModel::fitted();
    let mut r = rng::stream(7, 0);
    let array = form_random_matrix(128, 128, &noise, &mut r)?;
    let g = array.conductances();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let std = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64).sqrt();
    let (m, s) = noise.write_distribution(CellState::Lrs)?;
    println!("formed {} cells: {mean:.2} +/- {std:.2} uS (model {m:.2} +/- {s:.2})", g.len());

    let x: Vec<f64> = (0..128).map(|i| (i as f64 / 127.0).sqrt()).collect();
    let exact = vmm(&array, &x, &ConverterSpec::ideal(), 0.0, &NoiseModel::noiseless(), &mut r)?;
    println!("{:>12} {:>14}", "read noise", "relative error");
    for rel in [0.0, 0.01, 0.03, 0.1] {
        let n = noise.with_read_noise(rel);
        let y = vmm(&array, &x, &ConverterSpec::ideal(), 0.0, &n, &mut r)?;
        let err = y.iter().zip(&exact).map(|(a, b)| ((a - b) / b).powi(2)).sum::<f64>() / y.len() as f64;
        println!("{rel:>12.2} {:>14.2e}", err.sqrt());
    }
    Ok(())
}
