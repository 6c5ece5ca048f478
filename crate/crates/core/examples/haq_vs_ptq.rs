//! Programs random 100x100 weight matrices with hardware-aware quantization
//! and with plain post-training quantization, then sweeps the significance
//! ratio at two write-noise levels.

use memfield::device::NoiseModel;
use memfield::experiments::{best_ratio, matmul_bench, ratio_sweep, MatmulSpec};

fn main() -> memfield::Result<()> {
    let spec = MatmulSpec { seeds: 5, ..MatmulSpec::default() };
    let noise = NoiseModel::fitted();
    let rows = matmul_bench(&spec, &noise, 0)?;
    println!("{:>5} {:>10} {:>10}", "seed", "haq", "ptq");
    for r in &rows {
        println!("{:>5} {:>10.4} {:>10.4}", r.seed, r.haq_rmse, r.ptq_rmse);
    }
    let haq = rows.iter().map(|r| r.haq_rmse).sum::<f64>() / rows.len() as f64;
    let ptq = rows.iter().map(|r| r.ptq_rmse).sum::<f64>() / rows.len() as f64;
    println!("mean rmse: haq {haq:.4}, ptq {ptq:.4} ({:.1}x)", ptq / haq);

    let ratios: Vec<f64> = (11..=20).map(|k| k as f64 / 10.0).collect();
    for wn in [0.05, 0.3] {
        let n = noise.with_write_noise(wn);
        let sweep = ratio_sweep(&spec, &ratios, &n, 100)?;
        println!("write noise {wn}: best s = {:?}", best_ratio(&sweep));
    }
    Ok(())
}
