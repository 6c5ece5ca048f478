//! Builds a Gaussian encoder from a formed crossbar and compares it with the
//! basic and positional encodings. It also checks the fixed-point CORDIC
//! against `f64::sin_cos`.

use memfield::device::NoiseModel;
use memfield::encoder::{cordic_sincos, Encoder, EncoderConfig, EncodingMode};

fn main() -> memfield::Result<()> {
    let noise = NoiseModel::fitted();
    let gauss = Encoder::new(EncoderConfig::new(EncodingMode::Gaussian, 2, 256).with_sigma(4.0), &noise)?;
    let b = &gauss.projection().expect("gaussian mode has a projection").b;
    let n = b.len() as f64;
    let mean = b.sum() / n;
    let std = (b.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
    println!("projection entries: mean {mean:+.4}, std {std:.4} (sigma 4)");

    let x = [0.25, 0.75];
    for (name, cfg) in [
        ("basic", EncoderConfig::new(EncodingMode::Basic, 2, 1)),
        ("positional", EncoderConfig::new(EncodingMode::Positional, 2, 4)),
        ("gaussian", EncoderConfig::new(EncodingMode::Gaussian, 2, 4).with_sigma(4.0)),
    ] {
        let e = Encoder::new(cfg, &noise)?;
        let f = e.encode(&x)?;
        let shown: Vec<String> = f.iter().take(6).map(|v| format!("{v:+.3}")).collect();
        println!("{name:>10}: {} features, {} ...", f.len(), shown.join(" "));
    }

    let worst = (0..10_000)
        .map(|k| {
            let a = -50.0 + k as f64 * 0.01;
            let (s, c) = cordic_sincos(a, 24);
            let (s0, c0) = a.sin_cos();
            (s - s0).abs().max((c - c0).abs())
        })
        .fold(0.0, f64::max);
    println!("cordic (24 iterations) worst error on [-50, 50]: {worst:.2e}");
    Ok(())
}
