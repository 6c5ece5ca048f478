//! Image-quality metrics and the metrics report.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::dim(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Mean squared difference over all pixels and channels.
pub fn mse(reference: &Image, candidate: &Image) -> Result<f64> {
    check(reference, candidate)?;
    Ok(mse_values(&reference.data, &candidate.data))
}

pub fn mse_values(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// `10·log10(MAX²/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (max_value * max_value / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(reference: &Image, candidate: &Image, max_value: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, candidate)?, max_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsimConfig {
    pub max_value: f64,
    pub window: usize,
    pub stride: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl SsimConfig {
    /// `C1 = (0.01·MAX)²`, `C2 = (0.03·MAX)²`, `C3 = C2/2`, 8×8 windows, stride 1.
    pub fn standard(max_value: f64) -> Self {
        let c2 = (0.03 * max_value).powi(2);
        Self { max_value, window: 8, stride: 1, c1: (0.01 * max_value).powi(2), c2, c3: c2 / 2.0 }
    }
}

/// Luminance, contrast and structure terms of one window pair.
pub fn ssim_components(x: &[f64], y: &[f64], cfg: &SsimConfig) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cov += (a - mx) * (b - my);
    }
    let (sx, sy, sxy) = ((vx / n).sqrt(), (vy / n).sqrt(), cov / n);
    let l = (2.0 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1);
    let c = (2.0 * sx * sy + cfg.c2) / (sx * sx + sy * sy + cfg.c2);
    let s = (sxy + cfg.c3) / (sx * sy + cfg.c3);
    (l, c, s)
}

/// Mean of `l·c·s` over all windows, averaged over channels.
pub fn ssim(reference: &Image, candidate: &Image, cfg: &SsimConfig) -> Result<f64> {
    check(reference, candidate)?;
    let w = cfg.window;
    if w == 0 || cfg.stride == 0 || w > reference.width || w > reference.height {
        return Err(Error::config(format!(
            "SSIM window {w} does not fit a {}x{} image",
            reference.width, reference.height
        )));
    }
    let mut total = 0.0;
    let mut xs = Vec::with_capacity(w * w);
    let mut ys = Vec::with_capacity(w * w);
    for ch in 0..reference.channels {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in (0..=reference.height - w).step_by(cfg.stride) {
            for x0 in (0..=reference.width - w).step_by(cfg.stride) {
                xs.clear();
                ys.clear();
                for y in y0..y0 + w {
                    for x in x0..x0 + w {
                        xs.push(reference.get(x, y, ch));
                        ys.push(candidate.get(x, y, ch));
                    }
                }
                let (l, c, s) = ssim_components(&xs, &ys, cfg);
                sum += l * c * s;
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / reference.channels as f64)
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub experiment_id: String,
    pub image_id: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub config_hash: String,
}

impl MetricsRow {
    pub fn evaluate(experiment_id: &str, image_id: &str, reference: &Image, candidate: &Image, config_hash: &str) -> Result<Self> {
        let m = mse(reference, candidate)?;
        let window = SsimConfig::standard(1.0).window.min(reference.width).min(reference.height);
        Ok(Self {
            experiment_id: experiment_id.into(),
            image_id: image_id.into(),
            mse: m,
            psnr_db: psnr_from_mse(m, 1.0),
            ssim: ssim(reference, candidate, &SsimConfig { window, ..SsimConfig::standard(1.0) })?,
            config_hash: config_hash.into(),
        })
    }
}

/// Serializes rows as CSV with the report header.
pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::data(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["experiment_id", "image_id", "mse", "psnr_db", "ssim", "config_hash"])
            .map_err(|e| Error::data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    crate::io::atomic_write(path, &metrics_csv(rows)?)
}
