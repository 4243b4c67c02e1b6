//! B-scan images: 8-bit binary PGM and a 24-bit PPM in the 'hot' colormap.
//!
//! Images are `n_traces` wide and `n_samples` tall, time increasing
//! downwards. Amplitudes are min–max normalised to `[0, 1]` first.

use std::path::Path;

use log::warn;

use crate::error::Result;
use crate::forward::BScan;

use super::write_atomic;

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Black → red → yellow → white: red ramps on `[0, 3/8]`, green on
/// `[3/8, 6/8]`, blue on `[6/8, 1]`.
pub fn hot_colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    [
        to_byte(v / 0.375),
        to_byte((v - 0.375) / 0.375),
        to_byte((v - 0.75) / 0.25),
    ]
}

/// Min–max normalised samples, row-major by sample (image rows). A
/// zero-range scan maps to 0.5 everywhere.
pub fn normalized_rows(b: &BScan) -> Vec<f64> {
    let (lo, hi) = b
        .traces()
        .iter()
        .flat_map(|t| t.samples.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range <= 0.0 {
        warn!("B-scan has constant amplitude {lo}; rendering mid-grey");
    }
    let mut out = Vec::with_capacity(b.n_traces() * b.n_samples());
    for k in 0..b.n_samples() {
        for t in b.traces() {
            out.push(if range > 0.0 {
                (t.samples[k] - lo) / range
            } else {
                0.5
            });
        }
    }
    out
}

pub fn encode_pgm(b: &BScan) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", b.n_traces(), b.n_samples()).into_bytes();
    out.extend(normalized_rows(b).into_iter().map(to_byte));
    out
}

pub fn encode_ppm(b: &BScan) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", b.n_traces(), b.n_samples()).into_bytes();
    out.extend(normalized_rows(b).into_iter().flat_map(hot_colormap));
    out
}

/// Writes the grayscale image to `gray` and the hot-colormap image to `hot`.
pub fn render_bscan_image(b: &BScan, gray: &Path, hot: &Path) -> Result<()> {
    let pgm = encode_pgm(b);
    let ppm = encode_ppm(b);
    write_atomic(gray, |w| w.write_all(&pgm))?;
    write_atomic(hot, |w| w.write_all(&ppm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Pose;

    fn scan(rows: Vec<Vec<f64>>) -> BScan {
        let poses: Vec<Pose> = (0..rows.len())
            .map(|i| Pose::new([i as f64, 0.0, 0.0], 0.0, i as f64).unwrap())
            .collect();
        BScan::from_rows(rows, 1e-10, &poses).unwrap()
    }

    #[test]
    fn colormap_points() {
        assert_eq!(hot_colormap(0.0), [0, 0, 0]);
        assert_eq!(hot_colormap(1.0), [255, 255, 255]);
        assert_eq!(hot_colormap(0.375), [255, 0, 0]);
        assert_eq!(hot_colormap(0.75), [255, 255, 0]);
    }

    #[test]
    fn endpoints_in_image() {
        let b = scan(vec![vec![-2.0, 0.0], vec![1.0, 6.0]]);
        let ppm = encode_ppm(&b);
        let header = b"P6\n2 2\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        let px = &ppm[header.len()..];
        // Row 0: trace 0 holds the minimum.
        assert_eq!(&px[0..3], &[0, 0, 0]);
        // Row 1: trace 1 holds the maximum.
        assert_eq!(&px[9..12], &[255, 255, 255]);
        let pgm = encode_pgm(&b);
        assert_eq!(pgm.len(), b"P5\n2 2\n255\n".len() + 4);
    }

    #[test]
    fn constant_scan_is_mid_grey() {
        let b = scan(vec![vec![3.0; 4]; 2]);
        let pgm = encode_pgm(&b);
        assert!(pgm[pgm.len() - 8..].iter().all(|&p| p == 128));
    }

    #[test]
    fn deterministic_bytes() {
        let b = scan(vec![vec![0.1, 0.5, -0.3], vec![0.7, 0.2, 0.0]]);
        assert_eq!(encode_ppm(&b), encode_ppm(&b.clone()));
    }
}
