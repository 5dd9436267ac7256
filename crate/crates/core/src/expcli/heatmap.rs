//! Min-max normalized plain-text graymaps.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_VALUE: u32 = 255;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in `0..=255`.
    pub pixels: Vec<u8>,
}

/// `(x − min) / (max − min)`; a constant grid maps to all zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&x| if span > 0.0 { (x - lo) / span } else { 0.0 })
        .collect()
}

impl HeatmapImage {
    /// Intensities `floor(255 · x̄ + 0.5)`, i.e. round half up.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("heatmap grid is empty"));
        }
        Error::check_dim("heatmap grid", width * height, values.len())?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("heatmap values must be finite"));
        }
        let pixels = normalize(values)
            .into_iter()
            .map(|x| (x * MAX_VALUE as f64 + 0.5).floor() as u8)
            .collect();
        Ok(Self { width, height, pixels })
    }

    /// `P2`, then `width height`, `255`, and one image row per line.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "P2")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        writeln!(out, "{MAX_VALUE}")?;
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_pgm<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: message.to_string(),
        };
        let mut tokens = Vec::new();
        for line in input.lines() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_string));
        }
        let mut it = tokens.into_iter();
        if it.next().as_deref() != Some("P2") {
            return Err(parse_err("missing P2 magic"));
        }
        let mut number = |what: &str| -> Result<u32> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(&format!("bad or missing {what}")))
        };
        let width = number("width")? as usize;
        let height = number("height")? as usize;
        if number("maxval")? != MAX_VALUE {
            return Err(parse_err("maxval must be 255"));
        }
        let pixels = (0..width * height)
            .map(|_| number("pixel").and_then(|p| u8::try_from(p).map_err(|_| parse_err("pixel above 255"))))
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { width, height, pixels })
    }

    /// Pixels scaled back to `[0, 1]`.
    pub fn intensities(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / MAX_VALUE as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_is_zero() {
        let img = HeatmapImage::from_values(1, 1, &[4.2]).unwrap();
        assert_eq!(img.pixels, vec![0]);
    }

    #[test]
    fn half_rounds_up() {
        let img = HeatmapImage::from_values(3, 1, &[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(img.pixels, vec![0, 128, 255]);
        let mut out = Vec::new();
        img.write_pgm(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "P2\n3 1\n255\n0 128 255\n");
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(HeatmapImage::from_values(0, 0, &[]).is_err());
        assert!(HeatmapImage::from_values(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn round_trip_within_one_level() {
        let values = [0.3, -1.0, 2.5, 0.0, 1.1, 0.7];
        let img = HeatmapImage::from_values(3, 2, &values).unwrap();
        let mut out = Vec::new();
        img.write_pgm(&mut out).unwrap();
        let back = HeatmapImage::read_pgm(&out[..], Path::new("mem")).unwrap();
        assert_eq!(back, img);
        for (x, y) in normalize(&values).iter().zip(back.intensities()) {
            assert!((x - y).abs() <= 1.0 / 255.0);
        }
    }
}
