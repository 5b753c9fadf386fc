//! Spectral response curves and RGB synthesis from cubes.

use std::fs;
use std::path::Path;

use crate::data::cube::{HyperCube, RgbImage};
use crate::error::{Error, Result};

const CIE1964_10DEG_CSV: &str = include_str!("../../data/cie1964_10deg.csv");

/// Three response curves on a shared wavelength grid: colour matching
/// functions (x̄, ȳ, z̄) or a camera's R, G, B sensitivities.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResponse {
    pub name: String,
    pub wavelengths: Vec<f32>,
    pub curves: [Vec<f32>; 3],
}

impl SpectralResponse {
    pub fn new(name: impl Into<String>, wavelengths: Vec<f32>, curves: [Vec<f32>; 3]) -> Result<Self> {
        let name = name.into();
        if wavelengths.is_empty() {
            return Err(Error::invalid("SpectralResponse", format!("{name}: empty wavelength grid")));
        }
        if let Some(i) = wavelengths.windows(2).position(|p| !(p[1] > p[0])) {
            return Err(Error::invalid(
                "SpectralResponse",
                format!("{name}: wavelengths not strictly increasing at row {}", i + 1),
            ));
        }
        for (ch, c) in curves.iter().enumerate() {
            if c.len() != wavelengths.len() {
                return Err(Error::shape("SpectralResponse", "curve length", wavelengths.len(), c.len()));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(
                    "SpectralResponse",
                    format!("{name}: channel {ch} value at {} nm is {}", wavelengths[i], c[i]),
                ));
            }
        }
        Ok(Self {
            name,
            wavelengths,
            curves,
        })
    }

    /// CIE 1964 10° standard observer, 400–700 nm at 10 nm.
    pub fn cie1964_10deg() -> Self {
        parse_response_csv(CIE1964_10DEG_CSV, "CIE 1964 10deg", Path::new("<builtin>"))
            .expect("bundled CMF table is well formed")
    }

    /// Reads a `wavelength_nm,c1,c2,c3` CSV with one header line.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "response".into());
        parse_response_csv(&text, &name, path)
    }

    /// Linear interpolation of channel `ch` at `nm`; `None` outside the grid.
    pub fn value_at(&self, ch: usize, nm: f32) -> Option<f32> {
        let wl = &self.wavelengths;
        let curve = &self.curves[ch];
        if nm < wl[0] || nm > wl[wl.len() - 1] {
            return None;
        }
        match wl.binary_search_by(|probe| probe.partial_cmp(&nm).expect("finite grid")) {
            Ok(i) => Some(curve[i]),
            Err(i) => {
                let (l0, l1) = (wl[i - 1], wl[i]);
                let t = (nm - l0) / (l1 - l0);
                Some(curve[i - 1] + t * (curve[i] - curve[i - 1]))
            }
        }
    }

    /// Response triplet at `nm`.
    pub fn triplet(&self, nm: f32) -> Option<[f32; 3]> {
        Some([self.value_at(0, nm)?, self.value_at(1, nm)?, self.value_at(2, nm)?])
    }
}

fn parse_response_csv(text: &str, name: &str, path: &Path) -> Result<SpectralResponse> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut wavelengths = Vec::new();
    let mut curves: [Vec<f32>; 3] = Default::default();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if lines.next().is_none() {
        return Err(perr(1, "missing header line".into()));
    }
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(perr(idx + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut vals = [0.0f32; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|_| perr(idx + 1, format!("`{f}` is not a number")))?;
        }
        wavelengths.push(vals[0]);
        for ch in 0..3 {
            curves[ch].push(vals[ch + 1]);
        }
    }
    SpectralResponse::new(name, wavelengths, curves)
}

/// Trapezoid-rule quadrature weights for a (possibly non-uniform) grid.
pub fn trapezoid_weights(grid: &[f32]) -> Vec<f32> {
    let n = grid.len();
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| {
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(n - 1)];
                (hi - lo) / 2.0
            })
            .collect(),
    }
}

/// Unnormalised projection: channel `k` of each pixel is
/// `Σ_b response_k(λ_b) · w_b · cube(λ_b)` with trapezoid weights `w_b`.
pub fn project_rgb(cube: &HyperCube, response: &SpectralResponse) -> Result<RgbImage> {
    let missing: Vec<f32> = cube
        .wavelengths
        .iter()
        .copied()
        .filter(|&nm| response.triplet(nm).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    let weights = trapezoid_weights(&cube.wavelengths);
    let hw = cube.h * cube.w;
    let mut rgb = RgbImage::zeros(cube.h, cube.w);
    for (b, (&nm, &wb)) in cube.wavelengths.iter().zip(&weights).enumerate() {
        let resp = response.triplet(nm).expect("coverage checked");
        let band = &cube.data[b * hw..(b + 1) * hw];
        for (k, &r) in resp.iter().enumerate() {
            let coef = r * wb;
            if coef == 0.0 {
                continue;
            }
            for (o, &v) in rgb.data[k * hw..(k + 1) * hw].iter_mut().zip(band) {
                *o += coef * v;
            }
        }
    }
    Ok(rgb)
}

/// [`project_rgb`] followed by division by the image maximum, so the
/// brightest channel value is 1. An all-zero projection stays zero.
pub fn synthesize_rgb(cube: &HyperCube, response: &SpectralResponse) -> Result<RgbImage> {
    let mut rgb = project_rgb(cube, response)?;
    let max = rgb.data.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        for v in &mut rgb.data {
            *v /= max;
        }
    }
    Ok(rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cube::default_wavelengths;

    fn cube_from_fn(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> HyperCube {
        let wl = default_wavelengths(31);
        let mut data = Vec::with_capacity(31 * h * w);
        for b in 0..31 {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(b, y, x));
                }
            }
        }
        HyperCube::new(h, w, wl, data).unwrap()
    }

    #[test]
    fn bundled_cmf_table() {
        let cmf = SpectralResponse::cie1964_10deg();
        assert_eq!(cmf.wavelengths.len(), 31);
        assert_eq!(cmf.wavelengths[0], 400.0);
        assert_eq!(cmf.wavelengths[30], 700.0);
        // ȳ₁₀ peaks near 560 nm
        let peak = cmf.curves[1]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(cmf.wavelengths[peak], 560.0);
        assert!((cmf.value_at(1, 550.0).unwrap() - 0.991761).abs() < 1e-6);
    }

    #[test]
    fn interpolation_between_grid_points() {
        let r = SpectralResponse::new(
            "t",
            vec![400.0, 500.0],
            [vec![0.0, 1.0], vec![2.0, 2.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(r.triplet(450.0), Some([0.5, 2.0, 0.5]));
        assert_eq!(r.triplet(399.0), None);
        assert_eq!(r.triplet(500.0), Some([1.0, 2.0, 0.0]));
    }

    #[test]
    fn trapezoid_weights_uniform_grid() {
        let w = trapezoid_weights(&default_wavelengths(31));
        assert_eq!(w[0], 5.0);
        assert_eq!(w[1], 10.0);
        assert_eq!(w[30], 5.0);
        assert_eq!(w.iter().sum::<f32>(), 300.0);
    }

    #[test]
    fn zero_cube_gives_zero_rgb() {
        let cube = cube_from_fn(3, 4, |_, _, _| 0.0);
        let rgb = synthesize_rgb(&cube, &SpectralResponse::cie1964_10deg()).unwrap();
        assert!(rgb.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_band_is_proportional_to_triplet() {
        let cmf = SpectralResponse::cie1964_10deg();
        let b550 = 15;
        let cube = cube_from_fn(1, 1, |b, _, _| if b == b550 { 1.0 } else { 0.0 });
        let rgb = project_rgb(&cube, &cmf).unwrap();
        let t = cmf.triplet(550.0).unwrap();
        let ratio = rgb.data[0] / t[0];
        for k in 0..3 {
            assert!((rgb.data[k] - ratio * t[k]).abs() < 1e-6 * ratio.max(1.0));
        }
    }

    #[test]
    fn doubling_radiance_leaves_normalised_rgb() {
        let cmf = SpectralResponse::cie1964_10deg();
        let a = cube_from_fn(4, 4, |b, y, x| (b as f32 * 0.1 + y as f32 + 2.0 * x as f32).sin().abs());
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v *= 2.0);
        assert_eq!(synthesize_rgb(&a, &cmf).unwrap(), synthesize_rgb(&b, &cmf).unwrap());
        let max = synthesize_rgb(&a, &cmf).unwrap().data.iter().copied().fold(0.0, f32::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn projection_is_linear() {
        let cmf = SpectralResponse::cie1964_10deg();
        let a = cube_from_fn(3, 3, |b, y, x| 0.5 + ((b * 7 + y * 3 + x) % 11) as f32 * 0.25);
        let b = cube_from_fn(3, 3, |b, y, x| ((b + y * x) % 5) as f32 * 0.125);
        let mut sum = a.clone();
        for (s, v) in sum.data.iter_mut().zip(&b.data) {
            *s += v;
        }
        let pa = project_rgb(&a, &cmf).unwrap();
        let pb = project_rgb(&b, &cmf).unwrap();
        let ps = project_rgb(&sum, &cmf).unwrap();
        for i in 0..ps.data.len() {
            let expect = pa.data[i] + pb.data[i];
            assert!((ps.data[i] - expect).abs() <= 1e-5 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn coverage_gap_lists_bands() {
        let narrow = SpectralResponse::new(
            "narrow",
            vec![450.0, 650.0],
            [vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let cube = cube_from_fn(1, 1, |_, _, _| 1.0);
        match synthesize_rgb(&cube, &narrow) {
            Err(Error::Coverage { missing }) => {
                assert_eq!(missing, vec![400.0, 410.0, 420.0, 430.0, 440.0, 660.0, 670.0, 680.0, 690.0, 700.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_parsing_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cam.csv");
        fs::write(&p, "wavelength_nm,r,g,b\n400,0.1,0.2,0.3\n410,0.1,x,0.3\n").unwrap();
        let err = SpectralResponse::from_csv(&p).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        fs::write(&p, "wavelength_nm,r,g,b\n400,0.1,0.2,0.3\n410,0.4,0.5,0.6\n").unwrap();
        let r = SpectralResponse::from_csv(&p).unwrap();
        assert_eq!(r.name, "cam");
        assert_eq!(r.curves[2], vec![0.3, 0.6]);

        assert!(matches!(
            SpectralResponse::from_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
