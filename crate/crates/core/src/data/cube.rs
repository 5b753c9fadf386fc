//! Hyperspectral cubes, planar RGB images, and the HSCB container.
//!
//! HSCB layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "HSCB"
//! 4       2         version (u16) = 1
//! 6       4         h (u32)
//! 10      4         w (u32)
//! 14      4         c (u32)
//! 18      4·c       wavelengths in nm (f32)
//! 18+4c   4·c·h·w   c planes of h·w f32, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const HSCB_MAGIC: [u8; 4] = *b"HSCB";
pub const HSCB_VERSION: u16 = 1;
const HEADER_LEN: usize = 18;

/// Default band centres: 400..=700 nm in 10 nm steps.
pub fn default_wavelengths(bands: usize) -> Vec<f32> {
    (0..bands).map(|i| 400.0 + 10.0 * i as f32).collect()
}

/// Planar multi-channel image access shared by cubes and RGB images.
pub trait Planar: Sized {
    fn channels(&self) -> usize;
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn planes(&self) -> &[f32];
    /// Rebuilds an image of the same kind with new planes and spatial size.
    fn with_planes(&self, h: usize, w: usize, data: Vec<f32>) -> Self;

    fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height() * self.width();
        &self.planes()[c * hw..(c + 1) * hw]
    }

    /// Single-sample `(1, c, h, w)` tensor.
    fn to_tensor(&self) -> Tensor4<f32> {
        Tensor4::from_vec(
            [1, self.channels(), self.height(), self.width()],
            self.planes().to_vec(),
        )
        .expect("planar buffer length matches dims")
    }

    /// `(1, c, size, size)` window with top-left corner `(y, x)`.
    fn window(&self, y: usize, x: usize, size: usize) -> Tensor4<f32> {
        let w = self.width();
        let mut out = Tensor4::zeros(1, self.channels(), size, size);
        for c in 0..self.channels() {
            let src = self.plane(c);
            let dst = out.plane_mut(0, c);
            for r in 0..size {
                dst[r * size..(r + 1) * size].copy_from_slice(&src[(y + r) * w + x..(y + r) * w + x + size]);
            }
        }
        out
    }
}

/// `h × w × C` radiance cube stored as C planes.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    pub h: usize,
    pub w: usize,
    pub wavelengths: Vec<f32>,
    pub data: Vec<f32>,
}

impl HyperCube {
    pub fn new(h: usize, w: usize, wavelengths: Vec<f32>, data: Vec<f32>) -> Result<Self> {
        let c = wavelengths.len();
        if data.len() != c * h * w {
            return Err(Error::shape("HyperCube", "data length", c * h * w, data.len()));
        }
        if let Some(i) = wavelengths.windows(2).position(|p| !(p[1] > p[0])) {
            return Err(Error::invalid(
                "HyperCube",
                format!("wavelengths not strictly increasing at index {}", i + 1),
            ));
        }
        Ok(Self {
            h,
            w,
            wavelengths,
            data,
        })
    }

    pub fn zeros(h: usize, w: usize, wavelengths: Vec<f32>) -> Self {
        let c = wavelengths.len();
        Self {
            h,
            w,
            wavelengths,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let hw = self.h * self.w;
        &mut self.data[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.h + y) * self.w + x]
    }

    /// Measured radiance must be finite and non-negative. Network predictions
    /// are not held to this.
    pub fn validate_radiance(&self) -> Result<()> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "HyperCube",
                format!("radiance at element {i} is {} (must be finite and >= 0)", self.data[i]),
            ));
        }
        Ok(())
    }

    /// Sample `n` of a network output tensor.
    pub fn from_tensor(t: &Tensor4<f32>, n: usize, wavelengths: Vec<f32>) -> Result<Self> {
        if wavelengths.len() != t.c() {
            return Err(Error::shape("HyperCube::from_tensor", "bands", t.c(), wavelengths.len()));
        }
        Self::new(t.h(), t.w(), wavelengths, t.sample(n).to_vec())
    }
}

impl Planar for HyperCube {
    fn channels(&self) -> usize {
        self.wavelengths.len()
    }
    fn height(&self) -> usize {
        self.h
    }
    fn width(&self) -> usize {
        self.w
    }
    fn planes(&self) -> &[f32] {
        &self.data
    }
    fn with_planes(&self, h: usize, w: usize, data: Vec<f32>) -> Self {
        Self {
            h,
            w,
            wavelengths: self.wavelengths.clone(),
            data,
        }
    }
}

/// Three-plane floating-point RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * h * w {
            return Err(Error::shape("RgbImage", "data length", 3 * h * w, data.len()));
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; 3 * h * w],
        }
    }

    pub fn from_tensor(t: &Tensor4<f32>, n: usize) -> Result<Self> {
        if t.c() != 3 {
            return Err(Error::shape("RgbImage::from_tensor", "channels", 3, t.c()));
        }
        Self::new(t.h(), t.w(), t.sample(n).to_vec())
    }

    /// Stored in HSCB form with placeholder wavelengths 0, 1, 2.
    pub fn to_cube(&self) -> HyperCube {
        HyperCube {
            h: self.h,
            w: self.w,
            wavelengths: vec![0.0, 1.0, 2.0],
            data: self.data.clone(),
        }
    }

    pub fn from_cube(cube: &HyperCube) -> Result<Self> {
        if cube.bands() != 3 {
            return Err(Error::shape("RgbImage::from_cube", "channels", 3, cube.bands()));
        }
        Self::new(cube.h, cube.w, cube.data.clone())
    }
}

impl Planar for RgbImage {
    fn channels(&self) -> usize {
        3
    }
    fn height(&self) -> usize {
        self.h
    }
    fn width(&self) -> usize {
        self.w
    }
    fn planes(&self) -> &[f32] {
        &self.data
    }
    fn with_planes(&self, h: usize, w: usize, data: Vec<f32>) -> Self {
        Self { h, w, data }
    }
}

pub fn encode_cube(cube: &HyperCube) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::invalid("encode_cube", format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * (cube.bands() + cube.data.len()));
    out.extend_from_slice(&HSCB_MAGIC);
    out.extend_from_slice(&HSCB_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.h, "height")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.w, "width")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.bands(), "band count")?.to_le_bytes());
    for &wl in &cube.wavelengths {
        out.extend_from_slice(&wl.to_le_bytes());
    }
    for &v in &cube.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "HSCB",
        offset: offset as u64,
        msg: msg.into(),
    }
}

pub fn decode_cube(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if bytes[0..4] != HSCB_MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != HSCB_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let rd = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let (h, w, c) = (rd(6), rd(10), rd(14));
    let body = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_add(c))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(6, format!("dimensions {h}x{w}x{c} overflow")))?;
    let expected = HEADER_LEN + body;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes for {h}x{w}x{c}"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let floats = |start: usize, count: usize| -> Vec<f32> {
        bytes[start..start + 4 * count]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()
    };
    let wavelengths = floats(HEADER_LEN, c);
    let data = floats(HEADER_LEN + 4 * c, c * h * w);
    if let Some(i) = wavelengths.windows(2).position(|p| !(p[1] > p[0])) {
        return Err(format_err(
            HEADER_LEN + 4 * (i + 1),
            "wavelengths not strictly increasing",
        ));
    }
    Ok(HyperCube {
        h,
        w,
        wavelengths,
        data,
    })
}

pub fn save_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cube(cube)?).map_err(|e| Error::io(path, e))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

/// `[0, 1]` float to 8-bit: scale by 255, round half away from zero, clamp.
pub fn quantize_unit(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit PNG of a `[0, 1]` RGB image.
pub fn save_rgb_png(rgb: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let hw = rgb.h * rgb.w;
    let mut buf = Vec::with_capacity(3 * hw);
    for i in 0..hw {
        for c in 0..3 {
            buf.push(quantize_unit(rgb.data[c * hw + i]));
        }
    }
    let img = image::RgbImage::from_raw(rgb.w as u32, rgb.h as u32, buf)
        .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Reads an 8-bit PNG back to `[0, 1]` floats.
pub fn load_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = h * w;
    let mut data = vec![0.0; 3 * hw];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * hw + i] = px.0[c] as f32 / 255.0;
        }
    }
    RgbImage::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_cube() -> HyperCube {
        let wl = default_wavelengths(31);
        let data = (0..31 * 4 * 5).map(|i| i as f32 * 0.5).collect();
        HyperCube::new(4, 5, wl, data).unwrap()
    }

    #[test]
    fn default_grid_is_400_to_700() {
        let wl = default_wavelengths(31);
        assert_eq!(wl.len(), 31);
        assert_eq!(wl[0], 400.0);
        assert_eq!(wl[30], 700.0);
        assert!(HyperCube::new(1, 1, wl, vec![0.0; 31]).is_ok());
    }

    #[test]
    fn header_layout() {
        let bytes = encode_cube(&sample_cube()).unwrap();
        assert_eq!(&bytes[0..4], b"HSCB");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &4u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &5u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &31u32.to_le_bytes());
        assert_eq!(&bytes[18..22], &400.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 18 + 4 * 31 + 4 * 31 * 20);
    }

    #[test]
    fn truncated_file_fails_with_offset() {
        let bytes = encode_cube(&sample_cube()).unwrap();
        for cut in [0, 3, 17, 18, 100, bytes.len() - 1] {
            match decode_cube(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_bad_magic_version_and_trailing() {
        let mut bytes = encode_cube(&sample_cube()).unwrap();
        bytes.push(0);
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { .. })));
        bytes.pop();
        bytes[4] = 9;
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 4, .. })));
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn dimension_overflow_is_caught() {
        let mut bytes = b"HSCB".to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_cube(&bytes).is_err());
    }

    #[test]
    fn radiance_validation() {
        let mut c = sample_cube();
        assert!(c.validate_radiance().is_ok());
        c.data[7] = -1.0;
        assert!(c.validate_radiance().is_err());
    }

    #[test]
    fn png_quantization_rounds_half_away() {
        assert_eq!(quantize_unit(0.0), 0);
        assert_eq!(quantize_unit(1.0), 255);
        assert_eq!(quantize_unit(2.0), 255);
        assert_eq!(quantize_unit(-0.5), 0);
        assert_eq!(quantize_unit(0.5 / 255.0), 1);
        assert_eq!(quantize_unit(127.5 / 255.0), 128);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..3 * 6 * 4).map(|i| (i % 256) as f32 / 255.0).collect();
        let rgb = RgbImage::new(6, 4, data).unwrap();
        let p = dir.path().join("x.png");
        save_rgb_png(&rgb, &p).unwrap();
        let back = load_rgb_png(&p).unwrap();
        assert_eq!(back.h, 6);
        assert_eq!(back.w, 4);
        for (a, b) in rgb.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(h in 0usize..5, w in 0usize..5, c in 1usize..5, bits in proptest::collection::vec(any::<u32>(), 0..100)) {
            let n = h * w * c;
            // arbitrary finite bit patterns, denormals included
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits(bits.get(i).copied().unwrap_or(i as u32)))
                .map(|v| if v.is_finite() { v } else { 1.0 })
                .collect();
            let cube = HyperCube::new(h, w, default_wavelengths(c), data).unwrap();
            let bytes = encode_cube(&cube).unwrap();
            let back = decode_cube(&bytes).unwrap();
            prop_assert_eq!(back.h, h);
            prop_assert_eq!(back.w, w);
            let a: Vec<u32> = cube.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(encode_cube(&back).unwrap(), bytes);
        }
    }
}
