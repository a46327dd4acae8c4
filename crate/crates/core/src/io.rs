//! Text and binary file formats.
//!
//! All parsers are strict: a file is accepted only in the exact layout the
//! matching writer produces (same token counts per line, ordering, ranges,
//! no trailing data), and every rejection names the offending line.
//!
//! * IRF: header `L T t_min t_max support`, then `support` lines of `L`
//!   nonnegative reals.
//! * Sparse scene: header `rows cols T`, then `pixel bin count` lines sorted
//!   by `(pixel, bin)` with `count >= 1`. Pixels are row-major from 0, bins
//!   run from 1 to `T`.
//! * Dense scene: little-endian `u32` counts, row-major over `(pixel, bin)`,
//!   with the `rows cols T` header in a text sidecar.
//! * Matrices: `rows` lines of `cols` whitespace-separated values, no header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{LidarError, Result};
use crate::fields::{DepthField, ReflectivityCube, WeightField};
use crate::grid::ImageDims;
use crate::irf::IrfBank;
use crate::real::Real;
use crate::scene::{Photon, SceneCube};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LidarError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LidarError::io(path, e))
}

/// Splits a file into lines, requiring a single trailing newline and no
/// blank lines.
fn strict_lines<'a>(path: &Path, text: &'a str) -> Result<Vec<&'a str>> {
    if text.is_empty() {
        return Err(LidarError::parse(path, 1, "empty file"));
    }
    let Some(body) = text.strip_suffix('\n') else {
        return Err(LidarError::parse(path, text.lines().count(), "missing final newline"));
    };
    let lines: Vec<&str> = body.split('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            return Err(LidarError::parse(path, i + 1, "blank line"));
        }
        if line.ends_with('\r') {
            return Err(LidarError::parse(path, i + 1, "carriage return"));
        }
    }
    Ok(lines)
}

fn tokens<'a>(path: &Path, line_no: usize, line: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != expected {
        return Err(LidarError::parse(path, line_no, format!("expected {expected} fields, found {}", toks.len())));
    }
    Ok(toks)
}

fn parse_uint<T: FromStr>(path: &Path, line_no: usize, tok: &str, what: &str) -> Result<T> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) || (tok.len() > 1 && tok.starts_with('0')) {
        return Err(LidarError::parse(path, line_no, format!("{what}: '{tok}' is not a canonical unsigned integer")));
    }
    tok.parse().map_err(|_| LidarError::parse(path, line_no, format!("{what}: '{tok}' out of range")))
}

fn parse_real<F: Real>(path: &Path, line_no: usize, tok: &str, what: &str) -> Result<F> {
    let v: F = tok.parse().map_err(|_| LidarError::parse(path, line_no, format!("{what}: '{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(LidarError::parse(path, line_no, format!("{what}: '{tok}' is not finite")));
    }
    Ok(v)
}

fn fmt_real<F: Real>(v: F) -> String {
    format!("{v:e}")
}

/// Writes an IRF bank.
pub fn write_irf<F: Real>(path: &Path, bank: &IrfBank<F>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {} {} {}", bank.bands(), bank.t_len(), bank.t_min(), bank.t_max(), bank.support());
    for i in 0..bank.support() {
        let row: Vec<String> = (0..bank.bands()).map(|l| fmt_real(bank.response(l)[i])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    write_text(path, &out)
}

/// Reads an IRF bank, validating it as [`IrfBank::new`] does.
pub fn read_irf<F: Real>(path: &Path) -> Result<IrfBank<F>> {
    let text = read_text(path)?;
    let lines = strict_lines(path, &text)?;
    let head = tokens(path, 1, lines[0], 5)?;
    let bands: usize = parse_uint(path, 1, head[0], "L")?;
    let t_len: usize = parse_uint(path, 1, head[1], "T")?;
    let t_min: usize = parse_uint(path, 1, head[2], "t_min")?;
    let t_max: usize = parse_uint(path, 1, head[3], "t_max")?;
    let support: usize = parse_uint(path, 1, head[4], "support")?;
    if bands == 0 || support == 0 {
        return Err(LidarError::parse(path, 1, "L and support must be positive"));
    }
    if lines.len() != support + 1 {
        let line = (support + 2).min(lines.len() + 1);
        return Err(LidarError::parse(path, line, format!("header declares {support} rows, found {}", lines.len() - 1)));
    }
    let mut g = vec![Vec::with_capacity(support); bands];
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        for (l, tok) in tokens(path, line_no, line, bands)?.into_iter().enumerate() {
            let v: F = parse_real(path, line_no, tok, "IRF value")?;
            if v < F::zero() {
                return Err(LidarError::parse(path, line_no, format!("negative IRF value '{tok}'")));
            }
            g[l].push(v);
        }
    }
    IrfBank::new(g, t_len, t_min, t_max).map_err(|e| LidarError::parse(path, 1, e.to_string()))
}

fn scene_header(rows: usize, cols: usize, t_len: usize) -> String {
    format!("{rows} {cols} {t_len}\n")
}

fn parse_scene_header(path: &Path, line: &str) -> Result<(ImageDims, usize)> {
    let head = tokens(path, 1, line, 3)?;
    let rows: usize = parse_uint(path, 1, head[0], "rows")?;
    let cols: usize = parse_uint(path, 1, head[1], "cols")?;
    let t_len: usize = parse_uint(path, 1, head[2], "T")?;
    if rows == 0 || cols == 0 || t_len == 0 {
        return Err(LidarError::parse(path, 1, "rows, cols and T must be positive"));
    }
    Ok((ImageDims::new(rows, cols), t_len))
}

/// Writes the sparse text form of a scene.
pub fn write_scene(path: &Path, scene: &SceneCube) -> Result<()> {
    let dims = scene.dims();
    let mut out = scene_header(dims.rows, dims.cols, scene.t_len());
    for n in 0..scene.n_pixels() {
        for p in scene.photons(n) {
            let _ = writeln!(out, "{n} {} {}", p.bin, p.count);
        }
    }
    write_text(path, &out)
}

/// Reads the sparse text form of a scene.
pub fn read_scene(path: &Path) -> Result<SceneCube> {
    let text = read_text(path)?;
    let lines = strict_lines(path, &text)?;
    let (dims, t_len) = parse_scene_header(path, lines[0])?;
    let mut photons: Vec<Vec<Photon>> = vec![Vec::new(); dims.len()];
    let mut last: Option<(usize, u32)> = None;
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        let toks = tokens(path, line_no, line, 3)?;
        let pixel: usize = parse_uint(path, line_no, toks[0], "pixel")?;
        let bin: u32 = parse_uint(path, line_no, toks[1], "bin")?;
        let count: u32 = parse_uint(path, line_no, toks[2], "count")?;
        if pixel >= dims.len() {
            return Err(LidarError::parse(path, line_no, format!("pixel {pixel} outside a {}x{} image", dims.rows, dims.cols)));
        }
        if bin == 0 || bin as usize > t_len {
            return Err(LidarError::parse(path, line_no, format!("bin {bin} outside [1, {t_len}]")));
        }
        if count == 0 {
            return Err(LidarError::parse(path, line_no, "zero count"));
        }
        if last.is_some_and(|prev| prev >= (pixel, bin)) {
            return Err(LidarError::parse(path, line_no, "entries must be strictly increasing in (pixel, bin)"));
        }
        last = Some((pixel, bin));
        photons[pixel].push(Photon { bin, count });
    }
    SceneCube::from_photons(dims, t_len, photons).map_err(|e| LidarError::parse(path, 1, e.to_string()))
}

/// Writes the dense binary form of a scene plus its header sidecar.
pub fn write_scene_dense(data_path: &Path, header_path: &Path, scene: &SceneCube) -> Result<()> {
    let dims = scene.dims();
    let t_len = scene.t_len();
    let mut bytes = Vec::with_capacity(scene.n_pixels() * t_len * 4);
    for n in 0..scene.n_pixels() {
        for c in scene.histogram(n) {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    fs::write(data_path, bytes).map_err(|e| LidarError::io(data_path, e))?;
    write_text(header_path, &scene_header(dims.rows, dims.cols, t_len))
}

/// Reads the dense binary form of a scene.
pub fn read_scene_dense(data_path: &Path, header_path: &Path) -> Result<SceneCube> {
    let text = read_text(header_path)?;
    let lines = strict_lines(header_path, &text)?;
    if lines.len() != 1 {
        return Err(LidarError::parse(header_path, 2, "header sidecar must be a single line"));
    }
    let (dims, t_len) = parse_scene_header(header_path, lines[0])?;
    let bytes = fs::read(data_path).map_err(|e| LidarError::io(data_path, e))?;
    let expected = dims.len() * t_len * 4;
    if bytes.len() != expected {
        return Err(LidarError::SizeMismatch(format!(
            "{}: expected {expected} bytes, found {}",
            data_path.display(),
            bytes.len()
        )));
    }
    let dense: Vec<u32> = bytes.chunks_exact(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    SceneCube::from_histograms(dims, t_len, dense)
}

/// Writes a `rows x cols` matrix of displayable values.
fn write_matrix<T>(path: &Path, dims: ImageDims, values: &[T], fmt: impl Fn(&T) -> String) -> Result<()> {
    let mut out = String::new();
    for r in 0..dims.rows {
        let row: Vec<String> = values[r * dims.cols..(r + 1) * dims.cols].iter().map(&fmt).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    write_text(path, &out)
}

/// Reads a rectangular matrix, returning its shape and row-major values.
fn read_matrix<T>(path: &Path, parse: impl Fn(usize, &str) -> Result<T>) -> Result<(ImageDims, Vec<T>)> {
    let text = read_text(path)?;
    let lines = strict_lines(path, &text)?;
    let cols = lines[0].split_whitespace().count();
    let mut values = Vec::with_capacity(lines.len() * cols);
    for (i, line) in lines.iter().enumerate() {
        for tok in tokens(path, i + 1, line, cols)? {
            values.push(parse(i + 1, tok)?);
        }
    }
    Ok((ImageDims::new(lines.len(), cols), values))
}

pub fn write_depth(path: &Path, depth: &DepthField) -> Result<()> {
    write_matrix(path, depth.dims(), depth.as_slice(), |t| t.to_string())
}

pub fn read_depth(path: &Path) -> Result<DepthField> {
    let (dims, t) = read_matrix(path, |line, tok| parse_uint(path, line, tok, "depth"))?;
    DepthField::new(dims, t)
}

/// Writes an integer label image (cluster maps).
pub fn write_labels(path: &Path, dims: ImageDims, labels: &[usize]) -> Result<()> {
    if labels.len() != dims.len() {
        return Err(LidarError::SizeMismatch(format!("{} labels for a {}x{} image", labels.len(), dims.rows, dims.cols)));
    }
    write_matrix(path, dims, labels, |v| v.to_string())
}

pub fn read_labels(path: &Path) -> Result<(ImageDims, Vec<usize>)> {
    read_matrix(path, |line, tok| parse_uint(path, line, tok, "label"))
}

/// Writes a real-valued image.
pub fn write_real_matrix<F: Real>(path: &Path, dims: ImageDims, values: &[F]) -> Result<()> {
    if values.len() != dims.len() {
        return Err(LidarError::SizeMismatch(format!("{} values for a {}x{} image", values.len(), dims.rows, dims.cols)));
    }
    write_matrix(path, dims, values, |v| fmt_real(*v))
}

pub fn read_real_matrix<F: Real>(path: &Path) -> Result<(ImageDims, Vec<F>)> {
    read_matrix(path, |line, tok| parse_real(path, line, tok, "value"))
}

/// File of band `l` (0-based) for a per-band output with the given stem,
/// e.g. `weights` becomes `weights_band0.txt`.
pub fn band_path(dir: &Path, stem: &str, band: usize) -> std::path::PathBuf {
    dir.join(format!("{stem}_band{band}.txt"))
}

/// Writes one matrix per band.
pub fn write_weights<F: Real>(dir: &Path, stem: &str, weights: &WeightField<F>) -> Result<()> {
    for l in 0..weights.bands() {
        write_real_matrix(&band_path(dir, stem, l), weights.dims(), &weights.band(l))?;
    }
    Ok(())
}

/// Reads `bands` per-band matrices back into a weight field.
pub fn read_weights<F: Real>(dir: &Path, stem: &str, bands: usize) -> Result<WeightField<F>> {
    if bands == 0 {
        return Err(LidarError::InvalidParameter("need at least one band".into()));
    }
    let mut field: Option<WeightField<F>> = None;
    for l in 0..bands {
        let path = band_path(dir, stem, l);
        let (dims, values) = read_real_matrix::<F>(&path)?;
        let w = field.get_or_insert_with(|| WeightField::constant(dims, bands, F::zero()));
        if w.dims() != dims {
            return Err(LidarError::parse(&path, 1, "band shape differs from band 0"));
        }
        w.set_band(l, &values);
    }
    let field = field.expect("at least one band");
    field.check_simplex()?;
    Ok(field)
}

/// Writes `<stem>_band<l>.txt` for each band and `<stem>_background.txt`.
pub fn write_reflectivity<F: Real>(dir: &Path, stem: &str, cube: &ReflectivityCube<F>) -> Result<()> {
    for l in 0..cube.bands() {
        write_real_matrix(&band_path(dir, stem, l), cube.dims(), &cube.band(l))?;
    }
    write_real_matrix(&dir.join(format!("{stem}_background.txt")), cube.dims(), cube.b_slice())
}

pub fn read_reflectivity<F: Real>(dir: &Path, stem: &str, bands: usize) -> Result<ReflectivityCube<F>> {
    let bg_path = dir.join(format!("{stem}_background.txt"));
    let (dims, b) = read_real_matrix::<F>(&bg_path)?;
    let mut r = vec![F::zero(); dims.len() * bands];
    for l in 0..bands {
        let path = band_path(dir, stem, l);
        let (d, values) = read_real_matrix::<F>(&path)?;
        if d != dims {
            return Err(LidarError::parse(&path, 1, "band shape differs from the background"));
        }
        for (n, v) in values.into_iter().enumerate() {
            r[n * bands + l] = v;
        }
    }
    ReflectivityCube::new(dims, bands, r, b)
}
