//! Plain-text signal and map files, and CPMG echo windowing.
//!
//! Both file kinds start with a single `#` header line naming the kind and
//! its dimensions, followed by whitespace-separated numbers: the first time
//! axis, the second time axis, then the values one row (fixed first-axis
//! time) per line.
//!
//! ```text
//! # signal M1 M2 [noise=DELTA]
//! # map NX NY [lambda]
//! ```
//!
//! A map with the `lambda` flag carries a second `NX x NY` block holding the
//! regularization field.

mod window;

pub use window::{window_cpmg, WindowingPlan};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::model::{AcquisitionGrid, Distribution, RelaxationGrid, SignalData};
use crate::upen::RegularizationField;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: expected {expected} numbers after the header, found {found}")]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {axis} times are not strictly increasing and positive")]
    NonIncreasingTimes { path: PathBuf, axis: &'static str },
    #[error("{path}: non-finite or unparsable value `{token}`")]
    NonFinite { path: PathBuf, token: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

struct Parsed {
    header: Vec<String>,
    values: Vec<f64>,
}

fn read_file(path: &Path, kind: &str) -> Result<Parsed, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })?;
    let mut lines = text.lines();
    let malformed = |reason: String| FormatError::MalformedHeader {
        path: path.into(),
        reason,
    };
    let first = lines.next().ok_or_else(|| malformed("file is empty".into()))?;
    let header: Vec<String> = first
        .strip_prefix('#')
        .ok_or_else(|| malformed(format!("expected `# {kind} ...`, got `{first}`")))?
        .split_whitespace()
        .map(str::to_owned)
        .collect();
    if header.first().map(String::as_str) != Some(kind) || header.len() < 3 {
        return Err(malformed(format!("expected `# {kind} <rows> <cols>`, got `{first}`")));
    }
    let mut values = Vec::new();
    for token in lines.flat_map(str::split_whitespace) {
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(FormatError::NonFinite {
                    path: path.into(),
                    token: token.into(),
                })
            }
        }
    }
    Ok(Parsed { header, values })
}

fn parse_dim(path: &Path, token: &str) -> Result<usize, FormatError> {
    match token.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(FormatError::MalformedHeader {
            path: path.into(),
            reason: format!("bad dimension `{token}`"),
        }),
    }
}

fn check_times(path: &Path, axis: &'static str, t: &[f64]) -> Result<(), FormatError> {
    if t.iter().any(|v| *v <= 0.0) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FormatError::NonIncreasingTimes {
            path: path.into(),
            axis,
        });
    }
    Ok(())
}

fn check_count(path: &Path, expected: usize, found: usize) -> Result<(), FormatError> {
    if expected != found {
        return Err(FormatError::CountMismatch {
            path: path.into(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Reads a row-major `rows x cols` block.
fn block(rows: usize, cols: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, values)
}

fn push_line(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push('\n');
}

fn push_block(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        push_line(out, row.iter().copied());
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })
}

pub fn load_signal(path: impl AsRef<Path>) -> crate::Result<(AcquisitionGrid, SignalData)> {
    let path = path.as_ref();
    let Parsed { header, values } = read_file(path, "signal")?;
    let m1 = parse_dim(path, &header[1])?;
    let m2 = parse_dim(path, &header[2])?;
    let mut noise = None;
    for extra in &header[3..] {
        let parsed = extra
            .strip_prefix("noise=")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v > 0.0);
        match parsed {
            Some(v) => noise = Some(v),
            None => {
                return Err(FormatError::MalformedHeader {
                    path: path.into(),
                    reason: format!("unknown header field `{extra}`"),
                }
                .into())
            }
        }
    }
    check_count(path, m1 + m2 + m1 * m2, values.len())?;
    let (t1, rest) = values.split_at(m1);
    let (t2, s) = rest.split_at(m2);
    check_times(path, "t1", t1)?;
    check_times(path, "t2", t2)?;
    let grid = AcquisitionGrid::new(t1.to_vec(), t2.to_vec())?;
    let mut sig = SignalData::new(block(m1, m2, s))?;
    if let Some(delta) = noise {
        sig = sig.with_noise_level(delta);
    }
    Ok((grid, sig))
}

pub fn save_signal(
    path: impl AsRef<Path>,
    grid: &AcquisitionGrid,
    sig: &SignalData,
) -> crate::Result<()> {
    let (m1, m2) = sig.shape();
    if (grid.m1(), grid.m2()) != (m1, m2) {
        return Err(crate::Error::DimensionMismatch {
            what: "acquisition grid",
            expected: m1 * m2,
            found: grid.m1() * grid.m2(),
        });
    }
    let mut out = format!("# signal {m1} {m2}");
    if let Some(delta) = sig.noise_level() {
        write!(out, " noise={delta:e}").expect("writing to a String");
    }
    out.push('\n');
    push_line(&mut out, grid.t1().iter().copied());
    push_line(&mut out, grid.t2().iter().copied());
    push_block(&mut out, sig.matrix());
    Ok(write_file(path.as_ref(), &out)?)
}

/// A distribution on its relaxation grid, optionally with the field that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub grid: RelaxationGrid,
    pub distribution: Distribution,
    pub lambda: Option<RegularizationField>,
}

pub fn load_map(path: impl AsRef<Path>) -> crate::Result<MapFile> {
    let path = path.as_ref();
    let Parsed { header, values } = read_file(path, "map")?;
    let nx = parse_dim(path, &header[1])?;
    let ny = parse_dim(path, &header[2])?;
    let with_lambda = match &header[3..] {
        [] => false,
        [flag] if flag == "lambda" => true,
        other => {
            return Err(FormatError::MalformedHeader {
                path: path.into(),
                reason: format!("unknown header fields {other:?}"),
            }
            .into())
        }
    };
    let blocks = if with_lambda { 2 } else { 1 };
    check_count(path, nx + ny + blocks * nx * ny, values.len())?;
    let (t1, rest) = values.split_at(nx);
    let (t2, rest) = rest.split_at(ny);
    check_times(path, "T1", t1)?;
    check_times(path, "T2", t2)?;
    let (f, lam) = rest.split_at(nx * ny);
    let lambda = if with_lambda {
        Some(RegularizationField::new(block(nx, ny, lam))?)
    } else {
        None
    };
    Ok(MapFile {
        grid: RelaxationGrid::new(t1.to_vec(), t2.to_vec())?,
        distribution: Distribution::new(block(nx, ny, f))?,
        lambda,
    })
}

pub fn save_map(path: impl AsRef<Path>, map: &MapFile) -> crate::Result<()> {
    let (nx, ny) = map.distribution.shape();
    if (map.grid.nx(), map.grid.ny()) != (nx, ny) {
        return Err(crate::Error::DimensionMismatch {
            what: "relaxation grid",
            expected: nx * ny,
            found: map.grid.nx() * map.grid.ny(),
        });
    }
    if let Some(l) = &map.lambda {
        if l.shape() != (nx, ny) {
            return Err(crate::Error::DimensionMismatch {
                what: "regularization field",
                expected: nx * ny,
                found: l.as_slice().len(),
            });
        }
    }
    let mut out = format!("# map {nx} {ny}");
    if map.lambda.is_some() {
        out.push_str(" lambda");
    }
    out.push('\n');
    push_line(&mut out, map.grid.t1().iter().copied());
    push_line(&mut out, map.grid.t2().iter().copied());
    push_block(&mut out, map.distribution.matrix());
    if let Some(l) = &map.lambda {
        push_block(&mut out, l.matrix());
    }
    Ok(write_file(path.as_ref(), &out)?)
}

/// Writes the two sum projections as `time value` pairs: `nx` lines for the
/// T1 axis followed by `ny` lines for the T2 axis.
pub fn save_projections(path: impl AsRef<Path>, map: &MapFile) -> crate::Result<()> {
    let (p1, p2) = crate::metrics::sum_projections(&map.distribution);
    let mut out = format!("# projections {} {}\n", p1.len(), p2.len());
    for (t, v) in map.grid.t1().iter().zip(p1.iter()) {
        push_line(&mut out, [*t, *v]);
    }
    for (t, v) in map.grid.t2().iter().zip(p2.iter()) {
        push_line(&mut out, [*t, *v]);
    }
    Ok(write_file(path.as_ref(), &out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometric_space;
    use crate::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn format_err(e: Error) -> FormatError {
        match e {
            Error::Format(f) => f,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn signal_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = AcquisitionGrid::new(geometric_space(1e-3, 1.0, 4), geometric_space(1e-4, 0.5, 5))
            .unwrap();
        let sig = SignalData::new(DMatrix::from_fn(4, 5, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap()
            .with_noise_level(1e-2);
        save_signal(&path, &grid, &sig).unwrap();
        let (g2, s2) = load_signal(&path).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(s2.matrix(), sig.matrix());
        assert_eq!(s2.noise_level(), Some(1e-2));
    }

    #[test]
    fn map_round_trip_with_lambda() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let map = MapFile {
            grid: RelaxationGrid::log_spaced(3, 4).unwrap(),
            distribution: Distribution::new(DMatrix::from_fn(3, 4, |_, _| rng.gen_range(0.0..1.0)))
                .unwrap(),
            lambda: Some(
                RegularizationField::new(DMatrix::from_fn(3, 4, |_, _| rng.gen_range(0.0..1e6)))
                    .unwrap(),
            ),
        };
        save_map(&path, &map).unwrap();
        assert_eq!(load_map(&path).unwrap(), map);
        let plain = MapFile { lambda: None, ..map };
        save_map(&path, &plain).unwrap();
        assert_eq!(load_map(&path).unwrap(), plain);
    }

    #[test]
    fn diagnostics_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");

        std::fs::write(&p, "").unwrap();
        let e = format_err(load_signal(&p).unwrap_err());
        assert!(matches!(e, FormatError::MalformedHeader { .. }));

        std::fs::write(&p, "# signal 3 3\n1 2 3\n1 2 3\n1 2 3 4 5\n").unwrap();
        let e = format_err(load_signal(&p).unwrap_err());
        assert!(matches!(e, FormatError::CountMismatch { expected: 15, found: 11, .. }));

        std::fs::write(&p, "# signal 2 2\n1 1\n1 2\n1 2 3 4\n").unwrap();
        let e = format_err(load_signal(&p).unwrap_err());
        assert!(matches!(e, FormatError::NonIncreasingTimes { axis: "t1", .. }));

        std::fs::write(&p, "# signal 2 2\n1 2\n1 2\n1 NaN 3 4\n").unwrap();
        let e = format_err(load_signal(&p).unwrap_err());
        assert!(matches!(e, FormatError::NonFinite { .. }));

        let e = format_err(load_signal(dir.path().join("missing")).unwrap_err());
        assert!(matches!(e, FormatError::Io { .. }));

        std::fs::write(&p, "# map 2 2 extra\n1 2\n1 2\n1 2 3 4\n").unwrap();
        let e = format_err(load_map(&p).unwrap_err());
        assert!(matches!(e, FormatError::MalformedHeader { .. }));
    }

    #[test]
    fn rows_are_fixed_first_axis() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        std::fs::write(&p, "# signal 2 3\n1 2\n1 2 3\n1 2 3\n4 5 6\n").unwrap();
        let (_, s) = load_signal(&p).unwrap();
        assert_eq!(s.matrix()[(0, 2)], 3.0);
        assert_eq!(s.matrix()[(1, 0)], 4.0);
    }
}
