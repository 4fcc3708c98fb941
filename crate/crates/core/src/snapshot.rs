//! Field snapshot files.
//!
//! CSV layout: a header line `n_r,n_theta,r_max,time,alpha,nu`, one line of
//! header values, then one line of `n_theta` values per radial node.
//!
//! Binary layout (little endian): the 8-byte magic `SGLAB01\0`, `n_r` and
//! `n_theta` as `u64`, then `r_max, time, alpha, nu` as `f64`, then the
//! values row by row (radial index outer).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::SnapshotError;
use crate::fields::ScalarField;
use crate::grid::{build_grid, ExteriorGrid, GridSpec};

const MAGIC: &[u8; 8] = b"SGLAB01\0";
const CSV_HEADER: &str = "n_r,n_theta,r_max,time,alpha,nu";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Binary,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Binary => "bin",
        }
    }

    /// Guesses the format from a file extension; anything but `.bin` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => SnapshotFormat::Binary,
            _ => SnapshotFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub spec: GridSpec,
    pub time: f64,
    pub alpha: f64,
    pub nu: f64,
    pub values: Array2<f64>,
}

impl Snapshot {
    pub fn from_field(field: &ScalarField, time: f64, alpha: f64, nu: f64) -> Self {
        Self {
            spec: field.grid().spec(),
            time,
            alpha,
            nu,
            values: field.values().clone(),
        }
    }

    /// The stored values on `grid`, which must have the stored layout.
    pub fn to_field(&self, grid: Arc<ExteriorGrid>) -> Result<ScalarField, SnapshotError> {
        let gs = grid.spec();
        if gs.n_r != self.spec.n_r || gs.n_theta != self.spec.n_theta || gs.r_max != self.spec.r_max {
            return Err(SnapshotError::Format(format!(
                "snapshot grid {}x{} r_max {} does not match {}x{} r_max {}",
                self.spec.n_r, self.spec.n_theta, self.spec.r_max, gs.n_r, gs.n_theta, gs.r_max
            )));
        }
        Ok(ScalarField::new(grid, self.values.clone())?)
    }

    /// The stored values on a freshly built grid.
    pub fn into_field(self) -> Result<ScalarField, SnapshotError> {
        let grid = build_grid(self.spec)?;
        Ok(ScalarField::new(grid, self.values)?)
    }

    pub fn write<W: Write>(&self, format: SnapshotFormat, out: W) -> Result<(), SnapshotError> {
        match format {
            SnapshotFormat::Csv => self.write_csv(out),
            SnapshotFormat::Binary => self.write_binary(out),
        }
    }

    pub fn read<R: Read>(format: SnapshotFormat, input: R) -> Result<Self, SnapshotError> {
        match format {
            SnapshotFormat::Csv => Self::read_csv(input),
            SnapshotFormat::Binary => Self::read_binary(input),
        }
    }

    pub fn save(&self, path: &Path, format: SnapshotFormat) -> Result<(), SnapshotError> {
        let file = fs::File::create(path)?;
        self.write(format, BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let file = fs::File::open(path)?;
        Self::read(SnapshotFormat::from_path(path), BufReader::new(file))
    }

    fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SnapshotError> {
        writeln!(out, "{CSV_HEADER}")?;
        // `{:?}` on f64 prints the shortest representation that round-trips
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?}",
            self.spec.n_r, self.spec.n_theta, self.spec.r_max, self.time, self.alpha, self.nu
        )?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    fn read_csv<R: Read>(input: R) -> Result<Self, SnapshotError> {
        let mut lines = BufReader::new(input).lines();
        let mut next_line = |what: &str| -> Result<String, SnapshotError> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| SnapshotError::Format(format!("missing {what}")))
        };
        let header = next_line("header line")?;
        if header.trim() != CSV_HEADER {
            return Err(SnapshotError::Format(format!("expected header `{CSV_HEADER}`, found `{}`", header.trim())));
        }
        let meta = next_line("header values")?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 6 {
            return Err(SnapshotError::Format(format!("expected 6 header values, found {}", fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| SnapshotError::Format(format!("bad {name} `{s}`")))
        };
        let real = |s: &str, name: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SnapshotError::Format(format!("bad {name} `{s}`")))
        };
        let spec = GridSpec::new(int(fields[0], "n_r")?, int(fields[1], "n_theta")?, real(fields[2], "r_max")?);
        spec.validate()?;
        let (time, alpha, nu) = (real(fields[3], "time")?, real(fields[4], "alpha")?, real(fields[5], "nu")?);
        let mut values = Array2::zeros((spec.n_r, spec.n_theta));
        for i in 0..spec.n_r {
            let line = next_line(&format!("row {i}"))?;
            let mut count = 0;
            for (j, tok) in line.trim().split(',').enumerate() {
                if j >= spec.n_theta {
                    return Err(SnapshotError::Format(format!("row {i} has more than {} values", spec.n_theta)));
                }
                values[[i, j]] = real(tok, "value")?;
                count += 1;
            }
            if count != spec.n_theta {
                return Err(SnapshotError::Format(format!("row {i} has {count} values, expected {}", spec.n_theta)));
            }
        }
        Ok(Self { spec, time, alpha, nu, values })
    }

    fn write_binary<W: Write>(&self, mut out: W) -> Result<(), SnapshotError> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.spec.n_r as u64).to_le_bytes())?;
        out.write_all(&(self.spec.n_theta as u64).to_le_bytes())?;
        for v in [self.spec.r_max, self.time, self.alpha, self.nu] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.values.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    fn read_binary<R: Read>(mut input: R) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::Format("bad magic bytes".into()));
        }
        let mut word = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<u64, SnapshotError> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n_r = read_u64(&mut input)? as usize;
        let n_theta = read_u64(&mut input)? as usize;
        let mut read_f64 = |input: &mut R| -> Result<f64, SnapshotError> { Ok(f64::from_bits(read_u64(input)?)) };
        let r_max = read_f64(&mut input)?;
        let spec = GridSpec::new(n_r, n_theta, r_max);
        spec.validate()?;
        let time = read_f64(&mut input)?;
        let alpha = read_f64(&mut input)?;
        let nu = read_f64(&mut input)?;
        let mut data = vec![0.0; n_r * n_theta];
        for v in data.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(SnapshotError::Format("trailing bytes after values".into()));
        }
        let values = Array2::from_shape_vec((n_r, n_theta), data).map_err(|e| SnapshotError::Format(e.to_string()))?;
        Ok(Self { spec, time, alpha, nu, values })
    }
}
