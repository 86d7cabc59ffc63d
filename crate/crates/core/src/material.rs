//! Optical materials: constant indices and tabulated dispersion data.
//!
//! Complex refractive indices use the `n + i k` convention with `k >= 0`
//! for absorbing media, matching an `exp(-i omega t)` time dependence.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Index of the glass used for substrates, spacers and capping layers.
pub const GLASS_INDEX: f64 = 1.46;
/// Refractive index of diamond in the visible.
pub const DIAMOND_INDEX: f64 = 2.4;

const SILVER_CSV: &str = include_str!("../data/silver.csv");

/// Tabulated complex index, linearly interpolated in both parts.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    name: String,
    wavelengths_nm: Vec<f64>,
    indices: Vec<Complex64>,
}

impl MaterialTable {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, Complex64)>) -> Result<Self> {
        let name = name.into();
        if samples.len() < 2 {
            return Err(Error::InvalidTable(format!("`{name}` needs at least two samples")));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidTable(format!(
                    "`{name}` wavelength grid not strictly increasing at {} nm",
                    w[1].0
                )));
            }
        }
        if let Some(bad) = samples.iter().find(|(l, n)| !(l.is_finite() && *l > 0.0 && n.im >= 0.0 && n.re.is_finite())) {
            return Err(Error::InvalidTable(format!("`{name}` has an invalid sample at {} nm", bad.0)));
        }
        let (wavelengths_nm, indices) = samples.into_iter().unzip();
        Ok(Self { name, wavelengths_nm, indices })
    }

    /// Parses `wavelength_nm, n_real, n_imag` rows. Lines starting with `#`
    /// and a non-numeric header row are skipped.
    pub fn from_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 3 => samples.push((v[0], Complex64::new(v[1], v[2]))),
                None if samples.is_empty() => continue, // header
                _ => {
                    return Err(Error::InvalidTable(format!("`{name}` line {}: expected 3 numbers", lineno + 1)));
                }
            }
        }
        Self::new(name, samples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (self.wavelengths_nm[0], *self.wavelengths_nm.last().unwrap())
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.wavelengths_nm.iter().copied().zip(self.indices.iter().copied())
    }

    pub fn index_at(&self, wavelength_nm: f64) -> Result<Complex64> {
        let (lo, hi) = self.range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::WavelengthOutOfRange {
                material: self.name.clone(),
                wavelength_nm,
                min_nm: lo,
                max_nm: hi,
            });
        }
        let i = self.wavelengths_nm.partition_point(|&l| l <= wavelength_nm).clamp(1, self.wavelengths_nm.len() - 1);
        let (l0, l1) = (self.wavelengths_nm[i - 1], self.wavelengths_nm[i]);
        let s = (wavelength_nm - l0) / (l1 - l0);
        Ok(self.indices[i - 1] * (1.0 - s) + self.indices[i] * s)
    }
}

/// A layer material.
#[derive(Debug, Clone, PartialEq)]
pub enum Material {
    Constant { name: String, index: Complex64 },
    Tabulated(Arc<MaterialTable>),
}

impl Material {
    pub fn constant(name: impl Into<String>, index: Complex64) -> Self {
        Material::Constant { name: name.into(), index }
    }

    pub fn real(name: impl Into<String>, n: f64) -> Self {
        Self::constant(name, Complex64::new(n, 0.0))
    }

    pub fn vacuum() -> Self {
        Self::real("vacuum", 1.0)
    }

    pub fn air() -> Self {
        Self::real("air", 1.0)
    }

    pub fn glass() -> Self {
        Self::real("glass", GLASS_INDEX)
    }

    pub fn diamond() -> Self {
        Self::real("diamond", DIAMOND_INDEX)
    }

    /// Silver from the embedded table (see the header of `data/silver.csv`).
    pub fn silver() -> Self {
        static TABLE: OnceLock<Arc<MaterialTable>> = OnceLock::new();
        let table = TABLE.get_or_init(|| {
            Arc::new(MaterialTable::from_csv("silver", SILVER_CSV).expect("embedded silver table is valid"))
        });
        Material::Tabulated(Arc::clone(table))
    }

    /// Resolves a built-in name (`air`, `vacuum`, `glass`, `diamond`,
    /// `silver`) or a literal index such as `1.5` or `0.14+4.5i`.
    pub fn builtin(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase();
        match key.as_str() {
            "air" => Ok(Self::air()),
            "vacuum" => Ok(Self::vacuum()),
            "glass" | "silica" | "sio2" => Ok(Self::glass()),
            "diamond" => Ok(Self::diamond()),
            "silver" | "ag" => Ok(Self::silver()),
            _ => parse_index(&key)
                .map(|n| Self::constant(name.trim(), n))
                .ok_or_else(|| Error::Domain(format!("unknown material `{name}`"))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Material::Constant { name, .. } => name,
            Material::Tabulated(t) => t.name(),
        }
    }

    pub fn index_at(&self, wavelength_nm: f64) -> Result<Complex64> {
        match self {
            Material::Constant { index, .. } => Ok(*index),
            Material::Tabulated(t) => t.index_at(wavelength_nm),
        }
    }

    pub fn is_lossless(&self) -> bool {
        match self {
            Material::Constant { index, .. } => index.im == 0.0,
            Material::Tabulated(t) => t.indices.iter().all(|n| n.im == 0.0),
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_index(s: &str) -> Option<Complex64> {
    let s = s.strip_prefix("n=").unwrap_or(s);
    if let Some(body) = s.strip_suffix('i') {
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let pos = (1..bytes.len())
            .rev()
            .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e')?;
        let re: f64 = body[..pos].parse().ok()?;
        let im: f64 = body[pos..].parse().ok()?;
        (im >= 0.0).then_some(Complex64::new(re, im))
    } else {
        s.parse().ok().map(|re| Complex64::new(re, 0.0))
    }
}
