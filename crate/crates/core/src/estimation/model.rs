use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numfmt::{g17, parse_f64};

pub const MODEL_FORMAT_HEADER: &str = "quadid-model v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Structure {
    Arx,
    Armax,
}

impl Structure {
    pub fn tag(self) -> &'static str {
        match self {
            Structure::Arx => "ARX",
            Structure::Armax => "ARMAX",
        }
    }
}

/// `A(q) y(t) = B(q) u(t) + C(q) e(t)` with monic `A` and `C`.
///
/// `a` holds `a_1..a_na`, `b` holds `b_nk..b_{nk+nb−1}` (the `nk` leading
/// zeros are implicit), `c` holds `c_1..c_nc` and is empty for ARX.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    pub structure: Structure,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub nk: usize,
    pub sample_time: f64,
    pub noise_variance: f64,
    /// Row/column order: a, b, c. May be empty when unknown.
    pub param_covariance: DMatrix<f64>,
}

impl PolyModel {
    /// ARX model from coefficient lists without the leading 1 of `A`.
    pub fn arx(a: Vec<f64>, b: Vec<f64>, nk: usize, sample_time: f64) -> Result<Self> {
        let m = PolyModel {
            structure: Structure::Arx,
            a,
            b,
            c: Vec::new(),
            nk,
            sample_time,
            noise_variance: 0.0,
            param_covariance: DMatrix::zeros(0, 0),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn armax(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, nk: usize, sample_time: f64) -> Result<Self> {
        let m = PolyModel {
            structure: Structure::Armax,
            c,
            ..Self::arx(a, b, nk, sample_time)?
        };
        m.validate()?;
        Ok(m)
    }

    /// From full polynomials `A = [1, a_1, ..]` and `B = [b_0, b_1, ..]`;
    /// leading zeros of `B` become the delay.
    pub fn from_polynomials(a_full: &[f64], b_full: &[f64], sample_time: f64) -> Result<Self> {
        if a_full.first() != Some(&1.0) {
            return Err(Error::Model("A(z) must have leading coefficient exactly 1".into()));
        }
        let nk = b_full.iter().position(|&v| v != 0.0).unwrap_or(b_full.len().saturating_sub(1));
        let mut b: Vec<f64> = b_full[nk.min(b_full.len())..].to_vec();
        while b.len() > 1 && *b.last().unwrap() == 0.0 {
            b.pop();
        }
        if b.is_empty() {
            b.push(0.0);
        }
        Self::arx(a_full[1..].to_vec(), b, nk, sample_time)
    }

    pub fn na(&self) -> usize {
        self.a.len()
    }

    pub fn nb(&self) -> usize {
        self.b.len()
    }

    pub fn nc(&self) -> usize {
        self.c.len()
    }

    pub fn n_params(&self) -> usize {
        self.na() + self.nb() + self.nc()
    }

    /// `[1, a_1, .., a_na]`
    pub fn a_poly(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.a.iter().copied()).collect()
    }

    /// `[0 (×nk), b_nk, ..]`
    pub fn b_poly(&self) -> Vec<f64> {
        std::iter::repeat(0.0).take(self.nk).chain(self.b.iter().copied()).collect()
    }

    pub fn c_poly(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.c.iter().copied()).collect()
    }

    /// Order label in the usual compact style, e.g. `10105` or `3331`.
    pub fn order_code(&self) -> String {
        match self.structure {
            Structure::Arx => format!("{}{}{}", self.na(), self.nb(), self.nk),
            Structure::Armax => format!("{}{}{}{}", self.na(), self.nb(), self.nc(), self.nk),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.is_empty() {
            return Err(Error::Model("nb must be at least 1".into()));
        }
        if self.structure == Structure::Arx && !self.c.is_empty() {
            return Err(Error::Model("ARX model cannot carry C coefficients".into()));
        }
        if self.structure == Structure::Armax && self.c.is_empty() {
            return Err(Error::Model("ARMAX model needs nc >= 1".into()));
        }
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(Error::Model(format!("sample time must be positive, got {}", self.sample_time)));
        }
        if self.a.iter().chain(&self.b).chain(&self.c).any(|v| !v.is_finite()) {
            return Err(Error::Model("coefficients must be finite".into()));
        }
        let (r, c) = self.param_covariance.shape();
        if r != c || (r != 0 && r != self.n_params()) {
            return Err(Error::Model(format!(
                "covariance is {r}x{c}, expected {0}x{0} or empty",
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Versioned plain-text form, numbers at 17 significant digits.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| g17(*x)).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_FORMAT_HEADER}");
        let _ = writeln!(s, "structure = {}", self.structure.tag());
        let _ = writeln!(s, "na = {}", self.na());
        let _ = writeln!(s, "nb = {}", self.nb());
        let _ = writeln!(s, "nc = {}", self.nc());
        let _ = writeln!(s, "nk = {}", self.nk);
        let _ = writeln!(s, "sample_time = {}", g17(self.sample_time));
        let _ = writeln!(s, "a = {}", list(&self.a_poly()));
        let _ = writeln!(s, "b = {}", list(&self.b));
        let _ = writeln!(s, "{}", format!("c = {}", list(&self.c)).trim_end());
        let _ = writeln!(s, "noise_variance = {}", g17(self.noise_variance));
        let _ = writeln!(s, "covariance_dim = {}", self.param_covariance.nrows());
        let cov: Vec<f64> = self.param_covariance.transpose().iter().copied().collect();
        let _ = writeln!(s, "{}", format!("covariance = {}", list(&cov)).trim_end());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h == MODEL_FORMAT_HEADER => {}
            Some(h) => return Err(Error::Parse(format!("unsupported model header '{h}'"))),
            None => return Err(Error::Parse("empty model file".into())),
        }
        let mut fields = std::collections::BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{line}'")))?;
            if fields.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate key '{}'", k.trim())));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("missing key '{k}'")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Parse(format!("bad integer for '{k}'")))
        };
        let num = |k: &str| -> Result<f64> {
            parse_f64(get(k)?).ok_or_else(|| Error::Parse(format!("bad number for '{k}'")))
        };
        let list = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split_whitespace()
                .map(|t| parse_f64(t).ok_or_else(|| Error::Parse(format!("bad number '{t}' in '{k}'"))))
                .collect()
        };
        let structure = match get("structure")? {
            "ARX" => Structure::Arx,
            "ARMAX" => Structure::Armax,
            "BJ" | "OE" => {
                return Err(Error::NotImplemented(format!(
                    "{} model structures are not supported",
                    get("structure")?
                )))
            }
            other => return Err(Error::Parse(format!("unknown structure '{other}'"))),
        };
        let (na, nb, nc, nk) = (int("na")?, int("nb")?, int("nc")?, int("nk")?);
        let a_full = list("a")?;
        if a_full.first() != Some(&1.0) {
            return Err(Error::Model("A(z) must have leading coefficient exactly 1".into()));
        }
        let (a, b, c) = (a_full[1..].to_vec(), list("b")?, list("c")?);
        if a.len() != na || b.len() != nb || c.len() != nc {
            return Err(Error::Parse(format!(
                "coefficient counts ({}, {}, {}) disagree with orders ({na}, {nb}, {nc})",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        let dim = int("covariance_dim")?;
        let cov = list("covariance")?;
        if cov.len() != dim * dim {
            return Err(Error::Parse(format!("covariance has {} entries, expected {}", cov.len(), dim * dim)));
        }
        let m = PolyModel {
            structure,
            a,
            b,
            c,
            nk,
            sample_time: num("sample_time")?,
            noise_variance: num("noise_variance")?,
            param_covariance: DMatrix::from_row_slice(dim, dim, &cov),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
