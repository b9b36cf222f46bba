//! Resolving `--data` arguments into datasets.
//!
//! Accepted forms:
//!
//! * a path to a LIBSVM file;
//! * a bare name such as `phishing`, looked up as `$OKL_DATA_DIR/<name>`
//!   and then `data/<name>` (with and without a `.libsvm` suffix);
//! * `synth:<kind>[:key=value,...]` with kind `separable` or `noisy` and
//!   keys `T`, `d`, `margin`, `flip`, `seed`, `unit` (0/1, rescale into
//!   the unit ball).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use okl_core::data::{load_libsvm, synth_noisy, synth_separable, Dataset, SyntheticStream};

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Separable,
    Noisy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub t: usize,
    pub dim: usize,
    pub margin: f64,
    pub flip: f64,
    pub seed: u64,
    pub unit_ball: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::Separable,
            t: 1000,
            dim: 5,
            margin: 0.5,
            flip: 0.1,
            seed: 0,
            unit_ball: false,
        }
    }
}

impl SynthSpec {
    pub fn generate(&self) -> Result<SyntheticStream, BenchError> {
        let s = match self.kind {
            SynthKind::Separable => synth_separable(self.t, self.dim, self.margin, self.seed),
            SynthKind::Noisy => synth_noisy(self.t, self.dim, self.margin, self.flip, self.seed),
        }
        .map_err(|e| BenchError::Config(format!("--data: {e}")))?;
        if self.unit_ball {
            s.into_unit_ball().map_err(|e| BenchError::Run(e.to_string()))
        } else {
            Ok(s)
        }
    }

    /// Canonical spelling, used as the dataset name in result rows.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            SynthKind::Separable => "separable",
            SynthKind::Noisy => "noisy",
        };
        let mut s = format!(
            "synth:{kind}:T={},d={},margin={},seed={}",
            self.t, self.dim, self.margin, self.seed
        );
        if self.kind == SynthKind::Noisy {
            s.push_str(&format!(",flip={}", self.flip));
        }
        if self.unit_ball {
            s.push_str(",unit=1");
        }
        s
    }
}

impl FromStr for SynthSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        let bad = |m: String| BenchError::Config(format!("--data '{s}': {m}"));
        let rest = s.strip_prefix("synth:").ok_or_else(|| bad("expected synth:".into()))?;
        let (kind, params) = rest.split_once(':').unwrap_or((rest, ""));
        let mut spec = SynthSpec {
            kind: match kind {
                "separable" | "sep" => SynthKind::Separable,
                "noisy" => SynthKind::Noisy,
                other => return Err(bad(format!("unknown synthetic kind '{other}'"))),
            },
            ..Default::default()
        };
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{kv}'")))?;
            let num = || v.parse::<f64>().map_err(|_| bad(format!("bad value for {k}: '{v}'")));
            let int = || v.parse::<u64>().map_err(|_| bad(format!("bad value for {k}: '{v}'")));
            match k {
                "T" | "t" => spec.t = int()? as usize,
                "d" | "dim" => spec.dim = int()? as usize,
                "margin" => spec.margin = num()?,
                "flip" => spec.flip = num()?,
                "seed" => spec.seed = int()?,
                "unit" => spec.unit_ball = int()? != 0,
                _ => return Err(bad(format!("unknown key '{k}'"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic(SynthSpec),
}

impl DataSource {
    pub fn parse(s: &str) -> Result<Self, BenchError> {
        if s.starts_with("synth:") {
            return s.parse().map(DataSource::Synthetic);
        }
        resolve_path(s)
            .map(DataSource::File)
            .ok_or_else(|| BenchError::Config(format!("--data: no dataset found for '{s}'")))
    }

    pub fn load(&self) -> Result<Dataset, BenchError> {
        match self {
            DataSource::File(p) => {
                let mut ds = load_libsvm(p).map_err(|e| BenchError::Run(format!("{}: {e}", p.display())))?;
                ds.name = p
                    .file_stem()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok(ds)
            }
            DataSource::Synthetic(spec) => {
                let mut ds = spec.generate()?.dataset;
                ds.name = spec.label();
                Ok(ds)
            }
        }
    }
}

fn resolve_path(s: &str) -> Option<PathBuf> {
    let direct = Path::new(s);
    if direct.is_file() {
        return Some(direct.to_path_buf());
    }
    if direct.components().count() != 1 {
        return None;
    }
    let mut dirs: Vec<PathBuf> = Vec::new();
    if let Some(d) = std::env::var_os("OKL_DATA_DIR") {
        dirs.push(d.into());
    }
    dirs.push("data".into());
    for dir in dirs {
        for name in [s.to_string(), format!("{s}.libsvm"), format!("{s}.txt")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Some(p);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_spec_roundtrip() {
        let s: SynthSpec = "synth:noisy:T=200,d=3,margin=0.4,flip=0.05,seed=9".parse().unwrap();
        assert_eq!(s.kind, SynthKind::Noisy);
        assert_eq!((s.t, s.dim, s.seed), (200, 3, 9));
        assert_eq!(s.label().parse::<SynthSpec>().unwrap(), s);
    }

    #[test]
    fn bad_synth_specs() {
        assert!("synth:spiral".parse::<SynthSpec>().is_err());
        assert!("synth:noisy:T=abc".parse::<SynthSpec>().is_err());
        assert!("synth:noisy:q=1".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn missing_file_is_config_error() {
        assert!(matches!(
            DataSource::parse("no/such/file.libsvm"),
            Err(BenchError::Config(_))
        ));
    }
}
