use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::ExtensionScheme;
use crate::signals::{bundled, LawKind, ScenarioFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawSelection {
    Gradient,
    Averaging,
    Both,
}

impl LawSelection {
    pub fn laws(self) -> Vec<LawKind> {
        match self {
            LawSelection::Gradient => vec![LawKind::Gradient],
            LawSelection::Averaging => vec![LawKind::Averaging],
            LawSelection::Both => vec![LawKind::Gradient, LawKind::Averaging],
        }
    }
}

impl std::str::FromStr for LawSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(LawSelection::Gradient),
            "averaging" => Ok(LawSelection::Averaging),
            "both" => Ok(LawSelection::Both),
            other => Err(Error::invalid("law", format!("`{other}` is not gradient|averaging|both"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub l: Option<f64>,
    pub mu: Option<f64>,
    pub k: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub sample_every: Option<f64>,
}

impl Overrides {
    /// Applies the overrides to `file`; `gamma` goes to every selected law.
    pub fn apply(&self, file: &mut ScenarioFile, laws: &[LawKind]) -> Result<()> {
        if let Some(g) = self.gamma {
            for law in laws {
                match law {
                    LawKind::Gradient => {
                        if let Some(p) = file.gradient.as_mut() {
                            p.gamma = g;
                        }
                    }
                    LawKind::Averaging => {
                        if let Some(p) = file.averaging.as_mut() {
                            p.gamma = g;
                        }
                    }
                }
            }
        }
        match (&mut file.extension, self.l, self.mu) {
            (ExtensionScheme::Kreisselmeier { l }, Some(v), None) => *l = v,
            (ExtensionScheme::FeDecay { mu }, None, Some(v)) => *mu = v,
            (_, None, None) => {}
            (ExtensionScheme::Kreisselmeier { .. }, _, Some(_)) => {
                return Err(Error::invalid("mu", "scenario uses the kreisselmeier extension"))
            }
            (ExtensionScheme::FeDecay { .. }, Some(_), _) => {
                return Err(Error::invalid("l", "scenario uses the fe_decay extension"))
            }
        }
        if let Some(k) = &self.k {
            let avg = file
                .averaging
                .as_mut()
                .ok_or_else(|| Error::invalid("k", "scenario has no [averaging] table"))?;
            avg.k = k.clone();
        }
        if let Some(h) = self.step {
            file.step = h;
            if self.sample_every.is_none() {
                // keep the sampling grid when it is still a multiple of the new step
                let every = file.sample_every.unwrap_or(h);
                let ratio = (every / h).round();
                if ratio < 1.0 || (ratio * h - every).abs() > 1e-12 {
                    file.sample_every = Some(h);
                }
            }
        }
        if let Some(t) = self.horizon {
            file.horizon = t;
        }
        if let Some(s) = self.sample_every {
            file.sample_every = Some(s);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Path to a scenario file, or the name of a bundled scenario.
    pub scenario: String,
    pub law: LawSelection,
    pub overrides: Overrides,
    pub out_dir: PathBuf,
}

/// Reads a scenario file from disk, falling back to the bundled scenario of
/// that name when no such file exists.
pub fn load_scenario(source: &str) -> Result<ScenarioFile> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = ScenarioFile::parse(&text, source)?;
        file.validate()?;
        return Ok(file);
    }
    if crate::signals::bundled_source(source).is_some() {
        return bundled(source);
    }
    Err(Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario"),
    ))
}

/// Loads the scenario named by `config` with its overrides applied and
/// validated.
pub fn load_config(config: &RunConfig) -> Result<ScenarioFile> {
    let mut file = load_scenario(&config.scenario)?;
    let laws = config.law.laws();
    config.overrides.apply(&mut file, &laws)?;
    for law in &laws {
        file.spec_for(*law)?;
    }
    file.validate()?;
    Ok(file)
}
