use serde::{Deserialize, Serialize};

/// A named residual, normally an interior sup-norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

/// Ordered table of named residuals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<Residual>,
}

impl Report {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push(Residual { name: name.into(), value });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    /// Largest entry; NaN wins so that broken inputs never look clean.
    pub fn max(&self) -> f64 {
        self.entries.iter().fold(0.0, |m: f64, e| if e.value.is_nan() || m.is_nan() { f64::NAN } else { m.max(e.value) })
    }

    /// Entries that are NaN or above `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&Residual> {
        self.entries.iter().filter(|e| !(e.value < tol)).collect()
    }

    pub fn all_below(&self, tol: f64) -> bool {
        self.failures(tol).is_empty()
    }

    pub fn extend(&mut self, prefix: &str, other: &Report) {
        for e in &other.entries {
            self.push(format!("{prefix}{}", e.name), e.value);
        }
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<28} {:.3e}", e.name, e.value)?;
        }
        Ok(())
    }
}
