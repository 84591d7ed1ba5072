//! Columnar CSV plus JSON header serialization of reduced fields.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::FieldError;
use crate::field::{Domain, FrameConstants, GridSpec, ReducedField};
use crate::geom::{basis, AltForm, Bivector, Endo4, Mat4, Metric4, Vec4};

/// Fixed 17-significant-digit rendering used by every CSV writer.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        // Avoid "-0" so reruns on different paths stay byte-identical.
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

const AXES: [&str; 4] = ["x1", "y1", "x2", "y2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub kind: String,
    pub rank: usize,
    /// `"scalar"`, `"covariant"`, `"contravariant"`, `"mixed"`, `"alternating"`.
    pub variance: String,
    pub components: Vec<String>,
    pub grid: GridSpec,
    pub frame: FrameConstants,
    pub deck_factor: f64,
}

/// Pointwise values with a flat component layout.
pub trait FieldValue: Copy {
    fn describe(&self) -> (&'static str, usize, &'static str);
    fn labels(&self) -> Vec<String>;
    fn flatten(&self) -> Vec<f64>;
    fn unflatten(header: &FieldHeader, c: &[f64]) -> Result<Self, FieldError>;
}

fn check_kind(header: &FieldHeader, kind: &str, count: usize, c: &[f64]) -> Result<(), FieldError> {
    if header.kind != kind || c.len() != count {
        return Err(FieldError::Format(format!(
            "expected {kind} with {count} components, header says {} with {}",
            header.kind,
            c.len()
        )));
    }
    Ok(())
}

impl FieldValue for f64 {
    fn describe(&self) -> (&'static str, usize, &'static str) {
        ("scalar", 0, "scalar")
    }
    fn labels(&self) -> Vec<String> {
        vec!["value".into()]
    }
    fn flatten(&self) -> Vec<f64> {
        vec![*self]
    }
    fn unflatten(h: &FieldHeader, c: &[f64]) -> Result<Self, FieldError> {
        check_kind(h, "scalar", 1, c)?;
        Ok(c[0])
    }
}

impl FieldValue for Vec4 {
    fn describe(&self) -> (&'static str, usize, &'static str) {
        ("vector", 1, "contravariant")
    }
    fn labels(&self) -> Vec<String> {
        AXES.iter().map(|a| format!("d_{a}")).collect()
    }
    fn flatten(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }
    fn unflatten(h: &FieldHeader, c: &[f64]) -> Result<Self, FieldError> {
        check_kind(h, "vector", 4, c)?;
        Ok(Vec4::from_column_slice(c))
    }
}

impl FieldValue for AltForm {
    fn describe(&self) -> (&'static str, usize, &'static str) {
        ("form", self.rank(), "alternating")
    }
    fn labels(&self) -> Vec<String> {
        basis(self.rank())
            .iter()
            .map(|m| {
                let parts: Vec<&str> = (0..4).filter(|i| m & (1 << i) != 0).map(|i| AXES[i]).collect();
                if parts.is_empty() {
                    "1".into()
                } else {
                    parts.iter().map(|p| format!("d{p}")).collect::<Vec<_>>().join("^")
                }
            })
            .collect()
    }
    fn flatten(&self) -> Vec<f64> {
        self.components().to_vec()
    }
    fn unflatten(h: &FieldHeader, c: &[f64]) -> Result<Self, FieldError> {
        if h.kind != "form" {
            return Err(FieldError::Format(format!("expected form, header says {}", h.kind)));
        }
        Ok(AltForm::from_components(h.rank, c)?)
    }
}

fn matrix_labels(prefix: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            out.push(format!("{prefix}_{}_{}", AXES[i], AXES[j]));
        }
    }
    out
}

fn flatten_matrix(m: &Mat4) -> Vec<f64> {
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            out.push(m[(i, j)]);
        }
    }
    out
}

macro_rules! matrix_value {
    ($ty:ident, $kind:expr, $var:expr) => {
        impl FieldValue for $ty {
            fn describe(&self) -> (&'static str, usize, &'static str) {
                ($kind, 2, $var)
            }
            fn labels(&self) -> Vec<String> {
                matrix_labels($kind)
            }
            fn flatten(&self) -> Vec<f64> {
                flatten_matrix(&self.0)
            }
            fn unflatten(h: &FieldHeader, c: &[f64]) -> Result<Self, FieldError> {
                check_kind(h, $kind, 16, c)?;
                Ok($ty(Mat4::from_row_slice(c)))
            }
        }
    };
}

matrix_value!(Endo4, "endomorphism", "mixed");
matrix_value!(Metric4, "metric", "covariant");
matrix_value!(Bivector, "bivector", "contravariant");

impl<T: FieldValue> ReducedField<T> {
    pub fn header(&self) -> FieldHeader {
        let first = self.values()[0];
        let (kind, rank, variance) = first.describe();
        let d = self.domain();
        FieldHeader {
            kind: kind.into(),
            rank,
            variance: variance.into(),
            components: first.labels(),
            grid: *d.grid.spec(),
            frame: d.frame,
            deck_factor: d.deck_factor,
        }
    }

    /// Writes the columnar CSV `(t, components...)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FieldError> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["t".to_string()];
        head.extend(self.values()[0].labels());
        out.write_record(&head).map_err(|e| FieldError::Format(e.to_string()))?;
        for (t, v) in self.t().iter().zip(self.values()) {
            let mut row = vec![fmt_num(*t)];
            row.extend(v.flatten().into_iter().map(fmt_num));
            out.write_record(&row).map_err(|e| FieldError::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_header<W: Write>(&self, w: W) -> Result<(), FieldError> {
        serde_json::to_writer_pretty(w, &self.header()).map_err(|e| FieldError::Format(e.to_string()))
    }

    /// Reads a field previously written by [`write_csv`](Self::write_csv) and
    /// [`write_header`](Self::write_header). The grid is rebuilt from the
    /// header and the sample positions are checked against it.
    pub fn read<R1: Read, R2: Read>(csv_src: R1, header_src: R2) -> Result<ReducedField<T>, FieldError> {
        let header: FieldHeader =
            serde_json::from_reader(header_src).map_err(|e| FieldError::Format(e.to_string()))?;
        let domain = Domain::new(header.grid, header.frame, header.deck_factor)?;
        Self::read_on(csv_src, &header, &domain)
    }

    pub fn read_on<R: Read>(csv_src: R, header: &FieldHeader, domain: &Arc<Domain>) -> Result<ReducedField<T>, FieldError> {
        let mut rd = csv::Reader::from_reader(csv_src);
        let mut data = Vec::with_capacity(domain.len());
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| FieldError::Format(e.to_string()))?;
            let nums: Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| FieldError::Format(format!("row {}: {e}", i + 1)))?;
            if nums.is_empty() || i >= domain.len() || (nums[0] - domain.t()[i]).abs() > 1e-9 * (1.0 + nums[0].abs()) {
                return Err(FieldError::Format(format!("row {} does not match the grid", i + 1)));
            }
            data.push(T::unflatten(header, &nums[1..])?);
        }
        ReducedField::new(domain.clone(), data).map_err(|_| FieldError::Format("wrong number of rows".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{wedge, Linear};

    #[test]
    fn round_trip_two_form() {
        let d = Domain::new(GridSpec::uniform(2.0, 40), FrameConstants::from_ratio(1.0), 2.0).unwrap();
        let f = ReducedField::from_fn(&d, |t| wedge(&AltForm::dx(0), &AltForm::dx(3)).unwrap().scaled(t.exp()));
        let (mut c, mut h) = (Vec::new(), Vec::new());
        f.write_csv(&mut c).unwrap();
        f.write_header(&mut h).unwrap();
        let back = ReducedField::<AltForm>::read(&c[..], &h[..]).unwrap();
        assert_eq!(back.values(), f.values());
        assert!(String::from_utf8(c).unwrap().starts_with("t,dx1^dy1"));
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-0.0), fmt_num(0.0));
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
