use serde::{Deserialize, Serialize};

use crate::field::FieldId;

/// Per-scanner presence of each field, indexed by [`FieldId::index`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicators {
    pub scanner: String,
    pub fields: [bool; FieldId::COUNT],
}

impl Indicators {
    pub fn new(scanner: &str, present: impl IntoIterator<Item = FieldId>) -> Indicators {
        let mut fields = [false; FieldId::COUNT];
        for f in present {
            fields[f.index()] = true;
        }
        Indicators {
            scanner: scanner.to_string(),
            fields,
        }
    }
}

/// Field-by-field phi coefficients. `None` where either indicator column is
/// constant across scanners.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: [[Option<f64>; FieldId::COUNT]; FieldId::COUNT],
    pub indicators: Vec<Indicators>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrelationError {
    #[error("correlation needs at least 2 scanners, got {0}")]
    InsufficientData(usize),
}

impl CorrelationMatrix {
    pub fn get(&self, a: FieldId, b: FieldId) -> Option<f64> {
        self.values[a.index()][b.index()]
    }

    /// Header row of field names, then one row per field; absent entries blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field");
        for f in FieldId::ALL {
            out.push(',');
            out.push_str(f.name());
        }
        out.push('\n');
        for (f, row) in FieldId::ALL.iter().zip(&self.values) {
            out.push_str(f.name());
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson correlation of two equal-length 0/1 vectors; `None` if either is constant.
pub fn phi(x: &[bool], y: &[bool]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let xs: Vec<f64> = x.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ys: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn correlation_matrix(indicators: &[Indicators]) -> Result<CorrelationMatrix, CorrelationError> {
    if indicators.len() < 2 {
        return Err(CorrelationError::InsufficientData(indicators.len()));
    }
    let column = |i: usize| -> Vec<bool> { indicators.iter().map(|s| s.fields[i]).collect() };
    let columns: Vec<Vec<bool>> = (0..FieldId::COUNT).map(column).collect();
    let mut values = [[None; FieldId::COUNT]; FieldId::COUNT];
    for i in 0..FieldId::COUNT {
        for j in i..FieldId::COUNT {
            let v = if i == j {
                phi(&columns[i], &columns[i]).map(|_| 1.0)
            } else {
                phi(&columns[i], &columns[j])
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        values,
        indicators: indicators.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_orthogonal_columns() {
        let x = [true, true, false, false];
        assert_eq!(phi(&x, &x), Some(1.0));
        assert_eq!(phi(&x, &[true, false, true, false]), Some(0.0));
        assert_eq!(phi(&x, &[false, false, true, true]), Some(-1.0));
        assert_eq!(phi(&x, &[true; 4]), None);
    }

    #[test]
    fn matrix_needs_two_scanners() {
        let one = [Indicators::new("a", [FieldId::Server])];
        assert_eq!(correlation_matrix(&one), Err(CorrelationError::InsufficientData(1)));
    }

    #[test]
    fn csv_shape() {
        let m = correlation_matrix(&[
            Indicators::new("a", [FieldId::Server]),
            Indicators::new("b", [FieldId::Location]),
        ])
        .unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 15);
        assert!(lines[0].starts_with("field,StatusMessage,Server"));
        assert!(lines.iter().all(|l| l.split(',').count() == 15));
        assert_eq!(m.get(FieldId::Server, FieldId::Location), Some(-1.0));
        assert_eq!(m.get(FieldId::Body, FieldId::Body), None);
    }
}
