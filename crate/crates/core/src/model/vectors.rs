//! Loaders for pretrained code vectors and per-code text vectors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Fixed-width vectors keyed by code.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl VectorTable {
    /// Parses `code,v1,...,vK` rows. A first row whose first field is
    /// `code` is treated as a header.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut vectors = BTreeMap::new();
        let mut dim = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 1;
            if i == 0 && rec.get(0) == Some("code") {
                continue;
            }
            let code = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, v)| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        path: path.to_string(),
                        line,
                        field: format!("v{}", j + 1),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None if values.is_empty() => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line,
                        field: "v1".into(),
                        message: "row has no vector components".into(),
                    })
                }
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line,
                        field: format!("v{}", values.len()),
                        message: format!("expected {d} components"),
                    })
                }
                _ => {}
            }
            vectors.insert(code, values);
        }
        let dim = dim.ok_or_else(|| Error::Validation(format!("{path}: no vectors")))?;
        Ok(Self { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Copies vectors into rows of `table` by token. Tokens without a vector
    /// keep their current row; the count is logged once.
    pub fn fill_table(&self, table: &mut Tensor, tokens: &[String], field: &str) -> usize {
        let dim = table.cols();
        let mut missing = 0;
        for (row, tok) in tokens.iter().enumerate().skip(2) {
            match self.vectors.get(tok) {
                Some(v) => table.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(v),
                None => missing += 1,
            }
        }
        if missing > 0 {
            log::warn!("{field}: {missing} codes lack a vector and keep their initial embedding");
        }
        missing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let a = VectorTable::parse("code,v1,v2\nA41,1,2\n", "x").unwrap();
        let b = VectorTable::parse("A41,1,2\n", "x").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim, 2);
    }

    #[test]
    fn ragged_row_names_line() {
        let err = VectorTable::parse("A41,1,2\nB20,1\n", "vec.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_codes_keep_their_rows() {
        let vt = VectorTable::parse("A41,1,2\n", "x").unwrap();
        let mut t = Tensor::filled(&[4, 2], 9.0);
        let toks: Vec<String> = ["UNK", "None", "A41", "Z99"].map(String::from).to_vec();
        assert_eq!(vt.fill_table(&mut t, &toks, "diag"), 1);
        assert_eq!(t.data(), &[9.0, 9.0, 9.0, 9.0, 1.0, 2.0, 9.0, 9.0]);
    }
}
