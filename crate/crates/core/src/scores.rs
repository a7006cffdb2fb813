//! Per-sample class score tables and their text file format.
//!
//! ```text
//! vidfuse-scores<TAB>1
//! samples<TAB>N<TAB>classes<TAB>C<TAB>manifest<TAB>HASH<TAB>kind<TAB>probability|logit
//! id<TAB>class_0<TAB>...<TAB>class_{C-1}
//! <sample id><TAB>v_0<TAB>...<TAB>v_{C-1}      (N lines)
//! ```
//!
//! Values are written as shortest round-trip decimals, so a write/read
//! cycle is bit-exact. `HASH` is [`class_manifest_hash`] of the class
//! names on line 3.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{argmax, Matrix};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("score matrix has {rows} rows but {ids} sample ids")]
    RowCount { rows: usize, ids: usize },
    #[error("score matrix has {cols} columns but {classes} classes")]
    ColumnCount { cols: usize, classes: usize },
    #[error("non-finite score for sample {id}")]
    NonFinite { id: String },
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("invalid class name {0:?}")]
    ClassName(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Whether rows are post-softmax probabilities or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Probability,
    Logit,
}

impl ScoreKind {
    fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Probability => "probability",
            ScoreKind::Logit => "logit",
        }
    }
}

/// Stable short hash of an ordered class list.
pub fn class_manifest_hash(classes: &[String]) -> String {
    let mut h = Sha256::new();
    for c in classes {
        h.update(c.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `N × C` score table with one row per sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    classes: Vec<String>,
    values: Matrix,
    kind: ScoreKind,
}

impl ScoreMatrix {
    pub fn new(
        ids: Vec<String>,
        classes: Vec<String>,
        values: Matrix,
        kind: ScoreKind,
    ) -> Result<Self, ScoreError> {
        if values.rows() != ids.len() {
            return Err(ScoreError::RowCount {
                rows: values.rows(),
                ids: ids.len(),
            });
        }
        if values.cols() != classes.len() {
            return Err(ScoreError::ColumnCount {
                cols: values.cols(),
                classes: classes.len(),
            });
        }
        for c in &classes {
            if c.is_empty() || c.contains(['\t', '\n', '\r']) {
                return Err(ScoreError::ClassName(c.clone()));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(['\t', '\n', '\r']) || !seen.insert(id.as_str()) {
                return Err(ScoreError::DuplicateId(id.clone()));
            }
            if !values.row(i).iter().all(|v| v.is_finite()) {
                return Err(ScoreError::NonFinite { id: id.clone() });
            }
        }
        Ok(Self {
            ids,
            classes,
            values,
            kind,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn num_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn manifest_hash(&self) -> String {
        class_manifest_hash(&self.classes)
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predictions(&self) -> Vec<usize> {
        self.values.row_iter().map(argmax).collect()
    }

    /// Same ids and classes with new values.
    pub fn with_values(&self, values: Matrix, kind: ScoreKind) -> Result<Self, ScoreError> {
        Self::new(self.ids.clone(), self.classes.clone(), values, kind)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("vidfuse-scores\t1\n");
        let _ = writeln!(
            s,
            "samples\t{}\tclasses\t{}\tmanifest\t{}\tkind\t{}",
            self.num_samples(),
            self.num_classes(),
            self.manifest_hash(),
            self.kind.as_str()
        );
        s.push_str("id");
        for c in &self.classes {
            s.push('\t');
            s.push_str(c);
        }
        s.push('\n');
        for (id, row) in self.ids.iter().zip(self.values.row_iter()) {
            s.push_str(id);
            for v in row {
                let _ = write!(s, "\t{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str, path: &str) -> Result<Self, ScoreError> {
        let err = |line: usize, message: String| ScoreError::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some("vidfuse-scores\t1") {
            return Err(err(1, "expected header `vidfuse-scores<TAB>1`".into()));
        }
        let meta: Vec<&str> = lines
            .next()
            .ok_or_else(|| err(2, "missing metadata line".into()))?
            .split('\t')
            .collect();
        if meta.len() != 8
            || meta[0] != "samples"
            || meta[2] != "classes"
            || meta[4] != "manifest"
            || meta[6] != "kind"
        {
            return Err(err(2, "malformed metadata line".into()));
        }
        let n: usize = meta[1]
            .parse()
            .map_err(|_| err(2, "bad sample count".into()))?;
        let c: usize = meta[3]
            .parse()
            .map_err(|_| err(2, "bad class count".into()))?;
        let kind = match meta[7] {
            "probability" => ScoreKind::Probability,
            "logit" => ScoreKind::Logit,
            other => return Err(err(2, format!("unknown score kind {other:?}"))),
        };
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| err(3, "missing class header".into()))?
            .split('\t')
            .collect();
        if header.first() != Some(&"id") || header.len() != c + 1 {
            return Err(err(3, format!("class header must list {c} classes")));
        }
        let classes: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
        if class_manifest_hash(&classes) != meta[5] {
            return Err(err(2, "manifest hash does not match class header".into()));
        }
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * c);
        for (k, line) in lines.enumerate() {
            let lineno = k + 4;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != c + 1 {
                return Err(err(
                    lineno,
                    format!("expected {} fields, found {}", c + 1, fields.len()),
                ));
            }
            ids.push(fields[0].to_string());
            for f in &fields[1..] {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad number {f:?}")))?,
                );
            }
        }
        if ids.len() != n {
            return Err(err(
                3 + ids.len(),
                format!("expected {n} rows, found {}", ids.len()),
            ));
        }
        let values = Matrix::from_vec(n, c, data).expect("row widths checked");
        Self::new(ids, classes, values, kind)
    }

    pub fn write(&self, path: &Path) -> Result<(), ScoreError> {
        std::fs::write(path, self.to_text()).map_err(|source| ScoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ScoreError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScoreError::Io {
            path: p.clone(),
            source,
        })?;
        Self::parse_text(&text, &p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ScoreMatrix {
        ScoreMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
            Matrix::from_rows(&[[0.1, 0.2, 0.7], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap(),
            ScoreKind::Probability,
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let s = sample();
        let back = ScoreMatrix::parse_text(&s.to_text(), "mem").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_hash_and_rows() {
        let text = sample()
            .to_text()
            .replace(&sample().manifest_hash(), "0000000000000000");
        assert!(matches!(
            ScoreMatrix::parse_text(&text, "mem"),
            Err(ScoreError::Parse { line: 2, .. })
        ));
        let truncated: String = sample()
            .to_text()
            .lines()
            .take(4)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(ScoreMatrix::parse_text(&truncated, "mem").is_err());
    }

    #[test]
    fn rejects_duplicate_ids_and_nan() {
        let dup = ScoreMatrix::new(
            vec!["a".into(), "a".into()],
            vec!["x".into()],
            Matrix::zeros(2, 1),
            ScoreKind::Probability,
        );
        assert!(matches!(dup, Err(ScoreError::DuplicateId(_))));
        let nan = ScoreMatrix::new(
            vec!["a".into()],
            vec!["x".into()],
            Matrix::filled(1, 1, f64::NAN),
            ScoreKind::Logit,
        );
        assert!(matches!(nan, Err(ScoreError::NonFinite { .. })));
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
            let n = values.len();
            let ids = (0..n).map(|i| format!("s{i}")).collect();
            let m = ScoreMatrix::new(ids, vec!["c".into()], Matrix::from_vec(n, 1, values).unwrap(), ScoreKind::Logit).unwrap();
            let back = ScoreMatrix::parse_text(&m.to_text(), "mem").unwrap();
            for (a, b) in m.values().as_slice().iter().zip(back.values().as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
