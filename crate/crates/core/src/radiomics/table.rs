use crate::error::{Error, Result};
use crate::io_util::fmt_f64;

/// Feature rows keyed by case id, columns in a shared schema order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub case_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            case_ids: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, case_id: &str, row: Vec<f64>) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} columns", row.len(), self.names.len())));
        }
        self.case_ids.push(case_id.to_string());
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    /// Table restricted to the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::InvalidArgument(format!("unknown feature {n}"))))
            .collect::<Result<_>>()?;
        Ok(Self {
            names: names.to_vec(),
            case_ids: self.case_ids.clone(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&k| r[k]).collect()).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("case_id");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (id, row) in self.case_ids.iter().zip(&self.rows) {
            s.push_str(id);
            for v in row {
                s.push(',');
                s.push_str(&fmt_f64(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty feature table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"case_id") {
            return Err(Error::Parse("feature table must start with case_id".into()));
        }
        let mut t = Self::new(cols[1..].iter().map(|s| s.to_string()).collect());
        for (ln, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Parse(format!("feature line {}: {} fields, expected {}", ln + 2, f.len(), cols.len())));
            }
            let row = f[1..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("feature line {}: bad number {v}", ln + 2))))
                .collect::<Result<Vec<_>>>()?;
            t.push(f[0], row)?;
        }
        Ok(t)
    }
}
