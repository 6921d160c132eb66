//! Reading a phantom-style dataset directory back and splitting it.

use std::fs;
use std::path::Path;

use crate::phantom::{mask_file, phase_file};
use crate::rng::{hash_str, mix64, stream};
use crate::volume::{read_mask, read_volume, CaseBundle};
use crate::{Error, Result};

/// `case_id,pcr` rows in file order.
pub fn read_labels(dir: &Path) -> Result<Vec<(String, u8)>> {
    let path = dir.join("labels.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<Vec<(String, u8)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("case_id,pcr") {
        return Err(Error::Parse("labels header must be case_id,pcr".into()));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, y) = line.split_once(',').ok_or_else(|| Error::Parse(format!("labels line {}: {line:?}", n + 2)))?;
        let y = match y.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Parse(format!("labels line {}: label {other:?}", n + 2))),
        };
        out.push((id.trim().to_string(), y));
    }
    Ok(out)
}

pub fn load_case(dir: &Path, id: &str) -> Result<CaseBundle> {
    let phase = |p| read_volume(&dir.join(phase_file(id, p)));
    let (mask, _) = read_mask(&dir.join(mask_file(id)))?;
    CaseBundle::new(id, [phase(0)?, phase(1)?, phase(2)?], mask)
}

/// Seeded hold-out split by case id. Returns `(train, test)`, each sorted;
/// `round(n * fraction)` cases land in the test set.
pub fn holdout_split(ids: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("hold-out fraction {fraction} outside [0, 1)")));
    }
    let key = mix64(seed ^ mix64(stream::SPLIT));
    let mut order: Vec<&String> = ids.iter().collect();
    order.sort_by_key(|id| (hash_str(key, id), id.as_str()));
    let n_test = (ids.len() as f64 * fraction).round() as usize;
    let mut test: Vec<String> = order[..n_test].iter().map(|s| s.to_string()).collect();
    let mut train: Vec<String> = order[n_test..].iter().map(|s| s.to_string()).collect();
    test.sort();
    train.sort();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_order_independence() {
        let ids: Vec<String> = (0..100).map(|i| format!("case_{i:04}")).collect();
        let (tr, te) = holdout_split(&ids, 0.2, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(holdout_split(&rev, 0.2, 3).unwrap(), (tr.clone(), te.clone()));
        assert_ne!(holdout_split(&ids, 0.2, 4).unwrap().1, te);
        assert!(holdout_split(&ids, 1.0, 3).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("case_id,pcr\na,1\nb,0\n").unwrap(), vec![("a".into(), 1), ("b".into(), 0)]);
        assert!(parse_labels("id,y\n").is_err());
        assert!(parse_labels("case_id,pcr\na,2\n").is_err());
    }
}
