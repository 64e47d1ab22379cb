//! Splitting labelled samples across agents, and the CIFAR-10 binary reader.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Assigns `n·m` of the samples to `n` agents, `m` each, returning sample
/// indices per agent. Only the first `n·m` samples are retained.
///
/// Heterogeneous: stable sort of the retained samples by label, then
/// contiguous blocks. Homogeneous: seeded shuffle, then round-robin.
pub fn partition_data(labels: &[f64], n: usize, m: usize, heterogeneous: bool, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 || m == 0 {
        return Err(Error::Config("n and m must be positive".into()));
    }
    let needed = n * m;
    if labels.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            available: labels.len(),
        });
    }
    let mut idx: Vec<usize> = (0..needed).collect();
    if heterogeneous {
        idx.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));
        Ok(idx.chunks(m).map(|c| c.to_vec()).collect())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let mut parts = vec![Vec::with_capacity(m); n];
        for (k, j) in idx.into_iter().enumerate() {
            parts[k % n].push(j);
        }
        Ok(parts)
    }
}

pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_NEGATIVE_CLASS: u8 = 0;
pub const CIFAR_POSITIVE_CLASS: u8 = 9;

/// Reads every `data_batch_*.bin` and `test_batch.bin` file in `dir` (sorted
/// by name) and keeps the two classes used for the binary task. Pixels are
/// scaled to `[0, 1]`; class 0 maps to `-1` and class 9 to `+1`.
pub fn load_cifar10(dir: &Path) -> Result<(Vec<Vector>, Vec<f64>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with(".bin") && (s.starts_with("data_batch") || s == "test_batch.bin"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no CIFAR-10 batch files in {}", dir.display())));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| Error::io(f.display().to_string(), e))?;
        parse_cifar_records(&bytes, &mut features, &mut labels)
            .map_err(|e| Error::Config(format!("{}: {e}", f.display())))?;
    }
    Ok((features, labels))
}

/// Appends the binary-task records found in one batch file's bytes.
pub fn parse_cifar_records(bytes: &[u8], features: &mut Vec<Vector>, labels: &mut Vec<f64>) -> Result<()> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Config(format!(
            "length {} is not a multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        )));
    }
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = match rec[0] {
            CIFAR_NEGATIVE_CLASS => -1.0,
            CIFAR_POSITIVE_CLASS => 1.0,
            _ => continue,
        };
        features.push(Vector::from_iterator(3072, rec[1..].iter().map(|&b| b as f64 / 255.0)));
        labels.push(label);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heterogeneous_two_labels_are_pure() {
        let labels: Vec<f64> = (0..20).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let parts = partition_data(&labels, 2, 10, true, 0).unwrap();
        for p in &parts {
            let first = labels[p[0]];
            assert!(p.iter().all(|&j| labels[j] == first));
        }
        assert_ne!(labels[parts[0][0]], labels[parts[1][0]]);
    }

    #[test]
    fn homogeneous_balances_labels() {
        let labels: Vec<f64> = (0..2000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let parts = partition_data(&labels, 8, 250, false, 3).unwrap();
        for p in &parts {
            assert_eq!(p.len(), 250);
            let pos = p.iter().filter(|&&j| labels[j] > 0.0).count() as f64 / 250.0;
            assert!((pos - 0.5).abs() <= 0.1, "ratio {pos}");
        }
    }

    #[test]
    fn single_agent_gets_everything_retained() {
        let labels = vec![1.0, -1.0, 1.0, -1.0, 1.0];
        let parts = partition_data(&labels, 1, 4, false, 0).unwrap();
        let mut got = parts[0].clone();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn partition_is_a_disjoint_cover() {
        let labels: Vec<f64> = (0..37).map(|k| ((k * 7) % 3) as f64).collect();
        for het in [true, false] {
            let parts = partition_data(&labels, 4, 9, het, 5).unwrap();
            let mut all: Vec<usize> = parts.concat();
            all.sort();
            assert_eq!(all, (0..36).collect::<Vec<_>>());
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            partition_data(&[1.0; 5], 2, 3, true, 0),
            Err(Error::InsufficientSamples { needed: 6, available: 5 })
        ));
    }

    #[test]
    fn cifar_records_filtered_and_scaled() {
        let mut bytes = Vec::new();
        for (label, px) in [(0u8, 255u8), (3, 10), (9, 51)] {
            bytes.push(label);
            bytes.extend(std::iter::repeat_n(px, 3072));
        }
        let (mut f, mut l) = (Vec::new(), Vec::new());
        parse_cifar_records(&bytes, &mut f, &mut l).unwrap();
        assert_eq!(l, vec![-1.0, 1.0]);
        assert_eq!(f[0][0], 1.0);
        assert!((f[1][100] - 0.2).abs() < 1e-15);
        assert!(parse_cifar_records(&bytes[1..], &mut f, &mut l).is_err());
    }
}
