//! Chain serialization with provenance: a columnar CSV of draws, a manifest
//! recording every setting that affects results, and per-file checksums so a
//! reload refuses corrupted or mismatched stores.
//!
//! File layout under a chain directory:
//!
//! ```text
//! chain.csv        draw, beta_1..p, sigma2, tau2_1..K, lambda2_1..K
//! meta.txt         key = value manifest
//! checksums.txt    sha256 per data file
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every bit while the files stay diffable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::chain::{ChainDraw, ChainKind, ChainMeta, ChainStore};
use crate::dist::RngHandle;
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

/// What `save_chain` returns: where things were written and the hashes that
/// tie the files to their configuration.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub dir: PathBuf,
    pub config_hash: String,
    pub content_hash: String,
    pub software_version: String,
    pub created_unix: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn render_chain_csv(store: &ChainStore) -> String {
    let meta = &store.meta;
    let mut out = String::new();
    out.push_str("draw");
    for j in 1..=meta.p {
        let _ = write!(out, ",beta_{j}");
    }
    out.push_str(",sigma2");
    for j in 1..=meta.n_tau {
        let _ = write!(out, ",tau2_{j}");
    }
    for j in 1..=meta.n_lambda {
        let _ = write!(out, ",lambda2_{j}");
    }
    out.push('\n');
    for (i, d) in store.draws().iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for v in &d.beta {
            let _ = write!(out, ",{v}");
        }
        let _ = write!(out, ",{}", d.sigma2);
        for v in &d.tau2 {
            let _ = write!(out, ",{v}");
        }
        for v in &d.lambda2 {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn render_meta(store: &ChainStore, created_unix: u64) -> String {
    let meta = &store.meta;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("format_version", FORMAT_VERSION.to_string());
    kv("kind", meta.kind.name().to_string());
    kv("p", meta.p.to_string());
    kv("n_tau", meta.n_tau.to_string());
    kv("n_lambda", meta.n_lambda.to_string());
    kv("burn_in", meta.burn_in.to_string());
    kv("kept", meta.kept.to_string());
    kv("thin", meta.thin.to_string());
    kv("seed", meta.seed.seed.to_string());
    kv("stream", meta.seed.stream.to_string());
    kv("mode", meta.mode.clone());
    kv("delta", format!("{:e}", meta.delta));
    kv("dataset_fingerprint", meta.dataset_fingerprint.clone());
    if let Some(eb) = &meta.eb_lambda {
        kv(
            "eb_lambda",
            eb.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    if let Some(sizes) = &meta.group_sizes {
        kv(
            "group_sizes",
            sizes
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    if let Some(edges) = &meta.ancestry {
        kv(
            "ancestry",
            edges
                .iter()
                .map(|(a, b)| format!("{a}>{b}"))
                .collect::<Vec<_>>()
                .join(";"),
        );
    }
    kv("config_hash", meta.config_hash());
    kv("software_version", env!("CARGO_PKG_VERSION").to_string());
    kv("created_unix", created_unix.to_string());
    out
}

/// Write a chain store to `dir` (created if needed): `chain.csv`, `meta.txt`,
/// and `checksums.txt` covering both.
pub fn save_chain(store: &ChainStore, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let csv = render_chain_csv(store);
    let meta = render_meta(store, created);
    let csv_path = dir.join("chain.csv");
    let meta_path = dir.join("meta.txt");
    std::fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    std::fs::write(&meta_path, &meta).map_err(|e| Error::io(&meta_path, e))?;

    let checksums = format!(
        "{}  chain.csv\n{}  meta.txt\n",
        sha256_hex(csv.as_bytes()),
        sha256_hex(meta.as_bytes())
    );
    let sums_path = dir.join("checksums.txt");
    std::fs::write(&sums_path, &checksums).map_err(|e| Error::io(&sums_path, e))?;

    Ok(RunManifest {
        dir: dir.to_path_buf(),
        config_hash: store.meta.config_hash(),
        content_hash: store.content_hash(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: created,
    })
}

fn parse_meta(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            col: 1,
            message: "expected 'key = value'".to_string(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn meta_get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Manifest(format!("manifest is missing '{key}'")))
}

fn meta_parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta_get(map, key)?
        .parse::<T>()
        .map_err(|_| Error::Manifest(format!("manifest field '{key}' failed to parse")))
}

fn verify_checksum(dir: &Path, sums: &str, file: &str, content: &str) -> Result<()> {
    let line = sums
        .lines()
        .find(|l| l.trim_end().ends_with(file))
        .ok_or_else(|| Error::Manifest(format!("checksums.txt has no entry for {file}")))?;
    let recorded = line.split_whitespace().next().unwrap_or("");
    let actual = sha256_hex(content.as_bytes());
    if recorded != actual {
        return Err(Error::Checksum {
            file: dir.join(file).display().to_string(),
        });
    }
    Ok(())
}

/// Reload a chain directory, verifying checksums and the manifest's recorded
/// configuration hash before trusting anything.
pub fn load_chain(dir: &Path) -> Result<ChainStore> {
    let meta_path = dir.join("meta.txt");
    if !meta_path.exists() {
        return Err(Error::Manifest(format!(
            "no manifest at {}; refusing to guess a chain layout",
            meta_path.display()
        )));
    }
    let read =
        |p: &Path| -> Result<String> { std::fs::read_to_string(p).map_err(|e| Error::io(p, e)) };
    let meta_text = read(&meta_path)?;
    let csv_text = read(&dir.join("chain.csv"))?;
    let sums_text = read(&dir.join("checksums.txt"))?;
    verify_checksum(dir, &sums_text, "chain.csv", &csv_text)?;
    verify_checksum(dir, &sums_text, "meta.txt", &meta_text)?;

    let map = parse_meta(&meta_path, &meta_text)?;
    let version: u32 = meta_parse(&map, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "format version {version} not supported (expected {FORMAT_VERSION})"
        )));
    }
    let p: usize = meta_parse(&map, "p")?;
    let n_tau: usize = meta_parse(&map, "n_tau")?;
    let n_lambda: usize = meta_parse(&map, "n_lambda")?;
    let meta = ChainMeta {
        kind: ChainKind::parse(meta_get(&map, "kind")?)?,
        p,
        n_tau,
        n_lambda,
        burn_in: meta_parse(&map, "burn_in")?,
        kept: meta_parse(&map, "kept")?,
        thin: meta_parse(&map, "thin")?,
        seed: RngHandle::new(meta_parse(&map, "seed")?, meta_parse(&map, "stream")?),
        mode: meta_get(&map, "mode")?.to_string(),
        delta: meta_parse(&map, "delta")?,
        dataset_fingerprint: meta_get(&map, "dataset_fingerprint")?.to_string(),
        eb_lambda: match map.get("eb_lambda") {
            Some(s) => Some(
                s.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| {
                            Error::Manifest("eb_lambda entry failed to parse".to_string())
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        },
        group_sizes: match map.get("group_sizes") {
            Some(s) => Some(
                s.split(',')
                    .map(|t| {
                        t.trim().parse::<usize>().map_err(|_| {
                            Error::Manifest("group_sizes entry failed to parse".to_string())
                        })
                    })
                    .collect::<Result<Vec<usize>>>()?,
            ),
            None => None,
        },
        ancestry: match map.get("ancestry") {
            Some(s) => Some(
                s.split(';')
                    .map(|t| {
                        let (a, b) = t.split_once('>').ok_or_else(|| {
                            Error::Manifest("ancestry entry needs 'a>b'".to_string())
                        })?;
                        Ok((
                            a.trim().parse::<usize>().map_err(|_| {
                                Error::Manifest("ancestry entry failed to parse".to_string())
                            })?,
                            b.trim().parse::<usize>().map_err(|_| {
                                Error::Manifest("ancestry entry failed to parse".to_string())
                            })?,
                        ))
                    })
                    .collect::<Result<Vec<(usize, usize)>>>()?,
            ),
            None => None,
        },
    };

    // the manifest carries the hash of the configuration it was written
    // with; a recomputation mismatch means the fields were edited
    let stored_hash = meta_get(&map, "config_hash")?.to_string();
    let recomputed = meta.config_hash();
    if stored_hash != recomputed {
        return Err(Error::ManifestMismatch {
            stored: stored_hash,
            recomputed,
        });
    }

    let csv_path = dir.join("chain.csv");
    let mut lines = csv_text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: csv_path.clone(),
        row: 1,
        col: 1,
        message: "empty chain.csv".to_string(),
    })?;
    let expected_cols = 1 + p + 1 + n_tau + n_lambda;
    if header.split(',').count() != expected_cols {
        return Err(Error::Parse {
            path: csv_path.clone(),
            row: 1,
            col: 1,
            message: format!(
                "header has {} columns, manifest implies {expected_cols}",
                header.split(',').count()
            ),
        });
    }
    let mut store = ChainStore::new(meta);
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Parse {
                path: csv_path.clone(),
                row,
                col: fields.len(),
                message: format!("expected {expected_cols} fields, found {}", fields.len()),
            });
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col].parse::<f64>().map_err(|_| Error::Parse {
                path: csv_path.clone(),
                row,
                col: col + 1,
                message: format!("'{}' is not numeric", fields[col]),
            })
        };
        let beta = (1..1 + p).map(parse).collect::<Result<Vec<f64>>>()?;
        let sigma2 = parse(1 + p)?;
        let tau2 = (2 + p..2 + p + n_tau)
            .map(parse)
            .collect::<Result<Vec<f64>>>()?;
        let lambda2 = (2 + p + n_tau..expected_cols)
            .map(parse)
            .collect::<Result<Vec<f64>>>()?;
        store.record(ChainDraw {
            beta,
            sigma2,
            tau2,
            lambda2,
        });
    }
    if store.len() != store.meta.kept {
        return Err(Error::Manifest(format!(
            "manifest promises {} draws, file has {}",
            store.meta.kept,
            store.len()
        )));
    }
    Ok(store)
}
