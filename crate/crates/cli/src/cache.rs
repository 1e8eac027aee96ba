//! Content-addressed on-disk store for per-point sweep metrics.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gasmix_core::analysis::PointCache;
use sha2::{Digest, Sha256};

/// Environment variable that relocates the cache root.
pub const CACHE_ENV: &str = "GASMIX_CACHE_DIR";

/// Hex SHA-256 of arbitrary bytes.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Points are stored one file each under `<root>/<config hash>/`, named by
/// kind and the bit patterns of the forcing parameters. Metrics are kept as
/// raw bit patterns so that a cache hit reproduces the computed value
/// exactly, including NaN and infinities.
#[derive(Debug, Clone)]
pub struct FileCache {
    dir: PathBuf,
}

impl FileCache {
    pub fn new(root: &Path, config_hash: &str) -> std::io::Result<Self> {
        let dir = root.join(config_hash);
        fs::create_dir_all(&dir)?;
        Ok(FileCache { dir })
    }

    fn path(&self, kind: &str, omega: f64, kappa: f64) -> PathBuf {
        let kind: String = kind.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        self.dir.join(format!("{kind}-{:016x}-{:016x}.json", omega.to_bits(), kappa.to_bits()))
    }
}

impl PointCache for FileCache {
    fn get(&self, kind: &str, omega: f64, kappa: f64) -> Option<Vec<f64>> {
        let text = fs::read_to_string(self.path(kind, omega, kappa)).ok()?;
        let bits: Vec<String> = serde_json::from_str(&text).ok()?;
        bits.iter().map(|b| u64::from_str_radix(b, 16).ok().map(f64::from_bits)).collect()
    }

    fn put(&self, kind: &str, omega: f64, kappa: f64, metrics: &[f64]) {
        let bits: Vec<String> = metrics.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        let path = self.path(kind, omega, kappa);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let written = fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(serde_json::to_string(&bits).expect("strings serialize").as_bytes()))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = written {
            log::warn!("could not cache point ({omega}, {kappa}) at {}: {e}", path.display());
            let _ = fs::remove_file(&tmp);
        }
    }
}
