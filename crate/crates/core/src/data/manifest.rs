//! Tab-separated dataset manifest with a header row:
//! `id city split spectral dsm dtm ndsm labels gsd_cm`.
//! Layer paths are relative to the manifest's directory; `-` marks an
//! absent layer.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codec::write_atomic;
use crate::kv::KvFile;

use super::raster::RasterTile;
use super::rseg;
use super::{DataError, NormStats};

pub const HEADER: [&str; 9] = ["id", "city", "split", "spectral", "dsm", "dtm", "ndsm", "labels", "gsd_cm"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(DataError::Invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub city: String,
    pub split: Split,
    pub spectral: Option<String>,
    pub dsm: Option<String>,
    pub dtm: Option<String>,
    pub ndsm: Option<String>,
    pub labels: String,
    pub gsd_cm: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory layer paths are resolved against.
    pub dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("-")
}

impl DatasetManifest {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), records: Vec::new() }
    }

    pub fn render(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for r in &self.records {
            let row = [
                r.id.as_str(),
                &r.city,
                &r.split.to_string(),
                opt(&r.spectral),
                opt(&r.dsm),
                opt(&r.dtm),
                opt(&r.ndsm),
                &r.labels,
                &r.gsd_cm.to_string(),
            ]
            .join("\t");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, dir: impl Into<PathBuf>) -> Result<Self, DataError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| DataError::Invalid("empty manifest".into()))?.split('\t').collect();
        if header != HEADER {
            return Err(DataError::Invalid(format!("manifest header {header:?} != {HEADER:?}")));
        }
        let mut m = Self::new(dir);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != HEADER.len() {
                return Err(DataError::Invalid(format!("manifest row {}: {} fields", i + 2, f.len())));
            }
            let layer = |s: &str| (s != "-").then(|| s.to_string());
            m.records.push(ManifestRecord {
                id: f[0].to_string(),
                city: f[1].to_string(),
                split: f[2].parse()?,
                spectral: layer(f[3]),
                dsm: layer(f[4]),
                dtm: layer(f[5]),
                ndsm: layer(f[6]),
                labels: f[7].to_string(),
                gsd_cm: f[8].parse().map_err(|_| DataError::Invalid(format!("manifest row {}: bad gsd {:?}", i + 2, f[8])))?,
            });
        }
        let mut seen = HashSet::new();
        for r in &m.records {
            if !seen.insert(r.id.as_str()) {
                return Err(DataError::Invalid(format!("duplicate tile id '{}'", r.id)));
            }
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, dir)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        write_atomic(path, self.render().as_bytes()).map_err(|e| DataError::io(path, e))
    }

    /// Fails if any referenced layer file is missing.
    pub fn check_files(&self) -> Result<(), DataError> {
        for r in &self.records {
            for p in [&r.spectral, &r.dsm, &r.dtm, &r.ndsm].into_iter().flatten().chain(std::iter::once(&r.labels)) {
                let full = self.dir.join(p);
                if !full.is_file() {
                    return Err(DataError::Invalid(format!("tile {}: missing file {}", r.id, full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn records(&self, split: Option<Split>) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| split.is_none_or(|s| r.split == s))
    }

    pub fn load(&self, split: Option<Split>) -> Result<Vec<RasterTile>, DataError> {
        self.records(split).map(|r| read_tile(&self.dir, r)).collect()
    }

    /// Path of the normalization sidecar next to `manifest_path`.
    pub fn sidecar_path(manifest_path: &Path) -> PathBuf {
        let mut s = manifest_path.as_os_str().to_owned();
        s.push(".stats");
        PathBuf::from(s)
    }
}

/// Writes every layer of `tile` into `dir` and returns its manifest row.
pub fn write_tile(dir: &Path, tile: &RasterTile, split: Split) -> Result<ManifestRecord, DataError> {
    let mut rec = ManifestRecord {
        id: tile.id.clone(),
        city: tile.city.clone(),
        split,
        spectral: None,
        dsm: None,
        dtm: None,
        ndsm: None,
        labels: format!("{}.labels.rseg", tile.id),
        gsd_cm: tile.gsd_cm,
    };
    for (name, layer, slot) in [
        ("spectral", &tile.spectral, &mut rec.spectral),
        ("dsm", &tile.dsm, &mut rec.dsm),
        ("dtm", &tile.dtm, &mut rec.dtm),
        ("ndsm", &tile.ndsm, &mut rec.ndsm),
    ] {
        if let Some(r) = layer {
            let file = format!("{}.{name}.rseg", tile.id);
            rseg::write_raster(&dir.join(&file), r)?;
            *slot = Some(file);
        }
    }
    rseg::write_labels(&dir.join(&rec.labels), &tile.labels)?;
    Ok(rec)
}

pub fn read_tile(dir: &Path, rec: &ManifestRecord) -> Result<RasterTile, DataError> {
    let layer = |p: &Option<String>| p.as_ref().map(|p| rseg::read_raster(&dir.join(p))).transpose();
    let tile = RasterTile {
        id: rec.id.clone(),
        city: rec.city.clone(),
        spectral: layer(&rec.spectral)?,
        dsm: layer(&rec.dsm)?,
        dtm: layer(&rec.dtm)?,
        ndsm: layer(&rec.ndsm)?,
        labels: rseg::read_labels(&dir.join(&rec.labels))?,
        gsd_cm: rec.gsd_cm,
    };
    tile.validate()?;
    Ok(tile)
}

impl NormStats {
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        let list = |v: &[f32; 3]| v.map(|x| x.to_string()).join(",");
        kv.set("ndsm_mean", self.ndsm_mean)
            .set("ndsm_std", self.ndsm_std)
            .set("spectral_mean", list(&self.spectral_mean))
            .set("spectral_std", list(&self.spectral_std));
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self, DataError> {
        let get = |k: &str| -> Result<f32, DataError> {
            kv.parse_value::<f32>(k)?.ok_or_else(|| DataError::Invalid(format!("normalization sidecar lacks '{k}'")))
        };
        let triple = |k: &str, default: f32| -> Result<[f32; 3], DataError> {
            match kv.parse_list::<f32>(k)? {
                None => Ok([default; 3]),
                Some(v) => v.try_into().map_err(|_| DataError::Invalid(format!("'{k}' needs three values"))),
            }
        };
        Ok(NormStats {
            ndsm_mean: get("ndsm_mean")?,
            ndsm_std: get("ndsm_std")?,
            spectral_mean: triple("spectral_mean", 0.0)?,
            spectral_std: triple("spectral_std", 1.0)?,
        })
    }
}
