//! Dataset ingestion and export.
//!
//! A dataset is a JSON manifest next to headerless little-endian volumes
//! stored x-fastest:
//!
//! ```json
//! {
//!   "version": 1,
//!   "geometry": { "pixel_size_xy": 100.0, "slice_thickness_z": 70.0 },
//!   "dims": [256, 256, 30],
//!   "channels": [
//!     { "name": "synapsin", "file": "synapsin.raw", "dtype": "u16", "byte_order": "little" },
//!     { "name": "psd95", "slices": ["psd95_000.pgm", "psd95_001.pgm"] }
//!   ],
//!   "annotations": "annotations.json"
//! }
//! ```
//!
//! File references are resolved relative to the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    physical_to_voxel, ChannelVolume, Dims, GroundTruthAnnotation, Label, MarkerQuery,
    ProbabilityVolume, PunctaSize, QuerySpec, SearchMode, Stage, VoxelGeometry,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }

    fn parse(channel: &str, s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(Dtype::U8),
            "u16" => Ok(Dtype::U16),
            "f32" => Ok(Dtype::F32),
            other => Err(Error::UnknownDtype {
                channel: channel.to_string(),
                dtype: other.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Kept as text so an unknown dtype is reported against its channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
    #[serde(default = "little", skip_serializing_if = "Option::is_none")]
    pub byte_order: Option<String>,
    /// One grayscale PGM per slice, as an alternative to `file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<String>>,
}

fn little() -> Option<String> {
    Some("little".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub geometry: VoxelGeometry,
    pub dims: Dims,
    pub channels: Vec<ChannelEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub channels: Vec<ChannelVolume>,
    pub annotations: Vec<GroundTruthAnnotation>,
}

impl Dataset {
    pub fn channel(&self, name: &str) -> Option<&ChannelVolume> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn volume_um3(&self) -> f64 {
        self.manifest.dims.len() as f64 * self.manifest.geometry.voxel_volume_um3()
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

enum Source {
    Raw { path: PathBuf, dtype: Dtype },
    Slices(Vec<PathBuf>),
}

/// Parses a manifest and checks every channel reference without reading any
/// payload.
pub fn read_manifest(manifest_path: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = read_json(manifest_path)?;
    m.geometry.validate()?;
    if m.dims.is_empty() {
        return Err(Error::InvalidVolume(format!(
            "manifest dims {:?} must be positive",
            m.dims.as_array()
        )));
    }
    Ok(m)
}

fn plan_channels(m: &DatasetManifest, base: &Path) -> Result<Vec<Source>> {
    let mut seen = std::collections::HashSet::new();
    for c in &m.channels {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::DuplicateChannel(c.name.clone()));
        }
    }
    m.channels
        .iter()
        .map(|c| {
            if let Some(order) = &c.byte_order {
                if order != "little" {
                    return Err(Error::InvalidParameter(format!(
                        "channel '{}': unsupported byte order '{order}'",
                        c.name
                    )));
                }
            }
            match (&c.file, &c.slices) {
                (Some(file), None) => {
                    let dtype = Dtype::parse(&c.name, c.dtype.as_deref().unwrap_or("<missing>"))?;
                    let path = base.join(file);
                    let meta = fs::metadata(&path).map_err(|e| match e.kind() {
                        std::io::ErrorKind::NotFound => Error::FileNotFound(c.name.clone()),
                        _ => Error::io(&path, e),
                    })?;
                    let expected = (m.dims.len() * dtype.size()) as u64;
                    if meta.len() != expected {
                        return Err(Error::SizeMismatch {
                            channel: c.name.clone(),
                            expected,
                            actual: meta.len(),
                        });
                    }
                    Ok(Source::Raw { path, dtype })
                }
                (None, Some(slices)) => {
                    if slices.len() != m.dims.z {
                        return Err(Error::InvalidVolume(format!(
                            "channel '{}': {} slice images for {} slices",
                            c.name,
                            slices.len(),
                            m.dims.z
                        )));
                    }
                    let paths: Vec<PathBuf> = slices.iter().map(|s| base.join(s)).collect();
                    if paths.iter().any(|p| !p.exists()) {
                        return Err(Error::FileNotFound(c.name.clone()));
                    }
                    Ok(Source::Slices(paths))
                }
                _ => Err(Error::InvalidParameter(format!(
                    "channel '{}': exactly one of 'file' or 'slices' is required",
                    c.name
                ))),
            }
        })
        .collect()
}

/// Decodes x-fastest little-endian samples, widening to `f32` without
/// rescaling.
pub fn decode_samples(bytes: &[u8], dtype: Dtype) -> Vec<f32> {
    match dtype {
        Dtype::U8 => bytes.iter().map(|&b| b as f32).collect(),
        Dtype::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

fn read_slices(paths: &[PathBuf], channel: &str, dims: Dims) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(dims.len());
    for p in paths {
        let img = image::open(p).map_err(|e| {
            Error::InvalidVolume(format!("channel '{channel}': {}: {e}", p.display()))
        })?;
        if img.width() as usize != dims.x || img.height() as usize != dims.y {
            return Err(Error::SizeMismatch {
                channel: channel.to_string(),
                expected: dims.slice_len() as u64,
                actual: img.width() as u64 * img.height() as u64,
            });
        }
        out.extend(img.into_luma16().into_raw().into_iter().map(f32::from));
    }
    Ok(out)
}

/// Loads every channel and, if referenced, the annotation file.
///
/// All references are checked before any payload is read.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = base_dir(manifest_path);
    let sources = plan_channels(&manifest, &base)?;
    let annotations_path = manifest.annotations.as_ref().map(|a| base.join(a));
    if let Some(p) = &annotations_path {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "annotation file not found"),
            ));
        }
    }

    let channels = manifest
        .channels
        .par_iter()
        .zip(sources.par_iter())
        .map(|(entry, src)| {
            let data = match src {
                Source::Raw { path, dtype } => {
                    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                    decode_samples(&bytes, *dtype)
                }
                Source::Slices(paths) => read_slices(paths, &entry.name, manifest.dims)?,
            };
            ChannelVolume::new(entry.name.clone(), manifest.dims, manifest.geometry, data)
        })
        .collect::<Result<Vec<_>>>()?;

    let annotations = match &annotations_path {
        Some(p) => load_annotations(p, &manifest.geometry, manifest.dims)?,
        None => Vec::new(),
    };
    Ok(Dataset {
        manifest,
        channels,
        annotations,
    })
}

/// Reads a JSON array of annotation records and checks each centroid lies
/// inside the volume.
pub fn load_annotations(path: &Path, g: &VoxelGeometry, dims: Dims) -> Result<Vec<GroundTruthAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
    records
        .into_iter()
        .enumerate()
        .map(|(k, raw)| {
            let id = raw.get("id").and_then(|v| v.as_i64()).unwrap_or(k as i64);
            let a: GroundTruthAnnotation =
                serde_json::from_value(raw).map_err(|e| Error::Annotation {
                    id,
                    reason: format!("malformed record: {e}"),
                })?;
            physical_to_voxel(a.centroid_um, g, dims).map_err(|e| Error::Annotation {
                id: a.id,
                reason: e.to_string(),
            })?;
            if let Some(vox) = &a.voxels {
                if let Some(v) = vox.iter().find(|v| v[0] >= dims.x || v[1] >= dims.y || v[2] >= dims.z)
                {
                    return Err(Error::Annotation {
                        id: a.id,
                        reason: format!("voxel {v:?} outside {:?}", dims.as_array()),
                    });
                }
            }
            Ok(a)
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    name: String,
    presynaptic: Vec<MarkerRecord>,
    postsynaptic: Vec<MarkerRecord>,
    #[serde(default)]
    label: Option<Label>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerRecord {
    channel: String,
    size: PunctaSize,
    #[serde(default)]
    search_mode: Option<SearchMode>,
}

/// Reads a JSON array of queries. `search_mode` may be omitted: presynaptic
/// markers then default to grid search and postsynaptic ones to
/// co-localization. Every query is validated.
pub fn load_queries(path: &Path) -> Result<Vec<QuerySpec>> {
    let records: Vec<QueryRecord> = read_json(path)?;
    let markers = |ms: Vec<MarkerRecord>, default: SearchMode| -> Vec<MarkerQuery> {
        ms.into_iter()
            .map(|m| MarkerQuery::new(m.channel, m.size, m.search_mode.unwrap_or(default)))
            .collect()
    };
    let queries: Vec<QuerySpec> = records
        .into_iter()
        .map(|r| QuerySpec {
            name: r.name,
            presynaptic: markers(r.presynaptic, SearchMode::GridSearch),
            postsynaptic: markers(r.postsynaptic, SearchMode::Colocalized),
            label: r.label,
        })
        .collect();
    let mut names = std::collections::HashSet::new();
    for q in &queries {
        q.validate()?;
        if !names.insert(q.name.as_str()) {
            return Err(Error::InvalidQuery {
                name: q.name.clone(),
                reason: "query name used twice".into(),
            });
        }
    }
    Ok(queries)
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Manifest of a single exported probability volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityManifest {
    pub version: u32,
    pub stage: Stage,
    pub geometry: VoxelGeometry,
    pub dims: Dims,
    pub file: String,
    pub dtype: Dtype,
    pub byte_order: String,
}

fn raw_path_for(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("raw")
}

pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes `v` as `<path>` (JSON manifest) plus `<path stem>.raw` (f32
/// little-endian).
pub fn save_probability_volume(v: &ProbabilityVolume, path: &Path) -> Result<()> {
    let raw = raw_path_for(path);
    let file = raw
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidParameter(format!("bad output path {}", path.display())))?;
    write_atomic(&raw, &encode_f32(v.data()))?;
    write_json(
        path,
        &ProbabilityManifest {
            version: MANIFEST_VERSION,
            stage: v.stage,
            geometry: v.geometry,
            dims: v.dims,
            file,
            dtype: Dtype::F32,
            byte_order: "little".into(),
        },
    )
}

pub fn load_probability_volume(path: &Path) -> Result<ProbabilityVolume> {
    let m: ProbabilityManifest = read_json(path)?;
    if m.dtype != Dtype::F32 || m.byte_order != "little" {
        return Err(Error::InvalidVolume(format!(
            "{}: probability volumes must be little-endian f32",
            path.display()
        )));
    }
    let raw = base_dir(path).join(&m.file);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let expected = (m.dims.len() * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            channel: m.file.clone(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    ProbabilityVolume::new(m.stage, m.dims, m.geometry, decode_samples(&bytes, Dtype::F32))
}

/// Writes channels as f32 raw files plus a manifest in `dir`, returning the
/// manifest path.
pub fn write_dataset(
    dir: &Path,
    channels: &[ChannelVolume],
    annotations: Option<&[GroundTruthAnnotation]>,
) -> Result<PathBuf> {
    let first = channels
        .first()
        .ok_or_else(|| Error::InvalidParameter("dataset needs at least one channel".into()))?;
    let mut entries = Vec::with_capacity(channels.len());
    for c in channels {
        if c.dims != first.dims || c.geometry != first.geometry {
            return Err(Error::GeometryMismatch(format!(
                "channel '{}' does not share the first channel's frame",
                c.name
            )));
        }
        let file = format!("{}.raw", sanitize(&c.name));
        write_atomic(&dir.join(&file), &encode_f32(c.data()))?;
        entries.push(ChannelEntry {
            name: c.name.clone(),
            file: Some(file),
            dtype: Some("f32".into()),
            byte_order: little(),
            slices: None,
        });
    }
    let annotations_file = match annotations {
        Some(a) => {
            write_json(&dir.join("annotations.json"), a)?;
            Some("annotations.json".to_string())
        }
        None => None,
    };
    let manifest_path = dir.join("manifest.json");
    write_json(
        &manifest_path,
        &DatasetManifest {
            version: MANIFEST_VERSION,
            geometry: first.geometry,
            dims: first.dims,
            channels: entries,
            annotations: annotations_file,
        },
    )?;
    Ok(manifest_path)
}

/// File-name-safe form of a channel or query name.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm8(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .encode(pixels, width as u32, height as u32, image::ColorType::L8)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    fn manifest(dir: &Path, channels: serde_json::Value, dims: [usize; 3]) -> PathBuf {
        let p = dir.join("manifest.json");
        let m = serde_json::json!({
            "version": 1,
            "geometry": {"pixel_size_xy": 100.0, "slice_thickness_z": 70.0},
            "dims": dims,
            "channels": channels,
        });
        fs::write(&p, m.to_string()).unwrap();
        p
    }

    #[test]
    fn zero_u8_volume() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.raw"), [0u8; 32]).unwrap();
        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "a", "file": "a.raw", "dtype": "u8"}]),
            [4, 4, 2],
        );
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.channels[0].data(), &[0.0; 32]);
        assert!(ds.annotations.is_empty());
    }

    #[test]
    fn u16_little_endian_decode() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("a.raw"),
            [0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0xFF, 0xFF],
        )
        .unwrap();
        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "a", "file": "a.raw", "dtype": "u16", "byte_order": "little"}]),
            [2, 2, 1],
        );
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.channels[0].data(), &[1.0, 256.0, 0.0, 65535.0]);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "synapsin", "file": "missing.raw", "dtype": "u8"}]),
            [2, 2, 1],
        );
        assert_eq!(
            load_dataset(&p).unwrap_err().to_string(),
            "channel 'synapsin': file not found"
        );

        fs::write(dir.path().join("a.raw"), [0u8; 3]).unwrap();
        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "a", "file": "a.raw", "dtype": "u8"}]),
            [2, 2, 1],
        );
        assert!(matches!(load_dataset(&p), Err(Error::SizeMismatch { .. })));

        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "a", "file": "a.raw", "dtype": "i64"}]),
            [3, 1, 1],
        );
        assert!(matches!(load_dataset(&p), Err(Error::UnknownDtype { .. })));

        let p = manifest(
            dir.path(),
            serde_json::json!([
                {"name": "a", "file": "a.raw", "dtype": "u8"},
                {"name": "a", "file": "a.raw", "dtype": "u8"}
            ]),
            [3, 1, 1],
        );
        assert!(matches!(load_dataset(&p), Err(Error::DuplicateChannel(_))));
    }

    #[test]
    fn probability_volume_export() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGeometry::new(100.0, 70.0).unwrap();
        let v = ProbabilityVolume::filled(Stage::Puncta3D, Dims::new(2, 2, 2), g, 0.5).unwrap();
        let path = dir.path().join("p.json");
        save_probability_volume(&v, &path).unwrap();
        let raw = fs::read(dir.path().join("p.raw")).unwrap();
        assert_eq!(raw.len(), 32);
        assert!(raw.chunks(4).all(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) == 0.5));
        let back = load_probability_volume(&path).unwrap();
        assert_eq!(back.stage, Stage::Puncta3D);
        assert_eq!(back, v);
        assert!(!dir.path().join("p.raw.tmp").exists());
    }

    #[test]
    fn annotation_records() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGeometry::new(100.0, 70.0).unwrap();
        let dims = Dims::new(20, 20, 10);
        let p = dir.path().join("a.json");

        fs::write(&p, "").unwrap();
        assert!(load_annotations(&p, &g, dims).unwrap().is_empty());

        fs::write(
            &p,
            r#"[{"id": 7, "label": "excitatory", "centroid_um": [1.0, 1.0, 0.35]}]"#,
        )
        .unwrap();
        let a = load_annotations(&p, &g, dims).unwrap();
        assert_eq!(a[0].label, Label::Excitatory);
        assert_eq!(physical_to_voxel(a[0].centroid_um, &g, dims).unwrap()[2], 5);

        fs::write(
            &p,
            r#"[{"id": 9, "label": "inhibitory", "centroid_um": [1.0, 1.0, 0.9]}]"#,
        )
        .unwrap();
        let err = load_annotations(&p, &g, dims).unwrap_err();
        assert!(matches!(err, Error::Annotation { id: 9, .. }), "{err}");

        fs::write(&p, r#"[{"id": 4, "label": "bogus", "centroid_um": [0, 0, 0]}]"#).unwrap();
        let err = load_annotations(&p, &g, dims).unwrap_err();
        assert!(matches!(err, Error::Annotation { id: 4, .. }), "{err}");
    }

    #[test]
    fn pgm_slices() {
        let dir = tempfile::tempdir().unwrap();
        for z in 0..2u16 {
            // 16-bit binary PGM: big-endian samples after the header
            let mut bytes = b"P5\n3 2\n65535\n".to_vec();
            for v in 0..6u16 {
                bytes.extend((z * 1000 + v).to_be_bytes());
            }
            fs::write(dir.path().join(format!("s{z}.pgm")), bytes).unwrap();
        }
        let p = manifest(
            dir.path(),
            serde_json::json!([{"name": "c", "slices": ["s0.pgm", "s1.pgm"]}]),
            [3, 2, 2],
        );
        let ds = load_dataset(&p).unwrap();
        let c = &ds.channels[0];
        assert_eq!(c.get(2, 1, 0), 5.0);
        assert_eq!(c.get(0, 0, 1), 1000.0);
    }

    #[test]
    fn queries_default_search_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        fs::write(
            &path,
            r#"[{"name": "ex", "label": "excitatory",
                 "presynaptic": [{"channel": "synapsin", "size": {"xy_um": 0.2, "z_um": 0.21}}],
                 "postsynaptic": [{"channel": "psd95", "size": {"xy_um": 0.2, "z_um": 0.21},
                                   "search_mode": "grid_search"}]}]"#,
        )
        .unwrap();
        let q = load_queries(&path).unwrap();
        assert_eq!(q[0].presynaptic[0].search_mode, SearchMode::GridSearch);
        assert_eq!(q[0].postsynaptic[0].search_mode, SearchMode::GridSearch);
        assert_eq!(q[0].label, Some(Label::Excitatory));

        fs::write(&path, r#"[{"name": "ex", "presynaptic": [], "postsynaptic": []}]"#).unwrap();
        assert!(matches!(load_queries(&path), Err(Error::InvalidQuery { .. })));
    }

}
