//! On-disk datasets: a TOML manifest, a JSONL label file, and per-sample
//! tensor files (RTEN, or PNG for images and maps).
//!
//! ```toml
//! classes = ["urban", "agriculture", "forest"]
//! labels = "labels.jsonl"
//!
//! [geometry]
//! channels = 3
//! height = 120
//! width = 120
//! dtype = "u8"
//!
//! [[samples]]
//! id = "s0001"
//! image = "images/s0001.png"
//! map = "maps/s0001.png"
//! ```
//!
//! Each sample may also name a `masks` tensor (u8, `L x H x W`) or a `heatmap`
//! tensor (f32, `L x H x W`); heatmaps are thresholded at `t_cam` when read.
//! Paths are relative to `root`, which defaults to the manifest's directory.
//! Label lines look like `{"id":"s0001","classes":[1,3]}`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cutmix::Sample;
use crate::error::{Error, Result};
use crate::pngio::{read_image_png, read_map_png};
use crate::raster::{validate_pair, Dtype, Heatmap, ImageRaster, MaskStack, MultiLabel, RefMap, MAX_CLASSES};
use crate::tensor::{read_tensor, write_tensor};
use crate::xai::{threshold_heatmaps, DEFAULT_T_CAM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: Dtype,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub classes: Vec<String>,
    pub labels: PathBuf,
    pub geometry: Geometry,
    #[serde(default)]
    pub samples: Vec<SampleEntry>,
}

/// One line of a label file. `weights` carries area-weighted soft labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub classes: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Random access to samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn get(&self, index: usize) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryDataset {
    pub num_classes: usize,
    pub samples: Vec<Sample>,
}

impl SampleSource for MemoryDataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn get(&self, index: usize) -> Result<Sample> {
        Ok(self.samples[index].clone())
    }
}

/// A validated on-disk dataset. Samples are read from disk on each access.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
    root: PathBuf,
    labels: Vec<MultiLabel>,
    t_cam: f32,
    /// Map/label disagreements found while loading, as `id: message`.
    pub warnings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_labels(path: &Path, ids: &HashMap<&str, usize>, num_classes: usize) -> Result<Vec<Option<MultiLabel>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = vec![None; ids.len()];
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            file: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: LabelRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let Some(&idx) = ids.get(rec.id.as_str()) else {
            return Err(parse_err(format!("label for unknown sample {:?}", rec.id)));
        };
        if labels[idx].is_some() {
            return Err(parse_err(format!("duplicate label for sample {:?}", rec.id)));
        }
        let label = MultiLabel::from_classes(num_classes, rec.classes.iter().copied()).map_err(|e| match e {
            Error::ClassOutOfRange { class, num_classes, .. } => Error::ClassOutOfRange {
                class,
                num_classes,
                context: Some(format!("label of sample {:?}", rec.id)),
            },
            other => parse_err(other.to_string()),
        })?;
        labels[idx] = Some(label);
    }
    Ok(labels)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn sample_err(id: &str, message: impl Into<String>) -> Error {
    Error::Sample {
        id: id.to_string(),
        message: message.into(),
    }
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.manifest.classes.len()
    }

    pub fn geometry(&self) -> Geometry {
        self.manifest.geometry
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn label(&self, index: usize) -> &MultiLabel {
        &self.labels[index]
    }

    pub fn id(&self, index: usize) -> &str {
        &self.manifest.samples[index].id
    }

    pub fn t_cam(&self) -> f32 {
        self.t_cam
    }

    /// Threshold used for samples that provide heatmaps rather than masks.
    pub fn set_t_cam(&mut self, t_cam: f32) -> Result<()> {
        if !(0.0..=1.0).contains(&t_cam) {
            return Err(Error::Config(format!("t_cam = {t_cam} outside [0, 1]")));
        }
        self.t_cam = t_cam;
        Ok(())
    }

    pub fn has_maps(&self) -> bool {
        self.manifest.samples.iter().all(|s| s.map.is_some())
    }

    pub fn has_masks(&self) -> bool {
        self.manifest.samples.iter().all(|s| s.masks.is_some() || s.heatmap.is_some())
    }

    fn read_image(&self, entry: &SampleEntry) -> Result<ImageRaster> {
        let path = self.root.join(&entry.image);
        let image = if has_ext(&path, "png") {
            read_image_png(&path)?
        } else {
            read_tensor::<ImageRaster>(&path)?
        };
        let g = self.geometry();
        if (image.channels(), image.height(), image.width()) != (g.channels, g.height, g.width) || image.dtype() != g.dtype {
            return Err(Error::Geometry(format!(
                "sample {:?}: image is {}x{}x{} {:?}, manifest declares {}x{}x{} {:?}",
                entry.id,
                image.channels(),
                image.height(),
                image.width(),
                image.dtype(),
                g.channels,
                g.height,
                g.width,
                g.dtype
            )));
        }
        Ok(image)
    }

    fn check_hw(&self, id: &str, what: &str, h: usize, w: usize) -> Result<()> {
        let g = self.geometry();
        if (h, w) != (g.height, g.width) {
            return Err(Error::Geometry(format!(
                "sample {id:?}: {what} is {h}x{w}, manifest declares {}x{}",
                g.height, g.width
            )));
        }
        Ok(())
    }

    fn check_planes(&self, id: &str, what: &str, planes: usize) -> Result<()> {
        if planes != self.num_classes() {
            return Err(sample_err(id, format!("{what} has {planes} planes, dataset has {} classes", self.num_classes())));
        }
        Ok(())
    }

    fn read_map(&self, entry: &SampleEntry, path: &Path) -> Result<RefMap> {
        let path = self.root.join(path);
        let map = if has_ext(&path, "png") {
            read_map_png(&path, self.num_classes())
        } else {
            read_tensor::<RefMap>(&path)
        }
        .map_err(|e| match e {
            Error::ClassOutOfRange { class, num_classes, .. } => Error::ClassOutOfRange {
                class,
                num_classes,
                context: Some(format!("map of sample {:?}", entry.id)),
            },
            other => other,
        })?;
        self.check_hw(&entry.id, "map", map.height(), map.width())?;
        map.check_classes(self.num_classes()).map_err(|e| match e {
            Error::ClassOutOfRange { class, num_classes, .. } => Error::ClassOutOfRange {
                class,
                num_classes,
                context: Some(format!("map of sample {:?}", entry.id)),
            },
            other => other,
        })?;
        Ok(map)
    }

    fn read_masks(&self, entry: &SampleEntry, label: &MultiLabel) -> Result<Option<MaskStack>> {
        if let Some(p) = &entry.masks {
            let masks = read_tensor::<MaskStack>(&self.root.join(p))?;
            self.check_hw(&entry.id, "mask stack", masks.height(), masks.width())?;
            self.check_planes(&entry.id, "mask stack", masks.num_classes())?;
            return Ok(Some(masks));
        }
        if let Some(p) = &entry.heatmap {
            let heat = read_tensor::<Heatmap>(&self.root.join(p))?;
            self.check_hw(&entry.id, "heatmap", heat.height(), heat.width())?;
            self.check_planes(&entry.id, "heatmap", heat.num_classes())?;
            return threshold_heatmaps(&heat, label, self.t_cam).map(Some);
        }
        Ok(None)
    }

    /// Reads every sample once, checking geometry and class ids and
    /// collecting map/label disagreements as warnings.
    fn validate_all(&mut self) -> Result<()> {
        let mut warnings = Vec::new();
        for i in 0..self.len() {
            let sample = self.get(i)?;
            if let Some(map) = &sample.map {
                for msg in validate_pair(map, &sample.label)?.messages() {
                    warnings.push(format!("{}: {msg}", sample.id));
                }
            }
        }
        self.warnings = warnings;
        Ok(())
    }
}

impl SampleSource for Dataset {
    fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    fn num_classes(&self) -> usize {
        self.manifest.classes.len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        let entry = &self.manifest.samples[index];
        let label = self.labels[index].clone();
        let image = self.read_image(entry)?;
        let map = entry.map.as_deref().map(|p| self.read_map(entry, p)).transpose()?;
        let masks = self.read_masks(entry, &label)?;
        Ok(Sample {
            id: entry.id.clone(),
            image,
            label,
            map,
            masks,
        })
    }
}

/// Parses and validates a manifest, its label file, and every sample.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        file: manifest_path.to_path_buf(),
        line: e.span().map_or(0, |s| line_of(&text, s.start)),
        message: e.message().to_string(),
    })?;
    if manifest.samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let num_classes = manifest.classes.len();
    if num_classes == 0 || num_classes > MAX_CLASSES {
        return Err(Error::Config(format!("class count {num_classes} outside [1, {MAX_CLASSES}]")));
    }
    let g = manifest.geometry;
    if g.channels == 0 || g.height == 0 || g.width == 0 {
        return Err(Error::Config(format!("degenerate geometry {}x{}x{}", g.channels, g.height, g.width)));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let root = match &manifest.root {
        Some(r) => base.join(r),
        None => base.to_path_buf(),
    };

    let mut ids = HashMap::with_capacity(manifest.samples.len());
    for (i, s) in manifest.samples.iter().enumerate() {
        if ids.insert(s.id.as_str(), i).is_some() {
            return Err(sample_err(&s.id, "duplicate sample id"));
        }
        if s.masks.is_some() && s.heatmap.is_some() {
            return Err(sample_err(&s.id, "give either masks or heatmap, not both"));
        }
    }
    let labels = parse_labels(&root.join(&manifest.labels), &ids, num_classes)?
        .into_iter()
        .zip(&manifest.samples)
        .map(|(l, s)| l.ok_or_else(|| sample_err(&s.id, "no label record")))
        .collect::<Result<Vec<_>>>()?;

    let mut dataset = Dataset {
        manifest_path: manifest_path.to_path_buf(),
        manifest,
        root,
        labels,
        t_cam: DEFAULT_T_CAM,
        warnings: Vec::new(),
    };
    dataset.validate_all()?;
    Ok(dataset)
}

/// Writes samples as RTEN files under `dir` plus `manifest.toml` and
/// `labels.jsonl`.
pub struct DatasetWriter {
    dir: PathBuf,
    manifest: DatasetManifest,
    labels: Vec<LabelRecord>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, classes: Vec<String>, geometry: Geometry) -> Result<Self> {
        for sub in ["images", "maps", "masks"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: DatasetManifest {
                root: None,
                classes,
                labels: PathBuf::from("labels.jsonl"),
                geometry,
                samples: Vec::new(),
            },
            labels: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn push(
        &mut self,
        id: &str,
        image: &ImageRaster,
        label: LabelRecord,
        map: Option<&RefMap>,
        masks: Option<&MaskStack>,
    ) -> Result<()> {
        let image_rel = PathBuf::from(format!("images/{id}.rten"));
        write_tensor(&self.dir.join(&image_rel), image)?;
        let map_rel = map
            .map(|m| {
                let rel = PathBuf::from(format!("maps/{id}.rten"));
                write_tensor(&self.dir.join(&rel), m).map(|_| rel)
            })
            .transpose()?;
        let masks_rel = masks
            .map(|m| {
                let rel = PathBuf::from(format!("masks/{id}.rten"));
                write_tensor(&self.dir.join(&rel), m).map(|_| rel)
            })
            .transpose()?;
        self.manifest.samples.push(SampleEntry {
            id: id.to_string(),
            image: image_rel,
            map: map_rel,
            masks: masks_rel,
            heatmap: None,
        });
        self.labels.push(label);
        Ok(())
    }

    pub fn push_sample(&mut self, sample: &Sample) -> Result<()> {
        let label = LabelRecord {
            id: sample.id.clone(),
            classes: sample.label.classes(),
            weights: None,
        };
        self.push(&sample.id, &sample.image, label, sample.map.as_ref(), sample.masks.as_ref())
    }

    /// Writes the manifest and label file; returns the manifest path.
    pub fn finish(self) -> Result<PathBuf> {
        let labels_path = self.dir.join(&self.manifest.labels);
        let mut out = Vec::new();
        for rec in &self.labels {
            serde_json::to_writer(&mut out, rec).expect("label record serializes");
            out.push(b'\n');
        }
        fs::write(&labels_path, out).map_err(|e| Error::io(&labels_path, e))?;
        let manifest_path = self.dir.join("manifest.toml");
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Config(e.to_string()))?;
        let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest_path)
    }
}

/// Writes in-memory samples as a dataset under `dir`.
pub fn write_dataset(dir: &Path, classes: Vec<String>, samples: &[Sample]) -> Result<PathBuf> {
    let first = samples.first().ok_or(Error::NoSamples)?;
    let geometry = Geometry {
        channels: first.image.channels(),
        height: first.image.height(),
        width: first.image.width(),
        dtype: first.image.dtype(),
    };
    let mut writer = DatasetWriter::create(dir, classes, geometry)?;
    for s in samples {
        writer.push_sample(s)?;
    }
    writer.finish()
}

/// Class names `class1..classL`.
pub fn default_class_names(num_classes: usize) -> Vec<String> {
    (1..=num_classes).map(|c| format!("class{c}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pngio::{write_image_png, write_map_png};
    use crate::raster::PixelData;
    use crate::synth::{synthetic_samples, SynthConfig};

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            height: 12,
            width: 10,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn written_dataset_loads_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synthetic_samples(&small_cfg(), 5, 1, 0.1);
        let path = write_dataset(dir.path(), default_class_names(6), &samples).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.warnings.is_empty(), "{:?}", ds.warnings);
        for (i, s) in samples.iter().enumerate() {
            let a = ds.get(i).unwrap();
            assert_eq!(&a, s);
            assert_eq!(a, ds.get(i).unwrap());
        }
    }

    fn write_manifest(dir: &Path, body: &str, labels: &str) -> PathBuf {
        fs::write(dir.join("labels.jsonl"), labels).unwrap();
        let p = dir.join("manifest.toml");
        fs::write(&p, body).unwrap();
        p
    }

    const HEAD: &str = "classes = [\"a\", \"b\", \"c\", \"d\"]\nlabels = \"labels.jsonl\"\n\n[geometry]\nchannels = 1\nheight = 2\nwidth = 2\ndtype = \"u8\"\n";

    fn png_sample(dir: &Path, id: &str, map: &[u8]) {
        let img = ImageRaster::new(1, 2, 2, PixelData::U8(vec![9, 8, 7, 6])).unwrap();
        write_image_png(&dir.join(format!("{id}.png")), &img).unwrap();
        write_map_png(&dir.join(format!("{id}_m.png")), &RefMap::new(2, 2, map.to_vec()).unwrap()).unwrap();
    }

    fn entry(id: &str) -> String {
        format!("\n[[samples]]\nid = \"{id}\"\nimage = \"{id}.png\"\nmap = \"{id}_m.png\"\n")
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), HEAD, "");
        let err = load_dataset(&p).unwrap_err();
        assert!(matches!(err, Error::NoSamples));
        assert_eq!(err.to_string(), "no samples in dataset");
    }

    #[test]
    fn png_sample_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        png_sample(dir.path(), "x", &[1, 1, 2, 0]);
        let p = write_manifest(dir.path(), &(HEAD.to_string() + &entry("x")), "{\"id\":\"x\",\"classes\":[1]}\n");
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.warnings, vec!["x: class 2 unlabeled at image level"]);
        let s = ds.get(0).unwrap();
        assert_eq!(s.map.unwrap().data(), &[1, 1, 2, 0]);
        assert_eq!(s.image.data(), &PixelData::U8(vec![9, 8, 7, 6]));
    }

    #[test]
    fn map_class_above_count_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        png_sample(dir.path(), "bad5", &[1, 5, 0, 0]);
        let p = write_manifest(dir.path(), &(HEAD.to_string() + &entry("bad5")), "{\"id\":\"bad5\",\"classes\":[1]}\n");
        let err = load_dataset(&p).unwrap_err();
        assert!(matches!(err, Error::ClassOutOfRange { class: 5, num_classes: 4, .. }));
        assert!(err.to_string().contains("bad5"), "{err}");
    }

    #[test]
    fn geometry_mismatch_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageRaster::new(1, 3, 2, PixelData::U8(vec![0; 6])).unwrap();
        write_image_png(&dir.path().join("odd.png"), &img).unwrap();
        let body = HEAD.to_string() + "\n[[samples]]\nid = \"odd\"\nimage = \"odd.png\"\n";
        let p = write_manifest(dir.path(), &body, "{\"id\":\"odd\",\"classes\":[]}\n");
        let err = load_dataset(&p).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        assert!(err.to_string().contains("\"odd\""), "{err}");
    }

    #[test]
    fn parse_errors_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), "classes = [\"a\"]\nlabels = 3 3\n", "");
        match load_dataset(&p).unwrap_err() {
            Error::Parse { file, line, .. } => {
                assert_eq!(file, p);
                assert_eq!(line, 2);
            }
            other => panic!("{other}"),
        }

        png_sample(dir.path(), "x", &[1, 1, 1, 1]);
        let p = write_manifest(
            dir.path(),
            &(HEAD.to_string() + &entry("x")),
            "{\"id\":\"x\",\"classes\":[1]}\n{not json\n",
        );
        match load_dataset(&p).unwrap_err() {
            Error::Parse { file, line, .. } => {
                assert!(file.ends_with("labels.jsonl"));
                assert_eq!(line, 2);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_label_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        png_sample(dir.path(), "x", &[1, 1, 1, 1]);
        let p = write_manifest(dir.path(), &(HEAD.to_string() + &entry("x")), "");
        assert!(matches!(load_dataset(&p), Err(Error::Sample { .. })));
        let p = write_manifest(
            dir.path(),
            &(HEAD.to_string() + &entry("x") + &entry("x")),
            "{\"id\":\"x\",\"classes\":[1]}\n",
        );
        assert!(matches!(load_dataset(&p), Err(Error::Sample { .. })));
    }

    #[test]
    fn heatmaps_are_thresholded_on_read() {
        let dir = tempfile::tempdir().unwrap();
        png_sample(dir.path(), "h", &[1, 1, 2, 2]);
        let heat = Heatmap::new(
            4,
            2,
            2,
            vec![
                0.5, 0.1, 0.05, 0.0, // class 1
                0.9, 0.9, 0.9, 0.9, // class 2, absent from the label
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, //
            ],
        )
        .unwrap();
        write_tensor(&dir.path().join("h.rten"), &heat).unwrap();
        let body = HEAD.to_string() + "\n[[samples]]\nid = \"h\"\nimage = \"h.png\"\nheatmap = \"h.rten\"\n";
        let p = write_manifest(dir.path(), &body, "{\"id\":\"h\",\"classes\":[1]}\n");
        let mut ds = load_dataset(&p).unwrap();
        let masks = ds.get(0).unwrap().masks.unwrap();
        assert_eq!(masks.plane(1), &[1, 1, 0, 0]);
        assert_eq!(masks.plane(2), &[0, 0, 0, 0]);
        ds.set_t_cam(0.05).unwrap();
        assert_eq!(ds.get(0).unwrap().masks.unwrap().plane(1), &[1, 1, 1, 0]);
        assert!(ds.has_masks() && !ds.has_maps());
    }
}
