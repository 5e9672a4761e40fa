//! Stimuli, preprocessing, layer feature extraction and feature files.
//!
//! Stimulus manifest `crossrsa-stimuli/1` (text, paths relative to the
//! manifest's directory):
//!
//! ```text
//! #crossrsa-stimuli/1
//! set
//! things_val
//! #stimuli
//! index,id,path
//! 0,img_000,images/img_000.png
//! ```
//!
//! Feature file `crossrsa-feat/1` (little-endian, strings as `u32` length +
//! UTF-8):
//!
//! ```text
//! str "crossrsa-feat/1"
//! str header        JSON: {"model": str, "layer": str, "seed": u64 | null}
//! u32 n_stimuli     then n_stimuli x str id
//! u32 n_features
//! f64 values[n_stimuli * n_features]   row-major (stimulus, feature)
//! ```

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{FormatError, Reader, Writer};
use crate::error::{Error, Result};
use crate::neuro::Species;
use crate::nn::{images_to_act, Act, ChannelNorm, Checkpoint, LayerName, NnError};
use crate::rdm::{FeatureMatrix, Provenance, RdmError};

pub const STIMULI_MAGIC: &str = "crossrsa-stimuli/1";
pub const FEATURE_MAGIC: &str = "crossrsa-feat/1";
/// Side length every stimulus is resized to before extraction.
pub const DEFAULT_TARGET: usize = 224;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("stimulus {id:?}: cannot decode image: {msg}")]
    Decode { id: String, msg: String },
    #[error("stimulus manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("stimulus set is empty")]
    Empty,
    #[error("stimulus ids and images differ in number ({ids} vs {images})")]
    Count { ids: usize, images: usize },
    #[error("invalid layer-region map entry {0:?}")]
    Mapping(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Rdm(#[from] RdmError),
}

/// An RGB image with channel-major `[0, 1]` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    /// `(channel, y, x)` order.
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, chw: Vec<f64>) -> Option<Self> {
        (width > 0 && height > 0 && chw.len() == 3 * width * height).then_some(RasterImage { width, height, data: chw })
    }

    pub fn solid(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = rgb.iter().flat_map(|&v| std::iter::repeat_n(v, width * height)).collect();
        RasterImage { width, height, data }
    }

    pub fn decode_png(id: &str, bytes: &[u8]) -> Result<Self, FeatureError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| FeatureError::Decode { id: id.to_string(), msg: e.to_string() })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * w * h];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 255.0;
            }
        }
        Ok(RasterImage { width: w, height: h, data })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::decode_png(&path.display().to_string(), &bytes)?)
    }

    /// Writes an 8-bit PNG (values are clamped and rounded).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c: usize| (self.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        });
        img.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn chw(&self) -> &[f64] {
        &self.data
    }

    /// Bilinear resize with half-pixel centres and edge clamping. For an
    /// integer upscale factor every source pixel carries the same total
    /// weight, so the image mean is preserved.
    pub fn resized(&self, width: usize, height: usize) -> RasterImage {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let taps = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
            let scale = n_in as f64 / n_out as f64;
            (0..n_out)
                .map(|o| {
                    let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                    let i0 = src.floor() as usize;
                    let i1 = (i0 + 1).min(n_in - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let ys = taps(height, self.height);
        let xs = taps(width, self.width);
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = self.get(c, y0, x0) * (1.0 - fx) + self.get(c, y0, x1) * fx;
                    let bot = self.get(c, y1, x0) * (1.0 - fx) + self.get(c, y1, x1) * fx;
                    data.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
        RasterImage { width, height, data }
    }
}

/// Ordered, labelled stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    pub label: String,
    pub ids: Vec<String>,
    pub images: Vec<RasterImage>,
}

impl StimulusSet {
    pub fn new(label: impl Into<String>, ids: Vec<String>, images: Vec<RasterImage>) -> Result<Self, FeatureError> {
        if ids.len() != images.len() {
            return Err(FeatureError::Count { ids: ids.len(), images: images.len() });
        }
        if ids.is_empty() {
            return Err(FeatureError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(*id)) {
            return Err(FeatureError::Manifest { line: 0, msg: format!("duplicate stimulus id {dup:?}") });
        }
        Ok(StimulusSet { label: label.into(), ids, images })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Reads a `crossrsa-stimuli/1` manifest and decodes its PNGs.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let (label, entries) = parse_manifest(&text)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut ids = Vec::with_capacity(entries.len());
        let mut images = Vec::with_capacity(entries.len());
        for (id, rel) in entries {
            let path = base.join(&rel);
            let bytes = std::fs::read(&path).map_err(|e| FeatureError::Decode { id: id.clone(), msg: format!("{}: {e}", rel.display()) })?;
            images.push(RasterImage::decode_png(&id, &bytes)?);
            ids.push(id);
        }
        Ok(StimulusSet::new(label, ids, images)?)
    }
}

/// Parses manifest text into the set label and `(id, relative path)` entries.
pub fn parse_manifest(text: &str) -> Result<(String, Vec<(String, PathBuf)>), FeatureError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut expect = |want: &str| -> Result<(usize, String), FeatureError> {
        let (line, got) = lines.next().ok_or(FeatureError::Manifest { line: 0, msg: format!("missing {want:?}") })?;
        if !want.is_empty() && got != want {
            return Err(FeatureError::Manifest { line, msg: format!("expected {want:?}, found {got:?}") });
        }
        Ok((line, got.to_string()))
    };
    expect(&format!("#{STIMULI_MAGIC}"))?;
    expect("set")?;
    let (_, label) = expect("")?;
    expect("#stimuli")?;
    expect("index,id,path")?;
    let mut entries = Vec::new();
    for (line, l) in lines {
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.splitn(3, ',').collect();
        if f.len() != 3 {
            return Err(FeatureError::Manifest { line, msg: "expected index,id,path".into() });
        }
        if f[0].parse::<usize>().ok() != Some(entries.len()) {
            return Err(FeatureError::Manifest { line, msg: format!("index {:?} out of sequence", f[0]) });
        }
        if f[1].is_empty() || f[2].is_empty() {
            return Err(FeatureError::Manifest { line, msg: "empty id or path".into() });
        }
        entries.push((f[1].to_string(), PathBuf::from(f[2])));
    }
    if entries.is_empty() {
        return Err(FeatureError::Empty);
    }
    Ok((label, entries))
}

/// Manifest text for `(id, relative path)` entries.
pub fn write_manifest(label: &str, entries: &[(String, PathBuf)]) -> String {
    let mut out = format!("#{STIMULI_MAGIC}\nset\n{label}\n#stimuli\nindex,id,path\n");
    for (i, (id, path)) in entries.iter().enumerate() {
        out.push_str(&format!("{i},{id},{}\n", path.display()));
    }
    out
}

/// Resizes every stimulus to `target x target` and standardises it with
/// `norm`, returning a spatial batch in stimulus order.
pub fn preprocess_stimuli(set: &StimulusSet, target: usize, norm: &ChannelNorm) -> Act {
    let hw = target * target;
    let mut rows = Array2::zeros((set.len(), 3 * hw));
    for (i, img) in set.images.iter().enumerate() {
        let r = img.resized(target, target);
        rows.row_mut(i).assign(&ndarray::ArrayView1::from(r.chw()));
    }
    let mut act = images_to_act(&rows, 3, target);
    norm.apply(&mut act.data);
    act
}

/// Stimuli per forward batch during extraction; keeps 224-pixel im2col
/// buffers around a hundred megabytes.
const EXTRACT_BATCH: usize = 4;

/// Activations of `layer` for every stimulus, flattened `(channel, y, x)`.
pub fn extract_features(ckpt: &Checkpoint, set: &StimulusSet, layer: LayerName, target: usize) -> Result<FeatureMatrix> {
    if layer.is_fc() && !ckpt.has_fc1 {
        return Err(FeatureError::Nn(NnError::MissingFc(layer)).into());
    }
    ckpt.layer(layer).map_err(FeatureError::from)?;
    let chunks: Vec<std::result::Result<Vec<Vec<f64>>, FeatureError>> = (0..set.len())
        .collect::<Vec<_>>()
        .par_chunks(EXTRACT_BATCH)
        .map(|idx| {
            let sub = StimulusSet {
                label: String::new(),
                ids: idx.iter().map(|&i| set.ids[i].clone()).collect(),
                images: idx.iter().map(|&i| set.images[i].clone()).collect(),
            };
            let x = preprocess_stimuli(&sub, target, &ckpt.norm);
            let pass = ckpt.forward(&x, Some(layer))?;
            let act = pass.get(layer).expect("forward ran through the layer");
            Ok((0..idx.len()).map(|b| act.image_row(b)).collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(set.len());
    for c in chunks {
        rows.extend(c?);
    }
    let f = rows[0].len();
    let data = Array2::from_shape_vec((rows.len(), f), rows.concat()).expect("equal rows");
    let provenance = Provenance {
        condition: ckpt.rule.to_string(),
        seed: Some(ckpt.seed),
        layer: layer.to_string(),
    };
    Ok(FeatureMatrix::new(set.ids.clone(), data, provenance).map_err(FeatureError::from)?)
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    model: String,
    layer: String,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn encode_features(fm: &FeatureMatrix) -> Vec<u8> {
    let p = fm.provenance();
    let header = FeatureHeader { model: p.condition.clone(), layer: p.layer.clone(), seed: p.seed };
    let mut w = Writer::new();
    w.str(FEATURE_MAGIC).str(&serde_json::to_string(&header).expect("header serialises"));
    w.u32(fm.n_stimuli() as u32);
    for id in fm.stimulus_ids() {
        w.str(id);
    }
    w.u32(fm.n_features() as u32);
    w.f64s(fm.features().iter().copied());
    w.finish()
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FeatureError> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    let header: FeatureHeader =
        serde_json::from_str(&r.str("header")?).map_err(|e| FormatError::Header(e.to_string()))?;
    if header.layer.is_empty() {
        return Err(FormatError::Header("empty layer label".into()).into());
    }
    let n = r.u32("stimulus count")? as usize;
    let ids = (0..n).map(|_| r.str("stimulus id")).collect::<Result<Vec<_>, _>>()?;
    let f = r.u32("feature count")? as usize;
    let values = r.f64s(n.checked_mul(f).ok_or(FormatError::Truncated("feature values"))?, "feature values")?;
    r.finish()?;
    let data = Array2::from_shape_vec((n, f), values).expect("sized");
    let provenance = Provenance { condition: header.model, seed: header.seed, layer: header.layer };
    Ok(FeatureMatrix::new(ids, data, provenance)?)
}

pub fn save_features(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), encode_features(fm)).map_err(|e| Error::io(path, e))
}

/// Loads a feature file written by this crate or by an external exporter.
pub fn import_external_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    Ok(decode_features(&bytes)?)
}

/// Which model layer is compared against which brain region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRegionMap {
    pub pairs: Vec<(String, String)>,
}

impl LayerRegionMap {
    pub fn human() -> Self {
        Self::from_pairs(&[("Conv1", "V1"), ("Conv1", "V2"), ("Conv2", "V4"), ("Conv3", "LOC"), ("FC1", "IT")])
    }

    pub fn macaque() -> Self {
        Self::from_pairs(&[("Conv1", "V1"), ("Conv1", "V2"), ("Conv2", "V4"), ("FC1", "IT")])
    }

    pub fn for_species(species: Species) -> Self {
        match species {
            Species::Human => Self::human(),
            Species::Macaque | Species::Synthetic => Self::macaque(),
        }
    }

    fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        LayerRegionMap { pairs: pairs.iter().map(|(l, r)| (l.to_string(), r.to_string())).collect() }
    }

    /// Parses `Layer=Region` entries separated by commas, e.g. `Conv1=V1,FC1=IT`.
    pub fn parse(s: &str) -> Result<Self, FeatureError> {
        let mut pairs = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (l, r) = item.split_once('=').ok_or_else(|| FeatureError::Mapping(item.to_string()))?;
            let (l, r) = (l.trim(), r.trim());
            if l.is_empty() || r.is_empty() {
                return Err(FeatureError::Mapping(item.to_string()));
            }
            pairs.push((l.to_string(), r.to_string()));
        }
        if pairs.is_empty() {
            return Err(FeatureError::Mapping(s.to_string()));
        }
        Ok(LayerRegionMap { pairs })
    }

    /// The layer mapped to `region`, if any (first entry wins).
    pub fn layer_for(&self, region: &str) -> Option<&str> {
        self.pairs.iter().find(|(_, r)| r.eq_ignore_ascii_case(region)).map(|(l, _)| l.as_str())
    }

    pub fn regions_for(&self, layer: &str) -> Vec<&str> {
        self.pairs.iter().filter(|(l, _)| l.eq_ignore_ascii_case(layer)).map(|(_, r)| r.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, init_network_with, NetworkSpec, Rule};

    fn checkerboard(n: usize) -> RasterImage {
        let data = (0..3 * n * n).map(|i| (((i % n) + (i / n) % n) % 2) as f64).collect();
        RasterImage::new(n, n, data).unwrap()
    }

    fn mean(img: &RasterImage) -> f64 {
        img.chw().iter().sum::<f64>() / img.chw().len() as f64
    }

    #[test]
    fn bilinear_upsampling_preserves_mean() {
        let img = checkerboard(32);
        let big = img.resized(224, 224);
        assert!((mean(&big) - mean(&img)).abs() < 1e-6);
        // independent check on an irregular image
        let irregular = RasterImage::new(4, 4, (0..48).map(|i| ((i * i) % 17) as f64 / 17.0).collect()).unwrap();
        assert!((mean(&irregular.resized(28, 28)) - mean(&irregular)).abs() < 1e-12);
    }

    #[test]
    fn resize_identity_and_solid() {
        let img = checkerboard(8);
        assert_eq!(img.resized(8, 8), img);
        let solid = RasterImage::solid(5, 7, [0.2, 0.4, 0.6]).resized(224, 224);
        for c in 0..3 {
            let v = solid.get(c, 0, 0);
            for y in 0..224 {
                for x in 0..224 {
                    assert!((solid.get(c, y, x) - v).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn resize_matches_hand_interpolation() {
        // 2x1 -> 4x1: half-pixel centres give sources -0.25, 0.25, 0.75, 1.25
        let img = RasterImage::new(2, 1, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = img.resized(4, 1);
        let row: Vec<f64> = (0..4).map(|x| r.get(0, 0, x)).collect();
        assert_eq!(row, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn png_round_trip_and_decode_error_names_id() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::new(2, 1, vec![0.0, 1.0, 0.2, 0.4, 1.0, 0.0]).unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        let back = RasterImage::load_png(&p).unwrap();
        for (a, b) in img.chw().iter().zip(back.chw()) {
            assert!((a - b).abs() <= 0.5 / 255.0);
        }
        let err = RasterImage::decode_png("stim_7", b"not a png").unwrap_err();
        assert!(err.to_string().contains("stim_7"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("img")).unwrap();
        let mut entries = Vec::new();
        for i in 0..3 {
            let rel = PathBuf::from(format!("img/s{i}.png"));
            RasterImage::solid(4, 4, [i as f64 / 2.0, 0.0, 1.0]).save_png(&dir.path().join(&rel)).unwrap();
            entries.push((format!("s{i}"), rel));
        }
        let m = dir.path().join("stimuli.csv");
        std::fs::write(&m, write_manifest("toy", &entries)).unwrap();
        let set = StimulusSet::load(&m).unwrap();
        assert_eq!(set.label, "toy");
        assert_eq!(set.ids, vec!["s0", "s1", "s2"]);
        assert_eq!(set.images[2].get(0, 1, 1), 1.0);
        // broken payload reports the id
        std::fs::write(dir.path().join("img/s1.png"), b"garbage").unwrap();
        let err = StimulusSet::load(&m).unwrap_err();
        assert!(err.to_string().contains("\"s1\""), "{err}");
    }

    #[test]
    fn manifest_schema_errors() {
        assert!(parse_manifest("#crossrsa-stimuli/1\nset\nx\n#stimuli\nindex,id,path\n").is_err());
        assert!(parse_manifest("#crossrsa-stimuli/1\nset\nx\n#stimuli\nindex,id,path\n1,a,b.png\n").is_err());
        assert!(parse_manifest("#other\n").is_err());
    }

    fn small_set(n: usize) -> StimulusSet {
        let images = (0..n).map(|i| {
            RasterImage::new(8, 8, (0..192).map(|j| ((i * 31 + j * 7) % 13) as f64 / 13.0).collect()).unwrap()
        });
        StimulusSet::new("t", (0..n).map(|i| format!("s{i}")).collect(), images.collect()).unwrap()
    }

    #[test]
    fn extraction_shapes_duplicates_and_determinism() {
        let ckpt = init_network(1);
        let mut set = small_set(2);
        let fm = extract_features(&ckpt, &set, LayerName::Conv(1), 32).unwrap();
        assert_eq!(fm.features().dim(), (2, 32 * 16 * 16));
        assert_eq!(fm.provenance().layer, "Conv1");
        assert_eq!(fm.provenance().condition, "Random");
        set.images[1] = set.images[0].clone();
        let fm = extract_features(&ckpt, &set, LayerName::Conv(2), 32).unwrap();
        assert_eq!(fm.features().row(0), fm.features().row(1));
        let again = extract_features(&ckpt, &set, LayerName::Conv(2), 32).unwrap();
        assert_eq!(fm, again);
    }

    #[test]
    fn fc1_on_large_inputs_and_conv_only_error() {
        let mut ckpt = init_network_with(&NetworkSpec::toy(2), 2).unwrap();
        let set = small_set(5);
        let fm = extract_features(&ckpt, &set, LayerName::Fc(1), 32).unwrap();
        assert_eq!(fm.features().dim(), (5, 16));
        ckpt.rule = Rule::Stdp;
        let conv = ckpt.conv_only().unwrap();
        let err = extract_features(&conv, &set, LayerName::Fc(1), 32).unwrap_err();
        assert!(err.to_string().contains("FC1"));
    }

    #[test]
    fn feature_file_round_trip_and_layout() {
        let fm = FeatureMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            Array2::from_shape_vec((3, 4), (0..12).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap(),
            Provenance { condition: "resnet50".into(), seed: None, layer: "layer4".into() },
        )
        .unwrap();
        let bytes = encode_features(&fm);
        assert_eq!(decode_features(&bytes).unwrap(), fm);
        // hand-built exporter fixture: 3 stimuli x 4 features
        let mut w = Writer::new();
        w.str(FEATURE_MAGIC).str(r#"{"model":"resnet50","layer":"layer4"}"#).u32(3);
        for id in ["a", "b", "c"] {
            w.str(id);
        }
        w.u32(4).f64s((0..12).map(|v| v as f64 * 0.5 - 1.0));
        assert_eq!(decode_features(&w.finish()).unwrap(), fm);
    }

    #[test]
    fn feature_header_requires_layer() {
        let mut w = Writer::new();
        w.str(FEATURE_MAGIC).str(r#"{"model":"m","seed":1}"#).u32(0).u32(2);
        assert!(decode_features(&w.finish()).is_err());
    }

    #[test]
    fn region_maps() {
        let h = LayerRegionMap::human();
        assert_eq!(h.layer_for("LOC"), Some("Conv3"));
        assert_eq!(h.regions_for("Conv1"), vec!["V1", "V2"]);
        let m = LayerRegionMap::macaque();
        assert_eq!(m.layer_for("IT"), Some("FC1"));
        assert_eq!(m.layer_for("LOC"), None);
        let o = LayerRegionMap::parse("layer1=V1, layer4=IT").unwrap();
        assert_eq!(o.layer_for("it"), Some("layer4"));
        assert!(LayerRegionMap::parse("Conv1").is_err());
    }
}
