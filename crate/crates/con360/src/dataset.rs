//! Dataset preparation: clip segmentation, deterministic train/validation
//! splits, aspect standardization, target-format validation, and the caption
//! task export/ingest round trip.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::CubeFace;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub duration: f64,
    pub width: usize,
    pub height: usize,
    pub audio_rate: u32,
    pub source_uri: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub clip_id: String,
    pub segment_index: usize,
    pub start: f64,
    pub end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Set only on request; kept out of the default output so identical
    /// inputs produce byte-identical manifests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub clips: Vec<ClipRecord>,
    pub segments: Vec<SegmentRecord>,
}

impl Manifest {
    pub fn new(clips: Vec<ClipRecord>) -> Result<Self> {
        let m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed: None,
            created_at: None,
            clips,
            segments: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clips {
            if !(c.duration > 0.0) {
                return Err(Error::Manifest(format!(
                    "clip {} has non-positive duration",
                    c.clip_id
                )));
            }
            if !seen.insert(&c.clip_id) {
                return Err(Error::Manifest(format!("duplicate clip_id {}", c.clip_id)));
            }
        }
        for s in &self.segments {
            if !seen.contains(&s.clip_id) {
                return Err(Error::Manifest(format!(
                    "segment references unknown clip {}",
                    s.clip_id
                )));
            }
        }
        Ok(())
    }
}

/// Segment a clip into fixed-length windows: starts at multiples of
/// `seg_len - overlap` as long as the window fits. A 10 s clip with the
/// default 4 s / 1 s becomes [(0,4), (3,7), (6,10)]. Clips shorter than one
/// window give an empty list (the caller records the warning).
pub fn segment_clip(duration: f64, seg_len: f64, overlap: f64) -> Result<Vec<(f64, f64)>> {
    if !(seg_len > 0.0) || overlap < 0.0 || overlap >= seg_len {
        return Err(Error::Parameter(format!(
            "need 0 <= overlap < seg_len, got seg_len {seg_len}, overlap {overlap}"
        )));
    }
    let hop = seg_len - overlap;
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let start = k as f64 * hop;
        let end = start + seg_len;
        if end > duration + 1e-9 {
            break;
        }
        out.push((start, end));
        k += 1;
    }
    Ok(out)
}

/// Segment every clip in a manifest; returns warnings for clips too short
/// to produce any segment.
pub fn segment_manifest(
    manifest: &Manifest,
    seg_len: f64,
    overlap: f64,
) -> Result<(Manifest, Vec<String>)> {
    let mut out = manifest.clone();
    out.segments.clear();
    let mut warnings = Vec::new();
    for clip in &out.clips {
        let segs = segment_clip(clip.duration, seg_len, overlap)?;
        if segs.is_empty() {
            warnings.push(format!(
                "clip {} ({} s) is shorter than one {} s segment",
                clip.clip_id, clip.duration, seg_len
            ));
        }
        for (i, (start, end)) in segs.into_iter().enumerate() {
            out.segments.push(SegmentRecord {
                clip_id: clip.clip_id.clone(),
                segment_index: i,
                start,
                end,
                split: None,
            });
        }
    }
    Ok((out, warnings))
}

/// Deterministic, input-order-independent split assignment at clip level.
/// Clips are ranked by sha256(seed, clip_id); the first
/// round-half-away-from-zero(train_frac * N) go to the train split.
pub fn split_assignments(
    clip_ids: &[String],
    train_frac: f64,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Parameter(format!(
            "train_frac {train_frac} outside (0, 1)"
        )));
    }
    if clip_ids.is_empty() {
        return Err(Error::InvalidInput("no clips to split".into()));
    }
    let mut keyed: Vec<([u8; 32], &String)> = clip_ids
        .iter()
        .map(|id| {
            let mut hasher = Sha256::new();
            hasher.update(seed.to_le_bytes());
            hasher.update(id.as_bytes());
            (hasher.finalize().into(), id)
        })
        .collect();
    keyed.sort();
    let n = keyed.len();
    let n_train = ((train_frac * n as f64 + 0.5).floor() as usize).min(n);
    Ok(keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| {
            (
                id.clone(),
                if i < n_train { Split::Train } else { Split::Val },
            )
        })
        .collect())
}

/// Assign splits to every segment of a manifest, clip-level so the three
/// overlapping segments of one clip never straddle the split boundary.
pub fn split_manifest(manifest: &Manifest, train_frac: f64, seed: u64) -> Result<Manifest> {
    let ids: Vec<String> = manifest.clips.iter().map(|c| c.clip_id.clone()).collect();
    let assign = split_assignments(&ids, train_frac, seed)?;
    let mut out = manifest.clone();
    out.seed = Some(seed);
    // canonical clip order so output bytes do not depend on input order
    out.clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    out.segments.sort_by(|a, b| {
        a.clip_id
            .cmp(&b.clip_id)
            .then(a.segment_index.cmp(&b.segment_index))
    });
    for seg in &mut out.segments {
        seg.split = Some(assign[&seg.clip_id]);
    }
    Ok(out)
}

/// Count of clips per split.
pub fn split_counts(assign: &BTreeMap<String, Split>) -> (usize, usize) {
    let train = assign.values().filter(|s| **s == Split::Train).count();
    (train, assign.len() - train)
}

/// Plain (non-wrapping) bilinear resize, pixel-center aligned.
pub fn bilinear_resize(img: &ArrayView2<f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((out_h, out_w), |(j, i)| {
        let sx = ((i as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let sy = ((j as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = sx.floor() as usize;
        let y0 = sy.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = (sx - x0 as f64) as f32;
        let fy = (sy - y0 as f64) as f32;
        let a = img[[y0, x0]] * (1.0 - fx) + img[[y0, x1]] * fx;
        let b = img[[y1, x0]] * (1.0 - fx) + img[[y1, x1]] * fx;
        a * (1.0 - fy) + b * fy
    })
}

/// Stretch a frame to the 2:1 shape, keeping the height: W' = 2H. Frames
/// already 2:1 pass through unchanged.
pub fn standardize_aspect(img: &ArrayView2<f32>) -> Array2<f32> {
    let (h, w) = img.dim();
    if w == 2 * h {
        return img.to_owned();
    }
    bilinear_resize(img, h, 2 * h)
}

/// Target media format at the pipeline defaults: 32 frames at 8 fps,
/// 256x256, mono 16 kHz, 4 s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMedia {
    pub clip_id: String,
    pub segment_index: usize,
    pub frame_count: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub audio_channels: u32,
    pub audio_rate: u32,
    pub audio_duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationFlag {
    pub clip_id: String,
    pub segment_index: usize,
    pub field: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub flags: Vec<ValidationFlag>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Flag every segment deviating from the target format. Report-only; never
/// an error.
pub fn validate_targets(segments: &[SegmentMedia]) -> ValidationReport {
    let mut flags = Vec::new();
    let mut flag = |m: &SegmentMedia, field: &str, detail: String| {
        flags.push(ValidationFlag {
            clip_id: m.clip_id.clone(),
            segment_index: m.segment_index,
            field: field.to_string(),
            detail,
        });
    };
    for m in segments {
        if m.frame_count != 32 {
            flag(m, "frame_count", format!("{} != 32", m.frame_count));
        }
        if (m.fps - 8.0).abs() > 1e-9 {
            flag(m, "fps", format!("{} != 8", m.fps));
        }
        if m.width != 256 || m.height != 256 {
            flag(m, "resolution", format!("{}x{} != 256x256", m.width, m.height));
        }
        if m.audio_channels != 1 {
            flag(m, "channels", format!("{} != mono", m.audio_channels));
        }
        if m.audio_rate != 16_000 {
            flag(m, "audio_rate", format!("{} != 16000", m.audio_rate));
        }
        if (m.audio_duration - 4.0).abs() > 1e-6 {
            flag(m, "audio_duration", format!("{} != 4.0", m.audio_duration));
        }
    }
    ValidationReport { flags }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionTask {
    pub clip_id: String,
    pub timestamp: f64,
    pub face: CubeFace,
    pub image_path: String,
}

/// Render cube faces for each requested timestamp and write them as NPY
/// files under `out_dir`. Missing frames are skipped with a warning.
pub fn export_caption_tasks(
    clip_id: &str,
    frames: &[(f64, Option<Array2<f32>>)],
    face_size: usize,
    out_dir: &Path,
) -> Result<(Vec<CaptionTask>, Vec<String>)> {
    std::fs::create_dir_all(out_dir)?;
    let mut tasks = Vec::new();
    let mut warnings = Vec::new();
    for (ts, frame) in frames {
        let Some(frame) = frame else {
            warnings.push(format!("clip {clip_id}: no frame at t={ts}, task skipped"));
            continue;
        };
        let faces = crate::geometry::erp_to_cubemap(&frame.view(), face_size)?;
        for (face, img) in CubeFace::ALL.iter().zip(faces.iter()) {
            let file = format!("{clip_id}_{:.3}_{}.npy", ts, face.name());
            let tf = crate::io::npy::TensorFile::from_f32(
                vec![face_size, face_size],
                img.iter().copied().collect(),
            )?;
            crate::io::npy::write_npy(&tf, &out_dir.join(&file))?;
            tasks.push(CaptionTask {
                clip_id: clip_id.to_string(),
                timestamp: *ts,
                face: *face,
                image_path: file,
            });
        }
    }
    Ok((tasks, warnings))
}

/// Caption result entry as produced by the external captioning step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub clip_id: String,
    pub timestamp: f64,
    pub face: CubeFace,
    pub caption: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionResults {
    #[serde(default)]
    pub captions: Vec<CaptionResult>,
    /// Scene-level captions aggregated externally, one per clip.
    #[serde(default)]
    pub aggregated: BTreeMap<String, String>,
}

/// Per-clip captions keyed by (face, timestamp in integer milliseconds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub clip_id: String,
    pub per_face: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregated_caption: Option<String>,
}

/// Key for one (face, timestamp) caption slot.
pub fn caption_key(face: CubeFace, timestamp: f64) -> String {
    format!("{}@{}", face.name(), (timestamp * 1000.0).round() as i64)
}

/// Parse caption results JSON into per-clip records. Duplicate
/// (face, timestamp) entries keep the last value and record a warning;
/// missing faces are fine.
pub fn ingest_captions(json_text: &str) -> Result<(Vec<CaptionRecord>, Vec<String>)> {
    let results: CaptionResults = serde_json::from_str(json_text).map_err(|e| Error::JsonParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let mut records: BTreeMap<String, CaptionRecord> = BTreeMap::new();
    for r in results.captions {
        let rec = records
            .entry(r.clip_id.clone())
            .or_insert_with(|| CaptionRecord {
                clip_id: r.clip_id.clone(),
                per_face: BTreeMap::new(),
                aggregated_caption: None,
            });
        let key = caption_key(r.face, r.timestamp);
        if rec.per_face.insert(key.clone(), r.caption).is_some() {
            warnings.push(format!(
                "clip {}: duplicate caption for {key}, keeping the last",
                r.clip_id
            ));
        }
    }
    for (clip_id, caption) in results.aggregated {
        records
            .entry(clip_id.clone())
            .or_insert_with(|| CaptionRecord {
                clip_id,
                per_face: BTreeMap::new(),
                aggregated_caption: None,
            })
            .aggregated_caption = Some(caption);
    }
    Ok((records.into_values().collect(), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, duration: f64) -> ClipRecord {
        ClipRecord {
            clip_id: id.to_string(),
            duration,
            width: 2048,
            height: 1024,
            audio_rate: 16_000,
            source_uri: format!("clips/{id}.mp4"),
        }
    }

    #[test]
    fn ten_second_clip_three_segments() {
        assert_eq!(
            segment_clip(10.0, 4.0, 1.0).unwrap(),
            vec![(0.0, 4.0), (3.0, 7.0), (6.0, 10.0)]
        );
    }

    #[test]
    fn exact_and_short_clips() {
        assert_eq!(segment_clip(4.0, 4.0, 1.0).unwrap(), vec![(0.0, 4.0)]);
        assert_eq!(
            segment_clip(9.5, 4.0, 1.0).unwrap(),
            vec![(0.0, 4.0), (3.0, 7.0)]
        );
        assert!(segment_clip(2.0, 4.0, 1.0).unwrap().is_empty());
        assert!(segment_clip(10.0, 4.0, 4.0).is_err());
    }

    #[test]
    fn segment_manifest_warns_on_short() {
        let m = Manifest::new(vec![clip("a", 10.0), clip("b", 2.0)]).unwrap();
        let (out, warnings) = segment_manifest(&m, 4.0, 1.0).unwrap();
        assert_eq!(out.segments.len(), 3);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains('b'));
    }

    #[test]
    fn split_100_clips_85_15() {
        let ids: Vec<String> = (0..100).map(|i| format!("clip{i:03}")).collect();
        let a = split_assignments(&ids, 0.85, 7).unwrap();
        let (train, val) = split_counts(&a);
        assert_eq!(train, 85);
        assert_eq!(val, 15);
    }

    #[test]
    fn split_rounding_half_away() {
        let ids: Vec<String> = (0..7).map(|i| format!("c{i}")).collect();
        let a = split_assignments(&ids, 0.85, 1).unwrap();
        let (train, val) = split_counts(&a);
        // 0.85 * 7 = 5.95 -> 6
        assert_eq!(train, 6);
        assert_eq!(val, 1);
    }

    #[test]
    fn split_deterministic_and_order_independent() {
        let clips: Vec<ClipRecord> = (0..20).map(|i| clip(&format!("c{i:02}"), 10.0)).collect();
        let m = Manifest::new(clips.clone()).unwrap();
        let (seg, _) = segment_manifest(&m, 4.0, 1.0).unwrap();
        let a = split_manifest(&seg, 0.85, 42).unwrap();

        let mut shuffled = clips;
        shuffled.reverse();
        shuffled.swap(0, 5);
        let m2 = Manifest::new(shuffled).unwrap();
        let (seg2, _) = segment_manifest(&m2, 4.0, 1.0).unwrap();
        let b = split_manifest(&seg2, 0.85, 42).unwrap();
        assert_eq!(a, b);

        // different seed, different assignment (with overwhelming likelihood)
        let c = split_manifest(&seg, 0.85, 43).unwrap();
        assert_ne!(
            a.segments.iter().map(|s| s.split).collect::<Vec<_>>(),
            c.segments.iter().map(|s| s.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn no_clip_in_both_splits() {
        let clips: Vec<ClipRecord> = (0..40).map(|i| clip(&format!("c{i:02}"), 10.0)).collect();
        let m = Manifest::new(clips).unwrap();
        let (seg, _) = segment_manifest(&m, 4.0, 1.0).unwrap();
        let split = split_manifest(&seg, 0.85, 3).unwrap();
        let mut by_clip: BTreeMap<&str, BTreeSet<Option<Split>>> = BTreeMap::new();
        for s in &split.segments {
            by_clip.entry(&s.clip_id).or_default().insert(s.split);
        }
        for (_, splits) in by_clip {
            assert_eq!(splits.len(), 1);
        }
    }

    #[test]
    fn aspect_standardization() {
        let img = Array2::from_shape_fn((1024, 2048), |(r, c)| (r + c) as f32);
        let out = standardize_aspect(&img.view());
        assert_eq!(out, img); // already 2:1: untouched

        let img = Array2::from_elem((1080, 1920), 2.5f32);
        let out = standardize_aspect(&img.view());
        assert_eq!(out.dim(), (1080, 2160));
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-6));
        assert!(crate::geometry::ErpGrid::new(out.dim().1, out.dim().0).is_ok());
    }

    #[test]
    fn target_validation_flags() {
        let good = SegmentMedia {
            clip_id: "a".into(),
            segment_index: 0,
            frame_count: 32,
            fps: 8.0,
            width: 256,
            height: 256,
            audio_channels: 1,
            audio_rate: 16_000,
            audio_duration: 4.0,
        };
        assert!(validate_targets(&[good.clone()]).is_clean());

        let mut short = good.clone();
        short.frame_count = 30;
        let report = validate_targets(&[short]);
        assert_eq!(report.flags.len(), 1);
        assert_eq!(report.flags[0].field, "frame_count");

        let mut stereo = good.clone();
        stereo.audio_channels = 2;
        assert_eq!(validate_targets(&[stereo]).flags[0].field, "channels");

        let mut cd = good;
        cd.audio_rate = 44_100;
        assert_eq!(validate_targets(&[cd]).flags[0].field, "audio_rate");
    }

    #[test]
    fn caption_export_counts() {
        let dir = tempfile::tempdir().unwrap();
        let frame = Array2::from_elem((8, 16), 0.5f32);
        let frames = vec![
            (1.0, Some(frame.clone())),
            (2.0, None),
            (3.0, Some(frame)),
        ];
        let (tasks, warnings) = export_caption_tasks("clipA", &frames, 4, dir.path()).unwrap();
        assert_eq!(tasks.len(), 12); // 2 usable timestamps x 6 faces
        assert_eq!(warnings.len(), 1);
        // face images exist and match direct cubemap output bitwise
        let frame = Array2::from_elem((8, 16), 0.5f32);
        let faces = crate::geometry::erp_to_cubemap(&frame.view(), 4).unwrap();
        let t0 = &tasks[0];
        let tf = crate::io::npy::read_npy(&dir.path().join(&t0.image_path)).unwrap();
        assert_eq!(tf.to_f32_vec().unwrap(), faces[0].iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn caption_ingest() {
        let json = r#"{
            "captions": [
                {"clip_id": "a", "timestamp": 2.0, "face": "front", "caption": "a drummer"},
                {"clip_id": "a", "timestamp": 2.0, "face": "back", "caption": "a crowd"},
                {"clip_id": "a", "timestamp": 2.0, "face": "front", "caption": "a louder drummer"}
            ],
            "aggregated": {"a": "a band plays in the round"}
        }"#;
        let (records, warnings) = ingest_captions(json).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(warnings.len(), 1);
        let rec = &records[0];
        assert_eq!(rec.per_face.len(), 2);
        assert_eq!(
            rec.per_face[&caption_key(CubeFace::Front, 2.0)],
            "a louder drummer"
        );
        assert_eq!(
            rec.aggregated_caption.as_deref(),
            Some("a band plays in the round")
        );
    }

    #[test]
    fn caption_ingest_malformed() {
        let err = ingest_captions("{ not json").unwrap_err();
        match err {
            Error::JsonParse { line, column, .. } => {
                assert!(line >= 1 && column >= 1);
            }
            other => panic!("expected JsonParse, got {other:?}"),
        }
    }

    #[test]
    fn manifest_validation() {
        assert!(Manifest::new(vec![clip("a", 10.0), clip("a", 5.0)]).is_err());
        assert!(Manifest::new(vec![clip("a", 0.0)]).is_err());
    }
}
