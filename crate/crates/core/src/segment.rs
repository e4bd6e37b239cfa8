//! Fixed-length segment vectors: 3-4-3 interior averaging plus two
//! boundary-extension averages over frame-level features.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::frontend::{FeatureKind, FrameMatrix};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("empty segment: {0}")]
    EmptySegment(String),
    #[error("segment [{start}, {end}) is not a valid span")]
    BadSpan { start: usize, end: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    BadLabelFile {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("utterance `{0}` missing from metadata file")]
    MissingUtterance(String),
}

/// A labelled phone segment inside one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSegment {
    pub utterance_id: String,
    pub start_sample: usize,
    pub end_sample: usize,
    pub label: String,
    pub speaker_id: String,
    pub dialect_id: String,
}

/// The fixed-length base representation of one segment:
/// `[pre | interior-1 | interior-2 | interior-3 | post]`, each block a mean
/// of 3d-dimensional frame rows, so `15 * static_dim` values total.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
    pub segment: PhoneSegment,
}

impl SegmentVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Split `n` interior frames into three contiguous ranges with boundaries
/// at `round(0.3 n)` and `round(0.7 n)`. Ranges left empty by rounding are
/// replaced with the single nearest frame, so every range is nonempty.
pub fn split_343(n: usize) -> Result<[Range<usize>; 3], SegmentError> {
    if n == 0 {
        return Err(SegmentError::EmptySegment("no interior frames".into()));
    }
    let b1 = (0.3 * n as f64).round() as usize;
    let b2 = (0.7 * n as f64).round() as usize;
    let fix = |r: Range<usize>| -> Range<usize> {
        if r.is_empty() {
            let idx = r.start.min(n - 1);
            idx..idx + 1
        } else {
            r
        }
    };
    Ok([fix(0..b1), fix(b1..b2), fix(b2..n)])
}

fn mean_of_rows(frames: &FrameMatrix, rows: &[usize]) -> Vec<f64> {
    let cols = frames.values.ncols();
    let mut acc = vec![0.0; cols];
    for &r in rows {
        for c in 0..cols {
            acc[c] += frames.values[[r, c]];
        }
    }
    let inv = 1.0 / rows.len() as f64;
    for v in &mut acc {
        *v *= inv;
    }
    acc
}

/// Aggregate one segment of an utterance [`FrameMatrix`] into a
/// [`SegmentVector`]. A frame belongs to the region containing its center
/// time; extensions are clamped to the utterance and fall back to the
/// nearest interior region mean when they contain no frame center.
pub fn aggregate_segment(
    frames: &FrameMatrix,
    segment: &PhoneSegment,
    extension_ms: f64,
) -> Result<SegmentVector, SegmentError> {
    if segment.start_sample >= segment.end_sample {
        return Err(SegmentError::BadSpan {
            start: segment.start_sample,
            end: segment.end_sample,
        });
    }
    let n = frames.n_frames();
    if n == 0 {
        return Err(SegmentError::EmptySegment(format!(
            "utterance `{}` has no frames",
            segment.utterance_id
        )));
    }
    let ext = (extension_ms * frames.rate as f64 / 1000.0).round();
    let start = segment.start_sample as f64;
    let end = segment.end_sample as f64;
    let pre_lo = (start - ext).max(0.0);

    let centers: Vec<f64> = (0..n).map(|i| frames.frame_center_sample(i)).collect();
    let in_span = |lo: f64, hi: f64| -> Vec<usize> {
        (0..n).filter(|&i| centers[i] >= lo && centers[i] < hi).collect()
    };

    let mut interior = in_span(start, end);
    if interior.is_empty() {
        // shorter than one window: use the frame nearest the midpoint
        let mid = (start + end) / 2.0;
        let nearest = (0..n)
            .min_by(|&a, &b| {
                (centers[a] - mid)
                    .abs()
                    .partial_cmp(&(centers[b] - mid).abs())
                    .unwrap()
            })
            .unwrap();
        interior.push(nearest);
    }

    let parts = split_343(interior.len())?;
    let part_means: Vec<Vec<f64>> = parts
        .iter()
        .map(|r| mean_of_rows(frames, &interior[r.clone()]))
        .collect();

    let pre_rows = in_span(pre_lo, start);
    let pre_mean = if pre_rows.is_empty() {
        part_means[0].clone()
    } else {
        mean_of_rows(frames, &pre_rows)
    };
    let post_hi = end + ext; // centers never exceed the utterance span
    let post_rows = in_span(end, post_hi);
    let post_mean = if post_rows.is_empty() {
        part_means[2].clone()
    } else {
        mean_of_rows(frames, &post_rows)
    };

    let mut values = pre_mean;
    for m in &part_means {
        values.extend_from_slice(m);
    }
    values.extend_from_slice(&post_mean);
    Ok(SegmentVector {
        values,
        kind: frames.kind,
        segment: segment.clone(),
    })
}

// --- CSV rows ------------------------------------------------------------------

/// One segment vector as a CSV row:
/// `utterance,start,end,label,speaker,dialect,v0,...`. Values use the
/// shortest exact float representation so rows round-trip bit-identically.
pub fn segment_vector_to_csv_row(sv: &SegmentVector) -> String {
    let s = &sv.segment;
    let mut row = format!(
        "{},{},{},{},{},{}",
        s.utterance_id, s.start_sample, s.end_sample, s.label, s.speaker_id, s.dialect_id
    );
    for v in &sv.values {
        row.push(',');
        row.push_str(&format!("{}", v));
    }
    row
}

/// Parse a row written by [`segment_vector_to_csv_row`].
pub fn segment_vector_from_csv_row(
    row: &str,
    kind: FeatureKind,
    line: usize,
) -> Result<SegmentVector, SegmentError> {
    let err = |msg: &str| SegmentError::BadLabelFile {
        path: "<csv>".to_string(),
        line,
        msg: msg.to_string(),
    };
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() < 7 {
        return Err(err("expected at least 7 fields"));
    }
    let start: usize = fields[1].parse().map_err(|_| err("bad start"))?;
    let end: usize = fields[2].parse().map_err(|_| err("bad end"))?;
    let mut values = Vec::with_capacity(fields.len() - 6);
    for f in &fields[6..] {
        let v: f64 = f.parse().map_err(|_| err("bad float"))?;
        if !v.is_finite() {
            return Err(err("non-finite value"));
        }
        values.push(v);
    }
    Ok(SegmentVector {
        values,
        kind,
        segment: PhoneSegment {
            utterance_id: fields[0].to_string(),
            start_sample: start,
            end_sample: end,
            label: fields[3].to_string(),
            speaker_id: fields[4].to_string(),
            dialect_id: fields[5].to_string(),
        },
    })
}

/// Write segment vectors as a CSV file with a comment line recording the
/// feature kind and dimension.
pub fn write_segment_csv(path: &Path, vectors: &[SegmentVector]) -> Result<(), SegmentError> {
    assert!(!vectors.is_empty(), "nothing to write");
    let kind = vectors[0].kind;
    let dim = vectors[0].dim();
    let mut out = format!("# kind={} dim={}\n", kind, dim);
    out.push_str("utterance,start,end,label,speaker,dialect");
    for c in 0..dim {
        out.push_str(&format!(",v{}", c));
    }
    out.push('\n');
    for sv in vectors {
        assert_eq!(sv.kind, kind, "mixed kinds in one segment file");
        let s = &sv.segment;
        for field in [&s.utterance_id, &s.label, &s.speaker_id, &s.dialect_id] {
            if field.contains(',') {
                return Err(SegmentError::BadLabelFile {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!("field `{}` contains a comma", field),
                });
            }
        }
        out.push_str(&segment_vector_to_csv_row(sv));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a segment-vector CSV written by [`write_segment_csv`].
pub fn read_segment_csv(path: &Path) -> Result<Vec<SegmentVector>, SegmentError> {
    let text = fs::read_to_string(path)?;
    let mut kind = None;
    let mut dim: Option<usize> = None;
    let mut vectors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some((key, value)) = token.split_once('=') {
                    match key {
                        "kind" => kind = FeatureKind::parse(value),
                        "dim" => dim = value.parse().ok(),
                        _ => {}
                    }
                }
            }
            continue;
        }
        if line.starts_with("utterance,") || line.trim().is_empty() {
            continue;
        }
        let kind = kind.ok_or_else(|| SegmentError::BadLabelFile {
            path: path.display().to_string(),
            line: i + 1,
            msg: "rows before the `# kind=` comment".to_string(),
        })?;
        let sv = segment_vector_from_csv_row(line, kind, i + 1)?;
        if let Some(d) = dim {
            if sv.dim() != d {
                return Err(SegmentError::BadLabelFile {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("row has dim {}, header says {}", sv.dim(), d),
                });
            }
        }
        vectors.push(sv);
    }
    if vectors.is_empty() {
        return Err(SegmentError::EmptySegment(format!(
            "no rows in {}",
            path.display()
        )));
    }
    Ok(vectors)
}

// --- label and metadata files ------------------------------------------------

/// Parse a TIMIT-style label file: one `start_sample end_sample label` line
/// per segment. Speaker/dialect fields are filled from the metadata map.
pub fn parse_label_file(
    path: &Path,
    utterance_id: &str,
    meta: &UtteranceMetadata,
) -> Result<Vec<PhoneSegment>, SegmentError> {
    let text = fs::read_to_string(path)?;
    let (speaker_id, dialect_id) = meta
        .get(utterance_id)
        .ok_or_else(|| SegmentError::MissingUtterance(utterance_id.to_string()))?;
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| SegmentError::BadLabelFile {
            path: path.display().to_string(),
            line: i + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 3 {
            return Err(err("expected `start end label`"));
        }
        let start: usize = fields[0].parse().map_err(|_| err("bad start sample"))?;
        let end: usize = fields[1].parse().map_err(|_| err("bad end sample"))?;
        if start >= end {
            return Err(err("start must be below end"));
        }
        if fields[2].is_empty() {
            return Err(err("empty label"));
        }
        segments.push(PhoneSegment {
            utterance_id: utterance_id.to_string(),
            start_sample: start,
            end_sample: end,
            label: fields[2].to_string(),
            speaker_id: speaker_id.clone(),
            dialect_id: dialect_id.clone(),
        });
    }
    Ok(segments)
}

/// Sidecar metadata: `utterance_id speaker_id dialect_id` per line.
#[derive(Debug, Clone, Default)]
pub struct UtteranceMetadata {
    map: BTreeMap<String, (String, String)>,
}

impl UtteranceMetadata {
    pub fn load(path: &Path) -> Result<Self, SegmentError> {
        let text = fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(SegmentError::BadLabelFile {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: "expected `utterance speaker dialect`".to_string(),
                });
            }
            map.insert(
                fields[0].to_string(),
                (fields[1].to_string(), fields[2].to_string()),
            );
        }
        Ok(Self { map })
    }

    pub fn insert(&mut self, utterance: &str, speaker: &str, dialect: &str) {
        self.map.insert(
            utterance.to_string(),
            (speaker.to_string(), dialect.to_string()),
        );
    }

    pub fn get(&self, utterance: &str) -> Option<&(String, String)> {
        self.map.get(utterance)
    }

    pub fn write(&self, path: &Path) -> Result<(), SegmentError> {
        let mut out = String::new();
        for (utt, (spk, dr)) in &self.map {
            out.push_str(&format!("{} {} {}\n", utt, spk, dr));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrontendConfig;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn frame_matrix(values: Array2<f64>, kind: FeatureKind) -> FrameMatrix {
        FrameMatrix {
            values,
            kind,
            config: FrontendConfig::default(),
            rate: 16000,
        }
    }

    fn seg(start: usize, end: usize) -> PhoneSegment {
        PhoneSegment {
            utterance_id: "utt0".into(),
            start_sample: start,
            end_sample: end,
            label: "aa".into(),
            speaker_id: "s0".into(),
            dialect_id: "b0".into(),
        }
    }

    #[test]
    fn split_343_examples() {
        let r = split_343(10).unwrap();
        assert_eq!(r[0].len(), 3);
        assert_eq!(r[1].len(), 4);
        assert_eq!(r[2].len(), 3);
        let r = split_343(3).unwrap();
        assert_eq!([r[0].len(), r[1].len(), r[2].len()], [1, 1, 1]);
        let r = split_343(1).unwrap();
        assert_eq!(r, [0..1, 0..1, 0..1]);
        assert!(matches!(split_343(0), Err(SegmentError::EmptySegment(_))));
    }

    #[test]
    fn split_343_covers_all_frames_for_n_ge_3() {
        for n in 3..200 {
            let r = split_343(n).unwrap();
            assert_eq!(r[0].start, 0);
            assert_eq!(r[0].end, r[1].start);
            assert_eq!(r[1].end, r[2].start);
            assert_eq!(r[2].end, n);
            assert!(r.iter().all(|x| !x.is_empty()));
        }
    }

    #[test]
    fn dimension_identity_for_all_kinds() {
        let cfg = FrontendConfig::default();
        for (kind, expect) in [
            (FeatureKind::Mfs, 615),
            (FeatureKind::Mfb, 615),
            (FeatureKind::Mfc, 195),
            (FeatureKind::Plp, 195),
        ] {
            let cols = 3 * kind.static_dim(&cfg);
            let frames = frame_matrix(Array2::from_elem((40, cols), 1.0), kind);
            // segment covering the middle of the utterance
            let sv = aggregate_segment(&frames, &seg(1600, 4800), 30.0).unwrap();
            assert_eq!(sv.dim(), expect, "{kind}");
            assert_eq!(sv.dim(), 15 * kind.static_dim(&cfg));
        }
    }

    #[test]
    fn constant_frames_give_value_repeated_five_times() {
        let cols = 39;
        let mut values = Array2::zeros((30, cols));
        for r in 0..30 {
            for c in 0..cols {
                values[[r, c]] = c as f64 + 0.5;
            }
        }
        let frames = frame_matrix(values, FeatureKind::Plp);
        let sv = aggregate_segment(&frames, &seg(1600, 4000), 30.0).unwrap();
        for block in 0..5 {
            for c in 0..cols {
                assert_eq!(sv.values[block * cols + c], c as f64 + 0.5);
            }
        }
    }

    #[test]
    fn blocks_equal_direct_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols = 6;
        let values = Array2::from_shape_fn((50, cols), |_| rng.gen_range(-1.0..1.0));
        let frames = frame_matrix(values.clone(), FeatureKind::Plp);
        let segment = seg(2000, 6000);
        let sv = aggregate_segment(&frames, &segment, 30.0).unwrap();

        // recompute by direct summation using each frame's center
        let ext = 480.0;
        let centers: Vec<f64> = (0..50).map(|i| frames.frame_center_sample(i)).collect();
        let collect = |lo: f64, hi: f64| -> Vec<usize> {
            (0..50).filter(|&i| centers[i] >= lo && centers[i] < hi).collect()
        };
        let interior = collect(2000.0, 6000.0);
        let parts = split_343(interior.len()).unwrap();
        let regions: Vec<Vec<usize>> = vec![
            collect(2000.0 - ext, 2000.0),
            interior[parts[0].clone()].to_vec(),
            interior[parts[1].clone()].to_vec(),
            interior[parts[2].clone()].to_vec(),
            collect(6000.0, 6000.0 + ext),
        ];
        for (b, rows) in regions.iter().enumerate() {
            assert!(!rows.is_empty());
            for c in 0..cols {
                let mean: f64 =
                    rows.iter().map(|&r| values[[r, c]]).sum::<f64>() / rows.len() as f64;
                let got = sv.values[b * cols + c];
                assert!((got - mean).abs() < 1e-12, "block {} col {}", b, c);
            }
        }
    }

    #[test]
    fn order_within_a_region_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cols = 4;
        let mut values = Array2::from_shape_fn((40, cols), |_| rng.gen_range(-1.0..1.0));
        let frames = frame_matrix(values.clone(), FeatureKind::Plp);
        let segment = seg(1600, 5600);
        let before = aggregate_segment(&frames, &segment, 30.0).unwrap();
        // swap two frames that both sit inside the middle interior region
        let centers: Vec<f64> = (0..40).map(|i| frames.frame_center_sample(i)).collect();
        let interior: Vec<usize> = (0..40)
            .filter(|&i| centers[i] >= 1600.0 && centers[i] < 5600.0)
            .collect();
        let parts = split_343(interior.len()).unwrap();
        let mid = &interior[parts[1].clone()];
        let (a, b) = (mid[0], mid[1]);
        for c in 0..cols {
            let tmp = values[[a, c]];
            values[[a, c]] = values[[b, c]];
            values[[b, c]] = tmp;
        }
        let swapped = frame_matrix(values, FeatureKind::Plp);
        let after = aggregate_segment(&swapped, &segment, 30.0).unwrap();
        for (x, y) in before.values.iter().zip(after.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_at_origin_falls_back_to_first_interior_mean() {
        let mut values = Array2::zeros((20, 3));
        for r in 0..20 {
            for c in 0..3 {
                values[[r, c]] = r as f64 + c as f64;
            }
        }
        let frames = frame_matrix(values, FeatureKind::Plp);
        let sv = aggregate_segment(&frames, &seg(0, 2400), 30.0).unwrap();
        assert_eq!(sv.dim(), 15);
        // no frame center lies before sample 0, so pre == interior-1
        for c in 0..3 {
            assert_eq!(sv.values[c], sv.values[3 + c]);
        }
    }

    #[test]
    fn tiny_segment_still_produces_full_vector() {
        let values = Array2::from_shape_fn((10, 3), |(r, c)| (r * 3 + c) as f64);
        let frames = frame_matrix(values, FeatureKind::Plp);
        // shorter than a window and between frame centers
        let sv = aggregate_segment(&frames, &seg(210, 230), 30.0).unwrap();
        assert_eq!(sv.dim(), 15);
        assert!(sv.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_frame_matrix_is_an_error() {
        let frames = frame_matrix(Array2::zeros((0, 3)), FeatureKind::Plp);
        assert!(matches!(
            aggregate_segment(&frames, &seg(0, 100), 30.0),
            Err(SegmentError::EmptySegment(_))
        ));
    }

    #[test]
    fn inverted_span_is_an_error() {
        let frames = frame_matrix(Array2::zeros((5, 3)), FeatureKind::Plp);
        assert!(matches!(
            aggregate_segment(&frames, &seg(200, 200), 30.0),
            Err(SegmentError::BadSpan { .. })
        ));
    }

    #[test]
    fn segment_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        let vectors: Vec<SegmentVector> = (0..4)
            .map(|i| SegmentVector {
                values: vec![i as f64 / 3.0, -1.0 / (i + 1) as f64, 2e-17],
                kind: FeatureKind::Mfc,
                segment: seg(i * 10, i * 10 + 5),
            })
            .collect();
        write_segment_csv(&path, &vectors).unwrap();
        let back = read_segment_csv(&path).unwrap();
        assert_eq!(vectors, back);
    }

    #[test]
    fn label_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let label_path = dir.path().join("utt1.phn");
        std::fs::write(&label_path, "0 1600 aa\n1600 3200 iy\n").unwrap();
        let mut meta = UtteranceMetadata::default();
        meta.insert("utt1", "spk7", "b2");
        let segs = parse_label_file(&label_path, "utt1", &meta).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].label, "aa");
        assert_eq!(segs[1].start_sample, 1600);
        assert_eq!(segs[0].speaker_id, "spk7");
        assert_eq!(segs[0].dialect_id, "b2");

        let meta_path = dir.path().join("metadata.txt");
        meta.write(&meta_path).unwrap();
        let loaded = UtteranceMetadata::load(&meta_path).unwrap();
        assert_eq!(loaded.get("utt1"), Some(&("spk7".to_string(), "b2".to_string())));
    }

    #[test]
    fn label_file_rejects_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut meta = UtteranceMetadata::default();
        meta.insert("u", "s", "d");
        let p = dir.path().join("bad.phn");
        std::fs::write(&p, "10 5 aa\n").unwrap();
        assert!(parse_label_file(&p, "u", &meta).is_err());
        std::fs::write(&p, "10 20\n").unwrap();
        assert!(parse_label_file(&p, "u", &meta).is_err());
        std::fs::write(&p, "0 100 aa\n").unwrap();
        assert!(parse_label_file(&p, "unknown", &meta).is_err());
    }
}
