//! Acceptance suite: nine release criteria, one test each. Every test
//! prints a single PASS line on success; tolerances are pinned here and
//! must not be loosened.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use con360::basd::{signed_squared_distance_map, FovMask};
use con360::conditioning::{
    film_apply, film_params, map_encoder_forward, stack_maps, ConditioningStack, InjectionSite,
    MapEncoderConfig, WeightStore,
};
use con360::geometry::{
    erp_pixel_to_latlon, erp_to_cubemap, extract_viewport, latlon_to_erp_pixel,
    project_fov_boundary, ErpGrid, FovSpec, LatLon,
};
use con360::metrics::{
    frechet_distance, frechet_from_fits, gaussian_fit, kl_divergence, s_kl, to_prob_map,
    EmbeddingSet, GaussianFit,
};
use con360::saliency::{select_fovs_for_sequence, SaliencyFrame, SaliencySequence, ViewpointParams};
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_con360");

/// Independent O(N^2) signed squared distance: for each pixel, scan every
/// pixel of the opposite class, with horizontal wrap. Deliberately separate
/// from the library's transform so the two routes cannot share a bug.
fn brute_signed_squared(inside: &Array2<bool>) -> Array2<i64> {
    let (h, w) = inside.dim();
    let mut out = Array2::<i64>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let me = inside[[r, c]];
            let mut best = i64::MAX;
            for rr in 0..h {
                for cc in 0..w {
                    if inside[[rr, cc]] != me {
                        let dv = rr as i64 - r as i64;
                        let du = (cc as i64 - c as i64).abs();
                        let du = du.min(w as i64 - du);
                        best = best.min(dv * dv + du * du);
                    }
                }
            }
            out[[r, c]] = if me { best } else { -best };
        }
    }
    out
}

fn random_two_class_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<bool> {
    loop {
        let m = Array2::from_shape_fn((h, w), |_| rng.random_bool(0.5));
        let n = m.iter().filter(|&&b| b).count();
        if n > 0 && n < h * w {
            return m;
        }
    }
}

#[test]
fn criterion_1_basd_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA5D);
    for (count, h, w) in [(30usize, 16usize, 32usize), (5, 32, 64)] {
        for _ in 0..count {
            let inside = random_two_class_mask(&mut rng, h, w);
            let mask = FovMask::new(ErpGrid::new(w, h).unwrap(), inside.clone()).unwrap();
            let fast = signed_squared_distance_map(&mask).unwrap();
            let brute = brute_signed_squared(&inside);
            assert_eq!(fast, brute, "{h}x{w} mask disagrees with oracle");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!("ACCEPTANCE 1 basd-oracle-equivalence PASS ({elapsed:?})");
}

#[test]
fn criterion_2_projection_round_trips() {
    let grid = ErpGrid::new(16, 8).unwrap();
    for v in 0..8 {
        for u in 0..16 {
            let p = erp_pixel_to_latlon(u, v, grid).unwrap();
            let (uu, vv) = latlon_to_erp_pixel(p, grid);
            assert!(
                (uu - u as f64).abs() < 1e-12 && (vv - v as f64).abs() < 1e-12,
                "({u}, {v}) -> ({uu}, {vv})"
            );
        }
    }

    // smooth synthetic field on a 256x512 ERP frame
    let erp = Array2::from_shape_fn((256, 512), |(r, c)| {
        let x = c as f32 / 512.0;
        let y = r as f32 / 256.0;
        (std::f32::consts::TAU * x).sin() * 0.25 + y * 0.5 + 0.25
    });
    let front = FovSpec::new(
        LatLon::new(0.0, 0.0).unwrap(),
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
        0.0,
    )
    .unwrap();
    let viewport = extract_viewport(&erp.view(), &front, 128, 128).unwrap();
    let faces = erp_to_cubemap(&erp.view(), 128).unwrap();
    let max_diff = viewport
        .iter()
        .zip(faces[0].iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_diff <= 1e-6, "viewport vs front face: {max_diff}");
    println!("ACCEPTANCE 2 projection-round-trips PASS");
}

#[test]
fn criterion_3_boundary_corners() {
    let fov = FovSpec::new(
        LatLon::new(0.0, 0.0).unwrap(),
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
        0.0,
    )
    .unwrap();
    let grid = ErpGrid::new(512, 256).unwrap();
    let boundary = project_fov_boundary(&fov, grid, 33).unwrap();

    let corner_lat = (1.0f64 / 2.0f64.sqrt()).atan();
    let corner_lon = std::f64::consts::FRAC_PI_4;
    for (lat, lon) in [
        (corner_lat, corner_lon),
        (corner_lat, -corner_lon),
        (-corner_lat, corner_lon),
        (-corner_lat, -corner_lon),
    ] {
        let best = boundary
            .directions
            .iter()
            .map(|d| {
                let p = con360::geometry::direction_to_latlon(*d);
                ((p.lat() - lat).abs()).max((p.lon() - lon).abs())
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9, "corner ({lat}, {lon}) off by {best}");
    }
    println!("ACCEPTANCE 3 boundary-corners PASS");
}

#[test]
fn criterion_4_metric_fixtures() {
    // kl(p, p) = 0 exactly
    let m = Array2::from_shape_fn((4, 8), |(r, c)| (r * 8 + c) as f32 + 1.0);
    let p = to_prob_map(&m.view(), 1e-8).unwrap();
    assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

    // delta vs uniform over 4 cells -> ln 4 within 1e-5 at eps 1e-8
    let delta = ndarray::array![[1.0f32, 0.0], [0.0, 0.0]];
    let uniform = ndarray::array![[1.0f32, 1.0], [1.0, 1.0]];
    let pd = to_prob_map(&delta.view(), 1e-8).unwrap();
    let pu = to_prob_map(&uniform.view(), 1e-8).unwrap();
    let kl = kl_divergence(&pd, &pu).unwrap();
    assert!((kl - 4.0f64.ln()).abs() < 1e-5, "kl {kl}");

    // closed-form 1-D Fréchet cases within 1e-9
    let n01 = GaussianFit {
        mean: ndarray::array![0.0],
        cov: ndarray::array![[1.0]],
    };
    let n11 = GaussianFit {
        mean: ndarray::array![1.0],
        cov: ndarray::array![[1.0]],
    };
    let n04 = GaussianFit {
        mean: ndarray::array![0.0],
        cov: ndarray::array![[4.0]],
    };
    let d = frechet_from_fits(&n01, &n11).unwrap();
    assert!((d - 1.0).abs() < 1e-9, "N(0,1)/N(1,1): {d}");
    let d = frechet_from_fits(&n01, &n04).unwrap();
    assert!((d - 1.0).abs() < 1e-9, "N(0,1)/N(0,4): {d}");

    // the same cases through the sample path: two-sample sets whose fits
    // are exact
    let half = std::f64::consts::SQRT_2 / 2.0;
    let a = EmbeddingSet::new("a", ndarray::array![[-half], [half]]).unwrap();
    let fit = gaussian_fit(&a);
    assert!((fit.cov[[0, 0]] - 1.0).abs() < 1e-12);
    let b = EmbeddingSet::new("b", ndarray::array![[1.0 - half], [1.0 + half]]).unwrap();
    let d = frechet_distance(&a, &b).unwrap();
    assert!((d - 1.0).abs() < 1e-9, "sampled N(0,1)/N(1,1): {d}");

    // two halves of one Gaussian: distance decreasing in N
    let mut prev = f64::INFINITY;
    for &n in &[100usize, 1000, 10_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(414);
        let all = Array2::from_shape_fn((2 * n, 4), |_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let a = EmbeddingSet::new("a", all.slice(ndarray::s![..n, ..]).to_owned()).unwrap();
        let b = EmbeddingSet::new("b", all.slice(ndarray::s![n.., ..]).to_owned()).unwrap();
        let d = frechet_distance(&a, &b).unwrap();
        assert!(d < prev, "n = {n}: {d} !< {prev}");
        prev = d;
    }
    println!("ACCEPTANCE 4 metric-fixtures PASS");
}

#[test]
fn criterion_5_conditioning_identity_and_shapes() {
    let cfg = MapEncoderConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    // FiLM with zero weights is bitwise identity at every site shape
    for site in InjectionSite::ALL {
        let (c, h, w) = cfg.site_shape(site).unwrap();
        let t = 3;
        let feats = Array4::from_shape_fn((t, c, h, w), |_| rng.random_range(-2.0..2.0f32));
        let weight = Array2::<f32>::zeros((2 * c, c));
        let bias = vec![0.0f32; 2 * c];
        let params = film_params(site, &feats.view(), &weight.view(), &bias).unwrap();
        for (ti, p) in params.iter().enumerate() {
            let frame = feats.index_axis(ndarray::Axis(0), ti);
            let out = film_apply(&frame, p).unwrap();
            assert_eq!(out, frame.to_owned(), "site {} not identity", site.name());
        }
    }

    // encoder shape contract at the (32, 2, 256, 256) default stack
    let tensor = Array4::from_shape_fn((32, 2, 256, 256), |_| rng.random_range(0.0..=1.0f32));
    let stack = ConditioningStack::new(tensor, 8.0).unwrap();
    let weights = WeightStore::zeros(&cfg);
    let sites = map_encoder_forward(&stack, &cfg, &weights).unwrap();
    assert_eq!(sites.len(), 8);
    for site in InjectionSite::ALL {
        let (c, h, w) = cfg.site_shape(site).unwrap();
        assert_eq!(sites[&site].dim(), (32, c, h, w), "site {}", site.name());
    }
    println!("ACCEPTANCE 5 conditioning-identity PASS");
}

#[test]
fn criterion_6_dataset_rules() {
    use con360::dataset::*;

    assert_eq!(
        segment_clip(10.0, 4.0, 1.0).unwrap(),
        vec![(0.0, 4.0), (3.0, 7.0), (6.0, 10.0)]
    );

    let ids: Vec<String> = (0..100).map(|i| format!("clip{i:03}")).collect();
    let assign = split_assignments(&ids, 0.85, 21).unwrap();
    let (train, val) = split_counts(&assign);
    assert_eq!((train, val), (85, 15));

    // no clip in both splits, and byte-determinism under input permutation
    let clips: Vec<ClipRecord> = (0..40)
        .map(|i| ClipRecord {
            clip_id: format!("c{i:02}"),
            duration: 10.0,
            width: 2048,
            height: 1024,
            audio_rate: 16_000,
            source_uri: format!("x/{i}.mp4"),
        })
        .collect();
    let mut permuted = clips.clone();
    permuted.reverse();
    permuted.swap(3, 17);

    let bytes_of = |cs: Vec<ClipRecord>| {
        let m = Manifest::new(cs).unwrap();
        let (m, _) = segment_manifest(&m, 4.0, 1.0).unwrap();
        let m = split_manifest(&m, 0.85, 9).unwrap();
        for s in &m.segments {
            assert!(s.split.is_some());
        }
        let mut by_clip = std::collections::BTreeMap::<String, Vec<Option<Split>>>::new();
        for s in &m.segments {
            by_clip.entry(s.clip_id.clone()).or_default().push(s.split);
        }
        for (_, splits) in by_clip {
            assert!(splits.windows(2).all(|w| w[0] == w[1]));
        }
        con360::io::manifest::to_canonical_json(&m).unwrap()
    };
    assert_eq!(bytes_of(clips), bytes_of(permuted));
    println!("ACCEPTANCE 6 dataset-rules PASS");
}

#[test]
fn criterion_7_io_conformance() {
    use con360::io::{npy, pgm};
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // NPY round trip bitwise exact
    let data: Vec<f32> = (0..96).map(|_| rng.random_range(-10.0..10.0)).collect();
    let tf = npy::TensorFile::from_f32(vec![2, 3, 16], data).unwrap();
    let bytes = npy::to_npy_bytes(&tf);
    let back = npy::from_npy_bytes(&bytes).unwrap();
    assert_eq!(back, tf);
    assert_eq!(npy::to_npy_bytes(&back), bytes);

    // PGM round trip bitwise exact
    let img = pgm::GrayImageFile::new16(8, 4, (0..32).map(|i| i * 2048).collect()).unwrap();
    let pbytes = pgm::to_pgm16_bytes(&img).unwrap();
    assert_eq!(pgm::from_pgm16_bytes(&pbytes).unwrap(), img);

    // 10^4 single-byte mutations each: typed errors, zero crashes
    for _ in 0..10_000 {
        let mut b = bytes.clone();
        let i = rng.random_range(0..b.len());
        b[i] = rng.random();
        let _ = npy::from_npy_bytes(&b);

        let mut p = pbytes.clone();
        let i = rng.random_range(0..p.len());
        p[i] = rng.random();
        let _ = pgm::from_pgm16_bytes(&p);
    }
    println!("ACCEPTANCE 7 io-conformance PASS");
}

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(BIN)
        .current_dir(dir)
        .env_remove("CON360_DATA_ROOT")
        .args(args)
        .output()
        .expect("spawn CLI");
    assert!(
        out.status.success(),
        "con360 {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn criterion_8_thread_count_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // blob saliency so `--center auto` finds a region
    let (t, h, w) = (4usize, 128usize, 256usize);
    let mut sal = Vec::with_capacity(t * h * w);
    for _ in 0..t {
        for r in 0..h {
            for c in 0..w {
                let dr = r as f32 - 60.0;
                let dc = c as f32 - 90.0;
                sal.push((-(dr * dr + dc * dc) / 200.0).exp());
            }
        }
    }
    let tf = con360::io::npy::TensorFile::from_f32(vec![t, h, w], sal).unwrap();
    con360::io::npy::write_npy(&tf, &root.join("sal.npy")).unwrap();

    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "4", "0"] {
        let run = format!("t{threads}");
        run_cli(
            root,
            &["--threads", threads, "cond", "basd", "--in", "sal.npy",
              "--out", &format!("{run}_basd.npy")],
        );
        run_cli(
            root,
            &["--threads", threads, "cond", "stack", "--saliency", "sal.npy",
              "--basd", &format!("{run}_basd.npy"), "--out", &format!("{run}_stack.npy")],
        );
        run_cli(
            root,
            &["--threads", threads, "cond", "encode", "--stack", &format!("{run}_stack.npy"),
              "--out", &format!("{run}_enc")],
        );
        run_cli(
            root,
            &["--threads", threads, "eval", "skl", "--gen", "sal.npy", "--tgt", "sal.npy",
              "--out", &format!("{run}_skl.json")],
        );

        let mut files: Vec<(String, Vec<u8>)> = vec![
            ("basd".into(), std::fs::read(root.join(format!("{run}_basd.npy"))).unwrap()),
            ("stack".into(), std::fs::read(root.join(format!("{run}_stack.npy"))).unwrap()),
            ("skl".into(), std::fs::read(root.join(format!("{run}_skl.json"))).unwrap()),
        ];
        let mut site_files: Vec<_> = std::fs::read_dir(root.join(format!("{run}_enc")))
            .unwrap()
            .map(|e| e.unwrap())
            .filter(|e| e.path().extension().is_some_and(|x| x == "npy"))
            .collect();
        site_files.sort_by_key(|e| e.file_name());
        for e in site_files {
            files.push((
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            ));
        }
        snapshots.push(files);
    }
    for other in &snapshots[1..] {
        assert_eq!(snapshots[0].len(), other.len());
        for ((name_a, bytes_a), (name_b, bytes_b)) in snapshots[0].iter().zip(other) {
            assert_eq!(name_a, name_b);
            assert_eq!(bytes_a, bytes_b, "{name_a} differs across thread counts");
        }
    }
    println!("ACCEPTANCE 8 thread-determinism PASS");
}

#[test]
fn criterion_9_end_to_end_smoke() {
    let start = Instant::now();
    let (t, h, w) = (32usize, 256usize, 512usize);

    // two Gaussian saliency blobs, one bright and one dim
    let frames: Vec<SaliencyFrame> = (0..t)
        .map(|_| {
            let v = Array2::from_shape_fn((h, w), |(r, c)| {
                let g = |cr: f32, cc: f32, amp: f32, s: f32| {
                    let dr = r as f32 - cr;
                    let dc = c as f32 - cc;
                    amp * (-(dr * dr + dc * dc) / s).exp()
                };
                g(128.0, 150.0, 1.0, 400.0) + g(80.0, 400.0, 0.4, 300.0)
            });
            SaliencyFrame::new(v).unwrap()
        })
        .collect();
    let seq = SaliencySequence::new(frames, 8.0).unwrap();

    let fovs = select_fovs_for_sequence(&seq, &ViewpointParams::default()).unwrap();
    assert!(!fovs.is_empty(), "no viewpoint found");

    let basd = con360::basd::basd_for_fov(&fovs[0], seq.grid()).unwrap();
    let basd_norm = con360::basd::normalize_basd(&basd);
    let basd_frames: Vec<Array2<f32>> = vec![basd_norm; t];

    let norm_frames: Vec<SaliencyFrame> = seq
        .frames()
        .iter()
        .map(|f| con360::saliency::normalize_minmax(f))
        .collect();
    let norm_seq = SaliencySequence::new(norm_frames, 8.0).unwrap();
    let stack = stack_maps(&norm_seq, &basd_frames).unwrap();
    assert_eq!(stack.tensor().dim(), (t, 2, h, w));

    let cfg = MapEncoderConfig::reference();
    let sites = map_encoder_forward(&stack, &cfg, &WeightStore::zeros(&cfg)).unwrap();
    assert_eq!(sites.len(), 8);

    let probs: Vec<_> = seq
        .frames()
        .iter()
        .map(|f| to_prob_map(&f.values().view(), 1e-8).unwrap())
        .collect();
    let self_skl = s_kl(&probs, &probs).unwrap();
    assert_eq!(self_skl, 0.0, "s_kl(self) must be exactly 0");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!("ACCEPTANCE 9 end-to-end-smoke PASS ({elapsed:?})");
}
