mod common;

use common::*;
use obz::client::{ClientError, Window};
use obz::records::Prediction;
use obz::wire::{CurveUpload, IngestEnvelope};
use obz_core::stats::{quantile_sorted, sorted};
use obz_core::xai_eval::{CurveMode, TargetClass};
use obz_core::{detect, Detector, FEATURE_NAMES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn status<T: std::fmt::Debug>(r: Result<T, ClientError>) -> u16 {
    match r {
        Err(ClientError::Api { status, .. }) => status,
        other => panic!("expected an HTTP error, got {other:?}"),
    }
}

fn reference(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<u16>>, Vec<Vec<f64>>) {
    let imgs: Vec<Vec<u16>> = (0..n).map(|_| ref_image(rng)).collect();
    let rows = imgs.iter().map(|i| fof(i).values().to_vec()).collect();
    (imgs, rows)
}

fn image_envelope(id: &str, img: &[u16]) -> IngestEnvelope {
    let mut env = IngestEnvelope::new(id);
    env.image = Some(b64(&obzt(img)));
    env
}

#[test]
fn project_lifecycle_and_auth_errors() {
    let srv = TestServer::start();
    let tok = srv.token("alice");
    let c = srv.client(&tok);
    let p = c.create_project("demo").unwrap();
    assert!(!p.project_id.is_empty());
    assert_eq!(status(c.create_project("demo")), 409);
    assert_eq!(c.project(&p.project_id).unwrap(), p);
    assert_eq!(status(c.project("nope")), 404);
    assert_eq!(c.list_projects().unwrap(), vec![p]);

    obz::storage::Storage::open_dir(&srv.root).unwrap().revoke_token(&tok).unwrap();
    assert_eq!(status(c.list_projects()), 401);
    assert_eq!(status(c.create_project("again")), 401);
    assert_eq!(status(srv.client("obz_garbage").whoami()), 401);

    let raw = reqwest::blocking::get(format!("{}/v1/projects", srv.url)).unwrap();
    assert_eq!(raw.status(), 401);
    let body: obz::wire::ErrorBody = serde_json::from_str(&raw.text().unwrap()).unwrap();
    assert_eq!(body.error, "unauthorized");
}

#[test]
fn reference_upload_rules() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (_, rows) = reference(&mut rng, 500);

    assert_eq!(status(c.upload_ref(&pid, &fof_upload(rows[..1].to_vec()), false)), 422);
    let mut ragged = fof_upload(rows[..30].to_vec());
    ragged.rows[3].pop();
    assert_eq!(status(c.upload_ref(&pid, &ragged, false)), 422);
    let mut bad_names = fof_upload(rows[..30].to_vec());
    bad_names.kind = Some(obz::records::FeatureKind::Fof);
    bad_names.feature_names.swap(0, 1);
    assert_eq!(status(c.upload_ref(&pid, &bad_names, false)), 422);

    let resp = c.upload_ref(&pid, &fof_upload(rows.clone()), false).unwrap();
    let m = &resp.models[0];
    assert_eq!((m.rows, m.dim), (500, 16));
    assert!((1..=5).contains(&m.k.unwrap()), "k = {:?}", m.k);
    assert!(m.threshold.is_finite());
    assert_eq!(status(c.upload_ref(&pid, &fof_upload(rows.clone()), false)), 409);
    let again = c.upload_ref(&pid, &fof_upload(rows[..200].to_vec()), true).unwrap();
    assert_eq!(again.models[0].rows, 200);
    let dets = c.detectors(&pid).unwrap();
    assert!(dets.pca.is_none());
    assert_eq!(dets.gmm.unwrap().threshold(), Some(again.models[0].threshold));
}

#[test]
fn embedding_reference_fits_pca() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("emb").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let a: f64 = rand::Rng::random_range(&mut rng, -1.0..1.0);
            let b: f64 = rand::Rng::random_range(&mut rng, -1.0..1.0);
            vec![a, b, a + b, a - b, 0.01 * rand::Rng::random_range(&mut rng, -1.0..1.0)]
        })
        .collect();
    let mut up = fof_upload(rows);
    up.feature_names = (0..5).map(|i| format!("e{i}")).collect();
    up.rank = Some(2);
    let resp = c.upload_ref(&pid, &up, false).unwrap();
    assert_eq!(resp.models[0].r, Some(2));
    assert_eq!(resp.models[0].detector, obz_core::DetectorKind::Pca);

    let mut env = IngestEnvelope::new("on-plane");
    env.embedding = Some(vec![0.2, 0.3, 0.5, -0.1, 0.0]);
    let r = c.ingest(&pid, &env).unwrap();
    assert_eq!(r.verdicts.len(), 1);
    assert!(!r.is_outlier);
    let mut env = IngestEnvelope::new("off-plane");
    env.embedding = Some(vec![0.2, 0.3, -3.0, 3.0, 0.0]);
    assert!(c.ingest(&pid, &env).unwrap().is_outlier);
}

#[test]
fn ingest_validation_and_scoring() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (imgs, rows) = reference(&mut rng, 300);

    assert_eq!(status(c.ingest(&pid, &IngestEnvelope::new("empty"))), 422);
    // scoring before any reference
    assert_eq!(status(c.ingest(&pid, &image_envelope("early", &imgs[0]))), 409);
    let mut unscored = image_envelope("early", &imgs[0]);
    unscored.score = false;
    assert!(c.ingest(&pid, &unscored).unwrap().verdicts.is_empty());

    c.upload_ref(&pid, &fof_upload(rows.clone()), false).unwrap();
    let mut env = IngestEnvelope::new("feat");
    env.features = Some(fof(&imgs[1]));
    let r = c.ingest(&pid, &env).unwrap();
    assert_eq!(r.verdicts.len(), 1);

    // the first component's mean, rendered as features, sits inside the model
    let det = c.detectors(&pid).unwrap().gmm.unwrap();
    let Detector::Gmm(g) = &det else { unreachable!() };
    let centre = g.original_means().row(0).to_vec();
    let mut env = IngestEnvelope::new("centre");
    env.features = Some(obz_core::FeatureVector::from_slice(&centre).unwrap());
    assert!(!c.ingest(&pid, &env).unwrap().is_outlier);

    let mut env = image_envelope("pred", &imgs[2]);
    env.prediction = vec![Prediction { label: "a".into(), probability: 0.7 }, Prediction { label: "b".into(), probability: 0.2 }];
    assert_eq!(status(c.ingest(&pid, &env)), 422);
    env.prediction[1].probability = 1.3;
    assert_eq!(status(c.ingest(&pid, &env)), 422);
    env.prediction[1].probability = 0.3;
    c.ingest(&pid, &env).unwrap();

    let mut env = image_envelope("bad-image", &imgs[2]);
    env.image = Some(b64(b"OBZT\x01\x01\x02\x00"));
    assert_eq!(status(c.ingest(&pid, &env)), 422);
    env.image = Some("***".into());
    assert_eq!(status(c.ingest(&pid, &env)), 422);

    let mut env = image_envelope("hm-dims", &imgs[2]);
    env.heatmaps.insert("g".into(), b64(&obz_core::encode_tensor(&[4, 4], &[0.0; 16]).unwrap()));
    assert_eq!(status(c.ingest(&pid, &env)), 422);
    let mut env = image_envelope("hm-name", &imgs[2]);
    env.heatmaps.insert("../x".into(), b64(&obz_core::encode_tensor(&[16, 16], &[0.0; 256]).unwrap()));
    assert_eq!(status(c.ingest(&pid, &env)), 422);
}

#[test]
fn client_features_take_precedence_over_image() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (imgs, rows) = reference(&mut rng, 100);
    c.upload_ref(&pid, &fof_upload(rows), false).unwrap();
    let mut env = image_envelope("both", &imgs[0]);
    env.features = Some(fof(&imgs[1]));
    let id = c.ingest(&pid, &env).unwrap().log_id;
    assert_eq!(c.log(&id).unwrap().log.features, Some(fof(&imgs[1])));
}

#[test]
fn read_back_heatmaps_and_comparison() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (imgs, rows) = reference(&mut rng, 200);
    c.upload_ref(&pid, &fof_upload(rows.clone()), false).unwrap();

    let hm: Vec<f32> = (0..256).map(|i| ((i * 37) % 101) as f32 / 50.0 - 1.0).collect();
    let hm_bytes = obz_core::encode_tensor(&[16, 16], &hm).unwrap();
    let mut env = image_envelope("s1", &imgs[5]);
    env.timestamp = Some(obz_core::Timestamp(1_700_000_000_000));
    env.heatmaps.insert("gradcam".into(), b64(&hm_bytes));
    env.target_class = Some(TargetClass::Label("golf ball".into()));
    env.prediction = vec![Prediction { label: "golf ball".into(), probability: 0.986 }, Prediction { label: "other".into(), probability: 0.014 }];
    env.curves = vec![CurveUpload {
        method: "gradcam".into(),
        mode: CurveMode::Deletion,
        fractions: vec![0.0, 0.5, 1.0],
        scores: vec![1.0, 0.5, 0.0],
    }];
    let r = c.ingest(&pid, &env).unwrap();

    assert_eq!(c.heatmap(&r.log_id, "gradcam").unwrap(), hm_bytes);
    assert_eq!(c.image(&r.log_id).unwrap(), obzt(&imgs[5]));
    assert_eq!(status(c.heatmap(&r.log_id, "lime")), 404);

    let d = c.log(&r.log_id).unwrap();
    // durable: the record reads back field by field as ingested
    assert_eq!(d.log.sample_id, "s1");
    assert_eq!(d.log.timestamp, obz_core::Timestamp(1_700_000_000_000));
    assert_eq!(d.log.prediction, env.prediction);
    assert_eq!(d.log.features, Some(fof(&imgs[5])));
    assert_eq!(d.log.verdicts, r.verdicts);
    assert_eq!(d.log.target_class, env.target_class);
    assert_eq!(d.log.fidelity["gradcam.deletion"].score, 0.5);
    let gini = obz_core::compactness(
        &obz_core::AttributionMap::new(16, 16, hm.iter().map(|&v| v as f64).collect(), "g").unwrap(),
    )
    .unwrap();
    assert_eq!(d.log.compactness["gradcam"], gini);

    // reference distribution summary recomputed from the uploaded matrix
    assert_eq!(d.feature_comparison.len(), 16);
    for (j, fc) in d.feature_comparison.iter().enumerate() {
        assert_eq!(fc.name, FEATURE_NAMES[j]);
        let col = sorted(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
        assert_eq!(fc.reference.min, col[0]);
        assert_eq!(fc.reference.max, col[col.len() - 1]);
        assert_eq!(fc.reference.p10, quantile_sorted(&col, 0.1));
        assert_eq!(fc.reference.median, quantile_sorted(&col, 0.5));
        assert_eq!(fc.reference.p90, quantile_sorted(&col, 0.9));
        assert_eq!(fc.value, Some(fof(&imgs[5]).values()[j]));
    }
}

#[test]
fn records_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (tok, pid, log) = {
        let srv = TestServer::start_at(dir.path(), 0.99);
        let tok = srv.token("u");
        let c = srv.client(&tok);
        let pid = c.create_project("p").unwrap().project_id;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (imgs, rows) = reference(&mut rng, 100);
        c.upload_ref(&pid, &fof_upload(rows), false).unwrap();
        let id = c.ingest(&pid, &image_envelope("x", &imgs[0])).unwrap().log_id;
        let log = c.log(&id).unwrap();
        srv.stop();
        (tok, pid, log)
    };
    let srv = TestServer::start_at(dir.path(), 0.99);
    let c = srv.client(&tok);
    assert_eq!(c.log(&log.log.log_id).unwrap(), log);
    assert_eq!(c.list_logs(&pid, &Window::default()).unwrap().total, 1);
    assert!(c.detectors(&pid).unwrap().gmm.is_some());
}

#[test]
fn summary_export_and_pagination() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let empty = c.summary(&pid, &Window::default()).unwrap();
    assert_eq!((empty.total_samples, empty.outlier_count), (0, 0));
    assert!(empty.series.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (imgs, rows) = reference(&mut rng, 200);
    c.upload_ref(&pid, &fof_upload(rows), false).unwrap();
    for (i, img) in imgs.iter().take(23).enumerate() {
        let mut env = image_envelope(&format!("s{i}"), img);
        // duplicate timestamps exercise the log_id tie-break
        env.timestamp = Some(obz_core::Timestamp(1000 + (i as i64 / 3)));
        c.ingest(&pid, &env).unwrap();
    }
    let mut far = image_envelope("far", &shifted(&imgs[0], 5000.0));
    far.timestamp = Some(obz_core::Timestamp(2000));
    assert!(c.ingest(&pid, &far).unwrap().is_outlier);

    let w = Window { metrics: vec!["mean".into(), "variance".into()], ..Window::default() };
    let s = c.summary(&pid, &w).unwrap();
    assert_eq!(s.total_samples, 24);
    assert!(s.outlier_count >= 1 && s.outlier_count <= s.total_samples);
    assert_eq!(s.series.len(), 2);
    assert!(s.series.values().all(|v| v.len() == 24));

    let bad = Window { metrics: vec!["mean".into(), "bogus".into()], ..Window::default() };
    match c.summary(&pid, &bad) {
        Err(ClientError::Api { status: 400, message, .. }) => assert!(message.contains("uniformity")),
        other => panic!("{other:?}"),
    }
    assert_eq!(status(c.summary(&pid, &Window { from: Some(5), to: Some(1), ..Window::default() })), 400);

    let window = Window { from: Some(1000), to: Some(1003), ..Window::default() };
    assert_eq!(c.summary(&pid, &window).unwrap().total_samples, 9);
    let csv = String::from_utf8(c.export_csv(&pid, &window).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let csv = String::from_utf8(c.export_csv(&pid, &Window::default()).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 25);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 5 + 16 + 5);

    let all = c.list_logs(&pid, &Window::default()).unwrap();
    assert_eq!(all.total, 24);
    let keys: Vec<_> = all.items.iter().map(|l| (l.timestamp, l.log_id.clone())).collect();
    let mut sorted_keys = keys.clone();
    sorted_keys.sort();
    assert_eq!(keys, sorted_keys);
    for page in [1usize, 5, 7, 24, 50] {
        let mut joined = Vec::new();
        let mut offset = 0;
        loop {
            let p = c.list_logs(&pid, &Window { limit: Some(page), offset, ..Window::default() }).unwrap();
            if p.items.is_empty() {
                break;
            }
            offset += p.items.len();
            joined.extend(p.items);
        }
        assert_eq!(joined, all.items, "page size {page}");
    }
    let outliers = c.list_logs(&pid, &Window { outlier_only: true, ..Window::default() }).unwrap();
    let scan: Vec<_> = all.items.iter().filter(|l| l.is_outlier()).cloned().collect();
    assert_eq!(outliers.items, scan);
}

#[test]
fn delete_removes_record_and_blobs() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = ref_image(&mut rng);
    let mut env = image_envelope("d", &img);
    env.score = false;
    env.heatmaps.insert("ig".into(), b64(&obz_core::encode_tensor(&[16, 16], &[1.0; 256]).unwrap()));
    let id = c.ingest(&pid, &env).unwrap().log_id;
    let bucket = srv.root.join("blobs").join(&pid).join("logs").join(&id);
    assert!(bucket.join("image.obzt").exists());
    assert!(bucket.join("heatmaps").join("ig.obzt").exists());
    c.delete_log(&id).unwrap();
    assert_eq!(status(c.log(&id)), 404);
    assert_eq!(status(c.delete_log(&id)), 404);
    assert!(!bucket.join("image.obzt").exists());
    assert!(!bucket.join("heatmaps").join("ig.obzt").exists());
}

#[test]
fn ingest_verdicts_match_offline_recompute() {
    let srv = TestServer::start();
    let c = srv.client(&srv.token("u"));
    let pid = c.create_project("p").unwrap().project_id;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (imgs, rows) = reference(&mut rng, 300);
    c.upload_ref(&pid, &fof_upload(rows), false).unwrap();
    let mut ids = Vec::new();
    for (i, img) in imgs.iter().take(10).enumerate() {
        ids.push(c.ingest(&pid, &image_envelope(&format!("{i}"), &shifted(img, i as f64 * 40.0))).unwrap());
    }
    let det = c.detectors(&pid).unwrap().gmm.unwrap();
    for r in ids {
        let log = c.log(&r.log_id).unwrap().log;
        let v = detect(&det, log.features.unwrap().values()).unwrap();
        assert_eq!(vec![v], r.verdicts);
        assert_eq!(v.score.to_bits(), r.verdicts[0].score.to_bits());
    }
}

#[test]
fn token_listing_and_revocation() {
    let srv = TestServer::start();
    let t1 = srv.token("u");
    let t2 = srv.token("u");
    let other = srv.token("v");
    let c1 = srv.client(&t1);
    assert_eq!(c1.whoami().unwrap().user_id, "u");
    let listed = c1.list_tokens().unwrap();
    assert_eq!(listed.len(), 2);
    let h2 = obz::storage::hash_token(&t2);
    assert!(listed.iter().any(|t| t.token_hash == h2));
    assert_eq!(status(srv.client(&other).revoke_token_hash(&h2)), 404);
    c1.revoke_token_hash(&h2).unwrap();
    assert_eq!(status(srv.client(&t2).whoami()), 401);
    assert!(c1.whoami().is_ok());
}
