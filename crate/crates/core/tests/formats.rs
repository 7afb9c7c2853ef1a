use mvlidarnet::labels::{load_seg7_labels, load_semantickitti_labels, save_labels};
use mvlidarnet::nn::{load_weight_blob, save_weight_blob, Array, ParamStore};
use mvlidarnet::postprocess::format::{
    detections_from_json, detections_to_json, format_detections, parse_detections,
};
use mvlidarnet::{
    load_kitti_bin, save_kitti_bin, Det3, Error, OrientedBox, Point, PointCloud, PointLabels, Seg7,
    Taxonomy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_store(rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    for k in 0..rng.gen_range(0..8) {
        let rank = rng.gen_range(0..=4);
        let dims: Vec<u32> = (0..rank).map(|_| rng.gen_range(0..5)).collect();
        let n: usize = dims.iter().map(|&d| d as usize).product();
        // Raw bit patterns cover subnormals, negative zero and extremes.
        let data = (0..n)
            .map(|_| f32::from_bits(rng.gen::<u32>() & !0x4000_0000))
            .collect();
        store.insert(
            format!("layer{k}.ü.weight"),
            Array::new(dims, data).unwrap(),
        );
    }
    store
}

fn bits(store: &ParamStore) -> Vec<(String, Vec<u32>, Vec<u32>)> {
    store
        .iter()
        .map(|(n, a)| {
            (
                n.to_string(),
                a.dims.clone(),
                a.data.iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_blob_round_trip_is_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mvln");
        save_weight_blob(&store, &path).unwrap();
        let back = load_weight_blob(&path).unwrap();
        prop_assert_eq!(bits(&back), bits(&store));
        prop_assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_blob_is_malformed(seed in any::<u64>(), cut in 1usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = random_store(&mut rng).to_bytes().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(matches!(ParamStore::from_bytes(&bytes[..keep]), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn velodyne_bin_round_trip_is_bit_exact(seed in any::<u64>(), n in 0usize..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point> = (0..n)
            .map(|_| Point::new(
                rng.gen_range(-80.0..80.0),
                rng.gen_range(-80.0..80.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.0..=1.0),
            ))
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000000.bin");
        save_kitti_bin(&cloud, &path).unwrap();
        let back = load_kitti_bin(&path).unwrap();
        prop_assert_eq!(back.to_bin_bytes(), cloud.to_bin_bytes());
        prop_assert_eq!(back.points(), cloud.points());
    }

    #[test]
    fn label_round_trips(seed in any::<u64>(), n in 0usize..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();

        let seg = PointLabels::from_seg7((0..n).map(|_| Seg7::ALL[rng.gen_range(0..7)]));
        let path = dir.path().join("seg.label");
        save_labels(&seg, &path).unwrap();
        prop_assert_eq!(load_seg7_labels(&path).unwrap(), seg);

        // Raw records carry an instance id in the upper 16 bits.
        let raw: Vec<u32> = (0..n).map(|_| rng.gen::<u32>()).collect();
        let bytes: Vec<u8> = raw.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.path().join("raw.label");
        std::fs::write(&path, &bytes).unwrap();
        let parsed = load_semantickitti_labels(&path, n).unwrap();
        prop_assert_eq!(parsed.taxonomy(), Taxonomy::RawSemanticKitti);
        let expected: Vec<u32> = raw.iter().map(|v| v & 0xFFFF).collect();
        prop_assert_eq!(parsed.labels(), &expected[..]);
    }

    #[test]
    fn detection_text_and_json_round_trip(seed in any::<u64>(), n in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Text carries six decimals, so fixtures live on that grid.
        let micro = |rng: &mut ChaCha8Rng, lo: i64, hi: i64| -> f64 {
            format!("{:.6}", rng.gen_range(lo..hi) as f64 / 1e6).parse().unwrap()
        };
        let boxes: Vec<OrientedBox> = (0..n)
            .map(|_| OrientedBox {
                class: if rng.gen_bool(0.5) { Det3::Vehicle } else { Det3::Pedestrian },
                cx: micro(&mut rng, -40_000_000, 40_000_000),
                cy: micro(&mut rng, -40_000_000, 40_000_000),
                width: micro(&mut rng, 1, 5_000_000),
                length: micro(&mut rng, 1, 9_000_000),
                yaw: micro(&mut rng, -3_141_592, 3_141_593),
                confidence: micro(&mut rng, 0, 1_000_001),
            })
            .collect();
        let frame = rng.gen_bool(0.5).then_some("004711");
        let parsed = parse_detections(&format_detections(frame, &boxes)).unwrap();
        let back: Vec<OrientedBox> = parsed.iter().map(|(_, b)| *b).collect();
        prop_assert_eq!(&back, &boxes);
        prop_assert!(parsed.iter().all(|(f, _)| f.as_deref() == frame));

        // JSON is exact for arbitrary doubles.
        let exact: Vec<OrientedBox> = boxes
            .iter()
            .map(|b| OrientedBox { cx: b.cx + rng.gen_range(0.0..1e-3), yaw: b.yaw.sin(), ..*b })
            .collect();
        prop_assert_eq!(detections_from_json(&detections_to_json(&exact)).unwrap(), exact);
    }
}
