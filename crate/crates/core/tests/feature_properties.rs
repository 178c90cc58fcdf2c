use proptest::prelude::*;
use rand::Rng;
use seld_forge::dataset::{random_scene, DatasetConfig};
use seld_forge::features::{extract, extract_stacked, io, ExtractionConfig, FeatureFamily, FeatureLayout, LogmelConfig};
use seld_forge::scene::{encode_foa, ArrayId, FoaClip};
use seld_forge::seed;

fn cfg() -> ExtractionConfig {
    ExtractionConfig { logmel: LogmelConfig { n_mels: 32, ..Default::default() }, ..Default::default() }
}

fn noise_clip(seed_: u64, scale: f64, silent_channels: u8) -> FoaClip {
    let mut rng = seed::rng(seed_);
    let mut clip = FoaClip::silent(6400, 32_000, ArrayId::A);
    for (c, ch) in clip.channels.iter_mut().enumerate() {
        if silent_channels >> c & 1 == 0 {
            ch.iter_mut().for_each(|v| *v = scale * rng.random_range(-1.0..1.0));
        }
    }
    clip
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn features_stay_finite_down_to_silence(seed_ in any::<u64>(), exp in -12i32..6, silent in 0u8..16) {
        let clip = noise_clip(seed_, 10f64.powi(exp), silent);
        for family in [FeatureFamily::LogmelIv, FeatureFamily::Salsa] {
            let feat = extract(&clip, family, &cfg()).unwrap();
            prop_assert!(feat.is_finite(), "{family:?} at 1e{exp}");
        }
    }

    #[test]
    fn salsa_cues_are_clipped(seed_ in any::<u64>(), exp in -8i32..3) {
        let feat = extract(&noise_clip(seed_, 10f64.powi(exp), 0), FeatureFamily::Salsa, &cfg()).unwrap();
        prop_assert_eq!(feat.layout, FeatureLayout::Salsa);
        for c in 4..7 {
            prop_assert!(feat.channel(c).iter().all(|v| (-5.0..=5.0).contains(v)));
        }
    }

    #[test]
    fn extraction_is_deterministic_and_round_trips(seed_ in any::<u64>()) {
        let scene = random_scene(&DatasetConfig { duration_s: 0.5, event_duration_s: [0.1, 0.3], ..Default::default() }, seed_).unwrap();
        let a = encode_foa(&scene, ArrayId::A).unwrap();
        let b = encode_foa(&scene, ArrayId::B).unwrap();
        for family in [FeatureFamily::LogmelIv, FeatureFamily::Salsa] {
            let x = extract_stacked(&a, &b, family, &cfg()).unwrap();
            let y = extract_stacked(&a, &b, family, &cfg()).unwrap();
            prop_assert_eq!(&x, &y);
            prop_assert_eq!(x.layout.channels(), 14);
            let path = std::path::Path::new("mem");
            let back = io::decode(&io::encode(&x), path).unwrap();
            prop_assert!(back.same_shape(&x) && back.layout == x.layout);
            prop_assert!(back.data.iter().zip(&x.data).all(|(b, v)| *b == *v as f32 as f64));
            prop_assert_eq!(io::encode(&back), io::encode(&x));
        }
    }
}
