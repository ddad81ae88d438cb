mod common;

use proptest::prelude::*;

use dfrelay::codec::{conv_encode, exhaustive_ml_decode, final_state, viterbi_decode, ConvCode, Interleaver};

fn taps() -> Vec<Vec<u8>> {
    vec![vec![1, 0, 1], vec![1, 1, 1]]
}

fn message(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 1..max)
}

proptest! {
    #[test]
    fn encoder_matches_reference(info in message(300)) {
        prop_assert_eq!(conv_encode(&info, &ConvCode::standard()), common::reference_encode(&info, &taps()));
    }

    #[test]
    fn encoder_is_linear(a in message(200), seed in any::<u64>()) {
        let code = ConvCode::standard();
        let b: Vec<u8> = a.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
        let sum: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let expected: Vec<u8> = conv_encode(&a, &code).iter().zip(conv_encode(&b, &code)).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(conv_encode(&sum, &code), expected);
    }

    #[test]
    fn tail_returns_to_zero(info in message(200)) {
        let code = ConvCode::standard();
        let coded = conv_encode(&info, &code);
        prop_assert_eq!(coded.len(), 2 * (info.len() + 2));
        let mut padded = info.clone();
        padded.extend([0, 0]);
        prop_assert_eq!(final_state(&padded, &code), 0);
    }

    #[test]
    fn noiseless_round_trip(info in message(400), scale in 0.01f64..50.0) {
        let code = ConvCode::standard();
        let llrs: Vec<f64> = conv_encode(&info, &code).iter().map(|&c| scale * (2.0 * f64::from(c) - 1.0)).collect();
        prop_assert_eq!(viterbi_decode(&llrs, &code).unwrap(), info);
    }

    #[test]
    fn viterbi_attains_brute_force_metric(llrs in prop::collection::vec(-5.0f64..5.0, 2 * (7 + 2))) {
        let code = ConvCode::standard();
        let (best, _) = common::brute_force_decode(&llrs, &taps(), 7);
        let metric = |m: &[u8]| -> f64 { conv_encode(m, &code).iter().zip(&llrs).map(|(&c, l)| f64::from(c) * l).sum() };
        let v = viterbi_decode(&llrs, &code).unwrap();
        let e = exhaustive_ml_decode(&llrs, &code, 7).unwrap();
        prop_assert!((metric(&v) - best).abs() <= 1e-12 * best.abs().max(1.0));
        prop_assert!((metric(&e) - best).abs() <= 1e-12 * best.abs().max(1.0));
    }

    #[test]
    fn interleaver_inverts(len in 1usize..3000, seed in any::<u64>()) {
        let pi = Interleaver::new(len, seed).unwrap();
        let data: Vec<u32> = (0..len as u32).collect();
        let mixed = pi.interleave(&data).unwrap();
        prop_assert_eq!(pi.deinterleave(&mixed).unwrap(), data.clone());
        let mut sorted = mixed.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, data);
        prop_assert_eq!(&Interleaver::new(len, seed).unwrap(), &pi);
    }
}

#[test]
fn other_codes_round_trip() {
    // (15, 17) octal, memory 3.
    let code = ConvCode::from_octal("15,17", 3).unwrap();
    let info: Vec<u8> = (0..50).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
    let llrs: Vec<f64> = conv_encode(&info, &code).iter().map(|&c| 2.0 * f64::from(c) - 1.0).collect();
    assert_eq!(viterbi_decode(&llrs, &code).unwrap(), info);
    assert!(viterbi_decode(&llrs[..llrs.len() - 1], &code).is_err());
}
