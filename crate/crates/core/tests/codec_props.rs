//! Property tests for the block codec: lossless roundtrip over adversarial
//! waveform shapes, the bounded-expansion guarantee, parameter-choice
//! optimality against a brute-force oracle, and corruption rejection.

use proptest::prelude::*;
use ship_core::codec::{
    choose_k_with_cost, decode_codes, encode_codes, rice_len, BASE_HEADER_LEN, MAX_RICE_K,
};
use ship_core::signal::WaveformBlock;
use ship_core::{compress_block, decompress_block, CodecParams};

/// Waveform shapes the digitizer actually produces, plus hostile ones.
fn code_blocks() -> impl Strategy<Value = Vec<i16>> {
    let random = proptest::collection::vec(any::<i16>(), 1..2048);
    let constant = (any::<i16>(), 1..2048usize).prop_map(|(v, n)| vec![v; n]);
    let ramp = (any::<i16>(), -64i32..=64, 1..2048usize).prop_map(|(start, step, n)| {
        (0..n)
            .map(|i| {
                (i32::from(start) + step * i as i32)
                    .clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16
            })
            .collect()
    });
    let sine = (1u32..200, 0.0f64..std::f64::consts::TAU, 0.0f64..32000.0, 64..2048usize)
        .prop_map(|(m, phase, amp, n)| {
            (0..n)
                .map(|i| {
                    let angle =
                        std::f64::consts::TAU * f64::from(m) * i as f64 / n as f64 + phase;
                    (amp * angle.cos()).round() as i16
                })
                .collect()
        });
    let impulses = (
        proptest::collection::vec((0usize..2048, any::<i16>()), 0..8),
        64..2048usize,
    )
        .prop_map(|(spikes, n)| {
            let mut v = vec![0i16; n];
            for (pos, val) in spikes {
                v[pos % n] = val;
            }
            v
        });
    let rails = (1..2048usize).prop_map(|n| {
        (0..n)
            .map(|i| if i % 2 == 0 { i16::MAX } else { i16::MIN })
            .collect()
    });
    prop_oneof![random, constant, ramp, sine, impulses, rails]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn roundtrip_is_lossless(codes in code_blocks()) {
        let block = WaveformBlock {
            channel_id: 3,
            start_sample_index: 777,
            samples: codes,
        };
        let params = CodecParams::default();
        let cb = compress_block(&block, &params);
        let back = decompress_block(&cb).unwrap();
        prop_assert_eq!(back, block);
    }

    #[test]
    fn expansion_is_bounded(codes in code_blocks()) {
        let n = codes.len();
        let bytes = encode_codes(&codes, &CodecParams::default());
        prop_assert!(
            bytes.len() <= BASE_HEADER_LEN + 2 * n,
            "n={} compressed={}",
            n,
            bytes.len()
        );
    }

    #[test]
    fn rice_parameter_is_optimal(
        zigzags in proptest::collection::vec(0u32..100_000, 1..512)
    ) {
        let (k, cost) = choose_k_with_cost(&zigzags, MAX_RICE_K);
        let brute: Vec<u64> = (0..=MAX_RICE_K)
            .map(|kk| zigzags.iter().map(|&u| rice_len(u, kk)).sum())
            .collect();
        let best = *brute.iter().min().unwrap();
        prop_assert_eq!(cost, best);
        prop_assert_eq!(u64::from(k), brute.iter().position(|&c| c == best).unwrap() as u64);
    }

    #[test]
    fn truncation_never_decodes(codes in code_blocks()) {
        let bytes = encode_codes(&codes, &CodecParams::default());
        let cut = &bytes[..bytes.len() - 1];
        prop_assert!(decode_codes(cut).is_err());
    }

    #[test]
    fn magic_corruption_is_rejected(codes in code_blocks(), wrong in any::<u8>()) {
        let mut bytes = encode_codes(&codes, &CodecParams::default());
        prop_assume!(wrong != bytes[0]);
        bytes[0] = wrong;
        prop_assert!(decode_codes(&bytes).is_err());
    }
}

// A forced predictor order must roundtrip too, not just the automatic
// best choice.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forced_orders_roundtrip(
        codes in proptest::collection::vec(any::<i16>(), 3..512),
        order in 0u8..=2
    ) {
        let params = CodecParams {
            predictor_order: Some(order),
            ..CodecParams::default()
        };
        let bytes = encode_codes(&codes, &params);
        prop_assert_eq!(decode_codes(&bytes).unwrap(), codes);
    }
}
