use legtwin::link::{
    crc16_ccitt_false, decode_command, decode_telemetry, encode_command, encode_telemetry, is_newer, Channel,
    ChannelModel, CommandFrame, Mode, Receiver, TelemetryFrame, Verdict, COMMAND_LEN,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::TorqueOff), Just(Mode::Hold), Just(Mode::Stream)]
}

fn command() -> impl Strategy<Value = CommandFrame> {
    (any::<u16>(), mode(), prop::array::uniform8(0u16..4096)).prop_map(|(seq, mode, positions)| CommandFrame {
        seq,
        mode,
        positions,
    })
}

proptest! {
    #[test]
    fn command_round_trip(f in command()) {
        let bytes = encode_command(&f).unwrap();
        prop_assert_eq!(decode_command(&bytes).unwrap(), f);
    }

    #[test]
    fn telemetry_round_trip(
        seq_echo in any::<u16>(),
        positions in prop::array::uniform8(0u16..4096),
        currents in prop::array::uniform8(any::<u16>()),
        battery_mv in any::<u16>(),
        battery_pct in 0u8..=100,
    ) {
        let f = TelemetryFrame { seq_echo, positions, currents, battery_mv, battery_pct };
        prop_assert_eq!(decode_telemetry(&encode_telemetry(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn random_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_command(&bytes);
        let _ = decode_telemetry(&bytes);
    }

    #[test]
    fn any_single_bit_flip_is_caught(f in command(), bit in 0usize..COMMAND_LEN * 8) {
        let mut bytes = encode_command(&f).unwrap();
        bytes[bit / 8] ^= 1 << (bit % 8);
        prop_assert!(decode_command(&bytes).is_err());
    }

    #[test]
    fn wrap_window_matches_widened_arithmetic(latest in 1u64 << 16..1 << 40, delta in -(1i64 << 15)..1 << 15) {
        // On unwrapped counters within half a ring, newer simply means larger.
        let incoming = (latest as i64 + delta) as u64;
        prop_assert_eq!(is_newer(incoming as u16, latest as u16), incoming > latest, "delta {}", delta);
    }

    #[test]
    fn same_seed_same_deliveries(seed in any::<u64>(), drop_prob in 0.0..0.9f64, latency in 0u32..5, jitter in 0u32..5) {
        let model = ChannelModel { drop_prob, latency_ticks: latency, jitter_ticks: jitter, seed };
        let trace = || {
            let mut c = Channel::new(model);
            (0..300u64).flat_map(|t| c.step(t, [t as u32]).into_iter().map(move |f| (t, f))).collect::<Vec<_>>()
        };
        prop_assert_eq!(trace(), trace());
    }
}

#[test]
fn crc_check_value() {
    assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
}

#[test]
fn delivery_count_is_binomial() {
    let n = 10_000u64;
    let p = 0.3;
    let mut c = Channel::new(ChannelModel { drop_prob: p, latency_ticks: 2, jitter_ticks: 3, seed: 42 });
    let mut got = 0u64;
    for t in 0..n + 10 {
        if t < n {
            c.submit(t, t);
        }
        got += c.deliver(t).len() as u64;
    }
    let mean = n as f64 * (1.0 - p);
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((got as f64 - mean).abs() <= 3.0 * sigma, "{got} vs {mean} ± {sigma}");
    assert_eq!(c.stats.dropped + got, n);
}

#[test]
fn applied_sequence_strictly_increases_under_loss() {
    let mut c = Channel::new(ChannelModel { drop_prob: 0.2, latency_ticks: 1, jitter_ticks: 4, seed: 5 });
    let mut rx = Receiver::new();
    let mut applied: Vec<u64> = Vec::new();
    let mut rejected = 0;
    // 70k frames wrap the 16-bit counter.
    for t in 0..70_000u64 {
        let frame = CommandFrame { seq: t as u16, mode: Mode::Stream, positions: [0; 8] };
        c.submit(t, (t, frame));
        for (wide, f) in c.deliver(t) {
            match rx.apply(f) {
                Verdict::Accept => applied.push(wide),
                Verdict::Reject => rejected += 1,
            }
        }
    }
    assert!(applied.windows(2).all(|w| w[1] > w[0]));
    assert!(applied.len() > 35_000 && rejected > 0, "{} {rejected}", applied.len());
}

#[test]
fn fuzz_random_strings() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut buf = [0u8; 48];
    let mut accepted = 0;
    for _ in 0..100_000 {
        let len = rng.random_range(0..=buf.len());
        rng.fill(&mut buf[..len]);
        if decode_command(&buf[..len]).is_ok() {
            accepted += 1;
        }
        let _ = decode_telemetry(&buf[..len]);
    }
    assert_eq!(accepted, 0);
}
