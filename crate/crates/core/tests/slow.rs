//! 1 GB benchmark rows, ten trials each. Opt in with
//! `cargo test --release --test slow -- --ignored`; each trial holds a 1 GB
//! buffer, so point `REGEN_BENCH_TMPDIR` at a disk with room for the files.

use regen::faultlab::{run_benchmark, BenchConfig, FaultKind};

const GIB: u64 = 1 << 30;

fn rate(parity: u32, cbl: u64, fault: FaultKind) -> f64 {
    let result = run_benchmark(&BenchConfig::new(GIB, parity, cbl, fault, 10)).unwrap();
    println!("{parity}% {cbl}B {fault:?}: {}", result.summary());
    result.rate.unwrap()
}

#[test]
#[ignore = "slow: 1 GB archives"]
fn gigabyte_burst_rows() {
    let rows = [
        (10, 64, 1_000_000, 10),
        (5, 128, 1_000_000, 10),
        (5, 128, 1_000_000, 20),
        (10, 128, 10_000_000, 10),
    ];
    for (parity, cbl, errors, bursts) in rows {
        let r = rate(parity, cbl, FaultKind::Burst { errors, bursts });
        assert!(r >= 0.5, "{r}");
    }
}

#[test]
#[ignore = "slow: 1 GB archives"]
fn gigabyte_bit_rows() {
    assert!(rate(10, 64, FaultKind::Bit { errors: 1_000_000 }) <= 0.3);
    assert!(rate(10, 128, FaultKind::Bit { errors: 10_000 }) >= 0.5);
    assert!(rate(5, 128, FaultKind::Bit { errors: 10_000 }) >= 0.5);
}
