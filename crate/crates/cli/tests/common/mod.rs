#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pairlab::market_data::AlignedPairSeries;
use pairlab::synthetic::{ar1, random_walk};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 2023-10-01T00:00:00Z
pub const OCT_1: i64 = 1_696_118_400_000;
pub const MINUTE: i64 = 60_000;
pub const DAY: i64 = 1_440;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pairlab")
}

pub fn pairlab(args: &[&str]) -> Output {
    Command::new(bin()).args(args).stdin(Stdio::null()).output().expect("binary runs")
}

/// Runs a subcommand that must succeed and returns the artifact directory.
pub fn stage(cmd: &str, config: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = pairlab(&args);
    assert!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

/// One headerless kline row per price; OHLC all equal the close.
pub fn klines(prices: &[f64], volumes: &[f64]) -> String {
    let mut out = String::new();
    for (k, (p, v)) in prices.iter().zip(volumes).enumerate() {
        let t = OCT_1 + k as i64 * MINUTE;
        let _ = writeln!(out, "{t},{p:.8},{p:.8},{p:.8},{p:.8},{v:.4},0,0,0,0,0,0");
    }
    out
}

/// `A = 2 B + s` with `s` a fast AR(1), plus an unrelated walk `C`.
pub fn three_symbols(seed: u64, days: i64) -> [(String, Vec<f64>, Vec<f64>); 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (days * DAY) as usize;
    let b = random_walk(&mut rng, n, 100.0, 0.05);
    let s = ar1(&mut rng, n, 0.9, 0.1);
    let a: Vec<f64> = b.iter().zip(&s).map(|(b, s)| 2.0 * b + s).collect();
    let c = random_walk(&mut rng, n, 150.0, 0.08);
    let mut vol = || (0..n).map(|_| rng.random_range(1.0..10.0)).collect::<Vec<f64>>();
    [("A".into(), a, vol()), ("B".into(), b, vol()), ("C".into(), c, vol())]
}

pub fn write_symbols(dir: &Path, symbols: &[(String, Vec<f64>, Vec<f64>)]) {
    for (name, p, v) in symbols {
        fs::write(dir.join(format!("{name}.csv")), klines(p, v)).unwrap();
    }
}

pub fn write_pair(dir: &Path, s: &AlignedPairSeries) {
    let v = vec![1.0; s.len()];
    fs::write(dir.join(format!("{}.csv", s.symbol_i)), klines(&s.prices_i, &v)).unwrap();
    fs::write(dir.join(format!("{}.csv", s.symbol_j)), klines(&s.prices_j, &v)).unwrap();
}

/// Small, fast config over three days of formation and one day of test.
pub fn config(symbols: &[&str], extra: &str) -> String {
    let data: String = symbols.iter().map(|s| format!("{s} = \"{s}.csv\"\n")).collect();
    format!(
        r#"seed = 11
output_dir = "out"
fee = 0.0002

[data]
{data}
[formation]
start = "2023-10-01"
end = "2023-10-04"

[test]
start = "2023-10-04"
end = "2023-10-05"

[pairs]
windows = 20

[grid]
open_thresholds = [1.5, 2.0]
close_thresholds = [0.2, 0.5]
windows = [60, 120]

[train]
total_steps = 3000
hidden = [16]
n_envs = 2

{extra}
"#
    )
}

/// Every file under `root`, relative path and bytes, sorted.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
