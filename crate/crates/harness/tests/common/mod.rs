#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use berm_core::seeds;
use rand::Rng;
use rand_distr::StandardNormal;

/// Columns `f1..f10`; the response is `10 + 3 f2 - 2 f5 + 1.5 f9` exactly.
pub const TRUE_FEATURES: [&str; 3] = ["f2", "f5", "f9"];

pub fn linear_fixture(n: usize, seed: u64) -> String {
    let mut rng = seeds::rng(seed);
    let mut s = String::from("id,group,y");
    for j in 1..=10 {
        write!(s, ",f{j}").unwrap();
    }
    s.push('\n');
    for i in 0..n {
        let x: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        let y = 10.0 + 3.0 * x[1] - 2.0 * x[4] + 1.5 * x[8];
        write!(s, "s{i},CTR,{y}").unwrap();
        for v in x {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Two groups drawn from one distribution. `age` is linear in three of six
/// features plus unit noise and centred near 40.
pub fn null_group_fixture(seed: u64) -> String {
    let mut rng = seeds::rng(seed);
    let mut s = String::from("group,age,a,b,c,d,e,f\n");
    for (group, count) in [("CTR", 200), ("T1D", 100)] {
        for _ in 0..count {
            let x: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let e: f64 = rng.sample(StandardNormal);
            let age = 40.0 + 4.0 * x[0] + 3.0 * x[2] - 2.0 * x[5] + e;
            write!(s, "{group},{age}").unwrap();
            for v in x {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}
