#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// A dataset and model small enough for end-to-end runs in seconds.
pub const TINY: &str = "\
data.subjects=1
data.activities=1,2
data.clips=2
data.views=7,8
data.window=3
data.resolution=16
model.views=2
model.window=3
model.resolution=16
model.encoder.channels=2,3
model.embedding=6
model.hidden=4
model.head_hidden=5
model.surrogate_hidden=5
model.lifter.widths=4,4,4
model.lifter.gcn_width=4
model.lifter.fc_widths=6,5,6
stage1.epochs=2
stage1.batch=4
stage2.epochs=2
stage2.batch=1
";

pub fn handpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handpose")).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

pub fn path(dir: &Path, rel: &str) -> String {
    dir.join(rel).display().to_string()
}

/// Value of `key=` in `key=value` text.
pub fn field(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}
