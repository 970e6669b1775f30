#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy_city");

/// Copy of the toy city in a temporary directory, with an editable config.
pub struct Sandbox {
    pub dir: TempDir,
    pub config: Value,
}

impl Sandbox {
    pub fn new() -> Self {
        let dir = TempDir::new().unwrap();
        for entry in std::fs::read_dir(FIXTURE).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
        let config = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
        Self { dir, config }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write_config(&self) -> PathBuf {
        let config = self.path("config.json");
        std::fs::write(&config, serde_json::to_string_pretty(&self.config).unwrap()).unwrap();
        config
    }

    pub fn run(&self, args: &[&str]) -> Output {
        let config = self.write_config();
        Command::new(env!("CARGO_BIN_EXE_mgplan"))
            .args(args)
            .arg("--config")
            .arg(&config)
            .output()
            .unwrap()
    }

    pub fn run_into(&self, args: &[&str], out: &str) -> Output {
        self.run_to(args, &self.path(out))
    }

    pub fn run_to(&self, args: &[&str], out: &Path) -> Output {
        let mut all: Vec<&str> = args.to_vec();
        all.push("--out");
        all.push(out.to_str().unwrap());
        self.run(&all)
    }
}

/// Relative path to file contents for every file below `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
