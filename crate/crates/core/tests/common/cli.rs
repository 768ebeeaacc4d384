//! Driving the `hde` binary and checking what it writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};

pub fn hde(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hde"));
    cmd.args(args).env("HDE_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn hde")
}

/// Runs the binary and fails with its stderr on a nonzero exit.
pub fn ok(args: &[&str]) -> Result<String, String> {
    let out = hde(args, &[]);
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("hde {} -> {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

pub fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub struct Pipeline {
    pub root: PathBuf,
    pub seconds: f64,
}

impl Pipeline {
    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// gen-synth (train and dev) then preprocess both, then train, eval and
/// predict on dev. `config` is passed to train when given; `extra` goes to
/// gen-synth.
pub fn run_pipeline(root: &Path, config: Option<&Path>, extra: &[&str]) -> Result<Pipeline, String> {
    let t = Instant::now();
    let d = |n: &str| root.join(n);
    for (name, seed) in [("train", "1"), ("dev", "2")] {
        let g = d(&format!("gen-{name}"));
        let mut args = vec!["gen-synth", "--out", p(&g), "--seed", seed];
        args.extend(extra);
        ok(&args)?;
        let pre = d(&format!("cache-{name}"));
        ok(&[
            "preprocess",
            "--out",
            p(&pre),
            "--input",
            p(&g.join("dataset.json")),
            "--labels",
            p(&g.join("labels.json")),
        ])?;
    }
    let (tr, dev) = (d("cache-train").join("cache.jsonl"), d("cache-dev").join("cache.jsonl"));
    let mut args = vec!["train", "--out", p(root), "--train", p(&tr), "--dev", p(&dev)];
    let train_out = d("train");
    args[2] = p(&train_out);
    if let Some(c) = config {
        args.extend(["--config", p(c)]);
    }
    ok(&args)?;
    let ckpt = train_out.join("checkpoint.bin");
    ok(&["eval", "--out", p(&d("eval")), "--checkpoint", p(&ckpt), "--data", p(&dev)])?;
    ok(&["predict", "--out", p(&d("predict")), "--checkpoint", p(&ckpt), "--data", p(&dev)])?;
    Ok(Pipeline {
        root: root.to_path_buf(),
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Metrics rebuilt from the raw dataset, label sidecar and predictions file,
/// without the library's types.
pub fn recompute_metrics(dataset: &Path, labels: &Path, predictions: &Path) -> Result<Value, String> {
    let data = read_json(dataset)?;
    let labels = read_json(labels)?;
    let follow: BTreeMap<&str, &str> = labels
        .as_array()
        .unwrap()
        .iter()
        .map(|l| (l["id"].as_str().unwrap(), l["follow_type"].as_str().unwrap()))
        .collect();
    let text = std::fs::read_to_string(predictions).map_err(|e| e.to_string())?;
    let preds: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let samples = data.as_array().unwrap();
    if preds.len() != samples.len() {
        return Err(format!("{} predictions for {} samples", preds.len(), samples.len()));
    }
    let mut groups: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (s, pr) in samples.iter().zip(&preds) {
        let id = s["id"].as_str().unwrap();
        if pr["id"] != s["id"] {
            return Err(format!("prediction order differs at {id}"));
        }
        let cands: Vec<&str> = s["candidates"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
        let picked = cands[pr["predicted_candidate"].as_u64().unwrap() as usize];
        let ok = u64::from(picked == s["answer"].as_str().unwrap());
        let mut keys = vec![
            "overall".to_string(),
            format!("docs/{}", s["supports"].as_array().unwrap().len()),
            format!("cands/{}", cands.len()),
        ];
        match follow.get(id) {
            Some(&"single_follow") => keys.push("single_follow".into()),
            Some(&"multi_follow") => keys.push("multi_follow".into()),
            _ => {}
        }
        for k in keys {
            let e = groups.entry(k).or_default();
            e.0 += ok;
            e.1 += 1;
        }
    }
    let bucket = |k: &str| match groups.get(k) {
        Some(&(c, n)) => json!({"accuracy": c as f64 / n as f64, "correct": c, "count": n}),
        None => json!({"accuracy": null, "correct": 0, "count": 0}),
    };
    let nested = |prefix: &str| {
        Value::Object(
            groups
                .keys()
                .filter_map(|k| k.strip_prefix(prefix))
                .map(|n| (n.to_string(), bucket(&format!("{prefix}{n}"))))
                .collect(),
        )
    };
    Ok(json!({
        "overall": bucket("overall"),
        "single_follow": bucket("single_follow"),
        "multi_follow": bucket("multi_follow"),
        "by_num_docs": nested("docs/"),
        "by_num_candidates": nested("cands/"),
    }))
}

fn check_bucket(b: &Value, at: &str) -> Result<(), String> {
    let o = b.as_object().ok_or(format!("{at}: not an object"))?;
    let count = o.get("count").and_then(Value::as_u64).ok_or(format!("{at}.count"))?;
    let correct = o.get("correct").and_then(Value::as_u64).ok_or(format!("{at}.correct"))?;
    if correct > count || o.len() != 3 {
        return Err(format!("{at}: malformed {b}"));
    }
    match o.get("accuracy") {
        Some(Value::Null) if count == 0 => Ok(()),
        Some(Value::Number(a)) if count > 0 && a.as_f64() == Some(correct as f64 / count as f64) => Ok(()),
        _ => Err(format!("{at}.accuracy inconsistent: {b}")),
    }
}

/// Structural check of a metrics file.
pub fn check_metrics(m: &Value) -> Result<(), String> {
    let o = m.as_object().ok_or("metrics: not an object")?;
    let keys: Vec<&str> = o.keys().map(String::as_str).collect();
    let mut want = vec!["by_num_candidates", "by_num_docs", "multi_follow", "overall", "single_follow"];
    want.sort();
    if keys != want {
        return Err(format!("metrics keys {keys:?}"));
    }
    for k in ["overall", "single_follow", "multi_follow"] {
        check_bucket(&m[k], k)?;
    }
    for k in ["by_num_docs", "by_num_candidates"] {
        let total: u64 = m[k]
            .as_object()
            .ok_or(format!("{k}: not an object"))?
            .iter()
            .map(|(n, b)| {
                n.parse::<usize>().map_err(|_| format!("{k}: key {n}"))?;
                check_bucket(b, &format!("{k}.{n}"))?;
                Ok(b["count"].as_u64().unwrap())
            })
            .sum::<Result<u64, String>>()?;
        if total != m["overall"]["count"].as_u64().unwrap() {
            return Err(format!("{k} counts do not add up"));
        }
    }
    Ok(())
}

/// Structural check of a run manifest for `command`.
pub fn check_manifest(m: &Value, command: &str) -> Result<(), String> {
    let o = m.as_object().ok_or("manifest: not an object")?;
    for (k, ok) in [
        ("manifest_version", o.get("manifest_version").is_some_and(|v| v == 1)),
        ("command", o.get("command").is_some_and(|v| v == command)),
        ("argv", o.get("argv").is_some_and(|v| v.as_array().is_some_and(|a| !a.is_empty()))),
        ("config", o.get("config").is_some_and(Value::is_object)),
        ("inputs", o.get("inputs").is_some_and(Value::is_object)),
        ("outputs", o.get("outputs").is_some_and(|v| v.as_object().is_some_and(|x| !x.is_empty()))),
        ("seed", o.get("seed").is_some_and(Value::is_u64)),
        ("build", o.get("build").is_some_and(Value::is_string)),
        ("timings", o.get("timings").is_some_and(|v| v.get("total").is_some_and(Value::is_f64))),
    ] {
        if !ok {
            return Err(format!("manifest-{command}: bad or missing {k}"));
        }
    }
    for path in o["outputs"].as_object().unwrap().values() {
        let path = Path::new(path.as_str().ok_or("output path not a string")?);
        if !path.exists() {
            return Err(format!("manifest-{command}: output {} missing", path.display()));
        }
    }
    Ok(())
}
