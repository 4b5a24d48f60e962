//! Versioned text serialization of trained ensembles.
//!
//! ```text
//! terraclass-model 1
//! kind gbt
//! classes 6
//! config n_trees 100
//! ...                      one line per training parameter
//! columns 147
//! column omnivariance@s0
//! ...
//! trees 600
//! tree 0 nodes 31 leaves 16 width 1
//! S <feature> <threshold> <left> <right>
//! L <leaf index>
//! ...                      one line per node, root first
//! V <value> ...            one line per leaf, `width` values
//! end
//! ```
//!
//! Floats are printed in their shortest round-trip form, so loading and
//! saving again reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use terraclass_core::ensemble::{Ensemble, ModelKind, Node, TrainConfig, Tree};

use crate::error::{Error, Location, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "terraclass-model";

pub fn encode_model(m: &Ensemble) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "kind {}", m.kind());
    let _ = writeln!(s, "classes {}", m.n_classes());
    for (k, v) in config_fields(m.config()) {
        let _ = writeln!(s, "config {k} {v}");
    }
    let _ = writeln!(s, "columns {}", m.feature_names().len());
    for n in m.feature_names() {
        let _ = writeln!(s, "column {n}");
    }
    let _ = writeln!(s, "trees {}", m.trees().len());
    for (i, t) in m.trees().iter().enumerate() {
        let _ = writeln!(
            s,
            "tree {i} nodes {} leaves {} width {}",
            t.nodes().len(),
            t.n_leaves(),
            t.leaf_width()
        );
        for n in t.nodes() {
            match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(s, "S {feature} {threshold} {left} {right}");
                }
                Node::Leaf { value } => {
                    let _ = writeln!(s, "L {value}");
                }
            }
        }
        for leaf in t.leaf_values().chunks(t.leaf_width()) {
            s.push('V');
            for v in leaf {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
    }
    s.push_str("end\n");
    s
}

fn config_fields(c: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("n_trees", c.n_trees.to_string()),
        ("rf_max_depth", c.rf_max_depth.to_string()),
        ("rf_feature_fraction", c.rf_feature_fraction.to_string()),
        ("rf_bootstrap", c.rf_bootstrap.to_string()),
        ("gbt_max_leaves", c.gbt_max_leaves.to_string()),
        ("gbt_learning_rate", c.gbt_learning_rate.to_string()),
        ("gbt_bagging_fraction", c.gbt_bagging_fraction.to_string()),
        ("gbt_feature_fraction", c.gbt_feature_fraction.to_string()),
        ("gbt_lambda", c.gbt_lambda.to_string()),
        ("min_samples_leaf", c.min_samples_leaf.to_string()),
        ("seed", c.seed.to_string()),
    ]
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
    path: PathBuf,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, Location::Line(self.line), msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file (truncated model)"))
            }
        }
    }

    /// Next line, which must start with `key`; returns the rest.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok(rest),
            None => Err(self.err(format!("expected `{key} ...`, found `{l}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad {what} `{s}`")))
    }
}

pub fn decode_model(text: &str, path: &Path) -> Result<Ensemble> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        line: 0,
        path: path.to_path_buf(),
    };
    let head = lines.keyed(MAGIC).map_err(|_| lines.err("not a terraclass model file"))?;
    let version: u32 = lines.parse(head, "format version")?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!(
            "unsupported model format version {version} (this build reads version {FORMAT_VERSION})"
        )));
    }
    let kind_s = lines.keyed("kind")?;
    let kind: ModelKind = kind_s.parse().map_err(|e: String| lines.err(e))?;
    let n_classes: usize = {
        let s = lines.keyed("classes")?;
        lines.parse(s, "class count")?
    };
    let mut config = TrainConfig::default();
    for (key, _) in config_fields(&TrainConfig::default()) {
        let rest = lines.keyed("config")?;
        let (k, v) = rest.split_once(' ').ok_or_else(|| lines.err("config line without value"))?;
        if k != key {
            return Err(lines.err(format!("expected config `{key}`, found `{k}`")));
        }
        match key {
            "n_trees" => config.n_trees = lines.parse(v, key)?,
            "rf_max_depth" => config.rf_max_depth = lines.parse(v, key)?,
            "rf_feature_fraction" => config.rf_feature_fraction = lines.parse(v, key)?,
            "rf_bootstrap" => config.rf_bootstrap = lines.parse(v, key)?,
            "gbt_max_leaves" => config.gbt_max_leaves = lines.parse(v, key)?,
            "gbt_learning_rate" => config.gbt_learning_rate = lines.parse(v, key)?,
            "gbt_bagging_fraction" => config.gbt_bagging_fraction = lines.parse(v, key)?,
            "gbt_feature_fraction" => config.gbt_feature_fraction = lines.parse(v, key)?,
            "gbt_lambda" => config.gbt_lambda = lines.parse(v, key)?,
            "min_samples_leaf" => config.min_samples_leaf = lines.parse(v, key)?,
            "seed" => config.seed = lines.parse(v, key)?,
            _ => unreachable!(),
        }
    }
    let n_cols: usize = {
        let s = lines.keyed("columns")?;
        lines.parse(s, "column count")?
    };
    let mut names = Vec::with_capacity(n_cols.min(1 << 16));
    for _ in 0..n_cols {
        names.push(lines.keyed("column")?.to_string());
    }
    let n_trees: usize = {
        let s = lines.keyed("trees")?;
        lines.parse(s, "tree count")?
    };
    let mut trees = Vec::with_capacity(n_trees.min(1 << 20));
    for i in 0..n_trees {
        let head = lines.keyed("tree")?;
        let f: Vec<&str> = head.split(' ').collect();
        if f.len() != 7 || f[1] != "nodes" || f[3] != "leaves" || f[5] != "width" || f[0] != i.to_string() {
            return Err(lines.err(format!("malformed tree header for tree {i}")));
        }
        let n_nodes: usize = lines.parse(f[2], "node count")?;
        let n_leaves: usize = lines.parse(f[4], "leaf count")?;
        let width: usize = lines.parse(f[6], "leaf width")?;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            let l = lines.next()?;
            let w: Vec<&str> = l.split(' ').collect();
            nodes.push(match w.as_slice() {
                ["S", feat, thr, left, right] => Node::Split {
                    feature: lines.parse(feat, "feature index")?,
                    threshold: lines.parse(thr, "threshold")?,
                    left: lines.parse(left, "child index")?,
                    right: lines.parse(right, "child index")?,
                },
                ["L", v] => Node::Leaf {
                    value: lines.parse(v, "leaf index")?,
                },
                _ => return Err(lines.err(format!("malformed node `{l}`"))),
            });
        }
        let mut values = Vec::with_capacity(n_leaves * width);
        for _ in 0..n_leaves {
            let rest = lines.keyed("V")?;
            let before = values.len();
            for v in rest.split(' ') {
                let x: f64 = lines.parse(v, "leaf value")?;
                if !x.is_finite() {
                    return Err(lines.err("non-finite leaf value"));
                }
                values.push(x);
            }
            if values.len() - before != width {
                return Err(lines.err(format!("leaf has {} values, expected {width}", values.len() - before)));
            }
        }
        let tree = Tree::from_parts(nodes, values, width).map_err(|e| lines.err(e.to_string()))?;
        trees.push(tree);
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    if let Ok(extra) = lines.next() {
        return Err(lines.err(format!("unexpected content after `end`: `{extra}`")));
    }
    config.validate().map_err(|e| lines.err(e.to_string()))?;
    Ensemble::from_parts(kind, n_classes, names, config, trees).map_err(|e| lines.err(e.to_string()))
}

pub fn save_model(m: &Ensemble, path: &Path) -> Result<()> {
    fs::write(path, encode_model(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Ensemble> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use terraclass_core::ensemble::{train_gbt, train_rf, Dataset};
    use terraclass_core::FeatureMatrix;

    fn data() -> (FeatureMatrix, Vec<u8>) {
        let values: Vec<f32> = (0..300).map(|i| ((i * 37) % 101) as f32 / 7.0 - 3.0).collect();
        let labels = (0..100).map(|r| (values[r * 3] > 0.0) as u8 + (values[r * 3 + 1] > 5.0) as u8).collect();
        (FeatureMatrix::new(vec!["a".into(), "b@s1".into(), "h@r0.6".into()], values).unwrap(), labels)
    }

    #[test]
    fn save_load_save_is_identical() {
        let (x, y) = data();
        let cfg = TrainConfig {
            n_trees: 7,
            seed: 3,
            ..TrainConfig::default()
        };
        let d = Dataset {
            features: &x,
            labels: &y,
            n_classes: 3,
        };
        for m in [train_rf(d, &cfg).unwrap(), train_gbt(d, &cfg).unwrap()] {
            let text = encode_model(&m);
            let back = decode_model(&text, Path::new("m")).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode_model(&back), text);
        }
    }

    #[test]
    fn truncated_and_foreign_versions_are_rejected() {
        let (x, y) = data();
        let m = train_gbt(
            Dataset {
                features: &x,
                labels: &y,
                n_classes: 3,
            },
            &TrainConfig {
                n_trees: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let text = encode_model(&m);
        for cut in [10, text.len() / 2, text.len() - 4] {
            assert!(decode_model(&text[..cut], Path::new("m")).is_err());
        }
        let v2 = text.replacen("terraclass-model 1", "terraclass-model 2", 1);
        let err = decode_model(&v2, Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
    }
}
