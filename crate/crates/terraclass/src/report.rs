//! Plain-text evaluation reports: `key: value` header lines, a blank line,
//! then a tab-separated table whose first row names the columns.

use std::fmt;

use terraclass_core::evaluate::ConfusionMatrix;
use terraclass_core::Class;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl Report {
    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        let v = clean(&value.to_string());
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = v,
            None => self.header.push((clean(key).replace(": ", " "), v)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(row.iter().map(|c| clean(c)).collect());
    }

    pub fn parse(text: &str) -> Result<Report, String> {
        let mut r = Report::default();
        let mut lines = text.lines().enumerate();
        for (i, l) in lines.by_ref() {
            if l.is_empty() {
                break;
            }
            let (k, v) = l
                .split_once(": ")
                .or_else(|| l.strip_suffix(':').map(|k| (k, "")))
                .ok_or_else(|| format!("line {}: expected `key: value`", i + 1))?;
            r.header.push((k.to_string(), v.to_string()));
        }
        if let Some((_, l)) = lines.next() {
            r.columns = l.split('\t').map(str::to_string).collect();
        }
        for (i, l) in lines {
            let row: Vec<String> = l.split('\t').map(str::to_string).collect();
            if row.len() != r.columns.len() {
                return Err(format!(
                    "line {}: {} cells, expected {}",
                    i + 1,
                    row.len(),
                    r.columns.len()
                ));
            }
            r.rows.push(row);
        }
        Ok(r)
    }

    /// Confusion matrix report. Per-class rows hold the class's point count,
    /// its misclassified share of all test points, and one column per
    /// predicted class with the share of all test points in that cell.
    pub fn confusion(cm: &ConfusionMatrix) -> Report {
        let mut r = Report::default();
        r.set("overall_error", cm.overall_error());
        r.set("test_points", cm.total());
        r.columns = ["class", "points", "error"]
            .into_iter()
            .map(String::from)
            .chain(Class::ALL.iter().map(|c| c.name().to_string()))
            .collect();
        for t in Class::ALL {
            let n: u64 = cm.counts[t.index()].iter().sum();
            let mut row = vec![t.name().to_string(), n.to_string(), cm.class_error(t).to_string()];
            row.extend(Class::ALL.iter().map(|&p| cm.fraction(t, p).to_string()));
            r.push_row(row);
        }
        r
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.header {
            writeln!(f, "{k}: {v}")?;
        }
        writeln!(f)?;
        writeln!(f, "{}", self.columns.join("\t"))?;
        for row in &self.rows {
            writeln!(f, "{}", row.join("\t"))?;
        }
        Ok(())
    }
}
