use std::io::Write;

use crate::error::{Error, Result};

use super::metrics::relative_change;

/// Final-time errors of one experiment: `(estimator, in-sample, out-of-sample)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub name: String,
    pub hash: String,
    pub seed: u64,
    pub rows: Vec<(String, f64, f64)>,
}

impl Summary {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "experiment,estimator,e_in,e_oos")?;
        for (n, a, b) in &self.rows {
            writeln!(w, "{},{n},{a:.10e},{b:.10e}", self.name)?;
        }
        Ok(())
    }

    /// Parses the output of [`Summary::write_csv`] preceded by the header comment.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("summary file: {m}"));
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| bad("empty"))?;
        let mut hash = None;
        let mut seed = None;
        for tok in head.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("config_hash=") {
                hash = Some(v.to_string());
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse().ok();
            }
        }
        let (hash, seed) = hash.zip(seed).ok_or_else(|| bad("missing config_hash/seed header"))?;
        if lines.next() != Some("experiment,estimator,e_in,e_oos") {
            return Err(bad("unexpected column header"));
        }
        let mut name = String::new();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(&format!("malformed row `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
            name = f[0].to_string();
            rows.push((f[1].to_string(), num(f[2])?, num(f[3])?));
        }
        Ok(Summary { name, hash, seed, rows })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    None,
    /// Smallest error; starred.
    Best,
    /// Second smallest; underlined.
    Second,
}

/// Best and second-best by smallest value. Ties go to the earlier entry; the
/// second return value names the tied entries. Entries for which `skip` is
/// true (the zero-error oracle control) and non-finite values are not ranked.
pub fn rank_marks(names: &[String], values: &[f64], skip: impl Fn(&str) -> bool) -> (Vec<Mark>, Option<String>) {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite() && !skip(&names[i])).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut marks = vec![Mark::None; values.len()];
    if let Some(&b) = idx.first() {
        marks[b] = Mark::Best;
    }
    if let Some(&s) = idx.get(1) {
        marks[s] = Mark::Second;
    }
    let mut ties = Vec::new();
    for w in idx.windows(2).take(2) {
        if values[w[0]] == values[w[1]] {
            ties.push(format!("{}={}", names[w[0]], names[w[1]]));
        }
    }
    let note = (!ties.is_empty()).then(|| format!("tie {} (roster order)", ties.join(", ")));
    (marks, note)
}

fn is_oracle(name: &str) -> bool {
    name == "Oracle"
}

fn cell(v: f64, m: Mark) -> String {
    let s = format!("{v:.5}");
    match m {
        Mark::Best => format!("{s}*"),
        Mark::Second => format!("_{s}_"),
        Mark::None => s,
    }
}

/// Estimator columns in order of first appearance.
fn columns(reports: &[Summary]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in reports {
        for (n, _, _) in &r.rows {
            if !cols.contains(n) {
                cols.push(n.clone());
            }
        }
    }
    cols
}

/// One row per experiment and horizon; `None` where an estimator is absent.
fn table_rows(reports: &[Summary]) -> Vec<(String, &'static str, Vec<Option<f64>>)> {
    let cols = columns(reports);
    let mut out = Vec::new();
    for r in reports {
        for (metric, pick) in [("in_sample", 0usize), ("oos", 1)] {
            let vals = cols
                .iter()
                .map(|c| {
                    r.rows
                        .iter()
                        .find(|(n, _, _)| n == c)
                        .map(|(_, a, b)| if pick == 0 { *a } else { *b })
                })
                .collect();
            out.push((r.name.clone(), metric, vals));
        }
    }
    out
}

fn marked_row(cols: &[String], vals: &[Option<f64>]) -> (Vec<String>, Option<String>) {
    let v: Vec<f64> = vals.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
    let (marks, note) = rank_marks(cols, &v, is_oracle);
    let cells = vals
        .iter()
        .zip(marks)
        .map(|(x, m)| x.map(|x| cell(x, m)).unwrap_or_else(|| "-".into()))
        .collect();
    (cells, note)
}

/// CSV table: one row per experiment and horizon, one column per estimator.
/// The best estimator is suffixed `*`, the second best wrapped in `_…_`.
pub fn render_csv(reports: &[Summary]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports"));
    }
    let cols = columns(reports);
    let mut s = format!("experiment,metric,{},note\n", cols.join(","));
    for (name, metric, vals) in table_rows(reports) {
        let (cells, note) = marked_row(&cols, &vals);
        s.push_str(&format!("{name},{metric},{},{}\n", cells.join(","), note.unwrap_or_default()));
    }
    Ok(s)
}

/// Aligned plain-text version of [`render_csv`].
pub fn render_text(reports: &[Summary]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports"));
    }
    let cols = columns(reports);
    let mut grid = vec![{
        let mut h = vec!["experiment".to_string(), "E_T".to_string()];
        h.extend(cols.iter().cloned());
        h
    }];
    let mut notes = Vec::new();
    for (name, metric, vals) in table_rows(reports) {
        let (cells, note) = marked_row(&cols, &vals);
        let mut row = vec![name.clone(), if metric == "oos" { "OOS".into() } else { "in".into() }];
        row.extend(cells);
        grid.push(row);
        if let Some(n) = note {
            notes.push(format!("{name} {metric}: {n}"));
        }
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for row in &grid {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        s.push_str(line.join("  ").trim_end());
        s.push('\n');
    }
    s.push_str("* best, _x_ second best (Oracle excluded)\n");
    for n in notes {
        s.push_str(&n);
        s.push('\n');
    }
    Ok(s)
}

/// `|E(a) − E(b)| / E(b)` per estimator present in both, for in-sample and OOS.
pub fn relative_changes(a: &Summary, b: &Summary) -> Vec<(String, f64, f64)> {
    a.rows
        .iter()
        .filter_map(|(n, ai, ao)| {
            b.rows
                .iter()
                .find(|(m, _, _)| m == n)
                .map(|(_, bi, bo)| (n.clone(), relative_change(*ai, *bi), relative_change(*ao, *bo)))
        })
        .collect()
}
