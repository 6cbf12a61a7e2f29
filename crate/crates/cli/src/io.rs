//! CSV readers and writers. Lines starting with `#` are comments; every
//! table written here reads back through the matching reader.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use maxstable::geometry::SiteSet;

/// Sites with their labels and numeric covariates. Coordinates are also
/// available as covariates under their column names.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    pub sites: SiteSet,
    pub covariates: Vec<HashMap<String, f64>>,
}

impl SiteTable {
    /// Wraps generated sites; covariates are just the coordinates.
    pub fn from_sites(sites: SiteSet, coords: &[String]) -> Self {
        let covariates = sites
            .coords()
            .iter()
            .map(|c| coords.iter().cloned().zip(c.iter().copied()).collect())
            .collect();
        SiteTable { sites, covariates }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.sites.len()).map(|i| self.sites.label(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningTable {
    pub table: SiteTable,
    /// The `value` column, on whatever scale the file uses.
    pub values: Vec<f64>,
}

/// A CSV table: header and raw string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses column `name` as numbers.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| anyhow!("missing column `{name}`"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>().with_context(|| {
                    format!("row {}, column `{name}`: {:?} is not a number", i + 1, r[c])
                })
            })
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

/// Writes `comments` as `# ` lines, then the header and rows.
pub fn write_table<I>(path: &Path, comments: &[String], header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn site_table(t: &Table, coords: &[String], skip: &[&str], path: &Path) -> Result<SiteTable> {
    let ctx = || format!("in {}", path.display());
    let cols: Vec<Vec<f64>> = coords
        .iter()
        .map(|c| t.numbers(c))
        .collect::<Result<_>>()
        .with_context(ctx)?;
    let n = t.rows.len();
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    let mut covariates: Vec<HashMap<String, f64>> = (0..n)
        .map(|i| {
            coords
                .iter()
                .cloned()
                .zip(points[i].iter().copied())
                .collect()
        })
        .collect();
    for name in &t.header {
        if name == "label" || coords.contains(name) || skip.contains(&name.as_str()) {
            continue;
        }
        let v = t.numbers(name).with_context(ctx)?;
        for (m, x) in covariates.iter_mut().zip(v) {
            m.insert(name.clone(), x);
        }
    }
    let sites = match t.column("label") {
        Some(c) => SiteSet::with_labels(points, t.rows.iter().map(|r| r[c].clone()).collect()),
        None => SiteSet::new(points),
    }
    .with_context(ctx)?;
    Ok(SiteTable { sites, covariates })
}

/// Sites CSV: optional `label`, the coordinate columns, then any covariates.
pub fn read_sites(path: &Path, coords: &[String]) -> Result<SiteTable> {
    let t = read_table(path)?;
    if t.rows.is_empty() {
        bail!("{} lists no sites", path.display());
    }
    site_table(&t, coords, &[], path)
}

/// Conditioning CSV: as [`read_sites`] plus a `value` column.
pub fn read_conditioning(path: &Path, coords: &[String]) -> Result<ConditioningTable> {
    let t = read_table(path)?;
    if t.rows.is_empty() {
        bail!("{} lists no conditioning sites", path.display());
    }
    let values = t
        .numbers("value")
        .with_context(|| format!("in {}", path.display()))?;
    Ok(ConditioningTable {
        table: site_table(&t, coords, &["value"], path)?,
        values,
    })
}

pub fn write_sites(path: &Path, t: &SiteTable, coords: &[String]) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend(coords.iter().cloned());
    let rows = (0..t.sites.len()).map(|i| {
        let mut r = vec![t.sites.label(i)];
        r.extend(t.sites.coord(i).iter().map(|v| num(*v)));
        r
    });
    write_table(path, &[], &header, rows)
}

pub fn write_conditioning(path: &Path, t: &ConditioningTable, coords: &[String]) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend(coords.iter().cloned());
    header.push("value".into());
    let s = &t.table.sites;
    let rows = (0..s.len()).map(|i| {
        let mut r = vec![s.label(i)];
        r.extend(s.coord(i).iter().map(|v| num(*v)));
        r.push(num(t.values[i]));
        r
    });
    write_table(path, &[], &header, rows)
}

/// Long format: one row per replicate and site.
pub fn write_replicates(
    path: &Path,
    comments: &[String],
    labels: &[String],
    reps: &[Vec<f64>],
) -> Result<()> {
    let header = ["replicate", "label", "value"].map(String::from);
    let rows = reps.iter().enumerate().flat_map(|(r, vals)| {
        labels
            .iter()
            .zip(vals)
            .map(move |(l, v)| vec![(r + 1).to_string(), l.clone(), num(*v)])
    });
    write_table(path, comments, &header, rows)
}

/// Inverse of [`write_replicates`]: values by replicate, in file order.
pub fn read_replicates(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = read_table(path)?;
    let rep = t.numbers("replicate")?;
    let val = t.numbers("value")?;
    let lc = t
        .column("label")
        .ok_or_else(|| anyhow!("missing column `label`"))?;
    let mut labels = Vec::new();
    let mut reps: Vec<Vec<f64>> = Vec::new();
    for (i, (r, v)) in rep.iter().zip(&val).enumerate() {
        let r = *r as usize;
        if r == 0 || r > reps.len() + 1 {
            bail!(
                "{}: replicate {r} out of order at row {}",
                path.display(),
                i + 1
            );
        }
        if r > reps.len() {
            reps.push(Vec::new());
        }
        if r == 1 {
            labels.push(t.rows[i][lc].clone());
        }
        reps[r - 1].push(*v);
    }
    Ok((labels, reps))
}

pub fn quantile_header(coords: &[String], probs: &[f64]) -> Vec<String> {
    let mut h = coords.to_vec();
    h.extend(probs.iter().map(|p| format!("q{p}")));
    h
}

/// One row per site: coordinates, then the quantiles in `q[site]`.
pub fn write_quantiles(
    path: &Path,
    comments: &[String],
    sites: &SiteSet,
    coords: &[String],
    probs: &[f64],
    q: &[Vec<f64>],
) -> Result<()> {
    let rows = q.iter().enumerate().map(|(i, qs)| {
        sites
            .coord(i)
            .iter()
            .chain(qs)
            .map(|v| num(*v))
            .collect::<Vec<_>>()
    });
    write_table(path, comments, &quantile_header(coords, probs), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    #[test]
    fn conditioning_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(
            &p,
            "# observed maxima\nlabel,x,y,value,alt\na, 1.5,2,0.25,100\nb,3,4.125,7,250\n",
        )
        .unwrap();
        let c = read_conditioning(&p, &coords()).unwrap();
        assert_eq!(c.values, vec![0.25, 7.0]);
        assert_eq!(c.table.labels(), vec!["a", "b"]);
        assert_eq!(c.table.covariates[1]["alt"], 250.0);
        assert_eq!(c.table.covariates[0]["x"], 1.5);
        let q = dir.path().join("c2.csv");
        write_conditioning(&q, &c, &coords()).unwrap();
        let back = read_conditioning(&q, &coords()).unwrap();
        assert_eq!(back.values, c.values);
        assert_eq!(back.table.sites, c.table.sites);
    }

    #[test]
    fn bad_input_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "label,x,y,value\na,1,2,0.5\nb,3,oops,1\n").unwrap();
        let err = format!("{:#}", read_conditioning(&p, &coords()).unwrap_err());
        assert!(err.contains("row 2") && err.contains("`y`"), "{err}");
        std::fs::write(&p, "label,x,value\na,1,0.5\n").unwrap();
        let err = format!("{:#}", read_conditioning(&p, &coords()).unwrap_err());
        assert!(err.contains("missing column `y`"), "{err}");
    }

    #[test]
    fn replicates_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let labels = vec!["s1".to_string(), "s2".to_string()];
        let reps = vec![vec![0.1, 1.0 / 3.0], vec![2.5e-300, 7.0]];
        write_replicates(&p, &["margins: frechet".into()], &labels, &reps).unwrap();
        assert_eq!(read_replicates(&p).unwrap(), (labels, reps));
    }

    #[test]
    fn sites_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let t = SiteTable::from_sites(
            SiteSet::grid(3, 2, (0.0, 1.0), (0.0, 2.0)).unwrap(),
            &coords(),
        );
        write_sites(&p, &t, &coords()).unwrap();
        let back = read_sites(&p, &coords()).unwrap();
        assert_eq!(back.sites.coords(), t.sites.coords());
        assert_eq!(back.covariates, t.covariates);
    }
}
