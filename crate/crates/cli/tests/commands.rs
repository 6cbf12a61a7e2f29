use std::path::{Path, PathBuf};
use std::process::Command;

use maxstable_cli::commands::{cmd_condsim, cmd_diag, cmd_extcoef, cmd_uncond};
use maxstable_cli::io::{read_replicates, read_table};
use maxstable_cli::RunConfig;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn config(dir: &Path, body: &str) -> RunConfig {
    let text = format!("seed = 11\noutput_dir = \"out\"\n{body}");
    let p = write(dir, "run.toml", &text);
    RunConfig::load(&p).unwrap()
}

const BR: &str = "[model]\nfamily = \"brown-resnick\"\nrange = 25.0\nsmooth = 0.5\n";

fn column(dir: &Path, file: &str, name: &str) -> Vec<f64> {
    read_table(&dir.join("out").join(file))
        .unwrap()
        .numbers(name)
        .unwrap()
}

#[test]
fn one_replicate_at_one_site() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "grid.csv", "label,x,y\nA,10,20\n");
    let cfg = config(dir.path(), &format!("{BR}[grid]\npath = \"grid.csv\"\n"));
    cmd_uncond(&cfg).unwrap();
    let (labels, reps) = read_replicates(&dir.path().join("out/replicates.csv")).unwrap();
    assert_eq!(labels, vec!["A"]);
    assert_eq!(reps.len(), 1);
    assert_eq!(reps[0].len(), 1);
    assert!(reps[0][0] > 0.0);
}

#[test]
fn gumbel_median_at_one_site() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "grid.csv", "x,y\n10,20\n");
    let cfg = config(
        dir.path(),
        &format!(
            "replicates = 10000\n[margins]\nkind = \"gumbel\"\n{BR}[grid]\npath = \"grid.csv\"\n"
        ),
    );
    cmd_uncond(&cfg).unwrap();
    let median = column(dir.path(), "quantiles.csv", "q0.5")[0];
    assert!((median - 0.3665).abs() < 0.02, "{median}");
}

#[test]
fn fixed_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cond.csv",
        "label,x,y,value\na,10,10,1.2\nb,40,15,0.4\nc,20,45,3.1\n",
    );
    let body = format!(
        "replicates = 20\n{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"frechet\" }}\n[grid]\nnx = 6\nny = 6\nxlim = [0.0, 60.0]\nylim = [0.0, 60.0]\n"
    );
    let read_all = |cfg: &RunConfig| {
        let files = cmd_condsim(cfg).unwrap();
        files
            .iter()
            .map(|f| std::fs::read(f).unwrap())
            .collect::<Vec<_>>()
    };
    let cfg = config(dir.path(), &body);
    let a = read_all(&cfg);
    let b = read_all(&cfg);
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = Some(12);
    assert_ne!(read_all(&other)[0], a[0]);
}

#[test]
fn target_at_the_conditioning_site_repeats_the_data() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cond.csv", "label,x,y,value\na,10,10,0.75\n");
    write(dir.path(), "grid.csv", "label,x,y\na,10,10\n");
    let cfg = config(
        dir.path(),
        &format!(
            "replicates = 25\n[margins]\nkind = \"gumbel\"\n{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"gumbel\" }}\n[grid]\npath = \"grid.csv\"\n"
        ),
    );
    cmd_condsim(&cfg).unwrap();
    let (_, reps) = read_replicates(&dir.path().join("out/replicates.csv")).unwrap();
    assert_eq!(reps.len(), 25);
    for r in reps {
        assert!((r[0] - 0.75).abs() < 1e-14, "{}", r[0]);
    }
}

#[test]
fn five_sites_use_enumeration_and_ten_use_gibbs() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..10)
        .map(|i| {
            format!(
                "s{i},{},{},{}\n",
                5.0 + 9.0 * i as f64,
                10.0 + 7.0 * (i % 4) as f64,
                0.5 + 0.2 * i as f64
            )
        })
        .collect();
    write(
        dir.path(),
        "cond10.csv",
        &format!("label,x,y,value\n{rows}"),
    );
    let five: String = rows.lines().take(5).map(|l| format!("{l}\n")).collect();
    write(dir.path(), "cond5.csv", &format!("label,x,y,value\n{five}"));
    for (file, k, mode) in [
        ("cond5.csv", 5, "exact enumeration"),
        ("cond10.csv", 10, "gibbs sampler"),
    ] {
        let cfg = config(
            dir.path(),
            &format!(
                "replicates = 3\n{BR}[conditioning]\npath = \"{file}\"\nmargins = {{ kind = \"frechet\" }}\n[grid]\nnx = 3\nny = 3\nxlim = [0.0, 90.0]\nylim = [0.0, 40.0]\n"
            ),
        );
        cmd_condsim(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("out/quantiles.csv")).unwrap();
        assert!(
            text.contains(&format!("# hitting scenarios: {mode}")),
            "{text}"
        );
        let sizes = read_table(&dir.path().join("out/partition_sizes.csv")).unwrap();
        assert_eq!(sizes.rows.len(), k);
        let counts = sizes.numbers("count").unwrap();
        assert_eq!(counts.iter().sum::<f64>(), 3.0);
    }
}

#[test]
fn trend_margins_on_input_and_output() {
    let dir = tempfile::tempdir().unwrap();
    // GEV(10 + alt / 100, 2, 0.1) values
    write(
        dir.path(),
        "cond.csv",
        "# station maxima\nlabel,x,y,alt,value\na,10,10,100,12.5\nb,30,20,300,14\n",
    );
    write(
        dir.path(),
        "grid.csv",
        "label,x,y,alt\np,20,15,200\nq,60,60,0\n",
    );
    let trend = "{ location = { intercept = 10.0, coefficients = { alt = 0.01 } }, scale = { intercept = 2.0 }, shape = { intercept = 0.1 } }";
    let cfg = config(
        dir.path(),
        &format!(
            "replicates = 200\n[margins]\nkind = \"gev+trend\"\ntrend = {trend}\n{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"gev+trend\", trend = {trend} }}\n[grid]\npath = \"grid.csv\"\n"
        ),
    );
    cmd_condsim(&cfg).unwrap();
    let (labels, reps) = read_replicates(&dir.path().join("out/replicates.csv")).unwrap();
    assert_eq!(labels, vec!["p", "q"]);
    // support of the GEV(eta, 2, 0.1) law is y > eta - 20
    for r in &reps {
        assert!(r[0] > 12.0 - 20.0 && r[1] > 10.0 - 20.0);
    }

    // values outside the support name the file and row
    write(
        dir.path(),
        "cond.csv",
        "label,x,y,alt,value\na,10,10,100,-50\n",
    );
    let err = format!("{:#}", cmd_condsim(&cfg).unwrap_err());
    assert!(
        err.contains("cond.csv row 1") && err.contains("gev+trend"),
        "{err}"
    );
}

#[test]
fn sampler_errors_name_the_replicate() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cond.csv",
        "label,x,y,value\na,10,10,5\nb,12,10,0.05\nc,14,10,4\n",
    );
    let cfg = config(
        dir.path(),
        &format!(
            "replicates = 50\nrejection_cap = 1\n{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"frechet\" }}\n[grid]\nnx = 1\nny = 1\nxlim = [0.0, 20.0]\nylim = [0.0, 20.0]\n"
        ),
    );
    let err = format!("{:#}", cmd_condsim(&cfg).unwrap_err());
    assert!(
        err.contains("replicate ") && err.contains("rejection"),
        "{err}"
    );
}

#[test]
fn diag_two_sites_matches_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cond.csv",
        "label,x,y,value\na,10,10,1\nb,30,10,1\n",
    );
    let cfg = config(
        dir.path(),
        &format!(
            "{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"frechet\" }}\n[chain]\nburn_in = 100\nthinning = 2\nlength = 40100\n"
        ),
    );
    cmd_diag(&cfg).unwrap();
    let trace = read_table(&dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace.rows.len(), 20_000);
    let tv = column(dir.path(), "tv.csv", "tv")[0];
    assert!(tv <= 0.02, "{tv}");
    let exact = read_table(&dir.path().join("out/exact.csv")).unwrap();
    assert_eq!(exact.rows.len(), 2);
    let hist = column(dir.path(), "partition_sizes.csv", "proportion");
    assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn diag_three_sites_lists_five_partitions() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cond.csv",
        "label,x,y,value\na,10,10,1\nb,30,10,2\nc,20,30,0.5\n",
    );
    let cfg = config(
        dir.path(),
        &format!(
            "{BR}[conditioning]\npath = \"cond.csv\"\nmargins = {{ kind = \"frechet\" }}\n[chain]\nburn_in = 10\nthinning = 3\nlength = 610\n"
        ),
    );
    cmd_diag(&cfg).unwrap();
    let exact = read_table(&dir.path().join("out/exact.csv")).unwrap();
    assert_eq!(exact.rows.len(), 5);
    let p = exact.numbers("exact").unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(
        read_table(&dir.path().join("out/trace.csv"))
            .unwrap()
            .rows
            .len(),
        200
    );

    write(dir.path(), "cond.csv", "label,x,y,value\na,10,10,1\n");
    let err = format!("{:#}", cmd_diag(&cfg).unwrap_err());
    assert!(err.contains("at least two"), "{err}");
}

#[test]
fn extremal_coefficient_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &format!("{BR}[extcoef]\nh_max = 115.0\nn_h = 24\nempirical_replicates = 2000\n"),
    );
    cmd_extcoef(&cfg).unwrap();
    let h = column(dir.path(), "extcoef.csv", "h");
    let theta = column(dir.path(), "extcoef.csv", "theta");
    assert_eq!(h[0], 0.0);
    assert_eq!(theta[0], 1.0);
    assert_eq!(h[23], 115.0);
    assert!((theta[23] - 1.70).abs() < 0.005, "{}", theta[23]);
    let t = read_table(&dir.path().join("out/extcoef.csv")).unwrap();
    let c = t.column("theta_empirical").unwrap();
    assert_eq!(t.rows[0][c], "");
    let emp: f64 = t.rows[23][c].parse().unwrap();
    assert!((emp - theta[23]).abs() < 0.06, "{emp}");

    // BR(38, 0.69) crosses 1.7 near h = 115
    let cfg = config(
        dir.path(),
        "[model]\nfamily = \"brown-resnick\"\nrange = 38.0\nsmooth = 0.69\n[extcoef]\nh_max = 200.0\nn_h = 201\n",
    );
    cmd_extcoef(&cfg).unwrap();
    let theta = column(dir.path(), "extcoef.csv", "theta");
    let cross = theta.iter().position(|t| *t >= 1.7).unwrap();
    assert!((105..=125).contains(&cross), "{cross}");
}

#[test]
fn binary_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "grid.csv", "label,x,y\nA,10,20\nB,50,50\n");
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"model": {"family": "schlather", "range": 208, "smooth": 0.5}, "grid": {"path": "grid.csv"}}"#,
    );
    let bin = env!("CARGO_BIN_EXE_maxstable");
    let out = dir.path().join("flags");
    let run = |seed: &str| {
        Command::new(bin)
            .args(["uncond", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--replicates", "7", "--out"])
            .arg(&out)
            .output()
            .unwrap()
    };
    let res = run("5");
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let (labels, reps) = read_replicates(&out.join("replicates.csv")).unwrap();
    assert_eq!(labels, vec!["A", "B"]);
    assert_eq!(reps.len(), 7);
    let first = std::fs::read(out.join("replicates.csv")).unwrap();
    assert!(run("5").status.success());
    assert_eq!(std::fs::read(out.join("replicates.csv")).unwrap(), first);

    let res = Command::new(bin)
        .args(["uncond", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("seed"));
}
