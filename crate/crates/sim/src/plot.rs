//! Gnuplot-ready output: a whitespace-separated data file and a script that
//! plots it to PNG.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::row::ExperimentRow;
use crate::spec::ExperimentKind;

/// Writes `<name>.dat` and `<name>.gp` into `dir`, returning both paths.
pub fn write_gnuplot(
    dir: &Path,
    kind: ExperimentKind,
    rows: &[ExperimentRow],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = kind.name();
    let dat = dir.join(format!("{name}.dat"));
    let gp = dir.join(format!("{name}.gp"));
    let (data, script) = match kind {
        ExperimentKind::Sweep => sweep(rows, name),
        ExperimentKind::Aging => aging(rows, name),
        ExperimentKind::Correctness => correctness(rows, name),
        ExperimentKind::E2e => e2e(rows, name),
    };
    fs::File::create(&dat)?.write_all(data.as_bytes())?;
    fs::File::create(&gp)?.write_all(script.as_bytes())?;
    Ok(vec![dat, gp])
}

fn mid(r: &ExperimentRow) -> f64 {
    0.5 * (r.analytic_low + r.analytic_high)
}

fn header(name: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "set terminal pngcairo size 900,600\nset output '{name}.png'\nset datafile separator whitespace\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset key outside right\nset grid\n"
    )
}

/// One block per N (blank-line separated), rows: alpha measured analytic.
fn sweep(rows: &[ExperimentRow], name: &str) -> (String, String) {
    let mut copies: Vec<u32> = rows.iter().map(|r| r.copies).collect();
    copies.sort_unstable();
    copies.dedup();
    let mut data = String::from("# alpha measured analytic ci_low ci_high\n");
    for &n in &copies {
        data += &format!("# N={n}\n");
        for r in rows.iter().filter(|r| r.copies == n && r.bucket == "all") {
            let (lo, hi) = r.wilson();
            data += &format!(
                "{:.6} {:.6} {:.6} {lo:.6} {hi:.6}\n",
                r.alpha,
                r.measured(),
                mid(r)
            );
        }
        data += "\n\n";
    }
    let plots: Vec<String> = copies
        .iter()
        .enumerate()
        .flat_map(|(i, n)| {
            [
                format!("'{name}.dat' index {i} using 1:2 with points lc {i} title 'N={n}'"),
                format!("'{name}.dat' index {i} using 1:3 with lines lc {i} notitle"),
            ]
        })
        .collect();
    let script = header(name, "load alpha = K/M", "mean query success")
        + "set yrange [0:1]\nplot "
        + &plots.join(", \\\n     ")
        + "\n";
    (data, script)
}

/// Rows: percentile measured ci_low ci_high analytic.
fn aging(rows: &[ExperimentRow], name: &str) -> (String, String) {
    let mut data = String::from("# age_percentile measured ci_low ci_high analytic\n");
    let buckets: Vec<&ExperimentRow> = rows.iter().filter(|r| r.bucket != "all").collect();
    let n = buckets.len().max(1) as f64;
    for (i, r) in buckets.iter().enumerate() {
        let (lo, hi) = r.wilson();
        let pct = 100.0 * (i as f64 + 0.5) / n;
        data += &format!(
            "{pct:.3} {:.6} {lo:.6} {hi:.6} {:.6}\n",
            r.measured(),
            mid(r)
        );
    }
    let script = header(name, "report age percentile (0 = newest)", "query success")
        + "set yrange [0:1]\n"
        + &format!("plot '{name}.dat' using 1:2:3:4 with yerrorbars title 'measured', \\\n     '{name}.dat' using 1:5 with lines title 'model'\n");
    (data, script)
}

/// Rows: b measured ci_low ci_high analytic_low analytic_high.
fn correctness(rows: &[ExperimentRow], name: &str) -> (String, String) {
    let mut data = String::from(
        "# checksum_bits alpha copies measured ci_low ci_high analytic_low analytic_high\n",
    );
    for r in rows.iter().filter(|r| r.metric == "return_error") {
        let (lo, hi) = r.wilson();
        data += &format!(
            "{} {:.6} {} {:.8} {lo:.8} {hi:.8} {:.8} {:.8}\n",
            r.checksum_bits,
            r.alpha,
            r.copies,
            r.measured(),
            r.analytic_low,
            r.analytic_high
        );
    }
    let script = header(name, "checksum bits b", "return-error rate")
        + "set logscale y\n"
        + &format!("plot '{name}.dat' using 1:4:5:6 with yerrorbars title 'measured', \\\n     '{name}.dat' using 1:7 with lines title 'lower bound', \\\n     '{name}.dat' using 1:8 with lines title 'upper bound'\n");
    (data, script)
}

/// Rows: index metric measured analytic.
fn e2e(rows: &[ExperimentRow], name: &str) -> (String, String) {
    let mut data = String::from("# index metric measured analytic\n");
    for (i, r) in rows.iter().enumerate() {
        data += &format!("{i} {} {:.6} {:.6}\n", r.metric, r.measured(), mid(r));
    }
    let script = header(name, "", "rate")
        + "set yrange [0:1]\nset style data histograms\nset style fill solid 0.5\n"
        + &format!(
            "plot '{name}.dat' using 3:xtic(2) title 'measured', '' using 4 title 'model'\n"
        );
    (data, script)
}
