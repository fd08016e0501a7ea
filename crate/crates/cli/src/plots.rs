use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::Failure;

struct Figure {
    name: &'static str,
    title: &'static str,
    /// Column families; each must contain at least `<prefix>1` (or the exact name).
    columns: &'static [&'static str],
}

const FIGURES: [Figure; 4] = [
    Figure {
        name: "weights",
        title: "critic weights",
        columns: &["w_"],
    },
    Figure {
        name: "states",
        title: "true state",
        columns: &["x_true_"],
    },
    Figure {
        name: "control",
        title: "control input",
        columns: &["u_"],
    },
    Figure {
        name: "metrics",
        title: "accumulated energy",
        columns: &["E_u", "E_x"],
    },
];

/// Header indices for one figure, in header order.
fn select(header: &[String], fig: &Figure, path: &Path) -> Result<Vec<usize>, Failure> {
    let mut picked = Vec::new();
    for &family in fig.columns {
        let found: Vec<usize> = if family.ends_with('_') {
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.strip_prefix(family).is_some_and(|rest| rest.parse::<usize>().is_ok()))
                .map(|(i, _)| i)
                .collect()
        } else {
            header.iter().position(|h| h == family).into_iter().collect()
        };
        if found.is_empty() {
            let wanted = if family.ends_with('_') { format!("{family}1") } else { family.to_string() };
            return Err(Failure::Config(format!("{}: missing column `{wanted}`", path.display())));
        }
        picked.extend(found);
    }
    Ok(picked)
}

struct Series {
    data_file: String,
    /// (1-based column in the data file, label)
    curves: Vec<(usize, String)>,
}

/// Writes one whitespace-separated data file per figure for `log`.
fn split_log(log: &Path, out_dir: &Path) -> Result<Vec<Series>, Failure> {
    let unreadable = |e: csv::Error| Failure::Config(format!("cannot read {}: {e}", log.display()));
    let mut reader = csv::Reader::from_path(log).map_err(unreadable)?;
    let header: Vec<String> = reader.headers().map_err(unreadable)?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(Failure::Config(format!("{}: empty file", log.display())));
    }
    let t_col = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Failure::Config(format!("{}: missing column `t`", log.display())))?;
    let stem = log.file_stem().and_then(|s| s.to_str()).unwrap_or("log").to_string();

    let mut series = Vec::new();
    let mut writers = Vec::new();
    for fig in &FIGURES {
        let cols = select(&header, fig, log)?;
        let data_file = format!("{stem}.{}.dat", fig.name);
        let mut w = BufWriter::new(fs::File::create(out_dir.join(&data_file))?);
        write!(w, "# t")?;
        for &c in &cols {
            write!(w, " {}", header[c])?;
        }
        writeln!(w)?;
        series.push(Series {
            data_file,
            curves: cols
                .iter()
                .enumerate()
                .map(|(j, &c)| (j + 2, format!("{stem} {}", header[c])))
                .collect(),
        });
        writers.push((w, cols));
    }
    for record in reader.records() {
        let cells = record.map_err(unreadable)?;
        for (w, cols) in &mut writers {
            write!(w, "{}", &cells[t_col])?;
            for &c in cols.iter() {
                write!(w, " {}", &cells[c])?;
            }
            writeln!(w)?;
        }
    }
    for (mut w, _) in writers {
        w.flush()?;
    }
    Ok(series)
}

fn script(fig: &Figure, per_log: &[&Series]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 1000,600");
    let _ = writeln!(s, "set output '{}.png'", fig.name);
    let _ = writeln!(s, "set xlabel 't [s]'");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set grid");
    let plot = |s: &mut String, filter: &dyn Fn(&str) -> bool| {
        let curves: Vec<String> = per_log
            .iter()
            .flat_map(|series| {
                series
                    .curves
                    .iter()
                    .filter(|(_, label)| filter(label))
                    .map(|(col, label)| format!("'{}' using 1:{col} with lines title '{label}'", series.data_file))
            })
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    };
    if fig.columns.len() > 1 {
        let _ = writeln!(s, "set multiplot layout {},1 title '{}'", fig.columns.len(), fig.title);
        for &family in fig.columns {
            let _ = writeln!(s, "set title '{family}'");
            plot(&mut s, &|label: &str| label.ends_with(&format!(" {family}")));
        }
        let _ = writeln!(s, "unset multiplot");
    } else {
        let _ = writeln!(s, "set title '{}'", fig.title);
        plot(&mut s, &|_: &str| true);
    }
    s
}

/// One data file per log and figure plus one gnuplot script per figure
/// overlaying every log. No logs, no output.
pub fn emit(logs: &[PathBuf], out_dir: &Path) -> Result<(), Failure> {
    if logs.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(out_dir)?;
    let split = logs
        .iter()
        .map(|log| split_log(log, out_dir))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, fig) in FIGURES.iter().enumerate() {
        let per_log: Vec<&Series> = split.iter().map(|s| &s[i]).collect();
        let path = out_dir.join(format!("{}.gp", fig.name));
        fs::write(&path, script(fig, &per_log))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
