use std::fmt::Write as _;
use std::path::Path;

use dialeval::analytics::{
    FAILURE_EXAMPLES_TABLE, FAILURE_TABLE, LENGTH_BIAS_TABLE, LOO_TABLE, SCATTER_TABLE,
    SWEEP_TABLE, SYSTEM_MEANS_TABLE, SYSTEM_TABLE, UTTERANCE_TABLE,
};

use crate::config::RunConfig;
use crate::output::{Inputs, RunDir};
use crate::CliError;

pub const REPORT_FILE: &str = "report.txt";

/// Tables `eval` always writes.
const REQUIRED: [&str; 5] = [
    UTTERANCE_TABLE,
    SYSTEM_TABLE,
    SYSTEM_MEANS_TABLE,
    LENGTH_BIAS_TABLE,
    SCATTER_TABLE,
];

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(text: &str, name: &str) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let bad = |e: csv::Error| CliError::Data(format!("{name}: {e}"));
        let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(bad)?;
        Ok(Csv { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("table lacks column `{name}`")))
    }
}

fn num(s: &str) -> String {
    // counts stay integers
    if s.parse::<u64>().is_ok() {
        return s.to_string();
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => "n/a".into(),
        Ok(v) => format!("{v:.4}"),
        Err(_) => s.to_string(),
    }
}

/// `coefficient (p-value)`.
fn with_p(c: &str, p: &str) -> String {
    if c.is_empty() {
        return "-".into();
    }
    format!("{} ({})", num(c), num(p))
}

fn render(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header));
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", line(&rule));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
}

fn heading(out: &mut String, title: &str) {
    let _ = writeln!(out, "\n{title}\n{}", "=".repeat(title.chars().count()));
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn utterance_section(out: &mut String, t: &Csv) -> Result<(), CliError> {
    let (m, s, sp, p, pp, n) = (
        t.col("metric")?,
        t.col("spearman")?,
        t.col("spearman_p")?,
        t.col("pearson")?,
        t.col("pearson_p")?,
        t.col("n")?,
    );
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r[m].clone(),
                with_p(&r[s], &r[sp]),
                with_p(&r[p], &r[pp]),
                r[n].clone(),
            ]
        })
        .collect();
    render(out, &strings(&["metric", "spearman (p)", "pearson (p)", "n"]), &rows);
    Ok(())
}

fn system_section(out: &mut String, t: &Csv) -> Result<(), CliError> {
    let (m, p, pp, n) = (
        t.col("metric")?,
        t.col("pearson")?,
        t.col("p_value")?,
        t.col("n_models")?,
    );
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| vec![r[m].clone(), with_p(&r[p], &r[pp]), r[n].clone()])
        .collect();
    render(out, &strings(&["metric", "pearson (p)", "models"]), &rows);
    Ok(())
}

fn plain_section(out: &mut String, t: &Csv) {
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| r.iter().map(|c| num(c)).collect())
        .collect();
    render(out, &t.header, &rows);
}

fn loo_section(out: &mut String, t: &Csv) -> Result<(), CliError> {
    let c = |n: &str| t.col(n);
    let idx = [
        c("full_spearman")?,
        c("full_spearman_p")?,
        c("full_pearson")?,
        c("full_pearson_p")?,
        c("held_out_spearman")?,
        c("held_out_spearman_p")?,
        c("held_out_pearson")?,
        c("held_out_pearson_p")?,
    ];
    let (h, n) = (c("held_out")?, c("n_train")?);
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r[h].clone(),
                r[n].clone(),
                with_p(&r[idx[0]], &r[idx[1]]),
                with_p(&r[idx[2]], &r[idx[3]]),
                with_p(&r[idx[4]], &r[idx[5]]),
                with_p(&r[idx[6]], &r[idx[7]]),
            ]
        })
        .collect();
    render(
        out,
        &strings(&[
            "held out",
            "n_train",
            "test spearman (p)",
            "test pearson (p)",
            "held-out spearman (p)",
            "held-out pearson (p)",
        ]),
        &rows,
    );
    Ok(())
}

fn sweep_section(out: &mut String, t: &Csv) -> Result<(), CliError> {
    let (f, nc, nt, s, sp, p, pp) = (
        t.col("fraction")?,
        t.col("n_contexts")?,
        t.col("n_train")?,
        t.col("spearman")?,
        t.col("spearman_p")?,
        t.col("pearson")?,
        t.col("pearson_p")?,
    );
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r[f].clone(),
                r[nc].clone(),
                r[nt].clone(),
                with_p(&r[s], &r[sp]),
                with_p(&r[p], &r[pp]),
            ]
        })
        .collect();
    render(
        out,
        &strings(&["fraction", "contexts", "n_train", "test spearman (p)", "test pearson (p)"]),
        &rows,
    );
    Ok(())
}

fn read_optional(
    inputs: &mut Inputs,
    path: &Path,
) -> Result<Option<String>, CliError> {
    if path.is_file() {
        inputs.read_text(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn report(
    cfg: &RunConfig,
    toml: &str,
    results: &Path,
    sweep: Option<&Path>,
    timing: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let missing: Vec<&str> = REQUIRED
        .iter()
        .copied()
        .filter(|t| !results.join(t).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{} lacks evaluation tables: {}",
            results.display(),
            missing.join(", ")
        )));
    }
    let mut inputs = Inputs::default();
    let load = |name: &str, inputs: &mut Inputs| -> Result<Csv, CliError> {
        Csv::parse(&inputs.read_text(&results.join(name))?, name)
    };
    let utt = load(UTTERANCE_TABLE, &mut inputs)?;
    let sys = load(SYSTEM_TABLE, &mut inputs)?;
    let means = load(SYSTEM_MEANS_TABLE, &mut inputs)?;
    let bias = load(LENGTH_BIAS_TABLE, &mut inputs)?;
    let scatter = load(SCATTER_TABLE, &mut inputs)?;

    let mut text = String::from("Dialogue response evaluation report\n");
    let _ = writeln!(text, "results: {}", results.display());

    heading(&mut text, "Utterance-level correlation with human scores");
    utterance_section(&mut text, &utt)?;
    heading(&mut text, "System-level correlation");
    system_section(&mut text, &sys)?;
    heading(&mut text, "Per-system means");
    plain_section(&mut text, &means);
    heading(&mut text, "Length bias by word-count difference");
    plain_section(&mut text, &bias);

    heading(&mut text, "Failure analysis");
    match read_optional(&mut inputs, &results.join(FAILURE_TABLE))? {
        Some(t) => plain_section(&mut text, &Csv::parse(&t, FAILURE_TABLE)?),
        None => text.push_str("absent (needs the overlap and ADEM score columns)\n"),
    }
    if let Some(t) = read_optional(&mut inputs, &results.join(FAILURE_EXAMPLES_TABLE))? {
        let rows = Csv::parse(&t, FAILURE_EXAMPLES_TABLE)?.rows.len();
        let _ = writeln!(text, "{rows} flagged examples listed in {FAILURE_EXAMPLES_TABLE}");
    }
    let _ = writeln!(
        text,
        "\n{} scatter points in {SCATTER_TABLE}",
        scatter.rows.len()
    );

    if let Some(dir) = sweep {
        heading(&mut text, "Data efficiency");
        match read_optional(&mut inputs, &dir.join(SWEEP_TABLE))? {
            Some(t) => sweep_section(&mut text, &Csv::parse(&t, SWEEP_TABLE)?)?,
            None => text.push_str("absent\n"),
        }
        heading(&mut text, "Leave-one-out generalization");
        match read_optional(&mut inputs, &dir.join(LOO_TABLE))? {
            Some(t) => loo_section(&mut text, &Csv::parse(&t, LOO_TABLE)?)?,
            None => text.push_str("absent\n"),
        }
    }

    heading(&mut text, "Scoring time");
    match timing {
        Some(p) => {
            let raw = inputs.read_text(p)?;
            let j: serde_json::Value = serde_json::from_str(&raw)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let secs = |k: &str| {
                j[k].as_f64()
                    .map_or_else(|| "not measured".to_string(), |s| format!("{s:.3} s"))
            };
            let _ = writeln!(
                text,
                "{} examples of the {} split",
                j["examples"].as_u64().unwrap_or(0),
                j["split"].as_str().unwrap_or("?")
            );
            let _ = writeln!(text, "word-overlap metrics: {}", secs("overlap_seconds"));
            let _ = writeln!(text, "ADEM: {}", secs("adem_seconds"));
        }
        None => text.push_str("not recorded (run `score --timing` and pass --timing)\n"),
    }

    let mut dir = RunDir::create(out)?;
    dir.write(REPORT_FILE, text.as_bytes())?;
    dir.finish("report", cfg.run.seed, toml, &inputs)
}
