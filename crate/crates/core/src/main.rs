use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use phenokit::completeness::CompletenessMode;
use phenokit::ingest::{parse_scan_log, HashConfig, ParsedLog};
use phenokit::model::StudySchedule;
use phenokit::report::{self, Groups, ReportOptions};
use phenokit::social::parse_tz_offset;
use phenokit::stats::{self, RepeatedMeasures, SphericityCorrection};
use phenokit::synth::{self, ClusterPlan, SynthConfig, DEFAULT_START};

#[derive(Parser)]
#[command(name = "phenokit", version, about = "Passive-sensing scan log analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scan log and write it back with hashed device ids.
    Ingest(Common),
    /// Collected vs scheduled scans per participant.
    Completeness(Analysis),
    /// Known and unknown Bluetooth devices by hour of day.
    Social(Analysis),
    /// Location clusters and weekly circadian movement.
    Mobility(Analysis),
    /// Discharge rates and the fitted battery model.
    Battery(Analysis),
    /// Reliability and hypothesis tests on a CSV table.
    Stats(StatsArgs),
    /// Generate a synthetic scan log and ground-truth manifest.
    Synth(SynthArgs),
    /// Every analysis in one JSON document.
    Report(Analysis),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Clusters,
    Cm,
    Observations,
    Lives,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Test {
    Alpha,
    Anova,
    Paired,
    Student,
    Welch,
}

#[derive(Args)]
struct Common {
    /// Scan log (JSONL); `-` reads stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Salt prepended to MAC addresses before hashing.
    #[arg(long)]
    salt: Option<String>,
    /// Keep sightings whose class of device is not a phone.
    #[arg(long)]
    keep_non_phones: bool,
    /// Drop invalid lines instead of failing.
    #[arg(long)]
    skip_invalid: bool,
}

#[derive(Args)]
struct Analysis {
    #[command(flatten)]
    common: Common,
    /// Study schedule (JSON); the four-week 8/5/4/3-minute design when absent.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value = "+10:00", allow_hyphen_values = true)]
    tz_offset: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Seed for K-means initialisation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Count scan cycles instead of averaging Bluetooth and GPS.
    #[arg(long)]
    scan_cycles: bool,
    /// Circadian movement from stationary fixes only.
    #[arg(long)]
    stationary_only: bool,
    /// CSV table for `mobility` or `battery`.
    #[arg(long, value_enum)]
    table: Option<Table>,
}

#[derive(Args)]
struct StatsArgs {
    /// CSV with a header row; one column per condition, empty cells missing.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    test: Test,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scan log output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth manifest output.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    participants: usize,
    /// Same cluster count for everyone; 4-12 at random when absent.
    #[arg(long)]
    clusters: Option<usize>,
    /// Study schedule (JSON); the four-week 8/5/4/3-minute design when absent.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value = "+10:00", allow_hyphen_values = true)]
    tz_offset: String,
    #[arg(long, default_value_t = 0.55)]
    delivery_android: f64,
    #[arg(long, default_value_t = 0.45)]
    delivery_ios: f64,
    /// Amplitude of the sinusoidal daily drift, meters.
    #[arg(long, default_value_t = 0.0)]
    routine_amplitude_m: f64,
}

enum Failure {
    Usage(String),
    Data(Vec<String>),
}

impl Failure {
    fn data(msg: impl Into<String>) -> Self {
        Failure::Data(vec![msg.into()])
    }
}

type CliResult<T> = Result<T, Failure>;

fn open_input(input: &str) -> CliResult<Box<dyn BufRead>> {
    if input == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    File::open(input)
        .map(|f| Box::new(BufReader::new(f)) as Box<dyn BufRead>)
        .map_err(|e| Failure::data(format!("{input}: {e}")))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::data(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::data(format!("stdout: {e}"))),
    }
}

fn hash_config(salt: Option<&str>) -> CliResult<HashConfig> {
    match salt {
        Some(s) => HashConfig::salted(s.as_bytes()).map_err(|e| Failure::Usage(format!("--salt: {e}"))),
        None => Ok(HashConfig::unsalted()),
    }
}

fn read_log(c: &Common) -> CliResult<ParsedLog> {
    let cfg = hash_config(c.salt.as_deref())?;
    let reader = open_input(&c.input)?;
    parse_scan_log(reader, &cfg, !c.keep_non_phones).map_err(|e| Failure::data(format!("{}: {e}", c.input)))
}

/// Reports bad lines; fails unless they are to be skipped.
fn check_lines(log: &ParsedLog, c: &Common) -> CliResult<()> {
    if log.errors.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = log.errors.iter().map(|e| format!("{}: {e}", c.input)).collect();
    if c.skip_invalid {
        for l in &lines {
            eprintln!("warning: {l}");
        }
        Ok(())
    } else {
        Err(Failure::Data(lines))
    }
}

fn load_schedule(path: Option<&Path>) -> CliResult<StudySchedule> {
    let Some(p) = path else {
        return Ok(StudySchedule::four_week(DEFAULT_START));
    };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))
}

fn ingest(c: &Common) -> CliResult<()> {
    let log = read_log(c)?;
    let mut out = String::new();
    for e in &log.events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    write_output(c.out.as_deref(), &out)?;
    check_lines(&log, c)
}

fn json<T: Serialize>(v: &T) -> String {
    report::to_stable_json(v)
}

fn csv_only_for(cmd: &str, a: &Analysis) -> CliResult<()> {
    if a.table.is_some() && a.format != Format::Csv {
        return Err(Failure::Usage(format!("{cmd}: --table requires --format csv")));
    }
    Ok(())
}

fn analysis(cmd: &str, a: &Analysis) -> CliResult<()> {
    csv_only_for(cmd, a)?;
    let tz = parse_tz_offset(&a.tz_offset).map_err(|e| Failure::Usage(format!("--tz-offset: {e}")))?;
    let schedule = load_schedule(a.schedule.as_deref())?;
    if schedule.is_empty() {
        return Err(Failure::data("schedule has no weeks"));
    }
    let log = read_log(&a.common)?;
    check_lines(&log, &a.common)?;

    let mut opts = ReportOptions::new(schedule, tz);
    opts.cluster.seed = a.seed;
    opts.cm_stationary_only = a.stationary_only;
    if a.scan_cycles {
        opts.completeness_mode = CompletenessMode::ScanCycles;
    }
    let groups: Groups = report::group_by_participant(&log.events);
    let csv = a.format == Format::Csv;
    let bad_table = |t: Table| {
        let name = t.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        Failure::Usage(format!("{cmd}: no {name} table"))
    };

    let text = match cmd {
        "completeness" => {
            let s = report::completeness_section(&groups, &opts);
            if csv {
                report::completeness_csv(&s.rows)
            } else {
                json(&s)
            }
        }
        "social" => {
            let s = report::social_section(&groups, &opts);
            if csv {
                report::social_csv(&s.hours)
            } else {
                json(&s)
            }
        }
        "mobility" => {
            let s = report::mobility_section(&groups, &opts);
            match (csv, a.table) {
                (false, _) => json(&s),
                (true, None | Some(Table::Clusters)) => report::clusters_csv(&s.participants),
                (true, Some(Table::Cm)) => report::cm_csv(&s.participants),
                (true, Some(t)) => return Err(bad_table(t)),
            }
        }
        "battery" => {
            let s = report::battery_section(&groups, &opts);
            match (csv, a.table) {
                (false, _) => json(&s),
                (true, None | Some(Table::Observations)) => report::battery_csv(&s),
                (true, Some(Table::Lives)) => report::battery_lives_csv(&s),
                (true, Some(t)) => return Err(bad_table(t)),
            }
        }
        _ => {
            if csv {
                return Err(Failure::Usage("report: only --format json is supported".into()));
            }
            let r = report::build_report(&log.events, &opts).map_err(|e| Failure::data(e.to_string()))?;
            json(&r)
        }
    };
    write_output(a.common.out.as_deref(), &text)
}

type CsvTable = (Vec<String>, Vec<Vec<Option<f64>>>);

fn read_table(input: &str) -> CliResult<CsvTable> {
    let mut text = String::new();
    open_input(input)?
        .read_to_string(&mut text)
        .map_err(|e| Failure::data(format!("{input}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Failure::data(format!("{input}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Failure::data(format!("{input}: line {line}: {e}")))?;
        let row = (0..header.len())
            .map(|j| {
                let cell = rec.get(j).unwrap_or("").trim();
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| Failure::data(format!("{input}: line {line}: not a number: {cell:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn stats_cmd(a: &StatsArgs) -> CliResult<()> {
    let (header, rows) = read_table(&a.input)?;
    let need_two = || -> CliResult<()> {
        if header.len() < 2 {
            return Err(Failure::data(format!("{}: need at least two columns", a.input)));
        }
        Ok(())
    };
    let data_err = |e: phenokit::Error| Failure::data(e.to_string());
    let text = match a.test {
        Test::Alpha => {
            let m = RepeatedMeasures::from_incomplete(&rows).map_err(data_err)?;
            json(&stats::cronbach_alpha(&m, Some(0.95)).map_err(data_err)?)
        }
        Test::Anova => {
            let m = RepeatedMeasures::from_incomplete(&rows).map_err(data_err)?;
            json(&stats::rm_anova(&m, SphericityCorrection::GreenhouseGeisser).map_err(data_err)?)
        }
        Test::Paired => {
            need_two()?;
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((r[0]?, r[1]?)))
                .unzip();
            json(&stats::paired_t(&x, &y).map_err(data_err)?)
        }
        Test::Student | Test::Welch => {
            need_two()?;
            let col = |j: usize| rows.iter().filter_map(|r| r[j]).collect::<Vec<f64>>();
            json(&stats::two_sample_t(&col(0), &col(1), a.test == Test::Welch).map_err(data_err)?)
        }
    };
    write_output(a.out.as_deref(), &text)
}

fn synth_cmd(a: &SynthArgs) -> CliResult<()> {
    let tz = parse_tz_offset(&a.tz_offset).map_err(|e| Failure::Usage(format!("--tz-offset: {e}")))?;
    let mut cfg = SynthConfig {
        seed: a.seed,
        n_participants: a.participants,
        schedule: load_schedule(a.schedule.as_deref())?,
        tz,
        delivery_android: a.delivery_android,
        delivery_ios: a.delivery_ios,
        routine_amplitude_m: a.routine_amplitude_m,
        ..Default::default()
    };
    if let Some(k) = a.clusters {
        cfg.clusters = ClusterPlan::Fixed(k);
    }
    let out = synth::generate(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(a.out.as_deref(), &out.log)?;
    if let Some(p) = &a.manifest {
        write_output(Some(p), &json(&out.manifest))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Ingest(c) => ingest(c),
        Command::Completeness(a) => analysis("completeness", a),
        Command::Social(a) => analysis("social", a),
        Command::Mobility(a) => analysis("mobility", a),
        Command::Battery(a) => analysis("battery", a),
        Command::Report(a) => analysis("report", a),
        Command::Stats(a) => stats_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(lines)) => {
            for l in lines {
                eprintln!("error: {l}");
            }
            ExitCode::from(2)
        }
    }
}
