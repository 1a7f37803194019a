use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wildtag::error::{BlockError, LogError, MediaError, PipelineError, SimError, StoreError};
use wildtag::lifespan::{self, Battery, EnergyParams};
use wildtag::log::{item_type, iterate_items, BootMarker, SectorHeader, Validity};
use wildtag::media::{Media, MediaGeometry};
use wildtag::pipeline::{self, ExtractOptions, ItemStore};
use wildtag::sim;
use wildtag::station::{decode_records, records_from_sd};
use wildtag::tagdef::{self, SensorKind};

/// Exit codes: 0 ok, 1 validation, 2 I/O, 3 format or corruption.
enum Failure {
    Validation(String),
    Io(String),
    Format(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
            Failure::Format(_) => 3,
        }
    }

    fn at(self, p: &Path) -> Self {
        let m = format!("{}: {}", p.display(), self.message());
        match self {
            Failure::Validation(_) => Failure::Validation(m),
            Failure::Io(_) => Failure::Io(m),
            Failure::Format(_) => Failure::Format(m),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) | Failure::Format(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<wildtag::error::DefError> for Failure {
    fn from(e: wildtag::error::DefError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<MediaError> for Failure {
    fn from(e: MediaError) -> Self {
        match e {
            MediaError::Io(e) => e.into(),
            e => Failure::Format(e.to_string()),
        }
    }
}

impl From<LogError> for Failure {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Media(e) => e.into(),
            e => Failure::Format(e.to_string()),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(e) => e.into(),
            StoreError::Log(e) => e.into(),
            e => Failure::Format(e.to_string()),
        }
    }
}

impl From<BlockError> for Failure {
    fn from(e: BlockError) -> Self {
        Failure::Format(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(_) | SimError::Validation(_) => Failure::Validation(e.to_string()),
            SimError::Io(e) => e.into(),
            SimError::Log(e) => e.into(),
            SimError::Store(e) => e.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Store(e) => e.into(),
            e => Failure::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "wildtag", version, about = "Radio-tag definitions, simulation and data pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a tag definition into a binary config block.
    Compile {
        definition: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the definition text of a config block.
    Decompile {
        block: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a scenario and write the trace, tag images and station stores.
    Simulate {
        scenario: PathBuf,
        #[arg(short = 'o', long = "out")]
        out_dir: PathBuf,
        /// Also print the trace.
        #[arg(long)]
        trace: bool,
    },
    /// List the items of a tag log image.
    DecodeLog {
        image: PathBuf,
        #[arg(long, default_value_t = 256)]
        page_size: usize,
        #[arg(long, default_value_t = 4096)]
        sector_size: usize,
    },
    /// Merge station stores (.rec, .sd) and tag images (.img) into an item store.
    Ingest {
        store: PathBuf,
        inputs: Vec<PathBuf>,
    },
    /// Export a sensor series or the session report from an item store.
    Extract {
        store: PathBuf,
        #[arg(long)]
        tag: u64,
        /// pressure-temperature or acceleration; omit for the session report.
        #[arg(long)]
        sensor: Option<String>,
        /// Definition used when a session lacks sensor-configuration items.
        #[arg(long)]
        definition: Option<PathBuf>,
        /// Adds altitude relative to this reference pressure (Pa).
        #[arg(long)]
        altitude_p0: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Estimate battery life for a definition or a plain pinger.
    Lifespan {
        definition: Option<PathBuf>,
        /// Pinger period in ms instead of a definition.
        #[arg(long, conflicts_with = "definition")]
        pinger_ms: Option<u32>,
        #[arg(long, default_value = "CR2032")]
        battery: String,
        /// Capacity in mAh for a battery not in the table.
        #[arg(long)]
        capacity_mah: Option<f64>,
    },
}

fn read_text(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
}

fn read_bytes(p: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
}

fn emit(output: Option<&Path>, text: &str, out: &mut String) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            out.push_str(text);
            Ok(())
        }
    }
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn decode_log(image: &Path, page_size: usize, sector_size: usize, out: &mut String) -> Result<(), Failure> {
    let len = read_bytes(image)?.len();
    if sector_size == 0 || len % sector_size != 0 {
        return Err(Failure::Format(format!(
            "image size {len} is not a multiple of the sector size {sector_size}"
        )));
    }
    let g = MediaGeometry::new(page_size, sector_size, len / sector_size)?;
    let media = Media::load(g, image).map_err(|e| Failure::from(e).at(image))?;
    let (h, listing) = iterate_items(&media).map_err(|e| Failure::from(e).at(image))?;
    let _ = writeln!(
        out,
        "log tag={} creation={} version={} registry={}",
        h.tag_id, h.creation_time, h.format_version, h.registry_id
    );
    for e in &listing.entries {
        let detail = match e.item_type {
            item_type::SECTOR_HEADER => SectorHeader::from_payload(&e.payload)
                .map(|s| format!("sector seq={} ack={}", s.sector_seq, s.ack_cursor)),
            item_type::BOOT_MARKER => BootMarker::from_payload(&e.payload)
                .map(|b| format!("boot count={} firmware={:#06x}", b.boot_count, b.firmware_id)),
            _ => None,
        }
        .unwrap_or_else(|| hex(&e.payload));
        let flag = if e.validity == Validity::Suspect { " suspect" } else { "" };
        let _ = writeln!(out, "{:08} 0x{:02x} len={}{flag} {detail}", e.addr, e.item_type, e.payload.len());
    }
    for t in &listing.torn {
        let _ = writeln!(out, "{t:08} torn");
    }
    Ok(())
}

fn ingest(store_path: &Path, inputs: &[PathBuf], out: &mut String) -> Result<(), Failure> {
    let mut store = if store_path.exists() {
        ItemStore::load(store_path).map_err(|e| Failure::from(e).at(store_path))?
    } else {
        ItemStore::new()
    };
    for input in inputs {
        let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
        let rep = match ext {
            "rec" => store.ingest(decode_records(&read_bytes(input)?).map_err(|e| Failure::from(e).at(input))?),
            "sd" | "img" => {
                let len = read_bytes(input)?.len();
                let g = MediaGeometry::nor(len / 4096);
                let media = Media::load(g, input).map_err(|e| Failure::from(e).at(input))?;
                if ext == "sd" {
                    store.ingest(records_from_sd(&media).map_err(|e| Failure::from(e).at(input))?)
                } else {
                    store.ingest_image(&media).map_err(|e| Failure::from(e).at(input))?
                }
            }
            _ => {
                return Err(Failure::Validation(format!(
                    "{}: expected a .rec, .sd or .img file",
                    input.display()
                )))
            }
        };
        let _ = writeln!(
            out,
            "{}: inserted={} duplicates={} conflicts={}",
            input.display(),
            rep.inserted,
            rep.duplicates,
            rep.conflicts
        );
    }
    store.save(store_path)?;
    let _ = writeln!(out, "store holds {} items", store.len());
    Ok(())
}

fn run(cmd: Cmd, out: &mut String) -> Result<(), Failure> {
    match cmd {
        Cmd::Compile { definition, output } => {
            let def = tagdef::parse_tagdef(&read_text(&definition)?).map_err(|e| Failure::from(e).at(&definition))?;
            let block = tagdef::compile_config_block(&def);
            std::fs::write(&output, &block)?;
            let _ = writeln!(out, "{} bytes for tag {}", block.len(), def.tag_id);
        }
        Cmd::Decompile { block, output } => {
            let def = tagdef::decompile_config_block(&read_bytes(&block)?).map_err(|e| Failure::from(e).at(&block))?;
            emit(output.as_deref(), &def.to_text(), out)?;
        }
        Cmd::Simulate {
            scenario,
            out_dir,
            trace,
        } => {
            let sc = sim::parse_scenario(&read_text(&scenario)?, scenario.parent()).map_err(|e| Failure::from(e).at(&scenario))?;
            let outcome = sim::run(&sc)?;
            outcome.save(&out_dir)?;
            if trace {
                out.push_str(&outcome.trace_text());
            }
            for t in &outcome.tags {
                let c = t.log().cursor();
                let _ = writeln!(
                    out,
                    "tag {} config={} boots={} write={} ack={}",
                    t.tag_id(),
                    t.config(),
                    t.boot_count(),
                    c.write_addr,
                    c.ack_cursor
                );
            }
            for s in &outcome.stations {
                let _ = writeln!(out, "station {} records={}", s.id, s.store().len());
            }
        }
        Cmd::DecodeLog {
            image,
            page_size,
            sector_size,
        } => decode_log(&image, page_size, sector_size, out)?,
        Cmd::Ingest { store, inputs } => ingest(&store, &inputs, out)?,
        Cmd::Extract {
            store,
            tag,
            sensor,
            definition,
            altitude_p0,
            output,
        } => {
            let store = ItemStore::load(&store).map_err(|e| Failure::from(e).at(&store))?;
            let Some(sensor) = sensor else {
                let rep = pipeline::session_report(&store, tag, pipeline::DEFAULT_SECTOR_SIZE);
                return emit(output.as_deref(), &rep.to_text(), out);
            };
            let kind = SensorKind::parse(&sensor)
                .ok_or_else(|| Failure::Validation(format!("unknown sensor `{sensor}`")))?;
            let def = match &definition {
                Some(p) => Some(tagdef::parse_tagdef(&read_text(p)?).map_err(|e| Failure::from(e).at(p))?),
                None => None,
            };
            let opts = ExtractOptions {
                definition: def.as_ref(),
                ..Default::default()
            };
            let mut series = pipeline::extract_series(&store, tag, kind, &opts)?;
            if let Some(p0) = altitude_p0 {
                series = series.with_altitude(p0)?;
            }
            emit(output.as_deref(), &series.to_text(), out)?;
        }
        Cmd::Lifespan {
            definition,
            pinger_ms,
            battery,
            capacity_mah,
        } => {
            let def = match (definition, pinger_ms) {
                (Some(p), _) => tagdef::parse_tagdef(&read_text(&p)?).map_err(|e| Failure::from(e).at(&p))?,
                (None, Some(ms)) => lifespan::pinger_definition(ms),
                (None, None) => {
                    return Err(Failure::Validation(
                        "give a definition file or --pinger-ms".to_string(),
                    ))
                }
            };
            let bat = match capacity_mah {
                Some(c) => Battery::custom(c),
                None => lifespan::battery(&battery)
                    .ok_or_else(|| Failure::Validation(format!("unknown battery `{battery}`")))?,
            };
            let est = lifespan::estimate_lifespan(&def, &bat, &EnergyParams::default())
                .ok_or_else(|| Failure::Validation("estimate undefined for this input".to_string()))?;
            let _ = writeln!(
                out,
                "{} {:.1} mAh: {:.2} uA average, {:.1} days",
                bat.name, bat.capacity_mah, est.average_current_ua, est.days
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut out = String::new();
    let result = run(cli.cmd, &mut out);
    // a closed pipe downstream is not an error worth reporting
    let _ = std::io::stdout().write_all(out.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
