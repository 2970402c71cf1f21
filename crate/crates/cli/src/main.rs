//! `ofw`: operator tool for the oblivious distributed firewall.
//!
//! Exit codes: 0 success, 2 validation (bad flags, config or input),
//! 3 connectivity, 4 protocol failure or no trustworthy verdict.

mod bench;
mod settings;

use std::fs;
use std::net::{Ipv4Addr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ofw_core::bloom::parse_blacklist;
use ofw_core::detection::Decision;
use ofw_core::firewall::{firewall_init, FilterConfig, FirewallState, Verdict};
use ofw_core::sharing::store;
use ofw_core::transport::{self, GatewayClient, Scenario, ServerOptions};
use ofw_core::{rng, Error, ErrorClass};

use settings::{read_text, Overrides, Settings};

const EXIT_VALIDATION: u8 = 2;
const EXIT_CONNECTIVITY: u8 = 3;
const EXIT_PROTOCOL: u8 = 4;

#[derive(Parser)]
#[command(name = "ofw", version, about = "Oblivious distributed firewall over secret-shared Bloom filters")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Share a blacklist into one file per server (trusted setup)
    Init {
        /// One IPv4 address per line, '#' comments
        #[arg(long)]
        blacklist: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one server
    Serve {
        #[arg(long)]
        shares: PathBuf,
        /// config.json written by init; defaults to the one beside the share file
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        listen: String,
        /// All server endpoints in party order, comma separated
        #[arg(long, value_delimiter = ',')]
        peers: Vec<String>,
        /// Token required for inserts (or OFW_ADMIN_TOKEN)
        #[arg(long, env = "OFW_ADMIN_TOKEN")]
        admin_token: Option<String>,
    },
    /// Run the gateway service
    Gateway {
        #[arg(long)]
        filter: PathBuf,
        #[arg(long, value_delimiter = ',')]
        servers: Vec<String>,
        #[arg(long)]
        listen: String,
        /// Servers exchange results and vote
        #[arg(long)]
        collective: bool,
    },
    /// Ask whether an address is blocked
    Query {
        addr: Ipv4Addr,
        /// Ask a running gateway
        #[arg(long, conflicts_with = "servers")]
        gateway: Option<String>,
        /// Or act as the gateway against these servers
        #[arg(long, value_delimiter = ',', requires = "filter")]
        servers: Vec<String>,
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Print the full verdict as JSON
        #[arg(long)]
        json: bool,
    },
    /// Add an address on every server, all or nothing
    Insert {
        addr: Ipv4Addr,
        #[arg(long, value_delimiter = ',', required = true)]
        servers: Vec<String>,
        #[arg(long, env = "OFW_ADMIN_TOKEN")]
        token: String,
    },
    /// Run a scenario file through the network simulator
    Simulate {
        scenario: PathBuf,
        /// Write the JSON-lines transcript here
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Time the protocols and print CSV
    Bench {
        #[arg(long, value_enum)]
        sweep: bench::Sweep,
        /// Axis values, comma separated; a default range otherwise
        #[arg(long, value_delimiter = ',')]
        values: Vec<u64>,
        /// Value of the axis held constant
        #[arg(long)]
        fixed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()).map(Error::class) {
        Some(ErrorClass::Connectivity) => EXIT_CONNECTIVITY,
        Some(ErrorClass::Protocol) => EXIT_PROTOCOL,
        _ => EXIT_VALIDATION,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let s = Settings::load(&cli.overrides)?;
    match cli.cmd {
        Cmd::Init { blacklist, out } => init(&s, &blacklist, &out),
        Cmd::Serve {
            shares,
            filter,
            listen,
            peers,
            admin_token,
        } => serve(&s, &shares, filter, &listen, peers, admin_token),
        Cmd::Gateway {
            filter,
            servers,
            listen,
            collective,
        } => gateway(s, &filter, servers, &listen, collective),
        Cmd::Query {
            addr,
            gateway,
            servers,
            filter,
            json,
        } => query(s, addr, gateway, servers, filter, json),
        Cmd::Insert { addr, servers, token } => {
            transport::insert_remote(&servers, addr, &token, s.timing.window().max(Duration::from_secs(2)))?;
            println!("inserted {addr} on {} servers", servers.len());
            Ok(0)
        }
        Cmd::Simulate { scenario, transcript } => simulate(&cli.overrides, &scenario, transcript),
        Cmd::Bench {
            sweep,
            values,
            fixed,
            queries,
            out,
        } => {
            let spec = bench::BenchSpec {
                sweep,
                values,
                fixed,
                queries,
                seed: s.seed.unwrap_or(1),
                modulus: s.scheme.modulus.unwrap_or(ofw_core::modmath::DEFAULT_MODULUS),
            };
            let rows = bench::run(&spec)?;
            match out {
                Some(p) => {
                    let mut f = fs::File::create(&p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
                    bench::write_csv(&mut f, sweep, &rows)?;
                }
                None => bench::write_csv(&mut std::io::stdout().lock(), sweep, &rows)?,
            }
            Ok(0)
        }
    }
}

fn share_file(dir: &Path, party: usize) -> PathBuf {
    dir.join(format!("party{party}.shares"))
}

fn init(s: &Settings, blacklist: &Path, out: &Path) -> anyhow::Result<u8> {
    let keys = parse_blacklist(&read_text(blacklist)?)?;
    let config = s.filter_config(keys.len())?;
    let mut g = match s.seed {
        Some(seed) => rng::derive(seed, &[0x696e6974]),
        None => rng::from_entropy(),
    };
    let (states, digest) = firewall_init(&keys, &config, &mut g)?;
    fs::create_dir_all(out).map_err(|e| Error::Input(format!("{}: {e}", out.display())))?;
    fs::write(out.join("config.json"), config.to_json()).map_err(|e| Error::Input(e.to_string()))?;
    for st in &states {
        store::save(&share_file(out, st.party() as usize), st.shares())
            .map_err(|e| Error::Input(format!("writing shares: {e}")))?;
    }
    let hex = hex::encode(digest);
    fs::write(out.join("digest"), format!("{hex}\n")).map_err(|e| Error::Input(e.to_string()))?;
    println!(
        "{} addresses, beta = {}, kappa = {}, {} share files in {}",
        keys.len(),
        config.bloom.beta,
        config.bloom.kappa,
        states.len(),
        out.display()
    );
    println!("digest {hex}");
    Ok(0)
}

fn load_filter(path: &Path) -> anyhow::Result<FilterConfig> {
    Ok(FilterConfig::from_json(&read_text(path)?).with_context(|| path.display().to_string())?)
}

fn serve(
    s: &Settings,
    shares: &Path,
    filter: Option<PathBuf>,
    listen: &str,
    peers: Vec<String>,
    admin_token: Option<String>,
) -> anyhow::Result<u8> {
    let filter = filter.unwrap_or_else(|| shares.with_file_name("config.json"));
    let config = load_filter(&filter)?;
    let vector = store::load(shares).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("{}: {io}", shares.display())),
        other => other,
    })?;
    let state = FirewallState::new(config, vector)?;
    let listener = TcpListener::bind(listen).map_err(|e| Error::Connectivity(format!("{listen}: {e}")))?;
    let opts = ServerOptions {
        peers,
        admin_token,
        persist: Some(shares.to_path_buf()),
        timing: s.timing.clone(),
        seed: s.seed,
        ..Default::default()
    };
    let party = state.party();
    let handle = transport::run_server(state, listener, opts)?;
    eprintln!("P_{party} serving on {}", handle.addr());
    handle.wait();
    Ok(0)
}

fn gateway(mut s: Settings, filter: &Path, servers: Vec<String>, listen: &str, collective: bool) -> anyhow::Result<u8> {
    s.gateway.collective |= collective;
    let client = GatewayClient::new(servers, load_filter(filter)?, s.gateway, s.timing)?;
    match client.sync_config() {
        Ok(ps) => eprintln!("configuration confirmed by {ps:?}"),
        Err(e @ Error::Connectivity(_)) => log::warn!("{e}; serving anyway"),
        Err(e) => return Err(e.into()),
    }
    let listener = TcpListener::bind(listen).map_err(|e| Error::Connectivity(format!("{listen}: {e}")))?;
    eprintln!("gateway listening on {}", listener.local_addr()?);
    transport::run_gateway_service(Arc::new(client), listener)?;
    Ok(0)
}

fn report(v: &Verdict, json: bool) -> u8 {
    if json {
        println!("{}", serde_json::to_string(v).expect("verdict serializes"));
    } else {
        println!(
            "{}",
            match v.decision {
                Decision::Block => "BLOCK",
                Decision::Forward => "FORWARD",
            }
        );
        if v.malicious {
            eprintln!("tampering detected; suspects {:?}", v.suspects);
        }
    }
    if v.value.is_none() || v.fallback.is_some() {
        eprintln!("no trustworthy result from the servers; fail-policy applied");
        return EXIT_PROTOCOL;
    }
    0
}

fn query(
    s: Settings,
    addr: Ipv4Addr,
    gw: Option<String>,
    servers: Vec<String>,
    filter: Option<PathBuf>,
    json: bool,
) -> anyhow::Result<u8> {
    let v = match gw {
        Some(ep) => transport::query_gateway(&ep, addr, Duration::from_secs(10))?,
        None => {
            let filter = filter.ok_or_else(|| Error::Input("give --gateway, or --servers with --filter".into()))?;
            let client = GatewayClient::new(servers, load_filter(&filter)?, s.gateway, s.timing)?;
            client.query(addr)?
        }
    };
    Ok(report(&v, json))
}

fn simulate(o: &Overrides, path: &Path, transcript: Option<PathBuf>) -> anyhow::Result<u8> {
    let mut sc = Scenario::from_toml(&read_text(path)?)?;
    if let Some(seed) = o.seed {
        sc.seed = seed;
    }
    let r = transport::simulate(&sc)?;
    print!("{}", r.summary());
    println!("transcript sha256 {}", r.transcript_hash());
    if let Some(p) = transcript {
        fs::write(&p, r.transcript_text()).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(0)
}
