use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use ofw_core::firewall::FilterConfig;
use ofw_core::sharing::{reveal, store, Share};

fn ofw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ofw"))
}

fn run(args: &[&str]) -> Output {
    ofw().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn blacklist(dir: &Path, n: usize) -> PathBuf {
    let p = dir.join("blacklist.txt");
    let mut s = String::from("# test list\n");
    for i in 0..n {
        s.push_str(&format!("10.{}.{}.{}\n", i / 65536, (i / 256) % 256, i % 256));
    }
    std::fs::write(&p, s).unwrap();
    p
}

fn init(dir: &Path, list: &Path, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec!["init", "--blacklist", list.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn load_all(out: &Path, m: usize) -> (FilterConfig, Vec<ofw_core::sharing::ShareVector>) {
    let cfg = FilterConfig::from_json(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let vs = (1..=m)
        .map(|i| store::load(&out.join(format!("party{i}.shares"))).unwrap())
        .collect();
    (cfg, vs)
}

#[test]
fn init_writes_one_file_per_party() {
    let dir = tempfile::tempdir().unwrap();
    let list = blacklist(dir.path(), 100);
    let o = init(dir.path(), &list, &["-m", "3", "-t", "2", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let (cfg, vs) = load_all(&out, 3);
    assert_eq!(vs.len(), 3);
    assert!(!out.join("party4.shares").exists());
    for (i, v) in vs.iter().enumerate() {
        assert_eq!(v.party() as usize, i + 1);
        assert_eq!(v.len() as u64, cfg.bloom.beta);
    }
    let digest = std::fs::read_to_string(out.join("digest")).unwrap();
    assert_eq!(digest.trim(), hex::encode(cfg.digest()));
    assert!(text(&o).contains(&format!("digest {}", digest.trim())));
    // same seed, same files
    let again = tempfile::tempdir().unwrap();
    let list2 = blacklist(again.path(), 100);
    assert!(init(again.path(), &list2, &["-m", "3", "-t", "2", "--seed", "1"]).status.success());
    for i in 1..=3 {
        let f = format!("party{i}.shares");
        assert_eq!(
            std::fs::read(out.join(&f)).unwrap(),
            std::fs::read(again.path().join("out").join(&f)).unwrap()
        );
    }
}

#[test]
fn empty_blacklist_shares_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let list = blacklist(dir.path(), 0);
    let o = init(dir.path(), &list, &["--seed", "2", "--eta", "20"]);
    assert!(o.status.success());
    let (cfg, vs) = load_all(&dir.path().join("out"), 3);
    for j in 0..cfg.bloom.beta as usize {
        let sh: Vec<Share> = vs.iter().map(|v| v.share(j)).collect();
        assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), 0);
    }
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let list = blacklist(dir.path(), 10);
    // κ = 10 does not fit below N = 7
    let o = init(dir.path(), &list, &["--modulus", "7", "--fp", "0.001"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("κ"));
    let o = init(dir.path(), &list, &["-m", "3", "-t", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["init", "--blacklist", "/nonexistent/list", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&list, "not-an-address\n").unwrap();
    assert_eq!(init(dir.path(), &list, &[]).status.code(), Some(2));
}

fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

struct Procs(Vec<Child>);

impl Drop for Procs {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn wait_listening(ep: &str) {
    let start = Instant::now();
    while std::net::TcpStream::connect(ep).is_err() {
        assert!(start.elapsed() < Duration::from_secs(10), "{ep} never came up");
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn start_servers(out: &Path, m: usize, token: &str) -> (Procs, Vec<String>) {
    let eps: Vec<String> = (0..m).map(|_| free_port()).collect();
    let peers = eps.join(",");
    let procs = eps
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            ofw()
                .args(["serve", "--shares"])
                .arg(out.join(format!("party{}.shares", i + 1)))
                .args(["--listen", ep, "--peers", &peers, "--admin-token", token])
                .stderr(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    for ep in &eps {
        wait_listening(ep);
    }
    (Procs(procs), eps)
}

#[test]
fn serve_query_insert_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let list = blacklist(dir.path(), 30);
    assert!(init(dir.path(), &list, &["--seed", "3"]).status.success());
    let out = dir.path().join("out");
    let (_servers, eps) = start_servers(&out, 3, "tok");
    let servers = eps.join(",");
    let filter = out.join("config.json");
    let f = filter.to_str().unwrap();

    let o = run(&["query", "10.0.0.5", "--servers", &servers, "--filter", f]);
    assert_eq!((text(&o).trim(), o.status.code()), ("BLOCK", Some(0)));
    let o = run(&["query", "172.16.9.9", "--servers", &servers, "--filter", f, "--protocol", "product"]);
    assert_eq!((text(&o).trim(), o.status.code()), ("FORWARD", Some(0)));

    let o = run(&["insert", "172.16.9.9", "--servers", &servers, "--token", "nope"]);
    assert_ne!(o.status.code(), Some(0));
    let o = run(&["insert", "172.16.9.9", "--servers", &servers, "--token", "tok"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["query", "172.16.9.9", "--servers", &servers, "--filter", f]);
    assert_eq!(text(&o).trim(), "BLOCK");
    // the insert reached the share files
    let (cfg, vs) = load_all(&out, 3);
    for j in ofw_core::bloom::indices(u32::from(std::net::Ipv4Addr::new(172, 16, 9, 9)), &cfg.bloom) {
        let sh: Vec<Share> = vs.iter().map(|v| v.share(j)).collect();
        assert_eq!(reveal(&sh, &cfg.scheme).unwrap().value(), 1);
    }

    let gw = free_port();
    let _gateway = Procs(vec![ofw()
        .args(["gateway", "--filter", f, "--servers", &servers, "--listen", &gw])
        .stderr(Stdio::null())
        .spawn()
        .unwrap()]);
    wait_listening(&gw);
    let o = run(&["query", "10.0.0.7", "--gateway", &gw]);
    assert_eq!((text(&o).trim(), o.status.code()), ("BLOCK", Some(0)));
    let o = run(&["query", "10.0.0.7", "--gateway", &gw, "--json"]);
    assert!(text(&o).contains("\"decision\":\"block\""));
}

#[test]
fn unreachable_servers_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let list = blacklist(dir.path(), 5);
    assert!(init(dir.path(), &list, &["--seed", "4"]).status.success());
    let f = dir.path().join("out/config.json");
    let o = run(&[
        "query",
        "10.0.0.1",
        "--servers",
        "127.0.0.1:1,127.0.0.1:2,127.0.0.1:3",
        "--filter",
        f.to_str().unwrap(),
        "--window-ms",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["query", "10.0.0.1", "--gateway", "127.0.0.1:1"]);
    assert_eq!(o.status.code(), Some(3));
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn simulate_worked_case() {
    let dir = tempfile::tempdir().unwrap();
    let tr = dir.path().join("t.jsonl");
    let sc = scenario("seven_servers_one_liar.toml");
    let o = ofw().arg("simulate").arg(&sc).arg("--transcript").arg(&tr).output().unwrap();
    assert!(o.status.success());
    let s = text(&o);
    assert!(s.contains("35 combinations, suspect: P_5"), "{s}");
    let lines = std::fs::read_to_string(&tr).unwrap();
    assert!(lines.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    let again = ofw().arg("simulate").arg(&sc).output().unwrap();
    assert_eq!(text(&again), s);
}

#[test]
fn every_shipped_scenario_runs() {
    for e in std::fs::read_dir(scenario("")).unwrap() {
        let p = e.unwrap().path();
        let o = ofw().arg("simulate").arg(&p).output().unwrap();
        assert!(o.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bench_emits_csv() {
    let o = run(&["bench", "--sweep", "sum-kappa", "--values", "1,20", "--queries", "200"]);
    assert!(o.status.success());
    let s = text(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("sweep,beta,kappa,m,runtime_ns,bytes,rounds"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][..4], ["sum-kappa", "10000", "20", "20"]);
    // 20 × (32 + 31) bits
    assert_eq!(rows[1][5], "158");
    for (sweep, value, fixed) in [
        ("init-beta", "1000", "3"),
        ("init-m", "3", "1000"),
        ("sum-m", "3", "5"),
        ("product-kappa", "3", "5"),
        ("product-m", "3", "5"),
    ] {
        let o = run(&["bench", "--sweep", sweep, "--values", value, "--queries", "5", "--fixed", fixed]);
        assert!(o.status.success(), "{sweep}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(text(&o).lines().count(), 2);
    }
}
