use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kmsprod_cli::config::{parse_assignments, Command, ConfigError, RunConfig};
use kmsprod_cli::run::{self, RunError};

/// Statistics of the product of two independent kappa-mu shadowed variables.
///
/// Links 1 and 2 form the cascade; link 3 is the source-relay hop of
/// `op-relay`. Parameters may also be given as trailing `key=value` pairs
/// (kappa1=5 mu1=1.2 m1=0.5 ...) or in a `--config` file of such pairs.
/// Exit status: 0 success, 2 invalid configuration, 3 numerical failure,
/// 4 validation failure.
#[derive(Debug, Parser)]
#[command(name = "kmsprod", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    m1: Option<f64>,
    #[arg(long)]
    gbar1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    m2: Option<f64>,
    #[arg(long)]
    gbar2: Option<f64>,
    #[arg(long)]
    k3: Option<f64>,
    #[arg(long)]
    mu3: Option<f64>,
    #[arg(long)]
    m3: Option<f64>,
    #[arg(long)]
    gbar3: Option<f64>,

    /// min:max:points[:linear|log|dB]; dB only for op-cascade and op-relay
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_terms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo draws for the mc_value column (0 disables it)
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Moment orders for `moments`, comma separated
    #[arg(long)]
    n: Option<String>,
    /// Full-size Monte Carlo in `validate`
    #[arg(long)]
    full: bool,
    /// CSV output path; the manifest goes next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of key=value pairs, overridden by the other arguments
    #[arg(long)]
    config: Option<PathBuf>,

    params: Vec<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let num = |v: Option<f64>| v.map(|x| x.to_string());
        for (i, (k, mu, mm, g)) in [
            (self.k1, self.mu1, self.m1, self.gbar1),
            (self.k2, self.mu2, self.m2, self.gbar2),
            (self.k3, self.mu3, self.m3, self.gbar3),
        ]
        .into_iter()
        .enumerate()
        {
            let i = i + 1;
            put(&format!("kappa{i}"), num(k));
            put(&format!("mu{i}"), num(mu));
            put(&format!("m{i}"), num(mm));
            put(&format!("gbar{i}"), num(g));
        }
        put("grid", self.grid.clone());
        put("rel_tol", num(self.rel_tol));
        put("max_terms", self.max_terms.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("mc_samples", self.mc_samples.map(|x| x.to_string()));
        put("n", self.n.clone());
        put("full", self.full.then(|| "true".to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        m
    }

    fn config(&self) -> Result<RunConfig, RunError> {
        let mut sources = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid {
                key: "config".into(),
                message: format!("{}: {e}", path.display()),
            })?;
            sources.push(parse_assignments(&text)?);
        }
        sources.push(parse_assignments(&self.params.join(" "))?);
        sources.push(self.flags());
        Ok(RunConfig::from_map(self.command, &run::merge(sources))?)
    }
}

fn threads() {
    if let Some(n) = std::env::var("KMS_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    threads();
    let result = cli.config().and_then(|cfg| {
        let out = run::run(&cfg)?;
        run::write_outputs(&cfg, &out)?;
        if let Some(reports) = &out.validation {
            for r in reports {
                eprintln!("{}", r.line());
            }
        }
        Ok(out.validation_failed())
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(4),
        Err(e) => {
            eprintln!("kmsprod: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
