use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;
use uq::analysis::entropy_config;
use uq::backend::{load_model_spec, Backend};
use uq::jsonl::{self, read_all, Mode, Schema};
use uq::pipeline::{self, EvalOptions};
use uq::remote::{shared_classifier, OracleChoice, RemoteBackend, SharedClassifier};
use uq::service::{self, ServiceConfig};
use uq_core::{BenchmarkRecord, DecodingConfig, DecodingMethod, EntropyVariant, SampleSet};

#[derive(Parser)]
#[command(name = "uq", version, about = "Uncertainty quantification for generated answers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL file and print record and error counts
    Ingest {
        #[arg(long, value_enum)]
        schema: Schema,
        /// Stop at the first invalid line
        #[arg(long)]
        strict: bool,
        path: PathBuf,
    },
    /// Compute one uncertainty report per sample set
    Score {
        #[command(flatten)]
        entropy: EntropyArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout
        #[arg(long)]
        output: Option<PathBuf>,
        /// Drop samples whose normalized text repeats an earlier one
        #[arg(long)]
        dedup_exact: bool,
    },
    /// Cluster the samples of each set by meaning
    Cluster {
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decode from a model and print the sample set as one JSONL line
    Generate {
        #[command(flatten)]
        source: ModelArgs,
        #[command(flatten)]
        decoding: DecodingArgs,
        #[arg(long, default_value = "")]
        prompt: String,
        /// Prompt token ids for a lookup-table model, comma-separated
        #[arg(long, value_delimiter = ',')]
        prompt_ids: Vec<u32>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grade generations against a benchmark and write the report files
    Eval {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        entropy: EntropyArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        dedup_exact: bool,
        /// Model id for the domain report; defaults to the sample sets' common id
        #[arg(long)]
        model_id: Option<String>,
        /// Grading threads, 0 for one per core
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, env = "UQ_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "UQ_PORT", default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        source: ModelArgs,
        #[arg(long, env = "UQ_ENTAILMENT_URL")]
        entailment_url: Option<String>,
        /// Dashboard assets to serve at /
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Append every generation to generations.jsonl in this directory
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum VariantArg {
    TokenWeighted,
    LogLikelihood,
}

impl From<VariantArg> for EntropyVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::TokenWeighted => EntropyVariant::TokenWeighted,
            VariantArg::LogLikelihood => EntropyVariant::LogLikelihood,
        }
    }
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long, value_enum, default_value = "token_weighted")]
    variant: VariantArg,
    /// Divide per-sequence entropies by sequence length
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "exact")]
    oracle: OracleChoice,
    #[arg(long, env = "UQ_ENTAILMENT_URL")]
    entailment_url: Option<String>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

impl OracleArgs {
    fn build(&self) -> Result<uq::remote::Oracle> {
        let classifier = self.entailment_url.as_deref().map(|u| shared_classifier(u, Duration::from_secs(self.timeout_secs)));
        Ok(self.oracle.build(classifier.as_ref())?)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Lookup-table model spec (JSON) for in-process generation
    #[arg(long)]
    model_spec: Option<PathBuf>,
    #[arg(long, env = "UQ_BACKEND_URL", conflicts_with = "model_spec")]
    backend_url: Option<String>,
    /// Backend request timeout in seconds
    #[arg(long, env = "UQ_BACKEND_TIMEOUT", default_value_t = 30)]
    backend_timeout: u64,
}

impl ModelArgs {
    fn build(&self) -> Result<Option<Backend>> {
        if let Some(path) = &self.model_spec {
            return Ok(Some(Backend::Lookup(Arc::new(load_model_spec(path)?))));
        }
        match &self.backend_url {
            Some(url) => {
                let remote = RemoteBackend::connect(url, Duration::from_secs(self.backend_timeout))
                    .with_context(|| format!("connecting to backend {url}"))?;
                Ok(Some(Backend::Remote(remote)))
            }
            None => Ok(None),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Temperature,
    TopP,
    Beam,
}

#[derive(Args)]
struct DecodingArgs {
    #[arg(long, value_enum, default_value = "beam")]
    method: MethodArg,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 3)]
    beam_width: usize,
    #[arg(long, default_value_t = 5)]
    num_return_sequences: usize,
    #[arg(long, default_value_t = 16)]
    max_tokens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DecodingArgs {
    fn config(&self) -> DecodingConfig {
        DecodingConfig {
            method: match self.method {
                MethodArg::Temperature => DecodingMethod::Temperature,
                MethodArg::TopP => DecodingMethod::TopP,
                MethodArg::Beam => DecodingMethod::Beam,
            },
            temperature: self.temperature,
            top_p: self.top_p,
            beam_width: self.beam_width,
            num_return_sequences: self.num_return_sequences,
            max_tokens: self.max_tokens,
            seed: self.seed,
            internal_beam_width: None,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot write {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { schema, strict, path } => {
            let mode = if strict { Mode::Strict } else { Mode::Lenient };
            let summary = jsonl::ingest(open(&path)?, schema, mode)?;
            println!("records: {}\nerrors: {}", summary.records, summary.errors);
        }
        Command::Score { entropy, oracle, input, output, dedup_exact } => {
            let config = entropy_config(entropy.variant.into(), entropy.normalize);
            pipeline::score_stream(open(&input)?, sink(output.as_deref())?, &oracle.build()?, &config, dedup_exact)?;
        }
        Command::Cluster { oracle, input, output } => {
            pipeline::cluster_stream(open(&input)?, sink(output.as_deref())?, &oracle.build()?)?;
        }
        Command::Generate { source, decoding, prompt, prompt_ids, output } => {
            let Some(backend) = source.build()? else { bail!("either --model-spec or --backend-url is required") };
            let set: SampleSet = backend.generate(&prompt, &prompt_ids, &decoding.config())?;
            let mut out = sink(output.as_deref())?;
            writeln!(out, "{}", jsonl::serialize_record(&set)?)?;
            out.flush()?;
        }
        Command::Eval { benchmark, generations, oracle, entropy, out_dir, dedup_exact, model_id, threads } => {
            let records: Vec<BenchmarkRecord> = read_all(&benchmark)?;
            let sets: Vec<SampleSet> = read_all(&generations)?;
            let options = EvalOptions {
                entropy: entropy_config(entropy.variant.into(), entropy.normalize),
                dedup_exact,
                model_id,
                threads,
            };
            let output = pipeline::evaluate(&records, &sets, &oracle.build()?, &options)?;
            pipeline::write_outputs(&output, &out_dir)?;
            eprintln!("evaluated {} records into {}", output.evaluated.len(), out_dir.display());
        }
        Command::Serve { host, port, source, entailment_url, static_dir, log_dir } => {
            let config = ServiceConfig {
                backend: source.build()?,
                entailment: entailment_url
                    .as_deref()
                    .map(|u| -> SharedClassifier { shared_classifier(u, Duration::from_secs(source.backend_timeout)) }),
                static_dir,
                log_dir,
            };
            if let Some(dir) = &config.log_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                service::serve(listener, service::router(config)).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
