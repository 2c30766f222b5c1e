//! Command-line frontend over the quadtree query engine.
//!
//! `build` ingests delimited text files into a catalog directory, `query`
//! parses and evaluates a relational expression against a catalog, and
//! `stats` reports index shapes. Exit codes: 0 on success, 2 for usage or
//! query-syntax errors, 3 for data/schema/format errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qdagdb_core::catalog::{Catalog, CatalogBuilder};
use qdagdb_core::lqdag::{evaluate, EvalOutput};
use qdagdb_core::query::{parse_query, QueryAst};
use qdagdb_core::Error;

#[derive(Parser)]
#[command(
    name = "qdagdb",
    version,
    about = "Compact quadtree storage and worst-case-optimal join engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest delimited text files into a catalog directory.
    Build {
        /// Output catalog directory.
        #[arg(long)]
        out: PathBuf,
        /// Relation spec NAME:ATTR1,ATTR2,...=FILE; repeatable.
        #[arg(long = "relation", value_name = "NAME:ATTRS=FILE", required = true)]
        relations: Vec<String>,
        /// Dictionary-encode attribute values (arbitrary tokens allowed).
        #[arg(long)]
        dict: bool,
        /// Field delimiter, a single character.
        #[arg(long, default_value = ",")]
        delim: String,
        /// Skip the first row of every input file.
        #[arg(long)]
        header: bool,
    },
    /// Evaluate a query against a catalog.
    Query {
        /// Catalog directory.
        #[arg(long)]
        db: PathBuf,
        /// Query text, e.g. "JOIN(R,S,NOT(T))".
        #[arg(long)]
        expr: String,
        /// tuples | count | stats | qdx:PATH
        #[arg(long, default_value = "tuples")]
        output: String,
        /// Print at most this many tuples.
        #[arg(long)]
        limit: Option<usize>,
        /// Allow complements on dictionary-encoded catalogs, where NOT
        /// ranges over the encoded identifier universe rather than the
        /// original domain.
        #[arg(long)]
        complement_encoded: bool,
    },
    /// Report per-level index statistics.
    Stats {
        /// Catalog directory.
        #[arg(long)]
        db: PathBuf,
        /// Limit the report to one relation.
        #[arg(long)]
        relation: Option<String>,
    },
}

enum CliError {
    Usage(String),
    Engine(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Engine(Error::QueryParse { .. }) => 2,
            CliError::Engine(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Engine(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    // Die quietly when the consumer closes the pipe, e.g. `... | head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Build {
            out,
            relations,
            dict,
            delim,
            header,
        } => build_catalog(&out, &relations, dict, &delim, header),
        Command::Query {
            db,
            expr,
            output,
            limit,
            complement_encoded,
        } => query_catalog(&db, &expr, &output, limit, complement_encoded),
        Command::Stats { db, relation } => print_stats(&db, relation.as_deref()),
    }
}

fn build_catalog(
    out: &Path,
    relations: &[String],
    dict: bool,
    delim: &str,
    header: bool,
) -> Result<(), CliError> {
    let delim = match delim.as_bytes() {
        [b] => *b,
        _ => {
            return Err(CliError::Usage(format!(
                "--delim must be a single character, got {delim:?}"
            )))
        }
    };
    let mut builder = CatalogBuilder::new()
        .delimiter(delim)
        .dictionary(dict)
        .skip_header(header);
    for spec in relations {
        let (name, rest) = spec.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("bad relation spec {spec:?}, want NAME:ATTRS=FILE"))
        })?;
        let (attrs, file) = rest.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("bad relation spec {spec:?}, want NAME:ATTRS=FILE"))
        })?;
        let attr_names: Vec<&str> = attrs.split(',').collect();
        builder.add_relation_file(name, &attr_names, Path::new(file))?;
    }
    let catalog = builder.build()?;
    catalog.save(out)?;
    let total: u128 = catalog.relations().map(|r| r.tuple_count()).sum();
    println!(
        "built catalog with {} relations, {} tuples, h={}",
        catalog.relations().count(),
        total,
        catalog.height()
    );
    Ok(())
}

fn contains_complement(ast: &QueryAst) -> bool {
    match ast {
        QueryAst::Relation(_) => false,
        QueryAst::Not(_) => true,
        QueryAst::Diff(_, _) => true,
        QueryAst::And(list) | QueryAst::Join(list) => list.iter().any(contains_complement),
        QueryAst::Or(a, b) => contains_complement(a) || contains_complement(b),
        QueryAst::Project(_, e) => contains_complement(e),
    }
}

fn query_catalog(
    db: &Path,
    expr: &str,
    output: &str,
    limit: Option<usize>,
    complement_encoded: bool,
) -> Result<(), CliError> {
    let catalog = Catalog::load(db)?;
    let ast = parse_query(expr)?;
    if catalog.dictionary().is_some() && contains_complement(&ast) && !complement_encoded {
        return Err(CliError::Engine(Error::Schema(
            "complements on a dictionary-encoded catalog range over the \
             encoded identifier universe; pass --complement-encoded to \
             acknowledge"
                .into(),
        )));
    }
    let out = evaluate(&ast, &catalog)?;
    match output {
        "tuples" => print_tuples(&catalog, &out, limit)?,
        "count" => println!("{}", out.tree.count()),
        "stats" => print_query_stats(&catalog, &out),
        other => match other.strip_prefix("qdx:") {
            Some(path) => {
                std::fs::write(path, out.tree.to_bytes()).map_err(Error::Io)?;
                let attrs: Vec<&str> = out.attrs.iter().map(|&a| catalog.attr_name(a)).collect();
                eprintln!(
                    "wrote {path}: attrs {}, {} tuples, h={}",
                    attrs.join(","),
                    out.tree.count(),
                    out.tree.params().height()
                );
            }
            None => {
                return Err(CliError::Usage(format!(
                    "unknown output mode {other:?}; use tuples, count, stats, or qdx:PATH"
                )))
            }
        },
    }
    Ok(())
}

fn print_tuples(catalog: &Catalog, out: &EvalOutput, limit: Option<usize>) -> Result<(), CliError> {
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut w = std::io::BufWriter::new(stdout.lock());
    let points = out.tree.points();
    let points: Box<dyn Iterator<Item = Vec<u64>>> = match limit {
        Some(k) => Box::new(points.take(k)),
        None => Box::new(points),
    };
    for point in points {
        let row = point
            .iter()
            .map(|&v| catalog.decode_value(v))
            .collect::<Result<Vec<String>, Error>>()?;
        writeln!(w, "{}", row.join(",")).map_err(Error::Io)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn print_query_stats(catalog: &Catalog, out: &EvalOutput) {
    let attrs: Vec<&str> = out.attrs.iter().map(|&a| catalog.attr_name(a)).collect();
    println!("attrs: {}", attrs.join(","));
    println!("tuples: {}", out.tree.count());
    println!("nodes_expanded: {}", out.stats.nodes_expanded);
    println!("max_level_width: {}", out.stats.max_level_width);
    println!("recursion_steps: {}", out.stats.recursion_steps);
    for (depth, width) in out.stats.per_level.iter().enumerate() {
        println!("level {depth}: {width}");
    }
    for (i, label) in out.atom_labels.iter().enumerate() {
        println!("accesses {label}: {}", out.counters.total(i));
    }
}

fn print_stats(db: &Path, relation: Option<&str>) -> Result<(), CliError> {
    let catalog = Catalog::load(db)?;
    println!("h: {}", catalog.height());
    println!("attrs: {}", catalog.attr_names().join(","));
    let wanted: Vec<&qdagdb_core::catalog::Relation> = match relation {
        Some(name) => vec![catalog
            .relation(name)
            .ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?],
        None => catalog.relations().collect(),
    };
    for rel in wanted {
        let stats = rel.tree().stats();
        println!(
            "relation {}: attrs {}; tuples {}; dims {}",
            rel.name(),
            rel.declared_attr_names().join(","),
            rel.tuple_count(),
            rel.attrs().len()
        );
        for (depth, level) in stats.per_level.iter().enumerate() {
            println!(
                "  level {depth}: groups {}, ones {}",
                level.groups, level.one_bits
            );
        }
        println!(
            "  total bits {}, total ones {}",
            stats.total_bits, stats.total_ones
        );
    }
    Ok(())
}
