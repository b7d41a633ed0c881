use std::collections::BTreeMap;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use loopforge::codegen::{emit, Target};
use loopforge::corpus::{self, apply_script, random_env, Source};
use loopforge::interp::{interpret, interpret_bounds_checked, ArrayData, ExecutionEnv};
use loopforge::kernel::Kernel;
use loopforge::transforms::expand_all_rules;
use loopforge::{Error, Span};

#[derive(Parser)]
#[command(name = "loopforge", version, about = "Transformation-based compiler for array kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Frontend {
    Fortran,
    Native,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    C,
    Opencl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Raw,
    Transformed,
    Expanded,
}

#[derive(clap::Args)]
struct Input {
    file: PathBuf,
    /// Front-end; picked from the extension by default (`.knl` is native).
    #[arg(long, value_enum)]
    frontend: Option<Frontend>,
    /// Transform script applied after the ones embedded in the source.
    #[arg(long)]
    transforms: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit C or OpenCL source.
    Translate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "c")]
        target: TargetArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the kernel IR.
    DumpIr {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "transformed")]
        stage: Stage,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Interpret the kernel on array files.
    Run {
        #[command(flatten)]
        input: Input,
        /// Parameter binding, `name=value`.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Input array file, `name=path`.
        #[arg(long = "in", value_name = "NAME=PATH")]
        inputs: Vec<String>,
        /// Output array file, `name=path`.
        #[arg(long = "out", value_name = "NAME=PATH")]
        outputs: Vec<String>,
        /// Check every temporary subscript against its extent.
        #[arg(long)]
        bounds_check: bool,
    },
    /// Validate, schedule, emit, and compare transformed against
    /// untransformed results on random inputs.
    Check {
        #[command(flatten)]
        input: Input,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Compare corpus fixtures with their expected outputs, or rewrite them.
    Corpus {
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        bless: bool,
    },
}

/// A failure tied to the file it should be reported against.
struct Diag {
    file: Option<PathBuf>,
    text: Option<String>,
    err: Error,
}

impl Diag {
    fn bare(err: Error) -> Diag {
        Diag { file: None, text: None, err }
    }

    fn span(&self) -> Option<Span> {
        match (&self.err, &self.text) {
            (Error::Syntax { offset, .. }, Some(t)) => Some(Span::from_offset(t, *offset)),
            (e, _) => e.span(),
        }
    }

    fn render(&self, color: bool) -> String {
        let (red, bold, reset) = if color { ("\x1b[31;1m", "\x1b[1m", "\x1b[0m") } else { ("", "", "") };
        let span = self.span();
        let mut out = String::new();
        match (&self.file, span) {
            (Some(f), Some(s)) => out.push_str(&format!("{bold}{}:{}:{}:{reset} ", f.display(), s.line, s.column.max(1))),
            // whole-kernel failures (scheduling, typing) point at the file
            (Some(f), None) => out.push_str(&format!("{bold}{}:1:1:{reset} ", f.display())),
            (None, _) => {}
        }
        out.push_str(&format!("{red}error:{reset} {}\n", self.err.message()));
        if let (Some(text), Some(s)) = (&self.text, span) {
            if let Some(line) = text.lines().nth(s.line.wrapping_sub(1)) {
                let col = s.column.max(1);
                out.push_str(&format!("{:>5} | {line}\n      | {}^\n", s.line, " ".repeat(col - 1)));
            }
        }
        out
    }
}

type CliResult<T> = Result<T, Diag>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Diag::bare(Error::Io(format!("{}: {e}", path.display()))))
}

fn at(path: &Path, text: &str) -> impl Fn(Error) -> Diag {
    let (file, text) = (path.to_path_buf(), text.to_string());
    move |err| Diag {
        file: Some(file.clone()),
        text: Some(text.clone()),
        err,
    }
}

fn source(input: &Input) -> CliResult<Source> {
    let text = read_text(&input.file)?;
    let native = match input.frontend {
        Some(Frontend::Native) => true,
        Some(Frontend::Fortran) => false,
        None => input.file.extension().is_some_and(|e| e == "knl"),
    };
    Ok(if native { Source::Native(text) } else { Source::Fortran(text) })
}

/// Raw and fully transformed kernels.
fn kernels(input: &Input) -> CliResult<(Kernel, Kernel)> {
    let src = source(input)?;
    let in_source = at(&input.file, src.text());
    let raw = src.raw_kernel().map_err(&in_source)?;
    let mut k = src.kernel().map_err(&in_source)?;
    if let Some(path) = &input.transforms {
        let script = read_text(path)?;
        k = apply_script(&k, &script).map_err(at(path, &script))?;
    }
    Ok((raw, k))
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Diag::bare(Error::Io(format!("{}: {e}", p.display())))),
        None => {
            // a closed pipe is not worth a diagnostic
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn pairs<'a>(items: &'a [String], what: &str) -> CliResult<Vec<(&'a str, &'a str)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| Diag::bare(Error::Usage(format!("expected {what} as `name=value`, got `{s}`"))))
        })
        .collect()
}

fn params(items: &[String]) -> CliResult<BTreeMap<String, i64>> {
    pairs(items, "--param")?
        .into_iter()
        .map(|(n, v)| {
            let v = v
                .parse()
                .map_err(|_| Diag::bare(Error::Usage(format!("parameter `{n}` needs an integer value, got `{v}`"))))?;
            Ok((n.to_string(), v))
        })
        .collect()
}

/// Given parameters, or the smallest value from 20 up (big enough to leave
/// partial tiles) that satisfies the assumptions, for the smoke run of `check`.
fn smoke_params(k: &Kernel, given: &BTreeMap<String, i64>) -> BTreeMap<String, i64> {
    let mut out = given.clone();
    let missing: Vec<String> = k.params().into_iter().filter(|p| !given.contains_key(p)).collect();
    for v in 20..=276 {
        for p in &missing {
            out.insert(p.clone(), v);
        }
        if k.assumptions.check(&out).is_ok() {
            break;
        }
    }
    out
}

fn check(raw: &Kernel, k: &Kernel, given: &BTreeMap<String, i64>, file: &Path) -> CliResult<String> {
    let whole = |err| Diag {
        file: Some(file.to_path_buf()),
        text: None,
        err,
    };
    k.validate().map_err(whole)?;
    let c = emit(k, Target::C).map_err(whole)?;
    let mut report = format!("{}: {} instructions, C emits {} lines\n", k.name, k.instructions.len(), c.lines().count());
    if k.inames().iter().any(|i| k.is_parallel(i)) {
        emit(k, Target::OpenCl).map_err(whole)?;
        report.push_str("opencl: ok\n");
    }
    let p = smoke_params(k, given);
    for seed in 0..3 {
        let env = random_env(raw, &p, seed).map_err(whole)?;
        let a = interpret_bounds_checked(raw, &env).map_err(whole)?;
        let b = interpret_bounds_checked(k, &env).map_err(whole)?;
        for arg in raw.args.iter().filter(|a| a.is_output) {
            let same = a.arrays[&arg.name].data.bitwise_eq(&b.arrays[&arg.name].data);
            if !same {
                return Err(whole(Error::interp(format!(
                    "transformed kernel disagrees with the source on `{}` (seed {seed})",
                    arg.name
                ))));
            }
        }
    }
    let shown: Vec<String> = p.iter().map(|(k, v)| format!("{k}={v}")).collect();
    report.push_str(&format!("transforms preserve results on 3 random inputs ({})\n", shown.join(", ")));
    Ok(report)
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Translate { input, target, output } => {
            let (_, k) = kernels(&input)?;
            let t = match target {
                TargetArg::C => Target::C,
                TargetArg::Opencl => Target::OpenCl,
            };
            let text = emit(&k, t).map_err(|err| Diag {
                file: Some(input.file.clone()),
                text: None,
                err,
            })?;
            write_output(output.as_deref(), &text)
        }
        Command::DumpIr { input, stage, output } => {
            let (raw, k) = kernels(&input)?;
            let k = match stage {
                Stage::Raw => raw,
                Stage::Transformed => k,
                Stage::Expanded => expand_all_rules(&k).map_err(Diag::bare)?,
            };
            write_output(output.as_deref(), &k.dump_ir())
        }
        Command::Run {
            input,
            params: ps,
            inputs,
            outputs,
            bounds_check,
        } => {
            let (_, k) = kernels(&input)?;
            let mut env = ExecutionEnv::new();
            for (n, v) in params(&ps)? {
                env = env.param(&n, v);
            }
            for (name, path) in pairs(&inputs, "--in")? {
                if k.arg(name).is_none() {
                    return Err(Diag::bare(Error::Usage(format!("`{name}` is not an argument of `{}`", k.name))));
                }
                env = env.array(name, ArrayData::read_file(Path::new(path)).map_err(Diag::bare)?);
            }
            let outs = pairs(&outputs, "--out")?;
            for (name, _) in &outs {
                if k.arg(name).is_none_or(|a| !a.is_array()) {
                    return Err(Diag::bare(Error::Usage(format!("`{name}` is not an array argument of `{}`", k.name))));
                }
            }
            let result = if bounds_check { interpret_bounds_checked(&k, &env) } else { interpret(&k, &env) };
            let result = result.map_err(|err| Diag {
                file: Some(input.file.clone()),
                text: None,
                err,
            })?;
            for (name, path) in outs {
                result.arrays[name].write_file(Path::new(path)).map_err(Diag::bare)?;
            }
            Ok(())
        }
        Command::Check { input, params: ps } => {
            let (raw, k) = kernels(&input)?;
            let report = check(&raw, &k, &params(&ps)?, &input.file)?;
            write_output(None, &report)
        }
        Command::Corpus { dir, bless } => {
            let dir = dir.unwrap_or_else(corpus::corpus_dir);
            let fixtures = corpus::load_all(&dir).map_err(Diag::bare)?;
            let mut stale = Vec::new();
            for f in &fixtures {
                let ctx = |err| Diag {
                    file: Some(f.dir.clone()),
                    text: None,
                    err,
                };
                if bless {
                    f.bless().map_err(ctx)?;
                    println!("blessed {}", f.id);
                } else {
                    for name in f.check().map_err(ctx)? {
                        stale.push(format!("{}/{name}", f.id));
                    }
                }
            }
            if stale.is_empty() {
                Ok(())
            } else {
                Err(Diag::bare(Error::Usage(format!(
                    "out of date (rerun with --bless if intended): {}",
                    stale.join(", ")
                ))))
            }
        }
    }
}

fn color() -> bool {
    match std::env::var("LOOPFORGE_COLOR").as_deref() {
        Ok("1") => true,
        Ok("0") => false,
        _ => std::io::stderr().is_terminal(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {info}");
    }));
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(d)) => {
            eprint!("{}", d.render(color()));
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
