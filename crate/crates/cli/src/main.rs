use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hlkernel::dforms::DformError;
use hlkernel::geom::{ball, builtin_domain, DomainFile, DomainSpec, GammaConvention, GeomError};
use hlkernel::jet::C64;
use hlkernel::kexpr::{format, parse, ParseError};
use hlkernel::krewrite::{apply_field, FieldSymbol, RewriteError, ScriptBook};
use hlkernel::ktype::{classify, integrability_threshold, mapping, z_chain, Exponent};
use hlkernel::quad::{
    default_eps_grid, render_report, run_integrate, verify_adjoint, verify_bmk, verify_c1diff, verify_linf,
    verify_phiest, verify_phisymm, verify_typical_sweep, AdjointConfig, BmkConfig, C1diffConfig, Estimate,
    IntegrateConfig, LinfConfig, PhiestConfig, PhisymmConfig, QuadError, Region, SampleSet, Shells, SweepExpectation,
    TypicalConfig, VerificationReport,
};

#[derive(Parser)]
#[command(name = "hlk", version, about = "Kernel type calculus, derivation replays and singular quadrature")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Double type of a kernel expression.
    Typecheck {
        #[arg(short = 'n')]
        n: u32,
        expr: String,
    },
    /// Lebesgue mapping exponents of a type-j operator.
    Map {
        #[arg(short = 'j')]
        j: i32,
        #[arg(short = 'n')]
        n: u32,
        /// Source exponent, e.g. `2`, `3/2` or `inf`.
        #[arg(short = 'p', default_value = "2")]
        p: String,
    },
    /// Applies a vector field to a kernel expression.
    Derive {
        #[arg(short = 'n')]
        n: u32,
        /// `X`, `L[m]`, `L[n]`, `Lambda[k]`, optionally prefixed by `def:`.
        #[arg(long)]
        field: String,
        expr: String,
    },
    /// Replays a derivation script and certifies its residual class.
    Replay {
        script: Option<String>,
        /// Directory of extra `.hlk` scripts.
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
    /// Defining function, weights and critical points of a domain.
    Geom {
        #[command(flatten)]
        common: Common,
        /// Point as comma-separated complex coordinates; repeatable.
        #[arg(long)]
        point: Vec<String>,
    },
    /// A single Monte-Carlo integral.
    Integrate {
        #[command(flatten)]
        common: Common,
        /// `interior`, `boundary`, `strip` or `enlarged`.
        #[arg(long)]
        region: Option<String>,
        /// `one`, `rho:<t>` or a polynomial such as `zbar1*z2`.
        #[arg(long)]
        integrand: Option<String>,
        #[arg(long)]
        z: Option<String>,
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        band: Option<String>,
        #[arg(long = "gamma-min")]
        gamma_min: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        /// Directory for cached sample sets.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Verification suites.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Renders a JSON report as a table.
    Report { file: PathBuf },
}

#[derive(Subcommand)]
enum Suite {
    /// Reproduction of a function from boundary values and its dbar.
    Bmk {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        form: Option<String>,
        /// Evaluation point; repeatable.
        #[arg(long)]
        z: Vec<String>,
        #[arg(long)]
        band: Option<String>,
    },
    /// Majorant integrals across the exhaustion.
    Typical {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        j: Option<String>,
        #[arg(long)]
        mu: Option<String>,
        /// `auto`, `bounded` or `growth`.
        #[arg(long)]
        expect: Option<String>,
        #[arg(long)]
        depth: Option<String>,
        /// Panel point; repeatable.
        #[arg(long)]
        z: Vec<String>,
    },
    /// Lower bound for the support function.
    Phiest {
        #[command(flatten)]
        common: Common,
    },
    /// Symmetry of the support function.
    Phisymm {
        #[command(flatten)]
        common: Common,
        /// Pair separations, comma separated.
        #[arg(long)]
        sep: Option<String>,
    },
    /// Gradient of r/gamma near a boundary critical point.
    C1diff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radii: Option<String>,
    },
    /// Weighted sup-norm estimate on a panel of forms.
    Linf {
        #[command(flatten)]
        common: Common,
        /// Test form; repeatable.
        #[arg(long)]
        form: Vec<String>,
    },
    /// Integration by parts for dbar and its formal adjoint.
    Adjoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Builtin name (`ball`, `disc`, `pinched`, `ballN`) or a domain JSON file.
    #[arg(long)]
    domain: Option<String>,
    /// Complex dimension for the ball.
    #[arg(long = "n")]
    dim: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Sample, pair or grid count.
    #[arg(long = "N")]
    samples: Option<String>,
    /// Exhaustion parameters, comma separated.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// Writes the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prints the JSON report instead of the table.
    #[arg(long)]
    json: bool,
    /// Line-oriented `key = value` file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A failed command with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Display) -> Failure {
    Failure { code: 2, message: message.to_string() }
}

impl From<QuadError> for Failure {
    fn from(e: QuadError) -> Failure {
        let code = match e {
            QuadError::SingularSample(_) | QuadError::InsufficientPairs { .. } => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Failure {
        usage(e)
    }
}

impl From<DformError> for Failure {
    fn from(e: DformError) -> Failure {
        usage(e)
    }
}

impl From<RewriteError> for Failure {
    fn from(e: RewriteError) -> Failure {
        usage(e)
    }
}

type CmdResult = Result<u8, Failure>;

/// Flag and config-file values, flags first, with an echo of what was used.
struct Settings {
    file: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    echo: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Settings, Failure> {
        let mut file = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected `key = value`", p.display(), i + 1)))?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Settings { file, used: RefCell::new(BTreeSet::new()), echo: RefCell::new(BTreeMap::new()) })
    }

    fn raw(&self, key: &str, flag: &Option<String>) -> Option<String> {
        self.used.borrow_mut().insert(key.to_string());
        let v = flag.clone().or_else(|| self.file.get(key).cloned());
        if let Some(v) = &v {
            self.echo.borrow_mut().insert(key.to_string(), v.clone());
        }
        v
    }

    fn get<T: FromStr>(&self, key: &str, flag: &Option<String>) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        match self.raw(key, flag) {
            Some(v) => v.parse().map(Some).map_err(|e| usage(format!("--{key} `{v}`: {e}"))),
            None => Ok(None),
        }
    }

    fn list<T: FromStr>(&self, key: &str, flag: &Option<String>) -> Result<Option<Vec<T>>, Failure>
    where
        T::Err: Display,
    {
        match self.raw(key, flag) {
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|e| usage(format!("--{key} `{x}`: {e}"))))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
            None => Ok(None),
        }
    }

    /// Repeated flags, or `;`-separated values in the file.
    fn many(&self, key: &str, flags: &[String]) -> Vec<String> {
        self.used.borrow_mut().insert(key.to_string());
        let v: Vec<String> = if flags.is_empty() {
            self.file.get(key).map(|s| s.split(';').map(|x| x.trim().to_string()).collect()).unwrap_or_default()
        } else {
            flags.to_vec()
        };
        if !v.is_empty() {
            self.echo.borrow_mut().insert(key.to_string(), v.join(";"));
        }
        v
    }

    fn finish(&self) -> Result<(), Failure> {
        let used = self.used.borrow();
        match self.file.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_complex(text: &str) -> Result<C64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("bad complex number `{text}`");
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|x| C64::new(x, 0.0)).map_err(|_| bad());
    };
    let b = body.as_bytes();
    let split = (1..b.len()).rev().find(|&k| (b[k] == b'+' || b[k] == b'-') && b[k - 1] != b'e' && b[k - 1] != b'E');
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        s => s.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(C64::new(re.parse::<f64>().map_err(|_| bad())?, im))
}

fn parse_point(text: &str, n: usize) -> Result<Vec<[f64; 2]>, Failure> {
    let p = text
        .split(',')
        .map(|c| parse_complex(c).map(|z| [z.re, z.im]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    if p.len() != n {
        return Err(usage(format!("point `{text}` has {} coordinates, expected {n}", p.len())));
    }
    Ok(p)
}

fn load_domain(s: &Settings, c: &Common) -> Result<DomainSpec, Failure> {
    let name = s.raw("domain", &c.domain).unwrap_or_else(|| "ball".into());
    let dim: Option<usize> = s.get("n", &c.dim)?;
    if Path::new(&name).extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(&name).map_err(|e| usage(format!("{name}: {e}")))?;
        let file: DomainFile = serde_json::from_str(&text).map_err(|e| usage(format!("{name}: {e}")))?;
        let d = DomainSpec::from_file(&file)?;
        if dim.is_some_and(|k| k != d.n) {
            return Err(usage(format!("domain file has n = {}", d.n)));
        }
        return Ok(d);
    }
    match (name.as_str(), dim) {
        ("ball", Some(k)) if (1..=4).contains(&k) => Ok(ball(k)),
        (_, Some(k)) => {
            let d = builtin_domain(&name)?;
            if d.n != k {
                return Err(usage(format!("domain `{name}` has n = {}", d.n)));
            }
            Ok(d)
        }
        _ => Ok(builtin_domain(&name)?),
    }
}

fn emit(report: &mut VerificationReport, s: &Settings, c: &Common) -> CmdResult {
    let run: BTreeMap<String, Value> =
        s.echo.borrow().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    report.config.insert("run".into(), json!(run));
    let text = report.to_json();
    if let Some(out) = &c.out {
        std::fs::write(out, &text).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    }
    if c.json {
        say(&text);
    } else {
        say_raw(&render_report(report));
    }
    Ok(if report.pass { 0 } else { 1 })
}

/// Writes to stdout, ignoring a closed pipe.
fn say_raw(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn say(text: &str) {
    say_raw(&format!("{text}\n"));
}

fn show_parse_error(src: &str, e: &ParseError) -> Failure {
    let col = src[..e.offset().min(src.len())].chars().count();
    usage(format!("{e}\n  {src}\n  {}^", " ".repeat(col)))
}

fn typecheck(n: u32, src: &str) -> CmdResult {
    let e = parse(src, n).map_err(|e| show_parse_error(src, &e))?;
    let c = classify(&e).map_err(usage)?;
    let out = json!({
        "tau": c.ty.tau,
        "s": c.ty.s,
        "prefix": c.prefix.to_string(),
        "class": c.class.to_string(),
        "unusual_balance": c.unusual_balance,
    });
    say(&out.to_string());
    Ok(0)
}

fn map_cmd(j: i32, n: u32, p: &str) -> CmdResult {
    let p = Exponent::parse(p).ok_or_else(|| usage(format!("bad exponent `{p}`; expected a number >= 1 or inf")))?;
    let s = mapping(j, n, p);
    let chain = z_chain(n, p);
    let threshold = integrability_threshold(j, n).map(|t| t.to_string()).unwrap_or_else(|_| "none".into());
    let out = json!({
        "j": j,
        "n": n,
        "p": p.to_string(),
        "s_sup": s.to_string(),
        "threshold": threshold,
        "z_chain": chain.steps,
        "binding_rule": chain.binding.to_string(),
    });
    say(&out.to_string());
    Ok(0)
}

fn derive(n: u32, field: &str, src: &str) -> CmdResult {
    let e = parse(src, n).map_err(|e| show_parse_error(src, &e))?;
    let f = FieldSymbol::parse(field)?;
    let r = apply_field(&f, &e)?;
    let class = match classify(&r.expr) {
        Ok(c) => json!({"tau": c.ty.tau, "s": c.ty.s, "prefix": c.prefix.to_string(), "class": c.class.to_string()}),
        Err(e) => json!({"error": e.to_string()}),
    };
    let out = json!({
        "field": f.to_string(),
        "result": format(&r.expr),
        "rules": r.rules.iter().collect::<Vec<_>>(),
        "type": class,
    });
    say(&out.to_string());
    Ok(0)
}

fn replay(script: Option<&str>, dir: Option<&Path>, list: bool) -> CmdResult {
    let mut book = ScriptBook::builtin();
    if let Some(d) = dir {
        book.load_dir(d)?;
    }
    if list {
        for name in book.names() {
            say(name);
        }
        return Ok(0);
    }
    let name = script.ok_or_else(|| usage("replay needs a script name or --list"))?;
    let d = book.replay(name)?;
    say(&d.to_string());
    Ok(if d.certified() { 0 } else { 1 })
}

fn geom(c: &Common, points: &[String]) -> CmdResult {
    let s = Settings::load(c.config.as_deref())?;
    let d = load_domain(&s, c)?;
    let eps: f64 = s.get("eps", &c.eps)?.unwrap_or(0.0);
    let points = s.many("point", points);
    s.finish()?;
    let config = json!({"domain": d.name, "n": d.n, "bbox": d.bbox, "patch": d.patch, "eps": eps});
    let mut report = VerificationReport::new("geom", &config);
    for (i, text) in points.iter().enumerate() {
        let p: Vec<C64> = parse_point(text, d.n)?.iter().map(|[a, b]| C64::new(*a, *b)).collect();
        report.estimate(Estimate::exact(format!("r[{i}]"), d.r(&p), 1, 0));
        report.estimate(Estimate::exact(format!("r_eps[{i}]"), d.r_eps(&p, eps), 1, 0));
        report.estimate(Estimate::exact(
            format!("gamma_euclid[{i}]"),
            d.gamma(&p, eps, GammaConvention::Euclid)?,
            1,
            0,
        ));
        match d.gamma(&p, eps, GammaConvention::LeviDual) {
            Ok(g) => report.estimate(Estimate::exact(format!("gamma_levi_dual[{i}]"), g, 1, 0)),
            Err(e) => report.verdict(format!("levi dual weight [{i}]"), false, false, e.to_string()),
        }
    }
    let crit = d.critical_points();
    let boundary = d.boundary_critical_points();
    for (i, p) in crit.iter().enumerate() {
        match d.morse_normal_form(p) {
            Ok(m) => {
                let on_boundary = boundary.iter().any(|b| b == p);
                let coords: Vec<String> = p.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
                report.estimate(Estimate::exact(format!("critical[{i}].index"), m.index as f64, 1, 0));
                report.verdict(
                    format!("critical point {i}"),
                    true,
                    false,
                    format!(
                        "({}) r = {:.3e}, Morse index {}{}",
                        coords.join(", "),
                        d.r(p),
                        m.index,
                        if on_boundary { ", on the boundary" } else { "" }
                    ),
                );
            }
            Err(e) => report.verdict(format!("critical point {i}"), false, true, e.to_string()),
        }
    }
    emit(&mut report, &s, c)
}

fn parse_region(
    s: &Settings,
    kind: &str,
    eps: f64,
    band: &Option<String>,
    gmin: &Option<String>,
    delta: &Option<String>,
) -> Result<Region, Failure> {
    Ok(match kind {
        "interior" => Region::Interior { eps },
        "boundary" => Region::Boundary {
            eps,
            band: s.get("band", band)?.unwrap_or(0.02),
            gamma_min: s.get("gamma-min", gmin)?.unwrap_or(0.0),
        },
        "strip" => Region::Strip { delta: s.get("delta", delta)?.unwrap_or(0.05) },
        "enlarged" => Region::Enlarged { delta: s.get("delta", delta)?.unwrap_or(0.05) },
        other => return Err(usage(format!("unknown region `{other}`"))),
    })
}

fn cache_name(d: &DomainSpec, region: &Region, seed: u64, n: usize) -> String {
    let tag = serde_json::to_string(region).unwrap_or_default();
    let tag: String =
        tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    let tag = tag.split('_').filter(|t| !t.is_empty()).collect::<Vec<_>>().join("_");
    format!("{}_{tag}_{seed}_{n}.json", d.name)
}

/// Loads a sample set from the cache directory or draws and stores it.
fn cached_sample(dir: &Path, d: &DomainSpec, region: Region, n: usize, seed: u64) -> Result<SampleSet, Failure> {
    let path = dir.join(cache_name(d, &region, seed, n));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(s) = serde_json::from_str::<SampleSet>(&text) {
            return Ok(s);
        }
    }
    let s = hlkernel::quad::sample(d, region, n, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let text = serde_json::to_string(&s).map_err(usage)?;
    std::fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    c: &Common,
    region: &Option<String>,
    integrand: &Option<String>,
    z: &Option<String>,
    stratified: bool,
    band: &Option<String>,
    gmin: &Option<String>,
    delta: &Option<String>,
    cache: &Option<PathBuf>,
) -> CmdResult {
    let s = Settings::load(c.config.as_deref())?;
    let d = load_domain(&s, c)?;
    let eps: f64 = s.get("eps", &c.eps)?.unwrap_or(0.0);
    let kind = s.raw("region", region).unwrap_or_else(|| "interior".into());
    let region = parse_region(&s, &kind, eps, band, gmin, delta)?;
    let integrand = s.raw("integrand", integrand).unwrap_or_else(|| "one".into());
    let z = s.raw("z", z).map(|t| parse_point(&t, d.n)).transpose()?;
    let stratified = stratified || s.get::<bool>("stratified", &None)?.unwrap_or(false);
    let n_samples: usize = s.get("N", &c.samples)?.unwrap_or(100_000);
    let seed: u64 = s.get("seed", &c.seed)?.unwrap_or(1);
    s.finish()?;
    if let (Some(dir), false) = (cache, stratified) {
        cached_sample(dir, &d, region, n_samples, seed)?;
    }
    let cfg = IntegrateConfig {
        domain: d.name.clone(),
        region,
        integrand,
        z,
        n_samples,
        seed,
        stratified,
        shells: Shells::default(),
    };
    let mut report = run_integrate(&d, &cfg)?;
    emit(&mut report, &s, c)
}

fn common_of(suite: &Suite) -> &Common {
    match suite {
        Suite::Bmk { common, .. }
        | Suite::Typical { common, .. }
        | Suite::Phiest { common }
        | Suite::Phisymm { common, .. }
        | Suite::C1diff { common, .. }
        | Suite::Linf { common, .. }
        | Suite::Adjoint { common, .. } => common,
    }
}

fn verify(suite: &Suite) -> CmdResult {
    let c = common_of(suite);
    let s = Settings::load(c.config.as_deref())?;
    let d = load_domain(&s, c)?;
    let seed: u64 = s.get("seed", &c.seed)?.unwrap_or(1);
    let eps: Option<Vec<f64>> = s.list("eps", &c.eps)?;
    let tol: Option<f64> = s.get("tol", &c.tol)?;
    let mut report = match suite {
        Suite::Bmk { q, form, z, band, .. } => {
            let n_samples = s.get("N", &c.samples)?.unwrap_or(100_000);
            let form = s.raw("form", form).unwrap_or_else(|| "zbar1".into());
            let mut cfg = BmkConfig::new(&d, &form, n_samples, seed);
            cfg.q = s.get("q", q)?.unwrap_or(0);
            let zs = s.many("z", z);
            if !zs.is_empty() {
                cfg.z = zs.iter().map(|t| parse_point(t, d.n)).collect::<Result<_, _>>()?;
            }
            cfg.band = s.get("band", band)?.unwrap_or(cfg.band);
            cfg.tol = tol.unwrap_or(cfg.tol);
            s.finish()?;
            verify_bmk(&d, &cfg)?
        }
        Suite::Typical { lambda, j, mu, expect, depth, z, .. } => {
            let n_samples = s.get("N", &c.samples)?.unwrap_or(100_000);
            let lambda: f64 = s.get("lambda", lambda)?.unwrap_or(1.1);
            let mut cfg = TypicalConfig::new(&d, lambda, n_samples, seed)?;
            cfg.j = s.get("j", j)?.unwrap_or(cfg.j);
            cfg.mu = s.get("mu", mu)?.unwrap_or(cfg.mu);
            let thr = integrability_threshold(cfg.j, d.n as u32).map_err(usage)?;
            let below = (lambda * *thr.denom() as f64) < *thr.numer() as f64;
            cfg.expect = match s.raw("expect", expect).as_deref().unwrap_or("auto") {
                "auto" if below => SweepExpectation::Bounded,
                "auto" => SweepExpectation::Growth,
                "bounded" => SweepExpectation::Bounded,
                "growth" => SweepExpectation::Growth,
                other => return Err(usage(format!("--expect `{other}`: use auto, bounded or growth"))),
            };
            cfg.depth = s.get("depth", depth)?.unwrap_or(cfg.depth);
            cfg.eps = eps.unwrap_or(cfg.eps);
            if let Some(t) = tol {
                cfg.ratio_tol = t;
            }
            let zs = s.many("z", z);
            if !zs.is_empty() {
                cfg.panel = zs.iter().map(|t| parse_point(t, d.n)).collect::<Result<_, _>>()?;
            }
            s.finish()?;
            verify_typical_sweep(&d, &cfg)?
        }
        Suite::Phiest { .. } => {
            let mut cfg = PhiestConfig::new(&d, s.get("N", &c.samples)?.unwrap_or(10_000), seed);
            cfg.eps = eps.unwrap_or(cfg.eps);
            if let Some(t) = tol {
                cfg.spread_tol = t;
            }
            s.finish()?;
            verify_phiest(&d, &cfg)?
        }
        Suite::Phisymm { sep, .. } => {
            let mut cfg = PhisymmConfig::new(&d, s.get("N", &c.samples)?.unwrap_or(2_000), seed);
            cfg.eps = eps.unwrap_or(cfg.eps);
            cfg.separations = s.list("sep", sep)?.unwrap_or(cfg.separations);
            if let Some(t) = tol {
                cfg.stability_tol = t;
            }
            s.finish()?;
            verify_phisymm(&d, &cfg)?
        }
        Suite::C1diff { radii, .. } => {
            let mut cfg = C1diffConfig::new(&d, seed);
            cfg.radii = s.list("radii", radii)?.unwrap_or(cfg.radii);
            cfg.directions = s.get("N", &c.samples)?.unwrap_or(cfg.directions);
            if let Some(t) = tol {
                cfg.ratio_tol = t;
            }
            if eps.is_some() {
                return Err(usage("c1diff works on the domain itself and takes no --eps"));
            }
            s.finish()?;
            verify_c1diff(&d, &cfg)?
        }
        Suite::Linf { form, .. } => {
            let mut cfg = LinfConfig::new(&d, s.get("N", &c.samples)?.unwrap_or(20_000), seed);
            cfg.eps = eps.unwrap_or_else(default_eps_grid);
            let forms = s.many("form", form);
            if !forms.is_empty() {
                cfg.forms = forms;
            }
            if let Some(t) = tol {
                cfg.stability_tol = t;
            }
            s.finish()?;
            verify_linf(&d, &cfg)?
        }
        Suite::Adjoint { radius, .. } => {
            let mut cfg = AdjointConfig::new(&d, s.get("N", &c.samples)?.unwrap_or(1_000_000));
            cfg.radius = s.get("radius", radius)?.unwrap_or(cfg.radius);
            cfg.tol = tol.unwrap_or(cfg.tol);
            if eps.is_some() {
                return Err(usage("adjoint takes no --eps"));
            }
            s.finish()?;
            verify_adjoint(&d, &cfg)?
        }
    };
    emit(&mut report, &s, c)
}

fn report(path: &Path) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let r = VerificationReport::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    say_raw(&render_report(&r));
    Ok(0)
}

fn set_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("HLK_THREADS") {
        let k: usize = v.trim().parse().map_err(|_| usage(format!("HLK_THREADS `{v}` is not a thread count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(usage)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    set_threads()?;
    match &cli.cmd {
        Cmd::Typecheck { n, expr } => typecheck(*n, expr),
        Cmd::Map { j, n, p } => map_cmd(*j, *n, p),
        Cmd::Derive { n, field, expr } => derive(*n, field, expr),
        Cmd::Replay { script, scripts, list } => replay(script.as_deref(), scripts.as_deref(), *list),
        Cmd::Geom { common, point } => geom(common, point),
        Cmd::Integrate { common, region, integrand, z, stratified, band, gamma_min, delta, cache } => {
            integrate(common, region, integrand, z, *stratified, band, gamma_min, delta, cache)
        }
        Cmd::Verify { suite } => verify(suite),
        Cmd::Report { file } => report(file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_numbers() {
        assert_eq!(parse_complex("0.3").unwrap(), C64::new(0.3, 0.0));
        assert_eq!(parse_complex("0.5i").unwrap(), C64::new(0.0, 0.5));
        assert_eq!(parse_complex("0.1+0.2i").unwrap(), C64::new(0.1, 0.2));
        assert_eq!(parse_complex("-1e-3-2i").unwrap(), C64::new(-1e-3, -2.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# comment\nseed = 5\nN = 10\n").unwrap();
        let s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.get::<u64>("seed", &Some("9".into())).ok().flatten(), Some(9));
        assert_eq!(s.get::<usize>("N", &None).ok().flatten(), Some(10));
        assert!(s.finish().is_ok());
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(Settings::load(Some(&p)).unwrap().finish().is_err());
    }
}
