use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::rc::Rc;

use crate::kexpr::{parse_template, Idx, KernelAtom, KernelExpr, KernelTerm, Named};
use crate::ktype::{classify, representative, KernelClass};

use super::field::{apply_field, FieldSymbol};
use super::rules::{apply_substitution, Selection, Substitution};
use super::RewriteError;

/// Upper bound on executed operations per instance, counting repeats.
pub const STEP_LIMIT: usize = 10_000;

const BUILTIN: &[(&str, &str)] = &[
    ("proplnp_i", include_str!("../../scripts/proplnp_i.hlk")),
    ("proplnp_ii", include_str!("../../scripts/proplnp_ii.hlk")),
    ("2p-l2", include_str!("../../scripts/2p-l2.hlk")),
    ("mlemma_i", include_str!("../../scripts/mlemma_i.hlk")),
    ("mlemma_ii", include_str!("../../scripts/mlemma_ii.hlk")),
    ("derM_i", include_str!("../../scripts/derM_i.hlk")),
    ("derM_ii", include_str!("../../scripts/derM_ii.hlk")),
    ("derM_iii", include_str!("../../scripts/derM_iii.hlk")),
    ("derM_iv", include_str!("../../scripts/derM_iv.hlk")),
    ("cnclprop_case1", include_str!("../../scripts/cnclprop_case1.hlk")),
    ("cnclprop_case2", include_str!("../../scripts/cnclprop_case2.hlk")),
    ("cnclprop_akl4", include_str!("../../scripts/cnclprop_akl4.hlk")),
    ("cnclprop_case3", include_str!("../../scripts/cnclprop_case3.hlk")),
    ("cnclprop_case4", include_str!("../../scripts/cnclprop_case4.hlk")),
    ("thrmT", include_str!("../../scripts/thrmT.hlk")),
    ("thrmP", include_str!("../../scripts/thrmP.hlk")),
];

#[derive(Clone, Debug, PartialEq, Eq)]
enum Claim {
    Class(String),
    Expr(String),
}

/// A parsed derivation script.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script {
    pub name: String,
    pub dims: Vec<u32>,
    /// `(name, low, high)` with brace expressions in `n`.
    pub vars: Vec<(String, String, String)>,
    claim: Claim,
    /// `(line number, text)` of every step.
    pub steps: Vec<(usize, String)>,
}

fn script_err(script: &str, line: usize, message: impl Into<String>) -> RewriteError {
    RewriteError::Script { script: script.to_string(), line, message: message.into() }
}

impl Script {
    pub fn parse(src: &str) -> Result<Script, RewriteError> {
        let mut name = None;
        let mut dims = Vec::new();
        let mut vars = Vec::new();
        let mut claim = None;
        let mut steps = Vec::new();
        let mut in_body = false;
        let who = |name: &Option<String>| name.clone().unwrap_or_else(|| "?".into());
        for (i, raw) in src.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if in_body {
                steps.push((line_no, line.to_string()));
                continue;
            }
            if line == "---" {
                in_body = true;
                continue;
            }
            let (key, value) =
                line.split_once(':').ok_or_else(|| script_err(&who(&name), line_no, "expected `key: value` header"))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "dims" => {
                    for d in value.split_whitespace() {
                        let d: u32 = d.parse().map_err(|_| script_err(&who(&name), line_no, "bad dimension"))?;
                        if d < 2 {
                            return Err(script_err(&who(&name), line_no, "dimensions start at 2"));
                        }
                        dims.push(d);
                    }
                }
                "vars" => {
                    for spec in value.split(';') {
                        let (v, range) = spec
                            .split_once('=')
                            .ok_or_else(|| script_err(&who(&name), line_no, "expected `var = lo..hi`"))?;
                        let (lo, hi) = range
                            .split_once("..")
                            .ok_or_else(|| script_err(&who(&name), line_no, "expected `lo..hi`"))?;
                        vars.push((v.trim().to_string(), lo.trim().to_string(), hi.trim().to_string()));
                    }
                }
                "claim" => claim = Some(Claim::Class(value.to_string())),
                "claim-expr" => claim = Some(Claim::Expr(value.to_string())),
                other => return Err(script_err(&who(&name), line_no, format!("unknown header `{other}`"))),
            }
        }
        let name = name.ok_or_else(|| script_err("?", 0, "missing `name:` header"))?;
        let claim = claim.ok_or_else(|| script_err(&name, 0, "missing `claim:` header"))?;
        if dims.is_empty() {
            return Err(script_err(&name, 0, "missing `dims:` header"));
        }
        if steps.is_empty() {
            return Err(script_err(&name, 0, "no steps"));
        }
        Ok(Script { name, dims, vars, claim, steps })
    }

    /// All `(n, vars)` instances of the script.
    fn instances(&self) -> Result<Vec<(u32, BTreeMap<String, i64>)>, RewriteError> {
        let mut out = Vec::new();
        for &n in &self.dims {
            let mut partial = vec![BTreeMap::new()];
            for (v, lo, hi) in &self.vars {
                let mut next = Vec::new();
                for env in &partial {
                    let lo = eval_braced(lo, n, env).map_err(|m| script_err(&self.name, 0, m))?;
                    let hi = eval_braced(hi, n, env).map_err(|m| script_err(&self.name, 0, m))?;
                    for x in lo..=hi {
                        let mut e = env.clone();
                        e.insert(v.clone(), x);
                        next.push(e);
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|env| (n, env)));
        }
        Ok(out)
    }
}

/// Integer arithmetic over `n` and script variables.
fn eval_int(text: &str, n: u32, env: &BTreeMap<String, i64>) -> Result<i64, String> {
    struct P<'a> {
        s: &'a [u8],
        i: usize,
        n: i64,
        env: &'a BTreeMap<String, i64>,
    }
    impl P<'_> {
        fn ws(&mut self) {
            while self.i < self.s.len() && self.s[self.i] == b' ' {
                self.i += 1;
            }
        }
        fn sum(&mut self) -> Result<i64, String> {
            let mut v = self.prod()?;
            loop {
                self.ws();
                match self.s.get(self.i) {
                    Some(b'+') => {
                        self.i += 1;
                        v += self.prod()?;
                    }
                    Some(b'-') => {
                        self.i += 1;
                        v -= self.prod()?;
                    }
                    _ => return Ok(v),
                }
            }
        }
        fn prod(&mut self) -> Result<i64, String> {
            let mut v = self.atom()?;
            loop {
                self.ws();
                match self.s.get(self.i) {
                    Some(b'*') => {
                        self.i += 1;
                        v *= self.atom()?;
                    }
                    Some(b'/') => {
                        self.i += 1;
                        let d = self.atom()?;
                        if d == 0 || v % d != 0 {
                            return Err("inexact integer division".into());
                        }
                        v /= d;
                    }
                    _ => return Ok(v),
                }
            }
        }
        fn atom(&mut self) -> Result<i64, String> {
            self.ws();
            match self.s.get(self.i) {
                Some(b'-') => {
                    self.i += 1;
                    Ok(-self.atom()?)
                }
                Some(b'(') => {
                    self.i += 1;
                    let v = self.sum()?;
                    self.ws();
                    if self.s.get(self.i) != Some(&b')') {
                        return Err("expected `)`".into());
                    }
                    self.i += 1;
                    Ok(v)
                }
                Some(c) if c.is_ascii_digit() => {
                    let st = self.i;
                    while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                        self.i += 1;
                    }
                    std::str::from_utf8(&self.s[st..self.i])
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| "integer out of range".to_string())
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let st = self.i;
                    while self.i < self.s.len() && self.s[self.i].is_ascii_alphanumeric() {
                        self.i += 1;
                    }
                    let name = std::str::from_utf8(&self.s[st..self.i]).unwrap_or("");
                    if name == "n" {
                        return Ok(self.n);
                    }
                    self.env.get(name).copied().ok_or_else(|| format!("unknown variable `{name}`"))
                }
                _ => Err("expected a number".into()),
            }
        }
    }
    let mut p = P { s: text.as_bytes(), i: 0, n: i64::from(n), env };
    let v = p.sum()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(format!("trailing input in `{{{text}}}`"));
    }
    Ok(v)
}

/// Replaces every `{...}` by its integer value.
fn substitute(text: &str, n: u32, env: &BTreeMap<String, i64>) -> Result<String, String> {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').ok_or("unclosed `{`")? + open;
        out.push_str(&eval_int(&rest[open + 1..close], n, env)?.to_string());
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn eval_braced(text: &str, n: u32, env: &BTreeMap<String, i64>) -> Result<i64, String> {
    let t = text.trim();
    let inner = t.strip_prefix('{').and_then(|x| x.strip_suffix('}')).unwrap_or(t);
    eval_int(inner, n, env)
}

/// Record of one executed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub index: usize,
    pub line: usize,
    pub text: String,
    pub rules: Vec<String>,
    pub terms: usize,
    /// Expression after the step, kept for `show` steps.
    pub snapshot: Option<String>,
}

/// One replayed instance of a script (fixed `n` and variables).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub n: u32,
    pub vars: BTreeMap<String, i64>,
    pub steps: Vec<StepRecord>,
    pub leading: KernelExpr,
    pub residual: KernelExpr,
    pub computed: KernelClass,
    pub claimed: KernelClass,
    pub certified: bool,
}

impl Instance {
    pub fn label(&self) -> String {
        let mut s = format!("n={}", self.n);
        for (k, v) in &self.vars {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub script: String,
    pub instances: Vec<Instance>,
}

impl Derivation {
    pub fn certified(&self) -> bool {
        !self.instances.is_empty() && self.instances.iter().all(|i| i.certified)
    }

    pub fn failures(&self) -> Vec<String> {
        self.instances
            .iter()
            .filter(|i| !i.certified)
            .map(|i| format!("{}: computed {} but claimed {}", i.label(), i.computed, i.claimed))
            .collect()
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "script {}", self.script)?;
        for inst in &self.instances {
            writeln!(f, "[{}]", inst.label())?;
            for s in &inst.steps {
                let rules = if s.rules.is_empty() { String::new() } else { format!("  via {}", s.rules.join(",")) };
                writeln!(f, "  {:>3} (line {:>3}) {}  -> {} terms{}", s.index, s.line, s.text, s.terms, rules)?;
                if let Some(snap) = &s.snapshot {
                    writeln!(f, "        = {snap}")?;
                }
            }
            writeln!(f, "  leading:  {}", inst.leading)?;
            writeln!(f, "  computed: {}", inst.computed)?;
            writeln!(f, "  claimed:  {}", inst.claimed)?;
            writeln!(f, "  {}", if inst.certified { "certified" } else { "NOT certified" })?;
        }
        write!(f, "{}", if self.certified() { "certified" } else { "certification failed" })
    }
}

/// The set of scripts available for replay.
#[derive(Clone, Debug, Default)]
pub struct ScriptBook {
    scripts: BTreeMap<String, Script>,
}

impl ScriptBook {
    /// Scripts shipped with the library.
    pub fn builtin() -> ScriptBook {
        let mut book = ScriptBook::default();
        for (name, src) in BUILTIN {
            match Script::parse(src) {
                Ok(s) => {
                    debug_assert_eq!(&s.name, name);
                    book.scripts.insert(s.name.clone(), s);
                }
                Err(e) => panic!("shipped script {name} is malformed: {e}"),
            }
        }
        book
    }

    pub fn insert_source(&mut self, src: &str) -> Result<String, RewriteError> {
        let s = Script::parse(src)?;
        let name = s.name.clone();
        self.scripts.insert(name.clone(), s);
        Ok(name)
    }

    /// Adds every `*.hlk` file of a directory, replacing same-named scripts.
    pub fn load_dir(&mut self, dir: &Path) -> Result<Vec<String>, RewriteError> {
        let mut names = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| RewriteError::Io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "hlk"))
            .collect();
        paths.sort();
        for p in paths {
            let src = std::fs::read_to_string(&p).map_err(|e| RewriteError::Io(e.to_string()))?;
            names.push(self.insert_source(&src)?);
        }
        Ok(names)
    }

    pub fn names(&self) -> Vec<&str> {
        self.scripts.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Script> {
        self.scripts.get(name)
    }

    pub fn replay(&self, name: &str) -> Result<Derivation, RewriteError> {
        Replayer::new(self).replay(name)
    }
}

/// Replays scripts, memoizing imported instances.
pub struct Replayer<'a> {
    book: &'a ScriptBook,
    cache: RefCell<HashMap<(String, u32, Vec<(String, i64)>), Rc<Instance>>>,
    active: RefCell<Vec<String>>,
}

impl<'a> Replayer<'a> {
    pub fn new(book: &'a ScriptBook) -> Self {
        Replayer { book, cache: RefCell::new(HashMap::new()), active: RefCell::new(Vec::new()) }
    }

    pub fn replay(&self, name: &str) -> Result<Derivation, RewriteError> {
        let script = self.book.get(name).ok_or_else(|| RewriteError::UnknownScript(name.to_string()))?;
        let mut instances = Vec::new();
        for (n, env) in script.instances()? {
            instances.push((*self.instance(script, n, env)?).clone());
        }
        Ok(Derivation { script: name.to_string(), instances })
    }

    fn instance(&self, script: &Script, n: u32, env: BTreeMap<String, i64>) -> Result<Rc<Instance>, RewriteError> {
        let key = (script.name.clone(), n, env.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>());
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        if self.active.borrow().contains(&script.name) {
            return Err(script_err(&script.name, 0, "cyclic import"));
        }
        self.active.borrow_mut().push(script.name.clone());
        let result = Run::new(self, script, n, env).execute();
        self.active.borrow_mut().pop();
        let inst = Rc::new(result?);
        self.cache.borrow_mut().insert(key, inst.clone());
        Ok(inst)
    }
}

struct Run<'r, 'a> {
    replayer: &'r Replayer<'a>,
    script: &'r Script,
    n: u32,
    env: BTreeMap<String, i64>,
    cur: KernelExpr,
    leading: KernelExpr,
    residual: KernelExpr,
    regs: HashMap<String, KernelExpr>,
    steps: Vec<StepRecord>,
    ops: usize,
}

fn rename_term(t: &KernelTerm, map: &BTreeMap<Idx, Idx>) -> KernelTerm {
    let r = |i: Idx| *map.get(&i).unwrap_or(&i);
    let atoms = t
        .atoms
        .iter()
        .map(|a| match *a {
            KernelAtom::Named { sym, starred, exponent } => {
                let sym = match sym {
                    Named::Lrho(i) => Named::Lrho(r(i)),
                    Named::Lbarrho(i) => Named::Lbarrho(r(i)),
                    Named::Coord(i) => Named::Coord(r(i)),
                    Named::CoordBar(i) => Named::CoordBar(r(i)),
                    Named::Delta(a, b) => Named::Delta(r(a), r(b)),
                    other => other,
                };
                KernelAtom::Named { sym, starred, exponent }
            }
            other => other,
        })
        .collect();
    KernelTerm::new(t.coeff, atoms)
}

fn rename(e: &KernelExpr, map: &BTreeMap<Idx, Idx>) -> KernelExpr {
    KernelExpr::from_terms(e.n, e.terms.iter().map(|t| rename_term(t, map)).collect()).normalize()
}

impl<'r, 'a> Run<'r, 'a> {
    fn new(replayer: &'r Replayer<'a>, script: &'r Script, n: u32, env: BTreeMap<String, i64>) -> Self {
        Run {
            replayer,
            script,
            n,
            env,
            cur: KernelExpr::zero(n),
            leading: KernelExpr::zero(n),
            residual: KernelExpr::zero(n),
            regs: HashMap::new(),
            steps: Vec::new(),
            ops: 0,
        }
    }

    fn err(&self, index: usize, line: usize, message: impl fmt::Display) -> RewriteError {
        let vars: Vec<String> = self.env.iter().map(|(k, v)| format!(" {k}={v}")).collect();
        RewriteError::Step {
            script: self.script.name.clone(),
            step: index,
            line,
            message: format!("[n={}{}] {message}", self.n, vars.concat()),
        }
    }

    fn expr(&self, text: &str) -> Result<KernelExpr, String> {
        let t = text.trim();
        if let Some(reg) = t.strip_prefix('$') {
            return self.regs.get(reg).cloned().ok_or_else(|| format!("unknown register `{reg}`"));
        }
        parse_template(t, self.n).map(|e| e.normalize()).map_err(|e| e.to_string())
    }

    fn tick(&mut self) -> Result<(), String> {
        self.ops += 1;
        if self.ops > STEP_LIMIT {
            return Err(format!("step limit {STEP_LIMIT} exceeded"));
        }
        Ok(())
    }

    fn execute(mut self) -> Result<Instance, RewriteError> {
        let steps = self.script.steps.clone();
        for (index, (line, raw)) in steps.iter().enumerate() {
            let (text, rules) = match raw.strip_prefix("sum ") {
                Some(spec) => {
                    self.sum(spec).map_err(|m| self.err(index, *line, m))?;
                    (raw.clone(), Vec::new())
                }
                None => {
                    let text = substitute(raw, self.n, &self.env).map_err(|m| self.err(index, *line, m))?;
                    let rules = self.step(&text).map_err(|m| self.err(index, *line, m))?;
                    (text, rules)
                }
            };
            let snapshot = (text == "show").then(|| self.cur.to_string());
            self.steps.push(StepRecord { index, line: *line, text, rules, terms: self.cur.terms.len(), snapshot });
        }
        self.residual = self.residual.add(&self.cur);
        let claimed = match &self.script.claim {
            Claim::Class(c) => {
                let c = substitute(c, self.n, &self.env).map_err(|m| script_err(&self.script.name, 0, m))?;
                KernelClass::parse(&c).ok_or_else(|| script_err(&self.script.name, 0, format!("bad claim `{c}`")))?
            }
            Claim::Expr(c) => {
                let c = substitute(c, self.n, &self.env).map_err(|m| script_err(&self.script.name, 0, m))?;
                let e = parse_template(&c, self.n).map_err(|e| script_err(&self.script.name, 0, e.to_string()))?;
                classify(&e.normalize()).map_err(|e| script_err(&self.script.name, 0, e.to_string()))?.class
            }
        };
        let computed = if self.residual.is_zero() {
            KernelClass::default()
        } else {
            classify(&self.residual).map_err(|e| script_err(&self.script.name, 0, format!("residual: {e}")))?.class
        };
        let (computed, claimed) = (computed.reduced(), claimed.reduced());
        Ok(Instance {
            n: self.n,
            vars: self.env.clone(),
            steps: self.steps,
            leading: self.leading,
            residual: self.residual,
            certified: computed == claimed,
            computed,
            claimed,
        })
    }

    fn step(&mut self, text: &str) -> Result<Vec<String>, String> {
        self.tick()?;
        let (op, arg) = match text.split_once(char::is_whitespace) {
            Some((o, a)) => (o, a.trim()),
            None => (text, ""),
        };
        let mut rules = Vec::new();
        match op {
            "start" => self.cur = self.expr(arg)?,
            "field" => {
                let f = FieldSymbol::parse(arg).map_err(|e| e.to_string())?;
                let r = apply_field(&f, &self.cur).map_err(|e| e.to_string())?;
                rules.extend(r.rules.iter().map(|s| s.to_string()));
                self.cur = r.expr;
            }
            "mul" => self.cur = self.cur.mul(&self.expr(arg)?),
            "add" => self.cur = self.cur.add(&self.expr(arg)?),
            "sub" => self.cur = self.cur.sub(&self.expr(arg)?),
            "star" => self.cur = self.cur.star(),
            "show" => {}
            "let" => {
                self.regs.insert(arg.to_string(), self.cur.clone());
            }
            "rename" => self.cur = rename(&self.cur, &parse_renames(arg.split_whitespace())?),
            "rest" => {
                self.residual = self.residual.add(&self.cur);
                self.cur = KernelExpr::zero(self.n);
            }
            "lead" => {
                let want = self.expr(arg)?;
                for t in &want.terms {
                    match self.cur.terms.iter().find(|c| c.atoms == t.atoms) {
                        Some(c) if c.coeff == t.coeff => {}
                        Some(c) => {
                            return Err(format!(
                                "leading term `{}` has coefficient {:?}, expected {:?}",
                                KernelExpr::from_term(self.n, t.clone()),
                                c.coeff,
                                t.coeff
                            ))
                        }
                        None => {
                            return Err(format!(
                                "leading term `{}` not present in `{}`",
                                KernelExpr::from_term(self.n, t.clone()),
                                self.cur
                            ))
                        }
                    }
                }
                self.cur = self.cur.sub(&want);
                self.leading = self.leading.add(&want);
            }
            "expect" => {
                let want = self.expr(arg)?;
                if want != self.cur {
                    return Err(format!("expected `{want}`, have `{}`", self.cur));
                }
            }
            "apply" => rules.push(self.apply(arg)?),
            _ if op.starts_with("import") => rules.extend(self.import(op, arg)?),
            _ => return Err(format!("unknown step `{op}`")),
        }
        Ok(rules)
    }

    /// `sum v = lo..hi EXPR` adds EXPR for every integer `v` in the range.
    fn sum(&mut self, spec: &str) -> Result<(), String> {
        let (var, rest) = spec.split_once('=').ok_or("expected `sum var = lo..hi expr`")?;
        let var = var.trim();
        let (range, body) = rest.trim().split_once(char::is_whitespace).ok_or("sum needs an expression")?;
        let (lo, hi) = range.split_once("..").ok_or("expected `lo..hi`")?;
        let bound = |b: &str| -> Result<i64, String> {
            substitute(b, self.n, &self.env)?.trim().parse::<i64>().map_err(|_| format!("bad bound `{b}`"))
        };
        let (lo, hi) = (bound(lo)?, bound(hi)?);
        for v in lo..=hi {
            self.tick()?;
            let mut env = self.env.clone();
            env.insert(var.to_string(), v);
            let e = self.expr(&substitute(body, self.n, &env)?)?;
            self.cur = self.cur.add(&e);
        }
        Ok(())
    }

    fn apply(&mut self, arg: &str) -> Result<String, String> {
        let mut words = arg.split_whitespace();
        let rule = words.next().ok_or("apply needs a rule")?;
        if words.next() != Some("at") {
            return Err("expected `apply <rule> at <path>`".into());
        }
        let path = words.next().ok_or("missing path")?;
        let repeat = match words.next() {
            Some("repeat") => true,
            None => false,
            Some(w) => return Err(format!("unexpected `{w}`")),
        };
        let (rule, starred) = match rule.strip_suffix('*') {
            Some(r) => (r, true),
            None => (rule, false),
        };
        let (id, index) = match rule.split_once('[') {
            Some((id, rest)) => {
                let c = rest.strip_suffix(']').and_then(|s| s.chars().next()).ok_or("bad rule index")?;
                (id, Some(Idx(c)))
            }
            None => (rule, None),
        };
        let sub = Substitution::new(id, index, starred, self.n).map_err(|e| e.to_string())?;
        let sel = if path == "*" {
            Selection::All
        } else {
            Selection::Terms(
                path.split(',')
                    .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad path `{path}`")))
                    .collect::<Result<_, _>>()?,
            )
        };
        self.cur = apply_substitution(&self.cur, &sub, &sel).map_err(|e| e.to_string())?;
        if repeat {
            while let Ok(next) = apply_substitution(&self.cur, &sub, &Selection::All) {
                self.tick()?;
                self.cur = next;
            }
        }
        Ok(format!("{}{}", sub.id, if starred { "*" } else { "" }))
    }

    fn import(&mut self, op: &str, arg: &str) -> Result<Vec<String>, String> {
        let (kind, starred) = match op.strip_suffix('*') {
            Some(k) => (k, true),
            None => (op, false),
        };
        let (lead, class) = match kind {
            "import" => (true, true),
            "import-lead" => (true, false),
            "import-class" => (false, true),
            _ => return Err(format!("unknown step `{op}`")),
        };
        let mut words = arg.split_whitespace();
        let name = words.next().ok_or("import needs a script name")?;
        let mut env = BTreeMap::new();
        let mut renames = Vec::new();
        let mut renaming = false;
        for w in words {
            if renaming {
                renames.push(w);
            } else if w == "rename" {
                renaming = true;
            } else if let Some((k, v)) = w.split_once('=') {
                env.insert(k.to_string(), v.parse::<i64>().map_err(|_| format!("bad value in `{w}`"))?);
            } else {
                return Err(format!("unexpected `{w}` in import"));
            }
        }
        let map = parse_renames(renames.into_iter())?;
        let script = self.replayer.book.get(name).ok_or_else(|| format!("unknown script `{name}`"))?;
        let declared: Vec<&String> = script.vars.iter().map(|v| &v.0).collect();
        if env.keys().collect::<Vec<_>>() != declared {
            return Err(format!("import of `{name}` must bind exactly {declared:?}"));
        }
        let inst = self.replayer.instance(script, self.n, env).map_err(|e| e.to_string())?;
        let mut add = KernelExpr::zero(self.n);
        if lead {
            add = add.add(&inst.leading);
        }
        if class {
            for (p, t) in &inst.claimed.groups {
                let rep = representative(*p, *t, self.n).map_err(|e| e.to_string())?;
                add = add.add(&KernelExpr::from_term(self.n, rep));
            }
        }
        let mut add = rename(&add, &map);
        if starred {
            add = add.star();
        }
        self.cur = self.cur.add(&add);
        Ok(vec![format!("{name}{}", if inst.certified { "" } else { " (uncertified)" })])
    }
}

fn parse_renames<'x>(words: impl Iterator<Item = &'x str>) -> Result<BTreeMap<Idx, Idx>, String> {
    let mut map = BTreeMap::new();
    for w in words {
        let (a, b) = w.split_once(':').ok_or_else(|| format!("bad rename `{w}`"))?;
        let (a, b) = (a.chars().next(), b.chars().next());
        match (a, b) {
            (Some(a), Some(b)) => {
                map.insert(Idx(a), Idx(b));
            }
            _ => return Err(format!("bad rename `{w}`")),
        }
    }
    Ok(map)
}

/// Replays a shipped script.
pub fn replay(name: &str) -> Result<Derivation, RewriteError> {
    ScriptBook::builtin().replay(name)
}
