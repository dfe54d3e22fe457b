//! The OpenQASM 2.0 subset handled by the toolkit: lexing, statement parsing,
//! validation and canonical serialization.
//!
//! Only the gates in [`GateKind`] plus register declarations, `measure` and
//! `barrier` are understood. Gate definitions, `opaque`, `if` and `reset` are
//! rejected in strict mode and skipped in lenient mode.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    U1,
    U2,
    U3,
    Cx,
    Cz,
    Cu1,
    Swap,
    Ccx,
    Id,
    Measure,
    Barrier,
}

impl GateKind {
    pub const ALL: [GateKind; 22] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::U1,
        GateKind::U2,
        GateKind::U3,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Cu1,
        GateKind::Swap,
        GateKind::Ccx,
        GateKind::Id,
        GateKind::Measure,
        GateKind::Barrier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U1 => "u1",
            GateKind::U2 => "u2",
            GateKind::U3 => "u3",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Cu1 => "cu1",
            GateKind::Swap => "swap",
            GateKind::Ccx => "ccx",
            GateKind::Id => "id",
            GateKind::Measure => "measure",
            GateKind::Barrier => "barrier",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        GateKind::ALL.iter().copied().find(|g| g.name() == name)
    }

    /// Number of qubit operands. `measure` additionally takes one classical
    /// bit; `barrier` is variadic and reports its minimum of one.
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz | GateKind::Cu1 | GateKind::Swap => 2,
            GateKind::Ccx => 3,
            _ => 1,
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 | GateKind::Cu1 => 1,
            GateKind::U2 => 2,
            GateKind::U3 => 3,
            _ => 0,
        }
    }

    /// True for the unitary gates that appear in `gate_app` statements.
    pub fn is_unitary(self) -> bool {
        !matches!(self, GateKind::Measure | GateKind::Barrier)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An angle parameter: its evaluated value and the canonical expression text
/// it was written as. Vocabulary identity uses the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: f64,
    pub text: String,
}

impl Param {
    /// Parameter from a plain number, rendered with the shortest decimal
    /// string that round-trips.
    pub fn from_value(value: f64) -> Param {
        Param {
            value,
            text: format_real(value),
        }
    }

    /// Parameter from an expression such as `pi/4`.
    pub fn from_expr(expr: &str) -> Result<Param, SyntaxError> {
        let tokens = lex(expr);
        let mut p = Parser::new(&tokens);
        let param = p.expr_param()?;
        match p.peek() {
            Tok::Eof => Ok(param),
            _ => Err(p.error("trailing input after expression")),
        }
    }
}

/// A qubit or classical-bit reference. `index == None` names a whole
/// register, which the subset only allows in `barrier`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operand {
    pub register: String,
    pub index: Option<usize>,
}

impl Operand {
    pub fn new(register: impl Into<String>, index: usize) -> Operand {
        Operand {
            register: register.into(),
            index: Some(index),
        }
    }

    pub fn whole(register: impl Into<String>) -> Operand {
        Operand {
            register: register.into(),
            index: None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]", self.register, i),
            None => f.write_str(&self.register),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Header,
    Include,
    QregDecl,
    CregDecl,
    GateApp,
    Measure,
    Barrier,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Header { version: String },
    Include { file: String },
    Qreg { name: String, size: usize },
    Creg { name: String, size: usize },
    Gate {
        gate: GateKind,
        params: Vec<Param>,
        qubits: Vec<Operand>,
    },
    Measure { qubit: Operand, clbit: Operand },
    Barrier { qubits: Vec<Operand> },
}

impl Statement {
    pub fn header() -> Statement {
        Statement::Header {
            version: "2.0".into(),
        }
    }

    pub fn include_qelib() -> Statement {
        Statement::Include {
            file: "qelib1.inc".into(),
        }
    }

    pub fn gate(gate: GateKind, params: Vec<Param>, qubits: Vec<Operand>) -> Statement {
        Statement::Gate {
            gate,
            params,
            qubits,
        }
    }

    pub fn kind(&self) -> StatementKind {
        match self {
            Statement::Header { .. } => StatementKind::Header,
            Statement::Include { .. } => StatementKind::Include,
            Statement::Qreg { .. } => StatementKind::QregDecl,
            Statement::Creg { .. } => StatementKind::CregDecl,
            Statement::Gate { .. } => StatementKind::GateApp,
            Statement::Measure { .. } => StatementKind::Measure,
            Statement::Barrier { .. } => StatementKind::Barrier,
        }
    }

    pub fn gate_kind(&self) -> Option<GateKind> {
        match self {
            Statement::Gate { gate, .. } => Some(*gate),
            Statement::Measure { .. } => Some(GateKind::Measure),
            Statement::Barrier { .. } => Some(GateKind::Barrier),
            _ => None,
        }
    }

    pub fn qubit_operands(&self) -> &[Operand] {
        match self {
            Statement::Gate { qubits, .. } | Statement::Barrier { qubits } => qubits,
            Statement::Measure { qubit, .. } => std::slice::from_ref(qubit),
            _ => &[],
        }
    }

    pub fn classical_operands(&self) -> &[Operand] {
        match self {
            Statement::Measure { clbit, .. } => std::slice::from_ref(clbit),
            _ => &[],
        }
    }

    pub fn params(&self) -> &[Param] {
        match self {
            Statement::Gate { params, .. } => params,
            _ => &[],
        }
    }

    /// Gate applications, measurements and barriers.
    pub fn is_body(&self) -> bool {
        matches!(
            self,
            Statement::Gate { .. } | Statement::Measure { .. } | Statement::Barrier { .. }
        )
    }

    /// Statements that count toward a circuit's gate count.
    pub fn is_counted_gate(&self) -> bool {
        matches!(self, Statement::Gate { .. } | Statement::Measure { .. })
    }

    /// Largest qubit index referenced, ignoring the register name.
    pub fn max_qubit_index(&self) -> Option<usize> {
        self.qubit_operands().iter().filter_map(|o| o.index).max()
    }

    /// Violations detectable from the statement alone (no register context).
    pub fn local_violations(&self) -> Vec<ViolationKind> {
        let mut out = Vec::new();
        if let Statement::Gate { gate, params, .. } = self {
            if params.len() != gate.param_count() || params.iter().any(|p| !p.value.is_finite()) {
                out.push(ViolationKind::MalformedParam);
            }
        }
        let ops = self.qubit_operands();
        let duplicate = ops.iter().enumerate().any(|(i, a)| {
            ops[..i]
                .iter()
                .any(|b| b.register == a.register && (a.index.is_none() || b.index.is_none() || a.index == b.index))
        });
        if duplicate {
            out.push(ViolationKind::DuplicateOperand);
        }
        out
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Header { version } => write!(f, "OPENQASM {version};"),
            Statement::Include { file } => write!(f, "include \"{file}\";"),
            Statement::Qreg { name, size } => write!(f, "qreg {name}[{size}];"),
            Statement::Creg { name, size } => write!(f, "creg {name}[{size}];"),
            Statement::Gate {
                gate,
                params,
                qubits,
            } => {
                f.write_str(gate.name())?;
                if !params.is_empty() {
                    f.write_str("(")?;
                    write_joined(f, params.iter().map(|p| p.text.as_str()))?;
                    f.write_str(")")?;
                }
                f.write_str(" ")?;
                write_joined(f, qubits.iter())?;
                f.write_str(";")
            }
            Statement::Measure { qubit, clbit } => write!(f, "measure {qubit} -> {clbit};"),
            Statement::Barrier { qubits } => {
                f.write_str("barrier ")?;
                write_joined(f, qubits.iter())?;
                f.write_str(";")
            }
        }
    }
}

fn write_joined<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: impl Iterator<Item = T>) -> fmt::Result {
    for (i, item) in items.enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

impl FromStr for Statement {
    type Err = SyntaxError;

    /// Parses exactly one statement in strict mode.
    fn from_str(s: &str) -> Result<Statement, SyntaxError> {
        let tokens = lex(s);
        let mut p = Parser::new(&tokens);
        let stmt = p.statement()?;
        match p.peek() {
            Tok::Eof => Ok(stmt),
            _ => Err(p.error("expected a single statement")),
        }
    }
}

/// Shortest decimal rendering of a finite real that parses back to the same
/// value.
pub fn format_real(value: f64) -> String {
    let s = format!("{value}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    pub statements: Vec<Statement>,
    pub qreg_sizes: BTreeMap<String, usize>,
    pub creg_sizes: BTreeMap<String, usize>,
}

impl Circuit {
    /// Builds a circuit, collecting register sizes from the declarations
    /// (the first declaration of a name wins).
    pub fn from_statements(statements: Vec<Statement>) -> Circuit {
        let mut qreg_sizes = BTreeMap::new();
        let mut creg_sizes = BTreeMap::new();
        for s in &statements {
            match s {
                Statement::Qreg { name, size } => {
                    qreg_sizes.entry(name.clone()).or_insert(*size);
                }
                Statement::Creg { name, size } => {
                    creg_sizes.entry(name.clone()).or_insert(*size);
                }
                _ => {}
            }
        }
        Circuit {
            statements,
            qreg_sizes,
            creg_sizes,
        }
    }

    /// Standard three-line prologue plus a body.
    pub fn with_body(qubits: usize, clbits: usize, body: Vec<Statement>) -> Circuit {
        let mut statements = vec![
            Statement::header(),
            Statement::include_qelib(),
            Statement::Qreg {
                name: "q".into(),
                size: qubits,
            },
        ];
        if clbits > 0 {
            statements.push(Statement::Creg {
                name: "c".into(),
                size: clbits,
            });
        }
        statements.extend(body);
        Circuit::from_statements(statements)
    }

    pub fn body(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter().filter(|s| s.is_body())
    }

    /// Total declared qubits across all quantum registers.
    pub fn num_qubits(&self) -> usize {
        self.qreg_sizes.values().sum()
    }

    /// Gate applications plus measurements. Declarations, header, include and
    /// barriers are not counted.
    pub fn gate_count(&self) -> usize {
        self.statements.iter().filter(|s| s.is_counted_gate()).count()
    }

    /// Maps each declared quantum register to the offset of its first qubit
    /// in a flat numbering, following declaration order.
    pub fn qubit_offsets(&self) -> BTreeMap<String, usize> {
        let mut offsets = BTreeMap::new();
        let mut next = 0;
        for s in &self.statements {
            if let Statement::Qreg { name, size } = s {
                if !offsets.contains_key(name) {
                    offsets.insert(name.clone(), next);
                    next += size;
                }
            }
        }
        offsets
    }
}

pub fn gate_count(c: &Circuit) -> usize {
    c.gate_count()
}

/// Canonical text: one statement per line, LF line endings.
pub fn serialize(c: &Circuit) -> String {
    let mut out = String::new();
    for s in &c.statements {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    MissingHeader,
    UndeclaredRegister,
    IndexOutOfRange,
    DuplicateOperand,
    MalformedParam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub statement: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks the circuit invariants: a `OPENQASM 2.0;` / `include` / `qreg`
/// prologue, every operand referencing a register declared earlier with an
/// in-range index, distinct operands, and well-formed parameters.
pub fn validate(c: &Circuit) -> ValidationReport {
    let mut violations = Vec::new();
    let s = &c.statements;

    let prologue = [
        matches!(s.first(), Some(Statement::Header { version }) if version == "2.0"),
        matches!(s.get(1), Some(Statement::Include { .. })),
        matches!(s.get(2), Some(Statement::Qreg { .. })),
    ];
    if let Some(pos) = prologue.iter().position(|ok| !ok) {
        violations.push(Violation {
            statement: pos,
            kind: ViolationKind::MissingHeader,
            detail: ["missing `OPENQASM 2.0;`", "missing `include`", "missing `qreg` declaration"][pos].into(),
        });
    }

    let mut qregs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cregs: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, stmt) in s.iter().enumerate() {
        match stmt {
            Statement::Qreg { name, size } => {
                qregs.entry(name).or_insert(*size);
            }
            Statement::Creg { name, size } => {
                cregs.entry(name).or_insert(*size);
            }
            _ => {}
        }
        for kind in stmt.local_violations() {
            violations.push(Violation {
                statement: i,
                kind,
                detail: format!("`{stmt}`"),
            });
        }
        for op in stmt.qubit_operands() {
            check_operand(i, op, &qregs, "quantum", &mut violations);
        }
        for op in stmt.classical_operands() {
            check_operand(i, op, &cregs, "classical", &mut violations);
        }
    }
    ValidationReport { violations }
}

fn check_operand(
    statement: usize,
    op: &Operand,
    regs: &BTreeMap<&str, usize>,
    what: &str,
    out: &mut Vec<Violation>,
) {
    match regs.get(op.register.as_str()) {
        None => out.push(Violation {
            statement,
            kind: ViolationKind::UndeclaredRegister,
            detail: format!("{what} register `{}` is not declared", op.register),
        }),
        Some(&size) => {
            if let Some(idx) = op.index {
                if idx >= size {
                    out.push(Violation {
                        statement,
                        kind: ViolationKind::IndexOutOfRange,
                        detail: format!("`{op}` but `{}` has size {size}", op.register),
                    });
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// First malformed statement aborts the parse.
    #[default]
    Strict,
    /// Malformed statements are skipped and reported as warnings.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub circuit: Circuit,
    pub warnings: Vec<SyntaxError>,
}

/// Parses QASM source. Comments are dropped. In lenient mode parsing never
/// fails; skipped statements are listed in `warnings`.
pub fn parse(text: &str, mode: ParseMode) -> Result<Parsed, SyntaxError> {
    let tokens = lex(text);
    let mut p = Parser::new(&tokens);
    let mut statements = Vec::new();
    let mut warnings = Vec::new();
    while !matches!(p.peek(), Tok::Eof) {
        let start = p.pos;
        match p.statement() {
            Ok(s) => statements.push(s),
            Err(e) => match mode {
                ParseMode::Strict => return Err(e),
                ParseMode::Lenient => {
                    warnings.push(e);
                    p.pos = start;
                    p.skip_statement();
                }
            },
        }
    }
    Ok(Parsed {
        circuit: Circuit::from_statements(statements),
        warnings,
    })
}

pub fn parse_strict(text: &str) -> Result<Circuit, SyntaxError> {
    parse(text, ParseMode::Strict).map(|p| p.circuit)
}

pub fn parse_lenient(text: &str) -> Parsed {
    parse(text, ParseMode::Lenient).expect("lenient parsing does not fail")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Bad(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Vec<Spanned> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, column);
        let mut push = |tok: Tok| {
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            })
        };
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            push(Tok::Number(chars[start..i].iter().collect()));
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                i += 1;
            }
            if i < chars.len() && chars[i] == '"' {
                push(Tok::Str(chars[start + 1..i].iter().collect()));
                i += 1;
            } else {
                push(Tok::Bad('"'));
            }
        } else {
            let tok = match c {
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '-' if chars.get(i + 1) == Some(&'>') => {
                    i += 1;
                    Tok::Arrow
                }
                '-' => Tok::Minus,
                other => Tok::Bad(other),
            };
            push(tok);
            i += 1;
        }
        column += i - start;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    out
}

struct Parser<'a> {
    tokens: &'a [Spanned],
    pos: usize,
}

/// Expression value plus its canonical text.
struct Expr {
    value: f64,
    text: String,
}

impl<'a> Parser<'a> {
    fn new(tokens: &'a [Spanned]) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if !matches!(t, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), SyntaxError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn uint(&mut self) -> Result<usize, SyntaxError> {
        match self.peek().clone() {
            Tok::Number(s) => s
                .parse::<usize>()
                .map(|n| {
                    self.bump();
                    n
                })
                .map_err(|_| self.error(format!("expected a non-negative integer, found `{s}`"))),
            other => Err(self.error(format!("expected integer, found {}", describe(&other)))),
        }
    }

    /// Skips to just past the next `;`, or past a `{ ... }` block if one
    /// opens first.
    fn skip_statement(&mut self) {
        loop {
            match self.bump() {
                Tok::Eof | Tok::Semi => return,
                Tok::LBrace => {
                    let mut depth = 1;
                    while depth > 0 {
                        match self.bump() {
                            Tok::LBrace => depth += 1,
                            Tok::RBrace => depth -= 1,
                            Tok::Eof => return,
                            _ => {}
                        }
                    }
                    return;
                }
                _ => {}
            }
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let keyword = match self.peek().clone() {
            Tok::Ident(s) => s,
            other => return Err(self.error(format!("expected a statement, found {}", describe(&other)))),
        };
        let stmt = match keyword.as_str() {
            "OPENQASM" => {
                self.bump();
                let version = match self.bump() {
                    Tok::Number(v) => v,
                    other => return Err(self.error(format!("expected version, found {}", describe(&other)))),
                };
                if version != "2.0" {
                    return Err(self.error(format!("unsupported OpenQASM version {version}")));
                }
                Statement::Header { version }
            }
            "include" => {
                self.bump();
                match self.bump() {
                    Tok::Str(file) => Statement::Include { file },
                    other => return Err(self.error(format!("expected file name, found {}", describe(&other)))),
                }
            }
            "qreg" | "creg" => {
                self.bump();
                let name = self.ident()?;
                self.expect(Tok::LBracket, "`[`")?;
                let size = self.uint()?;
                self.expect(Tok::RBracket, "`]`")?;
                if keyword == "qreg" {
                    Statement::Qreg { name, size }
                } else {
                    Statement::Creg { name, size }
                }
            }
            "measure" => {
                self.bump();
                let qubit = self.operand()?;
                self.expect(Tok::Arrow, "`->`")?;
                let clbit = self.operand()?;
                if qubit.index.is_none() || clbit.index.is_none() {
                    return Err(self.error("register-wide measure is not supported"));
                }
                Statement::Measure { qubit, clbit }
            }
            "barrier" => {
                self.bump();
                Statement::Barrier {
                    qubits: self.operand_list()?,
                }
            }
            name => {
                let gate = GateKind::from_name(name)
                    .filter(|g| g.is_unitary())
                    .ok_or_else(|| self.error(format!("unsupported statement `{name}`")))?;
                self.bump();
                let mut params = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        params.push(self.expr_param()?);
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            params.push(self.expr_param()?);
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                }
                let qubits = self.operand_list()?;
                if qubits.len() != gate.arity() {
                    return Err(self.error(format!(
                        "`{name}` takes {} qubit operand(s), found {}",
                        gate.arity(),
                        qubits.len()
                    )));
                }
                if qubits.iter().any(|q| q.index.is_none()) {
                    return Err(self.error("register broadcast is not supported"));
                }
                Statement::Gate { gate, params, qubits }
            }
        };
        self.expect(Tok::Semi, "`;`")?;
        Ok(stmt)
    }

    fn operand(&mut self) -> Result<Operand, SyntaxError> {
        let register = self.ident()?;
        if *self.peek() == Tok::LBracket {
            self.bump();
            let index = self.uint()?;
            self.expect(Tok::RBracket, "`]`")?;
            Ok(Operand {
                register,
                index: Some(index),
            })
        } else {
            Ok(Operand { register, index: None })
        }
    }

    fn operand_list(&mut self) -> Result<Vec<Operand>, SyntaxError> {
        let mut ops = vec![self.operand()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            ops.push(self.operand()?);
        }
        Ok(ops)
    }

    fn expr_param(&mut self) -> Result<Param, SyntaxError> {
        let e = self.expr()?;
        Ok(Param {
            value: e.value,
            text: e.text,
        })
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let (op, f): (&str, fn(f64, f64) -> f64) = match self.peek() {
                Tok::Plus => ("+", |a, b| a + b),
                Tok::Minus => ("-", |a, b| a - b),
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr {
                value: f(lhs.value, rhs.value),
                text: format!("{}{op}{}", lhs.text, rhs.text),
            };
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let (op, f): (&str, fn(f64, f64) -> f64) = match self.peek() {
                Tok::Star => ("*", |a, b| a * b),
                Tok::Slash => ("/", |a, b| a / b),
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr {
                value: f(lhs.value, rhs.value),
                text: format!("{}{op}{}", lhs.text, rhs.text),
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let e = self.unary()?;
                Ok(Expr {
                    value: -e.value,
                    text: format!("-{}", e.text),
                })
            }
            Tok::Plus => {
                self.bump();
                let e = self.unary()?;
                Ok(Expr {
                    value: e.value,
                    text: format!("+{}", e.text),
                })
            }
            _ => self.power(),
        }
    }

    // power := primary ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr {
                value: base.value.powf(exp.value),
                text: format!("{}^{}", base.text, exp.text),
            });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Number(s) => {
                let value: f64 = s
                    .parse()
                    .map_err(|_| self.error(format!("malformed number `{s}`")))?;
                if !value.is_finite() {
                    return Err(self.error(format!("number `{s}` is out of range")));
                }
                self.bump();
                Ok(Expr {
                    value,
                    text: format_real(value),
                })
            }
            Tok::Ident(name) if name == "pi" => {
                self.bump();
                Ok(Expr {
                    value: std::f64::consts::PI,
                    text: "pi".into(),
                })
            }
            Tok::Ident(name) => {
                let f: fn(f64) -> f64 = match name.as_str() {
                    "sin" => f64::sin,
                    "cos" => f64::cos,
                    "tan" => f64::tan,
                    "exp" => f64::exp,
                    "ln" => f64::ln,
                    "sqrt" => f64::sqrt,
                    _ => return Err(self.error(format!("unknown identifier `{name}` in expression"))),
                };
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr {
                    value: f(arg.value),
                    text: format!("{name}({})", arg.text),
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr {
                    value: inner.value,
                    text: format!("({})", inner.text),
                })
            }
            other => Err(self.error(format!("expected expression, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(s) => format!("`{s}`"),
        Tok::Str(s) => format!("\"{s}\""),
        Tok::Bad(c) => format!("unexpected character `{c}`"),
        Tok::Eof => "end of input".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BELL: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\nh q[0];\ncx q[0],q[1];\nmeasure q[0] -> c[0];\nmeasure q[1] -> c[1];\n";

    #[test]
    fn parses_minimal_program() {
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\nh q[0];\ncx q[0],q[1];").unwrap();
        assert_eq!(c.statements.len(), 5);
        assert_eq!(c.qreg_sizes.get("q"), Some(&2));
        assert_eq!(c.qreg_sizes.len(), 1);
    }

    #[test]
    fn lenient_strips_comment() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\nh q[0]; // comment\n";
        let parsed = parse(src, ParseMode::Lenient).unwrap();
        assert!(parsed.warnings.is_empty());
        let body: Vec<_> = parsed.circuit.body().collect();
        assert_eq!(body.len(), 1);
        assert_eq!(body[0].to_string(), "h q[0];");
    }

    #[test]
    fn lenient_skips_unknown_and_gate_blocks() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\ngate foo a { h a; }\nqreg q[2];\nfoo q[0];\nreset q[0];\nh q[1];\n";
        let parsed = parse(src, ParseMode::Lenient).unwrap();
        assert_eq!(parsed.warnings.len(), 3);
        assert_eq!(parsed.circuit.statements.len(), 4);
        let err = parse(src, ParseMode::Strict).unwrap_err();
        assert_eq!((err.line, err.column), (3, 1));
    }

    #[test]
    fn out_of_range_parses_but_fails_validation() {
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncx q[0],q[4];").unwrap();
        let report = validate(&c);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::IndexOutOfRange);
        assert_eq!(report.violations[0].statement, 3);
    }

    #[test]
    fn bell_is_valid() {
        let c = parse_strict(BELL).unwrap();
        assert!(validate(&c).is_valid());
        assert_eq!(gate_count(&c), 4);
    }

    #[test]
    fn missing_header_reported() {
        let c = parse_strict("include \"qelib1.inc\";\nqreg q[2];\nh q[0];").unwrap();
        let report = validate(&c);
        assert_eq!(report.count(ViolationKind::MissingHeader), 1);
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn other_violation_kinds() {
        let c = parse_strict(
            "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncx q[1],q[1];\nrz q[0];\nh r[0];\nmeasure q[0] -> c[0];",
        )
        .unwrap();
        let kinds: Vec<_> = validate(&c).violations.iter().map(|v| (v.statement, v.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (3, ViolationKind::DuplicateOperand),
                (4, ViolationKind::MalformedParam),
                (5, ViolationKind::UndeclaredRegister),
                (6, ViolationKind::UndeclaredRegister),
            ]
        );
    }

    #[test]
    fn empty_body_has_zero_gates() {
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];").unwrap();
        assert_eq!(gate_count(&c), 0);
        assert!(validate(&c).is_valid());
    }

    #[test]
    fn barrier_is_not_a_gate() {
        let c = parse_strict("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\nbarrier q;\nbarrier q[0],q[2];\nh q[1];").unwrap();
        assert_eq!(gate_count(&c), 1);
        assert!(validate(&c).is_valid());
    }

    #[test]
    fn serializes_single_gate() {
        let c = Circuit::from_statements(vec![Statement::gate(GateKind::H, vec![], vec![Operand::new("q", 0)])]);
        assert_eq!(serialize(&c), "h q[0];\n");
    }

    #[test]
    fn angle_rendering_is_canonical() {
        let s: Statement = "rz( 0.50 ) q[0] ;".parse().unwrap();
        assert_eq!(s.to_string(), "rz(0.5) q[0];");
        let s: Statement = "u3(pi / 2, -pi, 1e-3) q[1];".parse().unwrap();
        assert_eq!(s.to_string(), "u3(pi/2,-pi,0.001) q[1];");
        assert_eq!(s.params()[0].value, std::f64::consts::PI / 2.0);
        let again: Statement = s.to_string().parse().unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn whitespace_variants_share_canonical_text() {
        let a: Statement = "h q[0] ;".parse().unwrap();
        let b: Statement = "h   q[ 0 ];".parse().unwrap();
        assert_eq!(a.to_string(), "h q[0];");
        assert_eq!(a, b);
    }

    #[test]
    fn crlf_accepted() {
        let c = parse_strict(&BELL.replace('\n', "\r\n")).unwrap();
        assert_eq!(serialize(&c), BELL);
    }

    #[test]
    fn arity_and_version_errors() {
        assert!("cx q[0];".parse::<Statement>().is_err());
        assert!("h q;".parse::<Statement>().is_err());
        assert!(parse_strict("OPENQASM 3.0;").is_err());
        assert!("rz(1e999) q[0];".parse::<Statement>().is_err());
    }

    #[test]
    fn expression_precedence() {
        let p = Param::from_expr("2^3^2/4 - -1").unwrap();
        assert_eq!(p.value, 2f64.powf(9.0) / 4.0 + 1.0);
        assert_eq!(p.text, "2^3^2/4--1");
        let again = Param::from_expr(&p.text).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn gate_metadata() {
        for g in GateKind::ALL {
            assert!((1..=3).contains(&g.arity()));
            assert!(g.param_count() <= 3);
            assert_eq!(GateKind::from_name(g.name()), Some(g));
        }
    }
}
