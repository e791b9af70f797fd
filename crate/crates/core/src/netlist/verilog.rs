// SPDX-License-Identifier: Apache-2.0

//! Structural Verilog subset: one module with port/wire declarations,
//! named-port cell instantiations and `assign` wire aliases.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Cell, CellLibrary, Label, Netlist, NetlistError};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    Const(bool),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek(0)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, msg: impl Into<String>) -> NetlistError {
        NetlistError::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn skip_trivia(&mut self) -> Result<(), NetlistError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(c), _) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                (Some(b'/'), Some(b'/')) => {
                    while !matches!(self.peek(0), None | Some(b'\n')) {
                        self.bump();
                    }
                }
                (Some(b'/'), Some(b'*')) | (Some(b'('), Some(b'*')) => {
                    let close = if self.peek(0) == Some(b'/') { b'/' } else { b')' };
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some(b'*'), Some(c)) if c == close => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(self.error("unterminated comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>, NetlistError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek(0) else { break };
            let tok = if c.is_ascii_alphabetic() || c == b'_' {
                let start = self.pos;
                while matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'$') {
                    self.bump();
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            } else if c == b'\\' {
                self.bump();
                let start = self.pos;
                while matches!(self.peek(0), Some(c) if !c.is_ascii_whitespace()) {
                    self.bump();
                }
                if start == self.pos {
                    return Err(self.error("empty escaped identifier"));
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            } else if c.is_ascii_digit() {
                let start = self.pos;
                while matches!(self.peek(0), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if self.peek(0) == Some(b'\'') {
                    self.bump();
                    let base = self.bump().map(|b| b.to_ascii_lowercase());
                    let vstart = self.pos;
                    while matches!(self.peek(0), Some(c) if c.is_ascii_hexdigit() || c == b'_') {
                        self.bump();
                    }
                    let value = std::str::from_utf8(&self.src[vstart..self.pos]).unwrap().replace('_', "");
                    let radix = match base {
                        Some(b'b') => 2,
                        Some(b'd') => 10,
                        Some(b'h') => 16,
                        Some(b'o') => 8,
                        _ => return Err(NetlistError::Syntax { line, col, msg: "bad constant base".into() }),
                    };
                    if digits != "1" {
                        return Err(NetlistError::Syntax { line, col, msg: "only 1-bit constants are supported".into() });
                    }
                    match u64::from_str_radix(&value, radix) {
                        Ok(0) => Tok::Const(false),
                        Ok(1) => Tok::Const(true),
                        _ => return Err(NetlistError::Syntax { line, col, msg: format!("bad constant value `{value}`") }),
                    }
                } else {
                    Tok::Number(digits.parse().map_err(|_| self.error("number out of range"))?)
                }
            } else if b"(),;.=[]:#{}".contains(&c) {
                self.bump();
                Tok::Punct(c as char)
            } else {
                return Err(self.error(format!("unexpected character `{}`", c as char)));
            };
            out.push(Token { tok, line, col });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Input,
    Output,
    Wire,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    lib: &'a CellLibrary,
    /// Declared name → optional (msb, lsb) range.
    decls: HashMap<String, Option<(u64, u64)>>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    header_ports: Vec<String>,
    aliases: BTreeMap<String, (String, u32, u32)>,
    instances: Vec<(Cell, u32, u32)>,
}

const RESERVED: &[&str] = &[
    "reg", "always", "initial", "begin", "end", "function", "task", "generate", "parameter", "localparam",
    "supply0", "supply1", "tri", "inout",
];

impl<'a> Parser<'a> {
    fn eof_error(&self) -> NetlistError {
        let (line, col) = self.toks.last().map_or((1, 1), |t| (t.line, t.col));
        NetlistError::Syntax { line, col, msg: "unexpected end of input".into() }
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, NetlistError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| self.eof_error())?;
        self.pos += 1;
        Ok(t)
    }

    fn err_at(t: &Token, msg: impl Into<String>) -> NetlistError {
        NetlistError::Syntax { line: t.line, col: t.col, msg: msg.into() }
    }

    fn expect(&mut self, c: char) -> Result<Token, NetlistError> {
        let t = self.next()?;
        if t.tok == Tok::Punct(c) {
            Ok(t)
        } else {
            Err(Self::err_at(&t, format!("expected `{c}`")))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(t) if t.tok == Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, Token), NetlistError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            _ => Err(Self::err_at(&t, "expected identifier")),
        }
    }

    fn number(&mut self) -> Result<u64, NetlistError> {
        let t = self.next()?;
        match t.tok {
            Tok::Number(n) => Ok(n),
            _ => Err(Self::err_at(&t, "expected number")),
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => Some(s),
            _ => None,
        }
    }

    fn range(&mut self) -> Result<Option<(u64, u64)>, NetlistError> {
        if !self.eat('[') {
            return Ok(None);
        }
        let msb = self.number()?;
        self.expect(':')?;
        let lsb = self.number()?;
        self.expect(']')?;
        Ok(Some((msb, lsb)))
    }

    fn bits(name: &str, range: Option<(u64, u64)>) -> Vec<String> {
        match range {
            None => vec![name.to_string()],
            Some((msb, lsb)) => {
                let idx: Vec<u64> = if msb >= lsb { (lsb..=msb).rev().collect() } else { (msb..=lsb).collect() };
                idx.into_iter().map(|i| format!("{name}[{i}]")).collect()
            }
        }
    }

    fn declare(&mut self, dir: Dir, name: String, range: Option<(u64, u64)>, at: &Token) -> Result<(), NetlistError> {
        match self.decls.get(&name) {
            Some(prev) if *prev != range => {
                return Err(Self::err_at(at, format!("conflicting declaration of `{name}`")));
            }
            _ => {}
        }
        self.decls.insert(name.clone(), range);
        let list = match dir {
            Dir::Input => &mut self.inputs,
            Dir::Output => &mut self.outputs,
            Dir::Wire => return Ok(()),
        };
        for bit in Self::bits(&name, range) {
            if list.contains(&bit) {
                return Err(NetlistError::DuplicateId(bit));
            }
            list.push(bit);
        }
        Ok(())
    }

    fn direction(word: &str) -> Option<Dir> {
        match word {
            "input" => Some(Dir::Input),
            "output" => Some(Dir::Output),
            "wire" => Some(Dir::Wire),
            _ => None,
        }
    }

    /// `input|output|wire [range] a, b, c` up to (not including) `;` or `)`.
    fn declaration(&mut self, dir: Dir, in_header: bool) -> Result<(), NetlistError> {
        if dir != Dir::Wire && self.peek_ident() == Some("wire") {
            self.pos += 1;
        }
        let range = self.range()?;
        loop {
            let (name, t) = self.ident()?;
            if in_header {
                self.header_ports.push(name.clone());
            }
            self.declare(dir, name, range, &t)?;
            if in_header {
                // In an ANSI header a comma may introduce the next direction keyword.
                if !self.eat(',') {
                    return Ok(());
                }
                if let Some(w) = self.peek_ident() {
                    if let Some(d) = Self::direction(w) {
                        self.pos += 1;
                        return self.declaration(d, true);
                    }
                }
            } else if !self.eat(',') {
                return Ok(());
            }
        }
    }

    fn net_ref(&mut self) -> Result<(String, Token), NetlistError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Const(v) => Ok((if *v { "1'b1" } else { "1'b0" }.to_string(), t)),
            Tok::Ident(name) => {
                let name = name.clone();
                if self.eat('[') {
                    let idx = self.number()?;
                    if self.eat(':') {
                        return Err(Self::err_at(&t, "part-selects are not supported"));
                    }
                    self.expect(']')?;
                    Ok((format!("{name}[{idx}]"), t))
                } else {
                    Ok((name, t))
                }
            }
            Tok::Punct('{') => Err(Self::err_at(&t, "concatenations are not supported")),
            _ => Err(Self::err_at(&t, "expected net")),
        }
    }

    fn check_declared(&self, net: &str) -> Result<(), NetlistError> {
        if super::constant_net(net).is_some() {
            return Ok(());
        }
        let (base, bit) = match net.find('[') {
            Some(i) => (&net[..i], Some(net[i + 1..net.len() - 1].parse::<u64>().unwrap_or(u64::MAX))),
            None => (net, None),
        };
        match (self.decls.get(base), bit) {
            (Some(None), None) => Ok(()),
            (Some(Some((a, b))), Some(i)) if (*a.min(b)..=*a.max(b)).contains(&i) => Ok(()),
            _ => Err(NetlistError::UnboundWire(net.to_string())),
        }
    }

    fn instance(&mut self, cell_type: String, at: Token) -> Result<(), NetlistError> {
        let def = self.lib.lookup(&cell_type)?.clone();
        if def.kind.is_port() {
            return Err(Self::err_at(&at, format!("port pseudo-cell `{cell_type}` cannot be instantiated")));
        }
        if self.eat('#') {
            self.expect('(')?;
            let mut depth = 1;
            while depth > 0 {
                match self.next()?.tok {
                    Tok::Punct('(') => depth += 1,
                    Tok::Punct(')') => depth -= 1,
                    _ => {}
                }
            }
        }
        let (inst, _) = self.ident()?;
        self.expect('(')?;
        let mut inputs = vec![None; def.inputs.len()];
        let mut outputs = vec![None; def.outputs.len()];
        if !self.eat(')') {
            loop {
                let dot = self.next()?;
                if dot.tok != Tok::Punct('.') {
                    return Err(Self::err_at(&dot, "only named port connections are supported"));
                }
                let (pin, _) = self.ident()?;
                self.expect('(')?;
                let net = if self.eat(')') {
                    None
                } else {
                    let (net, _) = self.net_ref()?;
                    self.expect(')')?;
                    Some(net)
                };
                let slot = if let Some(i) = def.inputs.iter().position(|p| *p == pin) {
                    &mut inputs[i]
                } else if let Some(i) = def.outputs.iter().position(|p| *p == pin) {
                    &mut outputs[i]
                } else {
                    return Err(NetlistError::UnknownPin { cell: inst, pin });
                };
                if slot.is_some() {
                    return Err(Self::err_at(&dot, format!("pin `{pin}` connected twice")));
                }
                *slot = net;
                if !self.eat(',') {
                    break;
                }
            }
            self.expect(')')?;
        }
        self.expect(';')?;
        self.instances.push((
            Cell { id: inst, cell_type, inputs, outputs, label: Label::Normal },
            at.line,
            at.col,
        ));
        Ok(())
    }

    fn module(&mut self) -> Result<String, NetlistError> {
        let (kw, t) = self.ident()?;
        if kw != "module" {
            return Err(Self::err_at(&t, "expected `module`"));
        }
        let (name, _) = self.ident()?;
        if self.eat('(') && !self.eat(')') {
            match self.peek_ident().and_then(Self::direction) {
                Some(dir) => {
                    self.pos += 1;
                    self.declaration(dir, true)?;
                }
                None => loop {
                    let (port, _) = self.ident()?;
                    self.header_ports.push(port);
                    if !self.eat(',') {
                        break;
                    }
                },
            }
            self.expect(')')?;
        }
        self.expect(';')?;

        loop {
            let (word, t) = self.ident()?;
            if word == "endmodule" {
                break;
            }
            if word == "module" {
                return Err(Self::err_at(&t, "multiple modules are not supported"));
            }
            if RESERVED.contains(&word.as_str()) {
                return Err(Self::err_at(&t, format!("`{word}` is not part of the structural subset")));
            }
            if let Some(dir) = Self::direction(&word) {
                self.declaration(dir, false)?;
                self.expect(';')?;
            } else if word == "assign" {
                let (lhs, lt) = self.net_ref()?;
                self.expect('=')?;
                let (rhs, _) = self.net_ref()?;
                self.expect(';')?;
                if super::constant_net(&lhs).is_some() {
                    return Err(Self::err_at(&lt, "cannot assign to a constant"));
                }
                if self.aliases.insert(lhs.clone(), (rhs, lt.line, lt.col)).is_some() {
                    return Err(NetlistError::MultipleDrivers(lhs));
                }
            } else {
                self.instance(word, t)?;
            }
        }
        if let Some(t) = self.peek() {
            return Err(Self::err_at(t, "trailing input after `endmodule`"));
        }
        for port in &self.header_ports {
            if !self.inputs.iter().chain(&self.outputs).any(|p| p == port || p.starts_with(&format!("{port}["))) {
                return Err(NetlistError::UnboundWire(port.clone()));
            }
        }
        Ok(name)
    }

    fn resolve(&self, net: &str) -> Result<String, NetlistError> {
        let mut cur = net.to_string();
        let mut seen = HashSet::new();
        while let Some((next, line, col)) = self.aliases.get(&cur) {
            if !seen.insert(cur.clone()) {
                return Err(NetlistError::Syntax { line: *line, col: *col, msg: format!("alias cycle through `{cur}`") });
            }
            cur = next.clone();
        }
        Ok(cur)
    }
}

/// Parses a single structural module into a [`Netlist`].
///
/// Node order: primary-input pseudo-cells in declaration order, then cell
/// instances in source order, then primary-output pseudo-cells.
pub fn parse_verilog(source: &str, lib: &CellLibrary) -> Result<Netlist, NetlistError> {
    let toks = Lexer::new(source).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        lib,
        decls: HashMap::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        header_ports: Vec::new(),
        aliases: BTreeMap::new(),
        instances: Vec::new(),
    };
    let name = p.module()?;

    for (lhs, (rhs, _, _)) in &p.aliases {
        p.check_declared(lhs)?;
        p.check_declared(rhs)?;
    }
    let mut cells = Vec::with_capacity(p.inputs.len() + p.instances.len() + p.outputs.len());
    for pi in &p.inputs {
        if p.aliases.contains_key(pi) {
            return Err(NetlistError::MultipleDrivers(pi.clone()));
        }
        cells.push(Cell {
            id: pi.clone(),
            cell_type: lib.pi_cell().to_string(),
            inputs: Vec::new(),
            outputs: vec![Some(pi.clone())],
            label: Label::Normal,
        });
    }
    for (mut cell, _, _) in std::mem::take(&mut p.instances) {
        for net in cell.inputs.iter_mut().chain(cell.outputs.iter_mut()).flatten() {
            p.check_declared(net)?;
            *net = p.resolve(net)?;
        }
        cells.push(cell);
    }
    for po in &p.outputs {
        cells.push(Cell {
            id: po.clone(),
            cell_type: lib.po_cell().to_string(),
            inputs: vec![Some(p.resolve(po)?)],
            outputs: Vec::new(),
            label: Label::Normal,
        });
    }
    let netlist = Netlist { name, cells, primary_inputs: p.inputs, primary_outputs: p.outputs };
    netlist.validate()?;
    Ok(netlist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> CellLibrary {
        CellLibrary::default()
    }

    const AND_MODULE: &str = "
        // smallest well-formed module
        module top (a, b, y);
          input a, b;
          output y;
          AND2 u1 (.A(a), .B(b), .Y(y));
        endmodule
    ";

    #[test]
    fn single_and_gate() {
        let n = parse_verilog(AND_MODULE, &lib()).unwrap();
        assert_eq!(n.name, "top");
        let ids: Vec<_> = n.cells.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "u1", "y"]);
        assert_eq!(n.primary_inputs, ["a", "b"]);
        assert_eq!(n.primary_outputs, ["y"]);
        assert_eq!(n.trojan_count(), 0);
        assert_eq!(n.wire_edges().unwrap(), vec![(0, 2), (1, 2), (2, 3)]);
    }

    #[test]
    fn unknown_cell() {
        let src = "module m(a); input a; wire w; FOO u (.A(a), .Y(w)); endmodule";
        assert_eq!(parse_verilog(src, &lib()), Err(NetlistError::UnknownCell("FOO".into())));
    }

    #[test]
    fn undeclared_wire() {
        let src = "module m(a); input a; INV u (.A(a), .Y(nope)); endmodule";
        assert_eq!(parse_verilog(src, &lib()), Err(NetlistError::UnboundWire("nope".into())));
    }

    #[test]
    fn two_drivers() {
        let src = "module m(a); input a; wire w; INV u1 (.A(a), .Y(w)); BUF u2 (.A(a), .Y(w)); endmodule";
        assert_eq!(parse_verilog(src, &lib()), Err(NetlistError::MultipleDrivers("w".into())));
    }

    #[test]
    fn syntax_error_reports_position() {
        let src = "module m(a);\n  input a;\n  INV u1 (.A(a) .Y(a));\nendmodule";
        match parse_verilog(src, &lib()) {
            Err(NetlistError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn behavioral_code_is_rejected() {
        let src = "module m(a); input a; reg r; endmodule";
        assert!(matches!(parse_verilog(src, &lib()), Err(NetlistError::Syntax { .. })));
    }

    #[test]
    fn ansi_header_buses_and_aliases() {
        let src = r"
            module m (input [1:0] a, input \clk , output y, output z);
              wire n1, n2;
              (* keep *) NAND2 g0 (.A(a[1]), .B(a[0]), .Y(n1));
              DFF r0 (.D(n1), .CLK(clk), .Q(n2));
              assign y = n2;
              assign z = 1'b0;
            endmodule";
        let n = parse_verilog(src, &lib()).unwrap();
        assert_eq!(n.primary_inputs, ["a[1]", "a[0]", "clk"]);
        let y = &n.cells[n.index_of("y").unwrap()];
        assert_eq!(y.inputs, vec![Some("n2".to_string())]);
        let z = &n.cells[n.index_of("z").unwrap()];
        assert_eq!(z.inputs, vec![Some("1'b0".to_string())]);
    }

    #[test]
    fn pins_are_stored_in_library_order() {
        let src = "module m(a, b, s, y); input a, b, s; output y; MUX2 u (.S(s), .Y(y), .B(b), .A(a)); endmodule";
        let n = parse_verilog(src, &lib()).unwrap();
        let u = &n.cells[n.index_of("u").unwrap()];
        let ins: Vec<_> = u.inputs.iter().map(|x| x.as_deref().unwrap()).collect();
        assert_eq!(ins, ["a", "b", "s"]);
    }

    #[test]
    fn parse_is_deterministic() {
        assert_eq!(parse_verilog(AND_MODULE, &lib()), parse_verilog(AND_MODULE, &lib()));
    }
}
