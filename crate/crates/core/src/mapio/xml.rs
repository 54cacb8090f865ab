//! Minimal XML emitter used by the exporters.

use std::fmt::Write;

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) struct XmlWriter {
    buf: String,
    stack: Vec<&'static str>,
}

impl XmlWriter {
    pub fn new() -> Self {
        Self {
            buf: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            stack: Vec::new(),
        }
    }

    fn indent(&mut self) {
        for _ in 0..self.stack.len() {
            self.buf.push_str("  ");
        }
    }

    fn tag(&mut self, name: &str, attrs: &[(&str, String)], close: bool) {
        self.indent();
        let _ = write!(self.buf, "<{name}");
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", escape(v));
        }
        self.buf.push_str(if close { "/>\n" } else { ">\n" });
    }

    pub fn open(&mut self, name: &'static str, attrs: &[(&str, String)]) {
        self.tag(name, attrs, false);
        self.stack.push(name);
    }

    pub fn empty(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.tag(name, attrs, true);
    }

    pub fn text_element(&mut self, name: &str, text: &str) {
        self.indent();
        let _ = writeln!(self.buf, "<{name}>{}</{name}>", escape(text));
    }

    pub fn close(&mut self) {
        let name = self.stack.pop().expect("unbalanced close");
        self.indent();
        let _ = writeln!(self.buf, "</{name}>");
    }

    pub fn finish(mut self) -> Vec<u8> {
        while !self.stack.is_empty() {
            self.close();
        }
        self.buf.into_bytes()
    }
}

/// Shortest round-trip decimal form of a float.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}
