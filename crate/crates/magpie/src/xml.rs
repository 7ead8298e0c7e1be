//! Arena-backed XML trees with byte-exact rendering.
//!
//! Source files arrive as XML annotations of program text (one element per
//! syntactic construct, program text in the text nodes). Mutation needs a
//! real tree, but nothing here may distort the bytes: rendering an unmodified
//! tree must reproduce the input exactly, whitespace, entities, comments and
//! attribute quoting included. General-purpose XML libraries normalize all of
//! those, so this module keeps every non-structural span as a raw slice and
//! only gives structure to elements and text runs.

use crate::error::{MagpieError, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct XmlNode {
    pub parent: Option<NodeId>,
    pub body: XmlBody,
}

#[derive(Debug, Clone)]
pub enum XmlBody {
    Element {
        tag: String,
        /// Everything between the tag name and the closing `>` (or `/>`),
        /// preserved verbatim, leading whitespace included.
        attrs: String,
        self_closing: bool,
        children: Vec<NodeId>,
    },
    /// Raw character data, entities untouched.
    Text(String),
    /// Comments, processing instructions, CDATA sections and other
    /// pass-through spans, stored with their delimiters.
    Raw(String),
}

#[derive(Debug, Clone)]
pub struct XmlTree {
    pub nodes: Vec<XmlNode>,
    pub root: NodeId,
    /// Raw bytes before the root element (declaration, comments, doctype).
    pub prolog: String,
    /// Raw bytes after the root element closes.
    pub epilog: String,
}

impl XmlTree {
    /// Parses a whole document. `file` only labels error messages.
    pub fn parse(input: &str, file: &str) -> Result<XmlTree> {
        Parser { s: input, pos: 0, file, nodes: Vec::new() }.parse_document()
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.prolog.len() + self.epilog.len() + 64);
        out.push_str(&self.prolog);
        self.render_node(self.root, &mut out);
        out.push_str(&self.epilog);
        out
    }

    pub fn render_node(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id].body {
            XmlBody::Text(t) | XmlBody::Raw(t) => out.push_str(t),
            XmlBody::Element { tag, attrs, self_closing, children } => {
                out.push('<');
                out.push_str(tag);
                out.push_str(attrs);
                if *self_closing {
                    out.push_str("/>");
                } else {
                    out.push('>');
                    for &c in children {
                        self.render_node(c, out);
                    }
                    out.push_str("</");
                    out.push_str(tag);
                    out.push('>');
                }
            }
        }
    }

    pub fn tag(&self, id: NodeId) -> Option<&str> {
        match &self.nodes[id].body {
            XmlBody::Element { tag, .. } => Some(tag),
            _ => None,
        }
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        match &self.nodes[id].body {
            XmlBody::Element { children, .. } => children,
            _ => &[],
        }
    }

    /// Pre-order traversal of the subtree rooted at `id` (including `id`).
    pub fn pre_order(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children(n).iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Concatenated raw text of the subtree, in document order.
    pub fn text_content(&self, id: NodeId) -> String {
        let mut out = String::new();
        for n in self.pre_order(id) {
            if let XmlBody::Text(t) = &self.nodes[n].body {
                out.push_str(t);
            }
        }
        out
    }

    /// Replaces the node's children with a single text node carrying `raw`.
    pub fn set_text(&mut self, id: NodeId, raw: String) {
        let text_id = self.nodes.len();
        self.nodes.push(XmlNode { parent: Some(id), body: XmlBody::Text(raw) });
        match &mut self.nodes[id].body {
            XmlBody::Element { children, self_closing, .. } => {
                *children = vec![text_id];
                *self_closing = false;
            }
            _ => panic!("set_text on a non-element node"),
        }
    }

    /// Copies the subtree rooted at `src_id` in `src` into this arena and
    /// returns the id of the fresh root. The copy's parent is left unset.
    pub fn copy_subtree_from(&mut self, src: &XmlTree, src_id: NodeId) -> NodeId {
        let new_id = self.nodes.len();
        let body = match &src.nodes[src_id].body {
            XmlBody::Text(t) => XmlBody::Text(t.clone()),
            XmlBody::Raw(t) => XmlBody::Raw(t.clone()),
            XmlBody::Element { tag, attrs, self_closing, children } => {
                self.nodes.push(XmlNode {
                    parent: None,
                    body: XmlBody::Element {
                        tag: tag.clone(),
                        attrs: attrs.clone(),
                        self_closing: *self_closing,
                        children: Vec::new(),
                    },
                });
                let copied: Vec<NodeId> = children
                    .clone()
                    .into_iter()
                    .map(|c| {
                        let cc = self.copy_subtree_from(src, c);
                        self.nodes[cc].parent = Some(new_id);
                        cc
                    })
                    .collect();
                match &mut self.nodes[new_id].body {
                    XmlBody::Element { children, .. } => *children = copied,
                    _ => unreachable!(),
                }
                return new_id;
            }
        };
        self.nodes.push(XmlNode { parent: None, body });
        new_id
    }

    pub fn position_in_parent(&self, id: NodeId) -> Option<(NodeId, usize)> {
        let parent = self.nodes[id].parent?;
        let pos = self.children(parent).iter().position(|&c| c == id)?;
        Some((parent, pos))
    }

    /// Unlinks a node from its parent. Returns false when the node has no
    /// parent (the root) or is already detached.
    pub fn detach(&mut self, id: NodeId) -> bool {
        let Some((parent, pos)) = self.position_in_parent(id) else {
            return false;
        };
        match &mut self.nodes[parent].body {
            XmlBody::Element { children, .. } => {
                children.remove(pos);
            }
            _ => return false,
        }
        self.nodes[id].parent = None;
        true
    }

    pub fn insert_child_at(&mut self, parent: NodeId, pos: usize, id: NodeId) {
        match &mut self.nodes[parent].body {
            XmlBody::Element { children, self_closing, .. } => {
                children.insert(pos, id);
                *self_closing = false;
            }
            _ => panic!("insert_child_at on a non-element node"),
        }
        self.nodes[id].parent = Some(parent);
    }
}

/// Escapes a string for use as raw text content.
pub fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Resolves the five predefined entities; anything else passes through.
pub fn unescape_text(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
    file: &'a str,
    nodes: Vec<XmlNode>,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> MagpieError {
        MagpieError::Xml { file: self.file.to_string(), msg: msg.into() }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn eat_through(&mut self, terminator: &str, what: &str) -> Result<()> {
        match self.rest().find(terminator) {
            Some(i) => {
                self.pos += i + terminator.len();
                Ok(())
            }
            None => Err(self.err(format!("unterminated {what}"))),
        }
    }

    /// Consumes `<!DOCTYPE ...>` including an optional internal subset.
    fn eat_doctype(&mut self) -> Result<()> {
        let bytes = self.s.as_bytes();
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < bytes.len() {
            match bytes[i] {
                b'[' => depth += 1,
                b']' => depth = depth.saturating_sub(1),
                b'>' if depth == 0 => {
                    self.pos = i + 1;
                    return Ok(());
                }
                _ => {}
            }
            i += 1;
        }
        Err(self.err("unterminated doctype"))
    }

    fn parse_document(mut self) -> Result<XmlTree> {
        // Prolog: declaration, comments, doctype and whitespace until the
        // root element opens.
        let root_start;
        loop {
            let ws = self.rest().len() - self.rest().trim_start().len();
            self.pos += ws;
            let rest = self.rest();
            if rest.is_empty() {
                return Err(self.err("no root element"));
            }
            if !rest.starts_with('<') {
                return Err(self.err("text content before the root element"));
            }
            if rest.starts_with("<?") {
                self.eat_through("?>", "processing instruction")?;
            } else if rest.starts_with("<!--") {
                self.eat_through("-->", "comment")?;
            } else if rest.starts_with("<!") {
                self.eat_doctype()?;
            } else {
                root_start = self.pos;
                break;
            }
        }
        let prolog = self.s[..root_start].to_string();

        let root = self.parse_element()?;
        let epilog_start = self.pos;

        // Only misc content may follow the root element.
        loop {
            let ws = self.rest().len() - self.rest().trim_start().len();
            self.pos += ws;
            let rest = self.rest();
            if rest.is_empty() {
                break;
            }
            if rest.starts_with("<?") {
                self.eat_through("?>", "processing instruction")?;
            } else if rest.starts_with("<!--") {
                self.eat_through("-->", "comment")?;
            } else if rest.starts_with('<') {
                return Err(self.err("more than one root element"));
            } else {
                return Err(self.err("text content after the root element"));
            }
        }
        let epilog = self.s[epilog_start..].to_string();

        Ok(XmlTree { nodes: self.nodes, root, prolog, epilog })
    }

    fn tag_name_end(&self) -> usize {
        let bytes = self.s.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() {
            match bytes[i] {
                b' ' | b'\t' | b'\r' | b'\n' | b'>' | b'/' | b'<' => break,
                _ => i += 1,
            }
        }
        i
    }

    fn parse_element(&mut self) -> Result<NodeId> {
        debug_assert!(self.rest().starts_with('<'));
        self.pos += 1;
        let name_end = self.tag_name_end();
        if name_end == self.pos {
            return Err(self.err("empty tag name"));
        }
        let tag = self.s[self.pos..name_end].to_string();
        self.pos = name_end;

        // Attribute span: raw bytes up to '>' outside quoted values.
        let bytes = self.s.as_bytes();
        let attr_start = self.pos;
        let mut quote: Option<u8> = None;
        let (attrs, self_closing) = loop {
            if self.pos >= bytes.len() {
                return Err(self.err(format!("unterminated start tag <{tag}")));
            }
            let b = bytes[self.pos];
            match quote {
                Some(q) => {
                    if b == q {
                        quote = None;
                    }
                    self.pos += 1;
                }
                None => match b {
                    b'"' | b'\'' => {
                        quote = Some(b);
                        self.pos += 1;
                    }
                    b'>' => {
                        let raw = &self.s[attr_start..self.pos];
                        if let Some(stripped) = raw.strip_suffix('/') {
                            self.pos += 1;
                            break (stripped.to_string(), true);
                        }
                        self.pos += 1;
                        break (raw.to_string(), false);
                    }
                    _ => self.pos += 1,
                },
            }
        };

        let id = self.nodes.len();
        self.nodes.push(XmlNode {
            parent: None,
            body: XmlBody::Element { tag: tag.clone(), attrs, self_closing, children: Vec::new() },
        });
        if self_closing {
            return Ok(id);
        }

        let mut children = Vec::new();
        loop {
            let text_start = self.pos;
            let rel = self
                .rest()
                .find('<')
                .ok_or_else(|| self.err(format!("unterminated element <{tag}>")))?;
            if rel > 0 {
                self.pos += rel;
                let text = self.s[text_start..self.pos].to_string();
                let tid = self.nodes.len();
                self.nodes.push(XmlNode { parent: Some(id), body: XmlBody::Text(text) });
                children.push(tid);
            }
            let rest = self.rest();
            if rest.starts_with("</") {
                self.pos += 2;
                let end = self.tag_name_end();
                let close = &self.s[self.pos..end];
                if close != tag {
                    return Err(
                        self.err(format!("mismatched close tag </{close}> for <{tag}>"))
                    );
                }
                self.pos = end;
                let ws = self.rest().len() - self.rest().trim_start().len();
                self.pos += ws;
                if !self.rest().starts_with('>') {
                    return Err(self.err(format!("malformed close tag for <{tag}>")));
                }
                self.pos += 1;
                break;
            } else if rest.starts_with("<!--") {
                let start = self.pos;
                self.eat_through("-->", "comment")?;
                self.push_raw(id, start, &mut children);
            } else if rest.starts_with("<![CDATA[") {
                let start = self.pos;
                self.eat_through("]]>", "CDATA section")?;
                self.push_raw(id, start, &mut children);
            } else if rest.starts_with("<?") {
                let start = self.pos;
                self.eat_through("?>", "processing instruction")?;
                self.push_raw(id, start, &mut children);
            } else if rest.starts_with("<!") {
                let start = self.pos;
                self.eat_doctype()?;
                self.push_raw(id, start, &mut children);
            } else {
                let child = self.parse_element()?;
                self.nodes[child].parent = Some(id);
                children.push(child);
            }
        }

        match &mut self.nodes[id].body {
            XmlBody::Element { children: c, .. } => *c = children,
            _ => unreachable!(),
        }
        Ok(id)
    }

    fn push_raw(&mut self, parent: NodeId, start: usize, children: &mut Vec<NodeId>) {
        let raw = self.s[start..self.pos].to_string();
        let rid = self.nodes.len();
        self.nodes.push(XmlNode { parent: Some(parent), body: XmlBody::Raw(raw) });
        children.push(rid);
    }
}
