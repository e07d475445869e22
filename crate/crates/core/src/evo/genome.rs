use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerKind, Role};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gene {
    /// Innovation id; unique per gene creation or change.
    pub id: u64,
    pub kind: LayerKind,
    pub activation: Activation,
    /// Output features (linear) or output channels (conv / deconv).
    pub out: usize,
    /// Kernel size; `None` for linear genes.
    pub kernel: Option<usize>,
}

impl Gene {
    pub fn linear(id: u64, activation: Activation, out: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Linear,
            activation,
            out,
            kernel: None,
        }
    }

    pub fn conv(id: u64, activation: Activation, out: usize, kernel: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Conv2d,
            activation,
            out,
            kernel: Some(kernel),
        }
    }

    pub fn deconv(id: u64, activation: Activation, out: usize, kernel: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Deconv2d,
            activation,
            out,
            kernel: Some(kernel),
        }
    }

    fn check(&self) -> Result<()> {
        if self.out == 0 {
            return Err(Error::invalid(format!("gene {} has zero outputs", self.id)));
        }
        match (self.kind, self.kernel) {
            (LayerKind::Linear, None) => Ok(()),
            (LayerKind::Conv2d | LayerKind::Deconv2d, Some(k)) if k > 0 => Ok(()),
            _ => Err(Error::invalid(format!("gene {} has fields inconsistent with its kind", self.id))),
        }
    }
}

impl fmt::Display for Gene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gene id={} kind={} activation={} out={}", self.id, self.kind, self.activation, self.out)?;
        if let Some(k) = self.kernel {
            write!(f, " kernel={k}")?;
        }
        Ok(())
    }
}

/// Ordered gene list of one individual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genome {
    pub role: Role,
    pub genes: Vec<Gene>,
}

impl Genome {
    pub fn new(role: Role, genes: Vec<Gene>) -> Result<Self> {
        let g = Self { role, genes };
        g.validate(usize::MAX)?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.genes.iter().filter(|g| g.kind == kind).count()
    }

    /// Role-legal kinds, length bounds and the structural order
    /// (conv before linear for discriminators, linear before deconv for
    /// generators).
    pub fn validate(&self, limit: usize) -> Result<()> {
        if self.genes.is_empty() {
            return Err(Error::invalid("genome has no genes"));
        }
        if self.genes.len() > limit {
            return Err(Error::invalid(format!("genome has {} genes, limit {limit}", self.genes.len())));
        }
        let (first, banned) = match self.role {
            Role::Discriminator => (LayerKind::Conv2d, LayerKind::Deconv2d),
            Role::Generator => (LayerKind::Linear, LayerKind::Conv2d),
        };
        let mut seen_second = false;
        for g in &self.genes {
            g.check()?;
            if g.kind == banned {
                return Err(Error::invalid(format!("{} genome contains a {} gene", self.role, g.kind)));
            }
            if g.kind == first {
                if seen_second {
                    return Err(Error::invalid(format!("{} genome breaks the structural gene order", self.role)));
                }
            } else {
                seen_second = true;
            }
        }
        Ok(())
    }

    /// Structured text form: a `genome role=...` line then one line per gene.
    pub fn to_text(&self) -> String {
        let mut s = format!("genome role={}\n", self.role);
        for g in &self.genes {
            s.push_str(&g.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("empty genome text"))?;
        let role = header
            .strip_prefix("genome role=")
            .ok_or_else(|| Error::invalid(format!("bad genome header {header:?}")))?
            .parse::<Role>()?;
        let mut genes = Vec::new();
        for line in lines {
            let rest = line
                .strip_prefix("gene ")
                .ok_or_else(|| Error::invalid(format!("bad gene line {line:?}")))?;
            let mut id = None;
            let mut kind = None;
            let mut activation = None;
            let mut out = None;
            let mut kernel = None;
            for field in rest.split_whitespace() {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("bad gene field {field:?}")))?;
                let num = |v: &str| v.parse::<u64>().map_err(|_| Error::invalid(format!("bad number {v:?} in {line:?}")));
                match k {
                    "id" => id = Some(num(v)?),
                    "kind" => kind = Some(v.parse::<LayerKind>()?),
                    "activation" => activation = Some(v.parse::<Activation>()?),
                    "out" => out = Some(num(v)? as usize),
                    "kernel" => kernel = Some(num(v)? as usize),
                    _ => return Err(Error::invalid(format!("unknown gene field {k:?}"))),
                }
            }
            let missing = |f: &str| Error::invalid(format!("gene line {line:?} lacks {f}"));
            genes.push(Gene {
                id: id.ok_or_else(|| missing("id"))?,
                kind: kind.ok_or_else(|| missing("kind"))?,
                activation: activation.ok_or_else(|| missing("activation"))?,
                out: out.ok_or_else(|| missing("out"))?,
                kernel,
            });
        }
        Genome::new(role, genes)
    }
}

/// Positional dissimilarity: one minus the fraction of positions whose kind
/// and activation both agree, over the longer genome.
pub fn genome_distance(a: &Genome, b: &Genome) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let same = a
        .genes
        .iter()
        .zip(&b.genes)
        .filter(|(x, y)| x.kind == y.kind && x.activation == y.activation)
        .count();
    1.0 - same as f64 / longest as f64
}

/// Global source of innovation ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InnovationCounter {
    next: u64,
}

impl InnovationCounter {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}
