//! Real-valued Volterra series with memory, evaluated per tributary.
//!
//! A kernel is described by `(order, memory, depth)`:
//!
//! * order 1, memory `M` (odd): taps at delays `-(M-1)/2 ..= (M-1)/2`;
//! * order `p >= 2`: tuples `i1 <= i2 <= ... <= ip` with anchor
//!   `i1 in -M ..= M` and every co-factor within `i1 ..= i1 + depth`.
//!   Depth 0 leaves only the diagonal `(i, i, ..., i)`.
//!
//! A delay `i` refers to sample `n - i`, so positive delays look into the past.
//! Terms are listed in lexicographic order within each kernel.

mod features;
mod format;
mod lsq;

pub use features::{apply_volterra, map_features, map_features_rows, FeatureMatrix};
pub use format::{parse_weights, read_weights, weights_to_string, write_weights};
pub use lsq::{fit_least_squares, LsAccumulator, LsFit};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub order: usize,
    pub memory: usize,
    pub depth: usize,
}

impl KernelSpec {
    pub fn new(order: usize, memory: usize, depth: usize) -> Result<Self> {
        let spec = Self {
            order,
            memory,
            depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear(memory: usize) -> Result<Self> {
        Self::new(1, memory, 0)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::invalid(
                "order",
                format!("{} outside [1, {MAX_ORDER}]", self.order),
            ));
        }
        if self.order == 1 && self.memory.is_multiple_of(2) {
            return Err(Error::invalid(
                "memory",
                format!("first-order memory {} has no centre tap", self.memory),
            ));
        }
        Ok(())
    }

    /// The five kernels of the reference DPD: 121 linear taps, order-3 kernel
    /// with memory 10 / depth 4 and diagonal order-2/4/5 kernels of memory 3.
    pub fn standard_set() -> Vec<KernelSpec> {
        vec![
            Self {
                order: 1,
                memory: 121,
                depth: 0,
            },
            Self {
                order: 2,
                memory: 3,
                depth: 0,
            },
            Self {
                order: 3,
                memory: 10,
                depth: 4,
            },
            Self {
                order: 4,
                memory: 3,
                depth: 0,
            },
            Self {
                order: 5,
                memory: 3,
                depth: 0,
            },
        ]
    }

    pub fn linear_set() -> Vec<KernelSpec> {
        vec![Self {
            order: 1,
            memory: 121,
            depth: 0,
        }]
    }
}

/// One Volterra term: a nondecreasing tuple of `order` delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    order: u8,
    delays: [i32; MAX_ORDER],
}

impl Term {
    pub fn new(delays: &[i32]) -> Result<Self> {
        if delays.is_empty() || delays.len() > MAX_ORDER {
            return Err(Error::invalid(
                "term",
                format!("order {} unsupported", delays.len()),
            ));
        }
        if delays.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("term", "delays must be nondecreasing"));
        }
        let mut d = [0; MAX_ORDER];
        d[..delays.len()].copy_from_slice(delays);
        Ok(Self {
            order: delays.len() as u8,
            delays: d,
        })
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn delays(&self) -> &[i32] {
        &self.delays[..self.order as usize]
    }

    pub fn max_abs_delay(&self) -> usize {
        self.delays()
            .iter()
            .map(|d| d.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

fn extend_multisets(
    lo: i32,
    hi: i32,
    remaining: usize,
    prefix: &mut Vec<i32>,
    out: &mut Vec<Term>,
) {
    if remaining == 0 {
        out.push(Term::new(prefix).expect("prefix is nondecreasing"));
        return;
    }
    let start = *prefix.last().unwrap_or(&lo);
    for d in start..=hi {
        prefix.push(d);
        extend_multisets(lo, hi, remaining - 1, prefix, out);
        prefix.pop();
    }
}

pub fn enumerate_terms(spec: &KernelSpec) -> Result<Vec<Term>> {
    spec.validate()?;
    if spec.order == 1 {
        let half = (spec.memory / 2) as i32;
        return Ok((-half..=half).map(|i| Term::new(&[i]).unwrap()).collect());
    }
    let m = spec.memory as i32;
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(spec.order);
    for anchor in -m..=m {
        prefix.clear();
        prefix.push(anchor);
        extend_multisets(
            anchor,
            anchor + spec.depth as i32,
            spec.order - 1,
            &mut prefix,
            &mut out,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tributary {
    I,
    Q,
}

impl Tributary {
    pub const BOTH: [Tributary; 2] = [Tributary::I, Tributary::Q];

    pub fn index(self) -> usize {
        match self {
            Tributary::I => 0,
            Tributary::Q => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tributary::I => "I",
            Tributary::Q => "Q",
        }
    }
}

/// Kernel layout plus one independent weight vector per tributary.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraFilter {
    specs: Vec<KernelSpec>,
    terms: Vec<Term>,
    /// Offset of each kernel's first term in `terms`.
    kernel_starts: Vec<usize>,
    weights: [Vec<f64>; 2],
}

impl VolterraFilter {
    /// Zero weights for every term of `specs`.
    pub fn new(specs: &[KernelSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("kernel list"));
        }
        let mut terms = Vec::new();
        let mut kernel_starts = Vec::with_capacity(specs.len());
        for spec in specs {
            kernel_starts.push(terms.len());
            terms.extend(enumerate_terms(spec)?);
        }
        let mut seen = terms.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != terms.len() {
            return Err(Error::invalid("kernels", "kernels produce duplicate terms"));
        }
        let n = terms.len();
        Ok(Self {
            specs: specs.to_vec(),
            terms,
            kernel_starts,
            weights: [vec![0.0; n], vec![0.0; n]],
        })
    }

    /// Linear delay-0 tap set to one on both tributaries.
    pub fn identity(specs: &[KernelSpec]) -> Result<Self> {
        let mut f = Self::new(specs)?;
        let centre = f
            .term_index(&Term::new(&[0]).unwrap())
            .ok_or(Error::invalid(
                "kernels",
                "identity needs a first-order kernel",
            ))?;
        for w in f.weights.iter_mut() {
            w[centre] = 1.0;
        }
        Ok(f)
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn kernel_range(&self, kernel: usize) -> std::ops::Range<usize> {
        let start = self.kernel_starts[kernel];
        let end = self
            .kernel_starts
            .get(kernel + 1)
            .copied()
            .unwrap_or(self.terms.len());
        start..end
    }

    pub fn term_index(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn max_abs_delay(&self) -> usize {
        self.terms
            .iter()
            .map(Term::max_abs_delay)
            .max()
            .unwrap_or(0)
    }

    pub fn weights(&self, trib: Tributary) -> &[f64] {
        &self.weights[trib.index()]
    }

    pub fn weights_mut(&mut self, trib: Tributary) -> &mut [f64] {
        &mut self.weights[trib.index()]
    }

    pub fn set_weights(&mut self, trib: Tributary, w: Vec<f64>) -> Result<()> {
        if w.len() != self.terms.len() {
            return Err(Error::LengthMismatch {
                what: "weights vs terms",
                left: w.len(),
                right: self.terms.len(),
            });
        }
        self.weights[trib.index()] = w;
        Ok(())
    }

    /// Copy weights of matching terms from `other` (e.g. a linear DPD into a
    /// full Volterra layout); all other weights become zero.
    pub fn with_weights_from(mut self, other: &VolterraFilter) -> Self {
        for trib in Tributary::BOTH {
            let w = &mut self.weights[trib.index()];
            w.iter_mut().for_each(|v| *v = 0.0);
            for (t, &v) in other.terms.iter().zip(other.weights(trib)) {
                if let Some(k) = self.terms.iter().position(|s| s == t) {
                    w[k] = v;
                }
            }
        }
        self
    }
}
