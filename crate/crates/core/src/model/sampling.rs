//! i.i.d. sampling from a mixture: draw `h ~ π`, then `y ~ P(· | H = h)`.
//!
//! Pairwise forests are sampled ancestrally from exact tree messages; any
//! other component is sampled by inverse CDF over the enumerated joint.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ComponentModel, MixtureModel, Oracle};
use crate::error::{Error, Result};
use crate::util::decode;

/// `n` rows of `p` symbols each, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    p: usize,
    d: usize,
    seed: u64,
    data: Vec<u16>,
    labels: Option<Vec<usize>>,
}

impl SampleSet {
    pub fn new(p: usize, d: usize, seed: u64, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Parse(format!("row {i} has {} entries, expected {p}", row.len())));
            }
            for &x in row {
                if x >= d {
                    return Err(Error::OutOfRange(format!("symbol {x} in row {i} with d={d}")));
                }
                data.push(x as u16);
            }
        }
        Ok(SampleSet {
            p,
            d,
            seed,
            data,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Parse(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.p
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.p).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks_exact(self.p.max(1))
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Rows reordered by `order` (labels follow their rows).
    pub fn permuted(&self, order: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        SampleSet {
            data,
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|&i| l[i]).collect()),
            ..self.clone()
        }
    }

    /// Plain-text format: header `p d n seed`, then one row of `p` symbols per line.
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{} {} {} {}", self.p, self.d, self.len(), self.seed)?;
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&x.to_string());
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(input: R) -> Result<SampleSet> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header line".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("header `{header}` must be `p d n seed`")));
        }
        let num = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|e| Error::Parse(format!("header field `{s}`: {e}")))
        };
        let (p, d, n, seed) = (
            num(fields[0])? as usize,
            num(fields[1])? as usize,
            num(fields[2])? as usize,
            num(fields[3])?,
        );
        if d > u16::MAX as usize + 1 {
            return Err(Error::Parse(format!("alphabet size {d} too large")));
        }
        let mut rows = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| Error::Parse(format!("symbol `{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Parse(format!("header declares {n} rows, found {}", rows.len())));
        }
        SampleSet::new(p, d, seed, rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<SampleSet> {
        SampleSet::read(std::fs::File::open(path)?)
    }

    /// Sidecar of hidden labels, one per line.
    pub fn save_labels(&self, path: &Path) -> Result<()> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("sample set has no hidden labels".into()))?;
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for l in labels {
            writeln!(out, "{l}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_labels(self, path: &Path) -> Result<SampleSet> {
        let text = std::fs::read_to_string(path)?;
        let labels = text
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("label `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        self.with_labels(labels)
    }
}

enum ComponentSampler {
    Tree(TreeSampler),
    Table { cdf: Vec<f64>, p: usize, d: usize },
}

impl ComponentSampler {
    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [u16]) {
        match self {
            ComponentSampler::Tree(t) => t.draw(rng, out),
            ComponentSampler::Table { cdf, p, d } => {
                let idx = pick(cdf, rng.random::<f64>());
                for (slot, x) in out.iter_mut().zip(decode(idx, *d, *p)) {
                    *slot = x as u16;
                }
            }
        }
    }
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Exact ancestral sampler for a pairwise forest.
struct TreeSampler {
    /// visiting order (parents before children) with parent links
    order: Vec<(usize, Option<usize>)>,
    /// per node: CDF rows indexed by parent value (one row for roots)
    cdfs: Vec<Vec<Vec<f64>>>,
}

impl TreeSampler {
    fn new(c: &ComponentModel) -> Self {
        let p = c.num_nodes();
        let d = c.alphabet_size();
        let mut node_log = vec![vec![0.0; d]; p];
        // edge_log[(a,b)] with a < b, row-major [y_a][y_b]
        let mut edge_log = std::collections::BTreeMap::<(usize, usize), Vec<f64>>::new();
        for pot in c.potentials() {
            match *pot.clique() {
                [v] => node_log[v]
                    .iter_mut()
                    .zip(pot.log_table())
                    .for_each(|(a, b)| *a += b),
                [a, b] => edge_log
                    .entry((a, b))
                    .or_insert_with(|| vec![0.0; d * d])
                    .iter_mut()
                    .zip(pot.log_table())
                    .for_each(|(x, y)| *x += y),
                _ => unreachable!("pairwise forest"),
            }
        }
        let pair = |parent: usize, child: usize, yp: usize, yc: usize| -> f64 {
            let (key, idx) = if parent < child {
                ((parent, child), yp * d + yc)
            } else {
                ((child, parent), yc * d + yp)
            };
            edge_log.get(&key).map_or(0.0, |t| t[idx])
        };

        let g = c.graph();
        let mut order = Vec::with_capacity(p);
        let mut seen = vec![false; p];
        for root in 0..p {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let start = order.len();
            order.push((root, None));
            let mut i = start;
            while i < order.len() {
                let (v, _) = order[i];
                for &w in g.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        order.push((w, Some(v)));
                    }
                }
                i += 1;
            }
        }

        // upward log-messages: incoming[v][y_v] = Σ over children of log m_{child→v}(y_v)
        let mut incoming = vec![vec![0.0; d]; p];
        for &(v, parent) in order.iter().rev() {
            if let Some(u) = parent {
                let msg: Vec<f64> = (0..d)
                    .map(|yu| {
                        let terms: Vec<f64> = (0..d)
                            .map(|yv| node_log[v][yv] + incoming[v][yv] + pair(u, v, yu, yv))
                            .collect();
                        log_sum_exp(&terms)
                    })
                    .collect();
                incoming[u].iter_mut().zip(&msg).for_each(|(a, m)| *a += m);
            }
        }

        let normalised_cdf = |logits: Vec<f64>| -> Vec<f64> {
            let z = log_sum_exp(&logits);
            cumulative(&logits.iter().map(|l| (l - z).exp()).collect::<Vec<_>>())
        };
        let mut cdfs = vec![Vec::new(); p];
        for &(v, parent) in &order {
            cdfs[v] = match parent {
                None => vec![normalised_cdf(
                    (0..d).map(|y| node_log[v][y] + incoming[v][y]).collect(),
                )],
                Some(u) => (0..d)
                    .map(|yu| {
                        normalised_cdf(
                            (0..d)
                                .map(|y| node_log[v][y] + incoming[v][y] + pair(u, v, yu, y))
                                .collect(),
                        )
                    })
                    .collect(),
            };
        }
        TreeSampler { order, cdfs }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [u16]) {
        for &(v, parent) in &self.order {
            let row = parent.map_or(0, |u| out[u] as usize);
            out[v] = pick(&self.cdfs[v][row], rng.random::<f64>()) as u16;
        }
    }
}

/// Draw `n` i.i.d. rows. Hidden labels are recorded in the result.
pub fn sample(m: &MixtureModel, n: usize, seed: u64, cap: usize) -> Result<SampleSet> {
    let p = m.num_nodes();
    let d = m.alphabet_size();
    let mut oracle: Option<Oracle> = None;
    let mut samplers = Vec::with_capacity(m.num_components());
    for (h, c) in m.components().iter().enumerate() {
        if c.is_pairwise_forest() {
            samplers.push(ComponentSampler::Tree(TreeSampler::new(c)));
        } else {
            if oracle.is_none() {
                oracle = Some(Oracle::new(m, cap)?);
            }
            let table = oracle.as_ref().expect("oracle").component(h);
            samplers.push(ComponentSampler::Table {
                cdf: cumulative(table.probs()),
                p,
                d,
            });
        }
    }
    let weight_cdf = cumulative(m.weights());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0u16; n * p];
    let mut labels = Vec::with_capacity(n);
    for row in data.chunks_exact_mut(p) {
        let h = pick(&weight_cdf, rng.random::<f64>());
        samplers[h].draw(&mut rng, row);
        labels.push(h);
    }
    Ok(SampleSet {
        p,
        d,
        seed,
        data,
        labels: Some(labels),
    })
}
