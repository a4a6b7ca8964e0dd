//! Disjoint union of many relational graphs, laid out for batched layers.

use std::cell::OnceCell;
use std::rc::Rc;

use marc_relgraph::{Domain, RelationalGraph};
use marc_tensor::{Matrix, MixTerm};

use crate::error::{GnnError, Result};

/// Flat edge arrays; edge `e` runs `src[e] → dst[e]` under relation `rel[e]`.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub rel: Rc<[usize]>,
}

impl EdgeIndex {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Nodes of every graph stacked as rows. Node features are N×d, the
/// normalised coordinates N×2; graph `g` owns rows `offsets[g]..offsets[g+1]`.
#[derive(Debug)]
pub struct GraphBatch {
    features: Matrix,
    coords: Matrix,
    offsets: Vec<usize>,
    relations: usize,
    edges: EdgeIndex,
    degree_terms: OnceCell<Rc<[MixTerm]>>,
    complete: OnceCell<EdgeIndex>,
    looped: OnceCell<EdgeIndex>,
}

#[derive(Debug)]
pub struct GraphBatchBuilder {
    width: usize,
    relations: usize,
    features: Vec<f64>,
    coords: Vec<f64>,
    offsets: Vec<usize>,
    src: Vec<usize>,
    dst: Vec<usize>,
    rel: Vec<usize>,
}

impl GraphBatchBuilder {
    pub fn push(&mut self, graph: &RelationalGraph, domain: &Domain) -> Result<()> {
        if graph.edges.len() != self.relations {
            return Err(GnnError::Relations {
                got: graph.edges.len(),
                expected: self.relations,
            });
        }
        let base = *self.offsets.last().unwrap();
        for e in &graph.entities {
            if e.features.len() != self.width {
                return Err(GnnError::Width {
                    layer: "graph batch".into(),
                    got: e.features.len(),
                    expected: self.width,
                });
            }
            self.features.extend_from_slice(&e.features);
            let p = domain.normalize(e.site.pos);
            self.coords.extend([p.x, p.y]);
        }
        for (r, edges) in graph.edges.iter().enumerate() {
            for &(s, t) in edges {
                self.src.push(base + s);
                self.dst.push(base + t);
                self.rel.push(r);
            }
        }
        self.offsets.push(base + graph.node_count());
        Ok(())
    }

    pub fn finish(self) -> Result<GraphBatch> {
        let n = *self.offsets.last().unwrap();
        if self.offsets.windows(2).any(|w| w[0] == w[1]) {
            return Err(GnnError::EmptyGraph);
        }
        Ok(GraphBatch {
            features: Matrix::from_vec(n, self.width, self.features)?,
            coords: Matrix::from_vec(n, 2, self.coords)?,
            offsets: self.offsets,
            relations: self.relations,
            edges: EdgeIndex {
                src: self.src.into(),
                dst: self.dst.into(),
                rel: self.rel.into(),
            },
            degree_terms: OnceCell::new(),
            complete: OnceCell::new(),
            looped: OnceCell::new(),
        })
    }
}

impl GraphBatch {
    pub fn builder(feature_width: usize, relations: usize) -> GraphBatchBuilder {
        GraphBatchBuilder {
            width: feature_width,
            relations,
            features: Vec::new(),
            coords: Vec::new(),
            offsets: vec![0],
            src: Vec::new(),
            dst: Vec::new(),
            rel: Vec::new(),
        }
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a RelationalGraph>, domain: &Domain) -> Result<Self> {
        let mut graphs = graphs.into_iter().peekable();
        let first = graphs.peek().ok_or(GnnError::EmptyGraph)?;
        let mut b = Self::builder(first.features.rows, first.edges.len());
        for g in graphs {
            b.push(g, domain)?;
        }
        b.finish()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn graph_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn relation_count(&self) -> usize {
        self.relations
    }

    /// Relational edges.
    pub fn edges(&self) -> &EdgeIndex {
        &self.edges
    }

    /// R-GCN aggregation: the self term of every node in block 0 and each
    /// relational edge in block `r + 1`, weighted by `1/|N_r(target)|`.
    pub fn degree_terms(&self) -> Rc<[MixTerm]> {
        self.degree_terms
            .get_or_init(|| {
                let n = self.node_count();
                let mut degree = vec![0u32; n * self.relations];
                for (&t, &r) in self.edges.dst.iter().zip(self.edges.rel.iter()) {
                    degree[t * self.relations + r] += 1;
                }
                let mut terms: Vec<MixTerm> = (0..n as u32)
                    .map(|v| MixTerm {
                        dst: v,
                        src: v,
                        block: 0,
                        coef: 1.0,
                    })
                    .collect();
                for e in 0..self.edges.len() {
                    let (s, t, r) = (self.edges.src[e], self.edges.dst[e], self.edges.rel[e]);
                    terms.push(MixTerm {
                        dst: t as u32,
                        src: s as u32,
                        block: r as u32 + 1,
                        coef: 1.0 / degree[t * self.relations + r] as f64,
                    });
                }
                terms.into()
            })
            .clone()
    }

    /// Every ordered pair within each graph, self pairs included.
    pub fn complete_edges(&self) -> &EdgeIndex {
        self.complete.get_or_init(|| {
            let (mut src, mut dst) = (Vec::new(), Vec::new());
            for w in self.offsets.windows(2) {
                for i in w[0]..w[1] {
                    for j in w[0]..w[1] {
                        src.push(j);
                        dst.push(i);
                    }
                }
            }
            let rel = vec![0; src.len()];
            EdgeIndex {
                src: src.into(),
                dst: dst.into(),
                rel: rel.into(),
            }
        })
    }

    /// Relational edges plus one self edge per node under the extra
    /// relation index `relation_count()`.
    pub fn looped_edges(&self) -> &EdgeIndex {
        self.looped.get_or_init(|| {
            let n = self.node_count();
            let mut src = self.edges.src.to_vec();
            let mut dst = self.edges.dst.to_vec();
            let mut rel = self.edges.rel.to_vec();
            src.extend(0..n);
            dst.extend(0..n);
            rel.extend(std::iter::repeat(self.relations).take(n));
            EdgeIndex {
                src: src.into(),
                dst: dst.into(),
                rel: rel.into(),
            }
        })
    }
}
