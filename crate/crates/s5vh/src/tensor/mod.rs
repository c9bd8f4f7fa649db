//! Dense row-major tensors with reverse-mode differentiation.
//!
//! The engine is a dynamic Wengert tape: forward operations record a backward
//! closure plus the parent node ids they need, and [`Tensor::backward`]
//! replays the records in reverse, accumulating vector-Jacobian products.
//! Values are immutable once produced; a tensor is a cheap handle over shared
//! storage. Tensors without a tape node run the exact same forward kernels,
//! which is how inference executes without gradient bookkeeping.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub mod gradcheck;
pub mod io;
pub mod ops;
pub(crate) mod raw;

thread_local! {
    /// Bytes materialized by tensor constructors on this thread. The bench
    /// uses this as a portable, deterministic activation-memory estimate.
    static ALLOC_BYTES: Cell<u64> = const { Cell::new(0) };
}

/// Reset the thread-local allocation counter.
pub fn reset_alloc_bytes() {
    ALLOC_BYTES.with(|c| c.set(0));
}

/// Bytes materialized by tensor constructors since the last reset.
pub fn alloc_bytes() -> u64 {
    ALLOC_BYTES.with(|c| c.get())
}

/// Backward rule: given the output gradient, produce one optional gradient
/// buffer per recorded parent (None when no gradient flows to that input).
type BackwardFn<S> = Box<dyn Fn(&[S]) -> Vec<Option<Vec<S>>>>;

struct NodeEntry<S: Scalar> {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn<S>>,
    numel: usize,
}

struct TapeInner<S: Scalar> {
    nodes: Vec<NodeEntry<S>>,
}

/// Recording tape for one computation. Cloning copies the handle.
pub struct Tape<S: Scalar> {
    inner: Rc<RefCell<TapeInner<S>>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Tape<S> {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    fn push_node(&self, entry: NodeEntry<S>) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(entry);
        inner.nodes.len() - 1
    }

    fn same_tape(&self, other: &Tape<S>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

struct TensorInner<S: Scalar> {
    data: Rc<Vec<S>>,
    shape: Vec<usize>,
    node: Option<(Tape<S>, usize)>,
}

/// Immutable dense tensor, row-major.
pub struct Tensor<S: Scalar> {
    inner: Rc<TensorInner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

impl<S: Scalar> Tensor<S> {
    fn from_parts(data: Rc<Vec<S>>, shape: Vec<usize>, node: Option<(Tape<S>, usize)>) -> Tensor<S> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        ALLOC_BYTES.with(|c| {
            c.set(c.get() + (data.len() * std::mem::size_of::<S>()) as u64);
        });
        Tensor {
            inner: Rc::new(TensorInner { data, shape, node }),
        }
    }

    /// Constant tensor detached from any tape.
    pub fn constant(data: Vec<S>, shape: Vec<usize>) -> Result<Tensor<S>> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(
                "constant",
                format!("shape {:?} does not hold {} elements", shape, data.len()),
            ));
        }
        Ok(Tensor::from_parts(Rc::new(data), shape, None))
    }

    /// Leaf variable registered on `tape`; gradients accumulate here.
    pub fn leaf(tape: &Tape<S>, data: Vec<S>, shape: Vec<usize>) -> Result<Tensor<S>> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(
                "leaf",
                format!("shape {:?} does not hold {} elements", shape, data.len()),
            ));
        }
        let numel = data.len();
        let id = tape.push_node(NodeEntry {
            parents: Vec::new(),
            backward: None,
            numel,
        });
        Ok(Tensor::from_parts(
            Rc::new(data),
            shape,
            Some((tape.clone(), id)),
        ))
    }

    pub fn scalar(value: S) -> Tensor<S> {
        Tensor::from_parts(Rc::new(vec![value]), vec![1], None)
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor<S> {
        let n = shape.iter().product();
        Tensor::from_parts(Rc::new(vec![S::ZERO; n]), shape, None)
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<S>> {
        Rc::clone(&self.inner.data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    /// Rows of a matrix (rank-2) tensor.
    pub fn rows(&self) -> usize {
        self.inner.shape[0]
    }

    /// Columns of a matrix (rank-2) tensor.
    pub fn cols(&self) -> usize {
        self.inner.shape[1]
    }

    /// True when this tensor participates in gradient tracking.
    pub fn requires_grad(&self) -> bool {
        self.inner.node.is_some()
    }

    fn node(&self) -> Option<&(Tape<S>, usize)> {
        self.inner.node.as_ref()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on tensor with {} elements", self.numel());
        self.inner.data[0]
    }

    pub fn is_all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Detach from the tape: same storage, no gradient tracking.
    pub fn detach(&self) -> Tensor<S> {
        Tensor::from_parts(self.data_rc(), self.inner.shape.clone(), None)
    }

    /// Record a new tensor produced from `inputs`.
    ///
    /// `backward(grad_out)` must return one gradient buffer per input, in
    /// input order (None to skip). When no input is on a tape the result is a
    /// plain constant and `backward` is dropped, so forward-only execution
    /// pays no recording cost.
    pub(crate) fn from_op(
        inputs: &[&Tensor<S>],
        data: Vec<S>,
        shape: Vec<usize>,
        backward: impl Fn(&[S]) -> Vec<Option<Vec<S>>> + 'static,
    ) -> Tensor<S> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let mut tape: Option<Tape<S>> = None;
        for t in inputs {
            if let Some((tp, _)) = t.node() {
                match &tape {
                    None => tape = Some(tp.clone()),
                    Some(existing) => {
                        assert!(existing.same_tape(tp), "inputs recorded on different tapes");
                    }
                }
            }
        }
        let Some(tape) = tape else {
            return Tensor::from_parts(Rc::new(data), shape, None);
        };
        let parents: Vec<Option<usize>> = inputs
            .iter()
            .map(|t| t.node().map(|(_, id)| *id))
            .collect();
        let numel = data.len();
        let id = tape.push_node(NodeEntry {
            parents,
            backward: Some(Box::new(backward)),
            numel,
        });
        Tensor::from_parts(Rc::new(data), shape, Some((tape, id)))
    }

    /// Reverse pass from a scalar output. Returns a gradient store that can
    /// be queried with any tensor recorded on the same tape.
    pub fn backward(&self) -> Result<Gradients<S>> {
        let (tape, seed_id) = self
            .node()
            .ok_or_else(|| Error::invalid("backward", "tensor is not on a tape"))?;
        if self.numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("expected scalar output, got shape {:?}", self.shape()),
            ));
        }
        let inner = tape.inner.borrow();
        let mut grads: Vec<Option<Vec<S>>> = vec![None; inner.nodes.len()];
        grads[*seed_id] = Some(vec![S::ONE]);
        for id in (0..=*seed_id).rev() {
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            let entry = &inner.nodes[id];
            if let Some(backward) = &entry.backward {
                let contributions = backward(&grad_out);
                debug_assert_eq!(contributions.len(), entry.parents.len());
                for (parent, contribution) in entry.parents.iter().zip(contributions) {
                    let (Some(pid), Some(c)) = (parent, contribution) else {
                        continue;
                    };
                    debug_assert_eq!(c.len(), inner.nodes[*pid].numel);
                    match &mut grads[*pid] {
                        Some(acc) => {
                            for (a, v) in acc.iter_mut().zip(&c) {
                                *a += *v;
                            }
                        }
                        slot => *slot = Some(c),
                    }
                }
            }
            grads[id] = Some(grad_out);
        }
        Ok(Gradients {
            tape: tape.clone(),
            grads,
        })
    }
}

/// Gradients produced by one reverse pass, queryable by tensor.
pub struct Gradients<S: Scalar> {
    tape: Tape<S>,
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient buffer for `t`, or None when no gradient flowed to it.
    pub fn get(&self, t: &Tensor<S>) -> Option<&[S]> {
        let (tape, id) = t.node()?;
        assert!(self.tape.same_tape(tape), "tensor from a different tape");
        self.grads.get(*id).and_then(|g| g.as_deref())
    }

    /// Gradient for `t`, densified to zeros when nothing flowed.
    pub fn wrt(&self, t: &Tensor<S>) -> Vec<S> {
        match self.get(t) {
            Some(g) => g.to_vec(),
            None => vec![S::ZERO; t.numel()],
        }
    }
}
