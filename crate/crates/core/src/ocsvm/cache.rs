use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use super::Kernel;

/// Rows of the kernel matrix: fully precomputed for small problems, an LRU
/// row cache otherwise.
pub(crate) struct KernelRows<'a> {
    kernel: Kernel,
    rows: &'a [&'a [f64]],
    diag: Vec<f64>,
    full: Option<Vec<Rc<[f64]>>>,
    cached: HashMap<usize, Rc<[f64]>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    pub fn new(kernel: Kernel, rows: &'a [&'a [f64]], full_limit: usize, cache_entries: usize) -> Self {
        let n = rows.len();
        let diag = rows.iter().map(|r| kernel.eval(r, r)).collect();
        let mut this = KernelRows {
            kernel,
            rows,
            diag,
            full: None,
            cached: HashMap::new(),
            order: VecDeque::new(),
            capacity: (cache_entries / n.max(1)).max(2),
        };
        if n <= full_limit {
            this.full = Some((0..n).map(|i| this.compute(i)).collect());
        }
        this
    }

    fn compute(&self, i: usize) -> Rc<[f64]> {
        self.rows.iter().map(|r| self.kernel.eval(self.rows[i], r)).collect()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn row(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(full) = &self.full {
            return full[i].clone();
        }
        if let Some(r) = self.cached.get(&i) {
            let r = r.clone();
            if let Some(pos) = self.order.iter().position(|&k| k == i) {
                self.order.remove(pos);
            }
            self.order.push_back(i);
            return r;
        }
        let r = self.compute(i);
        if self.cached.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cached.remove(&old);
            }
        }
        self.cached.insert(i, r.clone());
        self.order.push_back(i);
        r
    }
}
