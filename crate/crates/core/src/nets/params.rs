use crate::real::Real;

/// A named, shaped parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered parameter blocks of one network. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    pub blocks: Vec<ParamBlock<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { blocks: Vec::new() }
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.push(ParamBlock {
            name: name.into(),
            shape,
            data,
        });
        self.blocks.len() - 1
    }

    pub fn get(&self, i: usize) -> &[T] {
        &self.blocks[i].data
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.blocks[i].data
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: vec![T::zero(); b.data.len()],
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.data.iter())
            .map(|v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum()
    }

    pub fn scale(&mut self, s: T) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: b.data.iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
                })
                .collect(),
        }
    }
}
