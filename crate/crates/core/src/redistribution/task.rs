use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{dot, DenseMatrix};
use crate::rng::{self, SimRng};

// Random stream ids, one per generated quantity.
const STREAM_TEACHER: u64 = 1;
const STREAM_SHIFT: u64 = 2;
const STREAM_INPUTS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TaskKind {
    /// `y = W*·x` with a fixed teacher matrix; mean squared error.
    TeacherRegression,
    /// Labels from `argmax(W2*·relu(W1*·x))`; softmax cross-entropy.
    TwoLayerClassification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `samples × output_dim`.
    Regression(DenseMatrix),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs (`samples × input_dim`, one sample per row) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: DenseMatrix,
    pub targets: Targets,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// A reproducible desk-scale stand-in for a fine-tuning dataset.
///
/// `teacher` holds the ground-truth weights and `base` the "pretrained"
/// weights the student starts from: the teacher plus a Gaussian shift, so the
/// student has something to recover after truncation. Both are listed layer
/// by layer, each as an `out × in` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    pub teacher: Vec<DenseMatrix>,
    pub base: Vec<DenseMatrix>,
    pub train: Split,
    pub holdout: Split,
}

impl SyntheticTask {
    pub fn builder(kind: TaskKind) -> TaskBuilder {
        TaskBuilder::new(kind)
    }

    /// The default regression task: 64→64, 4096 training samples.
    pub fn teacher_regression(seed: u64) -> Result<Self> {
        TaskBuilder::new(TaskKind::TeacherRegression).seed(seed).build()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TaskBuilder {
    pub kind: TaskKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden width of the classification teacher.
    pub hidden_dim: usize,
    pub samples: usize,
    pub holdout: usize,
    pub seed: u64,
    /// Teacher singular values are `(1 + i)^-decay`.
    pub spectrum_decay: f64,
    /// Std of the base-weight shift, relative to the teacher's RMS entry.
    pub task_shift: f64,
    /// Zero the teacher spectrum beyond this many ranks.
    pub teacher_rank: Option<usize>,
}

impl Default for TaskBuilder {
    fn default() -> Self {
        Self::new(TaskKind::TeacherRegression)
    }
}

impl TaskBuilder {
    pub fn new(kind: TaskKind) -> Self {
        let (input_dim, output_dim) = match kind {
            TaskKind::TeacherRegression => (64, 64),
            TaskKind::TwoLayerClassification => (32, 8),
        };
        Self {
            kind,
            input_dim,
            output_dim,
            hidden_dim: 64,
            samples: 4096,
            holdout: 1024,
            seed: 0,
            spectrum_decay: 2.0,
            task_shift: 0.3,
            teacher_rank: None,
        }
    }

    pub fn dims(mut self, input_dim: usize, output_dim: usize) -> Self {
        self.input_dim = input_dim;
        self.output_dim = output_dim;
        self
    }

    pub fn hidden_dim(mut self, hidden: usize) -> Self {
        self.hidden_dim = hidden;
        self
    }

    pub fn samples(mut self, train: usize, holdout: usize) -> Self {
        self.samples = train;
        self.holdout = holdout;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn spectrum_decay(mut self, decay: f64) -> Self {
        self.spectrum_decay = decay;
        self
    }

    pub fn task_shift(mut self, shift: f64) -> Self {
        self.task_shift = shift;
        self
    }

    pub fn teacher_rank(mut self, rank: usize) -> Self {
        self.teacher_rank = Some(rank);
        self
    }

    pub fn build(&self) -> Result<SyntheticTask> {
        if self.input_dim == 0 || self.output_dim == 0 || self.samples == 0 {
            return Err(Error::invalid("task dimensions and sample count must be positive"));
        }
        if !(self.task_shift >= 0.0 && self.task_shift.is_finite() && self.spectrum_decay.is_finite()) {
            return Err(Error::invalid("task shift and spectrum decay must be finite, shift non-negative"));
        }
        if self.kind == TaskKind::TwoLayerClassification && (self.hidden_dim == 0 || self.output_dim < 2) {
            return Err(Error::invalid("classification needs a hidden layer and at least two classes"));
        }

        let mut g = rng::stream(self.seed, STREAM_TEACHER);
        let teacher = match self.kind {
            TaskKind::TeacherRegression => {
                alloc::vec![self.teacher_matrix(&mut g, self.output_dim, self.input_dim)]
            }
            TaskKind::TwoLayerClassification => alloc::vec![
                self.teacher_matrix(&mut g, self.hidden_dim, self.input_dim),
                self.teacher_matrix(&mut g, self.output_dim, self.hidden_dim),
            ],
        };

        let mut g = rng::stream(self.seed, STREAM_SHIFT);
        let base = teacher
            .iter()
            .map(|w| {
                let rms = w.frobenius_norm() / math::sqrt((w.rows() * w.cols()) as f64);
                let std = self.task_shift * rms;
                DenseMatrix::from_fn(w.rows(), w.cols(), |r, c| w[(r, c)] + std * rng::standard_normal(&mut g))
            })
            .collect();

        let mut g = rng::stream(self.seed, STREAM_INPUTS);
        let total = self.samples + self.holdout;
        let x = DenseMatrix::from_fn(total, self.input_dim, |_, _| rng::standard_normal(&mut g));
        let targets = label(self.kind, &teacher, &x)?;
        let (train, holdout) = split_at(x, targets, self.samples);

        Ok(SyntheticTask {
            kind: self.kind,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            seed: self.seed,
            teacher,
            base,
            train,
            holdout,
        })
    }

    fn teacher_matrix(&self, g: &mut SimRng, rows: usize, cols: usize) -> DenseMatrix {
        let r = rows.min(cols);
        let u = random_orthonormal(g, rows, r);
        let v = random_orthonormal(g, cols, r);
        let live = self.teacher_rank.unwrap_or(r).min(r);
        let s: Vec<f64> = (0..r)
            .map(|i| if i < live { math::powf(1.0 + i as f64, -self.spectrum_decay) } else { 0.0 })
            .collect();
        DenseMatrix::from_fn(rows, cols, |i, j| (0..r).map(|t| u[(i, t)] * s[t] * v[(j, t)]).sum())
    }
}

/// `n × k` matrix with orthonormal columns (Gram–Schmidt, applied twice).
pub fn random_orthonormal(g: &mut SimRng, n: usize, k: usize) -> DenseMatrix {
    assert!(k <= n, "cannot draw {k} orthonormal columns in dimension {n}");
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut c: Vec<f64> = (0..n).map(|_| rng::standard_normal(g)).collect();
        for _ in 0..2 {
            for prev in &cols {
                let p = dot(&c, prev);
                for (ci, pi) in c.iter_mut().zip(prev) {
                    *ci -= p * pi;
                }
            }
        }
        let nrm = math::sqrt(dot(&c, &c));
        if nrm > 1e-8 {
            cols.push(c.into_iter().map(|x| x / nrm).collect());
        }
    }
    DenseMatrix::from_fn(n, k, |r, c| cols[c][r])
}

fn label(kind: TaskKind, teacher: &[DenseMatrix], x: &DenseMatrix) -> Result<Targets> {
    match kind {
        TaskKind::TeacherRegression => Ok(Targets::Regression(x.matmul(&teacher[0].transpose())?)),
        TaskKind::TwoLayerClassification => {
            let mut h = x.matmul(&teacher[0].transpose())?;
            for v in h.as_mut_slice() {
                *v = v.max(0.0);
            }
            let logits = h.matmul(&teacher[1].transpose())?;
            Ok(Targets::Classes((0..logits.rows()).map(|r| argmax(logits.row(r))).collect()))
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn split_at(x: DenseMatrix, targets: Targets, n: usize) -> (Split, Split) {
    let head: Vec<usize> = (0..n).collect();
    let tail: Vec<usize> = (n..x.rows()).collect();
    let (t_head, t_tail) = match targets {
        Targets::Regression(y) => (
            Targets::Regression(y.select_rows(&head)),
            Targets::Regression(y.select_rows(&tail)),
        ),
        Targets::Classes(c) => (Targets::Classes(c[..n].to_vec()), Targets::Classes(c[n..].to_vec())),
    };
    (
        Split {
            inputs: x.select_rows(&head),
            targets: t_head,
        },
        Split {
            inputs: x.select_rows(&tail),
            targets: t_tail,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = TaskBuilder::new(TaskKind::TeacherRegression).dims(8, 6).samples(20, 5).seed(3).build().unwrap();
        let b = TaskBuilder::new(TaskKind::TeacherRegression).dims(8, 6).samples(20, 5).seed(3).build().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 20);
        assert_eq!(a.holdout.len(), 5);
        assert_eq!(a.teacher[0].shape(), (6, 8));
        let c = TaskBuilder::new(TaskKind::TeacherRegression).dims(8, 6).samples(20, 5).seed(4).build().unwrap();
        assert_ne!(a.base, c.base);
    }

    #[test]
    fn teacher_rank_limits_spectrum() {
        let t = TaskBuilder::new(TaskKind::TeacherRegression).dims(10, 10).samples(4, 0).teacher_rank(3).build().unwrap();
        let f = crate::svd::svd_decompose(&t.teacher[0], 1e-10).unwrap();
        assert!(f.sigma[2] > 0.1 && f.sigma[3] < 1e-12);
    }

    #[test]
    fn orthonormal_draw() {
        let mut g = rng::stream(1, 0);
        let q = random_orthonormal(&mut g, 9, 4);
        let qtq = q.transpose().matmul(&q).unwrap();
        assert!(qtq.max_abs_diff(&DenseMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn classification_labels_in_range() {
        let t = TaskBuilder::new(TaskKind::TwoLayerClassification).samples(200, 50).seed(2).build().unwrap();
        let Targets::Classes(c) = &t.train.targets else { panic!() };
        assert!(c.iter().all(|&k| k < 8));
        assert_eq!(t.base.len(), 2);
    }
}
