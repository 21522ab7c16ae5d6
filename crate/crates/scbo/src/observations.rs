//! Raw evaluation storage.

use ndarray::{Array2, ArrayView1};

/// Evaluated points with their raw objective and constraint values.
///
/// Points are kept in unit-cube coordinates (the optimizer's native space);
/// objective and constraint values are in the problem's original units.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    points: Array2<f64>,
    objectives: Vec<f64>,
    constraints: Array2<f64>,
}

impl ObservationSet {
    pub fn new(dim: usize, num_constraints: usize) -> Self {
        ObservationSet {
            points: Array2::zeros((0, dim)),
            objectives: Vec::new(),
            constraints: Array2::zeros((0, num_constraints)),
        }
    }

    pub fn push(&mut self, point: &[f64], objective: f64, constraints: &[f64]) {
        assert_eq!(point.len(), self.points.ncols());
        assert_eq!(constraints.len(), self.constraints.ncols());
        self.points.push_row(ArrayView1::from(point)).unwrap();
        self.constraints.push_row(ArrayView1::from(constraints)).unwrap();
        self.objectives.push(objective);
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn objectives(&self) -> &[f64] {
        &self.objectives
    }

    /// Constraint values as an n×m matrix.
    pub fn constraints(&self) -> &Array2<f64> {
        &self.constraints
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).to_vec()
    }

    pub fn constraint_row(&self, i: usize) -> Vec<f64> {
        self.constraints.row(i).to_vec()
    }
}
