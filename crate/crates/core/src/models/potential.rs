use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One trigonometric mode `c cos(k·x) + s sin(k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub wave: Vec<f64>,
    pub cos: f64,
    pub sin: f64,
}

/// A trigonometric polynomial potential on `R^m`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigPotential {
    pub terms: Vec<TrigTerm>,
}

impl TrigPotential {
    /// `K cos(x_axis)` in dimension `m`.
    pub fn cosine(m: usize, axis: usize, k: f64) -> Self {
        let mut wave = vec![0.0; m];
        wave[axis] = 1.0;
        TrigPotential { terms: vec![TrigTerm { wave, cos: k, sin: 0.0 }] }
    }

    fn phase(t: &TrigTerm, x: &DVector<f64>) -> f64 {
        t.wave.iter().zip(x.iter()).map(|(k, x)| k * x).sum()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| {
            let p = Self::phase(t, x);
            t.cos * p.cos() + t.sin * p.sin()
        }).sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for t in &self.terms {
            let p = Self::phase(t, x);
            let f = -t.cos * p.sin() + t.sin * p.cos();
            for (gi, k) in g.iter_mut().zip(&t.wave) {
                *gi += f * k;
            }
        }
        g
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = x.len();
        let mut h = DMatrix::zeros(m, m);
        for t in &self.terms {
            let p = Self::phase(t, x);
            let f = -t.cos * p.cos() - t.sin * p.sin();
            for i in 0..m {
                for j in 0..m {
                    h[(i, j)] += f * t.wave[i] * t.wave[j];
                }
            }
        }
        h
    }

    /// Even potentials are invariant under `x -> -x`.
    pub fn is_even(&self) -> bool {
        self.terms.iter().all(|t| t.sin == 0.0)
    }

    /// True when no term depends on coordinate `axis`.
    pub fn independent_of(&self, axis: usize) -> bool {
        self.terms.iter().all(|t| t.wave[axis] == 0.0)
    }
}
