use nalgebra::DMatrix;

use crate::linalg::{distance, dot, norm};

/// Sign change to look for, measured along the direction of integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Either,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// `direction . v = 0`; with `d = 1` and `direction = [1]` this is
    /// exactly the reversibility subspace `v = 0`.
    SymmetryCrossing { direction: Vec<f64> },
    /// `|U - center| = radius`, leaving the ball.
    BallExit { center: Vec<f64>, radius: f64 },
    /// `|U - center| = radius`, entering the ball.
    BallEntry { center: Vec<f64>, radius: f64 },
    /// `|P (U - center)| = radius` with `P` the tangent-coordinate map of a
    /// local manifold, entering its box.
    ManifoldBoundary {
        center: Vec<f64>,
        radius: f64,
        projector: DMatrix<f64>,
    },
    /// `(u - center) . v = 0`: stationary distance from a point in position
    /// space.
    DistanceExtremum { center: Vec<f64> },
    /// Coordinate `index` of the state crosses `level`.
    Level { index: usize, level: f64 },
    /// `normal . (u - point) = 0` in position space.
    Hyperplane { normal: Vec<f64>, point: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub crossing: Crossing,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    /// Position of the event in the list passed to the integrator.
    pub index: usize,
    pub xi: f64,
    pub state: Vec<f64>,
}

impl EventSpec {
    pub fn new(kind: EventKind, crossing: Crossing, terminal: bool) -> Self {
        if let EventKind::BallExit { radius, .. }
        | EventKind::BallEntry { radius, .. }
        | EventKind::ManifoldBoundary { radius, .. } = &kind
        {
            assert!(*radius > 0.0, "event radius must be positive");
        }
        Self {
            kind,
            crossing,
            terminal,
        }
    }

    pub fn symmetry_crossing(direction: Vec<f64>, terminal: bool) -> Self {
        Self::new(EventKind::SymmetryCrossing { direction }, Crossing::Either, terminal)
    }

    pub fn ball_exit(center: Vec<f64>, radius: f64, terminal: bool) -> Self {
        Self::new(EventKind::BallExit { center, radius }, Crossing::Rising, terminal)
    }

    pub fn ball_entry(center: Vec<f64>, radius: f64, terminal: bool) -> Self {
        Self::new(EventKind::BallEntry { center, radius }, Crossing::Falling, terminal)
    }

    pub fn manifold_boundary(center: Vec<f64>, radius: f64, projector: DMatrix<f64>, terminal: bool) -> Self {
        Self::new(
            EventKind::ManifoldBoundary {
                center,
                radius,
                projector,
            },
            Crossing::Falling,
            terminal,
        )
    }

    /// Local maximum of the distance to `center` (the turning point of an
    /// excursion) when `crossing` is `Falling`.
    pub fn distance_extremum(center: Vec<f64>, crossing: Crossing, terminal: bool) -> Self {
        Self::new(EventKind::DistanceExtremum { center }, crossing, terminal)
    }

    pub fn level(index: usize, level: f64, crossing: Crossing, terminal: bool) -> Self {
        Self::new(EventKind::Level { index, level }, crossing, terminal)
    }

    pub fn hyperplane(normal: Vec<f64>, point: Vec<f64>, crossing: Crossing, terminal: bool) -> Self {
        Self::new(EventKind::Hyperplane { normal, point }, crossing, terminal)
    }

    /// Event function on the full state `(u, v)`.
    pub fn value(&self, y: &[f64]) -> f64 {
        let d = y.len() / 2;
        let (u, v) = y.split_at(d);
        match &self.kind {
            EventKind::SymmetryCrossing { direction } => dot(direction, v),
            EventKind::BallExit { center, radius } | EventKind::BallEntry { center, radius } => {
                distance(y, center) - radius
            }
            EventKind::ManifoldBoundary {
                center,
                radius,
                projector,
            } => {
                let diff: Vec<f64> = y.iter().zip(center).map(|(a, b)| a - b).collect();
                let coords: Vec<f64> = (0..projector.nrows())
                    .map(|i| (0..diff.len()).map(|j| projector[(i, j)] * diff[j]).sum())
                    .collect();
                norm(&coords) - radius
            }
            EventKind::DistanceExtremum { center } => {
                u.iter().zip(center).zip(v).map(|((a, b), w)| (a - b) * w).sum()
            }
            EventKind::Level { index, level } => y[*index] - level,
            EventKind::Hyperplane { normal, point } => {
                normal.iter().zip(u).zip(point).map(|((n, a), b)| n * (a - b)).sum()
            }
        }
    }

    pub(crate) fn crosses(&self, ga: f64, gb: f64) -> bool {
        let rising = ga < 0.0 && gb >= 0.0;
        let falling = ga > 0.0 && gb <= 0.0;
        match self.crossing {
            Crossing::Rising => rising,
            Crossing::Falling => falling,
            Crossing::Either => rising || falling,
        }
    }
}
