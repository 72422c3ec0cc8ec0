//! Model problem: -eps^2 Laplace(u) + b u = f on the unit square with
//! homogeneous Dirichlet data, b = 2, and a manufactured solution with
//! boundary layers of width O(eps) along all four sides.
//!
//! The solution factors as u(x, y) = X(x) X(y) with
//! X(t) = 1 - a(t) - abar(t), where a and abar are the normalized
//! exponentials decaying from t = 0 and t = 1. Its layer decomposition
//! (smooth part, four edge layers, four corner layers) is available in
//! closed form, ordered bottom/right/top/left and then
//! bottom-left/bottom-right/top-right/top-left.

pub struct ScalarField {
    value: Box<dyn Fn(f64, f64) -> f64>,
    grad: Box<dyn Fn(f64, f64) -> (f64, f64)>,
}

impl ScalarField {
    pub fn new(
        value: impl Fn(f64, f64) -> f64 + 'static,
        grad: impl Fn(f64, f64) -> (f64, f64) + 'static,
    ) -> Self {
        ScalarField { value: Box::new(value), grad: Box::new(grad) }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(move |_, _| c, |_, _| (0.0, 0.0))
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.value)(x, y)
    }

    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        (self.grad)(x, y)
    }
}

/// Closed-form layer decomposition of the exact solution.
pub struct Decomposition {
    pub smooth: ScalarField,
    /// Edge layers w_i, one per strip.
    pub strips: [ScalarField; 4],
    /// Corner layers z_i, one per corner box.
    pub corners: [ScalarField; 4],
}

pub struct Problem {
    pub epsilon: f64,
    /// Lower bound constant with b >= 2 beta^2.
    pub beta: f64,
    pub reaction: Box<dyn Fn(f64, f64) -> f64>,
    pub rhs: Box<dyn Fn(f64, f64) -> f64>,
    pub exact: ScalarField,
    pub layers: Decomposition,
}

/// a(t) = e^{-t/eps} / (1 + e^{-1/eps}); decays from 1-ish at t = 0.
fn decay(eps: f64, t: f64) -> f64 {
    (-t / eps).exp() / (1.0 + (-1.0 / eps).exp())
}

/// abar(t) = a(1 - t), written directly to avoid cancellation in 1 - t.
fn decay_bar(eps: f64, t: f64) -> f64 {
    (-(1.0 - t) / eps).exp() / (1.0 + (-1.0 / eps).exp())
}

pub fn manufactured(epsilon: f64) -> Problem {
    assert!(epsilon > 0.0 && epsilon <= 1.0);
    let eps = epsilon;
    let x1 = move |t: f64| 1.0 - decay(eps, t) - decay_bar(eps, t);
    // X'(t) = (a(t) - abar(t)) / eps
    let dx1 = move |t: f64| (decay(eps, t) - decay_bar(eps, t)) / eps;

    let exact = ScalarField::new(
        move |x, y| x1(x) * x1(y),
        move |x, y| (dx1(x) * x1(y), x1(x) * dx1(y)),
    );

    // -eps^2 u'' picks up (a + abar) from each factor since a'' = a / eps^2
    let rhs = move |x: f64, y: f64| {
        (decay(eps, x) + decay_bar(eps, x)) * x1(y)
            + x1(x) * (decay(eps, y) + decay_bar(eps, y))
            + 2.0 * x1(x) * x1(y)
    };

    let strips = [
        // bottom: layer in y at y = 0
        ScalarField::new(
            move |_x, y| -decay(eps, y),
            move |_x, y| (0.0, decay(eps, y) / eps),
        ),
        // right: layer in x at x = 1
        ScalarField::new(
            move |x, _y| -decay_bar(eps, x),
            move |x, _y| (-decay_bar(eps, x) / eps, 0.0),
        ),
        // top
        ScalarField::new(
            move |_x, y| -decay_bar(eps, y),
            move |_x, y| (0.0, -decay_bar(eps, y) / eps),
        ),
        // left
        ScalarField::new(
            move |x, _y| -decay(eps, x),
            move |x, _y| (decay(eps, x) / eps, 0.0),
        ),
    ];

    let corners = [
        // bottom-left
        ScalarField::new(
            move |x, y| decay(eps, x) * decay(eps, y),
            move |x, y| {
                let (a, b) = (decay(eps, x), decay(eps, y));
                (-a / eps * b, -a * b / eps)
            },
        ),
        // bottom-right
        ScalarField::new(
            move |x, y| decay_bar(eps, x) * decay(eps, y),
            move |x, y| {
                let (a, b) = (decay_bar(eps, x), decay(eps, y));
                (a / eps * b, -a * b / eps)
            },
        ),
        // top-right
        ScalarField::new(
            move |x, y| decay_bar(eps, x) * decay_bar(eps, y),
            move |x, y| {
                let (a, b) = (decay_bar(eps, x), decay_bar(eps, y));
                (a / eps * b, a * b / eps)
            },
        ),
        // top-left
        ScalarField::new(
            move |x, y| decay(eps, x) * decay_bar(eps, y),
            move |x, y| {
                let (a, b) = (decay(eps, x), decay_bar(eps, y));
                (-a / eps * b, a * b / eps)
            },
        ),
    ];

    Problem {
        epsilon,
        beta: 1.0,
        reaction: Box::new(|_, _| 2.0),
        rhs: Box::new(rhs),
        exact,
        layers: Decomposition { smooth: ScalarField::constant(1.0), strips, corners },
    }
}
