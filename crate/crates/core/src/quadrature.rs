//! Gauss-Legendre rules on `[0, 1]`, cached per order.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn new(order: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("order >= 1"));
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// The `order`-point rule on `[0, 1]`; `order` is clamped to `1..=MAX_ORDER`.
pub fn gauss(order: usize) -> &'static GaussRule {
    static RULES: [OnceLock<GaussRule>; MAX_ORDER + 1] = [const { OnceLock::new() }; MAX_ORDER + 1];
    let order = order.clamp(1, MAX_ORDER);
    RULES[order].get_or_init(|| GaussRule::new(order))
}
