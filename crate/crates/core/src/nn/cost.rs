//! Structural resource count of the fully-parallel SC network.
//!
//! Every neuron instance owns its XNOR array, APC, comparator and ReLU OR
//! gate; every pooling window owns one gate. The counts say nothing about
//! FPGA or ASIC area.

use std::fmt;

use crate::nn::model::PoolMode;
use crate::nn::spec::{NetworkSpec, NeuronSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostReport {
    /// One per weight of every neuron instance, bias included.
    pub xnor_gates: u64,
    /// One per neuron instance.
    pub apcs: u64,
    /// ReLU gates of hidden neurons plus max-pool windows.
    pub or_gates: u64,
    /// Min-pool windows.
    pub and_gates: u64,
    /// Average-pool windows.
    pub muxes: u64,
    /// Comparators: image pixels, weights, hidden re-conversions and `0*`.
    pub converters: u64,
    /// `R_x`, `R_w`, plus a selector when average pooling is used.
    pub lfsrs: u64,
    /// Always zero: products are XNOR gates.
    pub multipliers: u64,
    /// Always zero: weights are hard-wired into the comparators.
    pub memory_blocks: u64,
}

/// Circuit cost of a single hidden neuron.
pub fn neuron_cost(neuron: &NeuronSpec) -> CostReport {
    CostReport {
        xnor_gates: neuron.apc_inputs() as u64,
        apcs: 1,
        or_gates: 1,
        converters: neuron.apc_inputs() as u64 + 2,
        lfsrs: 2,
        ..CostReport::default()
    }
}

pub fn cost_report(net: &NetworkSpec) -> CostReport {
    let mut r = CostReport::default();
    if net.layers.is_empty() {
        return r;
    }
    r.converters = net.input.len() as u64 + 1;
    let last = net.layers.len() - 1;
    for (i, layer) in net.layers.iter().enumerate() {
        let windows = layer.output.len() as u64;
        match layer.pool_mode {
            Some(PoolMode::Max) => r.or_gates += windows,
            Some(PoolMode::Min) => r.and_gates += windows,
            Some(PoolMode::Average) => r.muxes += windows,
            None => {
                let instances = layer.neuron_instances() as u64;
                let per = layer.apc_inputs() as u64;
                r.xnor_gates += instances * per;
                r.converters += instances * per;
                r.apcs += instances;
                if i != last {
                    r.or_gates += instances;
                    r.converters += instances;
                }
            }
        }
    }
    r.lfsrs = 2 + net.uses_average_pooling() as u64;
    r
}

impl CostReport {
    /// `(name, count)` rows in a fixed order.
    pub fn rows(&self) -> [(&'static str, u64); 9] {
        [
            ("xnor_gates", self.xnor_gates),
            ("apcs", self.apcs),
            ("or_gates", self.or_gates),
            ("and_gates", self.and_gates),
            ("muxes", self.muxes),
            ("converters", self.converters),
            ("lfsrs", self.lfsrs),
            ("multipliers", self.multipliers),
            ("memory_blocks", self.memory_blocks),
        ]
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, n) in self.rows() {
            writeln!(f, "{name:<14} {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Shape;
    use crate::nn::spec::ScParams;

    #[test]
    fn single_neuron_hand_count() {
        let n = NeuronSpec {
            weights: vec![1, 2, 3, 4],
            bias: None,
        };
        let c = neuron_cost(&n);
        assert_eq!((c.xnor_gates, c.apcs, c.or_gates, c.lfsrs), (4, 1, 1, 2));
        assert_eq!((c.multipliers, c.memory_blocks), (0, 0));
    }

    #[test]
    fn empty_network_is_all_zeros() {
        let net = NetworkSpec {
            input: Shape::new(1, 28, 28),
            layers: vec![],
            params: ScParams::default(),
        };
        assert_eq!(cost_report(&net), CostReport::default());
    }
}
