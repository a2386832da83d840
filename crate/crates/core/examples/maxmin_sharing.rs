//! Max-min fair sharing of two links among three flows.
//!
//! Flow A uses L1, flow B crosses L1 and L2, flow C uses L2. L2 saturates
//! first at 20 per flow; A then takes what B leaves on L1.
//!
//!     cargo run --example maxmin_sharing

use gridflow::engine::{consumption, solve_maxmin, Demand, Resource, ResourceId, ResourceKind};

fn main() {
    let resources = vec![
        Resource { id: ResourceId(0), name: "L1".into(), capacity: 100.0, kind: ResourceKind::Link },
        Resource { id: ResourceId(1), name: "L2".into(), capacity: 40.0, kind: ResourceKind::Link },
    ];
    let a = [(ResourceId(0), 1.0)];
    let b = [(ResourceId(0), 1.0), (ResourceId(1), 1.0)];
    let c = [(ResourceId(1), 1.0)];
    // A fourth flow on L1 that cannot go faster than 15 on its own.
    let d = [(ResourceId(0), 1.0)];
    let demands = [
        Demand { footprint: &a, scaling_factor: 1.0, bound: None },
        Demand { footprint: &b, scaling_factor: 1.0, bound: None },
        Demand { footprint: &c, scaling_factor: 1.0, bound: None },
        Demand { footprint: &d, scaling_factor: 1.0, bound: Some(15.0) },
    ];
    let rates = solve_maxmin(&resources, &demands).expect("valid instance");
    for (name, r) in ["A", "B", "C", "D (bounded)"].iter().zip(&rates) {
        println!("{name:<12} {r:>8.3}");
    }
    for (res, used) in resources.iter().zip(consumption(resources.len(), &demands, &rates)) {
        println!("{:<4} used {used:>8.3} of {:>8.3}", res.name, res.capacity);
    }
}
