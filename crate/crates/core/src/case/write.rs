use std::fmt::Write as _;

use crate::network::PowerNetwork;

/// Serialize a network back to case text.
///
/// Emits `baseMVA = 1` with all quantities already in per-unit, so parsing
/// the output rebuilds a structurally identical network (no rescaling error).
/// Numbers are printed with Rust's shortest round-trip formatting.
pub fn write_case(net: &PowerNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.id);
    out.push_str("mpc.version = '2';\n");
    out.push_str("mpc.baseMVA = 1;\n");

    out.push_str("mpc.bus = [\n");
    for (i, b) in net.buses.iter().enumerate() {
        let bus_type = if i == net.slack { 3 } else { 1 };
        let _ = writeln!(
            out,
            "\t{} {} {} {} {} {} 1 1 0 0 1 {} {};",
            b.original_id, bus_type, b.demand.re, b.demand.im, b.shunt.re, b.shunt.im, b.v_max, b.v_min
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.gen = [\n");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t{} 0 0 {} {} 1 1 1 {} {};",
            net.buses[g.bus].original_id, g.s_max.im, g.s_min.im, g.s_max.re, g.s_min.re
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.branch = [\n");
    for br in &net.branches {
        let rate = br.s_max.unwrap_or(0.0);
        let _ = writeln!(
            out,
            "\t{} {} {} {} {} {} 0 0 {} {} 1 {} {};",
            net.buses[br.from].original_id,
            net.buses[br.to].original_id,
            br.resistance,
            br.reactance,
            br.charging,
            rate,
            br.tap,
            br.shift_deg,
            br.ang_min_deg,
            br.ang_max_deg
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.gencost = [\n");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t2 0 0 3 {} {} {};",
            g.cost.c2, g.cost.c1, g.cost.c0
        );
    }
    out.push_str("];\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_network, parse_case};

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0.05 1 1 0 135 1 1.1 0.9;
    2 1 50 10 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
    1 0 0 100 -100 1 100 1 80 0;
];
mpc.branch = [
    1 2 0.01 0.1 0.04 25 0 0 0.97 1.5 1 -30 30;
];
mpc.gencost = [
    2 0 0 3 0.1 1 0.5;
];
";

    #[test]
    fn round_trip_is_structural_identity() {
        let net = build_network(&parse_case(TWO_BUS).unwrap()).unwrap();
        let text = write_case(&net);
        let net2 = build_network(&parse_case(&text).unwrap()).unwrap();
        // Base changes to 1, everything else must round-trip exactly.
        assert_eq!(net2.buses, net.buses);
        assert_eq!(net2.generators, net.generators);
        assert_eq!(net2.branches, net.branches);
        assert_eq!(net2.slack, net.slack);
        // And a second pass is byte-stable.
        assert_eq!(write_case(&net2), text);
    }
}
