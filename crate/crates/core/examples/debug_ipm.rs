use opflab::case::{build_network, parse_case};
use opflab::network::LoadVector;
use opflab::solver::{solve_acopf, SolverOptions};

const TOY: &str = "\
function mpc = two_bus_toy
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0 1 1 0 135 1 1.1 0.9;
    2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
    1 2 0.01 0.1 0 200 0 0 0 0 1 -60 60;
];
mpc.gencost = [
    2 0 0 3 0 1 7;
];
";

fn main() {
    env_logger::init();
    let net = build_network(&parse_case(TOY).unwrap()).unwrap();
    let loads = LoadVector::nominal(&net);
    let r = solve_acopf(&net, &loads, &SolverOptions::default()).unwrap();
    println!("status {:?} iters {} obj {} pg {:?}", r.status, r.iterations, r.objective, r.point.pg);
    println!("point: vm {:?} va {:?} qg {:?}", r.point.vm, r.point.va, r.point.qg);
}
