// temporary probe for the large-support instances
use tsirelson::averages::*;
use tsirelson::ratio::q;
use tsirelson::*;

fn main() {
    let sp = SpaceSpec::schreier_reciprocal();
    let t0 = std::time::Instant::now();
    let a = make_basic_average(2, &q(1, 4), 10, families::Ladder::S).unwrap();
    println!("construct+verify: {:?}, support {}", t0.elapsed(), a.vector.support_len());
    let t1 = std::time::Instant::now();
    let rep = check_norm_bounds(&a, &sp).unwrap();
    println!("norm bounds: {:?}, passed {}", t1.elapsed(), rep.passed());
    for w in &rep.witnesses { println!("  {}: {}", w.label, w.value); }
    let t2 = std::time::Instant::now();
    let rep = check_flatness(&a, 1, &q(1, 1), &sp).unwrap();
    println!("flatness k=1: {:?}, passed {}", t2.elapsed(), rep.passed());
    let t3 = std::time::Instant::now();
    let rep = check_flatness(&a, 2, &q(1, 1), &sp).unwrap();
    println!("flatness k=2: {:?}, passed {} (expected fail)", t3.elapsed(), rep.passed());
}
