use tlme::diagrams::STable;
use tlme::BathSpec;

fn main() {
    let t0 = std::time::Instant::now();
    let table = STable::build(1.0, BathSpec::default()).unwrap();
    println!("build: {:?}", t0.elapsed());
    for (k, l) in table.orders() {
        let m = table.get(k, l).unwrap();
        println!("S^({k})_{l} (unit coupling), max |entry| = {:.6e}", tlme::linalg::max_abs(&m));
        println!("{m:.6}");
    }
}
