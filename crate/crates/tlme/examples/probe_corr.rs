use tlme::bath::{BathSpec, Branch};
use tlme::kernel::KernelCtx;

fn main() {
    let c = KernelCtx::new(0.1, BathSpec::default()).unwrap();
    for tau in [55.0, 59.9, 60.1, 65.0, 80.0] {
        let p = c.corr(Branch::Plus, tau);
        let m = c.corr(Branch::Minus, tau);
        println!("tau={tau:6}: plus {p:.12e}  minus {m:.12e}");
    }
    let below = c.corr(Branch::Plus, 59.999999);
    let above = c.corr(Branch::Plus, 60.000001);
    println!("jump plus : {:.3e} rel {:.3e}", (below-above).norm(), (below-above).norm()/below.norm());
    let below = c.corr(Branch::Minus, 59.999999);
    let above = c.corr(Branch::Minus, 60.000001);
    println!("jump minus: {:.3e} rel {:.3e}", (below-above).norm(), (below-above).norm()/below.norm());
}
