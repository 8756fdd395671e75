use geoprofit_core::validation::*;
fn main() {
    let t = std::time::Instant::now();
    let r = run_loss_battery(&LossBattery::default(), &McConfig::default()).unwrap();
    for c in &r.cells {
        println!(
            "{:.1} {:.2} {:>4} a={:.3e} s={:.3e} hw={:.1e} dec={:.2} band={} ok={}",
            c.cv, c.ratio, c.slack, c.analytic, c.simulated, c.half_width, c.decades, c.in_band, c.agrees
        );
    }
    println!("{} {} {} {} {:?}", r.counted, r.agreeing, r.share, r.passed, t.elapsed());
}
