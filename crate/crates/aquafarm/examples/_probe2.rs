// probe: weight drift WITH the w factor (classical logistic / Richards)
fn rate(t: f64) -> f64 { 0.1 + 0.3 * t }

fn run(with_w: bool, u_zero: bool, tau: f64) -> (f64, f64, f64) {
    let (gamma, gamma_f, mu, mu_f, w_inf, nu) = (5.0, 10.0, 0.1, 3.0, 3.0, 0.75);
    let dt = 1e-4;
    let n = (tau / dt).round() as usize;
    let (mut w, mut h) = (0.01f64, 1.0f64);
    let mut cost = 0.0;
    for k in 0..n {
        let t = k as f64 * dt;
        let f = rate(t);
        let u = if u_zero { 0.0 } else { f };
        cost += h * u * dt;
        let miss = f - u;
        let geom = 1.0 - (w / w_inf).powf(nu);
        let dw = if with_w { (gamma - gamma_f * miss * miss) * w * geom } else { (gamma - gamma_f * miss * miss) * geom };
        let dh = (-mu - mu_f * miss * miss) * h;
        w += dt * dw; h += dt * dh;
    }
    (w, h, -0.075 * cost + h * w * 0.1)
}

fn peak(with_w: bool) -> f64 {
    let dt = 3.0 / 2048.0;
    let (gamma, mu, w_inf, nu) = (5.0f64, 0.1, 3.0, 0.75);
    let (mut w, mut h) = (0.01f64, 1.0f64);
    let (mut best, mut best_t) = (f64::MIN, 0.0);
    for k in 0..=2048 {
        let t = k as f64 * dt;
        if w * h > best { best = w * h; best_t = t; }
        let geom = 1.0 - (w / w_inf).powf(nu);
        let dw = if with_w { gamma * w * geom } else { gamma * geom };
        w += dt * dw; h += dt * (-mu) * h;
    }
    best_t
}

fn main() {
    for with_w in [false, true] {
        let tau1 = peak(with_w);
        let (_, _, j_f_tau1) = run(with_w, false, tau1);
        let (_, _, j_f_t) = run(with_w, false, 3.0);
        let (_, _, j_0_tau1) = run(with_w, true, tau1);
        let (_, _, j_0_t) = run(with_w, true, 3.0);
        println!("with_w={with_w}: tau1={tau1:.4} J(f,tau1)={j_f_tau1:.4} J(f,T)={j_f_t:.4} J(0,tau1)={j_0_tau1:.4} J(0,T)={j_0_t:.4}");
        println!("   expected: tau1=2.176  J(f,tau1)=0.1732  J(f,T)=0.1175  J(0,tau1)=0.0285  J(0,T)=0.001");
    }
}
