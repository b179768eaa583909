fn rate(t: f64) -> f64 { 0.1 + 0.3 * t }

fn run(dt: f64, u_zero: bool, tau: f64, nu_mode: u8) -> f64 {
    let (gamma, gamma_f, mu, mu_f, w_inf, nu) = (5.0, 10.0, 0.1, 3.0, 3.0, 0.75f64);
    let n = (tau / dt).round() as usize;
    let (mut w, mut h) = (0.01f64, 1.0f64);
    let mut cost = 0.0;
    for k in 0..n {
        let t = k as f64 * dt;
        let f = rate(t);
        let u = if u_zero { 0.0 } else { f };
        cost += h * u * dt;
        let miss = f - u;
        let geom = match nu_mode {
            0 => 1.0 - (w / w_inf).powf(nu),          // Richards
            1 => (1.0 - w / w_inf).powf(nu),          // alt placement
            _ => (1.0 - (w / w_inf)).powf(1.0),       // plain logistic
        };
        let dw = (gamma - gamma_f * miss * miss) * w * geom;
        let dh = (-mu - mu_f * miss * miss) * h;
        w += dt * dw; h += dt * dh;
    }
    -0.075 * cost + h * w * 0.1
}

fn main() {
    for dt in [1e-4, 3.0/2048.0] {
        println!("dt={dt:.6}: J(f,T)={:.4} J(f,2.1768)={:.4} J(0,2.1768)={:.4}", run(dt,false,3.0,0), run(dt,false,2.1768,0), run(dt,true,2.1768,0));
    }
    // alternative nu placements at fine dt
    for m in [1u8,2] {
        println!("nu_mode={m}: J(f,T)={:.4} J(f,tau1)={:.4} J(0,tau1)={:.4}", run(1e-4,false,3.0,m), run(1e-4,false,2.1768,m), run(1e-4,true,2.1768,m));
    }
}
