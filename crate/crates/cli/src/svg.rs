/// Minimal labelled scatter plot, one point per model.
pub fn scatter_svg(points: &[(String, f64, f64)], x_label: &str, y_label: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    let finite: Vec<&(String, f64, f64)> = points.iter().filter(|p| p.1.is_finite() && p.2.is_finite()).collect();
    let span = |f: fn(&(String, f64, f64)) -> f64| {
        let lo = finite.iter().map(|p| f(p)).fold(f64::INFINITY, f64::min);
        let hi = finite.iter().map(|p| f(p)).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(|p| p.1);
    let (y0, y1) = span(|p| p.2);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    s.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - PAD,
        r = W - PAD
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        W / 2.0,
        H - 15.0
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{y_label}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (name, x, y) in finite {
        let (px, py) = (sx(*x), sy(*y));
        s.push_str(&format!("<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"steelblue\"/>\n"));
        s.push_str(&format!("<text x=\"{:.2}\" y=\"{:.2}\">{name}</text>\n", px + 6.0, py - 6.0));
    }
    s.push_str("</svg>\n");
    s
}
