//! Gnuplot script for the standard figure set.

use std::fmt::Write;
use std::path::Path;

/// What the analysis produced, for choosing panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotContent {
    pub n_modes: usize,
    pub detrended: bool,
    pub mutual_information: bool,
}

fn quoted(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', "''"))
}

/// Figures:
/// 1. δρ(t) = ρ(t) − ρ(0) of the spin and each mode, one panel each;
/// 2. spin and mode populations on one plot;
/// 3. detrended mode populations, one panel per mode;
/// 4. mutual information between the spin and each mode.
///
/// Each figure is written to `<stem>_figN.png`.
pub fn gnuplot_script(trajectory_csv: &Path, analysis_csv: &Path, stem: &str, content: PlotContent) -> String {
    let traj = quoted(trajectory_csv);
    let analysis = quoted(analysis_csv);
    let p = content.n_modes;
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; run with `gnuplot <this file>`");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 1200,900 enhanced");
    let _ = writeln!(s, "set xlabel 't (ps)'");

    let panels = p + 1;
    let cols = if panels > 2 { 2 } else { panels };
    let rows = panels.div_ceil(cols);
    let _ = writeln!(s, "\n# deviation from the initial populations");
    let _ = writeln!(s, "set output '{stem}_fig1.png'");
    let _ = writeln!(s, "set multiplot layout {rows},{cols}");
    let _ = writeln!(s, "set ylabel '{{/Symbol d}}{{/Symbol r}}'");
    let _ =
        writeln!(s, "plot {analysis} using 't_ps':'delta_spin_rho11' with lines title '(a) spin {{/Symbol r}}_{{11}}'");
    for k in 1..=p {
        let panel = (b'a' + k as u8) as char;
        let _ = writeln!(
            s,
            "plot {analysis} using 't_ps':'delta_mode{k}_rho00' with lines title '({panel}) mode {k} {{/Symbol r}}_{{00}}'"
        );
    }
    let _ = writeln!(s, "unset multiplot");

    let _ = writeln!(s, "\n# populations");
    let _ = writeln!(s, "set output '{stem}_fig2.png'");
    let _ = writeln!(s, "set ylabel 'population'");
    let mut curves = vec![format!("{traj} using 't_ps':'spin_rho11' with lines title 'spin {{/Symbol r}}_{{11}}'")];
    for k in 1..=p {
        curves.push(format!("{traj} using 't_ps':'mode{k}_rho00' with lines title 'p{k}'"));
    }
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));

    if content.detrended {
        let _ = writeln!(s, "\n# mode populations relative to thermal relaxation");
        let _ = writeln!(s, "set output '{stem}_fig3.png'");
        let _ = writeln!(s, "set multiplot layout {p},1");
        let _ = writeln!(s, "set ylabel '{{/Symbol D}}{{/Symbol r}}_{{00}}'");
        for k in 1..=p {
            let panel = (b'a' + (k - 1) as u8) as char;
            let _ = writeln!(
                s,
                "plot {analysis} using 't_ps':'detrended_mode{k}_rho00' with lines title '({panel}) mode {k}'"
            );
        }
        let _ = writeln!(s, "unset multiplot");
    }

    if content.mutual_information {
        let _ = writeln!(s, "\n# spin-mode mutual information");
        let _ = writeln!(s, "set output '{stem}_fig4.png'");
        let _ = writeln!(s, "set ylabel 'I (nats)'");
        let curves: Vec<String> = (1..=p)
            .map(|k| format!("{analysis} using 't_ps':'MI_spin_mode{k}' with lines title 'spin : mode {k}'"))
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    }
    let _ = writeln!(s, "\nset output");
    s
}

/// Relaxation rates against temperature, one curve per mode.
pub fn rates_script(rates_csv: &Path, stem: &str, n_modes: usize) -> String {
    let data = quoted(rates_csv);
    let curves: Vec<String> = (1..=n_modes)
        .map(|k| format!("{data} using 'temperature_K':'rate_{k}_per_ps' with linespoints title 'mode {k}'"))
        .collect();
    format!(
        "# gnuplot script; run with `gnuplot <this file>`\n\
         set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set terminal pngcairo size 900,700 enhanced\n\
         set output '{stem}_rates.png'\n\
         set xlabel 'T (K)'\n\
         set ylabel 'k (ps^{{-1}})'\n\
         plot {}\n\
         set output\n",
        curves.join(", \\\n     ")
    )
}
