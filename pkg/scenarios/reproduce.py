"""Regenerate every anchored number and the CSV grids into an output directory.

    python scenarios/reproduce.py [OUT_DIR]
"""

import sys
from pathlib import Path

from sunlease import forecast as fc
from sunlease.economics import Site, Tariff, breakeven_alpha, builtin_catalog, grid_csv, payback_grid, quote, revenue_surface
from sunlease.simulator import load_config, run
from sunlease.solar import GeoLocation, PlantConfig, annual_energy

HERE = Path(__file__).resolve().parent
ALPHAS = [round(0.1 * k, 1) for k in range(11)]


def main(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)

    q = quote(20.0, 0.02, 1.0, 0.05)
    energy = annual_energy(1670.7, 1.0, 0.7739)
    print(f"worked example: R_C={q.r_c:.3f} R_N={q.r_n:.3f} E_T={energy:.1f} kWh A={q.r_n * energy:.1f} EUR/yr")
    print(f"breakeven alpha: eta_c=20 -> {breakeven_alpha(20, 0.02, 0.05):.3f}, eta_c=10 -> {breakeven_alpha(10, 0.02, 0.05):.3f}")
    print(f"annual energy: {annual_energy(1670.7, 1, 1 - 0.2261):.1f} kWh, {annual_energy(1968.8, 1, 1 - 0.2160):.1f} kWh")

    site = Site(1670.7, 0.7739, 1.0)
    (out_dir / "revenue_surface.csv").write_text(
        grid_csv(revenue_surface([25, 50, 75, 100, 150, 200], [0.005, 0.01, 0.02, 0.04, 0.08], ALPHAS, 0.05, site))
    )
    (out_dir / "payback_grid.csv").write_text(grid_csv(payback_grid(builtin_catalog(), ALPHAS, [], site, Tariff())))
    print(f"grids written to {out_dir}")

    plant = PlantConfig(GeoLocation(41.53, 2.23), p_mpp=1.0, system_loss=0.2261)
    rows = fc.evaluate(fc.synth_dataset(7, 2000, plant), 0.8)
    print(fc.metrics_table(rows))

    report = run(load_config(HERE / "reference_100kw.toml"))
    report.write(out_dir / "reference_100kw")
    kw = 100.0
    print(
        f"simulation: advantage {report.advantage_eur / kw:.1f} EUR/kW-yr, "
        f"analytic {report.analytic_payback_eur / kw:.1f} EUR/kW-yr at PSH {report.realized_psh:.1f} "
        f"(ratio {report.advantage_eur / report.analytic_payback_eur:.4f})"
    )


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out"))
