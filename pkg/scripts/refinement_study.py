"""Axis-length refinement study for the tolerances used in the experiments.

    python3 scripts/refinement_study.py

Prints the final localization gap, final heat-flow difference and the
rescaling deviation at the smallest λ as the truncated axis grows.
"""
from rieszlab import build_cycle, decompose
from rieszlab.experiments import exp_heat_convergence, exp_localization, exp_rescaling, pilot_glued


def main():
    print("axis_steps  loc_gap_first  loc_gap_last  heat_final_diff  heat_verdict")
    for steps in (16, 24, 32):
        G = pilot_glued(axis_steps=steps)
        decs = (decompose(G.source(0)), decompose(G.ambient))
        loc = exp_localization(G, 0, p=3.0, decompositions=decs)
        heat = exp_heat_convergence(G, 0, sigma=4.0, mc_samples=20_000, decompositions=decs)
        gaps = [r["gap"] for r in loc.records] or [float("nan")]
        fd = heat.summary["final_diff"] if hasattr(heat, "summary") else float("nan")
        print(f"{steps:10d}  {gaps[0]:13.3e}  {gaps[-1]:12.3e}  {fd:15.3e}  {heat.verdict}")
    print()
    print("axis_steps  deviation(lambda=1/16)  verdict")
    for steps in (32, 64, 128):
        rep = exp_rescaling(build_cycle(16), p=3.0, axis_steps=steps)
        print(f"{steps:10d}  {rep.records[-1]['deviation']:22.4e}  {rep.verdict}")


if __name__ == "__main__":
    main()
