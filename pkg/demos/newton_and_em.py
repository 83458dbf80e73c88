"""Local behavior at a certified solution: Newton converges quadratically, EM linearly."""

import warnings

import numpy as np

from npmle import em_jacobian_spectrum, em_solve, make_mixture, newton_solve, param_distance, sample_iid, solve_npmle


def main() -> None:
    warnings.simplefilter("ignore", RuntimeWarning)
    # overlapping components make EM slow while Newton stays quadratic
    X = sample_iid("uniform[-2,2]", 100, 1002)
    rep = solve_npmle(X)
    sol = rep.final
    print("certified atoms:", np.round(sol.locations, 6), "weights:", np.round(sol.weights, 6))
    ss = rep.shub_smale
    print(f"Kantorovich check: alpha={ss.alpha:.2e} beta={ss.beta:.3g} C={ss.lipC:.3g} h={ss.h:.2e} proved={ss.proved}")

    start = make_mixture(sol.weights, sol.locations + np.array([0.02, -0.03]))
    tr = newton_solve(start, X, tol=1e-15)
    print("\nNewton distance to the solution per step:")
    for t, m in enumerate(tr.iterates):
        print(f"  t={t}  {param_distance(m, sol):.3e}")

    em = em_solve(start, X, tol=1e-12, max_iter=5000, reference=sol)
    print(f"\nEM: {len(em.iterates) - 1} iterations, observed rate {em.rate_estimate:.4f}")
    print("EM Jacobian spectral radius at the solution:", f"{em_jacobian_spectrum(sol, X).spectral_radius:.4f}")


if __name__ == "__main__":
    main()
