// Builds a five-snapshot kinetics basis and interpolates at a handful of new
// stiffness values, comparing the interpolant with a fresh integration.

#include <algorithm>
#include <cstdio>
#include <vector>

#include "resmin/basis.hpp"
#include "resmin/interpolator.hpp"
#include "resmin/kinetics.hpp"
#include "resmin/ode.hpp"

using namespace resmin;

int main() {
    const auto model = kinetics::model();
    const auto grid = make_time_grid(0.0, 1.0, 300, GridScheme::uniform);
    const OdeTolerances tol{1e-10, 1e-12};
    auto param = [](double s) {
        Vector v(1);
        v << s;
        return v;
    };

    std::vector<Snapshot> snaps;
    for (double s : {0.005, 0.05, 0.2, 0.6, 1.2})
        snaps.push_back(build_snapshot(model, param(s), kinetics::initial_state(), grid, tol));
    const BasisSet basis = assemble_basis(std::move(snaps));

    std::printf("%8s %12s %6s %10s %12s\n", "s", "rho*", "iters", "f_evals", "max rel err");
    for (double s : {0.01, 0.1, 0.35, 0.9}) {
        const auto r = newton_solve(basis, param(s), model);
        const Matrix approx = evaluate_history(basis, r.a);
        const Trajectory truth = integrate(model, kinetics::initial_state(), param(s), grid, tol);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < approx.rows(); ++i)
            worst = std::max(worst, (approx.row(i) - truth.states.row(i)).norm() / truth.states.row(i).norm());
        std::printf("%8.3f %12.4e %6zu %10llu %12.3e\n", s, r.rho_star, r.iters,
                    static_cast<unsigned long long>(r.f_evals), worst);
    }
}
