// Joint state-bound probability for the Poisson control problem and the size
// of its gradient near the uncertain edge.
#include <cstdio>

#include "hisrd/pde.hpp"

int main(int argc, char** argv) {
    using namespace hisrd;
    const Index n = argc > 1 ? std::atol(argv[1]) : 32;
    const pde::PdeSetup setup(pde::PdeProblem::nominal(n));
    const EstimateReport r = pde::probability_and_gradient(setup, 10, 5000, {SampleKind::mc, 7, 0});
    std::printf("n=%ld  p=%.5f +- %.5f\n", static_cast<long>(n), r.value, r.std_error);
    const Matrix g = pde::as_grid(*r.gradient, n);
    const Index q = n / 4;
    std::printf("|grad| left quarter %.3e, right quarter %.3e\n", g.topRows(q).norm(), g.bottomRows(q).norm());
}
