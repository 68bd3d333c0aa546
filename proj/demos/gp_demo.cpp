// Probability that a GP posterior on [0, 1] stays above a lower bound, and
// how the hiSRD estimate and its gradient in the kernel parameters look at a
// few splits K. Grid kept small so the demo runs in seconds.
#include <cstdio>

#include "hisrd/estimator.hpp"
#include "hisrd/gp.hpp"

int main() {
    using namespace hisrd;
    const gp::GpProblem p = gp::GpProblem::standard(256, gp::observation_offsets(1), -0.12);
    const gp::GpReference ref = gp::build_reference(p);
    std::printf("reference rank %ld, nll(u0) %.4f\n", static_cast<long>(ref.field->full_rank()), gp::nll(p.u0, p));
    std::printf("%3s %10s %10s %12s %12s %12s\n", "K", "phi", "se", "d/dlog_l", "d/dlog_s", "d/dlog_sn");
    for (Index K : {1, 5, 10, 20}) {
        const auto r = gradient_hisrd(gp::GpConstraintModel(p, ref, p.u0, K, true), 5000, {SampleKind::mc, 3, 0});
        const Vector& g = *r.gradient;
        std::printf("%3ld %10.6f %10.6f %12.4e %12.4e %12.4e\n", static_cast<long>(K), r.value, r.std_error, g(0), g(1), g(2));
    }
}
