// Probability that a 3-D Gaussian with unequal spreads stays in a box, by
// plain MC, truncated SRD and hiSRD at each split K.
#include <cstdio>

#include "hisrd/bound_model.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/specfun.hpp"

int main() {
    using namespace hisrd;
    Vector sd(3), hw(3);
    sd << 1.0, 0.5, 0.25;
    hw << 1.5, 1.0, 0.5;
    double exact = 1.0;
    for (Index i = 0; i < 3; ++i) exact *= 2.0 * specfun::normal_cdf(hw(i) / sd(i)) - 1.0;
    std::printf("exact %.6f\n", exact);
    std::printf("%2s %10s %10s %10s %10s\n", "K", "mc", "srd", "hisrd", "hisrd_se");
    for (Index K = 1; K <= 3; ++K) {
        const FieldBoundModel m = make_box_model(sd, hw, K);
        const SamplerSpec spec{SampleKind::mc, 42, 0};
        const auto mc = estimate_mc(m, 20000, spec);
        const auto srd = estimate_srd(m, 20000, spec);
        const auto hi = estimate_hisrd(m, 20000, spec);
        std::printf("%2ld %10.6f %10.6f %10.6f %10.6f\n", static_cast<long>(K), mc.value, srd.value, hi.value,
                    hi.std_error);
    }
}
