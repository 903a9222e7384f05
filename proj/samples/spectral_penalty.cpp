// Symmetry penalty on a small vector field, followed by a few Adam steps
// that drive ||J - J^T|| down on a fixed batch.

#include <cstdio>

#include "spectralreg/optim.hpp"
#include "spectralreg/oracle.hpp"
#include "spectralreg/regularizers.hpp"

using namespace spectralreg;

int main() {
    Network net = Network::random({8, 32, 8}, 1);
    Rng rng = make_stream(2, 0);
    const Tensor x = gaussian_tensor(16, 8, rng);

    reg::RegularizerSpec spec;
    spec.kind = reg::TargetKind::Symmetry;
    spec.solver = reg::Solver::Lanczos;
    spec.iterations = 8;

    auto asymmetry = [&](const Network& n) {
        double s = 0.0;
        for (const auto& j : oracle::dense_jacobian(n, x)) s += (j - j.transpose()).norm();
        return s / static_cast<double>(x.rows());
    };

    Adam opt(1e-2);
    std::printf("step  penalty     ||J - J^T||_F\n");
    for (std::uint64_t step = 0; step <= 100; ++step) {
        const auto g = param_grad(net, [&](const BoundNetwork& b) {
            return reg::spectral_penalty(b, x, spec, step).value;
        });
        if (step % 20 == 0) std::printf("%4llu  %.6f  %.6f\n", static_cast<unsigned long long>(step), g.loss, asymmetry(net));
        net = net.with_parameters(opt.step(net.parameters(), g.gradients));
    }
}
