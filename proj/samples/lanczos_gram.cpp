// Largest singular value of a network Jacobian, matrix-free, checked
// against the dense oracle.

#include <cmath>
#include <cstdio>

#include "spectralreg/eigensolvers.hpp"
#include "spectralreg/linops.hpp"
#include "spectralreg/oracle.hpp"

using namespace spectralreg;

int main() {
    const Network net = Network::random({24, 64, 64, 24}, 7);
    Rng rng = make_stream(8, 0);
    const Tensor x = gaussian_tensor(4, 24, rng);

    // J J^T as a batched operator: one jvp and one vjp per apply.
    const auto gram = linops::gram(linops::jacobian_operator(net, x));
    const auto dense = oracle::dense_jacobian(net, x);
    for (std::size_t n : {2, 4, 8, 16}) {
        const auto lan = eig::extremal_eigenpair(gram, n, 3);
        const auto pow = eig::power_iteration(gram, n, 3);
        std::printf("n = %2zu\n", n);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double exact = oracle::spectral_norm(dense[r]);
            std::printf("  row %zu  sigma %.10f  lanczos %.3e  power %.3e\n", r, exact,
                        std::abs(std::sqrt(lan.lambda_max[r]) - exact) / exact,
                        std::abs(std::sqrt(pow.lambda_max[r]) - exact) / exact);
        }
    }
}
