#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace remix {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int batches = 20;
    int input_dim = 16;
    int hidden_dim = 16;
    int embedding_dim = 8;
    int batch_size = 12;  // split evenly between the two sources, 2 per label
    double step = 1e-5;
    double tolerance = 1e-4;
    // Test hook: perturbs the analytic gradient so the check must fail.
    bool corrupt_gradient = false;
};

struct GradcheckLine {
    std::string loss;
    double max_relative_error = 0.0;
    bool pass = false;
};

// Compares analytic encoder-parameter gradients of each of the four losses
// (composed with a two-layer encoder) against central differences.
std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options);

}  // namespace remix
