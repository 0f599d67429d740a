#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tra/data.hpp"
#include "tra/metrics.hpp"
#include "tra/network.hpp"
#include "tra/tensor.hpp"

// Verification suites behind `check --suite ...` and the acceptance harness.
// The oracles here are deliberately independent of the kernel layer: direct
// nested loops, no im2col, no SIMD.
namespace tra::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    double worst = 0.0; // worst observed error, 0 when not applicable
    std::string detail;
};

struct SuiteResult {
    std::string suite;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    int failures() const {
        int n = 0;
        for (const auto& c : checks) n += c.pass ? 0 : 1;
        return n;
    }
};

namespace oracle {

Tensor<double> conv2d_direct(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b, std::int64_t stride, std::int64_t pad);
Tensor<double> fully_connected_direct(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>& b);
Tensor<double> max_pool2d_direct(const Tensor<double>& x, std::int64_t k, std::int64_t stride);
Tensor<double> avg_pool2d_direct(const Tensor<double>& x, std::int64_t k, std::int64_t stride);
Tensor<double> global_avg_pool_direct(const Tensor<double>& x);
Tensor<double> global_max_pool_direct(const Tensor<double>& x);
double bce_mean_direct(const Tensor<double>& logits, const Tensor<double>& labels);
EvalReport f1_and_accuracy_direct(const std::vector<AuLabels>& preds,
                                  const std::vector<AuLabels>& labels);

// Step-by-step scalar unrolling of squeeze (Eq.1-style pooling), two-layer
// excitation and the residual combine, used against the SE block.
Tensor<double> se_forward_direct(const Tensor<double>& u, const Tensor<double>& w1,
                                 const Tensor<double>& w2, bool residual);

} // namespace oracle

// Prepares a freshly built model for gradient checking: weights keep their
// He/Xavier initialization (activations stay well-scaled), biases are
// jittered away from zero. Zero biases park relu pre-activations of masked
// rows exactly on the kink, where central differences are meaningless.
void jitter_model_biases(Model<double>& model, std::uint64_t seed, double lo = 0.02,
                         double hi = 0.2);

SuiteResult grad_suite(int probes_per_block = 64, int e2e_probes = 100, std::uint64_t seed = 1);
SuiteResult invariants_suite(std::uint64_t seed = 1);
SuiteResult oracles_suite(int instances = 100, std::uint64_t seed = 1);

// Per-AU logistic regression on block-mean pixels restricted to the AU's
// region band, trained on a subject-disjoint split. Confirms the synthetic
// dataset is linearly separable before the network is blamed for anything.
struct ProbeResult {
    std::array<double, 8> f1{}; // percent, on held-out subjects
    double min_f1 = 0.0;
};
ProbeResult linear_probe(const Dataset& ds, int binarize_threshold = 2,
                         double holdout_fraction = 1.0 / 3.0, std::uint64_t seed = 5);

std::string format_suite(const SuiteResult& result);

} // namespace tra::verify
