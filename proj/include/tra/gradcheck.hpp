#pragma once

#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "tra/graph.hpp"
#include "tra/ops.hpp"
#include "tra/rng.hpp"
#include "tra/tensor.hpp"

namespace tra {

// Central finite-difference gradient checking. Double precision only: single
// precision cannot resolve the tolerances this is used to certify.
struct GradCheckOptions {
    double eps = 1e-5;
    int total_probes = 100;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_location;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int probes = 0;
};

// make_loss builds a scalar loss from the current parameter values; it is
// re-run for every probe, so it must be deterministic. Parameters are probed
// in place.
inline GradCheckReport finite_diff_check(
    const std::function<Tensor<double>(Graph<double>*)>& make_loss,
    const std::vector<Tensor<double>>& params, const GradCheckOptions& opt = {}) {
    const double l0 = make_loss(nullptr).item();
    const double l1 = make_loss(nullptr).item();
    require<NumericError>(std::memcmp(&l0, &l1, sizeof(double)) == 0,
                          "finite_diff_check: function is not deterministic (", l0, " vs ", l1,
                          ")");

    for (auto p : params) p.zero_grad();
    Graph<double> graph;
    Tensor<double> loss = make_loss(&graph);
    graph.backward(loss);

    // One probe per tensor first, remaining budget round-robin, so the
    // sampled coordinates span every parameter tensor.
    require<ShapeError>(!params.empty(), "finite_diff_check: no parameters to probe");
    std::vector<int> probes(params.size(), 1);
    for (int assigned = static_cast<int>(params.size()); assigned < opt.total_probes; ++assigned) {
        ++probes[static_cast<std::size_t>(assigned) % params.size()];
    }

    GradCheckReport rep;
    Rng rng(Rng::mix(opt.seed, "gradcheck"));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor<double> p = params[t];
        const std::span<const double> analytic = p.grad();
        for (int q = 0; q < probes[t]; ++q) {
            const std::int64_t i = rng.uniform_int(p.size());
            const double v0 = p.values()[i];
            p.values()[i] = v0 + opt.eps;
            const double lp = make_loss(nullptr).item();
            p.values()[i] = v0 - opt.eps;
            const double lm = make_loss(nullptr).item();
            p.values()[i] = v0;
            const double numeric = (lp - lm) / (2.0 * opt.eps);
            const double a = analytic.empty() ? 0.0 : analytic[static_cast<std::size_t>(i)];
            const double rel =
                std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            ++rep.probes;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_location = cat(p.name().empty() ? "param" : p.name(), "[", i, "]");
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

} // namespace tra
