#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tra/common.hpp"

namespace tra {

using AuLabels = std::array<std::uint8_t, 8>; // 0/1 per AU, manifest order

// intensity >= threshold counts as positive ("equal or higher").
AuLabels binarize(const std::array<int, 8>& intensities, int threshold = 2);

struct EvalReport {
    int fold = -1;
    std::array<double, 8> f1{};       // percent
    std::array<double, 8> accuracy{}; // percent
    double mean_f1 = 0.0;
    double mean_accuracy = 0.0;
};

// Frame-level F1 and accuracy per AU, in percent. F1 is defined as 0 when
// precision or recall is undefined or both are 0.
EvalReport f1_and_accuracy(const std::vector<AuLabels>& predictions,
                           const std::vector<AuLabels>& labels);

EvalReport mean_report(const std::vector<EvalReport>& folds);

// Human-readable table: one row per AU with per-fold and average F1 and
// accuracy, plus an Avg row.
std::string format_report_table(const std::vector<EvalReport>& folds);

// CSV rows "fold,au,f1,accuracy" with a header.
std::string reports_to_csv(const std::vector<EvalReport>& folds);

} // namespace tra
