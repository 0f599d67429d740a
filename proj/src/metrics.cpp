#include "tra/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "tra/region.hpp"

namespace tra {

AuLabels binarize(const std::array<int, 8>& intensities, int threshold) {
    require<ConfigError>(threshold >= 1 && threshold <= 5, "binarize threshold ", threshold,
                         " outside {1..5}");
    AuLabels out{};
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = intensities[i] >= threshold ? 1 : 0;
    }
    return out;
}

EvalReport f1_and_accuracy(const std::vector<AuLabels>& predictions,
                           const std::vector<AuLabels>& labels) {
    require<ShapeError>(predictions.size() == labels.size(), "f1_and_accuracy: ",
                        predictions.size(), " predictions vs ", labels.size(), " labels");
    require<ShapeError>(!labels.empty(), "f1_and_accuracy: empty evaluation set");
    EvalReport rep;
    const double n = static_cast<double>(labels.size());
    for (std::size_t a = 0; a < 8; ++a) {
        std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool p = predictions[i][a] != 0;
            const bool y = labels[i][a] != 0;
            if (p && y)
                ++tp;
            else if (p && !y)
                ++fp;
            else if (!p && y)
                ++fn;
            else
                ++tn;
        }
        double f1 = 0.0;
        if (tp + fp > 0 && tp + fn > 0) {
            const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
            const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
            if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
        }
        rep.f1[a] = 100.0 * f1;
        rep.accuracy[a] = 100.0 * static_cast<double>(tp + tn) / n;
        rep.mean_f1 += rep.f1[a] / 8.0;
        rep.mean_accuracy += rep.accuracy[a] / 8.0;
    }
    return rep;
}

EvalReport mean_report(const std::vector<EvalReport>& folds) {
    require<ShapeError>(!folds.empty(), "mean_report: no folds");
    EvalReport m;
    for (const auto& r : folds) {
        for (std::size_t a = 0; a < 8; ++a) {
            m.f1[a] += r.f1[a] / static_cast<double>(folds.size());
            m.accuracy[a] += r.accuracy[a] / static_cast<double>(folds.size());
        }
        m.mean_f1 += r.mean_f1 / static_cast<double>(folds.size());
        m.mean_accuracy += r.mean_accuracy / static_cast<double>(folds.size());
    }
    return m;
}

std::string format_report_table(const std::vector<EvalReport>& folds) {
    const EvalReport mean = mean_report(folds);
    std::ostringstream os;
    char buf[64];
    os << "AU     ";
    for (const auto& r : folds) {
        std::snprintf(buf, sizeof(buf), " F1(f%d)", r.fold);
        os << buf;
    }
    os << "  F1(avg)";
    for (const auto& r : folds) {
        std::snprintf(buf, sizeof(buf), " Acc(f%d)", r.fold);
        os << buf;
    }
    os << "  Acc(avg)\n";
    for (std::size_t a = 0; a < 8; ++a) {
        std::snprintf(buf, sizeof(buf), "%-7s", au_name(kAuNumbers[a]).c_str());
        os << buf;
        for (const auto& r : folds) {
            std::snprintf(buf, sizeof(buf), "%7.1f", r.f1[a]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), "%9.1f", mean.f1[a]);
        os << buf;
        for (const auto& r : folds) {
            std::snprintf(buf, sizeof(buf), "%8.1f", r.accuracy[a]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), "%10.1f", mean.accuracy[a]);
        os << buf << "\n";
    }
    os << "Avg    ";
    for (const auto& r : folds) {
        std::snprintf(buf, sizeof(buf), "%7.1f", r.mean_f1);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%9.1f", mean.mean_f1);
    os << buf;
    for (const auto& r : folds) {
        std::snprintf(buf, sizeof(buf), "%8.1f", r.mean_accuracy);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.1f", mean.mean_accuracy);
    os << buf << "\n";
    return os.str();
}

std::string reports_to_csv(const std::vector<EvalReport>& folds) {
    std::ostringstream os;
    os << "fold,au,f1,accuracy\n";
    char buf[96];
    for (const auto& r : folds) {
        for (std::size_t a = 0; a < 8; ++a) {
            std::snprintf(buf, sizeof(buf), "%d,AU%d,%.6f,%.6f\n", r.fold, kAuNumbers[a], r.f1[a],
                          r.accuracy[a]);
            os << buf;
        }
    }
    return os.str();
}

} // namespace tra
