#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tra/data.hpp"
#include "tra/metrics.hpp"
#include "tra/network.hpp"
#include "tra/rng.hpp"

namespace tra {

struct TrainConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.001;
    std::int64_t batch_size = 64;
    std::int64_t batches_per_epoch = 100;
    std::int64_t patience = 10;
    std::int64_t epoch_cap = 25;
    std::int64_t warmup_epochs = 0;
    int binarize_threshold = 2;
    double flip_prob = 0.5;
    std::uint64_t seed = 42;
    std::vector<std::string> freeze;

    void validate() const;
};

TrainConfig train_config_from_json_text(const std::string& text);
TrainConfig train_config_from_file(const std::string& path);
std::string train_config_to_json_text(const TrainConfig& cfg);

// ---- weighted sampler ----------------------------------------------------------

// Inverse-frequency frame sampling: each positive AU label contributes
// 1/positive_count to its frame's score; frames with no positive AU get the
// smallest positive score so they stay sampleable.
struct SamplerState {
    std::array<std::int64_t, 8> positive_count{};
    std::array<double, 8> au_weight{};
    std::vector<double> prob; // p_f, sums to 1
    std::vector<double> cdf;
    std::uint64_t seed = 0;
};

inline SamplerState build_sampler(const std::vector<AuLabels>& labels, std::uint64_t seed = 0) {
    require<DataError>(!labels.empty(), "build_sampler: empty training set");
    SamplerState st;
    st.seed = seed;
    for (const auto& lab : labels) {
        for (std::size_t a = 0; a < 8; ++a) st.positive_count[a] += lab[a];
    }
    for (std::size_t a = 0; a < 8; ++a) {
        st.au_weight[a] = 1.0 / static_cast<double>(std::max<std::int64_t>(1, st.positive_count[a]));
    }
    std::vector<double> raw(labels.size(), 0.0);
    double min_positive = 0.0;
    for (std::size_t f = 0; f < labels.size(); ++f) {
        for (std::size_t a = 0; a < 8; ++a) {
            if (labels[f][a]) raw[f] += st.au_weight[a];
        }
        if (raw[f] > 0.0 && (min_positive == 0.0 || raw[f] < min_positive)) min_positive = raw[f];
    }
    if (min_positive == 0.0) min_positive = 1.0; // no positives anywhere: uniform
    double total = 0.0;
    for (auto& v : raw) {
        if (v == 0.0) v = min_positive;
        total += v;
    }
    st.prob.resize(raw.size());
    st.cdf.resize(raw.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < raw.size(); ++f) {
        st.prob[f] = raw[f] / total;
        acc += st.prob[f];
        st.cdf[f] = acc;
    }
    st.cdf.back() = 1.0;
    return st;
}

inline std::int64_t sampler_draw(const SamplerState& st, Rng& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(st.cdf.begin(), st.cdf.end(), u);
    return std::min<std::int64_t>(static_cast<std::int64_t>(it - st.cdf.begin()),
                                  static_cast<std::int64_t>(st.cdf.size()) - 1);
}

// Closed-form expected per-AU positive rate of sampled frames.
inline std::array<double, 8> sampler_expected_rates(const SamplerState& st,
                                                    const std::vector<AuLabels>& labels) {
    std::array<double, 8> rates{};
    for (std::size_t f = 0; f < labels.size(); ++f) {
        for (std::size_t a = 0; a < 8; ++a) {
            if (labels[f][a]) rates[a] += st.prob[f];
        }
    }
    return rates;
}

// ---- batches --------------------------------------------------------------------

template <class T>
struct Batch {
    Tensor<T> images; // [B,3,S,S]
    std::vector<AuLabels> labels;
    std::vector<std::int64_t> center_rows; // at decoder resolution
    std::vector<std::int64_t> indices;
};

inline void mirror_image_columns(std::vector<float>& px, std::int64_t channels, std::int64_t s) {
    for (std::int64_t c = 0; c < channels; ++c) {
        float* plane = px.data() + c * s * s;
        for (std::int64_t y = 0; y < s; ++y) {
            std::reverse(plane + y * s, plane + (y + 1) * s);
        }
    }
}

// Draws with replacement by sampler probability; each drawn frame is mirrored
// left-right with flip_prob (labels unchanged — all eight AUs are bilateral;
// rows, and therefore the center row, do not move).
template <class T>
Batch<T> next_batch(const Dataset& ds, const SamplerState& sampler, Rng& sample_rng,
                    Rng& flip_rng, std::int64_t batch_size, double flip_prob,
                    int binarize_threshold, std::int64_t decoder_h) {
    require<ConfigError>(batch_size >= 1, "batch_size must be >= 1");
    const std::int64_t s = ds.image_size;
    Batch<T> batch;
    batch.images = Tensor<T>::zeros({batch_size, 3, s, s});
    batch.labels.reserve(static_cast<std::size_t>(batch_size));
    for (std::int64_t i = 0; i < batch_size; ++i) {
        const std::int64_t idx = sampler_draw(sampler, sample_rng);
        const LabeledSample& smp = ds.samples[static_cast<std::size_t>(idx)];
        std::vector<float> px = smp.image;
        if (flip_prob > 0.0 && flip_rng.bernoulli(flip_prob)) {
            mirror_image_columns(px, 3, s);
        }
        T* dst = batch.images.data() + i * 3 * s * s;
        for (std::size_t j = 0; j < px.size(); ++j) dst[j] = static_cast<T>(px[j]);
        batch.labels.push_back(binarize(smp.intensities, binarize_threshold));
        batch.center_rows.push_back(feature_center_row(smp.landmarks, decoder_h, s));
        batch.indices.push_back(idx);
    }
    return batch;
}

// ---- loss --------------------------------------------------------------------------

template <class T>
Tensor<T> branch_labels(const std::vector<AuLabels>& labels, const std::vector<int>& label_idx) {
    const std::int64_t n = static_cast<std::int64_t>(labels.size());
    const std::int64_t d = static_cast<std::int64_t>(label_idx.size());
    Tensor<T> out = Tensor<T>::zeros({n, d});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            out.at(i, j) = static_cast<T>(
                labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(label_idx[static_cast<std::size_t>(j)])]);
        }
    }
    return out;
}

// Per-branch mean BCE over batch and group, branches summed unweighted.
template <class T>
Tensor<T> multilabel_bce(Graph<T>* g, const ForwardTrace<T>& trace,
                         const std::vector<AuLabels>& labels, const AUGrouping& groups) {
    Tensor<T> total;
    for (FaceRegion r : {FaceRegion::Upper, FaceRegion::Middle, FaceRegion::Lower}) {
        Tensor<T> lab = branch_labels<T>(labels, groups.label_indices(r));
        Tensor<T> part = ops::bce_with_logits_mean(g, trace.logits(r), lab);
        total = total.defined() ? ops::elementwise_add(g, total, part) : part;
    }
    return total;
}

// ---- optimizer ----------------------------------------------------------------------

// SGD with momentum and decoupled-from-nothing weight decay folded into the
// velocity: v <- momentum*v + grad + wd*param; param <- param - lr*v.
template <class T>
class Sgd {
public:
    explicit Sgd(std::vector<Tensor<T>> params) : params_(std::move(params)) {
        velocity_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            velocity_[i].assign(static_cast<std::size_t>(params_[i].size()), T(0));
        }
    }

    void step(double lr, double momentum, double weight_decay) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = params_[i];
            if (!p.requires_grad() || !p.has_grad()) continue;
            const T* g = p.grad().data();
            T* v = velocity_[i].data();
            T* w = p.data();
            const T mom = static_cast<T>(momentum), wd = static_cast<T>(weight_decay),
                    step_size = static_cast<T>(lr);
            for (std::int64_t j = 0; j < p.size(); ++j) {
                v[j] = mom * v[j] + g[j] + wd * w[j];
                w[j] -= step_size * v[j];
            }
        }
    }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> velocity_;
};

// Single-tensor convenience used by the optimizer unit tests.
template <class T>
void sgd_step(Tensor<T>& param, std::vector<T>& velocity, double lr, double momentum,
              double weight_decay) {
    const T* g = param.grad().data();
    for (std::int64_t j = 0; j < param.size(); ++j) {
        velocity[static_cast<std::size_t>(j)] =
            static_cast<T>(momentum) * velocity[static_cast<std::size_t>(j)] + g[j] +
            static_cast<T>(weight_decay) * param.data()[j];
        param.data()[j] -= static_cast<T>(lr) * velocity[static_cast<std::size_t>(j)];
    }
}

// ---- evaluation -----------------------------------------------------------------------

template <class T>
EvalReport evaluate(const Model<T>& model, const Dataset& ds,
                    const std::vector<std::int64_t>& indices, int binarize_threshold,
                    std::int64_t batch_size = 64) {
    require<DataError>(!indices.empty(), "evaluate: empty test set");
    const std::int64_t s = ds.image_size;
    const std::int64_t dec_h = model.config().decoder_resolution();
    std::vector<AuLabels> preds, labels;
    preds.reserve(indices.size());
    labels.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::int64_t n =
            std::min<std::int64_t>(batch_size, static_cast<std::int64_t>(indices.size() - start));
        Tensor<T> images = Tensor<T>::zeros({n, 3, s, s});
        std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const LabeledSample& smp = ds.samples[static_cast<std::size_t>(indices[start + static_cast<std::size_t>(i)])];
            T* dst = images.data() + i * 3 * s * s;
            for (std::size_t j = 0; j < smp.image.size(); ++j) dst[j] = static_cast<T>(smp.image[j]);
            rows[static_cast<std::size_t>(i)] = feature_center_row(smp.landmarks, dec_h, s);
            labels.push_back(binarize(smp.intensities, binarize_threshold));
        }
        const ForwardTrace<T> trace = model.forward(nullptr, images, rows);
        for (std::int64_t i = 0; i < n; ++i) {
            AuLabels p{};
            for (FaceRegion r : {FaceRegion::Upper, FaceRegion::Middle, FaceRegion::Lower}) {
                const auto idx = model.config().groups.label_indices(r);
                const Tensor<T>& logits = trace.logits(r);
                for (std::size_t j = 0; j < idx.size(); ++j) {
                    // sigma(z) > 0.5 is exactly z > 0
                    p[static_cast<std::size_t>(idx[j])] =
                        logits.at(i, static_cast<std::int64_t>(j)) > T(0) ? 1 : 0;
                }
            }
            preds.push_back(p);
        }
    }
    return f1_and_accuracy(preds, labels);
}

// ---- fold training ----------------------------------------------------------------------

struct FoldStats {
    int fold = 0;
    int epochs_run = 0;
    int best_epoch = -1;
    bool stopped_early = false;
    double seconds = 0.0;
    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_eval_f1;
};

template <class T>
struct FoldOutcome {
    EvalReport report;
    FoldStats stats;
};

template <class T>
void check_subject_disjoint(const Dataset& ds, const std::vector<std::int64_t>& train_idx,
                            const std::vector<std::int64_t>& test_idx) {
    std::set<std::string> train_subjects, test_subjects;
    for (auto i : train_idx) train_subjects.insert(ds.samples[static_cast<std::size_t>(i)].subject);
    for (auto i : test_idx) test_subjects.insert(ds.samples[static_cast<std::size_t>(i)].subject);
    for (const auto& s : test_subjects) {
        require<DataError>(!train_subjects.count(s), "protocol violation: subject '", s,
                           "' appears in both train and test splits");
    }
}

// Trains one identity split: weighted batches, summed multilabel BCE, SGD,
// per-epoch evaluation once past warmup, early stopping after `patience`
// non-improving epochs. Returns the best-epoch report and leaves the model at
// its best-epoch weights.
template <class T>
FoldOutcome<T> run_fold(Model<T>& model, const Dataset& ds,
                        const std::vector<std::int64_t>& train_idx,
                        const std::vector<std::int64_t>& test_idx, const TrainConfig& cfg,
                        int fold_id) {
    cfg.validate();
    require<DataError>(!train_idx.empty(), "run_fold: empty training split");
    require<ShapeError>(ds.image_size == model.config().input_size, "dataset images are ",
                        ds.image_size, "px but the model expects ", model.config().input_size);
    check_subject_disjoint<T>(ds, train_idx, test_idx);

    const auto t0 = std::chrono::steady_clock::now();
    FoldOutcome<T> out;
    out.stats.fold = fold_id;

    if (!cfg.freeze.empty()) {
        model.freeze(std::set<std::string>(cfg.freeze.begin(), cfg.freeze.end()));
    }

    std::vector<AuLabels> train_labels;
    train_labels.reserve(train_idx.size());
    for (auto i : train_idx) {
        train_labels.push_back(
            binarize(ds.samples[static_cast<std::size_t>(i)].intensities, cfg.binarize_threshold));
    }
    const SamplerState sampler =
        build_sampler(train_labels, Rng::mix(cfg.seed, "sampler", static_cast<std::uint64_t>(fold_id)));
    Rng sample_rng = Rng::stream(cfg.seed, "sampler", static_cast<std::uint64_t>(fold_id));
    Rng flip_rng = Rng::stream(cfg.seed, "flip", static_cast<std::uint64_t>(fold_id));

    // The sampler draws positions in the train subset; map back to dataset
    // indices through a view.
    Dataset train_view;
    train_view.image_size = ds.image_size;
    for (auto i : train_idx) train_view.samples.push_back(ds.samples[static_cast<std::size_t>(i)]);

    Sgd<T> opt(model.parameters());
    const std::int64_t dec_h = model.config().decoder_resolution();

    double best_f1 = -1.0;
    std::int64_t since_best = 0;
    std::vector<std::pair<std::string, std::vector<T>>> best_weights;

    const auto snapshot = [&]() {
        best_weights.clear();
        for (const auto& [name, t] : model.named_parameters()) {
            best_weights.emplace_back(name, std::vector<T>(t.values().begin(), t.values().end()));
        }
    };

    for (std::int64_t epoch = 1; epoch <= cfg.epoch_cap; ++epoch) {
        double loss_sum = 0.0;
        for (std::int64_t b = 0; b < cfg.batches_per_epoch; ++b) {
            Batch<T> batch = next_batch<T>(train_view, sampler, sample_rng, flip_rng,
                                           cfg.batch_size, cfg.flip_prob, cfg.binarize_threshold,
                                           dec_h);
            model.zero_grad();
            Graph<T> graph;
            const ForwardTrace<T> trace = model.forward(&graph, batch.images, batch.center_rows);
            Tensor<T> loss = multilabel_bce(&graph, trace, batch.labels, model.config().groups);
            const double lv = static_cast<double>(loss.item());
            require<NumericError>(std::isfinite(lv), "loss diverged (", lv, ") at epoch ", epoch,
                                  ", batch ", b);
            loss_sum += lv;
            if (loss.requires_grad()) { // a fully frozen model records no tape
                graph.backward(loss);
                opt.step(cfg.lr, cfg.momentum, cfg.weight_decay);
            }
        }
        out.stats.epoch_train_loss.push_back(loss_sum / static_cast<double>(cfg.batches_per_epoch));
        out.stats.epochs_run = static_cast<int>(epoch);

        if (epoch > cfg.warmup_epochs) {
            const EvalReport rep = evaluate(model, ds, test_idx, cfg.binarize_threshold);
            out.stats.epoch_eval_f1.push_back(rep.mean_f1);
            if (rep.mean_f1 > best_f1) {
                best_f1 = rep.mean_f1;
                out.report = rep;
                out.stats.best_epoch = static_cast<int>(epoch);
                since_best = 0;
                snapshot();
            } else {
                ++since_best;
                if (since_best >= cfg.patience) {
                    out.stats.stopped_early = true;
                    break;
                }
            }
        }
    }

    if (out.stats.best_epoch < 0) {
        // Never evaluated (epoch cap 0 or warmup past cap): report the model
        // as it stands.
        out.report = evaluate(model, ds, test_idx, cfg.binarize_threshold);
    } else {
        const auto& named = model.named_parameters();
        for (std::size_t i = 0; i < best_weights.size(); ++i) {
            Tensor<T> handle = named[i].second; // shares storage
            std::copy(best_weights[i].second.begin(), best_weights[i].second.end(),
                      handle.values().begin());
        }
    }
    out.report.fold = fold_id;
    out.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- cross validation ----------------------------------------------------------------------

struct CrossValOutcome {
    std::vector<EvalReport> fold_reports;
    std::vector<FoldStats> fold_stats;
    EvalReport mean;
};

inline std::vector<std::string> distinct_subjects(const Dataset& ds) {
    std::vector<std::string> subjects;
    std::set<std::string> seen;
    for (const auto& s : ds.samples) {
        if (seen.insert(s.subject).second) subjects.push_back(s.subject);
    }
    return subjects;
}

// Seeded shuffle then near-equal contiguous groups (sizes differ by at most
// one).
inline std::vector<std::vector<std::string>> split_subject_folds(std::vector<std::string> subjects,
                                                                 std::int64_t folds,
                                                                 std::uint64_t seed) {
    require<ConfigError>(folds >= 2, "cross-validation needs >= 2 folds");
    require<ConfigError>(static_cast<std::int64_t>(subjects.size()) >= folds,
                         "cross-validation needs at least ", folds, " distinct subjects, got ",
                         subjects.size());
    Rng rng = Rng::stream(seed, "folds");
    rng.shuffle(subjects.begin(), subjects.end());
    std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(folds));
    const std::int64_t n = static_cast<std::int64_t>(subjects.size());
    std::int64_t pos = 0;
    for (std::int64_t f = 0; f < folds; ++f) {
        const std::int64_t size = n / folds + (f < n % folds ? 1 : 0);
        for (std::int64_t i = 0; i < size; ++i) groups[static_cast<std::size_t>(f)].push_back(subjects[static_cast<std::size_t>(pos++)]);
    }
    return groups;
}

template <class T>
CrossValOutcome cross_validate(const Dataset& ds, std::int64_t folds, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, std::int64_t jobs = 1) {
    const auto groups = split_subject_folds(distinct_subjects(ds), folds, train_cfg.seed);

    CrossValOutcome out;
    out.fold_reports.resize(static_cast<std::size_t>(folds));
    out.fold_stats.resize(static_cast<std::size_t>(folds));

    const auto run_one = [&](std::int64_t f) {
        const std::set<std::string> test_subjects(groups[static_cast<std::size_t>(f)].begin(),
                                                  groups[static_cast<std::size_t>(f)].end());
        std::vector<std::int64_t> train_idx, test_idx;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            (test_subjects.count(ds.samples[i].subject) ? test_idx : train_idx)
                .push_back(static_cast<std::int64_t>(i));
        }
        Model<T> model = Model<T>::build(
            model_cfg, Rng::mix(train_cfg.seed, "init", static_cast<std::uint64_t>(f)));
        FoldOutcome<T> fo = run_fold(model, ds, train_idx, test_idx, train_cfg, static_cast<int>(f));
        out.fold_reports[static_cast<std::size_t>(f)] = fo.report;
        out.fold_stats[static_cast<std::size_t>(f)] = fo.stats;
    };

    if (jobs <= 1) {
        for (std::int64_t f = 0; f < folds; ++f) run_one(f);
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(folds));
        std::vector<std::thread> pool;
        std::int64_t next = 0;
        while (next < folds) {
            const std::int64_t launch = std::min<std::int64_t>(jobs, folds - next);
            for (std::int64_t i = 0; i < launch; ++i) {
                const std::int64_t f = next + i;
                pool.emplace_back([&, f]() {
                    try {
                        run_one(f);
                    } catch (...) {
                        errors[static_cast<std::size_t>(f)] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            pool.clear();
            next += launch;
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    out.mean = mean_report(out.fold_reports);
    return out;
}

} // namespace tra
