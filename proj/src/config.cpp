#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tra/network.hpp"
#include "tra/training.hpp"

namespace tra {

void ModelConfig::validate() const {
    require<ConfigError>(stages.size() == 4, "model config: expected 4 encoder stages, got ",
                         stages.size());
    require<ConfigError>(stem_kernel >= 1 && stem_kernel % 2 == 1,
                         "model config: stem kernel must be odd, got ", stem_kernel);
    require<ConfigError>(encoder_stride() == 32, "model config: encoder stride product must be "
                                                 "32 (stem*pool*stages), got ",
                         encoder_stride());
    require<ConfigError>(input_size % 32 == 0 && input_size >= 32,
                         "model config: input_size must be a positive multiple of 32 so the "
                         "decoder output (input/8) supports quarter-height masks, got ",
                         input_size);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        require<ConfigError>(stages[i].units >= 1 && stages[i].channels >= 1 &&
                                 stages[i].stride >= 1,
                             "model config: stage ", i + 2, " has non-positive units/channels/stride");
        require<ConfigError>(stages[i].channels % reduction_ratio == 0, "model config: stage ",
                             i + 2, " channels ", stages[i].channels,
                             " not divisible by reduction ratio ", reduction_ratio);
    }
    const auto dec = effective_decoder_channels();
    require<ConfigError>(dec.size() == 2, "model config: decoder_channels must list 2 widths, got ",
                         dec.size());
    for (auto c : dec) {
        require<ConfigError>(c >= 1 && c % reduction_ratio == 0, "model config: decoder width ", c,
                             " not divisible by reduction ratio ", reduction_ratio);
    }
    require<ConfigError>(dec[0] == stages[2].channels && dec[1] == stages[1].channels,
                         "model config: decoder widths must mirror stages 4 and 3 (",
                         stages[2].channels, ",", stages[1].channels,
                         ") so additive skip connections type-check");
    require<ConfigError>(branch_channels.size() == 3,
                         "model config: branch_channels must list 3 widths");
    std::int64_t ch = dec.back();
    for (auto c : branch_channels) {
        require<ConfigError>(c >= 1, "model config: branch width must be positive");
        if (enable_cbam) {
            require<ConfigError>(ch % reduction_ratio == 0, "model config: CBAM input width ", ch,
                                 " not divisible by reduction ratio ", reduction_ratio);
        }
        ch = c;
    }
    require<ConfigError>(fc_hidden >= 1, "model config: fc_hidden must be positive");
    require<ConfigError>(bottleneck_ratio >= 1, "model config: bottleneck_ratio must be >= 1");
    require<ConfigError>(cbam_spatial_kernel >= 1 && cbam_spatial_kernel % 2 == 1,
                         "model config: CBAM spatial kernel must be odd");
    spatial_combine_from_string(cbam_spatial_combine);
    groups.validate();
}

ModelConfig toy_model_config() { return ModelConfig{}; }

ModelConfig paper224_model_config() {
    ModelConfig cfg;
    cfg.input_size = 224;
    cfg.stem_channels = 64;
    cfg.stages = {{3, 256, 1}, {4, 512, 2}, {6, 1024, 2}, {3, 2048, 2}};
    cfg.reduction_ratio = 16;
    cfg.branch_channels = {512, 512, 512};
    cfg.fc_hidden = 256;
    return cfg;
}

namespace {

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.input_size = j.value("input_size", cfg.input_size);
        cfg.stem_channels = j.value("stem_channels", cfg.stem_channels);
        cfg.stem_kernel = j.value("stem_kernel", cfg.stem_kernel);
        cfg.stem_stride = j.value("stem_stride", cfg.stem_stride);
        cfg.stem_pool = j.value("stem_pool", cfg.stem_pool);
        if (j.contains("stages")) {
            cfg.stages.clear();
            for (const auto& s : j.at("stages")) {
                StageSpec spec;
                spec.units = s.value("units", std::int64_t{1});
                spec.channels = s.at("channels").get<std::int64_t>();
                spec.stride = s.value("stride", std::int64_t{1});
                cfg.stages.push_back(spec);
            }
        }
        cfg.reduction_ratio = j.value("reduction_ratio", cfg.reduction_ratio);
        cfg.bottleneck_ratio = j.value("bottleneck_ratio", cfg.bottleneck_ratio);
        if (j.contains("decoder_channels")) {
            cfg.decoder_channels = j.at("decoder_channels").get<std::vector<std::int64_t>>();
        }
        cfg.se_residual = j.value("se_residual", cfg.se_residual);
        cfg.residual_zero_init = j.value("residual_zero_init", cfg.residual_zero_init);
        cfg.spatial_gate_bias = j.value("spatial_gate_bias", cfg.spatial_gate_bias);
        if (j.contains("cbam")) {
            const auto& c = j.at("cbam");
            cfg.cbam_residual = c.value("residual", cfg.cbam_residual);
            cfg.cbam_spatial_combine = c.value("spatial_combine", cfg.cbam_spatial_combine);
            cfg.cbam_spatial_kernel = c.value("spatial_kernel", cfg.cbam_spatial_kernel);
        }
        cfg.enable_channel_att = j.value("enable_channel_att", cfg.enable_channel_att);
        cfg.enable_spatial_att = j.value("enable_spatial_att", cfg.enable_spatial_att);
        cfg.enable_hard_mask = j.value("enable_hard_mask", cfg.enable_hard_mask);
        cfg.enable_cbam = j.value("enable_cbam", cfg.enable_cbam);
        cfg.tail_residual = j.value("tail_residual", cfg.tail_residual);
        if (j.contains("branch_channels")) {
            cfg.branch_channels = j.at("branch_channels").get<std::vector<std::int64_t>>();
        }
        cfg.fc_hidden = j.value("fc_hidden", cfg.fc_hidden);
        if (j.contains("groups")) {
            const auto& g = j.at("groups");
            cfg.groups.upper = g.value("upper", cfg.groups.upper);
            cfg.groups.middle = g.value("middle", cfg.groups.middle);
            cfg.groups.lower = g.value("lower", cfg.groups.lower);
        }
        cfg.tie_branch_init = j.value("tie_branch_init", cfg.tie_branch_init);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad model config JSON: ", e.what()));
    }
    cfg.validate();
    return cfg;
}

} // namespace

ModelConfig model_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad model config JSON: ", e.what()));
    }
    if (j.is_string()) return model_config_from_file(j.get<std::string>());
    return model_config_from_json(j);
}

ModelConfig model_config_from_file(const std::string& path_or_preset) {
    if (path_or_preset == "toy") return toy_model_config();
    if (path_or_preset == "paper224") return paper224_model_config();
    std::ifstream in(path_or_preset);
    require<ConfigError>(in.good(), "cannot open model config '", path_or_preset,
                         "' (not a file, and not a preset name: toy, paper224)");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_config_from_json_text(ss.str());
}

std::string model_config_to_json_text(const ModelConfig& cfg) {
    nlohmann::json j;
    j["input_size"] = cfg.input_size;
    j["stem_channels"] = cfg.stem_channels;
    j["stem_kernel"] = cfg.stem_kernel;
    j["stem_stride"] = cfg.stem_stride;
    j["stem_pool"] = cfg.stem_pool;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : cfg.stages) {
        j["stages"].push_back({{"units", s.units}, {"channels", s.channels}, {"stride", s.stride}});
    }
    j["reduction_ratio"] = cfg.reduction_ratio;
    j["bottleneck_ratio"] = cfg.bottleneck_ratio;
    j["decoder_channels"] = cfg.effective_decoder_channels();
    j["se_residual"] = cfg.se_residual;
    j["residual_zero_init"] = cfg.residual_zero_init;
    j["spatial_gate_bias"] = cfg.spatial_gate_bias;
    j["cbam"] = {{"residual", cfg.cbam_residual},
                 {"spatial_combine", cfg.cbam_spatial_combine},
                 {"spatial_kernel", cfg.cbam_spatial_kernel}};
    j["enable_channel_att"] = cfg.enable_channel_att;
    j["enable_spatial_att"] = cfg.enable_spatial_att;
    j["enable_hard_mask"] = cfg.enable_hard_mask;
    j["enable_cbam"] = cfg.enable_cbam;
    j["tail_residual"] = cfg.tail_residual;
    j["branch_channels"] = cfg.branch_channels;
    j["fc_hidden"] = cfg.fc_hidden;
    j["groups"] = {{"upper", cfg.groups.upper},
                   {"middle", cfg.groups.middle},
                   {"lower", cfg.groups.lower}};
    j["tie_branch_init"] = cfg.tie_branch_init;
    return j.dump(2);
}

// ---- training config ---------------------------------------------------------

void TrainConfig::validate() const {
    require<ConfigError>(lr > 0.0, "train config: lr must be positive");
    require<ConfigError>(momentum >= 0.0 && momentum < 1.0, "train config: momentum in [0,1)");
    require<ConfigError>(weight_decay >= 0.0, "train config: weight_decay must be >= 0");
    require<ConfigError>(batch_size >= 1, "train config: batch_size must be >= 1");
    require<ConfigError>(batches_per_epoch >= 1, "train config: batches_per_epoch must be >= 1");
    require<ConfigError>(patience >= 1, "train config: patience must be >= 1");
    require<ConfigError>(epoch_cap >= 0, "train config: epoch_cap must be >= 0");
    require<ConfigError>(warmup_epochs >= 0, "train config: warmup_epochs must be >= 0");
    require<ConfigError>(binarize_threshold >= 1 && binarize_threshold <= 5,
                         "train config: binarize_threshold in {1..5}");
    require<ConfigError>(flip_prob >= 0.0 && flip_prob <= 1.0, "train config: flip_prob in [0,1]");
}

TrainConfig train_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad train config JSON: ", e.what()));
    }
    TrainConfig cfg;
    try {
        cfg.lr = j.value("lr", cfg.lr);
        cfg.momentum = j.value("momentum", cfg.momentum);
        cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.batches_per_epoch = j.value("batches_per_epoch", cfg.batches_per_epoch);
        cfg.patience = j.value("patience", cfg.patience);
        cfg.epoch_cap = j.value("epoch_cap", cfg.epoch_cap);
        cfg.warmup_epochs = j.value("warmup_epochs", cfg.warmup_epochs);
        cfg.binarize_threshold = j.value("binarize_threshold", cfg.binarize_threshold);
        cfg.flip_prob = j.value("flip_prob", cfg.flip_prob);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.freeze = j.value("freeze", cfg.freeze);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad train config JSON: ", e.what()));
    }
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from_file(const std::string& path) {
    std::ifstream in(path);
    require<ConfigError>(in.good(), "cannot open train config ", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return train_config_from_json_text(ss.str());
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
    nlohmann::json j;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["batches_per_epoch"] = cfg.batches_per_epoch;
    j["patience"] = cfg.patience;
    j["epoch_cap"] = cfg.epoch_cap;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["binarize_threshold"] = cfg.binarize_threshold;
    j["flip_prob"] = cfg.flip_prob;
    j["seed"] = cfg.seed;
    j["freeze"] = cfg.freeze;
    return j.dump(2);
}

} // namespace tra
